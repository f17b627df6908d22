//! TCP transport. The broker listens; buyer and seller connect and
//! introduce themselves with a hello frame (an Ack whose payload is the
//! role name) before the session proper starts.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use super::message::{read_frame, write_frame, MsgType, SessionId, SessionMessage};
use super::roles::{Broker, Buyer, Role, Seller};
use super::session::{SessionLog, SessionReport, SessionTimings};
use super::ProtocolError;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

fn hello(role: Role) -> SessionMessage {
    SessionMessage::new(SessionId([0; 16]), MsgType::Ack, 0, role.name().as_bytes().to_vec())
}

fn connect(addr: SocketAddr, timeout: Duration) -> Result<TcpStream, ProtocolError> {
    let deadline = Instant::now() + timeout;
    loop {
        match TcpStream::connect_timeout(&addr, timeout) {
            Ok(s) => {
                s.set_read_timeout(Some(timeout))?;
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) if e.kind() == ErrorKind::ConnectionRefused && Instant::now() < deadline => {
                thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

fn accept(listener: &TcpListener, deadline: Instant) -> Result<TcpStream, ProtocolError> {
    listener.set_nonblocking(true)?;
    loop {
        match listener.accept() {
            Ok((s, _)) => {
                s.set_nonblocking(false)?;
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(ProtocolError::TransportTimeout);
                }
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// Accepts one buyer and one seller, then routes and scores until the
/// seller's candidate count has been forwarded or the session aborts.
pub fn serve_broker(
    listener: TcpListener,
    mut broker: Broker,
    timeout: Duration,
    log: SessionLog,
) -> Result<Broker, ProtocolError> {
    let deadline = Instant::now() + timeout;
    let mut buyer: Option<TcpStream> = None;
    let mut seller: Option<TcpStream> = None;
    // Bounded, so a fast seller blocks on TCP instead of queueing ciphertexts here.
    let (tx, rx) = mpsc::sync_channel::<(Role, Result<Option<SessionMessage>, ProtocolError>)>(8);
    while buyer.is_none() || seller.is_none() {
        let mut s = accept(&listener, deadline)?;
        s.set_read_timeout(Some(timeout))?;
        let first = read_frame(&mut s)?.ok_or_else(|| ProtocolError::Transport("peer closed before hello".into()))?;
        let role = match (first.msg_type, Role::parse(&String::from_utf8_lossy(&first.payload))) {
            (MsgType::Ack, Some(r @ (Role::Buyer | Role::Seller))) => r,
            _ => return Err(ProtocolError::ProtocolViolation("expected a hello frame".into())),
        };
        let slot = if role == Role::Buyer { &mut buyer } else { &mut seller };
        if slot.is_some() {
            return Err(ProtocolError::ProtocolViolation(format!(
                "second {} connected",
                role.name()
            )));
        }
        let mut reader = s.try_clone()?;
        reader.set_read_timeout(None)?;
        let tx = tx.clone();
        thread::spawn(move || loop {
            let r = read_frame(&mut reader);
            let stop = !matches!(r, Ok(Some(_)));
            if tx.send((role, r)).is_err() || stop {
                break;
            }
        });
        *slot = Some(s);
    }
    let (mut buyer, mut seller) = (buyer.unwrap(), seller.unwrap());
    let result = (|| {
        loop {
            let (from, frame) = match rx.recv_timeout(timeout) {
                Ok(x) => x,
                Err(_) => return Err(ProtocolError::TransportTimeout),
            };
            let msg = match frame {
                Ok(Some(m)) => m,
                Ok(None) => {
                    return Err(ProtocolError::Transport(format!("{} disconnected", from.name())));
                }
                Err(e) => {
                    // A frame that cannot be parsed still gets an Error reply.
                    let err = SessionMessage::error(SessionId([0; 16]), 0, &e.to_string());
                    let _ = write_frame(&mut buyer, &err);
                    let _ = write_frame(&mut seller, &err);
                    return Err(e);
                }
            };
            log.record(from, &msg);
            let last = from == Role::Seller && msg.msg_type == MsgType::Ack;
            for (to, out) in broker.handle(from, &msg) {
                log.record(Role::Broker, &out);
                let stream = if to == Role::Buyer { &mut buyer } else { &mut seller };
                write_frame(stream, &out)?;
            }
            if let Some(reason) = broker.aborted() {
                return Err(ProtocolError::Aborted(reason.to_string()));
            }
            if last {
                return Ok(());
            }
        }
    })();
    let _ = buyer.shutdown(std::net::Shutdown::Both);
    let _ = seller.shutdown(std::net::Shutdown::Both);
    result.map(|_| broker)
}

/// Connects, waits for SessionOpen, and sends every candidate.
pub fn run_seller(addr: SocketAddr, mut seller: Seller, timeout: Duration) -> Result<Seller, ProtocolError> {
    let mut s = connect(addr, timeout)?;
    write_frame(&mut s, &hello(Role::Seller))?;
    let open = read_frame(&mut s)?.ok_or_else(|| ProtocolError::Transport("broker closed".into()))?;
    let fail = |s: &mut TcpStream, id, e: &ProtocolError| {
        let _ = write_frame(s, &SessionMessage::error(id, 0, &e.to_string()));
    };
    if let Err(e) = seller.open(&open) {
        if open.msg_type != MsgType::Error {
            fail(&mut s, open.session_id, &e);
        }
        return Err(e);
    }
    while let Some(m) = seller.next_message() {
        match m {
            Ok(m) => write_frame(&mut s, &m)?,
            Err(e) => {
                fail(&mut s, open.session_id, &e);
                return Err(e);
            }
        }
    }
    Ok(seller)
}

/// Sends the buyer's setup messages and collects scores until complete.
pub fn run_buyer(
    addr: SocketAddr,
    setup: (Buyer, Vec<SessionMessage>),
    timeout: Duration,
) -> Result<Buyer, ProtocolError> {
    let (mut buyer, first) = setup;
    let mut s = connect(addr, timeout)?;
    write_frame(&mut s, &hello(Role::Buyer))?;
    for m in &first {
        write_frame(&mut s, m)?;
    }
    while !buyer.is_complete() {
        let msg = read_frame(&mut s)?.ok_or_else(|| ProtocolError::Transport("broker closed".into()))?;
        buyer.handle(&msg)?;
    }
    Ok(buyer)
}

/// All three roles on loopback TCP, each in its own thread.
pub fn run_tcp_loopback(
    buyer_setup: (Buyer, Vec<SessionMessage>),
    seller: Seller,
    broker: Broker,
    timeout: Duration,
) -> Result<SessionReport, ProtocolError> {
    let wall = Instant::now();
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let log = SessionLog::new();
    let broker_log = log.clone();
    let broker_thread = thread::spawn(move || serve_broker(listener, broker, timeout, broker_log));
    let seller_thread = thread::spawn(move || run_seller(addr, seller, timeout));
    let buyer = run_buyer(addr, buyer_setup, timeout);
    let broker = broker_thread
        .join()
        .map_err(|_| ProtocolError::Transport("broker thread panicked".into()))?;
    let seller = seller_thread
        .join()
        .map_err(|_| ProtocolError::Transport("seller thread panicked".into()))?;
    let buyer = buyer?;
    let broker = broker?;
    let seller = seller?;
    let start = Instant::now();
    let scores = buyer.finalize()?;
    log.finalize_event();
    let timings = SessionTimings {
        setup: buyer.setup_time() + seller.setup_time() + broker.setup_time(),
        buyer: buyer.busy_time() + start.elapsed(),
        seller: seller.busy_time(),
        broker: broker.busy_time(),
        wall: wall.elapsed(),
    };
    Ok(SessionReport::assemble(scores, timings, &log, Vec::new()))
}
