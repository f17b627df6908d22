//! Session orchestration: event log, timing report, and the in-process
//! transport.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::message::{MsgType, SessionMessage};
use super::roles::{Broker, Buyer, FinalScores, Role, Seller};
use super::ProtocolError;

/// One line of the session log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogEvent {
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
    pub role: &'static str,
    pub phase: u8,
    pub msg_type: &'static str,
    pub bytes: usize,
}

/// Protocol phase a message belongs to, judged by type and sender.
pub fn phase_of(from: Role, msg_type: MsgType) -> u8 {
    match (from, msg_type) {
        (_, MsgType::SessionOpen) | (_, MsgType::EvalVector) => 1,
        (_, MsgType::CandidateGradient) | (Role::Seller, MsgType::Ack) => 2,
        (_, MsgType::ScoreResult) | (_, MsgType::Ack) => 3,
        (Role::Buyer, MsgType::Error) => 1,
        (Role::Seller, MsgType::Error) => 2,
        (Role::Broker, MsgType::Error) => 3,
    }
}

/// Thread-safe, append-only event log.
#[derive(Clone, Default)]
pub struct SessionLog {
    events: Arc<Mutex<Vec<LogEvent>>>,
}

impl SessionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_events(events: Vec<LogEvent>) -> Self {
        let log = Self::default();
        *log.events.lock().expect("log lock") = events;
        log
    }

    fn now() -> f64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0)
    }

    pub fn record(&self, from: Role, msg: &SessionMessage) {
        self.push(LogEvent {
            timestamp: Self::now(),
            role: from.name(),
            phase: phase_of(from, msg.msg_type),
            msg_type: msg.msg_type.name(),
            bytes: msg.frame_len(),
        });
    }

    pub fn finalize_event(&self) {
        self.push(LogEvent {
            timestamp: Self::now(),
            role: Role::Buyer.name(),
            phase: 4,
            msg_type: "Finalize",
            bytes: 0,
        });
    }

    fn push(&self, e: LogEvent) {
        log::debug!("{} phase {} {} {} bytes", e.role, e.phase, e.msg_type, e.bytes);
        self.events.lock().unwrap().push(e);
    }

    pub fn events(&self) -> Vec<LogEvent> {
        self.events.lock().unwrap().clone()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in self.events() {
            serde_json::to_writer(&mut w, &e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SessionTimings {
    /// One-time work: key generation, ṽ_eval encryption, key loading.
    pub setup: Duration,
    /// Buyer decryption.
    pub buyer: Duration,
    /// Seller gradient computation and encryption.
    pub seller: Duration,
    /// Broker blind scoring.
    pub broker: Duration,
    /// Wall time from setup to finalize.
    pub wall: Duration,
}

#[derive(Clone, Debug)]
pub struct SessionReport {
    pub scores: FinalScores,
    pub timings: SessionTimings,
    /// Encrypted-path time per candidate (seller + broker + buyer busy time),
    /// excluding setup.
    pub per_sample: Duration,
    /// Frame bytes sent, by message type.
    pub bytes: BTreeMap<&'static str, usize>,
    pub log: Vec<LogEvent>,
    /// Every delivered frame as (from, to, message), when recording.
    pub transcript: Vec<(Role, Role, SessionMessage)>,
}

impl SessionReport {
    pub(crate) fn assemble(
        scores: FinalScores,
        timings: SessionTimings,
        log: &SessionLog,
        transcript: Vec<(Role, Role, SessionMessage)>,
    ) -> Self {
        let n = scores.entries.len().max(1) as u32;
        let per_sample = (timings.buyer + timings.seller + timings.broker) / n;
        let log = log.events();
        let mut bytes = BTreeMap::new();
        for e in &log {
            *bytes.entry(e.msg_type).or_insert(0) += e.bytes;
        }
        Self {
            scores,
            timings,
            per_sample,
            bytes,
            log,
            transcript,
        }
    }
}

/// All three roles in one thread over a FIFO queue, driven one candidate
/// at a time. Deterministic: the same inputs always produce the same
/// messages in the same order.
pub struct InprocSession {
    buyer: Buyer,
    seller: Seller,
    broker: Broker,
    queue: VecDeque<(Role, Role, SessionMessage)>,
    log: SessionLog,
    transcript: Option<Vec<(Role, Role, SessionMessage)>>,
    wall: Instant,
}

impl InprocSession {
    pub fn new(
        buyer_setup: (Buyer, Vec<SessionMessage>),
        seller: Seller,
        broker: Broker,
        record_transcript: bool,
    ) -> Self {
        let (buyer, first) = buyer_setup;
        Self {
            buyer,
            seller,
            broker,
            queue: first.into_iter().map(|m| (Role::Buyer, Role::Broker, m)).collect(),
            log: SessionLog::new(),
            transcript: record_transcript.then(Vec::new),
            wall: Instant::now(),
        }
    }

    fn drain(&mut self) -> Result<(), ProtocolError> {
        while let Some((from, to, msg)) = self.queue.pop_front() {
            self.log.record(from, &msg);
            let replies: Vec<(Role, SessionMessage)> = match to {
                Role::Broker => self.broker.handle(from, &msg),
                Role::Seller => match self.seller.open(&msg) {
                    Ok(()) => Vec::new(),
                    Err(e) => {
                        if msg.msg_type == MsgType::Error {
                            return Err(e);
                        }
                        vec![(
                            Role::Broker,
                            SessionMessage::error(msg.session_id, msg.sequence, &e.to_string()),
                        )]
                    }
                },
                Role::Buyer => {
                    self.buyer.handle(&msg)?;
                    Vec::new()
                }
            };
            if let Some(t) = &mut self.transcript {
                t.push((from, to, msg));
            }
            self.queue.extend(replies.into_iter().map(|(next, m)| (to, next, m)));
        }
        Ok(())
    }

    /// Delivers everything in flight, then pulls the seller's next message
    /// and carries it through to the buyer, so at most one candidate
    /// ciphertext is alive at a time. Returns false once nothing is left.
    pub fn step(&mut self) -> Result<bool, ProtocolError> {
        self.drain()?;
        if self.broker.aborted().is_some() {
            return Ok(false);
        }
        let msg = match self.seller.next_message() {
            None => return Ok(false),
            Some(Ok(m)) => m,
            Some(Err(e)) => SessionMessage::error(self.buyer.session_id(), 0, &e.to_string()),
        };
        self.queue.push_back((Role::Seller, Role::Broker, msg));
        self.drain()?;
        Ok(true)
    }

    pub fn finish(mut self) -> Result<SessionReport, ProtocolError> {
        while self.step()? {}
        if let Some(reason) = self.broker.aborted() {
            return Err(ProtocolError::Aborted(reason.to_string()));
        }
        let start = Instant::now();
        let scores = self.buyer.finalize()?;
        self.log.finalize_event();
        let timings = SessionTimings {
            setup: self.buyer.setup_time() + self.seller.setup_time() + self.broker.setup_time(),
            buyer: self.buyer.busy_time() + start.elapsed(),
            seller: self.seller.busy_time(),
            broker: self.broker.busy_time(),
            wall: self.wall.elapsed(),
        };
        Ok(SessionReport::assemble(
            scores,
            timings,
            &self.log,
            self.transcript.unwrap_or_default(),
        ))
    }
}

/// Runs a whole in-process session; see `InprocSession`.
pub fn run_inproc(
    buyer_setup: (Buyer, Vec<SessionMessage>),
    seller: Seller,
    broker: Broker,
    record_transcript: bool,
) -> Result<SessionReport, ProtocolError> {
    InprocSession::new(buyer_setup, seller, broker, record_transcript).finish()
}
