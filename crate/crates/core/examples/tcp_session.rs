//! The three roles as separate threads talking length-prefixed frames over
//! loopback TCP. The broker listens; buyer and seller connect to it.
//!
//!     cargo run --release --example tcp_session

use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tip::ckks::CkksParams;
use tip::influence::*;
use tip::protocol::tcp::{run_buyer, run_seller, serve_broker};
use tip::protocol::{Broker, Buyer, BuyerConfig, Seller, SessionLog};

fn data(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = if x[0] + x[1] > 0.0 { 1.0 } else { 0.0 };
            Example::new(x, y)
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = CkksParams::desk_scale();
    let timeout = Duration::from_secs(30);
    let spec = ModelSpec {
        widths: vec![6, 1],
        activation: Activation::Identity,
        head: Head::BinaryLogistic,
    };
    let train_set = data(200, 1);
    let model = train(&spec, &train_set, &TrainConfig::default())?;
    let kfac = estimate_kfac(&model, &train_set)?;
    let proj = ProjectionOperator::identity(&model);

    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    println!("broker on {addr}");
    let log = SessionLog::new();
    let broker_log = log.clone();
    let broker = Broker::new(params.clone())?;
    let broker = thread::spawn(move || serve_broker(listener, broker, timeout, broker_log));

    let seller = Seller::from_examples(params.clone(), model.clone(), proj.clone(), data(8, 3), 5)?;
    let seller = thread::spawn(move || run_seller(addr, seller, timeout));

    let cfg = BuyerConfig::from_model(params, &model, &data(50, 2), &proj, &kfac, 1e-3, 4)?;
    let buyer = run_buyer(addr, Buyer::setup(cfg)?, timeout)?;
    let broker = broker.join().expect("broker thread")?;
    let seller = seller.join().expect("seller thread")?;

    let scores = buyer.finalize()?;
    println!(
        "seller sent {}, broker scored {}",
        seller.candidate_count(),
        broker.scored_count()
    );
    for e in &scores.entries {
        println!("candidate {}: influence {:+.6e}", e.index, e.score);
    }
    for e in log.events() {
        println!(
            "phase {} {:<6} {:<17} {:>9} bytes",
            e.phase, e.role, e.msg_type, e.bytes
        );
    }
    Ok(())
}
