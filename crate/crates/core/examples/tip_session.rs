//! A complete buyer/seller/broker session in one process: the buyer
//! encrypts its query vector, the seller encrypts candidate gradients,
//! the broker scores them blind and the buyer decrypts a ranking.
//!
//!     cargo run --release --example tip_session -- [candidates]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tip::ckks::CkksParams;
use tip::influence::*;
use tip::protocol::{run_inproc, Broker, Buyer, BuyerConfig, Seller};

fn data(n: usize, flip: f64, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let y = rng.random_range(0..2);
            let x = (0..10)
                .map(|j| if j < 5 { y as f64 - 0.5 } else { 0.0 } + rng.random_range(-1.0..1.0))
                .collect();
            let label = if rng.random::<f64>() < flip { 1 - y } else { y };
            Example::new(x, label as f64)
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let params = CkksParams::desk_scale();
    let spec = ModelSpec {
        widths: vec![10, 8, 1],
        activation: Activation::Sigmoid,
        head: Head::BinaryLogistic,
    };
    let train_set = data(300, 0.0, 1);
    let eval = data(100, 0.0, 2);
    let model = train(&spec, &train_set, &TrainConfig::default())?;
    let kfac = estimate_kfac(&model, &train_set)?;
    let proj = build_projection(&kfac, &[(8, 8), (9, 1)])?;

    // Half the seller's points carry flipped labels.
    let mut offer = data(n / 2, 0.0, 3);
    offer.extend(data(n - n / 2, 1.0, 4));

    let cfg = BuyerConfig::from_model(params.clone(), &model, &eval, &proj, &kfac, 1.0, 7)?;
    let seller = Seller::from_examples(params.clone(), model, proj, offer, 8)?;
    let report = run_inproc(Buyer::setup(cfg)?, seller, Broker::new(params)?, false)?;

    println!("rank  index  utility      (indices >= {} are mislabeled)", n / 2);
    for (rank, &i) in report.scores.ranking.iter().enumerate().take(10) {
        println!(
            "{:>4}  {:>5}  {:+.6e}",
            rank + 1,
            i,
            report.scores.entries[i as usize].utility
        );
    }
    let t = &report.timings;
    println!(
        "setup {:.2} s, seller {:.2} s, broker {:.2} s, buyer {:.3} s, {:.1} ms per candidate",
        t.setup.as_secs_f64(),
        t.seller.as_secs_f64(),
        t.broker.as_secs_f64(),
        t.buyer.as_secs_f64(),
        report.per_sample.as_secs_f64() * 1e3
    );
    for (ty, bytes) in &report.bytes {
        println!("{ty:>18} {bytes:>12} bytes");
    }
    Ok(())
}
