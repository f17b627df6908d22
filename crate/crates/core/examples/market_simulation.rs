//! Synthetic data market: sellers with shifted or noisy bundles, valued by
//! influence, cosine similarity and a random baseline, then compared with
//! the realized benefit of fine-tuning on each bundle.
//!
//!     cargo run --release --example market_simulation -- [replications]

use tip::market::{simulate, MarketConfig, Mode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reps: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let cfg = MarketConfig {
        num_replications: reps,
        ..MarketConfig::default()
    };
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let run = simulate(&cfg, Mode::Plaintext, None, threads)?;
    println!("{}", run.summary.render_table());

    let first = &run.results[0];
    println!("replication 0:");
    println!(
        "{:>7} {:>7} {:>6} {:>12} {:>12} {:>12}",
        "seller", "shift", "noise", "realized", "IF", "cosine"
    );
    for s in &first.sellers {
        println!(
            "{:>7} {:>7.3} {:>6.3} {:>12.4e} {:>12.4e} {:>12.4e}",
            s.seller, s.shift, s.label_noise, s.realized_benefit, s.utility_if, s.utility_cos
        );
    }
    Ok(())
}
