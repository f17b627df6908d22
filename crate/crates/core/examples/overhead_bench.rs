//! Per-sample cost of encrypted scoring against plaintext scoring for
//! several batch sizes at a fixed projected dimension.
//!
//!     cargo run --release --example overhead_bench -- [k]

use tip::market::{bench_overhead, per_sample_spread, BenchConfig, Mode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(384);
    let cfg = BenchConfig {
        batch_sizes: vec![10, 100, 300],
        ..BenchConfig::desk(k, Mode::Encrypted, 1)
    };
    let rows = bench_overhead(&cfg)?;
    println!(
        "{:>6} {:>16} {:>16} {:>16}",
        "batch", "plain ms/sample", "enc ms/sample", "overhead ms"
    );
    for r in &rows {
        println!(
            "{:>6} {:>16.4} {:>16.2} {:>16.2}",
            r.batch_size,
            r.per_sample_plaintext * 1e3,
            r.per_sample_encrypted * 1e3,
            r.per_sample_overhead * 1e3
        );
    }
    println!("per-sample spread {:.1}%", 100.0 * per_sample_spread(&rows));
    Ok(())
}
