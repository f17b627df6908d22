//! Ranks a candidate pool by utility, reports how much of it would hurt the
//! buyer, and values the best bundles by summing member utilities.
//!
//!     cargo run --release --example rank_distribution

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tip::influence::*;
use tip::market::rank_distribution;

fn data(n: usize, flip: f64, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut y = if x[0] - x[2] + 0.3 * rng.random_range(-1.0..1.0) > 0.0 {
                1.0
            } else {
                0.0
            };
            if rng.random::<f64>() < flip {
                y = 1.0 - y;
            }
            Example::new(x, y)
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ModelSpec {
        widths: vec![5, 1],
        activation: Activation::Identity,
        head: Head::BinaryLogistic,
    };
    let train_set = data(300, 0.0, 1);
    let eval = data(100, 0.0, 2);
    let pool = data(400, 0.25, 3);
    let model = train(&spec, &train_set, &TrainConfig::default())?;
    let kfac = estimate_kfac(&model, &train_set)?;
    let proj = ProjectionOperator::identity(&model);
    let v = preconditioned_eval_vector(&model, &eval, &proj, &kfac, 1e-3)?;
    let utilities: Vec<f64> = pool
        .iter()
        .map(|z| utility_score(&v, &projected_gradient(&model, &proj, z).unwrap()).unwrap())
        .collect();

    let dist = rank_distribution(&utilities)?;
    println!(
        "{:.1}% of the pool has negative utility",
        100.0 * dist.negative_fraction
    );
    for q in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let row = &dist.rows[((dist.rows.len() - 1) as f64 * q) as usize];
        println!(
            "rank {:>4}: candidate {:>3} utility {:+.4e}",
            row.rank, row.index, row.score
        );
    }
    for k in [10, 50, 100, 400] {
        let best = greedy_top_k(&utilities, k);
        println!("top-{k:<3} bundle value {:+.4e}", group_value(&utilities, &best)?);
    }
    Ok(())
}
