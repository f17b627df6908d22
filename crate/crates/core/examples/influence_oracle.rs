//! Exact influence on a logistic regression, checked against retraining
//! with one extra point.
//!
//!     cargo run --release --example influence_oracle

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use tip::influence::*;

fn data(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..4)
                .map(|j| rng.sample::<f64, _>(StandardNormal) * (1.0 + j as f64))
                .collect();
            let s = x[0] - 0.5 * x[1] + 0.2 * x[3];
            let y = if rng.random::<f64>() < sigmoid(s) { 1.0 } else { 0.0 };
            Example::new(x, y)
        })
        .collect()
}

fn main() -> Result<(), InfluenceError> {
    let spec = ModelSpec {
        widths: vec![4, 1],
        activation: Activation::Identity,
        head: Head::BinaryLogistic,
    };
    let cfg = TrainConfig {
        grad_tol: 1e-10,
        ..TrainConfig::default()
    };
    let train_set = data(300, 1);
    let eval = data(1, 2).remove(0);
    let model = train(&spec, &train_set, &cfg)?;
    let h = risk_hessian(&model, &train_set)?;

    println!("{:>5} {:>14} {:>14}", "z", "predicted", "retrained");
    for (i, z) in data(6, 3).iter().enumerate() {
        // Adding z to n points upweights it by 1/(n + 1).
        let eps = 1.0 / (train_set.len() + 1) as f64;
        let predicted = eps * exact_influence_with(&model, &h, z, &eval, 0.0)?;
        let mut more = train_set.clone();
        more.push(z.clone());
        let refit = train(&spec, &more, &cfg)?;
        let actual = refit.loss(&eval) - model.loss(&eval);
        println!("{i:>5} {predicted:>14.6e} {actual:>14.6e}");
    }
    Ok(())
}
