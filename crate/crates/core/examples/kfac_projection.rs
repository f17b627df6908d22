//! K-FAC factors, per-layer eigenprojections and the preconditioned
//! evaluation vector of a small MLP, compared with unprojected gradients.
//!
//!     cargo run --release --example kfac_projection

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tip::influence::*;
use tip::market::pearson;

fn data(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let label = rng.random_range(0..3);
            let x = (0..12)
                .map(|j| if j % 3 == label { 1.0 } else { 0.0 } + rng.random_range(-1.0..1.0))
                .collect();
            Example::new(x, label as f64)
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ModelSpec {
        widths: vec![12, 16, 3],
        activation: Activation::ReLU,
        head: Head::Softmax,
    };
    let train_set = data(400, 1);
    let eval = data(50, 2);
    let pool = data(200, 3);
    let model = train(&spec, &train_set, &TrainConfig::default())?;
    let kfac = estimate_kfac(&model, &train_set)?;
    for (l, layer) in kfac.layers.iter().enumerate() {
        let top: Vec<String> = sorted_eigen(&layer.c_in)?
            .values
            .iter()
            .take(3)
            .map(|v| format!("{v:.3}"))
            .collect();
        println!(
            "layer {l}: C_in {}x{}, top eigenvalues {}",
            layer.c_in.nrows(),
            layer.c_in.ncols(),
            top.join(" ")
        );
    }

    let full = ProjectionOperator::identity(&model);
    let raw = raw_eval_vector(&model, &eval, &full)?;
    let reference: Vec<f64> = pool
        .iter()
        .map(|z| utility_score(&raw, &projected_gradient(&model, &full, z).unwrap()).unwrap())
        .collect();
    println!("full gradient dimension {}", full.dim());

    for ranks in [[(4, 4), (4, 2)], [(8, 8), (8, 3)], [(13, 16), (17, 3)]] {
        let proj = build_projection(&kfac, &ranks)?;
        let v = preconditioned_eval_vector(&model, &eval, &proj, &kfac, DEFAULT_DAMPING)?;
        let projected_raw = raw_eval_vector(&model, &eval, &proj)?;
        let (mut pre, mut plain) = (Vec::new(), Vec::new());
        for z in &pool {
            let g = projected_gradient(&model, &proj, z)?;
            pre.push(utility_score(&v, &g)?);
            plain.push(utility_score(&projected_raw, &g)?);
        }
        println!(
            "ranks {ranks:?}: k = {:>3}, raw dot vs full {:.3}, K-FAC utility vs raw dot {:.3}",
            proj.dim(),
            pearson(&plain, &reference)?,
            pearson(&pre, &plain)?
        );
    }
    Ok(())
}
