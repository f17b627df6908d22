#![allow(dead_code)]

pub mod oracles;

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tip::ckks::{Ciphertext, CkksContext, CkksParams, KeySet};

/// Desk-scale context (N = 8192) and keys, built once per test binary.
pub fn desk() -> &'static (CkksContext, KeySet) {
    static CELL: OnceLock<(CkksContext, KeySet)> = OnceLock::new();
    CELL.get_or_init(|| {
        let ctx = CkksContext::new(CkksParams::desk_scale()).unwrap();
        let keys = ctx.keygen(1);
        (ctx, keys)
    })
}

pub fn uniform_vec(seed: u64, len: usize, bound: f64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-bound..=bound)).collect()
}

pub fn encrypt(values: &[f64], seed: u64) -> Ciphertext {
    let (ctx, keys) = desk();
    let pt = ctx.encode(values, ctx.max_level()).unwrap();
    ctx.encrypt(&keys.public_key, &pt, &mut ChaCha20Rng::seed_from_u64(seed))
}

pub fn decrypt_all(ct: &Ciphertext) -> Vec<f64> {
    let (ctx, keys) = desk();
    ctx.decode_all(&ctx.decrypt(&keys.secret_key, ct).unwrap())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// A trained 2-layer MLP with K-FAC state and a spectral projection,
/// plus train/eval/candidate sets drawn from one synthetic distribution.
pub struct Reference {
    pub model: tip::influence::Model,
    pub train: Vec<tip::influence::Example>,
    pub eval: Vec<tip::influence::Example>,
    pub candidates: Vec<tip::influence::Example>,
    pub kfac: tip::influence::KfacState,
    pub proj: tip::influence::ProjectionOperator,
}

pub fn classification_data(n: usize, d: usize, classes: usize, seed: u64) -> Vec<tip::influence::Example> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let label = rng.random_range(0..classes);
            let x: Vec<f64> = (0..d)
                .map(|j| {
                    let centre = if j % classes == label { 1.0 } else { 0.0 };
                    centre + rng.random_range(-1.0..1.0) * (1.0 + (j % 5) as f64 * 0.3)
                })
                .collect();
            tip::influence::Example::new(x, label as f64)
        })
        .collect()
}

pub fn reference(widths: &[usize], ranks: &[(usize, usize)], candidates: usize, seed: u64) -> Reference {
    use tip::influence::*;
    let d = widths[0];
    let classes = *widths.last().unwrap();
    let train_set = classification_data(300, d, classes, seed);
    let eval = classification_data(40, d, classes, seed + 1);
    let cands = classification_data(candidates, d, classes, seed + 2);
    let spec = ModelSpec {
        widths: widths.to_vec(),
        activation: Activation::ReLU,
        head: Head::Softmax,
    };
    let cfg = TrainConfig {
        epochs: 60,
        seed,
        ..TrainConfig::default()
    };
    let model = train(&spec, &train_set, &cfg).unwrap();
    let kfac = estimate_kfac(&model, &train_set).unwrap();
    let proj = build_projection(&kfac, ranks).unwrap();
    Reference {
        model,
        train: train_set,
        eval,
        candidates: cands,
        kfac,
        proj,
    }
}
