//! Synthetic two-class market with anisotropic features.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::config::MarketConfig;
use crate::influence::Example;

#[derive(Clone, Debug, PartialEq)]
pub struct SellerBundle {
    pub shift: f64,
    pub label_noise: f64,
    pub data: Vec<Example>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarketInstance {
    pub replication: usize,
    /// Seed for everything downstream of generation in this replication.
    pub seed: u64,
    pub train: Vec<Example>,
    pub eval: Vec<Example>,
    pub sellers: Vec<SellerBundle>,
}

/// Per-feature standard deviations, log-spaced so the variances span
/// `variance_ratio`.
pub fn feature_scales(cfg: &MarketConfig) -> Vec<f64> {
    let d = cfg.features;
    (0..d)
        .map(|j| {
            let t = if d == 1 { 0.0 } else { j as f64 / (d - 1) as f64 };
            cfg.variance_ratio.powf(t / 2.0)
        })
        .collect()
}

struct Base {
    scales: Vec<f64>,
    separation: f64,
}

impl Base {
    /// Class means ±separation/2 on every feature, plus `offset`.
    fn sample(&self, rng: &mut ChaCha20Rng, offset: &[f64], label_noise: f64) -> Example {
        let y = if rng.random::<bool>() { 1.0 } else { 0.0 };
        let sign = if y == 1.0 { 0.5 } else { -0.5 };
        let x = self
            .scales
            .iter()
            .zip(offset)
            .map(|(s, o)| sign * self.separation + o + s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let label = if rng.random::<f64>() < label_noise { 1.0 - y } else { y };
        Example::new(x, label)
    }
}

/// Stratified draws from [0, max): one per stratum, in shuffled order.
fn stratified(rng: &mut ChaCha20Rng, n: usize, max: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|i| max * (i as f64 + rng.random::<f64>()) / n as f64)
        .collect();
    v.shuffle(rng);
    v
}

/// Deterministic in (cfg.seed, replication).
pub fn generate_market(cfg: &MarketConfig, replication: usize) -> MarketInstance {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(replication as u64);
    let seed = rng.random();
    let base = Base {
        scales: feature_scales(cfg),
        separation: cfg.class_separation,
    };
    let zero = vec![0.0; cfg.features];
    let train = (0..cfg.n_train).map(|_| base.sample(&mut rng, &zero, 0.0)).collect();
    let eval = (0..cfg.n_eval).map(|_| base.sample(&mut rng, &zero, 0.0)).collect();
    let s = cfg.num_sellers_per_trial;
    let shifts = stratified(&mut rng, s, cfg.heterogeneity.max_shift);
    let noises = stratified(&mut rng, s, cfg.heterogeneity.max_label_noise);
    let sellers = shifts
        .into_iter()
        .zip(noises)
        .map(|(shift, label_noise)| {
            let dir: Vec<f64> = (0..cfg.features).map(|_| rng.sample(StandardNormal)).collect();
            let n = dir.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
            let offset: Vec<f64> = dir
                .iter()
                .zip(&base.scales)
                .map(|(d, sc)| shift * sc * d / n * (cfg.features as f64).sqrt())
                .collect();
            let data = (0..cfg.n_seller)
                .map(|_| base.sample(&mut rng, &offset, label_noise))
                .collect();
            SellerBundle {
                shift,
                label_noise,
                data,
            }
        })
        .collect();
    MarketInstance {
        replication,
        seed,
        train,
        eval,
        sellers,
    }
}
