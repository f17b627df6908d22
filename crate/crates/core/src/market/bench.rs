//! Per-sample cost of the encrypted scoring path against plaintext scoring.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::config::Mode;
use super::MarketError;
use crate::ckks::{CkksContext, CkksParams, KeySet};
use crate::influence::{utility_score, EvalVector, Provenance};
use crate::protocol::{Broker, Buyer, BuyerConfig, InprocSession, Seller};

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub params: CkksParams,
    pub k: usize,
    pub batch_sizes: Vec<usize>,
    pub mode: Mode,
    pub seed: u64,
    /// Generated from `seed` when absent.
    pub keys: Option<KeySet>,
    /// Small batches are repeated until this many candidates have been
    /// scored; rows report mean per-session and per-sample times.
    pub min_candidates: usize,
}

impl BenchConfig {
    pub fn desk(k: usize, mode: Mode, seed: u64) -> Self {
        Self {
            params: CkksParams::desk_scale(),
            k,
            batch_sizes: vec![10, 100, 1000],
            mode,
            seed,
            keys: None,
            min_candidates: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub batch_size: usize,
    pub k: usize,
    pub mode: Mode,
    pub plaintext_secs: f64,
    pub encrypted_secs: f64,
    pub per_sample_plaintext: f64,
    pub per_sample_encrypted: f64,
    pub per_sample_overhead: f64,
}

fn random_vectors(rng: &mut ChaCha20Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn eval_vector(rng: &mut ChaCha20Rng, k: usize) -> EvalVector {
    EvalVector {
        values: random_vectors(rng, 1, k).remove(0),
        provenance: Provenance::RawGradientSum,
        eval_set_size: 1,
    }
}

fn session(
    cfg: &BenchConfig,
    keys: &KeySet,
    rng: &mut ChaCha20Rng,
    v: EvalVector,
    grads: Vec<Vec<f64>>,
) -> Result<InprocSession, MarketError> {
    let checksum = [0u8; 32];
    let buyer = Buyer::setup(BuyerConfig {
        params: cfg.params.clone(),
        keys: Some(keys.clone()),
        key_seed: 0,
        session_seed: rng.random(),
        eval_vector: v,
        projection_checksum: checksum,
    })?;
    let seller = Seller::from_gradients(cfg.params.clone(), grads, checksum, rng.random())?;
    Ok(InprocSession::new(
        buyer,
        seller,
        Broker::new(cfg.params.clone())?,
        false,
    ))
}

/// Measurement state for one batch size: a sequence of sessions of
/// `batch` candidates each, `target` candidates in total.
struct Row {
    batch: usize,
    target: usize,
    done: usize,
    current: Option<(InprocSession, usize)>,
    plaintext: Duration,
    encrypted: Duration,
}

impl Row {
    fn advance(&mut self, cfg: &BenchConfig, keys: Option<&KeySet>, rng: &mut ChaCha20Rng) -> Result<(), MarketError> {
        if self.current.is_none() {
            let v = eval_vector(rng, cfg.k);
            let grads = random_vectors(rng, self.batch, cfg.k);
            let t = Instant::now();
            let plain: Vec<f64> = grads.iter().map(|g| utility_score(&v, g)).collect::<Result<_, _>>()?;
            self.plaintext += t.elapsed();
            std::hint::black_box(&plain);
            match keys {
                Some(keys) => self.current = Some((session(cfg, keys, rng, v, grads)?, 0)),
                None => {
                    self.done += self.batch;
                    return Ok(());
                }
            }
        }
        let (s, stepped) = self.current.as_mut().expect("session started above");
        s.step()?;
        *stepped += 1;
        self.done += 1;
        if *stepped == self.batch {
            let (s, _) = self.current.take().expect("session in progress");
            let report = s.finish()?;
            self.encrypted += report.per_sample * self.batch as u32;
        }
        Ok(())
    }
}

/// Scores random k-dimensional candidates for each batch size. Small
/// batches are repeated until `min_candidates` have been scored, and all
/// rows advance in lockstep, one candidate at a time on a shared schedule,
/// so every row is measured over the same stretch of wall time. Key
/// generation and session setup are outside the timed region; an untimed
/// warm-up session runs first.
pub fn bench_overhead(cfg: &BenchConfig) -> Result<Vec<TimingRow>, MarketError> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let keys = match (cfg.mode, &cfg.keys) {
        (Mode::Encrypted, Some(k)) => Some(k.clone()),
        (Mode::Encrypted, None) => Some(CkksContext::new(cfg.params.clone())?.keygen(cfg.seed)),
        (Mode::Plaintext, _) => None,
    };
    if let Some(keys) = &keys {
        let v = eval_vector(&mut rng, cfg.k);
        let grads = random_vectors(&mut rng, 4, cfg.k);
        session(cfg, keys, &mut rng, v, grads)?.finish()?;
    }
    let mut rows = Vec::with_capacity(cfg.batch_sizes.len());
    for &n in &cfg.batch_sizes {
        if n == 0 {
            return Err(MarketError::InvalidConfig("batch size 0".into()));
        }
        rows.push(Row {
            batch: n,
            target: cfg.min_candidates.div_ceil(n).max(1) * n,
            done: 0,
            current: None,
            plaintext: Duration::ZERO,
            encrypted: Duration::ZERO,
        });
    }
    let total = rows.iter().map(|r| r.target).max().unwrap_or(0);
    for t in 1..=total {
        for row in &mut rows {
            while row.done < (t * row.target).div_ceil(total) {
                row.advance(cfg, keys.as_ref(), &mut rng)?;
            }
        }
    }
    Ok(rows
        .iter()
        .map(|row| {
            let per_plain = row.plaintext.as_secs_f64() / row.target as f64;
            let per_enc = row.encrypted.as_secs_f64() / row.target as f64;
            let sessions = (row.target / row.batch) as f64;
            TimingRow {
                batch_size: row.batch,
                k: cfg.k,
                mode: cfg.mode,
                plaintext_secs: row.plaintext.as_secs_f64() / sessions,
                encrypted_secs: row.encrypted.as_secs_f64() / sessions,
                per_sample_plaintext: per_plain,
                per_sample_encrypted: per_enc,
                per_sample_overhead: if cfg.mode == Mode::Encrypted {
                    per_enc - per_plain
                } else {
                    0.0
                },
            }
        })
        .collect())
}

/// Largest relative spread of per-sample encrypted time across rows,
/// (max − min) / min.
pub fn per_sample_spread(rows: &[TimingRow]) -> f64 {
    let xs: Vec<f64> = rows.iter().map(|r| r.per_sample_encrypted).collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return 0.0;
    }
    (max - min) / min
}

/// Coefficient of variation (population std / mean) of per-sample
/// encrypted time across rows.
pub fn per_sample_cv(rows: &[TimingRow]) -> f64 {
    let xs: Vec<f64> = rows.iter().map(|r| r.per_sample_encrypted).collect();
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    var.sqrt() / m
}
