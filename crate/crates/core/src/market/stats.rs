//! Correlations, paired-difference inference and rank tables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::MarketError;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<(), MarketError> {
    if xs.len() != ys.len() {
        return Err(MarketError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(MarketError::TooFewPoints(xs.len()));
    }
    Ok(())
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MarketError> {
    check_pair(xs, ys)?;
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MarketError::ConstantInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their ranks.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, MarketError> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Paired comparison of two signals across replications.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairedDelta {
    pub n: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Two-sided paired t-test; absent with fewer than two pairs.
    pub p_value: Option<f64>,
    pub resamples: usize,
    pub warning: Option<String>,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Mean of a − b with a seeded percentile-bootstrap 95% interval and a
/// paired t-test.
pub fn paired_delta(pairs: &[(f64, f64)], seed: u64) -> PairedDelta {
    let deltas: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    let n = deltas.len();
    if n < 2 {
        let m = deltas.first().copied().unwrap_or(f64::NAN);
        return PairedDelta {
            n,
            mean: m,
            ci_low: m,
            ci_high: m,
            p_value: None,
            resamples: 0,
            warning: Some(format!(
                "{n} replication(s): interval is degenerate and no test is possible"
            )),
        };
    }
    let m = mean(&deltas);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut boot: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).map(|_| deltas[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    boot.sort_by(f64::total_cmp);
    let var = deltas.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (n - 1) as f64;
    let p_value = if var == 0.0 {
        if m == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        let t = m / (var / n as f64).sqrt();
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("df ≥ 1");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    PairedDelta {
        n,
        mean: m,
        ci_low: quantile(&boot, 0.025),
        ci_high: quantile(&boot, 0.975),
        p_value: Some(p_value),
        resamples: BOOTSTRAP_RESAMPLES,
        warning: None,
    }
}

/// Linear interpolation between order statistics of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankRow {
    pub rank: usize,
    pub index: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankDistribution {
    pub rows: Vec<RankRow>,
    pub negative_fraction: f64,
}

/// Descending by score, ties by ascending index; ranks start at 1.
pub fn rank_distribution(scores: &[f64]) -> Result<RankDistribution, MarketError> {
    if scores.is_empty() {
        return Err(MarketError::TooFewPoints(0));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let rows = order
        .into_iter()
        .enumerate()
        .map(|(r, i)| RankRow {
            rank: r + 1,
            index: i,
            score: scores[i],
        })
        .collect();
    let negative = scores.iter().filter(|&&s| s < 0.0).count();
    Ok(RankDistribution {
        rows,
        negative_fraction: negative as f64 / scores.len() as f64,
    })
}
