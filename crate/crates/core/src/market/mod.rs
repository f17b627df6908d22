//! Synthetic data market: replications comparing influence, cosine and
//! random valuation signals against realized fine-tuning benefit, plus
//! the encrypted-path overhead benchmark.

mod bench;
mod config;
mod generator;
pub mod output;
mod replication;
mod stats;
mod summary;

use thiserror::Error;

use crate::ckks::CkksError;
use crate::influence::InfluenceError;
use crate::protocol::ProtocolError;

pub use bench::{bench_overhead, per_sample_cv, per_sample_spread, BenchConfig, TimingRow};
pub use config::{GroundTruthConfig, Heterogeneity, MarketConfig, Mode, ModelConfig, ValuationConfig};
pub use generator::{feature_scales, generate_market, MarketInstance, SellerBundle};
pub use replication::{
    baseline, realized_benefit, run_replication, Baseline, Correlation, EncryptedValuation, ReplicationResult,
    ReplicationTimings, SellerResult, Signal,
};
pub use stats::{
    average_ranks, paired_delta, pearson, rank_distribution, spearman, PairedDelta, RankDistribution, RankRow,
};
pub use summary::{summarize, ReplicationCorrelations, SignalSummary, SummaryStats};

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("invalid market config: {0}")]
    InvalidConfig(String),
    #[error("input is constant")]
    ConstantInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error(transparent)]
    Influence(#[from] InfluenceError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Ckks(#[from] CkksError),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for MarketError {
    fn from(e: std::io::Error) -> Self {
        MarketError::Io(e.to_string())
    }
}

impl From<csv::Error> for MarketError {
    fn from(e: csv::Error) -> Self {
        MarketError::Io(e.to_string())
    }
}

/// Everything one simulation produces.
pub struct MarketRun {
    pub results: Vec<ReplicationResult>,
    pub summary: SummaryStats,
    pub rank: RankDistribution,
}

/// Runs every replication of `cfg` on up to `threads` workers and
/// summarizes them. Results are ordered by replication index, so the output
/// does not depend on the thread count.
pub fn simulate(
    cfg: &MarketConfig,
    mode: Mode,
    enc: Option<&EncryptedValuation>,
    threads: usize,
) -> Result<MarketRun, MarketError> {
    cfg.validate()?;
    let n = cfg.num_replications;
    let workers = threads.clamp(1, n.max(1));
    let run_one = |r: usize| -> Result<ReplicationResult, MarketError> {
        let res = run_replication(cfg, &generate_market(cfg, r), mode, enc)?;
        log::info!(
            "replication {r}: IF r = {:?}, cosine r = {:?}",
            res.correlation(Signal::Influence).pearson,
            res.correlation(Signal::Cosine).pearson
        );
        Ok(res)
    };
    let mut slots: Vec<Option<Result<ReplicationResult, MarketError>>> = (0..n).map(|_| None).collect();
    if workers == 1 {
        for (r, slot) in slots.iter_mut().enumerate() {
            *slot = Some(run_one(r));
        }
    } else {
        let done = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let run_one = &run_one;
                    scope.spawn(move || (w..n).step_by(workers).map(|r| (r, run_one(r))).collect::<Vec<_>>())
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("replication worker panicked"))
                .collect::<Vec<_>>()
        });
        for (r, res) in done {
            slots[r] = Some(res);
        }
    }
    let results = slots
        .into_iter()
        .map(|s| s.expect("every replication ran"))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(&results, cfg.seed);
    let utilities: Vec<f64> = results
        .iter()
        .flat_map(|r| r.sellers.iter().map(|s| s.utility_if))
        .collect();
    let rank = rank_distribution(&utilities)?;
    Ok(MarketRun { results, summary, rank })
}
