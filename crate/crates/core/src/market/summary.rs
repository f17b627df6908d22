use serde::Serialize;

use super::replication::{ReplicationResult, Signal};
use super::stats::{paired_delta, PairedDelta};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignalSummary {
    pub signal: Signal,
    pub mean_abs_pearson: f64,
    pub mean_abs_spearman: f64,
    /// Replications where the correlation was undefined (constant input).
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicationCorrelations {
    pub replication: usize,
    pub pearson: Vec<Option<f64>>,
    pub spearman: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryStats {
    pub replications: usize,
    pub pairs: usize,
    pub signals: Vec<SignalSummary>,
    /// |Pearson|(IF) − |Pearson|(Cosine), paired by replication.
    pub paired_pearson: PairedDelta,
    pub paired_spearman: PairedDelta,
    pub negative_fraction: f64,
    pub per_replication: Vec<ReplicationCorrelations>,
}

fn mean_abs(xs: impl Iterator<Item = Option<f64>>) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    let mut skipped = 0;
    for x in xs {
        match x {
            Some(v) => {
                sum += v.abs();
                n += 1;
            }
            None => skipped += 1,
        }
    }
    (if n == 0 { f64::NAN } else { sum / n as f64 }, skipped)
}

pub fn summarize(results: &[ReplicationResult], seed: u64) -> SummaryStats {
    let signals = Signal::ALL
        .iter()
        .map(|&s| {
            let (p, skipped) = mean_abs(results.iter().map(|r| r.correlation(s).pearson));
            let (sp, _) = mean_abs(results.iter().map(|r| r.correlation(s).spearman));
            SignalSummary {
                signal: s,
                mean_abs_pearson: p,
                mean_abs_spearman: sp,
                skipped,
            }
        })
        .collect();
    let paired = |get: fn(&super::replication::Correlation) -> Option<f64>| {
        let pairs: Vec<(f64, f64)> = results
            .iter()
            .filter_map(|r| {
                let a = get(r.correlation(Signal::Influence))?;
                let b = get(r.correlation(Signal::Cosine))?;
                Some((a.abs(), b.abs()))
            })
            .collect();
        paired_delta(&pairs, seed)
    };
    let all: Vec<f64> = results
        .iter()
        .flat_map(|r| r.sellers.iter().map(|s| s.utility_if))
        .collect();
    let negative = all.iter().filter(|&&u| u < 0.0).count();
    SummaryStats {
        replications: results.len(),
        pairs: all.len(),
        signals,
        paired_pearson: paired(|c| c.pearson),
        paired_spearman: paired(|c| c.spearman),
        negative_fraction: if all.is_empty() {
            0.0
        } else {
            negative as f64 / all.len() as f64
        },
        per_replication: results
            .iter()
            .map(|r| ReplicationCorrelations {
                replication: r.replication,
                pearson: Signal::ALL.iter().map(|&s| r.correlation(s).pearson).collect(),
                spearman: Signal::ALL.iter().map(|&s| r.correlation(s).spearman).collect(),
            })
            .collect(),
    }
}

impl SummaryStats {
    pub fn signal(&self, s: Signal) -> &SignalSummary {
        self.signals
            .iter()
            .find(|x| x.signal == s)
            .expect("all signals present")
    }

    /// Plain-text tables with the usual column names.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{} replications, {} buyer-seller pairs\n\n",
            self.replications, self.pairs
        ));
        out.push_str(&format!(
            "{:<8} {:>22} {:>24}\n",
            "Signal", "Mean |Pearson| (r)", "Mean |Spearman| (rho)"
        ));
        for s in &self.signals {
            out.push_str(&format!(
                "{:<8} {:>22.3} {:>24.3}\n",
                s.signal.name(),
                s.mean_abs_pearson,
                s.mean_abs_spearman
            ));
        }
        out.push('\n');
        out.push_str(&format!(
            "{:<10} {:>18} {:>22} {:>10}\n",
            "Metric", "Mean Δ (IF - Cos)", "95% CI", "p-value"
        ));
        for (name, d) in [("Pearson", &self.paired_pearson), ("Spearman", &self.paired_spearman)] {
            let p = d.p_value.map(|p| format!("{p:.2e}")).unwrap_or_else(|| "n/a".into());
            out.push_str(&format!(
                "{:<10} {:>+18.3} {:>22} {:>10}\n",
                name,
                d.mean,
                format!("[{:+.3}, {:+.3}]", d.ci_low, d.ci_high),
                p
            ));
        }
        out.push_str(&format!(
            "\nNegative-utility sellers (IF): {:.1}%\n",
            100.0 * self.negative_fraction
        ));
        for d in [&self.paired_pearson, &self.paired_spearman] {
            if let Some(w) = &d.warning {
                out.push_str(&format!("warning: {w}\n"));
            }
        }
        out
    }
}
