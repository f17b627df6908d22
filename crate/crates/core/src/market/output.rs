//! Output files. Every float is written with 17 significant digits.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::bench::TimingRow;
use super::replication::ReplicationResult;
use super::stats::RankDistribution;
use super::summary::SummaryStats;
use super::MarketError;

pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// serde_json formatter writing floats in 17-significant-digit scientific
/// notation (non-finite values become null).
struct SigFormatter(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for SigFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        if value.is_finite() {
            w.write_all(fmt17(value).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_17<T: Serialize>(value: &T) -> Result<String, MarketError> {
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, SigFormatter(serde_json::ser::PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| MarketError::Io(e.to_string()))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

pub fn write_replications<W: Write>(w: W, results: &[ReplicationResult]) -> Result<(), MarketError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "replication",
        "seller",
        "shift",
        "label_noise",
        "utility_if",
        "utility_cos",
        "utility_rand",
        "realized_benefit",
    ])?;
    for r in results {
        for s in &r.sellers {
            out.write_record([
                r.replication.to_string(),
                s.seller.to_string(),
                fmt17(s.shift),
                fmt17(s.label_noise),
                fmt17(s.utility_if),
                fmt17(s.utility_cos),
                fmt17(s.utility_rand),
                fmt17(s.realized_benefit),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_rank_distribution<W: Write>(w: W, rank: &RankDistribution) -> Result<(), MarketError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["rank", "index", "utility"])?;
    for row in &rank.rows {
        out.write_record([row.rank.to_string(), row.index.to_string(), fmt17(row.score)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_timings<W: Write>(w: W, rows: &[TimingRow]) -> Result<(), MarketError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "batch_size",
        "k",
        "mode",
        "plaintext_secs",
        "encrypted_secs",
        "per_sample_plaintext",
        "per_sample_encrypted",
        "per_sample_overhead",
    ])?;
    for r in rows {
        let mode = match r.mode {
            super::Mode::Plaintext => "plaintext",
            super::Mode::Encrypted => "encrypted",
        };
        out.write_record([
            r.batch_size.to_string(),
            r.k.to_string(),
            mode.to_string(),
            fmt17(r.plaintext_secs),
            fmt17(r.encrypted_secs),
            fmt17(r.per_sample_plaintext),
            fmt17(r.per_sample_encrypted),
            fmt17(r.per_sample_overhead),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Per-replication stage timings of a simulation run.
pub fn write_stage_timings<W: Write>(w: W, results: &[ReplicationResult]) -> Result<(), MarketError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["replication", "train_secs", "valuation_secs", "ground_truth_secs"])?;
    for r in results {
        out.write_record([
            r.replication.to_string(),
            fmt17(r.timings.train.as_secs_f64()),
            fmt17(r.timings.valuation.as_secs_f64()),
            fmt17(r.timings.ground_truth.as_secs_f64()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes replications.csv, summary.json, rank_distribution.csv and
/// timings.csv into `dir`.
pub fn write_market_outputs(
    dir: &Path,
    results: &[ReplicationResult],
    summary: &SummaryStats,
    rank: &RankDistribution,
) -> Result<(), MarketError> {
    fs::create_dir_all(dir)?;
    write_replications(fs::File::create(dir.join("replications.csv"))?, results)?;
    fs::write(dir.join("summary.json"), to_json_17(summary)?)?;
    write_rank_distribution(fs::File::create(dir.join("rank_distribution.csv"))?, rank)?;
    write_stage_timings(fs::File::create(dir.join("timings.csv"))?, results)?;
    Ok(())
}
