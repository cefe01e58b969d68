//! Report shapes and aggregation.
//!
//! JSON reports echo the complete resolved configuration and keep wall-clock
//! timings in a dedicated `timing` field so that everything else is
//! byte-reproducible for a fixed seed. Sweep outputs are CSV with a header
//! row and CRLF terminators.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

/// Wall-clock timings, excluded from the reproducibility contract.
#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub wall_s: f64,
}

/// Aggregate statistics over per-trial records. The standard error is the
/// sample standard deviation over sqrt(trials) and is only emitted for two
/// or more trials.
#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub trials: usize,
    pub mean: f64,
    pub std_error: Option<f64>,
    pub min: f64,
    pub max: f64,
}

pub fn aggregate(records: &[f64]) -> Aggregate {
    let n = records.len();
    assert!(n >= 1, "aggregate needs at least one record");
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for (i, &v) in records.iter().enumerate() {
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
        min = min.min(v);
        max = max.max(v);
    }
    let std_error = if n >= 2 {
        let var = m2 / (n - 1) as f64;
        Some((var / n as f64).sqrt())
    } else {
        None
    };
    Aggregate {
        trials: n,
        mean,
        std_error,
        min,
        max,
    }
}

/// Serializes a report as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report).context("serializing report")?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// CSV writer configured for RFC 4180: header row supplied by the caller,
/// CRLF record terminators.
pub fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(file))
}
