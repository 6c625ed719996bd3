use serde::Serialize;

use crate::dp::lower_median;
use crate::engine::NormRecord;
use crate::error::{Error, Result};

pub const HISTOGRAM_BINS: usize = 20;

/// Pre-clip update norm statistics of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    pub mean: f64,
    pub median: f64,
    /// Shared edges, `HISTOGRAM_BINS + 1` values from 0 to the common maximum.
    pub edges: Vec<f64>,
    /// Histogram over all rounds.
    pub histogram: Vec<u64>,
    /// `(round, histogram)` per round; each sums to the clients of that round.
    pub per_round: Vec<(usize, Vec<u64>)>,
}

pub fn histogram_edges(max: f64) -> Vec<f64> {
    (0..=HISTOGRAM_BINS).map(|i| max * i as f64 / HISTOGRAM_BINS as f64).collect()
}

fn bin_of(value: f64, max: f64) -> usize {
    if !(max > 0.0) {
        return 0;
    }
    ((value / max * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1)
}

/// Reports for several runs over one set of bin edges spanning `[0, max]`,
/// where `max` is the largest norm across all runs.
pub fn norm_reports(runs: &[&[NormRecord]]) -> Result<Vec<NormReport>> {
    if runs.is_empty() || runs.iter().any(|r| r.is_empty()) {
        return Err(Error::config("norm report needs at least one pre-clip norm per run"));
    }
    let max = runs.iter().flat_map(|r| r.iter()).map(|n| n.preclip_norm).fold(0.0, f64::max);
    let edges = histogram_edges(max);
    Ok(runs
        .iter()
        .map(|records| {
            let values: Vec<f64> = records.iter().map(|n| n.preclip_norm).collect();
            let mut histogram = vec![0u64; HISTOGRAM_BINS];
            let mut per_round: Vec<(usize, Vec<u64>)> = Vec::new();
            for rec in records.iter() {
                let bin = bin_of(rec.preclip_norm, max);
                histogram[bin] += 1;
                match per_round.last_mut() {
                    Some((r, h)) if *r == rec.round => h[bin] += 1,
                    _ => {
                        let mut h = vec![0u64; HISTOGRAM_BINS];
                        h[bin] += 1;
                        per_round.push((rec.round, h));
                    }
                }
            }
            NormReport {
                mean: values.iter().sum::<f64>() / values.len() as f64,
                median: lower_median(&values),
                edges: edges.clone(),
                histogram,
                per_round,
            }
        })
        .collect())
}

pub fn norm_report(records: &[NormRecord]) -> Result<NormReport> {
    Ok(norm_reports(&[records])?.remove(0))
}
