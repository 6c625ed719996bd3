//! Machine-readable run outputs: `metrics.csv`, `norms.csv`,
//! `landscape.csv` and `summary.json`.
//!
//! Floats are written in Rust's shortest round-trip form, so output bytes are
//! a pure function of the values. Missing values are empty fields.

use std::fmt::Write;

use serde::Serialize;

use crate::accountant::PrivacyLedger;
use crate::engine::{MetricsRow, NormRecord, RunArtifacts, RunConfig};
use crate::probes::{LandscapeGrid, SharpnessReport};

pub const METRICS_HEADER: &str =
    "round,train_loss,test_acc,grad_norm,mean_preclip_norm,median_preclip_norm,clip_C,epsilon";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.round,
            r.train_loss,
            r.test_acc,
            r.grad_norm,
            opt(r.mean_preclip_norm),
            opt(r.median_preclip_norm),
            opt(r.clip_c),
            r.epsilon
        );
    }
    out
}

pub fn norms_csv(records: &[NormRecord]) -> String {
    let mut out = String::from("round,client,preclip_norm\n");
    for n in records {
        let _ = writeln!(out, "{},{},{}", n.round, n.client, n.preclip_norm);
    }
    out
}

/// Header row `a,<b offsets...>`, then one row `a_i,<losses...>` per offset.
pub fn landscape_csv(grid: &LandscapeGrid) -> String {
    let mut out = String::from("a");
    for b in &grid.offsets_b {
        let _ = write!(out, ",{b}");
    }
    out.push('\n');
    for (a, row) in grid.offsets_a.iter().zip(&grid.losses) {
        let _ = write!(out, "{a}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub algorithm: &'static str,
    pub rounds: usize,
    pub final_metrics: &'a MetricsRow,
    pub mean_preclip_norm: Option<f64>,
    pub partition_attempt: u64,
    pub ledger: &'a PrivacyLedger,
    pub caveats: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sharpness: Option<SharpnessReport>,
    pub config: &'a RunConfig,
}

impl<'a> Summary<'a> {
    pub fn new(artifacts: &'a RunArtifacts, sharpness: Option<SharpnessReport>) -> Self {
        Self {
            algorithm: artifacts.config.algo.name(),
            rounds: artifacts.config.train.rounds,
            final_metrics: artifacts.final_metrics(),
            mean_preclip_norm: artifacts.mean_preclip_norm(),
            partition_attempt: artifacts.partition_attempt,
            ledger: &artifacts.final_state.ledger,
            caveats: &artifacts.final_state.ledger.caveats,
            sharpness,
            config: &artifacts.config,
        }
    }

    /// Pretty JSON; an unbounded epsilon is written as `"unbounded"`.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("summary serializes");
        serde_json::to_string_pretty(&value).expect("json value prints")
    }
}
