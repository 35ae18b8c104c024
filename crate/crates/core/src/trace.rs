use serde::{Deserialize, Serialize};

use crate::analysis::RoundMetrics;
use crate::engine::Variant;

/// Full record of one run: identity, per-round metrics and outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub run_id: String,
    /// Display name, e.g. `DSGT` or `FlexGT`.
    pub algorithm: String,
    pub variant: Variant,
    pub d1: u32,
    pub d2: u32,
    pub gamma: f64,
    pub seed: u64,
    /// Hash of the resolved configuration that produced the run.
    pub fingerprint: String,
    /// Metrics of the initial state, before the first round.
    pub initial: RoundMetrics,
    /// One entry per completed round, indexed from 0.
    pub rounds: Vec<RoundMetrics>,
    pub diverged: bool,
    pub wall_time_secs: f64,
}

impl Trace {
    pub fn opt_gaps(&self) -> Vec<f64> {
        self.rounds.iter().map(|m| m.opt_gap).collect()
    }

    pub fn last(&self) -> Option<&RoundMetrics> {
        self.rounds.last()
    }
}
