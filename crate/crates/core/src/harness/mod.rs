//! Configuration-driven experiments: single runs, multi-seed comparisons and
//! `(d1, d2)` sweeps, persisted as CSV, JSON and SVG.

pub mod config;
pub mod experiment;
pub mod export;
pub mod svg;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::EngineError;
use crate::problem::ProblemError;
use crate::topology::TopologyError;

pub use config::{
    load_config, parse_config, AlgorithmSpec, CostWeights, ExperimentConfig, Resolved, ResolvedAlgorithm,
    ResolvedConfig, StepsizeRule, ValidationReport,
};
pub use experiment::{
    run_comparison, run_experiment, run_sweep, write_comparison_outputs, write_run_outputs, write_sweep_outputs,
    AveragedCurve, Comparison, CostAxis, SweepCell, SweepResult,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Validation(ValidationReport),
    #[error("cannot parse configuration: {0}")]
    Parse(#[source] serde_json::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("nothing to plot: {0}")]
    EmptyPlot(&'static str),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn parse(e: serde_json::Error) -> Self {
        Self::Parse(e)
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::Validation(ValidationReport {
            violations: vec![msg.into()],
        })
    }

    /// True for failures of the file system rather than of the inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Self::Io { .. } | Self::Problem(ProblemError::Io { .. }))
    }
}
