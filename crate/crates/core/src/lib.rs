//! Decentralized stochastic gradient tracking with flexible communication and
//! computation: topologies, synthetic quadratic problems, the round engine,
//! analysis of rates and trade-offs, and the experiment harness.

pub mod analysis;
pub mod engine;
pub mod harness;
pub mod matrix;
pub mod problem;
pub mod rng;
pub mod topology;
pub mod trace;

pub use analysis::{RoundMetrics, TheoryParams};
pub use engine::{AlgoConfig, EngineError, NetworkState, StepObserver, Variant};
pub use matrix::Mat;
pub use problem::{ProblemError, ProblemSpec, QuadraticProblem};
pub use topology::{TopologyError, TopologyKind, TopologySpec, WeightMatrix};
pub use trace::Trace;
