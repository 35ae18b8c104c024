//! Fixtures shared by the benchmarks.

use flexgt::engine::{self, AlgoConfig, NetworkState};
use flexgt::problem::{ProblemSpec, QuadraticProblem};
use flexgt::topology::{build_weight_matrix, TopologySpec, WeightMatrix};

/// A problem instance together with its mixing matrix.
pub struct Fixture {
    pub problem: QuadraticProblem,
    pub weights: WeightMatrix,
}

impl Fixture {
    /// The default 20-node, 10-dimensional instance on the exponential graph.
    pub fn standard() -> Self {
        Self::sized(20, 10)
    }

    /// A default-style instance with `n` nodes and dimension `p` on the
    /// exponential graph.
    pub fn sized(n: usize, p: usize) -> Self {
        let spec = ProblemSpec {
            n,
            p,
            ..ProblemSpec::standard()
        };
        Self {
            problem: QuadraticProblem::generate(&spec).expect("valid benchmark problem"),
            weights: build_weight_matrix(&TopologySpec::exponential(n)).expect("valid benchmark topology"),
        }
    }

    pub fn state(&self, cfg: &AlgoConfig) -> NetworkState {
        engine::init_state(&self.problem, cfg, &self.weights).expect("benchmark state")
    }
}
