//! Experiment configuration, validation and resolution of derived quantities.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::engine::{AlgoConfig, Variant};
use crate::problem::{ProblemSpec, QuadraticProblem};
use crate::topology::{build_weight_matrix, TopologySpec, WeightMatrix};

/// One algorithm entry of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub variant: Variant,
    pub d1: u32,
    pub d2: u32,
    /// Legend and run-id label; defaults to the conventional name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl AlgorithmSpec {
    pub fn new(variant: Variant, d1: u32, d2: u32) -> Self {
        Self {
            variant,
            d1,
            d2,
            label: None,
        }
    }

    pub fn label(&self) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None => {
                let name = self.variant.display_name(self.d1, self.d2);
                if (self.d1, self.d2) == (1, 1) {
                    name.to_string()
                } else {
                    format!("{name}({},{})", self.d1, self.d2)
                }
            }
        }
    }
}

/// How the stepsize is chosen for each `(d1, d2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepsizeRule {
    /// A fixed stepsize for every algorithm.
    Explicit { gamma: f64 },
    /// `γ = c(1 − ρ^{d1})² / (d2·L)`, with `L` the computed smoothness
    /// constant unless `l_override` is given.
    GapScaled {
        #[serde(default = "default_gap_c")]
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        l_override: Option<f64>,
    },
    /// `scale` times the largest stepsize admitted by the theory.
    TheoryMax {
        #[serde(default = "default_scale")]
        scale: f64,
    },
}

fn default_gap_c() -> f64 {
    10.0
}

fn default_scale() -> f64 {
    1.0
}

impl Default for StepsizeRule {
    fn default() -> Self {
        Self::GapScaled {
            c: 10.0,
            l_override: Some(1.0),
        }
    }
}

impl StepsizeRule {
    /// The smoothness constant used by the rule.
    pub fn l_cfg(&self, l_true: f64) -> f64 {
        match self {
            Self::GapScaled {
                l_override: Some(l), ..
            } => *l,
            _ => l_true,
        }
    }

    pub fn gamma(&self, mu: f64, l_true: f64, rho: f64, d1: u32, d2: u32) -> f64 {
        let gap = 1.0 - rho.powi(d1 as i32);
        match *self {
            Self::Explicit { gamma } => gamma,
            Self::GapScaled { c, .. } => c * gap * gap / (d2 as f64 * self.l_cfg(l_true)),
            Self::TheoryMax { scale } => {
                let tp = crate::analysis::TheoryParams {
                    mu,
                    l: l_true,
                    rho,
                    d1,
                    d2,
                    gamma: 0.0,
                    sigma: 0.0,
                    n: 1,
                    eps: 1.0,
                    w1: 0.0,
                    w2: 0.0,
                };
                scale * crate::analysis::max_stepsize(&tp)
            }
        }
    }
}

/// Weights of the communication and computation costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    /// Weight of communication steps.
    pub w1: f64,
    /// Weight of computation steps.
    pub w2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub topology: TopologySpec,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub stepsize: StepsizeRule,
    pub rounds: u64,
    pub seeds: Vec<u64>,
    pub eps: f64,
    pub weights: CostWeights,
    /// Default output directory; the command line takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

/// Every problem found in a configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    fn push(&mut self, msg: impl Into<String>) {
        self.violations.push(msg.into());
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s)", self.violations.len())?;
        for v in &self.violations {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

fn positive_finite(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl ExperimentConfig {
    pub fn standard() -> Self {
        Self {
            problem: ProblemSpec::standard(),
            topology: TopologySpec::exponential(20),
            algorithms: vec![
                AlgorithmSpec::new(Variant::FlexGt, 3, 2),
                AlgorithmSpec::new(Variant::Dfl, 3, 2),
                AlgorithmSpec::new(Variant::FlexGt, 1, 1),
                AlgorithmSpec::new(Variant::Dfl, 1, 1),
            ],
            stepsize: StepsizeRule::default(),
            rounds: 2000,
            seeds: vec![1, 2, 3],
            eps: 1e-5,
            weights: CostWeights { w1: 1.0, w2: 1.0 },
            out_dir: None,
        }
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut r = ValidationReport::default();
        if let Err(e) = self.problem.validate() {
            r.push(format!("problem: {e}"));
        }
        if let Err(e) = self.topology.validate() {
            r.push(format!("topology: {e}"));
        }
        if self.topology.n != self.problem.n {
            r.push(format!(
                "topology.n ({}) differs from problem.n ({})",
                self.topology.n, self.problem.n
            ));
        }
        if self.algorithms.is_empty() {
            r.push("algorithms: at least one algorithm is required");
        }
        let mut labels = BTreeSet::new();
        for (k, a) in self.algorithms.iter().enumerate() {
            if a.d1 == 0 {
                r.push(format!("algorithms[{k}].d1 must be at least 1"));
            }
            if a.d2 == 0 {
                r.push(format!("algorithms[{k}].d2 must be at least 1"));
            }
            let label = a.label();
            if label.is_empty() {
                r.push(format!("algorithms[{k}].label must not be empty"));
            }
            if !labels.insert(label.clone()) {
                r.push(format!("algorithms[{k}]: duplicate label `{label}`"));
            }
        }
        match self.stepsize {
            StepsizeRule::Explicit { gamma } if !positive_finite(gamma) => {
                r.push(format!("stepsize.gamma must be positive and finite, got {gamma}"))
            }
            StepsizeRule::GapScaled { c, l_override } => {
                if !positive_finite(c) {
                    r.push(format!("stepsize.c must be positive and finite, got {c}"));
                }
                if let Some(l) = l_override {
                    if !positive_finite(l) {
                        r.push(format!("stepsize.l_override must be positive and finite, got {l}"));
                    }
                }
            }
            StepsizeRule::TheoryMax { scale } if !positive_finite(scale) => {
                r.push(format!("stepsize.scale must be positive and finite, got {scale}"))
            }
            _ => {}
        }
        if self.rounds == 0 {
            r.push("rounds must be at least 1");
        }
        if self.seeds.is_empty() {
            r.push("seeds: at least one seed is required");
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            r.push("seeds must be distinct");
        }
        if !positive_finite(self.eps) {
            r.push(format!("eps must be positive and finite, got {}", self.eps));
        }
        let CostWeights { w1, w2 } = self.weights;
        if !(w1 >= 0.0 && w1.is_finite() && w2 >= 0.0 && w2.is_finite()) {
            r.push(format!("weights must be finite and nonnegative, got ({w1}, {w2})"));
        } else if w1 == 0.0 && w2 == 0.0 {
            r.push("weights: at least one of w1, w2 must be positive");
        }
        if r.is_empty() {
            Ok(())
        } else {
            Err(r)
        }
    }

    /// Validates, builds the problem and the mixing matrix, and fixes every
    /// derived quantity.
    pub fn resolve(&self) -> Result<Resolved, HarnessError> {
        self.validate().map_err(HarnessError::Validation)?;
        let problem = QuadraticProblem::generate(&self.problem)?;
        let weights = build_weight_matrix(&self.topology)?;
        let (mu, l_true) = problem.constants();
        let rho = weights.rho();
        let l_cfg = self.stepsize.l_cfg(l_true);
        let mut report = ValidationReport::default();
        let algorithms: Vec<ResolvedAlgorithm> = self
            .algorithms
            .iter()
            .map(|a| {
                let gamma = self.stepsize.gamma(mu, l_true, rho, a.d1, a.d2);
                if !positive_finite(gamma) {
                    report.push(format!("resolved stepsize for `{}` is {gamma}", a.label()));
                }
                ResolvedAlgorithm {
                    label: a.label(),
                    variant: a.variant,
                    d1: a.d1,
                    d2: a.d2,
                    gamma,
                }
            })
            .collect();
        if !report.is_empty() {
            return Err(HarnessError::Validation(report));
        }
        let mut config = self.clone();
        config.out_dir = None;
        let mut resolved = ResolvedConfig {
            config,
            rho,
            mu,
            l: l_true,
            l_cfg,
            algorithms,
            fingerprint: String::new(),
        };
        resolved.fingerprint = resolved.compute_fingerprint();
        Ok(Resolved {
            config: resolved,
            problem,
            weights,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedAlgorithm {
    pub label: String,
    pub variant: Variant,
    pub d1: u32,
    pub d2: u32,
    pub gamma: f64,
}

/// The configuration together with every quantity derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub config: ExperimentConfig,
    pub rho: f64,
    pub mu: f64,
    /// Computed smoothness constant.
    pub l: f64,
    /// Smoothness constant used by the stepsize rule.
    pub l_cfg: f64,
    pub algorithms: Vec<ResolvedAlgorithm>,
    pub fingerprint: String,
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    config: &'a ExperimentConfig,
    rho: f64,
    mu: f64,
    l: f64,
    l_cfg: f64,
    algorithms: &'a [ResolvedAlgorithm],
}

impl ResolvedConfig {
    /// SHA-256 of the canonical JSON of every resolved parameter.
    pub fn compute_fingerprint(&self) -> String {
        let input = FingerprintInput {
            config: &self.config,
            rho: self.rho,
            mu: self.mu,
            l: self.l,
            l_cfg: self.l_cfg,
            algorithms: &self.algorithms,
        };
        let bytes = serde_json::to_vec(&input).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn algo_config(&self, index: usize, seed: u64) -> AlgoConfig {
        let a = &self.algorithms[index];
        AlgoConfig {
            variant: a.variant,
            d1: a.d1,
            d2: a.d2,
            gamma: a.gamma,
            rounds: self.config.rounds,
            seed,
        }
    }
}

/// A resolved configuration with the objects it describes.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ResolvedConfig,
    pub problem: QuadraticProblem,
    pub weights: WeightMatrix,
}

/// Parses either a plain configuration or a previously exported resolved one.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(HarnessError::parse)?;
    let is_resolved = value
        .as_object()
        .is_some_and(|o| o.contains_key("fingerprint") && o.contains_key("config"));
    if is_resolved {
        let resolved: ResolvedConfig = serde_json::from_value(value).map_err(HarnessError::parse)?;
        Ok(resolved.config)
    } else {
        serde_json::from_value(value).map_err(HarnessError::parse)
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            problem: ProblemSpec {
                n: 6,
                p: 3,
                ..ProblemSpec::standard()
            },
            topology: TopologySpec::ring(6),
            rounds: 10,
            ..ExperimentConfig::standard()
        }
    }

    #[test]
    fn standard_config_is_valid_and_uses_unit_l_rule() {
        let cfg = ExperimentConfig::standard();
        cfg.validate().unwrap();
        let r = cfg.resolve().unwrap().config;
        assert_eq!(r.l_cfg, 1.0);
        assert!((r.rho - 25.0 / 81.0).abs() < 1e-12);
        let gap = 1.0 - r.rho.powi(3);
        assert!((r.algorithms[0].gamma - 10.0 * gap * gap / 2.0).abs() < 1e-15);
    }

    #[test]
    fn report_lists_every_violation() {
        let mut cfg = small();
        cfg.algorithms.clear();
        cfg.seeds = vec![4, 4];
        cfg.eps = 0.0;
        cfg.rounds = 0;
        cfg.topology = TopologySpec::ring(7);
        let report = cfg.validate().unwrap_err();
        assert_eq!(report.violations.len(), 5, "{report}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = serde_json::to_value(small()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(parse_config(&v.to_string()).is_err());
    }

    #[test]
    fn resolved_document_roundtrips_fingerprint() {
        let resolved = small().resolve().unwrap().config;
        let text = serde_json::to_string_pretty(&resolved).unwrap();
        let again = parse_config(&text).unwrap().resolve().unwrap().config;
        assert_eq!(again.fingerprint, resolved.fingerprint);
        assert_eq!(again, resolved);
    }

    #[test]
    fn fingerprint_tracks_resolved_parameters() {
        let base = small().resolve().unwrap().config.fingerprint;
        let mut cfg = small();
        cfg.out_dir = Some("elsewhere".into());
        assert_eq!(cfg.resolve().unwrap().config.fingerprint, base);
        cfg.rounds += 1;
        assert_ne!(cfg.resolve().unwrap().config.fingerprint, base);
        let mut cfg = small();
        cfg.stepsize = StepsizeRule::GapScaled {
            c: 10.0,
            l_override: None,
        };
        assert_ne!(cfg.resolve().unwrap().config.fingerprint, base);
    }

    #[test]
    fn stepsize_rules() {
        let rule = StepsizeRule::GapScaled {
            c: 1.0,
            l_override: None,
        };
        assert!((rule.gamma(0.1, 4.0, 0.5, 2, 3) - 0.75f64.powi(2) / 12.0).abs() < 1e-15);
        let explicit = StepsizeRule::Explicit { gamma: 0.3 };
        assert_eq!(explicit.gamma(0.1, 4.0, 0.5, 2, 3), 0.3);
        let theory = StepsizeRule::TheoryMax { scale: 0.5 };
        let full = StepsizeRule::TheoryMax { scale: 1.0 }.gamma(0.1, 1.0, 1.0 / 9.0, 1, 1);
        assert!((full - 64.0 / 81.0 / 51.0).abs() < 1e-12);
        assert_eq!(theory.gamma(0.1, 1.0, 1.0 / 9.0, 1, 1), 0.5 * full);
    }

    #[test]
    fn labels_default_to_conventional_names() {
        assert_eq!(AlgorithmSpec::new(Variant::FlexGt, 1, 1).label(), "DSGT");
        assert_eq!(AlgorithmSpec::new(Variant::FlexGt, 3, 2).label(), "FlexGT(3,2)");
        assert_eq!(AlgorithmSpec::new(Variant::Dfl, 1, 1).label(), "D-PSGD");
    }
}
