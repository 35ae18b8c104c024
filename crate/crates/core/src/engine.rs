//! Round execution for flexible gradient tracking and its baselines.
//!
//! A round performs `d2` local updates followed by `d1` gossip sweeps. For the
//! tracking variant each local update is
//!
//! ```text
//! X ← X − γY
//! G⁺ ← stochastic gradients at the new X
//! Y ← Y + G⁺ − G
//! G ← G⁺
//! ```
//!
//! and each sweep replaces `X` and `Y` by `WX` and `WY`. The cached gradients
//! `G` are never mixed and never re-sampled: the next local update subtracts
//! exactly the sample that was added. This keeps the average of the trackers
//! equal to the average of the cached gradients at all times.
//!
//! The non-tracking baseline runs `d2` local SGD steps and gossips `X` only.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, PeriodSnapshots, RoundMetrics, TheoryParams};
use crate::matrix::Mat;
use crate::problem::{ProblemError, QuadraticProblem};
use crate::rng::{stream, Purpose};
use crate::topology::WeightMatrix;
use crate::trace::Trace;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid algorithm setting `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("rounds must be at least 1")]
    NoRounds,
    #[error("dimension mismatch: problem has {problem} nodes, mixing matrix has {topology}")]
    DimensionMismatch { problem: usize, topology: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Gradient tracking with `d2` local updates and `d1` gossip sweeps.
    FlexGt,
    /// Local SGD with gossip on the iterates only.
    Dfl,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::FlexGt => "flexgt",
            Self::Dfl => "dfl",
        }
    }

    /// Conventional name of the `(d1, d2)` special case.
    pub fn display_name(self, d1: u32, d2: u32) -> &'static str {
        match (self, d1, d2) {
            (Self::FlexGt, 1, 1) => "DSGT",
            (Self::FlexGt, 1, _) => "LU-GT",
            (Self::FlexGt, _, _) => "FlexGT",
            (Self::Dfl, 1, 1) => "D-PSGD",
            (Self::Dfl, _, _) => "DFL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub variant: Variant,
    /// Gossip sweeps per round.
    pub d1: u32,
    /// Local updates per round.
    pub d2: u32,
    pub gamma: f64,
    pub rounds: u64,
    /// Seeds the initial iterates and the gradient noise.
    pub seed: u64,
}

impl AlgoConfig {
    pub fn flexgt(d1: u32, d2: u32, gamma: f64, rounds: u64, seed: u64) -> Self {
        Self {
            variant: Variant::FlexGt,
            d1,
            d2,
            gamma,
            rounds,
            seed,
        }
    }

    pub fn dfl(d1: u32, d2: u32, gamma: f64, rounds: u64, seed: u64) -> Self {
        Self {
            variant: Variant::Dfl,
            ..Self::flexgt(d1, d2, gamma, rounds, seed)
        }
    }

    pub fn is_tracking(&self) -> bool {
        self.variant == Variant::FlexGt
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.d1 == 0 {
            return Err(EngineError::Invalid {
                field: "d1",
                reason: "must be at least 1".into(),
            });
        }
        if self.d2 == 0 {
            return Err(EngineError::Invalid {
                field: "d2",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(EngineError::Invalid {
                field: "gamma",
                reason: format!("must be finite and nonnegative, got {}", self.gamma),
            });
        }
        Ok(())
    }
}

/// Stacked per-node state. Row `i` of each matrix belongs to node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub x: Mat,
    /// Gradient trackers; all zero for the non-tracking variant.
    pub y: Mat,
    /// Stochastic gradients most recently added into `y`.
    pub last_grad: Mat,
    /// Global inner-step counter.
    pub step: u64,
    /// Completed rounds.
    pub round: u64,
    pub grad_evals: u64,
    pub comm_steps: u64,
    scratch: Mat,
}

impl NetworkState {
    pub fn from_parts(x: Mat, y: Mat, last_grad: Mat) -> Self {
        let scratch = Mat::zeros(x.rows(), x.cols());
        Self {
            x,
            y,
            last_grad,
            step: 0,
            round: 0,
            grad_evals: 0,
            comm_steps: 0,
            scratch,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Hooks called by the engine after every inner step.
pub trait StepObserver {
    fn on_local_step(&mut self, _state: &NetworkState) {}
    fn on_gossip_step(&mut self, _state: &NetworkState) {}
    fn on_round_end(&mut self, _state: &NetworkState, _metrics: &RoundMetrics) {}
}

impl StepObserver for () {}

fn check_dims(prob: &QuadraticProblem, w: &WeightMatrix) -> Result<(), EngineError> {
    if prob.n() != w.n() {
        return Err(EngineError::DimensionMismatch {
            problem: prob.n(),
            topology: w.n(),
        });
    }
    Ok(())
}

/// Initial iterates uniform on `[0,1]^p`; trackers start at the step-0 samples.
pub fn init_state(
    prob: &QuadraticProblem,
    cfg: &AlgoConfig,
    w: &WeightMatrix,
) -> Result<NetworkState, EngineError> {
    check_dims(prob, w)?;
    cfg.validate()?;
    let (n, p) = (prob.n(), prob.p());
    let mut x = Mat::zeros(n, p);
    for i in 0..n {
        let mut rng = stream(cfg.seed, Purpose::InitialIterate, i as u64, 0);
        x.row_mut(i).iter_mut().for_each(|v| *v = rng.random::<f64>());
    }
    let mut last_grad = Mat::zeros(n, p);
    if cfg.is_tracking() {
        for i in 0..n {
            prob.noisy_gradient_into(i, x.row(i), 0, cfg.seed, last_grad.row_mut(i));
        }
    }
    let y = last_grad.clone();
    Ok(NetworkState::from_parts(x, y, last_grad))
}

pub fn local_phase(state: &mut NetworkState, prob: &QuadraticProblem, cfg: &AlgoConfig) {
    local_phase_observed(state, prob, cfg, &mut ());
}

pub fn local_phase_observed<O: StepObserver + ?Sized>(
    state: &mut NetworkState,
    prob: &QuadraticProblem,
    cfg: &AlgoConfig,
    obs: &mut O,
) {
    let n = prob.n();
    let gamma = cfg.gamma;
    let mut g = vec![0.0; prob.p()];
    for _ in 0..cfg.d2 {
        match cfg.variant {
            Variant::FlexGt => {
                for i in 0..n {
                    let (x, y) = (state.x.row_mut(i), state.y.row(i));
                    for (xc, yc) in x.iter_mut().zip(y) {
                        *xc = *xc - gamma * yc;
                    }
                }
                state.step += 1;
                for i in 0..n {
                    prob.noisy_gradient_into(i, state.x.row(i), state.step, cfg.seed, &mut g);
                    let last = state.last_grad.row_mut(i);
                    let y = state.y.row_mut(i);
                    for ((yc, lc), gc) in y.iter_mut().zip(last.iter_mut()).zip(&g) {
                        *yc = *yc + gc - *lc;
                        *lc = *gc;
                    }
                }
            }
            Variant::Dfl => {
                for i in 0..n {
                    prob.noisy_gradient_into(i, state.x.row(i), state.step, cfg.seed, &mut g);
                    for (xc, gc) in state.x.row_mut(i).iter_mut().zip(&g) {
                        *xc = *xc - gamma * gc;
                    }
                }
                state.step += 1;
            }
        }
        state.grad_evals += n as u64;
        obs.on_local_step(state);
    }
}

pub fn communication_phase(state: &mut NetworkState, w: &WeightMatrix, cfg: &AlgoConfig) {
    communication_phase_observed(state, w, cfg, &mut ());
}

pub fn communication_phase_observed<O: StepObserver + ?Sized>(
    state: &mut NetworkState,
    w: &WeightMatrix,
    cfg: &AlgoConfig,
    obs: &mut O,
) {
    for _ in 0..cfg.d1 {
        w.mix_once_into(&state.x, &mut state.scratch);
        std::mem::swap(&mut state.x, &mut state.scratch);
        if cfg.is_tracking() {
            w.mix_once_into(&state.y, &mut state.scratch);
            std::mem::swap(&mut state.y, &mut state.scratch);
        }
        state.comm_steps += 1;
        obs.on_gossip_step(state);
    }
}

pub fn run_round(state: &mut NetworkState, prob: &QuadraticProblem, cfg: &AlgoConfig, w: &WeightMatrix) {
    run_round_observed(state, prob, cfg, w, &mut ());
}

pub fn run_round_observed<O: StepObserver + ?Sized>(
    state: &mut NetworkState,
    prob: &QuadraticProblem,
    cfg: &AlgoConfig,
    w: &WeightMatrix,
    obs: &mut O,
) {
    local_phase_observed(state, prob, cfg, obs);
    communication_phase_observed(state, w, cfg, obs);
    state.round += 1;
}

/// Forwards to the caller's observer while keeping the in-round iterates.
struct Recorder<'a, O: ?Sized> {
    inner: &'a mut O,
    keep: usize,
    snaps: Vec<Mat>,
}

impl<O: StepObserver + ?Sized> StepObserver for Recorder<'_, O> {
    fn on_local_step(&mut self, state: &NetworkState) {
        if self.snaps.len() < self.keep {
            self.snaps.push(state.x.clone());
        }
        self.inner.on_local_step(state);
    }

    fn on_gossip_step(&mut self, state: &NetworkState) {
        self.inner.on_gossip_step(state);
    }
}

/// Theory parameters matching a run, with `eps` and weights left at zero.
pub fn theory_params_for(prob: &QuadraticProblem, cfg: &AlgoConfig, w: &WeightMatrix) -> TheoryParams {
    let (mu, l) = prob.constants();
    TheoryParams {
        mu,
        l,
        rho: w.rho(),
        d1: cfg.d1,
        d2: cfg.d2,
        gamma: cfg.gamma,
        sigma: prob.sigma(),
        n: prob.n(),
        eps: 0.0,
        w1: 0.0,
        w2: 0.0,
    }
}

pub fn run(prob: &QuadraticProblem, cfg: &AlgoConfig, w: &WeightMatrix) -> Result<Trace, EngineError> {
    run_observed(prob, cfg, w, &mut ())
}

/// Initializes, then executes `cfg.rounds` rounds and records metrics after each.
///
/// A non-finite iterate stops the run; the returned trace then has
/// `diverged = true` and holds only the finite rounds.
pub fn run_observed<O: StepObserver + ?Sized>(
    prob: &QuadraticProblem,
    cfg: &AlgoConfig,
    w: &WeightMatrix,
    obs: &mut O,
) -> Result<Trace, EngineError> {
    if cfg.rounds == 0 {
        return Err(EngineError::NoRounds);
    }
    let started = Instant::now();
    let mut state = init_state(prob, cfg, w)?;
    let opt = prob.optimum()?;
    let tp = theory_params_for(prob, cfg, w);
    let initial = analysis::measure_round(&state, prob, &opt, &tp, &PeriodSnapshots::default())?;

    let mut rounds = Vec::with_capacity(cfg.rounds as usize);
    let mut diverged = false;
    let keep = cfg.d2.saturating_sub(1) as usize;
    for _ in 0..cfg.rounds {
        let start_mean = state.x.col_means();
        let mut recorder = Recorder {
            inner: &mut *obs,
            keep,
            snaps: Vec::with_capacity(keep),
        };
        run_round_observed(&mut state, prob, cfg, w, &mut recorder);
        let inner = recorder.snaps;
        if !state.is_finite() {
            diverged = true;
            break;
        }
        let period = PeriodSnapshots { start_mean, inner };
        let metrics = analysis::measure_round(&state, prob, &opt, &tp, &period)?;
        if !metrics.lyapunov.is_finite() {
            diverged = true;
            break;
        }
        obs.on_round_end(&state, &metrics);
        rounds.push(metrics);
    }

    Ok(Trace {
        run_id: String::new(),
        algorithm: cfg.variant.display_name(cfg.d1, cfg.d2).to_string(),
        variant: cfg.variant,
        d1: cfg.d1,
        d2: cfg.d2,
        gamma: cfg.gamma,
        seed: cfg.seed,
        fingerprint: String::new(),
        initial,
        rounds,
        diverged,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}
