//! Per-round diagnostics and the closed-form theory evaluators.
//!
//! The evaluators are direct transcriptions of the convergence theory for the
//! flexible gradient-tracking method: the admissible stepsize, the per-round
//! contraction factor of the Lyapunov function
//! `V = ‖x̄ − x*‖² + c1‖X − 1x̄‖² + c2‖Y − 1ȳ‖²`, the noise constant `M_σ`, and
//! the computation/communication complexity expressions. Complexities are
//! evaluated with every hidden constant and logarithmic factor set to one, so
//! they are meaningful as trade-off surfaces and not as step-count predictions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::NetworkState;
use crate::matrix::{dist_sq, Mat};
use crate::problem::{Optimum, QuadraticProblem};
use crate::trace::Trace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("no spectral gap: rho^d1 = {0} is not below 1")]
    NoSpectralGap(f64),
}

/// Inputs shared by every theory evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub mu: f64,
    pub l: f64,
    pub rho: f64,
    pub d1: u32,
    pub d2: u32,
    pub gamma: f64,
    pub sigma: f64,
    pub n: usize,
    pub eps: f64,
    pub w1: f64,
    pub w2: f64,
}

impl TheoryParams {
    /// `rho^{d1}`, the contraction of one round of gossip.
    pub fn rho_d1(&self) -> f64 {
        self.rho.powi(self.d1 as i32)
    }

    pub fn with_frequencies(mut self, d1: u32, d2: u32) -> Self {
        self.d1 = d1;
        self.d2 = d2;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }
}

/// Diagnostics recorded at the end of one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// Zero-based index of the round these metrics close.
    pub round: u64,
    pub opt_gap: f64,
    pub f_gap: f64,
    pub consensus_err: f64,
    pub tracking_err: f64,
    pub lyapunov: f64,
    pub client_div: f64,
    pub grad_evals: u64,
    pub comm_steps: u64,
}

/// Lyapunov weights `(c1, c2)`.
pub fn lyapunov_coeffs(tp: &TheoryParams) -> Result<(f64, f64), AnalysisError> {
    let r = tp.rho_d1();
    if !(r < 1.0) {
        return Err(AnalysisError::NoSpectralGap(r));
    }
    let gap = 1.0 - r;
    let d2 = tp.d2 as f64;
    let n = tp.n as f64;
    let c1 = 192.0 * d2 * tp.gamma * tp.l / (n * gap);
    let c2 = 9312.0 * d2.powi(3) * tp.gamma.powi(3) * tp.l / (n * gap.powi(3));
    Ok((c1, c2))
}

pub fn lyapunov_value(
    state: &NetworkState,
    opt: &Optimum,
    tp: &TheoryParams,
) -> Result<f64, AnalysisError> {
    let (c1, c2) = lyapunov_coeffs(tp)?;
    let xbar = state.x.col_means();
    Ok(dist_sq(&xbar, &opt.x) + c1 * state.x.deviation_sq() + c2 * state.y.deviation_sq())
}

/// Largest stepsize admitted by the convergence theorem.
///
/// Terms whose denominator contains `rho^{d1} = 0` are treated as `+∞`.
pub fn max_stepsize(tp: &TheoryParams) -> f64 {
    let r = tp.rho_d1();
    let d2l = tp.d2 as f64 * tp.l;
    let first = 1.0 / (10.0 * d2l);
    if r <= 0.0 {
        return first;
    }
    let second = (1.0 - r) / (37.0 * d2l * r.powf(0.25));
    let third = (1.0 - r).powi(2) / (153.0 * d2l * r.sqrt());
    first.min(second).min(third)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contraction {
    pub factor: f64,
    /// Set when `gamma` exceeds [`max_stepsize`]; the factor is then not backed by the theory.
    pub exceeds_bound: bool,
}

/// `1 − min{μ d2 γ / 4, (1 − rho^{d1}) / 8}`.
pub fn contraction_factor(tp: &TheoryParams) -> Contraction {
    let r = tp.rho_d1();
    let rate = (tp.mu * tp.d2 as f64 * tp.gamma / 4.0).min((1.0 - r) / 8.0);
    Contraction {
        factor: 1.0 - rate,
        exceeds_bound: tp.gamma > max_stepsize(tp),
    }
}

pub fn m_sigma(tp: &TheoryParams) -> f64 {
    let r = tp.rho_d1();
    let s2 = tp.sigma * tp.sigma;
    36.0 * (1.0 - r).powi(3) * s2 + 3456.0 * (1.0 - r) * r * s2 + 55872.0 * r * s2
}

/// Additive noise per round in the Lyapunov recursion:
/// `d2γ²σ²/n + d2³γ³L·M_σ/(1 − rho^{d1})³`.
pub fn noise_per_round(tp: &TheoryParams) -> f64 {
    let d2 = tp.d2 as f64;
    let gap = 1.0 - tp.rho_d1();
    d2 * tp.gamma.powi(2) * tp.sigma.powi(2) / tp.n as f64
        + d2.powi(3) * tp.gamma.powi(3) * tp.l * m_sigma(tp) / gap.powi(3)
}

/// Fixed point of `V ← factor·V + noise`.
pub fn steady_state_bound(tp: &TheoryParams) -> f64 {
    noise_per_round(tp) / (1.0 - contraction_factor(tp).factor)
}

fn noise_term(tp: &TheoryParams, scale: f64) -> f64 {
    let r = tp.rho_d1();
    let gap = 1.0 - r;
    scale * (tp.l * r * tp.sigma.powi(2)).sqrt() / (tp.mu.powi(3) * gap.powi(3) * tp.eps).sqrt()
}

/// Computation steps to reach accuracy `eps`.
pub fn comp_complexity(tp: &TheoryParams) -> f64 {
    let gap = 1.0 - tp.rho_d1();
    let d2 = tp.d2 as f64;
    d2 * tp.l / (gap.powi(2) * tp.mu)
        + tp.sigma.powi(2) / (tp.mu.powi(2) * tp.n as f64 * tp.eps)
        + noise_term(tp, d2)
}

/// Communication steps to reach accuracy `eps`.
pub fn comm_complexity(tp: &TheoryParams) -> f64 {
    let gap = 1.0 - tp.rho_d1();
    let d1 = tp.d1 as f64;
    let d2 = tp.d2 as f64;
    d1 * tp.l / (gap.powi(2) * tp.mu)
        + d1 * tp.sigma.powi(2) / (tp.mu.powi(2) * tp.n as f64 * d2 * tp.eps)
        + noise_term(tp, d1)
}

/// `ω1·comm + ω2·comp`.
pub fn weighted_cost(tp: &TheoryParams) -> f64 {
    tp.w1 * comm_complexity(tp) + tp.w2 * comp_complexity(tp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub d1: u32,
    pub d2: u32,
    pub comp: f64,
    pub comm: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffGrid {
    pub d1_max: u32,
    pub d2_max: u32,
    /// Cells in row-major order: `d1` outer, `d2` inner.
    pub cells: Vec<GridCell>,
    pub best: GridCell,
}

/// Exhaustive search over `(d1, d2) ∈ [1, d1_max] × [1, d2_max]`.
/// Ties go to the smaller `d1`, then the smaller `d2`.
pub fn minimize_weighted_cost(tp: &TheoryParams, d1_max: u32, d2_max: u32) -> TradeoffGrid {
    assert!(d1_max >= 1 && d2_max >= 1, "grid bounds must be at least 1");
    let mut cells = Vec::with_capacity((d1_max * d2_max) as usize);
    for d1 in 1..=d1_max {
        for d2 in 1..=d2_max {
            let cell_tp = tp.with_frequencies(d1, d2);
            cells.push(GridCell {
                d1,
                d2,
                comp: comp_complexity(&cell_tp),
                comm: comm_complexity(&cell_tp),
                cost: weighted_cost(&cell_tp),
            });
        }
    }
    let best = cells
        .iter()
        .copied()
        .reduce(|best, c| if c.cost < best.cost { c } else { best })
        .expect("grid is non-empty");
    TradeoffGrid {
        d1_max,
        d2_max,
        cells,
        best,
    }
}

/// Iterates recorded inside one round, used for the client-divergence diagnostic.
#[derive(Debug, Clone, Default)]
pub struct PeriodSnapshots {
    /// `x̄` at the start of the round.
    pub start_mean: Vec<f64>,
    /// `X` after each local step except the last one.
    pub inner: Vec<Mat>,
}

pub fn measure_round(
    state: &NetworkState,
    prob: &QuadraticProblem,
    opt: &Optimum,
    tp: &TheoryParams,
    period: &PeriodSnapshots,
) -> Result<RoundMetrics, AnalysisError> {
    let (c1, c2) = lyapunov_coeffs(tp)?;
    let xbar = state.x.col_means();
    let opt_gap = dist_sq(&xbar, &opt.x);
    let consensus_err = state.x.deviation_sq();
    let tracking_err = state.y.deviation_sq();
    let client_div = period
        .inner
        .iter()
        .map(|x| x.deviation_from_sq(&period.start_mean))
        .fold(0.0, f64::max);
    Ok(RoundMetrics {
        round: state.round.saturating_sub(1),
        opt_gap,
        f_gap: prob.value(&xbar) - opt.value,
        consensus_err,
        tracking_err,
        lyapunov: opt_gap + c1 * consensus_err + c2 * tracking_err,
        client_div,
        grad_evals: state.grad_evals,
        comm_steps: state.comm_steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMetric {
    #[default]
    OptGap,
    FGap,
}

impl AccuracyMetric {
    pub fn of(self, m: &RoundMetrics) -> f64 {
        match self {
            Self::OptGap => m.opt_gap,
            Self::FGap => m.f_gap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reached {
    pub round: u64,
    pub grad_evals: u64,
    pub comm_steps: u64,
}

/// First recorded round from which the metric stays at or below `eps`.
/// `None` means the accuracy was never reached (or the run diverged).
pub fn steps_to_accuracy(trace: &Trace, eps: f64, metric: AccuracyMetric) -> Option<Reached> {
    if trace.diverged || trace.rounds.is_empty() {
        return None;
    }
    let first_ok = match trace.rounds.iter().rposition(|m| !(metric.of(m) <= eps)) {
        Some(last_bad) => last_bad + 1,
        None => 0,
    };
    trace.rounds.get(first_ok).map(|m| Reached {
        round: m.round,
        grad_evals: m.grad_evals,
        comm_steps: m.comm_steps,
    })
}

/// Mean over the trailing `fraction` of the values (at least one value).
pub fn tail_mean(values: &[f64], fraction: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let take = ((values.len() as f64 * fraction).ceil() as usize).clamp(1, values.len());
    let tail = &values[values.len() - take..];
    tail.iter().sum::<f64>() / take as f64
}

/// Right-hand sides of the per-round error recursions, evaluated on the
/// metrics of the previous round. At `σ = 0` these hold path-wise.
pub mod bounds {
    use super::{RoundMetrics, TheoryParams};

    fn common(tp: &TheoryParams) -> (f64, f64, f64, f64) {
        let r = tp.rho_d1();
        (r, tp.d2 as f64, tp.n as f64, tp.sigma * tp.sigma)
    }

    /// Next-round optimality gap.
    pub fn optimality_gap(tp: &TheoryParams, prev: &RoundMetrics) -> f64 {
        let (_, d2, n, s2) = common(tp);
        let (g, l) = (tp.gamma, tp.l);
        (1.0 - d2 * tp.mu * g / 2.0) * prev.opt_gap
            + 12.0 * d2 * g * l / n * prev.consensus_err
            + 12.0 * d2.powi(3) * g.powi(3) * l / n * prev.tracking_err
            - d2 * g * prev.f_gap
            + d2 * g * g * s2 / n
            + 36.0 * d2.powi(3) * g.powi(3) * l * s2
    }

    /// Next-round consensus error.
    pub fn consensus_error(tp: &TheoryParams, prev: &RoundMetrics) -> f64 {
        let (r, d2, n, s2) = common(tp);
        let (g, l) = (tp.gamma, tp.l);
        let gap = 1.0 - r;
        (3.0 + r) / 4.0 * prev.consensus_err
            + 192.0 * n * d2.powi(4) * g.powi(4) * l.powi(3) * r / gap * prev.f_gap
            + 6.0 * d2 * d2 * g * g * r / gap * prev.tracking_err
            + 18.0 * n * d2 * d2 * g * g * r / gap * s2
    }

    /// Next-round tracking error.
    pub fn tracking_error(tp: &TheoryParams, prev: &RoundMetrics) -> f64 {
        let (r, d2, n, s2) = common(tp);
        let (g, l) = (tp.gamma, tp.l);
        let gap = 1.0 - r;
        (3.0 + r) / 4.0 * prev.tracking_err
            + 30.0 * r * l * l / gap * prev.consensus_err
            + 96.0 * n * r * d2 * d2 * g * g * l.powi(3) / gap * prev.f_gap
            + 6.0 * n * r * s2
    }

    /// Within-round drift `max_t ‖X_{d2k+t} − 1x̄_{d2k}‖²`, driven by the
    /// state at the start of the round (`d2 ≥ 2`).
    pub fn client_divergence(tp: &TheoryParams, start: &RoundMetrics) -> f64 {
        let (_, d2, n, s2) = common(tp);
        let (g, l) = (tp.gamma, tp.l);
        4.0 * start.consensus_err
            + 4.0 * d2 * d2 * g * g * start.tracking_err
            + 16.0 * n * d2 * d2 * g * g * l * start.f_gap
            + d2 * d2 * g * g * (4.0 * s2 + 8.0 * n * s2)
    }
}
