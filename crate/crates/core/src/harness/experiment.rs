//! Experiment drivers. Work items (algorithm × seed, or grid cell × seed) run
//! on a rayon pool; results are collected in configuration order, so output
//! never depends on completion order or on the number of threads.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CostWeights, Resolved, ResolvedConfig};
use super::export::{self, ensure_dir, write_bytes, write_json};
use super::svg::{self, Heatmap, LineChart, Plot, Series};
use super::HarnessError;
use crate::analysis::{self, GridCell, Reached, TheoryParams, TradeoffGrid};
use crate::engine::{self, AlgoConfig, Variant};
use crate::trace::Trace;

/// Fraction of rounds averaged for steady-state summaries.
pub const STEADY_TAIL: f64 = 0.2;

/// Worker count from `FLEXGT_THREADS`; unset, empty or `0` means automatic.
pub fn thread_count() -> Result<usize, HarnessError> {
    match std::env::var("FLEXGT_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map_err(|_| HarnessError::invalid(format!("FLEXGT_THREADS must be a nonnegative integer, got `{v}`"))),
        _ => Ok(0),
    }
}

fn pool() -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| HarnessError::invalid(format!("cannot start worker pool: {e}")))
}

/// Runs `cfgs` in parallel and returns the traces in input order.
fn run_all(res: &Resolved, cfgs: &[AlgoConfig]) -> Result<Vec<Trace>, HarnessError> {
    let traces = pool()?.install(|| {
        cfgs.par_iter()
            .map(|cfg| engine::run(&res.problem, cfg, &res.weights))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(traces)
}

pub fn run_id(algorithm_index: usize, label: &str, seed: u64) -> String {
    format!("{algorithm_index:02}-{label}-seed{seed}")
}

/// One trace per algorithm × seed, ordered by algorithm then seed as listed
/// in the configuration.
pub fn run_experiment(res: &Resolved) -> Result<Vec<Trace>, HarnessError> {
    let rc = &res.config;
    let mut ids = Vec::new();
    let mut cfgs = Vec::new();
    for (ai, a) in rc.algorithms.iter().enumerate() {
        for &seed in &rc.config.seeds {
            ids.push((run_id(ai, &a.label, seed), a.label.clone()));
            cfgs.push(rc.algo_config(ai, seed));
        }
    }
    let mut traces = run_all(res, &cfgs)?;
    for (t, (id, label)) in traces.iter_mut().zip(ids) {
        t.run_id = id;
        t.algorithm = label;
        t.fingerprint = rc.fingerprint.clone();
    }
    Ok(traces)
}

pub fn any_diverged(traces: &[Trace]) -> bool {
    traces.iter().any(|t| t.diverged)
}

/// Per-run outcome without timing, so that it is reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub algorithm: String,
    pub variant: Variant,
    pub d1: u32,
    pub d2: u32,
    pub gamma: f64,
    pub seed: u64,
    pub rounds_completed: usize,
    pub diverged: bool,
    pub final_opt_gap: Option<f64>,
    pub steady_opt_gap: Option<f64>,
}

pub fn summarize(t: &Trace) -> RunSummary {
    let gaps = t.opt_gaps();
    RunSummary {
        run_id: t.run_id.clone(),
        algorithm: t.algorithm.clone(),
        variant: t.variant,
        d1: t.d1,
        d2: t.d2,
        gamma: t.gamma,
        seed: t.seed,
        rounds_completed: t.rounds.len(),
        diverged: t.diverged,
        final_opt_gap: gaps.last().copied(),
        steady_opt_gap: (!gaps.is_empty()).then(|| analysis::tail_mean(&gaps, STEADY_TAIL)),
    }
}

/// `config.resolved.json`, `problem.csv`, `traces.csv` and `summary.json`.
pub fn write_run_outputs(dir: &Path, res: &Resolved, traces: &[Trace]) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    write_json(&res.config, &dir.join("config.resolved.json"))?;
    res.problem.write_csv(&dir.join("problem.csv"))?;
    export::write_traces_csv(traces, &dir.join("traces.csv"))?;
    let summaries: Vec<_> = traces.iter().map(summarize).collect();
    write_json(&summaries, &dir.join("summary.json"))
}

/// Seed-averaged optimality gap of one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedCurve {
    pub label: String,
    pub variant: Variant,
    pub d1: u32,
    pub d2: u32,
    pub gamma: f64,
    pub seeds: usize,
    pub diverged_seeds: usize,
    pub grad_evals: Vec<u64>,
    pub comm_steps: Vec<u64>,
    /// Arithmetic mean over seeds, per round, up to the shortest run.
    pub mean_opt_gap: Vec<f64>,
}

impl AveragedCurve {
    pub fn from_traces(traces: &[&Trace]) -> Option<Self> {
        let first = traces.first()?;
        let len = traces.iter().map(|t| t.rounds.len()).min().unwrap_or(0);
        let mean_opt_gap = (0..len)
            .map(|k| traces.iter().map(|t| t.rounds[k].opt_gap).sum::<f64>() / traces.len() as f64)
            .collect();
        Some(Self {
            label: first.algorithm.clone(),
            variant: first.variant,
            d1: first.d1,
            d2: first.d2,
            gamma: first.gamma,
            seeds: traces.len(),
            diverged_seeds: traces.iter().filter(|t| t.diverged).count(),
            grad_evals: first.rounds[..len].iter().map(|m| m.grad_evals).collect(),
            comm_steps: first.rounds[..len].iter().map(|m| m.comm_steps).collect(),
            mean_opt_gap,
        })
    }

    pub fn steady_state(&self) -> f64 {
        analysis::tail_mean(&self.mean_opt_gap, STEADY_TAIL)
    }

    /// First round from which the averaged gap stays at or below `eps`.
    pub fn reached(&self, eps: f64) -> Option<Reached> {
        if self.diverged_seeds > 0 || self.mean_opt_gap.is_empty() {
            return None;
        }
        let k = match self.mean_opt_gap.iter().rposition(|g| !(*g <= eps)) {
            Some(bad) => bad + 1,
            None => 0,
        };
        (k < self.mean_opt_gap.len()).then(|| Reached {
            round: k as u64,
            grad_evals: self.grad_evals[k],
            comm_steps: self.comm_steps[k],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub label: String,
    pub gamma: f64,
    pub seeds: usize,
    pub diverged_seeds: usize,
    pub final_mean_opt_gap: Option<f64>,
    pub steady_mean_opt_gap: Option<f64>,
    pub reached_eps: Option<Reached>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub traces: Vec<Trace>,
    pub curves: Vec<AveragedCurve>,
}

impl Comparison {
    pub fn summaries(&self, eps: f64) -> Vec<CurveSummary> {
        self.curves
            .iter()
            .map(|c| CurveSummary {
                label: c.label.clone(),
                gamma: c.gamma,
                seeds: c.seeds,
                diverged_seeds: c.diverged_seeds,
                final_mean_opt_gap: c.mean_opt_gap.last().copied(),
                steady_mean_opt_gap: (!c.mean_opt_gap.is_empty()).then(|| c.steady_state()),
                reached_eps: c.reached(eps),
            })
            .collect()
    }

    pub fn chart(&self, x_axis: CostAxis) -> LineChart {
        let series = self
            .curves
            .iter()
            .map(|c| {
                let xs: &[u64] = match x_axis {
                    CostAxis::GradEvals => &c.grad_evals,
                    CostAxis::CommSteps => &c.comm_steps,
                };
                Series {
                    label: c.label.clone(),
                    points: xs.iter().zip(&c.mean_opt_gap).map(|(&x, &y)| (x as f64, y)).collect(),
                }
            })
            .collect();
        LineChart {
            title: format!("Seed-averaged optimality gap vs {}", x_axis.name()),
            x_label: x_axis.name().to_string(),
            y_label: "mean opt_gap".to_string(),
            series,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostAxis {
    GradEvals,
    CommSteps,
}

impl CostAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::GradEvals => "grad_evals",
            Self::CommSteps => "comm_steps",
        }
    }
}

/// Runs every algorithm on every seed and averages the gaps per algorithm.
pub fn run_comparison(res: &Resolved) -> Result<Comparison, HarnessError> {
    if res.config.algorithms.len() < 2 {
        return Err(HarnessError::invalid("a comparison needs at least two algorithms"));
    }
    let traces = run_experiment(res)?;
    let per_algo = res.config.config.seeds.len();
    let curves = traces
        .chunks(per_algo)
        .filter_map(|chunk| AveragedCurve::from_traces(&chunk.iter().collect::<Vec<_>>()))
        .collect();
    Ok(Comparison { traces, curves })
}

/// Run outputs plus `curves.csv`, `comparison.json` and the two charts.
pub fn write_comparison_outputs(dir: &Path, res: &Resolved, cmp: &Comparison) -> Result<(), HarnessError> {
    write_run_outputs(dir, res, &cmp.traces)?;
    write_bytes(&dir.join("curves.csv"), &export::curves_csv(&cmp.curves))?;
    write_json(&cmp.summaries(res.config.config.eps), &dir.join("comparison.json"))?;
    for axis in [CostAxis::GradEvals, CostAxis::CommSteps] {
        let path = dir.join(format!("opt_gap_vs_{}.svg", axis.name()));
        svg::render_svg(&Plot::Lines(cmp.chart(axis)), &path)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub d1: u32,
    pub d2: u32,
    pub gamma: f64,
    pub theory: GridCell,
    pub diverged: bool,
    /// Costs at which the seed-averaged gap first stays below `eps`.
    pub reached: Option<Reached>,
    /// `w1·comm_steps + w2·grad_evals/n` at `reached`.
    pub empirical_cost: Option<f64>,
}

impl SweepCell {
    pub fn status(&self) -> &'static str {
        match (self.diverged, self.reached) {
            (true, _) => "diverged",
            (false, None) => "not reached",
            (false, Some(_)) => "reached",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub variant: Variant,
    pub d1_max: u32,
    pub d2_max: u32,
    pub eps: f64,
    pub weights: CostWeights,
    /// Row-major: `d1` outer, `d2` inner.
    pub cells: Vec<SweepCell>,
    pub theory_argmin: (u32, u32),
    /// `None` when no cell reached `eps`.
    pub empirical_argmin: Option<(u32, u32)>,
}

impl SweepResult {
    pub fn theory_heatmap(&self) -> Heatmap {
        Heatmap {
            title: "Theory weighted cost".into(),
            row_label: "d1".into(),
            col_label: "d2".into(),
            rows: self.d1_max,
            cols: self.d2_max,
            values: self.cells.iter().map(|c| Some(c.theory.cost)).collect(),
            highlight: Some(self.theory_argmin),
        }
    }

    pub fn empirical_heatmap(&self) -> Heatmap {
        Heatmap {
            title: format!("Empirical weighted cost to reach eps = {:e}", self.eps),
            row_label: "d1".into(),
            col_label: "d2".into(),
            rows: self.d1_max,
            cols: self.d2_max,
            values: self.cells.iter().map(|c| c.empirical_cost).collect(),
            highlight: self.empirical_argmin,
        }
    }
}

/// Theory parameters of a resolved configuration, using the smoothness
/// constant of its stepsize rule.
pub fn theory_params(rc: &ResolvedConfig) -> TheoryParams {
    let c = &rc.config;
    TheoryParams {
        mu: rc.mu,
        l: rc.l_cfg,
        rho: rc.rho,
        d1: 1,
        d2: 1,
        gamma: 0.0,
        sigma: c.problem.sigma,
        n: c.problem.n,
        eps: c.eps,
        w1: c.weights.w1,
        w2: c.weights.w2,
    }
}

/// Evaluates every `(d1, d2)` cell in theory and by simulation of the first
/// configured algorithm's variant, averaged over the configured seeds.
pub fn run_sweep(res: &Resolved, d1_max: u32, d2_max: u32) -> Result<SweepResult, HarnessError> {
    if d1_max == 0 || d2_max == 0 {
        return Err(HarnessError::invalid("sweep bounds must be at least 1"));
    }
    let rc = &res.config;
    let c = &rc.config;
    let variant = rc.algorithms[0].variant;
    let grid: TradeoffGrid = analysis::minimize_weighted_cost(&theory_params(rc), d1_max, d2_max);

    let mut cfgs = Vec::new();
    for cell in &grid.cells {
        let gamma = c.stepsize.gamma(rc.mu, rc.l, rc.rho, cell.d1, cell.d2);
        for &seed in &c.seeds {
            cfgs.push(AlgoConfig {
                variant,
                d1: cell.d1,
                d2: cell.d2,
                gamma,
                rounds: c.rounds,
                seed,
            });
        }
    }
    let traces = run_all(res, &cfgs)?;
    let n = c.problem.n as f64;
    let cells: Vec<SweepCell> = grid
        .cells
        .iter()
        .zip(traces.chunks(c.seeds.len()))
        .map(|(cell, chunk)| {
            let curve = AveragedCurve::from_traces(&chunk.iter().collect::<Vec<_>>()).expect("at least one seed");
            let reached = curve.reached(c.eps);
            SweepCell {
                d1: cell.d1,
                d2: cell.d2,
                gamma: curve.gamma,
                theory: *cell,
                diverged: curve.diverged_seeds > 0,
                reached,
                empirical_cost: reached
                    .map(|r| c.weights.w1 * r.comm_steps as f64 + c.weights.w2 * r.grad_evals as f64 / n),
            }
        })
        .collect();
    let empirical_argmin = cells
        .iter()
        .filter_map(|cell| cell.empirical_cost.map(|v| (v, cell)))
        .reduce(|best, cur| if cur.0 < best.0 { cur } else { best })
        .map(|(_, cell)| (cell.d1, cell.d2));
    Ok(SweepResult {
        variant,
        d1_max,
        d2_max,
        eps: c.eps,
        weights: c.weights,
        cells,
        theory_argmin: (grid.best.d1, grid.best.d2),
        empirical_argmin,
    })
}

/// `config.resolved.json`, `sweep.csv`, `sweep.json` and both heatmaps.
pub fn write_sweep_outputs(dir: &Path, res: &Resolved, sweep: &SweepResult) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    write_json(&res.config, &dir.join("config.resolved.json"))?;
    write_bytes(&dir.join("sweep.csv"), &export::sweep_csv(sweep))?;
    write_json(sweep, &dir.join("sweep.json"))?;
    svg::render_svg(&Plot::Heatmap(sweep.theory_heatmap()), &dir.join("heatmap_theory.svg"))?;
    svg::render_svg(&Plot::Heatmap(sweep.empirical_heatmap()), &dir.join("heatmap_empirical.svg"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{AlgorithmSpec, ExperimentConfig, StepsizeRule};
    use crate::problem::ProblemSpec;
    use crate::topology::TopologySpec;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            problem: ProblemSpec {
                n: 6,
                p: 3,
                ..ProblemSpec::standard()
            },
            topology: TopologySpec::ring(6),
            algorithms: vec![
                AlgorithmSpec::new(Variant::FlexGt, 2, 2),
                AlgorithmSpec::new(Variant::Dfl, 2, 2),
            ],
            stepsize: StepsizeRule::TheoryMax { scale: 1.0 },
            rounds: 30,
            seeds: vec![5, 1],
            ..ExperimentConfig::standard()
        }
    }

    #[test]
    fn one_trace_per_algorithm_and_seed_in_config_order() {
        let res = small().resolve().unwrap();
        let traces = run_experiment(&res).unwrap();
        let ids: Vec<_> = traces.iter().map(|t| t.run_id.as_str()).collect();
        assert_eq!(
            ids,
            ["00-FlexGT(2,2)-seed5", "00-FlexGT(2,2)-seed1", "01-DFL(2,2)-seed5", "01-DFL(2,2)-seed1"]
        );
        assert!(traces.iter().all(|t| t.fingerprint == res.config.fingerprint));
    }

    #[test]
    fn averaged_curve_is_the_arithmetic_mean() {
        let res = small().resolve().unwrap();
        let cmp = run_comparison(&res).unwrap();
        assert_eq!(cmp.curves.len(), 2);
        let c = &cmp.curves[1];
        for k in [0, 17, 29] {
            let expected = (cmp.traces[2].rounds[k].opt_gap + cmp.traces[3].rounds[k].opt_gap) / 2.0;
            assert_eq!(c.mean_opt_gap[k], expected);
        }
    }

    #[test]
    fn comparison_needs_two_algorithms() {
        let mut cfg = small();
        cfg.algorithms.truncate(1);
        let res = cfg.resolve().unwrap();
        assert!(matches!(run_comparison(&res), Err(HarnessError::Validation(_))));
    }

    #[test]
    fn reached_requires_staying_below() {
        let curve = AveragedCurve {
            label: "x".into(),
            variant: Variant::FlexGt,
            d1: 1,
            d2: 1,
            gamma: 0.1,
            seeds: 1,
            diverged_seeds: 0,
            grad_evals: vec![2, 4, 6, 8],
            comm_steps: vec![1, 2, 3, 4],
            mean_opt_gap: vec![1.0, 1e-6, 1.0, 1e-6],
        };
        assert_eq!(curve.reached(1e-5).unwrap().round, 3);
        assert!(curve.reached(1e-7).is_none());
    }

    #[test]
    fn sweep_grid_shape() {
        let res = small().resolve().unwrap();
        let sweep = run_sweep(&res, 2, 3).unwrap();
        assert_eq!(sweep.cells.len(), 6);
        assert_eq!((sweep.cells[4].d1, sweep.cells[4].d2), (2, 2));
        assert!(run_sweep(&res, 0, 3).is_err());
    }
}
