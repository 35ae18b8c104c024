//! `flexgt`: command-line front end of the gradient-tracking lab.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 I/O failure,
//! 3 a run diverged.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flexgt::analysis::{self, TheoryParams};
use flexgt::harness::experiment::{self, any_diverged};
use flexgt::harness::export::{ensure_dir, fmt_float, write_bytes, write_json};
use flexgt::harness::{load_config, ExperimentConfig, HarnessError, Resolved};
use flexgt::topology::{build_weight_matrix, check_doubly_stochastic};
use serde::Serialize;

const DEFAULT_OUT: &str = "flexgt-out";

#[derive(Debug, Parser)]
#[command(name = "flexgt", version, about = "Decentralized gradient tracking with flexible communication and computation")]
struct Cli {
    /// Output directory (overrides `out_dir` in the configuration).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every configured algorithm on every seed.
    Run { config: PathBuf },
    /// Run and compare algorithms with seed-averaged curves and charts.
    Compare { config: PathBuf },
    /// Evaluate the (d1, d2) grid in theory and by simulation.
    Sweep {
        config: PathBuf,
        #[arg(long = "d1-max", value_name = "K")]
        d1_max: u32,
        #[arg(long = "d2-max", value_name = "K")]
        d2_max: u32,
    },
    /// Evaluate the closed-form stepsize, rate and complexity expressions.
    Theory {
        #[arg(long)]
        mu: f64,
        #[arg(long = "L")]
        l: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        d1: u32,
        #[arg(long)]
        d2: u32,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long)]
        eps: f64,
        /// Stepsize; defaults to the largest admissible one.
        #[arg(long)]
        gamma: Option<f64>,
        /// Weight of communication cost.
        #[arg(long, default_value_t = 1.0)]
        w1: f64,
        /// Weight of computation cost.
        #[arg(long, default_value_t = 1.0)]
        w2: f64,
    },
    /// Build the mixing matrix of a configuration and check it.
    Topo { config: PathBuf },
}

enum Failure {
    Invalid(String),
    Io(String),
    Diverged(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Invalid(_) => 1,
            Self::Io(_) => 2,
            Self::Diverged(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Invalid(m) | Self::Io(m) | Self::Diverged(m) => m,
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_io() {
            Self::Io(e.to_string())
        } else {
            Self::Invalid(e.to_string())
        }
    }
}

fn out_dir(cli_out: &Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn prepare(path: &Path) -> Result<(ExperimentConfig, Resolved), Failure> {
    let cfg = load_config(path)?;
    let res = cfg.resolve()?;
    Ok((cfg, res))
}

fn cmd_run(path: &Path, out: &Option<PathBuf>, compare: bool) -> Result<(), Failure> {
    let (cfg, res) = prepare(path)?;
    let dir = out_dir(out, &cfg);
    let traces = if compare {
        let cmp = experiment::run_comparison(&res)?;
        experiment::write_comparison_outputs(&dir, &res, &cmp)?;
        for s in cmp.summaries(cfg.eps) {
            println!(
                "{:<16} gamma={} steady_opt_gap={} diverged_seeds={}",
                s.label,
                fmt_float(s.gamma),
                s.steady_mean_opt_gap.map(fmt_float).unwrap_or_else(|| "-".into()),
                s.diverged_seeds
            );
        }
        cmp.traces
    } else {
        let traces = experiment::run_experiment(&res)?;
        experiment::write_run_outputs(&dir, &res, &traces)?;
        for t in &traces {
            let s = experiment::summarize(t);
            println!(
                "{:<28} gamma={} final_opt_gap={} diverged={}",
                s.run_id,
                fmt_float(s.gamma),
                s.final_opt_gap.map(fmt_float).unwrap_or_else(|| "-".into()),
                s.diverged
            );
        }
        traces
    };
    println!("fingerprint {}", res.config.fingerprint);
    println!("outputs written to {}", dir.display());
    if any_diverged(&traces) {
        let names: Vec<_> = traces.iter().filter(|t| t.diverged).map(|t| t.run_id.as_str()).collect();
        return Err(Failure::Diverged(format!("diverged: {}", names.join(", "))));
    }
    Ok(())
}

fn cmd_sweep(path: &Path, out: &Option<PathBuf>, d1_max: u32, d2_max: u32) -> Result<(), Failure> {
    let (cfg, res) = prepare(path)?;
    let dir = out_dir(out, &cfg);
    let sweep = experiment::run_sweep(&res, d1_max, d2_max)?;
    experiment::write_sweep_outputs(&dir, &res, &sweep)?;
    let (t1, t2) = sweep.theory_argmin;
    println!("theory argmin (d1, d2) = ({t1}, {t2})");
    match sweep.empirical_argmin {
        Some((e1, e2)) => println!("empirical argmin (d1, d2) = ({e1}, {e2})"),
        None => println!("empirical argmin: no cell reached eps"),
    }
    let unreached = sweep.cells.iter().filter(|c| c.reached.is_none()).count();
    println!("cells not reaching eps: {unreached} of {}", sweep.cells.len());
    println!("outputs written to {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct TheoryReport {
    params: TheoryParams,
    max_stepsize: f64,
    gamma_exceeds_bound: bool,
    contraction_factor: f64,
    m_sigma: f64,
    comp_complexity: f64,
    comm_complexity: f64,
    weighted_cost: f64,
    steady_state_bound: f64,
}

fn cmd_theory(mut tp: TheoryParams, gamma: Option<f64>, out: &Option<PathBuf>) -> Result<(), Failure> {
    let mut bad = Vec::new();
    let pos = |x: f64| x > 0.0 && x.is_finite();
    if !pos(tp.mu) {
        bad.push("--mu must be positive");
    }
    if !pos(tp.l) {
        bad.push("--L must be positive");
    }
    if !(0.0..1.0).contains(&tp.rho) {
        bad.push("--rho must lie in [0, 1)");
    }
    if tp.d1 == 0 || tp.d2 == 0 {
        bad.push("--d1 and --d2 must be at least 1");
    }
    if !(tp.sigma >= 0.0 && tp.sigma.is_finite()) {
        bad.push("--sigma must be nonnegative");
    }
    if tp.n == 0 {
        bad.push("--n must be at least 1");
    }
    if !pos(tp.eps) {
        bad.push("--eps must be positive");
    }
    if gamma.is_some_and(|g| !pos(g)) {
        bad.push("--gamma must be positive");
    }
    if !(tp.w1 >= 0.0 && tp.w2 >= 0.0) {
        bad.push("--w1 and --w2 must be nonnegative");
    }
    if !bad.is_empty() {
        return Err(Failure::Invalid(bad.join("; ")));
    }
    let max_stepsize = analysis::max_stepsize(&tp);
    tp.gamma = gamma.unwrap_or(max_stepsize);
    let contraction = analysis::contraction_factor(&tp);
    let report = TheoryReport {
        params: tp,
        max_stepsize,
        gamma_exceeds_bound: contraction.exceeds_bound,
        contraction_factor: contraction.factor,
        m_sigma: analysis::m_sigma(&tp),
        comp_complexity: analysis::comp_complexity(&tp),
        comm_complexity: analysis::comm_complexity(&tp),
        weighted_cost: analysis::weighted_cost(&tp),
        steady_state_bound: analysis::steady_state_bound(&tp),
    };
    println!("max_stepsize        {}", fmt_float(report.max_stepsize));
    println!("gamma               {}", fmt_float(tp.gamma));
    println!("gamma_exceeds_bound {}", report.gamma_exceeds_bound);
    println!("contraction_factor  {}", fmt_float(report.contraction_factor));
    println!("m_sigma             {}", fmt_float(report.m_sigma));
    println!("comp_complexity     {}", fmt_float(report.comp_complexity));
    println!("comm_complexity     {}", fmt_float(report.comm_complexity));
    println!("weighted_cost       {}", fmt_float(report.weighted_cost));
    println!("steady_state_bound  {}", fmt_float(report.steady_state_bound));
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&report, &dir.join("theory.json"))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TopoReport {
    n: usize,
    edges: usize,
    min_degree: usize,
    max_degree: usize,
    rho: f64,
    spectral_gap: f64,
    symmetric: bool,
    nonnegative: bool,
    doubly_stochastic: bool,
    max_row_sum_error: f64,
    max_col_sum_error: f64,
}

fn cmd_topo(path: &Path, out: &Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load_config(path)?;
    let w = build_weight_matrix(&cfg.topology).map_err(|e| Failure::Invalid(e.to_string()))?;
    let m = w.entries();
    let n = w.n();
    let degrees: Vec<usize> = (0..n).map(|i| w.neighbors(i).len() - 1).collect();
    let mut symmetric = true;
    let mut nonnegative = true;
    let (mut row_err, mut col_err) = (0.0f64, 0.0f64);
    for i in 0..n {
        let mut row = 0.0;
        let mut col = 0.0;
        for j in 0..n {
            symmetric &= m[(i, j)] == m[(j, i)];
            nonnegative &= m[(i, j)] >= 0.0;
            row += m[(i, j)];
            col += m[(j, i)];
        }
        row_err = row_err.max((row - 1.0).abs());
        col_err = col_err.max((col - 1.0).abs());
    }
    let report = TopoReport {
        n,
        edges: cfg.topology.edge_set().len(),
        min_degree: degrees.iter().copied().min().unwrap_or(0),
        max_degree: degrees.iter().copied().max().unwrap_or(0),
        rho: w.rho(),
        spectral_gap: 1.0 - w.rho(),
        symmetric,
        nonnegative,
        doubly_stochastic: check_doubly_stochastic(m).is_ok(),
        max_row_sum_error: row_err,
        max_col_sum_error: col_err,
    };
    println!("nodes               {}", report.n);
    println!("edges               {}", report.edges);
    println!("degree              {}..{}", report.min_degree, report.max_degree);
    println!("rho                 {}", fmt_float(report.rho));
    println!("spectral_gap        {}", fmt_float(report.spectral_gap));
    println!("symmetric           {}", report.symmetric);
    println!("nonnegative         {}", report.nonnegative);
    println!("doubly_stochastic   {}", report.doubly_stochastic);
    println!("max_row_sum_error   {}", fmt_float(report.max_row_sum_error));
    println!("max_col_sum_error   {}", fmt_float(report.max_col_sum_error));
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&report, &dir.join("topology.json"))?;
        let mut csv = String::new();
        for row in m.iter_rows() {
            let cells: Vec<String> = row.iter().map(|v| fmt_float(*v)).collect();
            csv.push_str(&cells.join(","));
            csv.push('\n');
        }
        write_bytes(&dir.join("weights.csv"), csv.as_bytes())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { config } => cmd_run(&config, &cli.out, false),
        Command::Compare { config } => cmd_run(&config, &cli.out, true),
        Command::Sweep { config, d1_max, d2_max } => cmd_sweep(&config, &cli.out, d1_max, d2_max),
        Command::Theory {
            mu,
            l,
            rho,
            d1,
            d2,
            sigma,
            n,
            eps,
            gamma,
            w1,
            w2,
        } => {
            let tp = TheoryParams {
                mu,
                l,
                rho,
                d1,
                d2,
                gamma: 0.0,
                sigma,
                n,
                eps,
                w1,
                w2,
            };
            cmd_theory(tp, gamma, &cli.out)
        }
        Command::Topo { config } => cmd_topo(&config, &cli.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
