//! Batch commands behind the `cinc` binary.
//!
//! ```text
//! cinc [--model NAME] [--config FILE] [--tol T] [--steps N] [--p P]
//!      [--seed S] [--out DIR] <COMMAND>
//!
//!   constants                         constants, rank margins, step-2 minimum
//!   plan --from X --to Y              plan a control from X to Y
//!   simulate CONTROL --from X [--target Y]
//!   lift-loop LOOP.csv                lift a sampled loop to a control
//!   homotopy SCENARIO.json            lift a base-point homotopy on a grid
//!   bch-scan [--at X] [--lo] [--hi] [--samples]
//! ```
//!
//! Points are comma-separated coordinates. The output directory defaults to
//! `out` and can be set with `CINC_OUT`. Every command prints a summary,
//! writes its files, and exits with 0 only if its checks pass; 1 means a
//! check failed and 2 means the command could not run.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, OUT_ENV};
use crate::dynamics::{recover_control, recovered_lp_error, solve, verify_inclusion, SolveOptions};
use crate::error::{Error, Result};
use crate::geometry::{Point, SubRiemannianStructure};
use crate::homotopy::{lift_grid, lp_continuity_probe, lift_loop_with, reparam_lift, winding, BasePointHomotopy};
use crate::io::{self, ScenarioKind, TrajectoryMeta};
use crate::planner::{bch_residual, bch_scan, plan_with, rank_margin, rank_margin_floor, PlanOptions, SolverOptions};

/// Points sampled for the rank certificate.
pub const RANK_SAMPLES: usize = 1000;
/// Samples cap for loop refinement.
pub const LOOP_SAMPLE_CAP: usize = 1024;

/// What a command produced: a JSON report and whether its checks passed.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub ok: bool,
    pub report: Value,
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.ok {
            0
        } else {
            1
        }
    }
}

fn point_json(p: &Point) -> Vec<f64> {
    p.iter().copied().collect()
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out)?;
    Ok(cfg.out.clone())
}

fn solve_opts(cfg: &RunConfig) -> SolveOptions {
    SolveOptions::with_steps(cfg.steps)
}

fn check_dim(structure: &SubRiemannianStructure, p: &Point, what: &str) -> Result<()> {
    if p.len() != structure.dim() {
        return Err(Error::Parse(format!(
            "{what} has {} coordinates, model needs {}",
            p.len(),
            structure.dim()
        )));
    }
    Ok(())
}

fn random_point(structure: &SubRiemannianStructure, rng: &mut ChaCha8Rng) -> Point {
    let bx = structure.fields().sampling_box();
    DVector::from_iterator(bx.len(), bx.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)))
}

pub fn cmd_constants(cfg: &RunConfig) -> Result<Outcome> {
    let structure = cfg.structure()?;
    let step2_min = structure.verify_step2()?;
    let c = structure.constants()?.clone();
    let floor = rank_margin_floor(&structure)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let points: Vec<Point> = (0..RANK_SAMPLES).map(|_| random_point(&structure, &mut rng)).collect();
    let margins = points
        .par_iter()
        .map(|x| rank_margin(&structure, x))
        .collect::<Result<Vec<f64>>>()?;
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let raw = structure.with_rescaling(false);
    let raw_margins = points
        .par_iter()
        .map(|x| rank_margin(&raw, x))
        .collect::<Result<Vec<f64>>>()?;
    let raw_min = raw_margins.iter().copied().fold(f64::INFINITY, f64::min);
    let ok = min_margin >= floor - 1e-6;
    let report = json!({
        "model": structure.name(),
        "omega_sup": c.omega_sup,
        "lambda_raw": c.lambda_raw,
        "k": c.k,
        "analytic": c.analytic,
        "grid": c.grid,
        "step2_min": step2_min,
        "rank_margin_floor": floor,
        "rank_margin_min": min_margin,
        "rank_margin_unscaled_min": raw_min,
        "rank_samples": RANK_SAMPLES,
        "seed": cfg.seed,
    });
    let out = prepare_out(cfg)?;
    io::write_json(&out.join("constants.json"), &io::versioned("constants", &report))?;
    let summary = vec![
        format!("model          {}", structure.name()),
        format!("Omega          {:.9}", c.omega_sup),
        format!("lambda_raw     {:.9}", c.lambda_raw),
        format!("K              {:.9}", c.k),
        format!("step-2 min     {step2_min:.6e}"),
        format!("rank margin    {min_margin:.6} (floor {floor:.6}, unscaled {raw_min:.6})"),
    ];
    Ok(Outcome { ok, report, summary })
}

pub fn cmd_plan(cfg: &RunConfig, x: &Point, y: &Point) -> Result<Outcome> {
    let structure = cfg.structure()?;
    check_dim(&structure, x, "start")?;
    check_dim(&structure, y, "target")?;
    let opts = PlanOptions {
        budget: cfg.budget,
        solver: SolverOptions {
            tol: cfg.tol,
            ..SolverOptions::default()
        },
        ..PlanOptions::default()
    };
    let plan = plan_with(&structure, x, y, &opts)?;
    let sopts = solve_opts(cfg);
    let traj = solve(&structure, x, &plan.control, &sopts)?;
    let inclusion = verify_inclusion(&structure, &traj);
    let ok = plan.residual <= cfg.endpoint_tol && inclusion.passed && plan.control.validate().is_ok();
    let report = json!({
        "model": structure.name(),
        "from": point_json(x),
        "target": point_json(y),
        "endpoint": point_json(&plan.endpoint),
        "residual": plan.residual,
        "legs": plan.legs,
        "zero_control": plan.control.is_zero(),
        "inclusion": inclusion,
    });
    let out = prepare_out(cfg)?;
    io::write_json(&out.join("plan.json"), &io::versioned("plan", &report))?;
    io::write_control(&out.join("plan_control.txt"), &plan.control)?;
    let meta = TrajectoryMeta::new(&structure, &traj, sopts.steps_per_piece, sopts.accuracy_tol)?;
    io::write_trajectory(&out, "plan_trajectory", &traj, &meta)?;
    let summary = vec![
        format!("legs      {}", plan.legs.len()),
        format!("residual  {:.3e}", plan.residual),
        format!("inclusion {}", if inclusion.passed { "ok" } else { "violated" }),
    ];
    Ok(Outcome { ok, report, summary })
}

pub fn cmd_simulate(cfg: &RunConfig, control: &Path, x: &Point, target: Option<&Point>) -> Result<Outcome> {
    let structure = cfg.structure()?;
    check_dim(&structure, x, "start")?;
    let u = io::read_control(control)?;
    u.validate()?;
    if u.frame_len() != structure.frame_len() {
        return Err(Error::Parse(format!(
            "control has {} frame columns, model has {}",
            u.frame_len(),
            structure.frame_len()
        )));
    }
    let sopts = solve_opts(cfg);
    let traj = solve(&structure, x, &u, &sopts)?;
    let inclusion = verify_inclusion(&structure, &traj);
    let target_error = match target {
        Some(y) => {
            check_dim(&structure, y, "target")?;
            Some(structure.chart_distance(&traj.endpoint, y))
        }
        None => None,
    };
    let ok = inclusion.passed && target_error.is_none_or(|e| e <= cfg.endpoint_tol);
    let report = json!({
        "model": structure.name(),
        "from": point_json(x),
        "endpoint": point_json(&traj.endpoint),
        "target_error": target_error,
        "error_estimate": traj.error_estimate,
        "inclusion": inclusion,
    });
    let out = prepare_out(cfg)?;
    io::write_json(&out.join("simulate.json"), &io::versioned("simulate", &report))?;
    let meta = TrajectoryMeta::new(&structure, &traj, sopts.steps_per_piece, sopts.accuracy_tol)?;
    io::write_trajectory(&out, "simulate_trajectory", &traj, &meta)?;
    let mut summary = vec![
        format!("endpoint  {:?}", point_json(&traj.endpoint)),
        format!("inclusion {}", if inclusion.passed { "ok" } else { "violated" }),
    ];
    if let Some(e) = target_error {
        summary.push(format!("target    {e:.3e}"));
    }
    Ok(Outcome { ok, report, summary })
}

pub fn cmd_lift_loop(cfg: &RunConfig, loop_file: &Path) -> Result<Outcome> {
    let structure = cfg.structure()?;
    let samples = io::read_loop(loop_file)?;
    let base = samples[0].clone();
    check_dim(&structure, &base, "loop sample")?;
    let (control, lift) = lift_loop_with(&structure, &base, &samples, LOOP_SAMPLE_CAP)?;
    let sopts = solve_opts(cfg);
    let traj = solve(&structure, &base, &control, &sopts)?;
    let inclusion = verify_inclusion(&structure, &traj);
    let closure = structure.chart_distance(&traj.endpoint, &base);
    let displacement = &traj.endpoint - &base;
    let winding = winding(&structure, &traj);
    let recovery_l2 = if control.is_zero() {
        0.0
    } else {
        let rec = recover_control(&structure, &traj)?;
        recovered_lp_error(&control, &traj, &rec, 2.0)
    };
    let ok = closure <= cfg.closure_tol && inclusion.passed && control.validate().is_ok();
    let report = json!({
        "model": structure.name(),
        "base": point_json(&base),
        "input_samples": samples.len(),
        "samples_used": lift.samples_used,
        "refinements": lift.refinements,
        "refined": lift.refinements > 0,
        "winding": winding,
        "displacement": point_json(&displacement),
        "closure": closure,
        "recovery_l2": recovery_l2,
        "zero_control": control.is_zero(),
        "leg_residuals": lift.leg_residuals,
        "inclusion": inclusion,
    });
    let out = prepare_out(cfg)?;
    io::write_json(&out.join("lift_loop.json"), &io::versioned("lift_loop", &report))?;
    io::write_control(&out.join("lift_loop_control.txt"), &control)?;
    let meta = TrajectoryMeta::new(&structure, &traj, sopts.steps_per_piece, sopts.accuracy_tol)?;
    io::write_trajectory(&out, "lift_loop_trajectory", &traj, &meta)?;
    let summary = vec![
        format!("samples   {} ({} refinements)", lift.samples_used, lift.refinements),
        format!("winding   {winding:?}"),
        format!("closure   {closure:.3e}"),
        format!("recovery  {recovery_l2:.3e} (L2)"),
    ];
    Ok(Outcome { ok, report, summary })
}

pub fn scenario_homotopy(structure: &SubRiemannianStructure, kind: &ScenarioKind) -> Result<BasePointHomotopy> {
    let k = structure.constants()?.k;
    let d = structure.frame_len();
    let m = structure.dim();
    let bph = match kind {
        ScenarioKind::Constant { points } => {
            if points.is_empty() || points.iter().any(|p| p.len() != m) {
                return Err(Error::Parse(format!("constant scenario needs points with {m} coordinates")));
            }
            BasePointHomotopy::constant(points.iter().map(|p| DVector::from_vec(p.clone())).collect(), d, k)
        }
        ScenarioKind::Circle {
            center,
            radius,
            axes,
            count,
        } => {
            if center.len() != m || axes.0 >= m || axes.1 >= m || axes.0 == axes.1 || *count == 0 {
                return Err(Error::Parse("circle scenario has inconsistent center, axes or count".into()));
            }
            BasePointHomotopy::circle(DVector::from_vec(center.clone()), *radius, *axes, *count, d, k)
        }
    };
    Ok(bph)
}

#[derive(Debug, Serialize)]
struct ProbeTable {
    p: f64,
    zeta: f64,
    rows: Vec<(f64, f64)>,
    decreasing: bool,
}

pub fn default_probe() -> Vec<f64> {
    (1..=8).map(|k| 0.5f64.powi(k)).collect()
}

pub fn cmd_homotopy(cfg: &RunConfig, scenario: &Path) -> Result<Outcome> {
    let structure = cfg.structure()?;
    let sc = io::read_scenario(scenario)?;
    if sc.s_steps == 0 {
        return Err(Error::Parse("s_steps must be positive".into()));
    }
    let bph = scenario_homotopy(&structure, &sc.kind)?;
    let grid = lift_grid(&structure, &bph, sc.s_steps, cfg.p);
    let offending = grid.offending(cfg.closure_tol);
    let out = prepare_out(cfg)?;
    let probe_s = if sc.probe.is_empty() { default_probe() } else { sc.probe.clone() };
    let mut ps = vec![1.0, 2.0];
    if !ps.contains(&cfg.p) {
        ps.push(cfg.p);
    }
    let zeta = bph.zetas[0];
    let tables: Vec<ProbeTable> = ps
        .iter()
        .filter_map(|&p| {
            let rows = lp_continuity_probe(&structure, &bph, zeta, p, &probe_s).ok()?;
            let decreasing = rows.windows(2).all(|w| w[1].1 <= w[0].1);
            Some(ProbeTable { p, zeta, rows, decreasing })
        })
        .collect();
    let report = json!({
        "model": structure.name(),
        "scenario": sc,
        "initial_exact": grid.initial_exact,
        "max_closure": grid.max_closure,
        "closure_tol": cfg.closure_tol,
        "nodes": grid.nodes,
        "offending": offending,
        "lp_tables": tables,
    });
    io::write_json(&out.join("homotopy.json"), &io::versioned("homotopy", &report))?;
    if !offending.is_empty() {
        return Err(Error::LiftFailure { offending });
    }

    let node_dir = out.join("homotopy_nodes");
    fs::create_dir_all(&node_dir)?;
    let sopts = solve_opts(cfg);
    let trajs = grid
        .nodes
        .par_iter()
        .map(|n| {
            let base = bph.base(n.zeta, n.s);
            solve(&structure, &base, &reparam_lift(&structure, &bph, n.zeta, n.s)?, &sopts)
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, traj) in trajs.iter().enumerate() {
        fs::write(node_dir.join(format!("node_{i:04}.csv")), io::trajectory_csv(traj))?;
    }

    let ok = grid.initial_exact && tables.len() == ps.len() && tables.iter().all(|t| t.decreasing);
    let mut summary = vec![
        format!("nodes         {}", grid.nodes.len()),
        format!("max closure   {:.3e}", grid.max_closure),
        format!("initial exact {}", grid.initial_exact),
    ];
    for t in &tables {
        let last = t.rows.last().map_or(0.0, |r| r.1);
        summary.push(format!("L^{} table     final {last:.3e}, decreasing {}", t.p, t.decreasing));
    }
    Ok(Outcome { ok, report, summary })
}

/// Point used by `bch-scan` when none is given.
pub fn default_scan_point(structure: &SubRiemannianStructure) -> Point {
    let bx = structure.fields().sampling_box();
    DVector::from_iterator(bx.len(), bx.iter().map(|&(lo, hi)| lo + 0.3 * (hi - lo)))
}

pub const BCH_SLOPE_MIN: f64 = 2.5;
pub const BCH_EXACT_MAX: f64 = 1e-9;

pub fn cmd_bch_scan(cfg: &RunConfig, at: Option<&Point>, lo: f64, hi: f64, samples: usize) -> Result<Outcome> {
    let structure = cfg.structure()?;
    structure.verify_step2()?;
    let x = at.cloned().unwrap_or_else(|| default_scan_point(&structure));
    check_dim(&structure, &x, "scan point")?;
    if !(0.0 < lo && lo < hi) || samples < 2 {
        return Err(Error::Config("bch-scan needs 0 < lo < hi and at least 2 samples".into()));
    }
    let (rows, slope) = bch_scan(&structure, &x, lo, hi, samples)?;
    let zero_row = bch_residual(&structure, &x, 0.0, 0.0)?;
    let max_residual = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let exact = max_residual <= BCH_EXACT_MAX;
    let ok = zero_row == 0.0 && (exact || slope >= BCH_SLOPE_MIN);
    let report = json!({
        "model": structure.name(),
        "at": point_json(&x),
        "rows": rows,
        "zero_row": zero_row,
        "slope": slope,
        "max_residual": max_residual,
        "exact_truncation": exact,
    });
    let out = prepare_out(cfg)?;
    io::write_json(&out.join("bch_scan.json"), &io::versioned("bch_scan", &report))?;
    let mut summary: Vec<String> = rows
        .iter()
        .map(|(xi, r)| format!("|xi| {xi:.3e}  residual {r:.3e}"))
        .collect();
    summary.push(format!("slope {slope:.3}, max residual {max_residual:.3e}"));
    Ok(Outcome { ok, report, summary })
}

#[derive(Debug, Parser)]
#[command(name = "cinc", version, about = "Differential inclusions on corank-one sub-Riemannian structures")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Built-in model: torus, heisenberg, flat_invalid.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root-finder tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// RK4 substeps per control piece.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Exponent of the L^p distances.
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV)]
    pub out: Option<PathBuf>,
}

impl GlobalArgs {
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.model {
            cfg.model = m.clone();
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.p {
            cfg.p = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Constants, rank margins and the step-2 minimum.
    Constants,
    /// Plan a control between two points.
    Plan {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        from: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        to: Vec<f64>,
    },
    /// Solve a stored control from a start point.
    Simulate {
        control: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        from: Vec<f64>,
        /// Expected endpoint.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        target: Option<Vec<f64>>,
    },
    /// Lift a sampled loop (CSV, first row is the base point).
    LiftLoop { loop_file: PathBuf },
    /// Lift a base-point homotopy scenario (JSON) on a grid.
    Homotopy { scenario: PathBuf },
    /// Residual of the commutator word against its second-order expansion.
    BchScan {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        at: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1e-3)]
        lo: f64,
        #[arg(long, default_value_t = 1e-1)]
        hi: f64,
        #[arg(long, default_value_t = 12)]
        samples: usize,
    },
}

/// Runs one parsed command line.
pub fn execute(cli: &Cli) -> Result<Outcome> {
    let cfg = cli.global.run_config()?;
    let pt = |v: &Vec<f64>| DVector::from_vec(v.clone());
    match &cli.command {
        Command::Constants => cmd_constants(&cfg),
        Command::Plan { from, to } => cmd_plan(&cfg, &pt(from), &pt(to)),
        Command::Simulate { control, from, target } => cmd_simulate(&cfg, control, &pt(from), target.as_ref().map(pt).as_ref()),
        Command::LiftLoop { loop_file } => cmd_lift_loop(&cfg, loop_file),
        Command::Homotopy { scenario } => cmd_homotopy(&cfg, scenario),
        Command::BchScan { at, lo, hi, samples } => cmd_bch_scan(&cfg, at.as_ref().map(pt).as_ref(), *lo, *hi, *samples),
    }
}

/// Parses `args`, runs the command, prints the summary and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            println!("{}", if outcome.ok { "ok" } else { "FAILED" });
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
