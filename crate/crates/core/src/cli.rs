//! The `safety-filters` command line: `solve`, `run`, `compare`, `verify`.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | any other error |
//! | 2 | invalid configuration |
//! | 3 | value iteration did not converge (the grid is still written) |
//! | 4 | safety violations or soundness counterexamples found |
//! | 5 | deployment rejected: the filter does not certify the start state |
//! | 6 | exhaustive search budget exceeded |
//!
//! The last line on stdout is always a one-line JSON summary.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{FilterConfig, RunConfig};
use crate::dynamics::{discretize_box, SystemModel};
use crate::error::{Error, Result};
use crate::filter::{check_intervention_contract, least_restrictive_filter, verify_monitor_soundness, SafetyFilter};
use crate::harness::{
    compare_filters, monte_carlo_safety, run_episode, sample_certified_start, write_comparison_csv,
    write_trajectory_csv, EpisodeMetrics, Scenario, Trajectory,
};
use crate::hj::{solve, SolveReport, ValueGrid};
use crate::interval::IntervalBox;
use crate::rollout::{sample_frs_containment, BrakingPolicy};
use crate::tube_mpc::{compute_tightening, sample_error_bounds};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_VIOLATIONS: i32 = 4;
pub const EXIT_DEPLOYMENT_REJECTED: i32 = 5;
pub const EXIT_BUDGET_EXCEEDED: i32 = 6;

/// Attempts at finding a certified start state per episode.
const START_TRIES: usize = 10_000;

#[derive(Debug, Parser)]
#[command(name = "safety-filters", version, about = "Safety filters: solve, simulate, compare and verify")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the value grid and write it with a convergence report.
    Solve(CommonArgs),
    /// Run filtered episodes and write per-episode logs and metrics.
    Run(CommonArgs),
    /// Run several filters on the same scenario and tabulate them.
    Compare(CommonArgs),
    /// Run the soundness oracles on the configured filter.
    Verify(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed (overrides `seed` in the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "SAFETY_FILTERS_THREADS")]
    pub threads: Option<usize>,
    /// Repeat for more log output on stderr.
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

/// Result of a command: exit code plus the JSON summary.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub summary: Value,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => EXIT_CONFIG,
        Error::DeploymentRejected(_) => EXIT_DEPLOYMENT_REJECTED,
        Error::BudgetExceeded { .. } => EXIT_BUDGET_EXCEEDED,
        _ => EXIT_FAILURE,
    }
}

/// Parses arguments, runs the command, prints the summary line and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (name, common) = match &cli.command {
        Command::Solve(a) => ("solve", a),
        Command::Run(a) => ("run", a),
        Command::Compare(a) => ("compare", a),
        Command::Verify(a) => ("verify", a),
    };
    let level = match common.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    let outcome = execute(&cli.command);
    let (code, mut summary) = match outcome {
        Ok(o) => (o.code, o.summary),
        Err(e) => {
            eprintln!("error: {e}");
            (exit_code(&e), json!({ "error": e.to_string() }))
        }
    };
    summary["command"] = json!(name);
    summary["exit_code"] = json!(code);
    println!("{summary}");
    code
}

pub fn execute(command: &Command) -> Result<Outcome> {
    let (Command::Solve(args) | Command::Run(args) | Command::Compare(args) | Command::Verify(args)) = command;
    let run = |f: fn(&Context) -> Result<Outcome>| -> Result<Outcome> {
        let ctx = Context::new(args)?;
        match args.threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?
                .install(|| f(&ctx)),
            None => f(&ctx),
        }
    };
    match command {
        Command::Solve(_) => run(cmd_solve),
        Command::Run(_) => run(cmd_run),
        Command::Compare(_) => run(cmd_compare),
        Command::Verify(_) => run(cmd_verify),
    }
}

/// Loaded configuration, resolved output directory and the built model.
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub model: SystemModel,
}

impl Context {
    pub fn new(args: &CommonArgs) -> Result<Self> {
        let mut config = RunConfig::load(&args.config).map_err(|e| match e {
            Error::Io(io) => Error::Config {
                path: args.config.clone(),
                message: io.to_string(),
            },
            other => other,
        })?;
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        let out = args
            .out
            .clone()
            .or_else(|| config.output.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        config.output = Some(out.clone());
        fs::create_dir_all(&out)?;
        fs::write(out.join("resolved_config.toml"), config.to_toml())?;
        let model = config.build_model()?;
        Ok(Self { config, out, model })
    }

    /// Solves the grid, writing it and its report, and returns both.
    fn solve_grid(&self) -> Result<(Arc<ValueGrid>, SolveReport)> {
        let margin = self.config.build_margin()?;
        let (grid, report) = solve(&self.model, &margin, &self.config.grid_spec()?, &self.config.solve_options()?)?;
        grid.save(self.out.join("value.grid"))?;
        fs::write(
            self.out.join("solve_report.json"),
            serde_json::to_string_pretty(&report).expect("report serializes"),
        )?;
        let mut w = csv::Writer::from_path(self.out.join("residuals.csv"))?;
        w.write_record(["iteration", "residual"])?;
        for (i, r) in report.residuals.iter().enumerate() {
            w.write_record([(i + 1).to_string(), r.to_string()])?;
        }
        w.flush()?;
        if !report.converged {
            log::warn!("value iteration stopped after {} iterations at residual {:e}", report.iterations, report.final_residual);
        }
        Ok((Arc::new(grid), report))
    }

    fn grid_if_needed(&self, filters: &[&FilterConfig]) -> Result<Option<Arc<ValueGrid>>> {
        let wanted = filters.iter().any(|f| RunConfig::needs_grid(f))
            || self.config.harness.disturbance == crate::config::DisturbanceKind::Adversarial;
        if wanted {
            Ok(Some(self.solve_grid()?.0))
        } else {
            Ok(None)
        }
    }

    fn seeds(&self) -> Vec<u64> {
        (0..self.config.harness.episodes as u64)
            .map(|i| self.config.seed.wrapping_add(i))
            .collect()
    }

    fn scenario(&self, x0: Vec<f64>) -> Result<Scenario> {
        Ok(Scenario {
            model: self.model.clone(),
            margin: self.config.build_margin()?,
            x0,
            steps: self.config.harness.steps,
            goal: self.config.goal(&self.model),
            control_weight: self.config.harness.control_weight,
        })
    }

    fn start_region(&self) -> Result<IntervalBox> {
        let h = &self.config.harness;
        if h.start_lower.is_empty() && h.start_upper.is_empty() {
            match &self.config.grid {
                Some(g) => IntervalBox::new(g.lower.clone(), g.upper.clone()),
                None => Err(Error::InvalidArgument("harness needs x0 or start_lower/start_upper".into())),
            }
        } else {
            IntervalBox::new(h.start_lower.clone(), h.start_upper.clone())
        }
    }

    /// The configured start, or one sampled from the start region that
    /// every filter certifies.
    fn start(&self, filters: &[&dyn SafetyFilter], seed: u64) -> Result<Vec<f64>> {
        if let Some(x0) = &self.config.harness.x0 {
            return Ok(x0.clone());
        }
        let region = self.start_region()?;
        let mut rng_seed = seed;
        for _ in 0..START_TRIES {
            let x = sample_certified_start(filters[0], &region, rng_seed, START_TRIES)
                .ok_or_else(|| Error::DeploymentRejected(format!("no certified start found in {region}")))?;
            if filters[1..].iter().all(|f| {
                let mut f = f.clone_box();
                f.observe(&x);
                f.certifies(&x)
            }) {
                return Ok(x);
            }
            rng_seed = rng_seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
        }
        Err(Error::DeploymentRejected("no start certified by every filter".into()))
    }
}

fn cmd_solve(ctx: &Context) -> Result<Outcome> {
    ctx.config.grid_config()?;
    let (_, report) = ctx.solve_grid()?;
    Ok(Outcome {
        code: if report.converged { EXIT_OK } else { EXIT_NOT_CONVERGED },
        summary: json!({
            "converged": report.converged,
            "iterations": report.iterations,
            "final_residual": report.final_residual,
            "wall_time_s": report.wall_time.as_secs_f64(),
            "value_file": ctx.out.join("value.grid"),
        }),
    })
}

fn write_metrics(path: &Path, rows: &[(u64, EpisodeMetrics)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "seed",
        "steps",
        "violations",
        "intervention_count",
        "intervention_rate",
        "degraded_count",
        "mean_monitor",
        "min_monitor",
        "task_cost",
        "chatter_count",
    ])?;
    for (seed, m) in rows {
        w.write_record([
            seed.to_string(),
            m.steps.to_string(),
            m.violations.to_string(),
            m.intervention_count.to_string(),
            m.intervention_rate.to_string(),
            m.degraded_count.to_string(),
            m.mean_monitor.to_string(),
            m.min_monitor.to_string(),
            m.task_cost.to_string(),
            m.chatter_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_run(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    let grid = ctx.grid_if_needed(&[&cfg.filter])?;
    let filter = cfg.build_filter(&cfg.filter, &ctx.model, grid.as_ref())?;
    // Build once up front so that configuration errors surface here.
    cfg.build_task(&ctx.model)?;
    cfg.build_disturbance(&ctx.model, grid.as_ref())?;
    let seeds = ctx.seeds();
    let mut runs: Vec<(Trajectory, EpisodeMetrics)> = seeds
        .par_iter()
        .map(|&seed| {
            let x0 = ctx.start(&[filter.as_ref()], seed)?;
            let scenario = ctx.scenario(x0)?;
            let mut f = filter.clone_box();
            let mut task = cfg.build_task(&ctx.model)?;
            let mut dist = cfg.build_disturbance(&ctx.model, grid.as_ref())?;
            run_episode(&scenario, f.as_mut(), task.as_mut(), dist.as_mut(), seed)
        })
        .collect::<Result<_>>()?;
    runs.sort_by_key(|(t, _)| t.seed);
    for (traj, _) in &runs {
        write_trajectory_csv(BufWriter::new(File::create(ctx.out.join(format!("episode_{}.csv", traj.seed)))?), traj)?;
    }
    let rows: Vec<(u64, EpisodeMetrics)> = runs.iter().map(|(t, m)| (t.seed, m.clone())).collect();
    write_metrics(&ctx.out.join("metrics.csv"), &rows)?;
    let violations: usize = runs.iter().map(|(_, m)| m.violations).sum();
    let interventions: usize = runs.iter().map(|(_, m)| m.intervention_count).sum();
    let mut summary = json!({
        "filter": filter.name(),
        "episodes": runs.len(),
        "violations": violations,
        "interventions": interventions,
        "mean_task_cost": runs.iter().map(|(_, m)| m.task_cost).sum::<f64>() / runs.len().max(1) as f64,
    });
    let mut code = if violations > 0 { EXIT_VIOLATIONS } else { EXIT_OK };
    if cfg.harness.monte_carlo_episodes > 0 {
        let x0 = ctx.start(&[filter.as_ref()], cfg.seed)?;
        let scenario = ctx.scenario(x0)?;
        let task = || cfg.build_task(&ctx.model).expect("validated above");
        let dist = || cfg.build_disturbance(&ctx.model, grid.as_ref()).expect("validated above");
        let mc = monte_carlo_safety(
            &scenario,
            filter.as_ref(),
            &task,
            &dist,
            cfg.harness.monte_carlo_episodes,
            cfg.seed,
            cfg.harness.confidence,
        )?;
        fs::write(ctx.out.join("monte_carlo.json"), serde_json::to_string_pretty(&mc).expect("serializes"))?;
        if mc.failures > 0 {
            code = EXIT_VIOLATIONS;
        }
        summary["monte_carlo"] = serde_json::to_value(&mc).expect("serializes");
    }
    Ok(Outcome { code, summary })
}

fn cmd_compare(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    if cfg.compare.is_empty() {
        return Err(Error::Config {
            path: PathBuf::from("compare"),
            message: "compare needs at least one [[compare]] filter".into(),
        });
    }
    let grid = ctx.grid_if_needed(&cfg.compare.iter().collect::<Vec<_>>())?;
    let filters = cfg
        .compare
        .iter()
        .map(|f| cfg.build_filter(f, &ctx.model, grid.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&dyn SafetyFilter> = filters.iter().map(|f| f.as_ref()).collect();
    cfg.build_task(&ctx.model)?;
    cfg.build_disturbance(&ctx.model, grid.as_ref())?;
    let x0 = ctx.start(&refs, cfg.seed)?;
    let scenario = ctx.scenario(x0.clone())?;
    let task = || cfg.build_task(&ctx.model).expect("validated above");
    let dist = || cfg.build_disturbance(&ctx.model, grid.as_ref()).expect("validated above");
    let comparison = compare_filters(&scenario, &refs, &task, &dist, &ctx.seeds())?;
    write_comparison_csv(File::create(ctx.out.join("comparison.csv"))?, &comparison.rows)?;
    for (name, traj) in &comparison.traces {
        write_trajectory_csv(BufWriter::new(File::create(ctx.out.join(format!("plot_{name}.csv")))?), traj)?;
    }
    let violations: usize = comparison.rows.iter().map(|r| r.violations).sum();
    Ok(Outcome {
        code: if violations > 0 { EXIT_VIOLATIONS } else { EXIT_OK },
        summary: json!({
            "x0": x0,
            "filters": comparison.rows.iter().map(|r| r.filter.clone()).collect::<Vec<_>>(),
            "violations": violations,
            "table": ctx.out.join("comparison.csv"),
        }),
    })
}

fn cmd_verify(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    let v = &cfg.verify;
    let margin = cfg.build_margin()?;
    let grid = if cfg.grid.is_some() { Some(ctx.solve_grid()?.0) } else { None };
    let filter = cfg.build_filter(&cfg.filter, &ctx.model, grid.as_ref())?;
    let region = if v.lower.is_empty() && v.upper.is_empty() {
        cfg.grid_spec()?.domain().clone()
    } else {
        IntervalBox::new(v.lower.clone(), v.upper.clone())?
    };
    let counts = if v.state_counts.is_empty() { vec![21; ctx.model.state_dim()] } else { v.state_counts.clone() };
    let states = discretize_box(&region, &counts)?;
    let d_lattice = cfg.adversary_lattice(&ctx.model)?;
    let budget = u128::from(v.budget);

    let soundness = verify_monitor_soundness(&ctx.model, filter.as_ref(), &margin, &states, v.horizon, &d_lattice, budget)?;
    if let Some(cx) = &soundness.counterexample {
        log::warn!("counterexample from {:?}: {:?}", cx.initial_state, cx.states);
    }
    let u_lattice = discretize_box(ctx.model.control_set(), &vec![5; ctx.model.control_dim()])?;
    let contract = check_intervention_contract(filter.as_ref(), &states, &u_lattice);

    let mut summary = json!({
        "filter": filter.name(),
        "checked_states": soundness.checked_states,
        "certified_states": soundness.certified_states,
        "rollouts": soundness.rollouts.to_string(),
        "counterexample": soundness.counterexample,
        "contract_violations": contract.len(),
    });
    let mut failures = usize::from(soundness.counterexample.is_some()) + contract.len();

    match &cfg.filter {
        FilterConfig::Mps { horizon, creep, .. } => {
            let braking = BrakingPolicy::for_double_integrator(&ctx.model, *creep)?;
            let r = sample_frs_containment(&ctx.model, &braking, &region, *horizon, v.samples, cfg.seed)?;
            failures += r.failures;
            summary["frs_containment"] = serde_json::to_value(&r).expect("serializes");
        }
        FilterConfig::TubeMpc { gain, horizon, .. } => {
            let lin = ctx
                .model
                .linear()
                .ok_or_else(|| Error::InvalidArgument("tube MPC needs a linear model".into()))?;
            let w = (0..lin.n)
                .map(|i| {
                    (0..lin.k).fold(crate::interval::Interval::point(0.0), |acc, j| {
                        acc + ctx.model.disturbance_set().interval(j).scale(lin.e[i * lin.k + j])
                    })
                })
                .collect::<Vec<_>>();
            let tightening = compute_tightening(&lin.a, &lin.b, gain, &IntervalBox::from_intervals(&w), *horizon)?;
            let r = sample_error_bounds(&ctx.model, gain, &tightening, v.samples, cfg.seed)?;
            failures += r.failures;
            summary["error_bound_containment"] = serde_json::to_value(&r).expect("serializes");
        }
        _ => {}
    }

    let mut self_test_ok = true;
    if let Some(grid) = &grid {
        // A value grid shifted up by a large constant certifies states that
        // are not safe; the oracle has to catch it.
        let corrupted = Arc::new(grid.offset(v.corruption));
        let (u, d) = cfg.lattices(&ctx.model)?;
        let bad = least_restrictive_filter(&ctx.model, corrupted, u, d)?;
        let r = verify_monitor_soundness(&ctx.model, &bad, &margin, &states, v.horizon, &d_lattice, budget)?;
        self_test_ok = r.counterexample.is_some();
        summary["corrupted_counterexample_found"] = json!(self_test_ok);
        summary["corrupted_counterexample"] = serde_json::to_value(&r.counterexample).expect("serializes");
    }
    summary["failures"] = json!(failures);
    fs::write(ctx.out.join("verify_report.json"), serde_json::to_string_pretty(&summary).expect("serializes"))?;
    let code = if failures > 0 {
        EXIT_VIOLATIONS
    } else if !self_test_ok {
        EXIT_FAILURE
    } else {
        EXIT_OK
    };
    Ok(Outcome { code, summary })
}
