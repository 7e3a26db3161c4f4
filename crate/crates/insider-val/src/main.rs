//! Command-line front end: scenario configs in, JSON reports out.
//!
//! Exit codes: 0 success, 1 acceptance-suite criterion failure, 2 invalid
//! configuration or parameters, 3 solver or applicability failure, 4 I/O
//! failure. Identical config and seed give byte-identical reports.

mod config;
mod report;

use clap::{Parser, Subcommand, ValueEnum};
use insider_val_core::battery::run_all;
use insider_val_core::densities::DensityFamily;
use insider_val_core::diagnostics::{
    arbitrage_closed, arbitrage_mc, density_process_samples, inverse_signal_density_samples,
    martingale_test, price_samples,
};
use insider_val_core::dualopt::{
    expected_utility, optimal_utility, solve_multiplier, Clock, Problem, Role, Utility,
};
use insider_val_core::mcsim::TimeGrid;
use insider_val_core::replication::{
    integrate_strategy, replication_check, universal_strategy_gbm, universal_wealth,
};
use insider_val_core::rng::RngPolicy;
use insider_val_core::valuation::{
    pi_exp, pi_generic, pi_log, pi_log_mc, pi_power, uip_bounds, universal_value,
};
use insider_val_core::CoreError;
use std::path::{Path, PathBuf};
use std::time::Instant;

use config::{resolve, Overrides, ResolvedConfig, ScenarioConfig};
use report::{
    Bounds, DiagnoseOutputs, MartingaleEntry, OptimizeOutputs, Outputs, ReplicateOutputs,
    RunReport, SuiteOutputs, ValueEntry, ValueOutputs,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(CoreError::InvalidParameter(_) | CoreError::Domain(_)) => 2,
            CliError::Core(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "insider-val",
    version,
    about = "Values inside information in complete-market models",
    long_about = "Diagnoses arbitrage from an informational advantage, solves the \
                  insider's consumption problem by duality, computes utility \
                  indifference values with universal bounds, and checks replication \
                  of the universal claim. TOML scenario configs in, deterministic \
                  JSON reports out."
)]
struct Cli {
    /// Omit the subcommand to take the task from the config file
    #[command(subcommand)]
    cmd: Option<Cmd>,

    /// Scenario config file (TOML); flags override its fields
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Report destination; stdout when omitted. A .csv destination for
    /// replicate writes the wealth dump there and the report next to it
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Master seed (also settable via INSIDER_VAL_SEED)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for path generation; 0 picks the machine default.
    /// Results are identical for every setting
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Monte Carlo path count
    #[arg(long, global = true)]
    paths: Option<usize>,

    /// Time grid steps
    #[arg(long, global = true)]
    steps: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Arbitrage coefficient, optimal arbitrage profit, martingale battery
    Diagnose {
        /// Model id: gbm-binary, poisson-pair, reflection, independent
        #[arg(long)]
        model: Option<String>,
        /// Success probability of the binary signal (gbm-binary only)
        #[arg(long)]
        r: Option<f64>,
    },
    /// Solve the leveraged optimal consumption problem by duality
    Optimize {
        /// Model id: gbm-binary, poisson-pair, reflection, independent
        #[arg(long)]
        model: Option<String>,
        /// Success probability of the binary signal (gbm-binary only)
        #[arg(long)]
        r: Option<f64>,
    },
    /// Utility indifference value of the signal
    Value {
        /// Model id: gbm-binary, poisson-pair, reflection, independent
        #[arg(long)]
        model: Option<String>,
        /// Success probability of the binary signal (gbm-binary only)
        #[arg(long)]
        r: Option<f64>,
        /// closed = direct formula, root = utility-matching bisection,
        /// auto = closed when available, else root, else Monte Carlo
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        /// Include the universal bounds in each entry
        #[arg(long)]
        bounds: bool,
        /// Credit line (wealth may fall to -k before the horizon)
        #[arg(long)]
        k: Option<f64>,
        /// Comma-separated initial capitals to evaluate
        #[arg(long, value_delimiter = ',', value_name = "V1,V2,...")]
        v_grid: Option<Vec<f64>>,
    },
    /// Trade the universal replication strategy and dump wealth paths
    Replicate {
        /// Model id; the explicit strategy exists for gbm-binary
        #[arg(long)]
        model: Option<String>,
        /// Success probability of the binary signal
        #[arg(long)]
        r: Option<f64>,
    },
    /// Run the acceptance battery and print a pass/fail table
    Suite,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Method {
    Auto,
    Closed,
    Root,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let started = Instant::now();
    let cfg = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    let cmd = match cli.cmd {
        Some(cmd) => cmd,
        None => default_cmd(&cfg)?,
    };
    let mut ov = Overrides {
        seed: cli.seed,
        paths: cli.paths,
        steps: cli.steps,
        workers: cli.workers,
        ..Default::default()
    };
    let task = match &cmd {
        Cmd::Diagnose { model, r } => {
            ov.model_id = model.clone();
            ov.r = *r;
            "diagnose"
        }
        Cmd::Optimize { model, r } => {
            ov.model_id = model.clone();
            ov.r = *r;
            "optimize"
        }
        Cmd::Value { model, r, k, .. } => {
            ov.model_id = model.clone();
            ov.r = *r;
            ov.k = *k;
            "value"
        }
        Cmd::Replicate { model, r } => {
            ov.model_id = model.clone();
            ov.r = *r;
            "replicate"
        }
        Cmd::Suite => "suite",
    };
    let rc = resolve(task, &cfg, &ov)?;
    if rc.run.workers > 0 {
        // ignore failure: the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(rc.run.workers)
            .build_global();
    }
    let (outputs, exit) = match &cmd {
        Cmd::Diagnose { .. } => (run_diagnose(&rc)?, 0),
        Cmd::Optimize { .. } => (run_optimize(&rc)?, 0),
        Cmd::Value {
            method,
            bounds,
            v_grid,
            ..
        } => (run_value(&rc, *method, *bounds, v_grid.as_deref())?, 0),
        Cmd::Replicate { .. } => (run_replicate(&rc, cli.out.as_deref())?, 0),
        Cmd::Suite => run_suite(&rc),
    };
    let report = RunReport {
        version: env!("CARGO_PKG_VERSION"),
        task: rc.task.clone(),
        seed: rc.run.seed,
        config: rc,
        outputs,
    };
    // suite prints its table on stdout, so its report only goes to a file
    let json_out = match (&cmd, &cli.out) {
        (Cmd::Suite, None) => return Ok(exit),
        (Cmd::Replicate { .. }, Some(path)) if is_csv(path) => {
            Some(path.with_extension("json"))
        }
        (_, out) => out.clone(),
    };
    report::emit(&report, json_out.as_deref(), started.elapsed().as_secs_f64())?;
    if let Some(path) = &json_out {
        eprintln!("wrote {}", path.display());
    }
    Ok(exit)
}

/// Builds the task named by the config file with default options.
fn default_cmd(cfg: &ScenarioConfig) -> Result<Cmd, CliError> {
    match cfg.task.as_deref() {
        Some("diagnose") => Ok(Cmd::Diagnose {
            model: None,
            r: None,
        }),
        Some("optimize") => Ok(Cmd::Optimize {
            model: None,
            r: None,
        }),
        Some("value") => Ok(Cmd::Value {
            model: None,
            r: None,
            method: Method::Auto,
            bounds: false,
            k: None,
            v_grid: None,
        }),
        Some("replicate") => Ok(Cmd::Replicate {
            model: None,
            r: None,
        }),
        Some("suite") => Ok(Cmd::Suite),
        Some(other) => Err(CliError::Config(format!(
            "unknown task {other:?} in config; expected diagnose, optimize, value, replicate, or suite"
        ))),
        None => Err(CliError::Config(
            "no task: give a subcommand or set task in the config file".into(),
        )),
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().map_or(false, |e| e.eq_ignore_ascii_case("csv"))
}

// -----------------------------------------------------------------------
// diagnose
// -----------------------------------------------------------------------

fn run_diagnose(rc: &ResolvedConfig) -> Result<Outputs, CliError> {
    let model = rc.build_model()?;
    let rng = RngPolicy::new(rc.run.seed);
    let horizon = model.horizon();
    let z = 4.0;
    let closed = match arbitrage_closed(&model) {
        Ok(rep) => Some(rep),
        Err(CoreError::Inapplicable(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let terminal = TimeGrid::uniform(horizon, 1)?;
    let mc = arbitrage_mc(&model, &terminal, rc.run.paths, &rng.derived(1), z)?;
    let grid = TimeGrid::uniform(horizon, rc.run.steps)?;
    let mut martingale = Vec::new();
    // per-atom density processes; the Poisson law has dozens of atoms, so
    // test the central band only
    let spec = model.signal()?;
    if let Some(atoms) = spec.atoms() {
        let mut xs: Vec<f64> = atoms.iter().map(|&(x, _)| x).collect();
        if rc.model.id == "poisson-pair" {
            xs.retain(|x| x.abs() <= 3.0);
        }
        for (i, x) in xs.iter().enumerate() {
            let samples = density_process_samples(&model, *x, &grid, rc.run.paths, &rng.derived(10 + i as u64))?;
            martingale.push(MartingaleEntry {
                process: format!("q^{x}"),
                report: martingale_test(&samples, z)?,
            });
        }
    }
    let inv = inverse_signal_density_samples(&model, &grid, rc.run.paths, &rng.derived(90))?;
    martingale.push(MartingaleEntry {
        process: "1/q^L".into(),
        report: martingale_test(&inv, z)?,
    });
    let n_assets = if rc.model.id == "poisson-pair" { 2 } else { 1 };
    for asset in 0..n_assets {
        let samples = price_samples(&model, asset, &grid, rc.run.paths, &rng.derived(95 + asset as u64))?;
        martingale.push(MartingaleEntry {
            process: format!("S{}", asset + 1),
            report: martingale_test(&samples, z)?,
        });
    }
    Ok(Outputs::Diagnose(DiagnoseOutputs {
        arbitrage_closed: closed,
        arbitrage_mc: mc,
        martingale,
    }))
}

// -----------------------------------------------------------------------
// optimize
// -----------------------------------------------------------------------

fn run_optimize(rc: &ResolvedConfig) -> Result<Outputs, CliError> {
    let model = rc.build_model()?;
    let utility = rc.build_utility()?;
    let clock = rc.build_clock()?;
    let problem = Problem::new(
        model.clone(),
        utility.clone(),
        clock.clone(),
        Role::Insider,
        rc.v,
        rc.k,
    )?;
    let solution = solve_multiplier(&problem)?;
    let utility_closed = optimal_utility(&problem)?;
    let ordinary = Problem::new(model, utility, clock, Role::Ordinary, rc.v, 0.0)?;
    let ordinary_closed = optimal_utility(&ordinary)?;
    let grid = TimeGrid::uniform(rc.model.horizon, rc.run.steps)?;
    let estimate = expected_utility(
        &problem,
        &solution,
        &grid,
        rc.run.paths,
        &RngPolicy::new(rc.run.seed),
    )?;
    Ok(Outputs::Optimize(OptimizeOutputs {
        role: "insider".into(),
        multiplier: solution,
        utility_closed,
        utility_mc: estimate,
        ordinary_utility_closed: ordinary_closed,
        information_gain_closed: utility_closed - ordinary_closed,
    }))
}

// -----------------------------------------------------------------------
// value
// -----------------------------------------------------------------------

fn run_value(
    rc: &ResolvedConfig,
    method: Method,
    bounds: bool,
    v_grid: Option<&[f64]>,
) -> Result<Outputs, CliError> {
    let model = rc.build_model()?;
    let utility = rc.build_utility()?;
    let clock = rc.build_clock()?;
    let vs: Vec<f64> = v_grid.map(|g| g.to_vec()).unwrap_or_else(|| vec![rc.v]);
    let mut entries = Vec::new();
    for (i, &v) in vs.iter().enumerate() {
        let mut entry = value_entry(rc, &model, &utility, &clock, v, rc.k, method, i)?;
        if bounds {
            let (lower, upper) = uip_bounds(&model, v, rc.k)?;
            entry.bounds = Some(Bounds { lower, upper });
        }
        entry.universal = universal_value(&model, v, rc.k).ok();
        entries.push(entry);
    }
    Ok(Outputs::Value(ValueOutputs { entries }))
}

#[allow(clippy::too_many_arguments)]
fn value_entry(
    rc: &ResolvedConfig,
    model: &DensityFamily,
    utility: &Utility,
    clock: &Clock,
    v: f64,
    k: f64,
    method: Method,
    index: usize,
) -> Result<ValueEntry, CliError> {
    match method {
        Method::Closed => closed_entry(rc, model, clock, v, k),
        Method::Root => root_entry(rc, model, utility, clock, v, k),
        Method::Auto => {
            if k == 0.0 {
                match closed_entry(rc, model, clock, v, k) {
                    Err(CliError::Core(CoreError::Inapplicable(_))) => {}
                    other => return other,
                }
            }
            match root_entry(rc, model, utility, clock, v, k) {
                Err(CliError::Core(CoreError::Inapplicable(_)))
                    if rc.utility.kind == "log" && k == 0.0 =>
                {
                    mc_entry(rc, model, clock, v, index)
                }
                other => other,
            }
        }
    }
}

fn entry_base(rc: &ResolvedConfig, v: f64, k: f64, method: &str) -> ValueEntry {
    ValueEntry {
        v,
        k,
        utility: rc.utility.kind.clone(),
        method: method.into(),
        pi: None,
        stderr: None,
        regime: None,
        accepted_below: None,
        bounds: None,
        universal: None,
    }
}

fn closed_entry(
    rc: &ResolvedConfig,
    model: &DensityFamily,
    clock: &Clock,
    v: f64,
    k: f64,
) -> Result<ValueEntry, CliError> {
    if k != 0.0 {
        return Err(CliError::Config(
            "closed-form values assume k = 0; use --method root for leverage".into(),
        ));
    }
    let pi = match rc.utility.kind.as_str() {
        "log" => pi_log(model, clock, v)?,
        "power" => pi_power(model, clock, v, rc.utility.p.expect("p resolved"))?,
        "exp" => {
            if !matches!(clock, Clock::TerminalOnly) {
                return Err(CoreError::Inapplicable(
                    "the exponential closed form requires the terminal clock".into(),
                )
                .into());
            }
            pi_exp(model, v, rc.utility.alpha.expect("alpha resolved"))?
        }
        other => unreachable!("unvalidated utility kind {other}"),
    };
    let mut entry = entry_base(rc, v, k, "closed");
    entry.pi = Some(pi);
    Ok(entry)
}

fn root_entry(
    rc: &ResolvedConfig,
    model: &DensityFamily,
    utility: &Utility,
    clock: &Clock,
    v: f64,
    k: f64,
) -> Result<ValueEntry, CliError> {
    let problem = Problem::new(
        model.clone(),
        utility.clone(),
        clock.clone(),
        Role::Insider,
        v,
        k,
    )?;
    let out = pi_generic(&problem)?;
    let mut entry = entry_base(rc, v, k, "root");
    entry.pi = out.pi;
    entry.regime = Some(out.regime);
    entry.accepted_below = out.accepted_below;
    Ok(entry)
}

fn mc_entry(
    rc: &ResolvedConfig,
    model: &DensityFamily,
    clock: &Clock,
    v: f64,
    index: usize,
) -> Result<ValueEntry, CliError> {
    let grid = TimeGrid::uniform(rc.model.horizon, rc.run.steps)?;
    let est = pi_log_mc(
        model,
        clock,
        v,
        &grid,
        rc.run.paths,
        &RngPolicy::new(rc.run.seed).derived(index as u64),
    )?;
    let mut entry = entry_base(rc, v, 0.0, "mc");
    entry.pi = Some(est.value);
    entry.stderr = Some(est.stderr);
    Ok(entry)
}

// -----------------------------------------------------------------------
// replicate
// -----------------------------------------------------------------------

const DELTA_GUARD: f64 = 0.01;

fn run_replicate(rc: &ResolvedConfig, out: Option<&Path>) -> Result<Outputs, CliError> {
    let model = rc.build_model()?;
    let grid = TimeGrid::uniform(rc.model.horizon, rc.run.steps)?;
    let rng = RngPolicy::new(rc.run.seed);
    let summary = replication_check(&model, &grid, rc.v, rc.k, DELTA_GUARD, rc.run.paths, &rng)?;
    let csv_path = match out {
        Some(path) if is_csv(path) => {
            let strategy = universal_strategy_gbm(&model, rc.v, rc.k)?;
            let mut rows = Vec::new();
            for i in 0..rc.run.paths {
                let bundle = model.simulate(&grid, &rng, i as u64)?;
                let signal = model.signal_value(&bundle)?;
                let target = universal_wealth(&model, &bundle, rc.v, rc.k)?;
                let wp = integrate_strategy(&bundle, &strategy, signal, rc.v, DELTA_GUARD)?;
                for j in 0..wp.times.len() {
                    let density = (target[j] + rc.k) / (rc.v + rc.k);
                    rows.push((wp.times[j], wp.wealth[j], target[j], density));
                }
            }
            report::write_wealth_csv(path, rows.into_iter())?;
            eprintln!("wrote {}", path.display());
            Some(path.display().to_string())
        }
        _ => None,
    };
    Ok(Outputs::Replicate(ReplicateOutputs {
        report: summary,
        csv_path,
    }))
}

// -----------------------------------------------------------------------
// suite
// -----------------------------------------------------------------------

fn run_suite(rc: &ResolvedConfig) -> (Outputs, i32) {
    let results = run_all(rc.run.seed);
    let mut all_passed = true;
    for res in &results {
        println!(
            "criterion {:2} {:<28} {}",
            res.index,
            res.name,
            if res.passed { "PASS" } else { "FAIL" }
        );
        if !res.passed {
            all_passed = false;
            for line in &res.details {
                println!("    {line}");
            }
        }
    }
    let outputs = Outputs::Suite(SuiteOutputs {
        criteria: results,
        all_passed,
    });
    (outputs, if all_passed { 0 } else { 1 })
}
