//! `spacefill`: run space-filling input design experiments from a JSON
//! config and write CSV artifacts plus a `manifest.json`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use spacefill::harness::export::{self, Artifact, DesignSummary, Manifest, SignalSummary};
use spacefill::harness::{self, ExperimentConfig, SignalReport};
use spacefill::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "spacefill",
    version,
    about = "Space-filling input design for nonlinear dynamical systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize the input from the configured seed and compare with the Schroeder baseline.
    Design(Common),
    /// Evaluate the Schroeder-phase multisine, no optimization.
    Schroeder(Common),
    /// Repeat the design over seeds derived from a master seed.
    MonteCarlo {
        #[command(flatten)]
        common: Common,
        /// Number of runs.
        #[arg(long, default_value_t = 20)]
        runs: usize,
    },
    /// Simulate the initial input to steady state and score it.
    Simulate(Common),
    /// Print the resolved grid and exit.
    GridInfo(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input seed (master seed for monte-carlo).
    #[arg(long)]
    seed: Option<u64>,
    /// Only report errors.
    #[arg(long, conflicts_with = "verbose")]
    quiet: bool,
    /// Log per-iteration progress.
    #[arg(long)]
    verbose: bool,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Design(_) => "design",
            Command::Schroeder(_) => "schroeder",
            Command::MonteCarlo { .. } => "monte-carlo",
            Command::Simulate(_) => "simulate",
            Command::GridInfo(_) => "grid-info",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Design(c)
            | Command::Schroeder(c)
            | Command::Simulate(c)
            | Command::GridInfo(c) => c,
            Command::MonteCarlo { common, .. } => common,
        }
    }
}

/// Failure classes, each with a stable code on stderr and an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Code {
    ConfigNotFound,
    ConfigParse,
    ConfigInvalid,
    Diverged,
    NotConverged,
    NonFinite,
    Io,
}

impl Code {
    fn as_str(self) -> &'static str {
        match self {
            Code::ConfigNotFound => "E_CONFIG_NOT_FOUND",
            Code::ConfigParse => "E_CONFIG_PARSE",
            Code::ConfigInvalid => "E_CONFIG_INVALID",
            Code::Diverged => "E_STEADY_STATE_DIVERGED",
            Code::NotConverged => "E_STEADY_STATE_NOT_CONVERGED",
            Code::NonFinite => "E_NON_FINITE_OBJECTIVE",
            Code::Io => "E_IO",
        }
    }

    fn exit_code(self) -> u8 {
        match self {
            Code::Diverged | Code::NotConverged | Code::NonFinite => 2,
            _ => 1,
        }
    }

    fn classify(err: &Error) -> Self {
        match err.root() {
            Error::Diverged { .. } => Code::Diverged,
            Error::SteadyStateNotConverged { .. } => Code::NotConverged,
            Error::NonFiniteObjective => Code::NonFinite,
            Error::Json(_) => Code::ConfigParse,
            Error::Io(_) => Code::Io,
            _ => Code::ConfigInvalid,
        }
    }
}

struct Failure {
    code: Code,
    error: Error,
}

impl Failure {
    fn new(code: Code, error: Error) -> Self {
        Self { code, error }
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Self::new(Code::classify(&error), error)
    }
}

fn load_config(common: &Common) -> std::result::Result<ExperimentConfig, Failure> {
    if !common.config.is_file() {
        return Err(Failure::new(
            Code::ConfigNotFound,
            Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("config file {} not found", common.config.display()),
            )),
        ));
    }
    let text =
        std::fs::read_to_string(&common.config).map_err(|e| Failure::new(Code::Io, e.into()))?;
    let mut config =
        ExperimentConfig::from_json(&text).map_err(|e| Failure::new(Code::ConfigParse, e))?;
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    config
        .resolve()
        .map_err(|e| Failure::new(Code::ConfigInvalid, e))
}

fn init_logging(common: &Common) {
    let level = if common.quiet {
        "error"
    } else if common.verbose {
        "debug"
    } else {
        "info"
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// `SPACEFILL_THREADS` caps the worker pool; unset or 0 means one worker per core.
fn init_threads() {
    let threads = std::env::var("SPACEFILL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn run(command: &Command, config: &ExperimentConfig) -> Result<(Vec<Artifact>, Manifest)> {
    let name = command.name();
    match command {
        Command::Design(_) => {
            let design = harness::run_design(config)?;
            let (baseline, baseline_error) = match config.input {
                harness::InputConfig::Multisine { .. } => {
                    match harness::run_schroeder_baseline(config) {
                        Ok(b) => (Some(b), None),
                        Err(e) if e.is_numerical() => {
                            log::warn!("{e}");
                            (None, Some(e.to_string()))
                        }
                        Err(e) => return Err(e),
                    }
                }
                harness::InputConfig::Direct { .. } => (None, None),
            };
            let files = export::design_artifacts(config, &design, baseline.as_ref())?;
            let mut summary = serde_json::to_value(DesignSummary::of(&design, baseline.as_ref()))?;
            if let Some(msg) = baseline_error {
                summary["schroeder_error"] = msg.into();
            }
            Ok((
                files,
                Manifest::success(name, config, vec![design.seed], summary),
            ))
        }
        Command::Schroeder(_) => {
            let report = harness::run_schroeder_baseline(config)?;
            single_signal(name, config, &report, "schroeder")
        }
        Command::Simulate(_) => {
            let problem =
                harness::build_problem(config, harness::initial_parametrization(config)?)?;
            let theta = problem.initial_params();
            let report = SignalReport::new(theta.clone(), problem.evaluate(&theta)?);
            single_signal(name, config, &report, "initial")
        }
        Command::MonteCarlo { runs, common } => {
            let master = common.seed.unwrap_or(config.input.seed());
            let mc = harness::run_monte_carlo(config, *runs, master)?;
            let files = vec![Artifact::new("montecarlo.csv", export::montecarlo_csv(&mc))];
            let summary = json!({
                "master_seed": mc.master_seed,
                "runs": *runs,
                "failed": mc.runs.iter().filter(|r| r.error.is_some()).count(),
                "initial_cost": mc.initial,
                "final_cost": mc.r#final,
                "cost_ratio": mc.ratio,
                "errors": mc.runs.iter().filter_map(|r| r.error.as_ref().map(|e| json!({"run": r.run, "error": e}))).collect::<Vec<_>>(),
            });
            let seeds = mc.runs.iter().map(|r| r.seed).collect();
            Ok((files, Manifest::success(name, config, seeds, summary)))
        }
        Command::GridInfo(_) => unreachable!("grid-info writes no artifacts"),
    }
}

fn single_signal(
    name: &str,
    config: &ExperimentConfig,
    report: &SignalReport,
    label: &str,
) -> Result<(Vec<Artifact>, Manifest)> {
    let model = config.model.build()?;
    let files = export::signal_artifacts(config, report, label, model.as_ref())?;
    let summary = serde_json::to_value(SignalSummary::of(report))?;
    Ok((
        files,
        Manifest::success(name, config, vec![config.input.seed()], summary),
    ))
}

fn grid_info(config: &ExperimentConfig) -> Result<()> {
    let grid = config.grid()?;
    let info = json!({
        "n_z": grid.dim(),
        "n": grid.len(),
        "points_per_dim": grid.points_per_dim(),
        "lower": grid.bounds().lower(),
        "upper": grid.bounds().upper(),
        "samples_per_period": config.input.len(),
    });
    println!("{}", serde_json::to_string_pretty(&info)?);
    Ok(())
}

fn report_failure(
    command: &str,
    config: Option<&ExperimentConfig>,
    out: Option<&Path>,
    failure: &Failure,
) -> ExitCode {
    eprintln!("{}: {}", failure.code.as_str(), failure.error);
    if let Some(dir) = out {
        let manifest = Manifest::failure(
            command,
            config,
            failure.code.as_str(),
            failure.error.to_string(),
        );
        if let Err(e) = export::write_manifest(dir, &manifest) {
            eprintln!(
                "{}: could not write failure manifest: {e}",
                Code::Io.as_str()
            );
        }
    }
    ExitCode::from(failure.code.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = cli.command.common();
    init_logging(common);
    init_threads();
    let name = cli.command.name();

    let mut config = match load_config(common) {
        Ok(c) => c,
        Err(f) => return report_failure(name, None, common.out.as_deref(), &f),
    };
    if let (Some(seed), false) = (
        common.seed,
        matches!(cli.command, Command::MonteCarlo { .. }),
    ) {
        config.input.set_seed(seed);
    }
    if matches!(cli.command, Command::GridInfo(_)) {
        return match grid_info(&config) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => report_failure(name, Some(&config), None, &e.into()),
        };
    }

    let out = config.output_dir.clone();
    let result = run(&cli.command, &config)
        .and_then(|(files, manifest)| export::write_run(&out, &files, manifest));
    match result {
        Ok(manifest) => {
            log::info!(
                "wrote {} files and {} to {}",
                manifest.files.len(),
                export::MANIFEST,
                out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => report_failure(name, Some(&config), Some(&out), &e.into()),
    }
}
