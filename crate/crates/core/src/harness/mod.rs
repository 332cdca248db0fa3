//! End-to-end experiments: a single design, the Schroeder baseline and the
//! Monte-Carlo robustness study.

mod config;
pub mod export;
mod problem;

pub use config::{DomainConfig, ExperimentConfig, ExportConfig, InputConfig, ModelConfig};
pub use problem::{DesignProblem, Evaluation, Parametrization};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::input::{self, amplitude_spectrum, crest_factor, DirectSpec, FreeParams, MultisineSpec};
use crate::optimizer::{minimize, OptimOptions, OptimResult};

/// Builds the parametrization for `config` with its initial parameters drawn
/// from `config.input.seed`.
pub fn initial_parametrization(config: &ExperimentConfig) -> Result<Parametrization> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.input.seed());
    match &config.input {
        InputConfig::Multisine {
            n,
            fs,
            line_min,
            line_max,
            target_std,
            optimize_amplitudes,
            ..
        } => {
            let f = line_max + 1 - line_min;
            let phases = input::random_phases(f, &mut rng);
            let spec =
                MultisineSpec::with_target_std(*n, *fs, *line_min, *line_max, *target_std, phases)
                    .map_err(|e| e.context("input"))?;
            Ok(Parametrization::Multisine {
                spec,
                free: FreeParams {
                    phases: true,
                    amplitudes: *optimize_amplitudes,
                },
            })
        }
        InputConfig::Direct {
            n,
            bounds,
            initial_std,
            ..
        } => {
            let half = initial_std * 3f64.sqrt();
            let samples = (0..*n)
                .map(|_| {
                    let v = if half > 0.0 {
                        rng.random_range(-half..half)
                    } else {
                        0.0
                    };
                    match bounds {
                        Some((lo, hi)) => v.clamp(*lo, *hi),
                        None => v,
                    }
                })
                .collect();
            Ok(Parametrization::Direct {
                spec: DirectSpec::new(samples, *bounds).map_err(|e| e.context("input"))?,
            })
        }
    }
}

pub fn build_problem(config: &ExperimentConfig, param: Parametrization) -> Result<DesignProblem> {
    DesignProblem::new(
        config.model.build()?,
        param,
        config.cost_function()?,
        config.steady_state,
    )
}

/// One evaluated excitation signal.
#[derive(Debug, Clone)]
pub struct SignalReport {
    pub theta: Vec<f64>,
    pub evaluation: Evaluation,
    pub crest_factor: Option<f64>,
    pub spectrum: Vec<f64>,
}

impl SignalReport {
    pub fn new(theta: Vec<f64>, evaluation: Evaluation) -> Self {
        let crest_factor = crest_factor(&evaluation.signal).ok();
        let spectrum = amplitude_spectrum(&evaluation.signal);
        Self {
            theta,
            evaluation,
            crest_factor,
            spectrum,
        }
    }

    pub fn cost(&self) -> f64 {
        self.evaluation.cost
    }
}

#[derive(Debug, Clone)]
pub struct DesignResult {
    pub seed: u64,
    pub initial: SignalReport,
    pub optimized: SignalReport,
    pub optim: OptimResult,
}

impl DesignResult {
    pub fn cost_ratio(&self) -> f64 {
        self.optimized.cost() / self.initial.cost()
    }
}

/// Minimizes the design cost from the seeded initial signal.
pub fn run_design(config: &ExperimentConfig) -> Result<DesignResult> {
    let seed = config.input.seed();
    let ctx = |e: Error| e.context(format!("design (seed {seed})"));
    let param = initial_parametrization(config).map_err(ctx)?;
    let problem = build_problem(config, param).map_err(ctx)?;
    let theta0 = problem.initial_params();
    let initial = problem.evaluate(&theta0).map_err(ctx)?;
    log::info!("seed {seed}: initial cost {:.6e}", initial.cost);

    let options = OptimOptions {
        bounds: problem.parametrization().bounds(),
        ..config.optimizer.clone()
    };
    let optim =
        minimize(|t: &[f64]| problem.value_and_gradient(t), &theta0, &options).map_err(ctx)?;
    let optimized = problem.evaluate(&optim.theta_star).map_err(ctx)?;
    log::info!(
        "seed {seed}: final cost {:.6e} after {} iterations ({:?})",
        optimized.cost,
        optim.iterations,
        optim.termination
    );
    Ok(DesignResult {
        seed,
        initial: SignalReport::new(theta0, initial),
        optimized: SignalReport::new(optim.theta_star.clone(), optimized),
        optim,
    })
}

/// Evaluates the multisine with Schroeder phases and the configured
/// amplitudes. No optimization.
pub fn run_schroeder_baseline(config: &ExperimentConfig) -> Result<SignalReport> {
    let ctx = |e: Error| e.context("schroeder baseline");
    let Parametrization::Multisine { spec, .. } = initial_parametrization(config).map_err(ctx)?
    else {
        return Err(Error::invalid(
            "input.kind",
            "the Schroeder baseline needs a multisine input",
        ));
    };
    let spec = spec
        .with_phases(input::schroeder_phases(spec.line_count()))
        .map_err(ctx)?;
    let param = Parametrization::Multisine {
        spec,
        free: FreeParams::PHASES,
    };
    let problem = build_problem(config, param).map_err(ctx)?;
    let theta = problem.initial_params();
    let eval = problem.evaluate(&theta).map_err(ctx)?;
    Ok(SignalReport::new(theta, eval))
}

/// Per-run seed: SplitMix64 finalizer applied to `master + run`.
pub fn derive_seed(master: u64, run: usize) -> u64 {
    let mut z = master
        .wrapping_add(run as u64)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRun {
    pub run: usize,
    pub seed: u64,
    pub initial_cost: Option<f64>,
    pub final_cost: Option<f64>,
    pub iterations: Option<usize>,
    pub monotone: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Summary {
    /// Quartiles by linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self {
            count: v.len(),
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub master_seed: u64,
    pub runs: Vec<MonteCarloRun>,
    pub initial: Option<Summary>,
    pub r#final: Option<Summary>,
    pub ratio: Option<Summary>,
}

/// Repeats the design from `runs` fresh random phase draws. Failed runs are
/// recorded and the remaining runs proceed. Rows are ordered by run index.
pub fn run_monte_carlo(
    config: &ExperimentConfig,
    runs: usize,
    master_seed: u64,
) -> Result<MonteCarloResult> {
    if runs == 0 {
        return Err(Error::invalid("runs", "at least one run is required"));
    }
    let rows: Vec<MonteCarloRun> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let seed = derive_seed(master_seed, run);
            let mut cfg = config.clone();
            cfg.input.set_seed(seed);
            match run_design(&cfg) {
                Ok(r) => MonteCarloRun {
                    run,
                    seed,
                    initial_cost: Some(r.initial.cost()),
                    final_cost: Some(r.optimized.cost()),
                    iterations: Some(r.optim.iterations),
                    monotone: Some(r.optim.cost_trace.windows(2).all(|w| w[1] <= w[0])),
                    error: None,
                },
                Err(e) => {
                    log::warn!("run {run} failed: {e}");
                    MonteCarloRun {
                        run,
                        seed,
                        initial_cost: None,
                        final_cost: None,
                        iterations: None,
                        monotone: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let initial: Vec<f64> = rows.iter().filter_map(|r| r.initial_cost).collect();
    let finals: Vec<f64> = rows.iter().filter_map(|r| r.final_cost).collect();
    let ratios: Vec<f64> = rows
        .iter()
        .filter_map(|r| Some(r.final_cost? / r.initial_cost?))
        .collect();
    Ok(MonteCarloResult {
        master_seed,
        initial: Summary::of(&initial),
        r#final: Summary::of(&finals),
        ratio: Summary::of(&ratios),
        runs: rows,
    })
}
