//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! The Monte-Carlo study on the benchmark dominates the runtime (two full
//! 20-run studies plus one design). Set `SPACEFILL_RECORD_BASELINE=1` to
//! (re)write the recorded Monte-Carlo table instead of comparing against it.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spacefill::cost::{build_uniform_grid, DomainBox, DomainGrid, KernelConfig, SpaceFillingCost};
use spacefill::dynamics::{
    simulate, simulate_steady_state, MsdModel, StateSpaceModel, SteadyStateOptions,
};
use spacefill::harness::export::montecarlo_csv;
use spacefill::harness::{
    initial_parametrization, run_design, run_monte_carlo, run_schroeder_baseline, ExperimentConfig,
    MonteCarloResult,
};
use spacefill::input::{crest_factor, schroeder_phases, MultisineSpec};
use spacefill::optimizer::{minimize, OptimOptions, TerminationReason};

const GRADIENT_INSTANCES: usize = 20;
const GRADIENT_REL_TOL: f64 = 1e-5;
const ORACLE_REL_TOL: f64 = 1e-12;
const CREST_TARGET: f64 = 1.87;
const CREST_TOL: f64 = 0.02;
const MC_RUNS: usize = 20;
const MC_MASTER_SEED: u64 = 1;
const MEDIAN_RATIO_MAX: f64 = 0.1;
const SPECTRUM_ABS_TOL: f64 = 1e-10;
const SPREAD_MAX: f64 = 0.5;
const BASELINE_REL_TOL: f64 = 1e-9;
const EQUILIBRIUM_REL_TOL: f64 = 1e-3;
const PERIODICITY_REL_TOL: f64 = 1e-9;

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, id: u32, title: &str, ok: bool, detail: String) {
        if !ok {
            self.failures += 1;
        }
        println!(
            "{} [{id:>2}] {title}: {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
}

fn benchmark() -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.json");
    ExperimentConfig::load(&path).unwrap().resolve().unwrap()
}

fn criterion_1(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst: f64 = 0.0;
    let mut rejected = 0;
    let mut shapes = [0usize; 2];
    for _ in 0..GRADIENT_INSTANCES {
        let (inst, skipped) = small_instance_counted(&mut rng);
        rejected += skipped;
        shapes[inst.problem.model().state_dim() - 1] += 1;
        worst = worst.max(gradient_error(&inst));
    }
    r.check(
        1,
        "end-to-end gradient vs central differences",
        worst < GRADIENT_REL_TOL,
        format!(
            "{GRADIENT_INSTANCES} instances ({} one-state, {} two-state), worst relative error {worst:.2e} < {GRADIENT_REL_TOL:e} ({rejected} flat or non-periodic draws redrawn)",
            shapes[0], shapes[1]
        ),
    );
}

fn criterion_2(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for case in 0..24 {
        let dim = 1 + case % 3;
        let pts: Vec<usize> = match dim {
            1 => vec![rng.random_range(2..=512)],
            2 => vec![rng.random_range(2..=22), rng.random_range(2..=22)],
            _ => vec![
                rng.random_range(2..=8),
                rng.random_range(2..=8),
                rng.random_range(2..=8),
            ],
        };
        let n_samples = rng.random_range(1..=512);
        let samples: Vec<f64> = (0..n_samples * dim)
            .map(|_| rng.random_range(-1.3..1.3))
            .collect();
        let variances: Vec<f64> = (0..dim).map(|_| rng.random_range(0.005..0.5)).collect();
        let kernel = KernelConfig::new(variances.clone(), rng.random_range(1e-3..0.1)).unwrap();
        let bounds = DomainBox::new(vec![-1.0; dim], vec![1.0; dim]).unwrap();
        let grids = [
            build_uniform_grid(&bounds, &pts).unwrap(),
            DomainGrid::from_centers(
                bounds.clone(),
                (0..rng.random_range(1..=512) * dim)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap(),
        ];
        for grid in grids {
            let c_ref = naive_cost(grid.centers(), &samples, &variances, kernel.epsilon);
            let g_ref = naive_gradient(grid.centers(), &samples, &variances, kernel.epsilon);
            let cost = SpaceFillingCost::new(grid, kernel.clone()).unwrap();
            let (c, g) = cost.value_and_gradient(&samples).unwrap();
            worst = worst
                .max((c - c_ref).abs() / c_ref)
                .max(rel_err(&g, &g_ref));
            cases += 1;
        }
    }
    r.check(
        2,
        "cost and gradient vs naive double loop",
        worst <= ORACLE_REL_TOL,
        format!("{cases} instances up to N = 512, n = 512, worst relative error {worst:.2e} <= {ORACLE_REL_TOL:e}"),
    );
}

fn criterion_3(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let trials = 200;
    for _ in 0..trials {
        let bounds = DomainBox::new(vec![-1.0; 3], vec![1.0; 3]).unwrap();
        let grid = build_uniform_grid(&bounds, &[5, 4, 6]).unwrap();
        let variances: Vec<f64> = (0..3).map(|_| rng.random_range(0.02..0.5)).collect();
        let kernel = KernelConfig::new(variances, rng.random_range(1e-3..0.1)).unwrap();
        let cost = SpaceFillingCost::new(grid, kernel.clone()).unwrap();
        let n = rng.random_range(0..200);
        let mut z: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-1.5..1.5)).collect();
        let before = cost.value(&z).unwrap();
        z.extend((0..3).map(|_| rng.random_range(-1.0..1.0)));
        let after = cost.value(&z).unwrap();
        let bounded = |c: f64| c > 0.0 && c <= 1.0 / kernel.epsilon;
        if !(after < before && bounded(before) && bounded(after)) {
            violations += 1;
        }
    }
    r.check(
        3,
        "appending a sample strictly lowers C, 0 < C <= 1/eps",
        violations == 0,
        format!("{trials} random instances, {violations} violations"),
    );
}

fn criterion_4(r: &mut Report, bench: &ExperimentConfig) -> Option<f64> {
    let spec =
        MultisineSpec::with_target_std(2048, 100.0, 21, 204, 160.0, schroeder_phases(184)).unwrap();
    let direct = crest_factor(&spec.generate()).unwrap();
    let baseline = run_schroeder_baseline(bench);
    let (cf, cost) = match &baseline {
        Ok(b) => (b.crest_factor.unwrap_or(f64::NAN), Some(b.cost())),
        Err(_) => (f64::NAN, None),
    };
    r.check(
        4,
        "Schroeder multisine crest factor",
        (cf - CREST_TARGET).abs() <= CREST_TOL && (direct - cf).abs() < 1e-12,
        format!("crest factor {cf:.4} (target {CREST_TARGET} +/- {CREST_TOL})"),
    );
    cost
}

fn monte_carlo(bench: &ExperimentConfig, label: &str) -> MonteCarloResult {
    let start = Instant::now();
    let mc = run_monte_carlo(bench, MC_RUNS, MC_MASTER_SEED).unwrap();
    eprintln!(
        "  {label}: {MC_RUNS} benchmark designs in {:.0} s",
        start.elapsed().as_secs_f64()
    );
    mc
}

fn baseline_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/montecarlo_baseline.csv")
}

/// Compares the run table against the recorded one, field by field.
fn matches_baseline(table: &str, recorded: &str) -> Result<(), String> {
    let a: Vec<&str> = table.lines().collect();
    let b: Vec<&str> = recorded.lines().collect();
    if a.len() != b.len() {
        return Err(format!("{} rows vs {} recorded", a.len(), b.len()));
    }
    for (row, (x, y)) in a.iter().zip(&b).enumerate() {
        for (col, (p, q)) in x.split(',').zip(y.split(',')).enumerate() {
            let same = match (p.parse::<f64>(), q.parse::<f64>()) {
                (Ok(p), Ok(q)) => (p - q).abs() <= BASELINE_REL_TOL * q.abs().max(1e-300),
                _ => p == q,
            };
            if !same {
                return Err(format!("row {row} column {col}: {p} vs recorded {q}"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut r = Report { failures: 0 };
    let bench = benchmark();

    criterion_1(&mut r);
    criterion_2(&mut r);
    criterion_3(&mut r);
    let schroeder_cost = criterion_4(&mut r, &bench);

    eprintln!("  running the benchmark design and Monte-Carlo studies (slow)");
    let design = run_design(&bench).unwrap();
    let mc = monte_carlo(&bench, "first study");
    let finals: Vec<f64> = mc.runs.iter().filter_map(|x| x.final_cost).collect();
    let all_ok = mc.runs.iter().all(|x| x.error.is_none());

    // 5
    let improved = mc
        .runs
        .iter()
        .all(|x| matches!((x.initial_cost, x.final_cost), (Some(i), Some(f)) if f < i));
    let ratio = mc.ratio.as_ref().map_or(f64::NAN, |s| s.median);
    r.check(
        5,
        "benchmark cost reduction",
        all_ok && improved && ratio <= MEDIAN_RATIO_MAX,
        format!(
            "{MC_RUNS} seeds, median final/initial {ratio:.4} <= {MEDIAN_RATIO_MAX}, every run improved: {improved}; \
             seed {} design {:.3} -> {:.3}",
            design.seed,
            design.initial.cost(),
            design.optimized.cost()
        ),
    );

    // 6
    let median_random = mc.initial.as_ref().map_or(f64::NAN, |s| s.median);
    let worst_optimized = finals
        .iter()
        .copied()
        .fold(design.optimized.cost(), f64::max);
    let schroeder = schroeder_cost.unwrap_or(f64::NAN);
    r.check(
        6,
        "cost(optimized) < cost(Schroeder) < median cost(random phase)",
        worst_optimized < schroeder && schroeder < median_random,
        format!("worst optimized {worst_optimized:.3} < Schroeder {schroeder:.3} < median random {median_random:.3}"),
    );

    // 7
    let spectrum_dev = design
        .initial
        .spectrum
        .iter()
        .zip(&design.optimized.spectrum)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    r.check(
        7,
        "amplitude spectrum preserved by optimization",
        spectrum_dev <= SPECTRUM_ABS_TOL,
        format!("max per-line deviation {spectrum_dev:.2e} <= {SPECTRUM_ABS_TOL:e}"),
    );

    // 8
    let rerun = monte_carlo(&bench, "repeat study");
    let table = montecarlo_csv(&mc);
    let identical = table == montecarlo_csv(&rerun)
        && mc.runs.iter().zip(&rerun.runs).all(|(a, b)| {
            a.final_cost.map(f64::to_bits) == b.final_cost.map(f64::to_bits)
                && a.initial_cost.map(f64::to_bits) == b.initial_cost.map(f64::to_bits)
        });
    let spread = mc.r#final.as_ref().map_or(f64::NAN, |s| s.iqr() / s.median);
    let baseline = if std::env::var_os("SPACEFILL_RECORD_BASELINE").is_some() {
        std::fs::create_dir_all(baseline_path().parent().unwrap()).unwrap();
        std::fs::write(baseline_path(), &table).unwrap();
        Ok("recorded".to_string())
    } else {
        match std::fs::read_to_string(baseline_path()) {
            Ok(recorded) => {
                matches_baseline(&table, &recorded).map(|_| "matches recorded table".to_string())
            }
            Err(e) => Err(format!("no recorded table: {e}")),
        }
    };
    r.check(
        8,
        "Monte-Carlo robustness and reproducibility",
        all_ok && spread < SPREAD_MAX && identical && baseline.is_ok(),
        format!(
            "{}/{MC_RUNS} runs completed, final-cost IQR/median {spread:.3} < {SPREAD_MAX}, re-run bit-identical: {identical}, baseline: {}",
            finals.len(),
            baseline.unwrap_or_else(|e| e)
        ),
    );

    // 9
    let model = MsdModel::benchmark();
    let rest = simulate(&model, &vec![0.0; 1000], &[0.0, 0.0]).unwrap();
    let origin_kept =
        (0..rest.len()).all(|k| rest.state(k) == [0.0, 0.0]) && rest.terminal_state() == [0.0, 0.0];
    let mut eq_err: f64 = 0.0;
    let opts = SteadyStateOptions::default();
    for force in [-300.0, -40.0, 25.0, 150.0, 400.0] {
        let ss = simulate_steady_state(&model, &vec![force; 200], &[0.0, 0.0], &opts).unwrap();
        let oracle = bisect(|x| msd_static_force(x) - force, -5.0, 5.0);
        eq_err = eq_err.max((ss.trajectory.state(0)[0] - oracle).abs() / oracle.abs());
    }
    let mut defect: f64 = 0.0;
    for theta in [&design.initial.theta, &design.optimized.theta] {
        let p = initial_parametrization(&bench)
            .unwrap()
            .with_params(theta)
            .unwrap();
        let u = p.signal();
        let ss = simulate_steady_state(&model, &u, &[0.0, 0.0], &opts).unwrap();
        let n = u.len();
        let mut wrap = [0.0; 2];
        model.step(ss.trajectory.state(n - 1), &u[n - 1..], &mut wrap);
        let x0 = ss.trajectory.state(0);
        let d = ((wrap[0] - x0[0]).powi(2) + (wrap[1] - x0[1]).powi(2)).sqrt();
        defect = defect.max(d / (1.0 + (x0[0].powi(2) + x0[1].powi(2)).sqrt()));
    }
    r.check(
        9,
        "dynamics sanity",
        origin_kept && eq_err <= EQUILIBRIUM_REL_TOL && defect <= PERIODICITY_REL_TOL,
        format!(
            "origin preserved: {origin_kept}, equilibrium vs bisection {eq_err:.2e} <= {EQUILIBRIUM_REL_TOL:e}, \
             periodicity defect {defect:.2e} <= {PERIODICITY_REL_TOL:e}"
        ),
    );

    // 10
    let sphere = |x: &[f64]| -> spacefill::Result<(f64, Vec<f64>)> {
        Ok((
            x.iter().map(|v| v * v).sum(),
            x.iter().map(|v| 2.0 * v).collect(),
        ))
    };
    let free = minimize(sphere, &[3.0, 4.0], &OptimOptions::default()).unwrap();
    let free_norm = free.theta_star.iter().map(|v| v * v).sum::<f64>().sqrt();
    let boxed = minimize(
        sphere,
        &[1.5, 2.0],
        &OptimOptions {
            bounds: Some(vec![(1.0, 2.0); 2]),
            ..OptimOptions::default()
        },
    )
    .unwrap();
    let monotone = mc
        .runs
        .iter()
        .chain(&rerun.runs)
        .all(|x| x.monotone == Some(true))
        && design.optim.cost_trace.windows(2).all(|w| w[1] <= w[0]);
    r.check(
        10,
        "optimizer sanity",
        free_norm < 1e-6
            && free.iterations <= 50
            && boxed.theta_star == [1.0, 1.0]
            && boxed.termination != TerminationReason::LineSearchFailure
            && monotone,
        format!(
            "quadratic |theta| {free_norm:.1e} in {} iterations, bounded optimum {:?}, {} benchmark cost traces monotone: {monotone}",
            free.iterations,
            boxed.theta_star,
            2 * MC_RUNS + 1
        ),
    );

    println!(
        "{} criteria failed, total time {:.0} s",
        r.failures,
        started.elapsed().as_secs_f64()
    );
    if r.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
