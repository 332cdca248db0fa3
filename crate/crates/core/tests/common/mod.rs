#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use spacefill::cost::{build_uniform_grid, DomainBox, KernelConfig, SpaceFillingCost};
use spacefill::dynamics::{LinearModel, MsdModel, StateSpaceModel, SteadyStateOptions};
use spacefill::harness::{DesignProblem, Parametrization};
use spacefill::input::{FreeParams, MultisineSpec};

/// `C = (1/n) Σ_i 1/(ε + d_i)` by the textbook double loop.
pub fn naive_cost(centers: &[f64], samples: &[f64], variances: &[f64], eps: f64) -> f64 {
    let dim = variances.len();
    let n = centers.len() / dim;
    let mut total = 0.0;
    for c in centers.chunks(dim) {
        let mut d = 0.0;
        for z in samples.chunks(dim) {
            let mut q = 0.0;
            for j in 0..dim {
                q += (c[j] - z[j]) * (c[j] - z[j]) / variances[j];
            }
            d += (-0.5 * q).exp();
        }
        total += 1.0 / (eps + d);
    }
    total / n as f64
}

/// `∂C/∂z_kj` by differentiating the double loop term by term.
pub fn naive_gradient(centers: &[f64], samples: &[f64], variances: &[f64], eps: f64) -> Vec<f64> {
    let dim = variances.len();
    let n = (centers.len() / dim) as f64;
    let mut grad = vec![0.0; samples.len()];
    for c in centers.chunks(dim) {
        let kernels: Vec<f64> = samples
            .chunks(dim)
            .map(|z| {
                let q: f64 = (0..dim).map(|j| (c[j] - z[j]).powi(2) / variances[j]).sum();
                (-0.5 * q).exp()
            })
            .collect();
        let d: f64 = kernels.iter().sum();
        // d/dd [1/(eps+d)] = -1/(eps+d)^2 ; dK/dz_j = K (c_j - z_j)/var_j
        let outer = -1.0 / ((eps + d) * (eps + d) * n);
        for (k, z) in samples.chunks(dim).enumerate() {
            for j in 0..dim {
                grad[k * dim + j] += outer * kernels[k] * (c[j] - z[j]) / variances[j];
            }
        }
    }
    grad
}

pub fn central_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut t = x.to_vec();
    (0..x.len())
        .map(|i| {
            t[i] = x[i] + h;
            let fp = f(&t);
            t[i] = x[i] - h;
            let fm = f(&t);
            t[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `‖a − b‖∞ / ‖b‖∞`, with `b` the reference.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    inf_norm(&diff) / inf_norm(b).max(f64::MIN_POSITIVE)
}

/// Static force balance of the benchmark spring written out independently:
/// `F = s x − s l x / sqrt(x² + a²)`.
pub fn msd_static_force(x: f64) -> f64 {
    let (s, a, l) = (800.0, 0.25, 0.17);
    s * x - s * l * x / (x * x + a * a).sqrt()
}

pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    assert!(f(lo) * f(hi) <= 0.0, "bracket does not change sign");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Tight steady-state settings so finite differences see a smooth objective.
pub fn tight_steady_state() -> SteadyStateOptions {
    SteadyStateOptions {
        tol: 1e-14,
        max_periods: 2000,
    }
}

/// A randomized small design problem: one- or two-state model, 2 to 8
/// parameters, `N ≤ 128` samples per period, at most 64 grid centers.
pub struct SmallInstance {
    pub problem: DesignProblem,
    pub theta: Vec<f64>,
    pub label: String,
}

/// Redraws until the instance reaches a periodic steady state and its
/// gradient is resolvable by finite differences (`‖∇C‖∞ ≥ 1e-6·C`). Returns
/// the instance and the number of rejected draws.
pub fn small_instance_counted(rng: &mut ChaCha8Rng) -> (SmallInstance, usize) {
    let mut rejected = 0;
    loop {
        let inst = draw_instance(rng);
        if let Ok((c, g)) = inst.problem.value_and_gradient(&inst.theta) {
            if inf_norm(&g) >= 1e-6 * c {
                return (inst, rejected);
            }
        }
        rejected += 1;
    }
}

pub fn small_instance(rng: &mut ChaCha8Rng) -> SmallInstance {
    small_instance_counted(rng).0
}

fn draw_instance(rng: &mut ChaCha8Rng) -> SmallInstance {
    let two_states = rng.random_bool(0.5);
    let n = [64usize, 96, 128][rng.random_range(0..3)];
    let free = if rng.random_bool(0.5) {
        FreeParams::PHASES
    } else {
        FreeParams {
            phases: true,
            amplitudes: true,
        }
    };
    let n_params = rng.random_range(2..=8usize);
    let lines = if free.amplitudes {
        (n_params / 2).max(1)
    } else {
        n_params
    };
    let line_min = rng.random_range(1..=(n / 2 - lines - 1));
    let line_max = line_min + lines - 1;
    let phases: Vec<f64> = (0..lines)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();

    let (model, fs, lower, upper, std): (Box<dyn StateSpaceModel>, f64, Vec<f64>, Vec<f64>, f64) =
        if two_states {
            let std = rng.random_range(20.0..90.0);
            (
                Box::new(MsdModel::benchmark()),
                100.0,
                vec![-400.0, -2.0, -20.0],
                vec![400.0, 2.0, 20.0],
                std,
            )
        } else {
            let a = rng.random_range(-0.8..0.8);
            let b = rng.random_range(0.2..1.5);
            (
                Box::new(LinearModel::new(1, 1, vec![a], vec![b], 0.1).unwrap()),
                10.0,
                vec![-3.0, -6.0],
                vec![3.0, 6.0],
                1.0,
            )
        };
    let mut spec = MultisineSpec::with_target_std(n, fs, line_min, line_max, std, phases).unwrap();
    if free.amplitudes {
        let amps = spec
            .amplitudes()
            .iter()
            .map(|a| a * rng.random_range(0.6..1.4))
            .collect();
        spec = spec.with_amplitudes(amps).unwrap();
    }
    let dim = lower.len();
    let per_axis = if dim == 3 { 4 } else { 8 };
    let bounds = DomainBox::new(lower.clone(), upper.clone()).unwrap();
    let grid = build_uniform_grid(&bounds, &vec![per_axis; dim]).unwrap();
    let variances: Vec<f64> = (0..dim)
        .map(|j| {
            let spacing = (upper[j] - lower[j]) / (per_axis - 1) as f64;
            (spacing * rng.random_range(0.5..1.5)).powi(2)
        })
        .collect();
    let kernel = KernelConfig::new(variances, rng.random_range(0.005..0.05)).unwrap();
    let cost = SpaceFillingCost::new(grid, kernel).unwrap();
    let param = Parametrization::Multisine { spec, free };
    let label = format!(
        "{} states, {} params, N = {n}, lines {line_min}..={line_max}",
        dim - 1,
        param.param_count()
    );
    let problem = DesignProblem::new(model, param, cost, tight_steady_state()).unwrap();
    let theta = problem.initial_params();
    SmallInstance {
        problem,
        theta,
        label,
    }
}

/// Relative error of the analytic end-to-end gradient against central
/// differences of the cost-only objective. The step balances truncation
/// (`O(h²)`) against the roundoff of the steady-state objective.
pub fn gradient_error(inst: &SmallInstance) -> f64 {
    let (_, analytic) = inst.problem.value_and_gradient(&inst.theta).unwrap();
    let numeric = central_difference(|t| inst.problem.value(t).unwrap(), &inst.theta, 1e-4);
    rel_err(&analytic, &numeric)
}
