//! Projected limited-memory BFGS with a monotone backtracking line search.
//!
//! Box constraints are handled by projection: variables sitting on a bound
//! with the gradient pushing outward are frozen for the iteration, the
//! quasi-Newton direction is computed on the remaining free variables, and
//! every trial point is projected back into the box. When the quasi-Newton
//! direction is not a descent direction, or its line search fails, the
//! history is dropped and a projected steepest-descent step is tried.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimOptions {
    pub max_iterations: usize,
    /// Threshold on the infinity norm of the projected gradient.
    pub gradient_tolerance: f64,
    /// Threshold on `‖Δθ‖∞ / (1 + ‖θ‖∞)` of an accepted step.
    pub step_tolerance: f64,
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Armijo constant.
    pub sufficient_decrease: f64,
    /// Step shrink factor per rejected trial.
    pub backtracking: f64,
    pub max_backtracks: usize,
    /// Per-parameter `[lo, hi]`; `None` for an unconstrained problem.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            step_tolerance: 1e-12,
            memory: 10,
            sufficient_decrease: 1e-4,
            backtracking: 0.5,
            max_backtracks: 40,
            bounds: None,
        }
    }
}

impl OptimOptions {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let positive = [
            ("gradient_tolerance", self.gradient_tolerance),
            ("step_tolerance", self.step_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::invalid(
                    format!("{prefix}.{name}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        let unit = [
            ("sufficient_decrease", self.sufficient_decrease),
            ("backtracking", self.backtracking),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(
                    format!("{prefix}.{name}"),
                    format!("must lie in (0, 1), got {v}"),
                ));
            }
        }
        if self.memory == 0 {
            return Err(Error::invalid(
                format!("{prefix}.memory"),
                "must be at least 1",
            ));
        }
        if self.max_backtracks == 0 {
            return Err(Error::invalid(
                format!("{prefix}.max_backtracks"),
                "must be at least 1",
            ));
        }
        if let Some(b) = &self.bounds {
            for (i, (lo, hi)) in b.iter().enumerate() {
                if !(lo <= hi) {
                    return Err(Error::invalid(
                        format!("{prefix}.bounds[{i}]"),
                        format!("lower {lo} exceeds upper {hi}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    GradientTol,
    StepTol,
    MaxIter,
    LineSearchFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub theta_star: Vec<f64>,
    pub cost: f64,
    /// Cost at the start point followed by the cost after each iteration.
    pub cost_trace: Vec<f64>,
    /// Projected-gradient infinity norm, aligned with `cost_trace`.
    pub grad_norm_trace: Vec<f64>,
    /// Infinity norm of each accepted step; 0 for the start point.
    pub step_trace: Vec<f64>,
    pub iterations: usize,
    pub termination: TerminationReason,
    /// Number of objective calls (each returns cost and gradient).
    pub evaluations: usize,
}

struct Feasible<'a>(Option<&'a [(f64, f64)]>);

impl Feasible<'_> {
    fn project(&self, x: &mut [f64]) {
        if let Some(b) = self.0 {
            for (v, (lo, hi)) in x.iter_mut().zip(b) {
                *v = v.clamp(*lo, *hi);
            }
        }
    }

    fn projected_gradient_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        match self.0 {
            None => inf_norm(g),
            Some(b) => x
                .iter()
                .zip(g)
                .zip(b)
                .map(|((x, g), (lo, hi))| (x - (x - g).clamp(*lo, *hi)).abs())
                .fold(0.0, f64::max),
        }
    }

    /// True when moving variable `i` along `movement` would leave the box.
    fn blocked(&self, x: &[f64], i: usize, movement: f64) -> bool {
        let Some(b) = self.0 else { return false };
        let (lo, hi) = b[i];
        (x[i] <= lo && movement < 0.0) || (x[i] >= hi && movement > 0.0)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct History {
    cap: usize,
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    rho: Vec<f64>,
}

impl History {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dotp(&s, &y);
        let scale = dotp(&s, &s).sqrt() * dotp(&y, &y).sqrt();
        if !(sy > 1e-10 * scale) || !sy.is_finite() {
            return;
        }
        if self.s.len() == self.cap {
            self.s.remove(0);
            self.y.remove(0);
            self.rho.remove(0);
        }
        self.rho.push(1.0 / sy);
        self.s.push(s);
        self.y.push(y);
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    /// Two-loop recursion: returns `H g`.
    fn apply(&self, g: &[f64]) -> Vec<f64> {
        let m = self.s.len();
        let mut q = g.to_vec();
        let mut alpha = vec![0.0; m];
        for i in (0..m).rev() {
            alpha[i] = self.rho[i] * dotp(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        let last = m - 1;
        let gamma = dotp(&self.s[last], &self.y[last]) / dotp(&self.y[last], &self.y[last]);
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for (i, a) in alpha.iter().enumerate().take(m) {
            let beta = self.rho[i] * dotp(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (a - beta) * sj;
            }
        }
        q
    }
}

/// Minimizes `objective`, which returns the cost and its gradient together.
///
/// Errors returned by the objective at `theta0` are propagated. Errors or
/// non-finite values at trial points only reject that trial.
pub fn minimize<F>(mut objective: F, theta0: &[f64], options: &OptimOptions) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    options.validate("optimizer")?;
    let bounds = options.bounds.as_deref();
    if let Some(b) = bounds {
        if b.len() != theta0.len() {
            return Err(Error::DimensionMismatch {
                context: "optimizer bounds",
                expected: theta0.len(),
                actual: b.len(),
            });
        }
        if theta0.iter().zip(b).any(|(x, (lo, hi))| x < lo || x > hi) {
            return Err(Error::invalid("theta0", "start point violates the bounds"));
        }
    }
    let bx = Feasible(bounds);
    let n = theta0.len();

    let mut x = theta0.to_vec();
    let (mut f, mut g) = objective(&x)?;
    let mut evaluations = 1;
    if !f.is_finite() || g.len() != n || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteObjective);
    }

    let mut cost_trace = vec![f];
    let mut grad_norm_trace = vec![bx.projected_gradient_norm(&x, &g)];
    let mut step_trace = vec![0.0];
    let mut hist = History {
        cap: options.memory,
        s: Vec::new(),
        y: Vec::new(),
        rho: Vec::new(),
    };
    let mut termination = TerminationReason::MaxIter;
    let mut iterations = 0;

    for _ in 0..options.max_iterations {
        if *grad_norm_trace.last().unwrap() <= options.gradient_tolerance {
            termination = TerminationReason::GradientTol;
            break;
        }

        let mut accepted = None;
        for quasi_newton in [true, false] {
            if quasi_newton && hist.s.is_empty() {
                continue;
            }
            let mut gf = g.clone();
            for i in 0..n {
                if bx.blocked(&x, i, -g[i]) {
                    gf[i] = 0.0;
                }
            }
            let mut d: Vec<f64> = if quasi_newton {
                hist.apply(&gf).iter().map(|v| -v).collect()
            } else {
                let scale = inf_norm(&gf);
                if scale == 0.0 {
                    break;
                }
                gf.iter().map(|v| -v / scale).collect()
            };
            for i in 0..n {
                if bx.blocked(&x, i, -g[i]) || bx.blocked(&x, i, d[i]) {
                    d[i] = 0.0;
                }
            }
            if !(dotp(&g, &d) < 0.0) {
                hist.clear();
                continue;
            }
            if let Some(found) = line_search(
                &mut objective,
                &bx,
                &x,
                f,
                &g,
                &d,
                options,
                &mut evaluations,
            ) {
                accepted = Some(found);
                break;
            }
            hist.clear();
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            termination = TerminationReason::LineSearchFailure;
            break;
        };
        iterations += 1;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let step = inf_norm(&s);
        hist.push(s, y);
        x = x_new;
        f = f_new;
        g = g_new;
        cost_trace.push(f);
        grad_norm_trace.push(bx.projected_gradient_norm(&x, &g));
        step_trace.push(step);
        log::debug!(
            "iter {iterations}: cost {f:.6e} |pg| {:.3e} step {step:.3e}",
            grad_norm_trace.last().unwrap()
        );
        if step <= options.step_tolerance * (1.0 + inf_norm(&x)) {
            termination = TerminationReason::StepTol;
            break;
        }
    }
    if termination == TerminationReason::MaxIter
        && *grad_norm_trace.last().unwrap() <= options.gradient_tolerance
    {
        termination = TerminationReason::GradientTol;
    }

    Ok(OptimResult {
        theta_star: x,
        cost: f,
        cost_trace,
        grad_norm_trace,
        step_trace,
        iterations,
        termination,
        evaluations,
    })
}

#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    objective: &mut F,
    bx: &Feasible<'_>,
    x: &[f64],
    f: f64,
    g: &[f64],
    d: &[f64],
    options: &OptimOptions,
    evaluations: &mut usize,
) -> Option<(Vec<f64>, f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut alpha = 1.0;
    for _ in 0..options.max_backtracks {
        let mut xt: Vec<f64> = x.iter().zip(d).map(|(x, d)| x + alpha * d).collect();
        bx.project(&mut xt);
        let gs: f64 = g
            .iter()
            .zip(xt.iter().zip(x))
            .map(|(g, (a, b))| g * (a - b))
            .sum();
        if gs == 0.0 {
            return None;
        }
        if gs < 0.0 {
            *evaluations += 1;
            if let Ok((ft, gt)) = objective(&xt) {
                if ft.is_finite()
                    && gt.iter().all(|v| v.is_finite())
                    && ft <= f + options.sufficient_decrease * gs
                    && ft < f
                {
                    return Some((xt, ft, gt));
                }
            }
        }
        alpha *= options.backtracking;
    }
    None
}

/// Central-difference gradient of a cost-only objective.
pub fn numeric_gradient<F>(mut objective: F, theta: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::invalid("step", "must be positive"));
    }
    let mut t = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        t[i] = theta[i] + step;
        let fp = objective(&t)?;
        t[i] = theta[i] - step;
        let fm = objective(&t)?;
        t[i] = theta[i];
        grad.push((fp - fm) / (2.0 * step));
    }
    Ok(grad)
}
