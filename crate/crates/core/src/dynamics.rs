//! Discrete-time nonlinear state-space systems.
//!
//! A [`StateSpaceModel`] is a discrete map `x_{k+1} = f(x_k, u_k)`, `y_k = g(x_k, u_k)`
//! together with the Jacobians of `f`. Continuous-time right-hand sides are
//! turned into discrete maps with [`ForwardEuler`]; the built-in
//! [`MsdModel`] carries its own sample time and is discretized the same way.
//!
//! Matrices are dense, row-major `Vec<f64>` buffers. Sequences of vectors are
//! stored flat, one fixed-size block per time step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// States with a component above this magnitude are treated as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

pub trait StateSpaceModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Sample time in seconds, used to stamp exported trajectories.
    fn sample_time(&self) -> f64;

    fn step(&self, x: &[f64], u: &[f64], next: &mut [f64]);

    fn output(&self, x: &[f64], u: &[f64], y: &mut [f64]);

    /// Jacobians of the discrete map: `jac_x` is n_x × n_x, `jac_u` is n_x × n_u.
    fn step_jacobians(&self, x: &[f64], u: &[f64], jac_x: &mut [f64], jac_u: &mut [f64]);
}

/// A continuous-time right-hand side `dx/dt = f_c(x, u)`.
pub trait ContinuousModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]);
    fn rhs_jacobians(&self, x: &[f64], u: &[f64], jac_x: &mut [f64], jac_u: &mut [f64]);
    fn output(&self, x: &[f64], u: &[f64], y: &mut [f64]);
}

/// Forward Euler step `x + ts * f_c(x, u)`.
pub fn euler_step<M: ContinuousModel + ?Sized>(
    model: &M,
    ts: f64,
    x: &[f64],
    u: &[f64],
) -> Vec<f64> {
    let mut next = vec![0.0; x.len()];
    euler_step_into(model, ts, x, u, &mut next);
    next
}

fn euler_step_into<M: ContinuousModel + ?Sized>(
    model: &M,
    ts: f64,
    x: &[f64],
    u: &[f64],
    next: &mut [f64],
) {
    model.rhs(x, u, next);
    for (n, xi) in next.iter_mut().zip(x) {
        *n = xi + ts * *n;
    }
}

fn euler_jacobians<M: ContinuousModel + ?Sized>(
    model: &M,
    ts: f64,
    x: &[f64],
    u: &[f64],
    jac_x: &mut [f64],
    jac_u: &mut [f64],
) {
    let n_x = model.state_dim();
    model.rhs_jacobians(x, u, jac_x, jac_u);
    for v in jac_x.iter_mut() {
        *v *= ts;
    }
    for i in 0..n_x {
        jac_x[i * n_x + i] += 1.0;
    }
    for v in jac_u.iter_mut() {
        *v *= ts;
    }
}

/// Discretizes a continuous-time model with the forward Euler method.
#[derive(Debug, Clone)]
pub struct ForwardEuler<M> {
    model: M,
    ts: f64,
}

impl<M: ContinuousModel> ForwardEuler<M> {
    pub fn new(model: M, ts: f64) -> Result<Self> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::invalid(
                "ts",
                format!("sample time must be positive, got {ts}"),
            ));
        }
        Ok(Self { model, ts })
    }

    pub fn inner(&self) -> &M {
        &self.model
    }
}

impl<M: ContinuousModel> StateSpaceModel for ForwardEuler<M> {
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }
    fn input_dim(&self) -> usize {
        self.model.input_dim()
    }
    fn output_dim(&self) -> usize {
        self.model.output_dim()
    }
    fn sample_time(&self) -> f64 {
        self.ts
    }
    fn step(&self, x: &[f64], u: &[f64], next: &mut [f64]) {
        euler_step_into(&self.model, self.ts, x, u, next);
    }
    fn output(&self, x: &[f64], u: &[f64], y: &mut [f64]) {
        self.model.output(x, u, y);
    }
    fn step_jacobians(&self, x: &[f64], u: &[f64], jac_x: &mut [f64], jac_u: &mut [f64]) {
        euler_jacobians(&self.model, self.ts, x, u, jac_x, jac_u);
    }
}

/// Mass on a rail tied to the ceiling by a linear spring, with a linear
/// damper and an external horizontal force. The spring geometry makes the
/// restoring force nonlinear in the position.
///
/// State is `[position, velocity]`, input is the force, output is the position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsdModel {
    /// Mass [kg].
    pub m: f64,
    /// Spring stiffness [N/m].
    pub s: f64,
    /// Stretched length [m].
    pub a: f64,
    /// Tensionless length [m].
    pub l: f64,
    /// Damping [N s/m].
    pub c: f64,
    /// Sample time [s].
    pub ts: f64,
}

impl MsdModel {
    pub fn new(m: f64, s: f64, a: f64, l: f64, c: f64, ts: f64) -> Result<Self> {
        let model = Self { m, s, a, l, c, ts };
        model.validate("model")?;
        Ok(model)
    }

    pub fn benchmark() -> Self {
        Self {
            m: 5.0,
            s: 800.0,
            a: 0.25,
            l: 0.17,
            c: 10.0,
            ts: 0.01,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        let positive = [("m", self.m), ("s", self.s), ("a", self.a), ("ts", self.ts)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    format!("{prefix}.{name}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(
                format!("{prefix}.c"),
                format!("must be non-negative, got {}", self.c),
            ));
        }
        if !self.l.is_finite() {
            return Err(Error::invalid(format!("{prefix}.l"), "must be finite"));
        }
        Ok(())
    }

    /// Static force needed to hold the mass at position `x1`.
    pub fn static_force(&self, x1: f64) -> f64 {
        self.s * x1 - self.s * self.l * x1 / (x1 * x1 + self.a * self.a).sqrt()
    }
}

/// Continuous-time right-hand side of the mass-spring-damper benchmark.
pub fn msd_rhs(x: [f64; 2], force: f64, p: &MsdModel) -> [f64; 2] {
    let [x1, x2] = x;
    let r = (x1 * x1 + p.a * p.a).sqrt();
    let acc = (force - p.s * x1 + p.s * p.l * x1 / r - p.c * x2) / p.m;
    [x2, acc]
}

impl ContinuousModel for MsdModel {
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let d = msd_rhs([x[0], x[1]], u[0], self);
        dx.copy_from_slice(&d);
    }
    fn rhs_jacobians(&self, x: &[f64], _u: &[f64], jac_x: &mut [f64], jac_u: &mut [f64]) {
        let x1 = x[0];
        let r2 = x1 * x1 + self.a * self.a;
        let r = r2.sqrt();
        // d/dx1 [x1 / sqrt(x1^2 + a^2)] = a^2 / r^3
        let dspring = -self.s + self.s * self.l * self.a * self.a / (r2 * r);
        jac_x[0] = 0.0;
        jac_x[1] = 1.0;
        jac_x[2] = dspring / self.m;
        jac_x[3] = -self.c / self.m;
        jac_u[0] = 0.0;
        jac_u[1] = 1.0 / self.m;
    }
    fn output(&self, x: &[f64], _u: &[f64], y: &mut [f64]) {
        y[0] = x[0];
    }
}

impl StateSpaceModel for MsdModel {
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn sample_time(&self) -> f64 {
        self.ts
    }
    fn step(&self, x: &[f64], u: &[f64], next: &mut [f64]) {
        euler_step_into(self, self.ts, x, u, next);
    }
    fn output(&self, x: &[f64], u: &[f64], y: &mut [f64]) {
        ContinuousModel::output(self, x, u, y);
    }
    fn step_jacobians(&self, x: &[f64], u: &[f64], jac_x: &mut [f64], jac_u: &mut [f64]) {
        euler_jacobians(self, self.ts, x, u, jac_x, jac_u);
    }
}

/// Linear discrete-time model `x+ = A x + B u`, `y = x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    n_x: usize,
    n_u: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    ts: f64,
}

impl LinearModel {
    pub fn new(n_x: usize, n_u: usize, a: Vec<f64>, b: Vec<f64>, ts: f64) -> Result<Self> {
        if a.len() != n_x * n_x {
            return Err(Error::DimensionMismatch {
                context: "LinearModel A",
                expected: n_x * n_x,
                actual: a.len(),
            });
        }
        if b.len() != n_x * n_u {
            return Err(Error::DimensionMismatch {
                context: "LinearModel B",
                expected: n_x * n_u,
                actual: b.len(),
            });
        }
        if !(ts > 0.0) {
            return Err(Error::invalid("ts", "sample time must be positive"));
        }
        Ok(Self { n_x, n_u, a, b, ts })
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }
}

impl StateSpaceModel for LinearModel {
    fn state_dim(&self) -> usize {
        self.n_x
    }
    fn input_dim(&self) -> usize {
        self.n_u
    }
    fn output_dim(&self) -> usize {
        self.n_x
    }
    fn sample_time(&self) -> f64 {
        self.ts
    }
    fn step(&self, x: &[f64], u: &[f64], next: &mut [f64]) {
        for (i, ni) in next.iter_mut().enumerate().take(self.n_x) {
            let ax: f64 = (0..self.n_x).map(|j| self.a[i * self.n_x + j] * x[j]).sum();
            let bu: f64 = (0..self.n_u).map(|j| self.b[i * self.n_u + j] * u[j]).sum();
            *ni = ax + bu;
        }
    }
    fn output(&self, x: &[f64], _u: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
    fn step_jacobians(&self, _x: &[f64], _u: &[f64], jac_x: &mut [f64], jac_u: &mut [f64]) {
        jac_x.copy_from_slice(&self.a);
        jac_u.copy_from_slice(&self.b);
    }
}

/// `N` joint samples of a simulation: `states[k]` is the state at which
/// `inputs[k]` is applied. `terminal` is the state after the last input.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n_x: usize,
    n_u: usize,
    states: Vec<f64>,
    inputs: Vec<f64>,
    terminal: Vec<f64>,
    ts: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.inputs.len().checked_div(self.n_u).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.n_x
    }

    pub fn input_dim(&self) -> usize {
        self.n_u
    }

    pub fn sample_time(&self) -> f64 {
        self.ts
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.n_x..(k + 1) * self.n_x]
    }

    pub fn input(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.n_u..(k + 1) * self.n_u]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn terminal_state(&self) -> &[f64] {
        &self.terminal
    }

    /// Joint samples `z_k = [u_k, x_k]`, flat with stride `n_u + n_x`.
    pub fn joint_samples(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.len() * (self.n_u + self.n_x));
        for k in 0..self.len() {
            z.extend_from_slice(self.input(k));
            z.extend_from_slice(self.state(k));
        }
        z
    }
}

/// Parameter sensitivities along a trajectory. Each block is a row-major
/// matrix with `n_theta` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTrajectory {
    n_x: usize,
    n_u: usize,
    n_theta: usize,
    state_sens: Vec<f64>,
    input_sens: Vec<f64>,
    terminal: Vec<f64>,
}

impl SensitivityTrajectory {
    pub fn param_dim(&self) -> usize {
        self.n_theta
    }

    pub fn len(&self) -> usize {
        self.input_sens
            .len()
            .checked_div(self.n_u * self.n_theta)
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.n_x
    }

    pub fn input_dim(&self) -> usize {
        self.n_u
    }

    /// `∂x_k/∂θ`, n_x × n_theta.
    pub fn state(&self, k: usize) -> &[f64] {
        let w = self.n_x * self.n_theta;
        &self.state_sens[k * w..(k + 1) * w]
    }

    /// `∂u_k/∂θ`, n_u × n_theta.
    pub fn input(&self, k: usize) -> &[f64] {
        let w = self.n_u * self.n_theta;
        &self.input_sens[k * w..(k + 1) * w]
    }

    pub fn terminal_state(&self) -> &[f64] {
        &self.terminal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteadyStateOptions {
    /// Relative tolerance on the period-boundary state mismatch.
    pub tol: f64,
    pub max_periods: usize,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_periods: 50,
        }
    }
}

impl SteadyStateOptions {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid(
                format!("{prefix}.tol"),
                format!("must be positive, got {}", self.tol),
            ));
        }
        if self.max_periods == 0 {
            return Err(Error::invalid(
                format!("{prefix}.max_periods"),
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    /// One period of steady-state samples.
    pub trajectory: Trajectory,
    pub sensitivities: Option<SensitivityTrajectory>,
    /// Number of periods simulated, including the returned one.
    pub periods: usize,
    /// `‖x_N − x_0‖` of the returned period.
    pub defect: f64,
}

fn check_inputs(model: &dyn StateSpaceModel, inputs: &[f64], x0: &[f64]) -> Result<usize> {
    let n_u = model.input_dim();
    if x0.len() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "initial state",
            expected: model.state_dim(),
            actual: x0.len(),
        });
    }
    if n_u == 0 || !inputs.len().is_multiple_of(n_u) {
        return Err(Error::DimensionMismatch {
            context: "input sequence",
            expected: n_u,
            actual: inputs.len(),
        });
    }
    Ok(inputs.len() / n_u)
}

fn guard(x: &[f64], step: usize) -> Result<()> {
    let mag = x.iter().fold(
        0.0_f64,
        |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) },
    );
    if !mag.is_finite() || mag > DIVERGENCE_LIMIT {
        return Err(Error::Diverged {
            step,
            magnitude: mag,
        });
    }
    Ok(())
}

/// Propagates states (and optionally sensitivities) over one input block.
/// `step_offset` only affects the step index reported on divergence.
fn propagate(
    model: &dyn StateSpaceModel,
    inputs: &[f64],
    x0: &[f64],
    sens: Option<(&[f64], usize, &[f64])>,
    step_offset: usize,
) -> Result<(Trajectory, Option<SensitivityTrajectory>)> {
    let n_x = model.state_dim();
    let n_u = model.input_dim();
    let n = inputs.len() / n_u;
    let mut states = Vec::with_capacity(n * n_x);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n_x];
    guard(&x, step_offset)?;

    let Some((input_sens, n_theta, s0)) = sens else {
        for k in 0..n {
            states.extend_from_slice(&x);
            model.step(&x, &inputs[k * n_u..(k + 1) * n_u], &mut next);
            guard(&next, step_offset + k + 1)?;
            std::mem::swap(&mut x, &mut next);
        }
        let traj = Trajectory {
            n_x,
            n_u,
            states,
            inputs: inputs.to_vec(),
            terminal: x,
            ts: model.sample_time(),
        };
        return Ok((traj, None));
    };

    let w_x = n_x * n_theta;
    let w_u = n_u * n_theta;
    let mut jx = vec![0.0; n_x * n_x];
    let mut ju = vec![0.0; n_x * n_u];
    let mut s = s0.to_vec();
    let mut s_next = vec![0.0; w_x];
    let mut state_sens = Vec::with_capacity(n * w_x);
    for k in 0..n {
        let u = &inputs[k * n_u..(k + 1) * n_u];
        let su = &input_sens[k * w_u..(k + 1) * w_u];
        states.extend_from_slice(&x);
        state_sens.extend_from_slice(&s);
        model.step_jacobians(&x, u, &mut jx, &mut ju);
        model.step(&x, u, &mut next);
        guard(&next, step_offset + k + 1)?;
        sensitivity_step(n_x, n_u, n_theta, &jx, &ju, &s, su, &mut s_next);
        std::mem::swap(&mut x, &mut next);
        std::mem::swap(&mut s, &mut s_next);
    }
    let traj = Trajectory {
        n_x,
        n_u,
        states,
        inputs: inputs.to_vec(),
        terminal: x,
        ts: model.sample_time(),
    };
    let sens = SensitivityTrajectory {
        n_x,
        n_u,
        n_theta,
        state_sens,
        input_sens: input_sens.to_vec(),
        terminal: s,
    };
    Ok((traj, Some(sens)))
}

/// Simulates `x_{k+1} = f(x_k, u_k)` from `x0` over a flat input sequence
/// (`n_u` values per step).
pub fn simulate(model: &dyn StateSpaceModel, inputs: &[f64], x0: &[f64]) -> Result<Trajectory> {
    check_inputs(model, inputs, x0)?;
    Ok(propagate(model, inputs, x0, None, 0)?.0)
}

/// Simulates while propagating `∂x_k/∂θ` by the chain rule through the
/// discrete map. `input_sens` holds `∂u_k/∂θ` (n_u × n_theta per step) and
/// `x0_sens` the seed `∂x_0/∂θ` (n_x × n_theta).
pub fn simulate_with_sensitivities(
    model: &dyn StateSpaceModel,
    inputs: &[f64],
    input_sens: &[f64],
    n_theta: usize,
    x0: &[f64],
    x0_sens: &[f64],
) -> Result<(Trajectory, SensitivityTrajectory)> {
    let n = check_inputs(model, inputs, x0)?;
    check_sens(model, n, input_sens, n_theta, x0_sens)?;
    let (traj, sens) = propagate(model, inputs, x0, Some((input_sens, n_theta, x0_sens)), 0)?;
    Ok((traj, sens.expect("sensitivities requested")))
}

fn check_sens(
    model: &dyn StateSpaceModel,
    n: usize,
    input_sens: &[f64],
    n_theta: usize,
    x0_sens: &[f64],
) -> Result<()> {
    if input_sens.len() != n * model.input_dim() * n_theta {
        return Err(Error::DimensionMismatch {
            context: "input sensitivities",
            expected: n * model.input_dim() * n_theta,
            actual: input_sens.len(),
        });
    }
    if x0_sens.len() != model.state_dim() * n_theta {
        return Err(Error::DimensionMismatch {
            context: "initial state sensitivity",
            expected: model.state_dim() * n_theta,
            actual: x0_sens.len(),
        });
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Repeats one input period until the state at the period boundary is
/// periodic to `tol` relative (`‖x_N − x_0‖ ≤ tol·(1 + ‖x_0‖)`), and returns
/// that last period.
pub fn simulate_steady_state(
    model: &dyn StateSpaceModel,
    period_inputs: &[f64],
    x0: &[f64],
    opts: &SteadyStateOptions,
) -> Result<SteadyState> {
    steady_state_impl(model, period_inputs, x0, None, opts)
}

/// Steady-state simulation with sensitivities propagated alongside from a
/// zero seed. The sensitivity recursion shares the contraction of the
/// state recursion, so it settles together with the state.
pub fn simulate_steady_state_with_sensitivities(
    model: &dyn StateSpaceModel,
    period_inputs: &[f64],
    period_input_sens: &[f64],
    n_theta: usize,
    x0: &[f64],
    opts: &SteadyStateOptions,
) -> Result<SteadyState> {
    steady_state_impl(
        model,
        period_inputs,
        x0,
        Some((period_input_sens, n_theta)),
        opts,
    )
}

fn steady_state_impl(
    model: &dyn StateSpaceModel,
    period_inputs: &[f64],
    x0: &[f64],
    sens: Option<(&[f64], usize)>,
    opts: &SteadyStateOptions,
) -> Result<SteadyState> {
    opts.validate("steady_state")?;
    let n = check_inputs(model, period_inputs, x0)?;
    if n == 0 {
        return Err(Error::invalid(
            "inputs",
            "period must contain at least one sample",
        ));
    }
    let Some((input_sens, n_theta)) = sens else {
        return periodic_states(model, period_inputs, x0, opts);
    };
    check_sens(
        model,
        n,
        input_sens,
        n_theta,
        &vec![0.0; model.state_dim() * n_theta],
    )?;

    // The state recursion does not depend on the sensitivities, so the period
    // count is found first and only the returned period is recorded.
    let states_only = periodic_states(model, period_inputs, x0, opts)?;
    let mut x = x0.to_vec();
    let mut s = vec![0.0; model.state_dim() * n_theta];
    for _ in 1..states_only.periods {
        advance_sensitivities(model, period_inputs, input_sens, n_theta, &mut x, &mut s);
    }
    let (traj, traj_sens) = propagate(
        model,
        period_inputs,
        &x,
        Some((input_sens, n_theta, &s)),
        (states_only.periods - 1) * n,
    )?;
    debug_assert_eq!(traj.states, states_only.trajectory.states);
    Ok(SteadyState {
        trajectory: traj,
        sensitivities: traj_sens,
        periods: states_only.periods,
        defect: states_only.defect,
    })
}

fn periodic_states(
    model: &dyn StateSpaceModel,
    period_inputs: &[f64],
    x0: &[f64],
    opts: &SteadyStateOptions,
) -> Result<SteadyState> {
    let n = period_inputs.len() / model.input_dim();
    let mut x = x0.to_vec();
    let mut mismatch = f64::INFINITY;
    for period in 0..opts.max_periods {
        let (traj, _) = propagate(model, period_inputs, &x, None, period * n)?;
        let delta: Vec<f64> = traj.terminal.iter().zip(&x).map(|(a, b)| a - b).collect();
        let defect = norm(&delta);
        mismatch = defect / (1.0 + norm(&x));
        if mismatch <= opts.tol {
            return Ok(SteadyState {
                trajectory: traj,
                sensitivities: None,
                periods: period + 1,
                defect,
            });
        }
        x = traj.terminal;
    }
    Err(Error::SteadyStateNotConverged {
        periods: opts.max_periods,
        mismatch,
    })
}

/// One period of the joint state and sensitivity recursion, in place and
/// unrecorded. The caller has already checked the states stay bounded.
fn advance_sensitivities(
    model: &dyn StateSpaceModel,
    inputs: &[f64],
    input_sens: &[f64],
    n_theta: usize,
    x: &mut Vec<f64>,
    s: &mut Vec<f64>,
) {
    let n_x = model.state_dim();
    let n_u = model.input_dim();
    let w_u = n_u * n_theta;
    let mut jx = vec![0.0; n_x * n_x];
    let mut ju = vec![0.0; n_x * n_u];
    let mut next = vec![0.0; n_x];
    let mut s_next = vec![0.0; n_x * n_theta];
    for (k, u) in inputs.chunks_exact(n_u).enumerate() {
        model.step_jacobians(x, u, &mut jx, &mut ju);
        model.step(x, u, &mut next);
        sensitivity_step(
            n_x,
            n_u,
            n_theta,
            &jx,
            &ju,
            s,
            &input_sens[k * w_u..(k + 1) * w_u],
            &mut s_next,
        );
        std::mem::swap(x, &mut next);
        std::mem::swap(s, &mut s_next);
    }
}

/// `s_next = jx·s + ju·su`.
#[allow(clippy::too_many_arguments)]
fn sensitivity_step(
    n_x: usize,
    n_u: usize,
    n_theta: usize,
    jx: &[f64],
    ju: &[f64],
    s: &[f64],
    su: &[f64],
    s_next: &mut [f64],
) {
    for i in 0..n_x {
        let row = &mut s_next[i * n_theta..(i + 1) * n_theta];
        row.fill(0.0);
        for j in 0..n_x {
            let c = jx[i * n_x + j];
            if c != 0.0 {
                for (r, v) in row.iter_mut().zip(&s[j * n_theta..(j + 1) * n_theta]) {
                    *r += c * v;
                }
            }
        }
        for j in 0..n_u {
            let c = ju[i * n_u + j];
            if c != 0.0 {
                for (r, v) in row.iter_mut().zip(&su[j * n_theta..(j + 1) * n_theta]) {
                    *r += c * v;
                }
            }
        }
    }
}
