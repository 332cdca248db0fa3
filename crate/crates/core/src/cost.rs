//! Kernel-based space-filling cost over a gridded region of interest.
//!
//! For joint input-state samples `z_k` and grid centers `c_i`, the local data
//! density at a center is a squared-exponential weighted count
//!
//! `d_i = Σ_k exp(−½ Σ_j (c_ij − z_kj)² / σ_j²)`
//!
//! and the cost is the mean inverse density, regularized by `ε`:
//!
//! `C = (1/n) Σ_i 1 / (ε + d_i)`.
//!
//! Empty regions contribute `1/ε` each and well-covered regions little, so
//! the cost rewards spreading samples over the whole domain.
//!
//! Uniform (tensor-product) grids are evaluated through per-axis kernel
//! tables: the kernel factorizes over dimensions, so each sample needs only
//! `Σ_j p_j` exponentials instead of `n`. Explicit center lists fall back to
//! the direct pairwise sum. Both paths parallelize over independent output
//! entries and reduce each entry sequentially, so results do not depend on
//! the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::SensitivityTrajectory;
use crate::error::{Error, Result};

/// Axis-aligned box over `z = [u, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "domain bounds",
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(
                    format!("domain[{j}]"),
                    format!("lower bound {lo} must be below upper bound {hi}"),
                ));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

/// Number of grid points per dimension for a requested spacing, rounding
/// the interval count to the nearest integer.
pub fn points_for_spacing(bounds: &DomainBox, spacing: &[f64]) -> Result<Vec<usize>> {
    if spacing.len() != bounds.dim() {
        return Err(Error::DimensionMismatch {
            context: "grid spacing",
            expected: bounds.dim(),
            actual: spacing.len(),
        });
    }
    spacing
        .iter()
        .zip(bounds.lower.iter().zip(&bounds.upper))
        .enumerate()
        .map(|(j, (h, (lo, hi)))| {
            if !(*h > 0.0 && h.is_finite()) {
                return Err(Error::invalid(
                    format!("spacing[{j}]"),
                    format!("must be positive, got {h}"),
                ));
            }
            let intervals = ((hi - lo) / h).round();
            if intervals < 1.0 {
                return Err(Error::invalid(
                    format!("spacing[{j}]"),
                    "larger than the domain width",
                ));
            }
            Ok(intervals as usize + 1)
        })
        .collect()
}

/// Center points `c_i` of the region of interest, stored row-major
/// (`n × n_z`). Tensor grids keep their per-axis coordinates; the last axis
/// varies fastest in the center ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainGrid {
    bounds: DomainBox,
    axes: Option<Vec<Vec<f64>>>,
    centers: Vec<f64>,
}

/// Evenly spaced grid including both endpoints of every dimension.
pub fn build_uniform_grid(bounds: &DomainBox, points_per_dim: &[usize]) -> Result<DomainGrid> {
    if points_per_dim.len() != bounds.dim() {
        return Err(Error::DimensionMismatch {
            context: "points per dimension",
            expected: bounds.dim(),
            actual: points_per_dim.len(),
        });
    }
    let mut axes = Vec::with_capacity(bounds.dim());
    for (j, &p) in points_per_dim.iter().enumerate() {
        if p < 2 {
            return Err(Error::invalid(
                format!("points_per_dim[{j}]"),
                "need at least 2 points",
            ));
        }
        let (lo, hi) = (bounds.lower[j], bounds.upper[j]);
        let h = (hi - lo) / (p - 1) as f64;
        let mut axis: Vec<f64> = (0..p).map(|a| lo + a as f64 * h).collect();
        axis[p - 1] = hi;
        axes.push(axis);
    }
    DomainGrid::tensor(bounds.clone(), axes)
}

impl DomainGrid {
    /// Tensor-product grid from explicit per-axis coordinates.
    pub fn tensor(bounds: DomainBox, axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.len() != bounds.dim() {
            return Err(Error::DimensionMismatch {
                context: "grid axes",
                expected: bounds.dim(),
                actual: axes.len(),
            });
        }
        for (j, axis) in axes.iter().enumerate() {
            if axis.is_empty() {
                return Err(Error::invalid(format!("axes[{j}]"), "empty axis"));
            }
            if axis
                .iter()
                .any(|&v| v < bounds.lower[j] || v > bounds.upper[j])
            {
                return Err(Error::invalid(
                    format!("axes[{j}]"),
                    "coordinate outside the domain box",
                ));
            }
        }
        let d = axes.len();
        let n: usize = axes.iter().map(Vec::len).product();
        let mut centers = Vec::with_capacity(n * d);
        let mut idx = vec![0usize; d];
        for _ in 0..n {
            centers.extend(idx.iter().enumerate().map(|(j, &a)| axes[j][a]));
            for j in (0..d).rev() {
                idx[j] += 1;
                if idx[j] < axes[j].len() {
                    break;
                }
                idx[j] = 0;
            }
        }
        Ok(Self {
            bounds,
            axes: Some(axes),
            centers,
        })
    }

    /// Arbitrary (possibly non-uniform) center list, row-major `n × n_z`.
    /// Centers are not weighted.
    pub fn from_centers(bounds: DomainBox, centers: Vec<f64>) -> Result<Self> {
        let d = bounds.dim();
        if centers.is_empty() || !centers.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                context: "grid centers",
                expected: d,
                actual: centers.len(),
            });
        }
        if centers.chunks(d).any(|c| !bounds.contains(c)) {
            return Err(Error::invalid("centers", "center outside the domain box"));
        }
        Ok(Self {
            bounds,
            axes: None,
            centers,
        })
    }

    pub fn bounds(&self) -> &DomainBox {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn len(&self) -> usize {
        self.centers.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn center(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.centers[i * d..(i + 1) * d]
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn axes(&self) -> Option<&[Vec<f64>]> {
        self.axes.as_deref()
    }

    /// `None` for explicit center lists.
    pub fn points_per_dim(&self) -> Option<Vec<usize>> {
        self.axes
            .as_ref()
            .map(|axes| axes.iter().map(Vec::len).collect())
    }
}

/// Diagonal kernel covariance and the `ε` regularizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// Per-dimension kernel variances `σ_j²`, in squared units of `z_j`.
    pub variances: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Optional Mahalanobis-distance cutoff; pairs farther apart are dropped.
    #[serde(default)]
    pub truncation: Option<f64>,
}

pub const DEFAULT_EPSILON: f64 = 0.01;

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl KernelConfig {
    pub fn new(variances: Vec<f64>, epsilon: f64) -> Result<Self> {
        let k = Self {
            variances,
            epsilon,
            truncation: None,
        };
        k.validate("kernel")?;
        Ok(k)
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.variances.is_empty() {
            return Err(Error::invalid(
                format!("{prefix}.variances"),
                "must not be empty",
            ));
        }
        for (j, v) in self.variances.iter().enumerate() {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    format!("{prefix}.variances[{j}]"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(
                format!("{prefix}.epsilon"),
                format!("must be positive, got {}", self.epsilon),
            ));
        }
        if let Some(t) = self.truncation {
            if !(t > 0.0) {
                return Err(Error::invalid(
                    format!("{prefix}.truncation"),
                    format!("must be positive, got {t}"),
                ));
            }
        }
        Ok(())
    }

    fn inv_variances(&self) -> Vec<f64> {
        self.variances.iter().map(|v| 1.0 / v).collect()
    }

    /// Kernel values below this are dropped (0 when truncation is off).
    fn term_threshold(&self) -> f64 {
        self.truncation.map_or(0.0, |t| (-0.5 * t * t).exp())
    }
}

/// `d_i` for a single center by the direct pairwise sum. `samples` is flat
/// with stride `center.len()`.
pub fn membership(center: &[f64], samples: &[f64], kernel: &KernelConfig) -> f64 {
    let inv = kernel.inv_variances();
    let cut = kernel.truncation.map(|t| t * t);
    samples
        .chunks_exact(center.len())
        .map(|z| {
            let q = quad_form(center, z, &inv);
            match cut {
                Some(c) if q > c => 0.0,
                _ => (-0.5 * q).exp(),
            }
        })
        .sum()
}

fn quad_form(c: &[f64], z: &[f64], inv: &[f64]) -> f64 {
    c.iter()
        .zip(z)
        .zip(inv)
        .map(|((c, z), w)| (c - z) * (c - z) * w)
        .sum()
}

/// Space-filling cost bound to a grid and kernel.
#[derive(Debug, Clone)]
pub struct SpaceFillingCost {
    grid: DomainGrid,
    kernel: KernelConfig,
    inv_var: Vec<f64>,
}

impl SpaceFillingCost {
    pub fn new(grid: DomainGrid, kernel: KernelConfig) -> Result<Self> {
        kernel.validate("kernel")?;
        if kernel.variances.len() != grid.dim() {
            return Err(Error::invalid(
                "kernel.variances",
                format!(
                    "expected {} entries (n_z), got {}",
                    grid.dim(),
                    kernel.variances.len()
                ),
            ));
        }
        let inv_var = kernel.inv_variances();
        Ok(Self {
            grid,
            kernel,
            inv_var,
        })
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    fn check(&self, samples: &[f64]) -> Result<usize> {
        let d = self.grid.dim();
        if !samples.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                context: "joint samples",
                expected: d,
                actual: samples.len() % d,
            });
        }
        Ok(samples.len() / d)
    }

    /// `d_i` for every center.
    pub fn occupancy(&self, samples: &[f64]) -> Result<Vec<f64>> {
        let n_samples = self.check(samples)?;
        if n_samples == 0 {
            return Ok(vec![0.0; self.grid.len()]);
        }
        Ok(match self.grid.axes() {
            Some(axes) => {
                let tables = AxisTables::new(axes, samples, &self.inv_var);
                tables.occupancy(self.kernel.term_threshold())
            }
            None => self.occupancy_direct(samples),
        })
    }

    pub fn value(&self, samples: &[f64]) -> Result<f64> {
        let occ = self.occupancy(samples)?;
        Ok(self.value_from_occupancy(&occ))
    }

    pub fn value_from_occupancy(&self, occupancy: &[f64]) -> f64 {
        let eps = self.kernel.epsilon;
        let upper = 1.0 / eps;
        if occupancy.iter().all(|&d| d == 0.0) {
            return upper;
        }
        let sum: f64 = occupancy.iter().map(|d| 1.0 / (eps + d)).sum();
        // rounding in the mean can land one ulp above the bound
        (sum / occupancy.len() as f64).min(upper)
    }

    /// Cost and `∂C/∂z_k` (flat, same layout as `samples`) in one pass.
    pub fn value_and_gradient(&self, samples: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n_samples = self.check(samples)?;
        let d = self.grid.dim();
        if n_samples == 0 {
            return Ok((1.0 / self.kernel.epsilon, Vec::new()));
        }
        let eps = self.kernel.epsilon;
        let n = self.grid.len() as f64;
        let thresh = self.kernel.term_threshold();
        let mut grad = vec![0.0; samples.len()];
        let occ = match self.grid.axes() {
            Some(axes) => {
                let tables = AxisTables::new(axes, samples, &self.inv_var);
                let occ = tables.occupancy(thresh);
                let w = occ
                    .iter()
                    .map(|di| 1.0 / (n * (eps + di) * (eps + di)))
                    .collect::<Vec<_>>();
                grad.par_chunks_mut(d).enumerate().for_each(|(k, g)| {
                    tables.sample_gradient(k, &samples[k * d..(k + 1) * d], &w, thresh, g);
                });
                occ
            }
            None => {
                let occ = self.occupancy_direct(samples);
                let w = occ
                    .iter()
                    .map(|di| 1.0 / (n * (eps + di) * (eps + di)))
                    .collect::<Vec<_>>();
                grad.par_chunks_mut(d).enumerate().for_each(|(k, g)| {
                    self.sample_gradient_direct(&samples[k * d..(k + 1) * d], &w, g);
                });
                occ
            }
        };
        for (g, inv) in grad.iter_mut().zip(self.inv_var.iter().cycle()) {
            *g *= -inv;
        }
        Ok((self.value_from_occupancy(&occ), grad))
    }

    fn occupancy_direct(&self, samples: &[f64]) -> Vec<f64> {
        let d = self.grid.dim();
        let thresh = self.kernel.term_threshold();
        self.grid
            .centers
            .par_chunks(d)
            .map(|c| {
                samples
                    .chunks_exact(d)
                    .map(|z| {
                        let t = (-0.5 * quad_form(c, z, &self.inv_var)).exp();
                        if t < thresh {
                            0.0
                        } else {
                            t
                        }
                    })
                    .sum()
            })
            .collect()
    }

    /// Writes `Σ_i w_i K_ik (c_ij − z_kj)` into `out`.
    fn sample_gradient_direct(&self, z: &[f64], w: &[f64], out: &mut [f64]) {
        let d = z.len();
        let thresh = self.kernel.term_threshold();
        out.fill(0.0);
        for (c, wi) in self.grid.centers.chunks_exact(d).zip(w) {
            let t = (-0.5 * quad_form(c, z, &self.inv_var)).exp();
            if t < thresh || t == 0.0 {
                continue;
            }
            let s = wi * t;
            for j in 0..d {
                out[j] += s * (c[j] - z[j]);
            }
        }
    }
}

/// Per-axis kernel factors `E_j[a][k] = exp(−½ (axis_j[a] − z_kj)² / σ_j²)`,
/// each row contiguous over samples.
struct AxisTables<'a> {
    axes: &'a [Vec<f64>],
    tables: Vec<Vec<f64>>,
    n_samples: usize,
}

impl<'a> AxisTables<'a> {
    fn new(axes: &'a [Vec<f64>], samples: &[f64], inv_var: &[f64]) -> Self {
        let d = axes.len();
        let n_samples = samples.len() / d;
        let tables = axes
            .iter()
            .enumerate()
            .map(|(j, axis)| {
                let mut t = Vec::with_capacity(axis.len() * n_samples);
                for &c in axis {
                    t.extend(samples.chunks_exact(d).map(|z| {
                        let diff = c - z[j];
                        (-0.5 * diff * diff * inv_var[j]).exp()
                    }));
                }
                t
            })
            .collect();
        Self {
            axes,
            tables,
            n_samples,
        }
    }

    fn row(&self, j: usize, a: usize) -> &[f64] {
        &self.tables[j][a * self.n_samples..(a + 1) * self.n_samples]
    }

    fn occupancy(&self, thresh: f64) -> Vec<f64> {
        let d = self.axes.len();
        let last = d - 1;
        let p_last = self.axes[last].len();
        let n: usize = self.axes.iter().map(Vec::len).product();
        let mut occ = vec![0.0; n];
        occ.par_chunks_mut(p_last)
            .enumerate()
            .for_each(|(prefix, out)| {
                let mut prod = vec![1.0; self.n_samples];
                let mut rem = prefix;
                for j in (0..last).rev() {
                    let p = self.axes[j].len();
                    let a = rem % p;
                    rem /= p;
                    for (v, e) in prod.iter_mut().zip(self.row(j, a)) {
                        *v *= e;
                    }
                }
                for (a, o) in out.iter_mut().enumerate() {
                    let row = self.row(last, a);
                    *o = if thresh > 0.0 {
                        prod.iter()
                            .zip(row)
                            .map(|(p, e)| p * e)
                            .filter(|t| *t >= thresh)
                            .sum()
                    } else {
                        dot(&prod, row)
                    };
                }
            });
        occ
    }

    /// Writes `Σ_i w_i K_ik (c_ij − z_kj)` for sample `k` into `out`.
    fn sample_gradient(&self, k: usize, z: &[f64], w: &[f64], thresh: f64, out: &mut [f64]) {
        let d = self.axes.len();
        let factors: Vec<Vec<f64>> = (0..d)
            .map(|j| {
                (0..self.axes[j].len())
                    .map(|a| self.tables[j][a * self.n_samples + k])
                    .collect()
            })
            .collect();
        let deltas: Vec<Vec<f64>> = (0..d)
            .map(|j| self.axes[j].iter().map(|c| c - z[j]).collect())
            .collect();
        out.fill(0.0);
        let mut walk = GradientWalk {
            factors: &factors,
            deltas: &deltas,
            w,
            thresh,
            out,
        };
        walk.visit(0, 0, 1.0);
    }
}

struct GradientWalk<'a> {
    factors: &'a [Vec<f64>],
    deltas: &'a [Vec<f64>],
    w: &'a [f64],
    thresh: f64,
    out: &'a mut [f64],
}

impl GradientWalk<'_> {
    /// Returns `Σ w_i K_ik` over the sub-grid below `base` at `level`,
    /// accumulating the delta-weighted sums into `out`.
    fn visit(&mut self, level: usize, base: usize, pref: f64) -> f64 {
        let e = &self.factors[level];
        let delta = &self.deltas[level];
        let p = e.len();
        if pref == 0.0 || pref < self.thresh {
            return 0.0;
        }
        if level + 1 == self.factors.len() {
            let w = &self.w[base * p..(base + 1) * p];
            let (mut s, mut t) = (0.0, 0.0);
            if self.thresh > 0.0 {
                for a in 0..p {
                    let kern = pref * e[a];
                    if kern >= self.thresh {
                        s += w[a] * kern;
                        t += w[a] * kern * delta[a];
                    }
                }
            } else {
                for a in 0..p {
                    let we = w[a] * e[a];
                    s += we;
                    t += we * delta[a];
                }
                s *= pref;
                t *= pref;
            }
            self.out[level] += t;
            return s;
        }
        let mut total = 0.0;
        for a in 0..p {
            let s = self.visit(level + 1, base * p + a, pref * e[a]);
            total += s;
            self.out[level] += s * delta[a];
        }
        total
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Mean inverse regularized density over the grid.
pub fn cost(samples: &[f64], grid: &DomainGrid, kernel: &KernelConfig) -> Result<f64> {
    SpaceFillingCost::new(grid.clone(), kernel.clone())?.value(samples)
}

pub fn grid_occupancy(
    samples: &[f64],
    grid: &DomainGrid,
    kernel: &KernelConfig,
) -> Result<Vec<f64>> {
    SpaceFillingCost::new(grid.clone(), kernel.clone())?.occupancy(samples)
}

/// `∂C/∂z_k`, flat with the layout of `samples`.
pub fn cost_gradient_samples(
    samples: &[f64],
    grid: &DomainGrid,
    kernel: &KernelConfig,
) -> Result<Vec<f64>> {
    Ok(SpaceFillingCost::new(grid.clone(), kernel.clone())?
        .value_and_gradient(samples)?
        .1)
}

/// Chains a sample gradient through `∂z_k/∂θ = [∂u_k/∂θ; ∂x_k/∂θ]`.
pub fn chain_param_gradient(sample_grad: &[f64], sens: &SensitivityTrajectory) -> Result<Vec<f64>> {
    let n_u = sens.input_dim();
    let n_x = sens.state_dim();
    let n_z = n_u + n_x;
    let n_theta = sens.param_dim();
    if sample_grad.len() != sens.len() * n_z {
        return Err(Error::DimensionMismatch {
            context: "sample sensitivities",
            expected: sample_grad.len(),
            actual: sens.len() * n_z,
        });
    }
    let mut out = vec![0.0; n_theta];
    for (k, g) in sample_grad.chunks_exact(n_z).enumerate() {
        let su = sens.input(k);
        let sx = sens.state(k);
        for (j, gj) in g[..n_u].iter().enumerate() {
            for (o, s) in out.iter_mut().zip(&su[j * n_theta..(j + 1) * n_theta]) {
                *o += gj * s;
            }
        }
        for (j, gj) in g[n_u..].iter().enumerate() {
            for (o, s) in out.iter_mut().zip(&sx[j * n_theta..(j + 1) * n_theta]) {
                *o += gj * s;
            }
        }
    }
    Ok(out)
}

/// `∂C/∂θ` for samples whose parameter sensitivities are `sens`.
pub fn cost_gradient_params(
    samples: &[f64],
    sens: &SensitivityTrajectory,
    grid: &DomainGrid,
    kernel: &KernelConfig,
) -> Result<Vec<f64>> {
    let g = cost_gradient_samples(samples, grid, kernel)?;
    chain_param_gradient(&g, sens)
}
