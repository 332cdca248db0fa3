//! Parametrized excitation signals and their parameter Jacobians.

use std::f64::consts::PI;

use rand::Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periodic multisine exciting harmonic lines `line_min..=line_max` of
/// `f0 = fs / n`:
///
/// `u_k = Σ_l A_l sin(2π l k / n + φ_l)`, `k = 0..n-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultisineSpec {
    n: usize,
    fs: f64,
    line_min: usize,
    line_max: usize,
    amplitudes: Vec<f64>,
    phases: Vec<f64>,
}

/// Which multisine quantities are optimization parameters. Phase columns
/// come first in the Jacobian, then amplitude columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeParams {
    pub phases: bool,
    pub amplitudes: bool,
}

impl FreeParams {
    pub const PHASES: FreeParams = FreeParams {
        phases: true,
        amplitudes: false,
    };
}

impl MultisineSpec {
    pub fn new(
        n: usize,
        fs: f64,
        line_min: usize,
        line_max: usize,
        amplitudes: Vec<f64>,
        phases: Vec<f64>,
    ) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::invalid("fs", format!("must be positive, got {fs}")));
        }
        if line_min < 1 || line_min > line_max || 2 * line_max >= n {
            return Err(Error::invalid(
                "lines",
                format!("need 1 <= line_min <= line_max < n/2, got {line_min}..={line_max} with n = {n}"),
            ));
        }
        let f = line_max - line_min + 1;
        if amplitudes.len() != f {
            return Err(Error::DimensionMismatch {
                context: "multisine amplitudes",
                expected: f,
                actual: amplitudes.len(),
            });
        }
        if phases.len() != f {
            return Err(Error::DimensionMismatch {
                context: "multisine phases",
                expected: f,
                actual: phases.len(),
            });
        }
        if let Some(a) = amplitudes.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return Err(Error::invalid(
                "amplitudes",
                format!("must be finite and non-negative, got {a}"),
            ));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("phases", "must be finite"));
        }
        Ok(Self {
            n,
            fs,
            line_min,
            line_max,
            amplitudes,
            phases,
        })
    }

    /// Equal-amplitude multisine with the given RMS value.
    pub fn with_target_std(
        n: usize,
        fs: f64,
        line_min: usize,
        line_max: usize,
        target_std: f64,
        phases: Vec<f64>,
    ) -> Result<Self> {
        let f = (line_max + 1).saturating_sub(line_min);
        let a = amplitude_for_target_std(target_std, f)?;
        Self::new(n, fs, line_min, line_max, vec![a; f], phases)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn line_min(&self) -> usize {
        self.line_min
    }

    pub fn line_max(&self) -> usize {
        self.line_max
    }

    pub fn line_count(&self) -> usize {
        self.line_max - self.line_min + 1
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn lines(&self) -> impl Iterator<Item = usize> {
        self.line_min..=self.line_max
    }

    /// Same lines and amplitudes, new phases.
    pub fn with_phases(&self, phases: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n,
            self.fs,
            self.line_min,
            self.line_max,
            self.amplitudes.clone(),
            phases,
        )
    }

    pub fn with_amplitudes(&self, amplitudes: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n,
            self.fs,
            self.line_min,
            self.line_max,
            amplitudes,
            self.phases.clone(),
        )
    }

    pub fn param_count(&self, free: FreeParams) -> usize {
        self.line_count() * (free.phases as usize + free.amplitudes as usize)
    }

    /// Parameter vector in Jacobian column order.
    pub fn params(&self, free: FreeParams) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.param_count(free));
        if free.phases {
            theta.extend_from_slice(&self.phases);
        }
        if free.amplitudes {
            theta.extend_from_slice(&self.amplitudes);
        }
        theta
    }

    pub fn with_params(&self, free: FreeParams, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.param_count(free) {
            return Err(Error::DimensionMismatch {
                context: "multisine parameters",
                expected: self.param_count(free),
                actual: theta.len(),
            });
        }
        let f = self.line_count();
        let mut rest = theta;
        let mut phases = self.phases.clone();
        let mut amplitudes = self.amplitudes.clone();
        if free.phases {
            phases.copy_from_slice(&rest[..f]);
            rest = &rest[f..];
        }
        if free.amplitudes {
            amplitudes.copy_from_slice(&rest[..f]);
        }
        Self::new(
            self.n,
            self.fs,
            self.line_min,
            self.line_max,
            amplitudes,
            phases,
        )
    }

    /// One sample by direct evaluation of the sum. The harmonic angle is
    /// reduced modulo the period in integer arithmetic, so the result is
    /// exactly `n`-periodic in `k`.
    pub fn sample_at(&self, k: i64) -> f64 {
        let n = self.n as i64;
        self.lines()
            .zip(self.amplitudes.iter().zip(&self.phases))
            .map(|(l, (a, p))| {
                let m = (l as i64 * k).rem_euclid(n);
                a * (2.0 * PI * m as f64 / n as f64 + p).sin()
            })
            .sum()
    }

    fn unit_circle(&self) -> (Vec<f64>, Vec<f64>) {
        (0..self.n)
            .map(|m| {
                let w = 2.0 * PI * m as f64 / self.n as f64;
                (w.sin(), w.cos())
            })
            .unzip()
    }

    /// One period of the signal.
    pub fn generate(&self) -> Vec<f64> {
        let (sin_t, cos_t) = self.unit_circle();
        let mut u = vec![0.0; self.n];
        for (l, (a, p)) in self.lines().zip(self.amplitudes.iter().zip(&self.phases)) {
            if *a == 0.0 {
                continue;
            }
            let (sp, cp) = p.sin_cos();
            let mut m = 0;
            for uk in u.iter_mut() {
                *uk += a * (sin_t[m] * cp + cos_t[m] * sp);
                m += l;
                if m >= self.n {
                    m -= self.n;
                }
            }
        }
        u
    }

    /// `∂u_k/∂θ` as a row-major `n × n_θ` matrix.
    pub fn jacobian(&self, free: FreeParams) -> Vec<f64> {
        let f = self.line_count();
        let n_theta = self.param_count(free);
        let (sin_t, cos_t) = self.unit_circle();
        let mut jac = vec![0.0; self.n * n_theta];
        let amp_offset = if free.phases { f } else { 0 };
        for (j, (l, (a, p))) in self
            .lines()
            .zip(self.amplitudes.iter().zip(&self.phases))
            .enumerate()
        {
            let (sp, cp) = p.sin_cos();
            let mut m = 0;
            for k in 0..self.n {
                let row = &mut jac[k * n_theta..(k + 1) * n_theta];
                if free.phases {
                    row[j] = a * (cos_t[m] * cp - sin_t[m] * sp);
                }
                if free.amplitudes {
                    row[amp_offset + j] = sin_t[m] * cp + cos_t[m] * sp;
                }
                m += l;
                if m >= self.n {
                    m -= self.n;
                }
            }
        }
        jac
    }
}

/// Per-line amplitude of an equal-amplitude multisine with `line_count`
/// lines and standard deviation `target_std`: `A = std·√(2/F)`.
pub fn amplitude_for_target_std(target_std: f64, line_count: usize) -> Result<f64> {
    if line_count == 0 {
        return Err(Error::invalid(
            "line_count",
            "at least one excited line is required",
        ));
    }
    if !(target_std >= 0.0 && target_std.is_finite()) {
        return Err(Error::invalid(
            "target_std",
            format!("must be non-negative, got {target_std}"),
        ));
    }
    Ok(target_std * (2.0 / line_count as f64).sqrt())
}

/// Low-crest-factor phases `φ_l = −l(l−1)π/F`, `l = 1..=F`, indexed over the
/// excited lines.
pub fn schroeder_phases(line_count: usize) -> Vec<f64> {
    let f = line_count as f64;
    (1..=line_count)
        .map(|l| {
            let l = l as f64;
            -l * (l - 1.0) * PI / f
        })
        .collect()
}

/// Independent phases, uniform on `[0, 2π)`.
pub fn random_phases<R: Rng + ?Sized>(line_count: usize, rng: &mut R) -> Vec<f64> {
    (0..line_count)
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect()
}

pub fn mean(u: &[f64]) -> f64 {
    u.iter().sum::<f64>() / u.len() as f64
}

/// Population standard deviation.
pub fn std_dev(u: &[f64]) -> f64 {
    let mu = mean(u);
    (u.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / u.len() as f64).sqrt()
}

pub fn rms(u: &[f64]) -> f64 {
    (u.iter().map(|v| v * v).sum::<f64>() / u.len() as f64).sqrt()
}

/// Peak magnitude over RMS.
pub fn crest_factor(u: &[f64]) -> Result<f64> {
    if u.is_empty() {
        return Err(Error::Undefined("crest factor of an empty signal"));
    }
    let r = rms(u);
    if r == 0.0 {
        return Err(Error::Undefined("crest factor of an all-zero signal"));
    }
    let peak = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(peak / r)
}

/// One-sided amplitude spectrum at lines `0..=n/2`, calibrated so that a
/// sine of amplitude `A` on line `l` reports `A` at `l`.
pub fn amplitude_spectrum(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = u.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (0..=n / 2)
        .map(|l| {
            let scale = if l == 0 || 2 * l == n { 1.0 } else { 2.0 };
            scale * buf[l].norm() / n as f64
        })
        .collect()
}

/// Direct parametrization `u_k = θ_k`, optionally box-bounded.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectSpec {
    samples: Vec<f64>,
    bounds: Option<(f64, f64)>,
}

impl DirectSpec {
    pub fn new(samples: Vec<f64>, bounds: Option<(f64, f64)>) -> Result<Self> {
        if let Some((lo, hi)) = bounds {
            if !(lo <= hi) {
                return Err(Error::invalid(
                    "bounds",
                    format!("lower bound {lo} exceeds upper bound {hi}"),
                ));
            }
        }
        Ok(Self { samples, bounds })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Per-parameter bounds for the optimizer.
    pub fn param_bounds(&self) -> Option<Vec<(f64, f64)>> {
        self.bounds.map(|b| vec![b; self.samples.len()])
    }
}

pub fn direct_generate(spec: &DirectSpec) -> Vec<f64> {
    spec.samples.clone()
}

/// Row-major `n × n` identity.
pub fn direct_jacobian(spec: &DirectSpec) -> Vec<f64> {
    let n = spec.len();
    let mut jac = vec![0.0; n * n];
    for k in 0..n {
        jac[k * n + k] = 1.0;
    }
    jac
}
