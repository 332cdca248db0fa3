//! Experiment configuration (JSON) and its validation.
//!
//! Units: forces in N, positions in m, velocities in m/s, times in s,
//! frequencies in Hz. The domain, spacing and kernel variances are ordered
//! like the joint sample `z = [u, x1, x2, ...]`; variances are in squared
//! units of their coordinate.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost::{
    build_uniform_grid, points_for_spacing, DomainBox, DomainGrid, KernelConfig, SpaceFillingCost,
};
use crate::dynamics::{LinearModel, MsdModel, StateSpaceModel, SteadyStateOptions};
use crate::error::{Error, Result};
use crate::optimizer::OptimOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Msd(MsdModel),
    /// Discrete-time `x+ = A x + B u`, matrices row-major.
    Linear {
        n_x: usize,
        n_u: usize,
        a: Vec<f64>,
        b: Vec<f64>,
        ts: f64,
    },
}

impl ModelConfig {
    pub fn build(&self) -> Result<Box<dyn StateSpaceModel>> {
        Ok(match self {
            ModelConfig::Msd(m) => {
                m.validate("model")?;
                Box::new(*m)
            }
            ModelConfig::Linear { n_x, n_u, a, b, ts } => Box::new(
                LinearModel::new(*n_x, *n_u, a.clone(), b.clone(), *ts)
                    .map_err(|e| e.context("model"))?,
            ),
        })
    }

    pub fn sample_time(&self) -> f64 {
        match self {
            ModelConfig::Msd(m) => m.ts,
            ModelConfig::Linear { ts, .. } => *ts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputConfig {
    /// Equal-amplitude multisine over lines `line_min..=line_max` of `fs/n`
    /// with standard deviation `target_std`. Phases start uniform on
    /// `[0, 2π)` from `seed` and are the optimization parameters.
    Multisine {
        n: usize,
        fs: f64,
        line_min: usize,
        line_max: usize,
        target_std: f64,
        #[serde(default)]
        seed: u64,
        /// Also optimize the per-line amplitudes.
        #[serde(default)]
        optimize_amplitudes: bool,
    },
    /// Raw samples as parameters, started uniform with standard deviation
    /// `initial_std` (clipped to `bounds`).
    Direct {
        n: usize,
        fs: f64,
        #[serde(default)]
        bounds: Option<(f64, f64)>,
        initial_std: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl InputConfig {
    pub fn seed(&self) -> u64 {
        match self {
            InputConfig::Multisine { seed, .. } | InputConfig::Direct { seed, .. } => *seed,
        }
    }

    pub fn set_seed(&mut self, new_seed: u64) {
        match self {
            InputConfig::Multisine { seed, .. } | InputConfig::Direct { seed, .. } => {
                *seed = new_seed
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            InputConfig::Multisine { n, .. } | InputConfig::Direct { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fs(&self) -> f64 {
        match self {
            InputConfig::Multisine { fs, .. } | InputConfig::Direct { fs, .. } => *fs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Grid distance per dimension. Either this or `points_per_dim` is needed;
    /// resolution fills in `points_per_dim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_per_dim: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    /// Index into `z` of the axis sliced for cross-section exports.
    pub slice_axis: usize,
    pub slice_bins: usize,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            slice_axis: 0,
            slice_bins: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub input: InputConfig,
    pub domain: DomainConfig,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub optimizer: OptimOptions,
    #[serde(default)]
    pub steady_state: SteadyStateOptions,
    #[serde(default)]
    pub export: ExportConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// The nonlinear mass-spring-damper benchmark.
    pub fn benchmark() -> Self {
        Self {
            model: ModelConfig::Msd(MsdModel::benchmark()),
            input: InputConfig::Multisine {
                n: 2048,
                fs: 100.0,
                line_min: 21,
                line_max: 204,
                target_std: 160.0,
                seed: 1,
                optimize_amplitudes: false,
            },
            domain: DomainConfig {
                lower: vec![-400.0, -2.0, -20.0],
                upper: vec![400.0, 2.0, 20.0],
                spacing: Some(vec![42.1053, 0.2105, 2.1053]),
                points_per_dim: Some(vec![20, 20, 20]),
            },
            kernel: KernelConfig {
                variances: vec![1600.0, 0.04, 4.0],
                epsilon: 0.01,
                truncation: None,
            },
            optimizer: OptimOptions::default(),
            steady_state: SteadyStateOptions::default(),
            export: ExportConfig::default(),
            output_dir: PathBuf::from("out/benchmark"),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Reads, fills defaults and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)?.resolve()
    }

    pub fn input_dim(&self) -> usize {
        match &self.model {
            ModelConfig::Msd(_) => 1,
            ModelConfig::Linear { n_u, .. } => *n_u,
        }
    }

    pub fn state_dim(&self) -> usize {
        match &self.model {
            ModelConfig::Msd(_) => 2,
            ModelConfig::Linear { n_x, .. } => *n_x,
        }
    }

    pub fn joint_dim(&self) -> usize {
        self.input_dim() + self.state_dim()
    }

    /// Checks every invariant and fills derived fields; the result is a
    /// fixed point of `resolve`.
    pub fn resolve(mut self) -> Result<Self> {
        self.model.build()?;
        if self.input_dim() != 1 {
            return Err(Error::invalid(
                "model.n_u",
                "only single-input models can be excited",
            ));
        }
        let ts = self.model.sample_time();
        let fs = self.input.fs();
        if !(fs > 0.0) || ((fs * ts) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "input.fs",
                format!("sampling frequency {fs} Hz does not match model sample time {ts} s"),
            ));
        }
        match &self.input {
            InputConfig::Multisine {
                n,
                line_min,
                line_max,
                target_std,
                ..
            } => {
                if *line_min < 1 || line_min > line_max || 2 * line_max >= *n {
                    return Err(Error::invalid(
                        "input.line_min",
                        format!("need 1 <= line_min <= line_max < n/2, got {line_min}..={line_max} with n = {n}"),
                    ));
                }
                if !(*target_std >= 0.0 && target_std.is_finite()) {
                    return Err(Error::invalid("input.target_std", "must be non-negative"));
                }
            }
            InputConfig::Direct {
                n,
                bounds,
                initial_std,
                ..
            } => {
                if *n == 0 {
                    return Err(Error::invalid("input.n", "must be positive"));
                }
                if let Some((lo, hi)) = bounds {
                    if !(lo <= hi) {
                        return Err(Error::invalid(
                            "input.bounds",
                            format!("lower {lo} exceeds upper {hi}"),
                        ));
                    }
                }
                if !(*initial_std >= 0.0 && initial_std.is_finite()) {
                    return Err(Error::invalid("input.initial_std", "must be non-negative"));
                }
            }
        }

        let n_z = self.joint_dim();
        let d = &mut self.domain;
        for (name, v) in [("domain.lower", &d.lower), ("domain.upper", &d.upper)] {
            if v.len() != n_z {
                return Err(Error::invalid(
                    name,
                    format!("expected {n_z} entries (n_z), got {}", v.len()),
                ));
            }
        }
        let bounds =
            DomainBox::new(d.lower.clone(), d.upper.clone()).map_err(|e| e.context("domain"))?;
        let from_spacing = match &d.spacing {
            Some(h) => {
                if h.len() != n_z {
                    return Err(Error::invalid(
                        "domain.spacing",
                        format!("expected {n_z} entries (n_z), got {}", h.len()),
                    ));
                }
                Some(points_for_spacing(&bounds, h).map_err(|e| e.context("domain"))?)
            }
            None => None,
        };
        match (&from_spacing, &d.points_per_dim) {
            (None, None) => {
                return Err(Error::invalid(
                    "domain",
                    "either spacing or points_per_dim is required",
                ))
            }
            (Some(p), Some(q)) if p != q => {
                return Err(Error::invalid(
                    "domain.points_per_dim",
                    format!("{q:?} disagrees with the spacing, which gives {p:?}"),
                ))
            }
            (_, Some(q)) if q.len() != n_z => {
                return Err(Error::invalid(
                    "domain.points_per_dim",
                    format!("expected {n_z} entries (n_z), got {}", q.len()),
                ))
            }
            (Some(p), None) => d.points_per_dim = Some(p.clone()),
            _ => {}
        }
        if let Some((j, _)) = d
            .points_per_dim
            .as_ref()
            .unwrap()
            .iter()
            .enumerate()
            .find(|(_, p)| **p < 2)
        {
            return Err(Error::invalid(
                format!("domain.points_per_dim[{j}]"),
                "need at least 2 points",
            ));
        }

        if self.kernel.variances.len() != n_z {
            return Err(Error::invalid(
                "kernel.variances",
                format!(
                    "expected {n_z} entries (n_z), got {}",
                    self.kernel.variances.len()
                ),
            ));
        }
        self.kernel.validate("kernel")?;
        self.optimizer.validate("optimizer")?;
        if self.optimizer.bounds.is_some() {
            return Err(Error::invalid(
                "optimizer.bounds",
                "set by the parametrization (input.bounds), not directly",
            ));
        }
        self.steady_state.validate("steady_state")?;
        if self.export.slice_axis >= n_z {
            return Err(Error::invalid(
                "export.slice_axis",
                format!("must be below n_z = {n_z}"),
            ));
        }
        if self.export.slice_bins == 0 {
            return Err(Error::invalid("export.slice_bins", "must be at least 1"));
        }
        Ok(self)
    }

    pub fn domain_box(&self) -> Result<DomainBox> {
        DomainBox::new(self.domain.lower.clone(), self.domain.upper.clone())
    }

    pub fn grid(&self) -> Result<DomainGrid> {
        let bounds = self.domain_box()?;
        let points = match (&self.domain.points_per_dim, &self.domain.spacing) {
            (Some(p), _) => p.clone(),
            (None, Some(h)) => points_for_spacing(&bounds, h)?,
            (None, None) => {
                return Err(Error::invalid(
                    "domain",
                    "either spacing or points_per_dim is required",
                ))
            }
        };
        build_uniform_grid(&bounds, &points)
    }

    pub fn cost_function(&self) -> Result<SpaceFillingCost> {
        SpaceFillingCost::new(self.grid()?, self.kernel.clone())
    }
}
