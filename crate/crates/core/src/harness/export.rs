//! CSV artifacts and the run manifest.
//!
//! Floats are written with 17 significant digits so every value round-trips
//! exactly. Files are written to a temporary name and renamed into place; the
//! manifest is always written last.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DesignResult, ExperimentConfig, MonteCarloResult, SignalReport};
use crate::cost::DomainGrid;
use crate::dynamics::{StateSpaceModel, Trajectory};
use crate::error::Result;
use crate::optimizer::OptimResult;

pub const MANIFEST: &str = "manifest.json";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A named file body, not yet written.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    pub fn new(name: impl Into<String>, contents: String) -> Self {
        Self {
            name: name.into(),
            contents,
        }
    }
}

fn csv(header: &[&str], rows: impl IntoIterator<Item = String>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    out
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| fmt_f64(*v))
        .collect::<Vec<_>>()
        .join(",")
}

/// Joint-sample column names: `u` (or `u1..`) then `x1..`.
fn joint_names(n_u: usize, n_x: usize) -> Vec<String> {
    let mut names = if n_u == 1 {
        vec!["u".to_string()]
    } else {
        (1..=n_u).map(|i| format!("u{i}")).collect()
    };
    names.extend((1..=n_x).map(|i| format!("x{i}")));
    names
}

/// `k,t,u`
pub fn signal_csv(signal: &[f64], ts: f64) -> String {
    csv(
        &["k", "t", "u"],
        signal
            .iter()
            .enumerate()
            .map(|(k, u)| format!("{k},{},{}", fmt_f64(k as f64 * ts), fmt_f64(*u))),
    )
}

/// `line,freq_hz,magnitude` for a one-sided spectrum of an `n`-sample signal.
pub fn spectrum_csv(spectrum: &[f64], n: usize, fs: f64) -> String {
    csv(
        &["line", "freq_hz", "magnitude"],
        spectrum
            .iter()
            .enumerate()
            .map(|(l, a)| format!("{l},{},{}", fmt_f64(l as f64 * fs / n as f64), fmt_f64(*a))),
    )
}

/// `k,t,u,x1..,y1..`
pub fn trajectory_csv(traj: &Trajectory, model: &dyn StateSpaceModel) -> String {
    let mut names = vec!["k".to_string(), "t".to_string()];
    names.extend(joint_names(traj.input_dim(), traj.state_dim()));
    names.extend((1..=model.output_dim()).map(|i| format!("y{i}")));
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut y = vec![0.0; model.output_dim()];
    let rows = (0..traj.len()).map(|k| {
        model.output(traj.state(k), traj.input(k), &mut y);
        format!(
            "{k},{},{},{},{}",
            fmt_f64(k as f64 * traj.sample_time()),
            join(traj.input(k)),
            join(traj.state(k)),
            join(&y)
        )
    });
    csv(&header, rows.collect::<Vec<_>>())
}

/// `iter,cost,grad_inf_norm,step_size`; iteration 0 has step size 0.
pub fn cost_trace_csv(result: &OptimResult) -> String {
    csv(
        &["iter", "cost", "grad_inf_norm", "step_size"],
        (0..result.cost_trace.len()).map(|i| {
            format!(
                "{i},{},{},{}",
                fmt_f64(result.cost_trace[i]),
                fmt_f64(result.grad_norm_trace[i]),
                fmt_f64(result.step_trace[i])
            )
        }),
    )
}

/// `i,z_1..z_d,d_i`
pub fn occupancy_csv(grid: &DomainGrid, occupancy: &[f64]) -> String {
    let mut names = vec!["i".to_string()];
    names.extend((1..=grid.dim()).map(|j| format!("z_{j}")));
    names.push("d_i".to_string());
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    csv(
        &header,
        occupancy
            .iter()
            .enumerate()
            .map(|(i, d)| format!("{i},{},{}", join(grid.center(i)), fmt_f64(*d))),
    )
}

/// Projections of the joint samples onto every coordinate plane:
/// `plane,k,h,v`, one block of `N` rows per plane.
pub fn sideviews_csv(traj: &Trajectory) -> String {
    let names = joint_names(traj.input_dim(), traj.state_dim());
    let dim = names.len();
    let z = traj.joint_samples();
    let mut rows = Vec::new();
    for a in 0..dim {
        for b in a + 1..dim {
            let plane = format!("{}-{}", names[a], names[b]);
            for k in 0..traj.len() {
                rows.push(format!(
                    "{plane},{k},{},{}",
                    fmt_f64(z[k * dim + a]),
                    fmt_f64(z[k * dim + b])
                ));
            }
        }
    }
    csv(&["plane", "k", "h", "v"], rows)
}

/// `bins + 1` equally spaced edges over `[lo, hi]`.
pub fn slice_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins)
        .map(|i| {
            if i == bins {
                hi
            } else {
                lo + (hi - lo) * i as f64 / bins as f64
            }
        })
        .collect()
}

/// Slice index of `v`: bin `i` holds `[e_i, e_{i+1})`, the outer bins extend
/// to ±∞ so every sample lands in exactly one slice.
pub fn slice_index(v: f64, edges: &[f64]) -> usize {
    let bins = edges.len() - 1;
    edges[1..bins].iter().take_while(|e| v >= **e).count()
}

/// Cross-sections along joint coordinate `axis`:
/// `slice,lo,hi,k,u,x1..`, rows grouped by slice.
pub fn slices_csv(traj: &Trajectory, axis: usize, edges: &[f64]) -> String {
    let names = joint_names(traj.input_dim(), traj.state_dim());
    let dim = names.len();
    let mut header = vec!["slice", "lo", "hi", "k"];
    header.extend(names.iter().map(String::as_str));
    let z = traj.joint_samples();
    let bins = edges.len().saturating_sub(1);
    let mut groups: Vec<Vec<String>> = vec![Vec::new(); bins];
    if bins > 0 {
        for k in 0..traj.len() {
            let row = &z[k * dim..(k + 1) * dim];
            let s = slice_index(row[axis], edges);
            groups[s].push(format!(
                "{s},{},{},{k},{}",
                fmt_f64(edges[s]),
                fmt_f64(edges[s + 1]),
                join(row)
            ));
        }
    }
    csv(&header, groups.into_iter().flatten())
}

/// `run,seed,initial_cost,final_cost,ratio,iterations,status`
pub fn montecarlo_csv(result: &MonteCarloResult) -> String {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    csv(
        &[
            "run",
            "seed",
            "initial_cost",
            "final_cost",
            "ratio",
            "iterations",
            "status",
        ],
        result.runs.iter().map(|r| {
            let ratio = match (r.initial_cost, r.final_cost) {
                (Some(i), Some(f)) => Some(f / i),
                _ => None,
            };
            format!(
                "{},{},{},{},{},{},{}",
                r.run,
                r.seed,
                opt(r.initial_cost),
                opt(r.final_cost),
                opt(ratio),
                r.iterations.map(|i| i.to_string()).unwrap_or_default(),
                if r.error.is_none() { "ok" } else { "failed" }
            )
        }),
    )
}

/// Every per-signal file for one evaluated signal, suffixed by `label`.
pub fn signal_artifacts(
    config: &ExperimentConfig,
    report: &SignalReport,
    label: &str,
    model: &dyn StateSpaceModel,
) -> Result<Vec<Artifact>> {
    let grid = config.grid()?;
    let traj = &report.evaluation.trajectory;
    let axis = config.export.slice_axis;
    let edges = slice_edges(
        grid.bounds().lower()[axis],
        grid.bounds().upper()[axis],
        config.export.slice_bins,
    );
    Ok(vec![
        Artifact::new(
            format!("signal_{label}.csv"),
            signal_csv(&report.evaluation.signal, traj.sample_time()),
        ),
        Artifact::new(
            format!("spectrum_{label}.csv"),
            spectrum_csv(
                &report.spectrum,
                report.evaluation.signal.len(),
                config.input.fs(),
            ),
        ),
        Artifact::new(
            format!("trajectory_{label}.csv"),
            trajectory_csv(traj, model),
        ),
        Artifact::new(
            format!("occupancy_{label}.csv"),
            occupancy_csv(&grid, &report.evaluation.occupancy),
        ),
        Artifact::new(format!("sideviews_{label}.csv"), sideviews_csv(traj)),
        Artifact::new(
            format!("slices_{label}.csv"),
            slices_csv(traj, axis, &edges),
        ),
    ])
}

/// Per-signal numbers recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSummary {
    pub cost: f64,
    pub crest_factor: Option<f64>,
    pub std: f64,
    pub periods: usize,
}

impl SignalSummary {
    pub fn of(report: &SignalReport) -> Self {
        Self {
            cost: report.cost(),
            crest_factor: report.crest_factor,
            std: crate::input::std_dev(&report.evaluation.signal),
            periods: report.evaluation.periods,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub initial: SignalSummary,
    pub optimized: SignalSummary,
    pub cost_ratio: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: crate::optimizer::TerminationReason,
    pub schroeder: Option<SignalSummary>,
}

impl DesignSummary {
    pub fn of(design: &DesignResult, baseline: Option<&SignalReport>) -> Self {
        Self {
            initial: SignalSummary::of(&design.initial),
            optimized: SignalSummary::of(&design.optimized),
            cost_ratio: design.cost_ratio(),
            iterations: design.optim.iterations,
            evaluations: design.optim.evaluations,
            termination: design.optim.termination,
            schroeder: baseline.map(SignalSummary::of),
        }
    }
}

/// Files of a design run: `initial` and `optimized` signals, the cost trace,
/// and `schroeder` views when a baseline is given.
pub fn design_artifacts(
    config: &ExperimentConfig,
    design: &DesignResult,
    baseline: Option<&SignalReport>,
) -> Result<Vec<Artifact>> {
    let model = config.model.build()?;
    let mut files = signal_artifacts(config, &design.initial, "initial", model.as_ref())?;
    files.extend(signal_artifacts(
        config,
        &design.optimized,
        "optimized",
        model.as_ref(),
    )?);
    files.push(Artifact::new(
        "cost_trace.csv",
        cost_trace_csv(&design.optim),
    ));
    if let Some(b) = baseline {
        files.extend(signal_artifacts(config, b, "schroeder", model.as_ref())?);
    }
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: RunStatus,
    pub command: String,
    pub version: String,
    pub config: Option<ExperimentConfig>,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
    pub summary: serde_json::Value,
    pub error: Option<ManifestError>,
}

impl Manifest {
    pub fn success(
        command: &str,
        config: &ExperimentConfig,
        seeds: Vec<u64>,
        summary: serde_json::Value,
    ) -> Self {
        Self {
            status: RunStatus::Success,
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: Some(config.clone()),
            seeds,
            files: Vec::new(),
            summary,
            error: None,
        }
    }

    pub fn failure(
        command: &str,
        config: Option<&ExperimentConfig>,
        code: &str,
        message: String,
    ) -> Self {
        Self {
            status: RunStatus::Failure,
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.cloned(),
            seeds: Vec::new(),
            files: Vec::new(),
            summary: serde_json::Value::Null,
            error: Some(ManifestError {
                code: code.to_string(),
                message,
            }),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents)?;
    if let Err(e) = fs::rename(&tmp, &target) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(target)
}

/// Writes all artifacts, then the manifest listing them.
pub fn write_run(dir: &Path, artifacts: &[Artifact], mut manifest: Manifest) -> Result<Manifest> {
    for a in artifacts {
        write_atomic(dir, &a.name, &a.contents)?;
    }
    manifest.files = artifacts.iter().map(|a| a.name.clone()).collect();
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    let _ = writeln!(text);
    write_atomic(dir, MANIFEST, &text)?;
    Ok(())
}
