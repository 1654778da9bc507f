//! Manifests and comma-separated tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExperimentError, RunConfig, StabilityReport, StabilityRun};
use crate::transport::Trajectory;

/// Float with 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Hex SHA-256 of the TOML form of a configuration.
pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io { path: path.to_path_buf(), message: e.to_string() }
}

/// Write a header row and float rows.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), ExperimentError> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_float).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

pub const TRAJECTORY_HEADER: [&str; 7] = ["t", "z", "R", "normX", "normX0", "p_center", "p_boundary"];

pub fn trajectory_rows(traj: &Trajectory) -> impl Iterator<Item = Vec<f64>> + '_ {
    (0..traj.len()).map(|k| {
        vec![
            traj.times[k],
            traj.z[k],
            traj.z[k].exp(),
            traj.norm_x[k],
            traj.norm_x0[k],
            traj.p_center[k],
            traj.p_boundary[k],
        ]
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    pub tumorstab: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub config_hash: String,
    pub versions: Versions,
    /// Stationary and Picard residuals.
    pub residuals: serde_json::Value,
    pub report: serde_json::Value,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub manifest: PathBuf,
    pub trajectory: PathBuf,
    pub decay: PathBuf,
    pub config: PathBuf,
}

fn residuals(report: &StabilityReport) -> serde_json::Value {
    serde_json::json!({
        "stationary": report.stationary_residual,
        "picard_distances": report.picard.as_ref().map(|p| p.distances.clone()),
        "linear_deviation": report.linear_deviation,
    })
}

/// Write the manifest, the trajectory table, the decay table and the
/// configuration into `dir`.
pub fn emit_report(run: &StabilityRun, dir: &Path) -> Result<EmittedFiles, ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let names = &run.config.output;
    let files = EmittedFiles {
        manifest: dir.join(&names.manifest),
        trajectory: dir.join(&names.trajectory),
        decay: dir.join(&names.decay),
        config: dir.join("config.toml"),
    };
    write_table(&files.trajectory, &TRAJECTORY_HEADER, trajectory_rows(&run.trajectory))?;

    let rep = &run.report;
    let line = |fit: &Option<crate::linearized::DecayReport>, t: f64| {
        fit.as_ref().map_or(f64::NAN, |d| d.k_fit.ln() - d.mu_fit * t)
    };
    let traj = &run.trajectory;
    let rows = (0..traj.len()).map(|k| {
        let t = traj.times[k];
        vec![t, traj.norm_x[k].ln(), line(&rep.fit_x, t), traj.norm_x0[k].ln(), line(&rep.fit_x0, t)]
    });
    write_table(&files.decay, &["t", "log_normX", "fit_X", "log_normX0", "fit_X0"], rows)?;

    std::fs::write(&files.config, run.config.to_toml()).map_err(|e| io_err(&files.config, e))?;
    let manifest = Manifest {
        config: run.config.clone(),
        config_hash: config_hash(&run.config),
        versions: Versions { tumorstab: env!("CARGO_PKG_VERSION").into() },
        residuals: residuals(rep),
        report: serde_json::to_value(rep).map_err(|e| io_err(&files.manifest, e))?,
        files: [&files.trajectory, &files.decay, &files.config]
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| io_err(&files.manifest, e))?;
    std::fs::write(&files.manifest, text).map_err(|e| io_err(&files.manifest, e))?;
    Ok(files)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
}
