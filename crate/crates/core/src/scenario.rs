//! JSON scenario files and trajectory output (CSV or JSON).

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::Mode;
use crate::navigation::NavParams;
use crate::simulator::{DynamicsChoice, Sample, Scenario, Trajectory};
use crate::sphere::UnitVector;
use crate::world::ConicConstraint;

/// Inputs further than this from unit norm are normalized with a warning.
pub const NORMALIZE_WARN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] crate::error::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub dimension: usize,
    pub dynamics: DynamicsSpec,
    pub constraints: Vec<ConstraintSpec>,
    pub start: Vec<f64>,
    pub target: Vec<f64>,
    #[serde(default)]
    pub controller: ControllerSpec,
    #[serde(default)]
    pub integration: IntegrationSpec,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    #[serde(rename = "type")]
    pub kind: DynamicsChoice,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub axis: Vec<f64>,
    pub angle_rad: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_gain")]
    pub gamma: f64,
    #[serde(default = "default_gain")]
    pub k: f64,
}

fn default_mode() -> Mode {
    Mode::Multi
}

fn default_gain() -> f64 {
    5.0
}

impl Default for ControllerSpec {
    fn default() -> Self {
        Self { mode: default_mode(), gamma: default_gain(), k: default_gain() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_tol")]
    pub convergence_tol: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_t_end() -> f64 {
    20.0
}

fn default_tol() -> f64 {
    1e-3
}

fn default_stride() -> usize {
    10
}

impl Default for IntegrationSpec {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            t_end: default_t_end(),
            convergence_tol: default_tol(),
            record_stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

impl<'de> Deserialize<'de> for DynamicsChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "spherical_pendulum" => Ok(Self::SphericalPendulum),
            "full_tangent" => Ok(Self::FullTangent),
            other => Err(serde::de::Error::unknown_variant(other, &["spherical_pendulum", "full_tangent"])),
        }
    }
}

fn unit_from(label: &str, v: &[f64]) -> Result<UnitVector, crate::error::Error> {
    let x = UnitVector::normalize_slice(v)?;
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > NORMALIZE_WARN_TOLERANCE {
        warn!("{label} has norm {norm}; normalized on load");
    }
    Ok(x)
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let mut text = String::new();
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn to_scenario(&self) -> Result<Scenario, ScenarioError> {
        let constraints = self
            .constraints
            .iter()
            .enumerate()
            .map(|(i, c)| ConicConstraint::new(unit_from(&format!("constraint {i} axis"), &c.axis)?, c.angle_rad))
            .collect::<Result<Vec<_>, _>>()?;
        let scenario = Scenario {
            n: self.dimension,
            dynamics: self.dynamics.kind,
            constraints,
            start: unit_from("start", &self.start)?,
            target: unit_from("target", &self.target)?,
            params: NavParams::new(self.controller.gamma, self.controller.k)?,
            mode: self.controller.mode,
            dt: self.integration.dt,
            t_end: self.integration.t_end,
            convergence_tol: self.integration.convergence_tol,
            record_stride: self.integration.record_stride,
        };
        scenario.check()?;
        Ok(scenario)
    }
}

/// CSV header: `t, x_0..x_n, xi_0..xi_(n-1), u_0..u_(m-1), [phi,] min_margin`.
pub fn csv_header(n: usize, m: usize, with_phi: bool) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..=n).map(|i| format!("x_{i}")));
    h.extend((0..n).map(|i| format!("xi_{i}")));
    h.extend((0..m).map(|i| format!("u_{i}")));
    if with_phi {
        h.push("phi".into());
    }
    h.push("min_margin".into());
    h
}

/// 17 significant digits: lossless for f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(writer: W, trajectory: &Trajectory) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let Some(first) = trajectory.samples.first() else {
        w.flush()?;
        return Ok(());
    };
    let n = first.xi.len();
    let m = first.u.len();
    let with_phi = first.phi.is_some();
    w.write_record(csv_header(n, m, with_phi))?;
    for s in &trajectory.samples {
        let mut row = vec![format_f64(s.t)];
        row.extend(s.x.iter().map(|v| format_f64(*v)));
        row.extend(s.xi.iter().map(|v| format_f64(*v)));
        row.extend(s.u.iter().map(|v| format_f64(*v)));
        if with_phi {
            row.push(format_f64(s.phi.unwrap_or(f64::NAN)));
        }
        row.push(format_f64(s.min_margin));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a CSV written by [`write_csv`] back into samples.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<Sample>, Box<dyn std::error::Error>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
    let n_x = count("x_");
    let n_xi = count("xi_");
    let m = count("u_");
    let with_phi = header.iter().any(|h| h == "phi");
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let vals = record.iter().map(|f| f.parse::<f64>()).collect::<Result<Vec<_>, _>>()?;
        let mut it = vals.into_iter();
        let mut take = |k: usize| -> Vec<f64> { it.by_ref().take(k).collect() };
        let t = take(1)[0];
        let x = take(n_x);
        let xi = take(n_xi);
        let u = take(m);
        let phi = if with_phi { Some(take(1)[0]) } else { None };
        let min_margin = take(1)[0];
        out.push(Sample { t, x, xi, u, phi, min_margin });
    }
    Ok(out)
}

pub fn write_json<W: Write>(writer: W, trajectory: &Trajectory) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(writer, trajectory)
}

/// Writes the trajectory in the requested format, creating parent folders.
pub fn write_trajectory(path: &Path, format: OutputFormat, trajectory: &Trajectory) -> io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let file = io::BufWriter::new(File::create(path)?);
    match format {
        OutputFormat::Csv => write_csv(file, trajectory).map_err(io::Error::other),
        OutputFormat::Json => write_json(file, trajectory).map_err(io::Error::other),
    }
}
