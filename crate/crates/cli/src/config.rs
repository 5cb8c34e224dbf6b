//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use giant_cavity_filter::covariance::{min_symmetric_eigenvalue, Integrator};
use giant_cavity_filter::model::{Coupling, PhysicalParams};
use giant_cavity_filter::sim::Prehistory;
use giant_cavity_filter::wigner::{CatParams, GridSpec};
use giant_cavity_filter::Error as CoreError;

use crate::error::{CliError, Result};

/// Largest accepted distance of `T/h` from an integer.
pub const STEP_DIVISOR_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub physical: PhysicalSection,
    pub sim: SimSection,
    pub filter: FilterSection,
    #[serde(default)]
    pub wigner: Option<WignerSection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// Exactly one of `gamma` and `coupling_strength` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalSection {
    pub omega_c: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub coupling_strength: Option<f64>,
    pub length: f64,
    pub group_velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub horizon: f64,
    /// `T / h`; must be an integer.
    pub step_divisor: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub trajectories: usize,
    #[serde(default)]
    pub prehistory: PrehistoryName,
    #[serde(default = "unit")]
    pub noise_variance_scale: f64,
    pub x0: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub xhat0: [f64; 2],
    /// Rows of the initial error covariance.
    #[serde(default = "identity")]
    pub p0: [[f64; 2]; 2],
    #[serde(default)]
    pub integrator: IntegratorName,
    /// Also run the stacked oracle over `[0, T]` and report `E[e(T) e(0)^T]`.
    #[serde(default)]
    pub audit_cross_covariance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerSection {
    pub mode: WignerMode,
    /// Which ensemble mean supplies the phase-space center.
    #[serde(default)]
    pub source: WignerSource,
    /// Seconds, within `[0, horizon]`.
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub cat: Option<CatSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub half_width: f64,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            half_width: 4.0,
            points: 201,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatSection {
    pub beta: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub formats: Vec<TableFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("output"),
            formats: vec![TableFormat::Csv],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrehistoryName {
    #[default]
    Zero,
    HoldInitial,
}

impl From<PrehistoryName> for Prehistory {
    fn from(p: PrehistoryName) -> Self {
        match p {
            PrehistoryName::Zero => Prehistory::Zero,
            PrehistoryName::HoldInitial => Prehistory::HoldInitial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegratorName {
    #[default]
    Euler,
    Rk4,
}

impl From<IntegratorName> for Integrator {
    fn from(i: IntegratorName) -> Self {
        match i {
            IntegratorName::Euler => Integrator::Euler,
            IntegratorName::Rk4 => Integrator::Rk4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WignerMode {
    Coherent,
    Cat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WignerSource {
    #[default]
    Estimate,
    Truth,
}

/// Delimited text; both carry 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Tsv,
}

impl TableFormat {
    pub fn delimiter(self) -> char {
        match self {
            TableFormat::Csv => ',',
            TableFormat::Tsv => '\t',
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Tsv => "tsv",
        }
    }
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn identity() -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 1.0]]
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trajectories: Option<usize>,
}

fn field(name: &str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        field: name.to_string(),
        reason: reason.into(),
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(field(name, format!("must be finite, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field(name, format!("must be finite and > 0, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| field("config", e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dir) = &o.output_dir {
            self.output.dir = dir.clone();
        }
        if let Some(seed) = o.seed {
            self.sim.seed = seed;
        }
        if let Some(n) = o.trajectories {
            self.sim.trajectories = n;
        }
    }

    pub fn physical_params(&self) -> Result<PhysicalParams> {
        let p = &self.physical;
        let coupling = match (p.gamma, p.coupling_strength) {
            (Some(g), None) => Coupling::Rate(g),
            (None, Some(v)) => Coupling::Strength(v),
            (Some(_), Some(_)) => {
                return Err(field(
                    "physical.gamma",
                    "give either gamma or coupling_strength, not both",
                ))
            }
            (None, None) => {
                return Err(field(
                    "physical.gamma",
                    "one of gamma or coupling_strength is required",
                ))
            }
        };
        let params = PhysicalParams {
            omega_c: p.omega_c,
            coupling,
            length: p.length,
            group_velocity: p.group_velocity,
        };
        params.validate().map_err(|e| match e {
            CoreError::InvalidParameter { name, reason } => {
                field(&format!("physical.{name}"), reason)
            }
            other => CliError::Model(other),
        })?;
        Ok(params)
    }

    pub fn step(&self) -> Result<f64> {
        Ok(self.physical_params()?.delay() / self.sim.step_divisor)
    }

    pub fn x0(&self) -> Vector2<f64> {
        Vector2::from(self.sim.x0)
    }

    pub fn xhat0(&self) -> Vector2<f64> {
        Vector2::from(self.filter.xhat0)
    }

    pub fn p0(&self) -> Matrix2<f64> {
        let r = self.filter.p0;
        Matrix2::new(r[0][0], r[0][1], r[1][0], r[1][1])
    }

    pub fn cat_params(&self, center: Vector2<f64>) -> Option<CatParams> {
        let cat = self.wigner.as_ref()?.cat?;
        Some(CatParams {
            q0: center[0],
            p0: center[1],
            beta: cat.beta,
            sigma: cat.sigma,
        })
    }

    pub fn grid_spec(&self, center: Vector2<f64>) -> Option<GridSpec> {
        let g = self.wigner.as_ref()?.grid;
        Some(GridSpec::centered(center, g.half_width, g.points))
    }

    /// Checks every block; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        self.physical_params()?;

        let s = &self.sim;
        positive("sim.horizon", s.horizon)?;
        positive("sim.step_divisor", s.step_divisor)?;
        let rounded = s.step_divisor.round();
        if rounded < 1.0 || (s.step_divisor - rounded).abs() > STEP_DIVISOR_TOLERANCE * rounded {
            return Err(field(
                "sim.step_divisor",
                format!(
                    "T/h = {} is not a positive integer within {STEP_DIVISOR_TOLERANCE:e}",
                    s.step_divisor
                ),
            ));
        }
        if s.trajectories == 0 {
            return Err(field("sim.trajectories", "must be at least 1"));
        }
        if s.seed.checked_add(s.trajectories as u64 - 1).is_none() {
            return Err(field("sim.seed", "seed + trajectories overflows u64"));
        }
        if !s.noise_variance_scale.is_finite() || s.noise_variance_scale < 0.0 {
            return Err(field(
                "sim.noise_variance_scale",
                format!("must be finite and >= 0, got {}", s.noise_variance_scale),
            ));
        }
        finite("sim.x0", s.x0[0])?;
        finite("sim.x0", s.x0[1])?;

        let f = &self.filter;
        finite("filter.xhat0", f.xhat0[0])?;
        finite("filter.xhat0", f.xhat0[1])?;
        let p0 = self.p0();
        if p0.iter().any(|v| !v.is_finite()) {
            return Err(field("filter.p0", "entries must be finite"));
        }
        if p0[(0, 1)] != p0[(1, 0)] {
            return Err(field("filter.p0", "must be symmetric"));
        }
        let lo = min_symmetric_eigenvalue(&p0);
        if lo < 0.0 {
            return Err(field(
                "filter.p0",
                format!("must be positive semidefinite, minimum eigenvalue {lo:e}"),
            ));
        }

        if let Some(w) = &self.wigner {
            if w.snapshot_times.is_empty() {
                return Err(field(
                    "wigner.snapshot_times",
                    "must list at least one time",
                ));
            }
            for &t in &w.snapshot_times {
                if !t.is_finite() || t < 0.0 || t > s.horizon {
                    return Err(field(
                        "wigner.snapshot_times",
                        format!("{t} is outside [0, {}]", s.horizon),
                    ));
                }
            }
            positive("wigner.grid.half_width", w.grid.half_width)?;
            if w.grid.points < 2 {
                return Err(field(
                    "wigner.grid.points",
                    "need at least 2 points per axis",
                ));
            }
            match (w.mode, w.cat) {
                (WignerMode::Cat, None) => {
                    return Err(field("wigner.cat", "required when mode = \"cat\""))
                }
                (WignerMode::Cat, Some(c)) => {
                    finite("wigner.cat.beta", c.beta)?;
                    positive("wigner.cat.sigma", c.sigma)?;
                }
                (WignerMode::Coherent, _) => {}
            }
        }

        if self.output.formats.is_empty() {
            return Err(field("output.formats", "must list at least one format"));
        }
        if self.output.dir.as_os_str().is_empty() {
            return Err(field("output.dir", "must not be empty"));
        }
        Ok(())
    }
}
