//! Run configuration (JSON).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::MAX_KL_MODES;
use crate::mesh::{Rect, DEFAULT_OBSTACLE};
use crate::sg::LinearSolverSettings;
use crate::stepper::StepperConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub length: f64,
    pub half_height: f64,
    /// `[x0, x1, y0, y1]`, or `null` for an empty channel.
    pub obstacle: Option<[f64; 4]>,
    pub refinement: u32,
}

impl Default for MeshConfig {
    fn default() -> Self {
        let o = DEFAULT_OBSTACLE;
        MeshConfig { length: 12.0, half_height: 1.0, obstacle: Some([o.x0, o.x1, o.y0, o.y1]), refinement: 2 }
    }
}

impl MeshConfig {
    pub fn obstacle_rect(&self) -> Option<Rect> {
        self.obstacle.map(|[x0, x1, y0, y1]| Rect::new(x0, x1, y0, y1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    /// Mean viscosity.
    pub nu_mean: f64,
    /// Coefficient of variation of the viscosity.
    #[serde(rename = "CoV")]
    pub cov: f64,
    /// Correlation lengths; default to a quarter of the channel dimensions.
    #[serde(rename = "L_x")]
    pub corr_x: Option<f64>,
    #[serde(rename = "L_y")]
    pub corr_y: Option<f64>,
    /// Number of random variables.
    pub m_xi: usize,
    /// Total degree of the solution expansion.
    pub p_xi: usize,
    pub ramp_rate: f64,
    pub stepper: StepperConfig,
    pub probes: Vec<[f64; 2]>,
    pub linear_solver: LinearSolverSettings,
    /// Monte Carlo sample count.
    pub n_samples: usize,
    /// Sparse-grid level; defaults to `p_xi`.
    pub sc_level: Option<usize>,
    pub seed: u64,
    pub threads: usize,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh: MeshConfig::default(),
            nu_mean: 0.02,
            cov: 0.1,
            corr_x: None,
            corr_y: None,
            m_xi: 2,
            p_xi: 3,
            ramp_rate: crate::boundary::DEFAULT_RAMP_RATE,
            stepper: StepperConfig::default(),
            probes: vec![[4.01, -0.4339], [4.01, 0.4339], [3.6436, 0.0]],
            linear_solver: LinearSolverSettings::default(),
            n_samples: 200,
            sc_level: None,
            seed: 0,
            threads: 1,
            output_dir: "out".into(),
        }
    }
}

impl RunConfig {
    pub fn correlation_lengths(&self) -> (f64, f64) {
        (self.corr_x.unwrap_or(0.25 * self.mesh.length), self.corr_y.unwrap_or(0.5 * self.mesh.half_height))
    }

    pub fn sparse_grid_level(&self) -> usize {
        self.sc_level.unwrap_or(self.p_xi)
    }

    /// Range checks that do not need the mesh; probe locations are checked
    /// when the mesh is built.
    pub fn validate(&self) -> Result<()> {
        if !(self.nu_mean > 0.0 && self.nu_mean.is_finite()) {
            return Err(Error::config("nu_mean", "must be positive"));
        }
        if !(self.cov >= 0.0 && self.cov.is_finite()) {
            return Err(Error::config("CoV", format!("must be non-negative, got {}", self.cov)));
        }
        let (lx, ly) = self.correlation_lengths();
        if !(lx > 0.0) {
            return Err(Error::config("L_x", "must be positive"));
        }
        if !(ly > 0.0) {
            return Err(Error::config("L_y", "must be positive"));
        }
        if self.m_xi == 0 || self.m_xi > MAX_KL_MODES {
            return Err(Error::config("m_xi", format!("must lie in 1..={MAX_KL_MODES}")));
        }
        if !(self.ramp_rate > 0.0) {
            return Err(Error::config("ramp_rate", "must be positive"));
        }
        if self.n_samples == 0 {
            return Err(Error::config("n_samples", "must be positive"));
        }
        if self.threads == 0 {
            return Err(Error::config("threads", "must be positive"));
        }
        if !(self.mesh.length > 0.0 && self.mesh.half_height > 0.0) {
            return Err(Error::config("mesh", "channel dimensions must be positive"));
        }
        self.stepper.validate()
    }
}

/// Parses and validates a JSON configuration; blank input gives the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

/// Pretty JSON of the effective configuration.
pub fn echo_config(config: &RunConfig) -> String {
    serde_json::to_string_pretty(config).expect("configuration serializes")
}
