//! TOML run configuration.
//!
//! Every block has documented defaults; the resolved configuration (defaults
//! filled in) is what gets echoed into output JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{BoundaryMode, LawVariant};
use crate::lyapunov::MuHatPolicy;
use crate::material::{DesiredState, MaterialParams, ViscoplasticLaw};
use crate::solver::{Grid, Scheme, SolverConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {reason}")]
    Io { path: String, reason: String },

    #[error("malformed config: {0}")]
    Parse(String),

    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

impl ConfigError {
    fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Key path of a validation error, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            Self::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    /// Elastic modulus, MPa.
    #[serde(rename = "E")]
    pub elastic_modulus: f64,
    /// Specimen length, mm.
    #[serde(rename = "L", default = "default_length")]
    pub length: f64,
    /// Cross-section, mm².
    #[serde(rename = "A", default = "default_area")]
    pub area: f64,
    /// Free-form label, e.g. "1150C".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<String>,
}

fn default_length() -> f64 {
    7.5
}

fn default_area() -> f64 {
    109.31
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesiredConfig {
    pub sigma_star: f64,
    /// Velocity at `x = 0`, mm/s.
    #[serde(default)]
    pub v_star_0: f64,
    /// Velocity at `x = L`; defaults to `v_star_0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_star_l: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearizationConfig {
    /// Use this `S*` instead of differentiating the law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_n_cells")]
    pub n_cells: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub t_end: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub scheme: Scheme,
}

fn default_n_cells() -> usize {
    256
}

fn default_cfl() -> f64 {
    0.9
}

fn default_record_every() -> usize {
    1
}

/// How the linear loop is closed in `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    /// Reflection gains on the invariants.
    #[default]
    Reflection,
    /// Velocity commands from the feedback law, one step delayed.
    Controller,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default)]
    pub law_variant: LawVariant,
    #[serde(default)]
    pub left: BoundaryMode,
    #[serde(default)]
    pub right: BoundaryMode,
    #[serde(default)]
    pub coupling: Coupling,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            law_variant: LawVariant::default(),
            left: BoundaryMode::Feedback,
            right: BoundaryMode::Feedback,
            coupling: Coupling::default(),
        }
    }
}

/// Initial data: uniform `(v₀, σ₀)` plus a raised-cosine hump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Uniform initial stress; defaults to `σ*`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
    /// Uniform initial velocity; defaults to `v*(x)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    /// Hump height added to the stress, MPa.
    #[serde(default)]
    pub bump_sigma: f64,
    /// Hump height added to the velocity, mm/s.
    #[serde(default)]
    pub bump_v: f64,
    /// Hump center as a fraction of `L`.
    #[serde(default = "half")]
    pub bump_center: f64,
    /// Hump support as a fraction of `L`.
    #[serde(default = "half")]
    pub bump_width: f64,
}

fn half() -> f64 {
    0.5
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            sigma0: None,
            v0: None,
            bump_sigma: 0.0,
            bump_v: 0.0,
            bump_center: 0.5,
            bump_width: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Dotted key, e.g. `material.E`.
    pub path: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefineProfile {
    /// Raised-cosine humps in both invariants.
    #[default]
    Bump,
    /// Uniform unit state.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineConfig {
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
    /// Final time of every level; defaults to a quarter transit `L/(4√E)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Reflection gain used at both ends.
    #[serde(default)]
    pub gain: f64,
    #[serde(default)]
    pub profile: RefineProfile,
}

fn default_levels() -> Vec<usize> {
    vec![64, 128, 256]
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            levels: default_levels(),
            t_end: None,
            gain: 0.0,
            profile: RefineProfile::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub material: MaterialConfig,
    pub desired: DesiredConfig,
    #[serde(default = "elastic")]
    pub law: ViscoplasticLaw,
    #[serde(default)]
    pub linearization: LinearizationConfig,
    pub solver: SolverSection,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub lyapunov: MuHatPolicy,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub refine: RefineConfig,
}

fn elastic() -> ViscoplasticLaw {
    ViscoplasticLaw::Elastic
}

fn check(ok: bool, key: &str, reason: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, reason))
    }
}

fn finite(x: f64, key: &str) -> Result<(), ConfigError> {
    check(x.is_finite(), key, "must be finite")
}

fn positive(x: f64, key: &str) -> Result<(), ConfigError> {
    check(x.is_finite() && x > 0.0, key, "must be finite and > 0")
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_value(&self) -> toml::Value {
        toml::Value::try_from(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.material;
        positive(m.elastic_modulus, "material.E")?;
        positive(m.length, "material.L")?;
        positive(m.area, "material.A")?;

        let d = &self.desired;
        finite(d.sigma_star, "desired.sigma_star")?;
        finite(d.v_star_0, "desired.v_star_0")?;
        if let Some(v) = d.v_star_l {
            finite(v, "desired.v_star_l")?;
        }

        self.law.validate().map_err(|e| match e {
            crate::Error::InvalidParameter { name, reason } => {
                ConfigError::invalid(format!("law.{name}"), reason)
            }
            other => ConfigError::invalid("law", other.to_string()),
        })?;

        if let Some(s) = self.linearization.s_star {
            finite(s, "linearization.s_star")?;
        }
        if let Some(h) = self.linearization.fd_step {
            positive(h, "linearization.fd_step")?;
        }

        let s = &self.solver;
        check(s.n_cells >= 2, "solver.n_cells", "need at least 2 cells")?;
        check(s.cfl > 0.0 && s.cfl <= 1.0, "solver.cfl", "must lie in (0, 1]")?;
        positive(s.t_end, "solver.t_end")?;
        check(s.record_every >= 1, "solver.record_every", "must be >= 1")?;

        match self.lyapunov {
            MuHatPolicy::Fixed { mu_hat } => check(
                mu_hat.is_finite() && mu_hat >= 0.0,
                "lyapunov.mu_hat",
                "must be finite and >= 0",
            )?,
            MuHatPolicy::Search { mu_hat_max, n_scan } => {
                if let Some(m) = mu_hat_max {
                    positive(m, "lyapunov.mu_hat_max")?;
                }
                check(n_scan >= 2, "lyapunov.n_scan", "must be >= 2")?;
            }
            MuHatPolicy::MatchRelaxation => {}
        }

        let i = &self.initial;
        for (x, key) in [
            (i.sigma0, "initial.sigma0"),
            (i.v0, "initial.v0"),
            (Some(i.bump_sigma), "initial.bump_sigma"),
            (Some(i.bump_v), "initial.bump_v"),
            (Some(i.bump_center), "initial.bump_center"),
        ] {
            if let Some(x) = x {
                finite(x, key)?;
            }
        }
        positive(i.bump_width, "initial.bump_width")?;

        if let Some(sw) = &self.sweep {
            check(!sw.values.is_empty(), "sweep.values", "need at least one value")?;
            check(
                sw.values.iter().all(|v| v.is_finite()),
                "sweep.values",
                "must be finite",
            )?;
        }

        let r = &self.refine;
        check(r.levels.len() >= 2, "refine.levels", "need at least 2 levels")?;
        check(
            r.levels.iter().all(|&n| n >= 2),
            "refine.levels",
            "every level needs at least 2 cells",
        )?;
        check(
            r.levels.windows(2).all(|w| w[1] > w[0]),
            "refine.levels",
            "must be strictly increasing",
        )?;
        if let Some(t) = r.t_end {
            positive(t, "refine.t_end")?;
        }
        finite(r.gain, "refine.gain")?;
        Ok(())
    }

    pub fn material_params(&self) -> MaterialParams {
        MaterialParams {
            elastic_modulus: self.material.elastic_modulus,
            length: self.material.length,
            area: self.material.area,
            density: 1.0,
        }
    }

    pub fn desired_state(&self) -> DesiredState {
        DesiredState {
            sigma_star: self.desired.sigma_star,
            v_star_left: self.desired.v_star_0,
            v_star_right: self.desired.v_star_l.unwrap_or(self.desired.v_star_0),
            length: self.material.length,
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.material.length, self.solver.n_cells).expect("validated grid")
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            cfl: self.solver.cfl,
            t_end: self.solver.t_end,
            record_every: self.solver.record_every,
            scheme: self.solver.scheme,
        }
    }

    /// Copy of `self` with the dotted `path` set to `value`. Integer keys
    /// accept integral values only.
    pub fn with_value(&self, path: &str, value: f64) -> Result<Self, ConfigError> {
        let mut root = self.to_toml_value();
        let mut slot = &mut root;
        for part in path.split('.') {
            slot = slot
                .as_table_mut()
                .and_then(|t| t.get_mut(part))
                .ok_or_else(|| ConfigError::invalid(path, "unknown sweep key"))?;
        }
        *slot = match slot {
            toml::Value::Integer(_) => {
                if value.fract() != 0.0 || value.abs() > i64::MAX as f64 {
                    return Err(ConfigError::invalid(path, "integer key needs an integral value"));
                }
                toml::Value::Integer(value as i64)
            }
            toml::Value::Float(_) => toml::Value::Float(value),
            _ => return Err(ConfigError::invalid(path, "sweep key must be a scalar number")),
        };
        let cfg: Self = root
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
