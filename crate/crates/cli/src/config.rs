//! Run configuration: JSON with a versioned schema, re-validated against the
//! library's physical constraints at load.

use std::path::PathBuf;

use bohm_sim::kg::TwoPhotonConfig;
use bohm_sim::lorentz::Boost;
use bohm_sim::trajectories::IntegratorOpts;
use bohm_sim::verification::{Grid, SuiteConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: line {line}, column {column}: {msg}")]
    Parse { path: String, line: usize, column: usize, msg: String },
    #[error("{path}: line {line}: `{field}`: {msg}")]
    Invalid { path: String, line: usize, field: String, msg: String },
    #[error("{path}: `{field}`: {msg}")]
    InvalidNoLine { path: String, field: String, msg: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Packets {
    pub k0_right: f64,
    pub sigma_right: f64,
    pub k0_left: f64,
    pub sigma_left: f64,
}

impl Default for Packets {
    fn default() -> Self {
        Packets { k0_right: 20.0, sigma_right: 1.0, k0_left: 20.0, sigma_left: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum Dispersion {
    Optical,
    Paraxial { kz: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeWindow {
    pub t0: f64,
    pub t1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialConditions {
    /// Listed (x1, x2) pairs.
    Explicit { pairs: Vec<(f64, f64)> },
    /// n pairs drawn from |psi_M(t0)|^2.
    Ensemble { n: usize, seed: u64 },
    /// Particle 1 at x1, particle 2 from its marginal.
    Pinned { x1: f64, n: usize, seed: u64 },
    /// n mirror-symmetric pairs (x, -x).
    Symmetric { n: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub packets: Packets,
    #[serde(default = "default_dispersion")]
    pub dispersion: Dispersion,
    /// Frame velocity of an optional boost.
    #[serde(default)]
    pub boost: Option<f64>,
    #[serde(default = "default_time")]
    pub time: TimeWindow,
    #[serde(default = "default_ics")]
    pub ics: InitialConditions,
    #[serde(default)]
    pub integrator: IntegratorOpts,
    #[serde(default = "default_output")]
    pub output: Output,
    /// Grid of the velocity and metric maps.
    #[serde(default = "Grid::validation")]
    pub grid: Grid,
    #[serde(default)]
    pub verify: SuiteConfig,
}

fn default_dispersion() -> Dispersion {
    Dispersion::Optical
}

fn default_time() -> TimeWindow {
    TimeWindow { t0: -2.0, t1: 2.0 }
}

fn default_ics() -> InitialConditions {
    InitialConditions::Pinned { x1: -2.0, n: 20, seed: 1 }
}

fn default_output() -> Output {
    Output { dir: PathBuf::from("out") }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            packets: Packets::default(),
            dispersion: default_dispersion(),
            boost: None,
            time: default_time(),
            ics: default_ics(),
            integrator: IntegratorOpts::default(),
            output: default_output(),
            grid: Grid::validation(),
            verify: SuiteConfig::default(),
        }
    }
}

/// A semantic error at a dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub msg: String,
}

fn err(field: &str, msg: impl Into<String>) -> FieldError {
    FieldError { field: field.into(), msg: msg.into() }
}

impl RunConfig {
    pub fn two_photon(&self) -> Result<TwoPhotonConfig, FieldError> {
        let p = &self.packets;
        TwoPhotonConfig::from_parameters(p.k0_right, p.sigma_right, p.k0_left, p.sigma_left).map_err(|e| {
            let msg = e.to_string();
            let field = if msg.contains("width") || msg.contains("sigma") {
                if !(p.sigma_right > 0.0 && p.sigma_right.is_finite()) { "packets.sigma_right" } else { "packets.sigma_left" }
            } else if !(p.k0_right > 0.0 && p.k0_right.is_finite()) {
                "packets.k0_right"
            } else {
                "packets.k0_left"
            };
            err(field, msg)
        })
    }

    pub fn boost(&self) -> Result<Option<Boost>, FieldError> {
        self.boost.map(|t| Boost::new(t).map_err(|e| err("boost", e.to_string()))).transpose()
    }

    /// Every physical constraint, in field order.
    pub fn validate(&self) -> Result<(), FieldError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(err("schema_version", format!("unsupported version {}, expected {CONFIG_SCHEMA_VERSION}", self.schema_version)));
        }
        self.two_photon()?;
        if let Dispersion::Paraxial { kz } = self.dispersion {
            if !(kz.is_finite() && kz > 0.0) {
                return Err(err("dispersion.kz", format!("must be finite and positive, got {kz}")));
            }
        }
        self.boost()?;
        let TimeWindow { t0, t1 } = self.time;
        if !(t0.is_finite() && t1.is_finite()) {
            return Err(err("time.t0", "times must be finite"));
        }
        if t1 <= t0 {
            return Err(err("time.t1", format!("t1 = {t1} must exceed t0 = {t0}")));
        }
        match &self.ics {
            InitialConditions::Explicit { pairs } => {
                if pairs.is_empty() {
                    return Err(err("ics.pairs", "at least one pair required"));
                }
                if let Some((i, p)) = pairs.iter().enumerate().find(|(_, p)| !(p.0.is_finite() && p.1.is_finite()) || p.0 == p.1) {
                    return Err(err("ics.pairs", format!("pair {i} = ({}, {}) must be finite and distinct", p.0, p.1)));
                }
            }
            InitialConditions::Ensemble { n, .. } | InitialConditions::Pinned { n, .. } | InitialConditions::Symmetric { n } => {
                if *n == 0 {
                    return Err(err("ics.n", "must be at least 1"));
                }
            }
        }
        if let InitialConditions::Pinned { x1, .. } = self.ics {
            if !x1.is_finite() {
                return Err(err("ics.x1", "must be finite"));
            }
        }
        self.integrator.validate().map_err(|e| {
            let field = if e.to_string().contains("tol") { "integrator.tol" } else { "integrator.sample_dt" };
            err(field, e.to_string())
        })?;
        for (name, g) in [("grid", &self.grid), ("verify.equivalence_grid", &self.verify.equivalence_grid)] {
            if !g.is_finite() || g.nt == 0 || g.nx == 0 {
                return Err(err(name, "grid ranges must be finite and counts positive"));
            }
        }
        Ok(())
    }

    /// Parses and validates, locating errors in `src`.
    pub fn from_json(src: &str, path: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(src).map_err(|e| ConfigError::Parse {
            path: path.into(),
            line: e.line(),
            column: e.column(),
            msg: strip_position(&e.to_string()),
        })?;
        cfg.validate().map_err(|fe| match locate(src, &fe.field) {
            Some(line) => ConfigError::Invalid { path: path.into(), line, field: fe.field, msg: fe.msg },
            None => ConfigError::InvalidNoLine { path: path.into(), field: fe.field, msg: fe.msg },
        })?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
        let p = path.display().to_string();
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: p.clone(), source })?;
        Self::from_json(&src, &p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// 1-based line of the last key of a dotted path, found by scanning for each
/// key in turn after the previous one.
pub fn locate(src: &str, field: &str) -> Option<usize> {
    let mut from = 0;
    for key in field.split('.') {
        let pat = format!("\"{key}\"");
        from += src[from..].find(&pat)?;
    }
    Some(src[..from].matches('\n').count() + 1)
}
