//! Alcubierre-like shift metric ds^2 = -(1 - vs^2) dt^2 - 2 vs dx dt + dx^2
//! whose null curves reproduce the Bohmian coordinate velocity.

use serde::{Deserialize, Serialize};

use crate::kg::{CurrentDensity, NodeSingularity};

/// Metric components at one point for a given shift.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub vs: f64,
    pub g_tt: f64,
    pub g_tx: f64,
    pub g_xx: f64,
}

impl MetricSample {
    pub fn from_shift(vs: f64) -> Self {
        MetricSample { vs, g_tt: -(1.0 - vs * vs), g_tx: -vs, g_xx: 1.0 }
    }

    /// ds^2 for the displacement (dt, dx).
    pub fn line_element(&self, dt: f64, dx: f64) -> f64 {
        self.g_tt * dt * dt + 2.0 * self.g_tx * dx * dt + self.g_xx * dx * dx
    }
}

/// Branch of the null condition dx/dt = vs + s.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// dx/dt = vs + 1
    Plus,
    /// dx/dt = vs - 1
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    /// Co-moving branch for a velocity v: sgn(v), with Plus at v = 0.
    /// This reproduces v for every v != 0, sub-luminal included.
    pub fn co_moving(v: f64) -> Branch {
        if v < 0.0 {
            Branch::Minus
        } else {
            Branch::Plus
        }
    }
}

/// vs = (|j/rho| - 1) sgn(j/rho).
pub fn shift_from_current(cd: CurrentDensity, eps: f64) -> Result<MetricSample, NodeSingularity> {
    if cd.rho.abs() < eps || !cd.rho.is_finite() {
        return Err(NodeSingularity { particle: 0, rho: cd.rho, eps });
    }
    let v = cd.j / cd.rho;
    Ok(MetricSample::from_shift((v.abs() - 1.0) * sgn(v)))
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// dx/dt on the chosen branch of ds^2 = 0: vs +- 1.
pub fn coordinate_velocity(ms: &MetricSample, branch: Branch) -> f64 {
    ms.vs + branch.sign()
}
