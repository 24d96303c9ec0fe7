//! Operational route: the measurement amplitude psi_M, the weak-value
//! numerators for detectors A and B, and the resulting velocity fields.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::kg::{MultiPoint, NodeSingularity, TwoPhotonConfig, VelocityField, DEFAULT_NODE_REL};
use crate::quadrature::{integrate, QuadError, WINDOW_SIGMAS};
use crate::wavepacket::{psi1, psi1_k, psi2, psi2_k, Amplitude, Event, Packet};

/// Postselection point: detectors at x1 and x2 on the timeslice t.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EqualTimePoint {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
}

impl EqualTimePoint {
    pub fn new(t: f64, x1: f64, x2: f64) -> Self {
        EqualTimePoint { t, x1, x2 }
    }

    pub fn swap(&self) -> Self {
        EqualTimePoint { t: self.t, x1: self.x2, x2: self.x1 }
    }

    pub fn multipoint(&self) -> MultiPoint {
        MultiPoint::equal_time(self.t, self.x1, self.x2)
    }
}

/// psi_M = (psi1(x1) psi2(x2) + psi1(x2) psi2(x1)) / sqrt 2 on the timeslice t.
pub fn psi_m(cfg: &TwoPhotonConfig, p: &EqualTimePoint) -> Amplitude {
    let (e1, e2) = (Event::new(p.t, p.x1), Event::new(p.t, p.x2));
    (psi1(cfg.right(), e1) * psi2(cfg.left(), e2) + psi1(cfg.right(), e2) * psi2(cfg.left(), e1)) * FRAC_1_SQRT_2
}

/// Weak-value numerators: momentum (k) and energy (h) for detectors A and B.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WvNumerators {
    pub k_a: Amplitude,
    pub k_b: Amplitude,
    pub h_a: Amplitude,
    pub h_b: Amplitude,
}

pub fn wv_numerators(cfg: &TwoPhotonConfig, p: &EqualTimePoint) -> WvNumerators {
    let (r, l) = (cfg.right(), cfg.left());
    let (e1, e2) = (Event::new(p.t, p.x1), Event::new(p.t, p.x2));
    let (p1_1, p1_2) = (psi1(r, e1), psi1(r, e2));
    let (p2_1, p2_2) = (psi2(l, e1), psi2(l, e2));
    let (k1_1, k1_2) = (psi1_k(r, e1), psi1_k(r, e2));
    let (k2_1, k2_2) = (psi2_k(l, e1), psi2_k(l, e2));
    let s = FRAC_1_SQRT_2;
    WvNumerators {
        k_a: (k1_1 * p2_2 - p1_2 * k2_1) * s,
        h_a: (k1_1 * p2_2 + p1_2 * k2_1) * s,
        k_b: (k1_2 * p2_1 - p1_1 * k2_2) * s,
        h_b: (p1_1 * k2_2 + k1_2 * p2_1) * s,
    }
}

fn ratio(num: f64, den: f64, particle: u8, eps: f64) -> Result<f64, NodeSingularity> {
    if den.abs() < eps || !den.is_finite() {
        Err(NodeSingularity { particle, rho: den, eps })
    } else {
        Ok(num / den)
    }
}

/// Velocities from the weak-value ratios with an explicit absolute threshold
/// on the denominators 2 Re(psi_M* h).
pub fn velocity_m_with(cfg: &TwoPhotonConfig, p: &EqualTimePoint, eps: f64) -> Result<(f64, f64), NodeSingularity> {
    let psi = psi_m(cfg, p).conj();
    let n = wv_numerators(cfg, p);
    let v1 = ratio(2.0 * (psi * n.k_a).re, 2.0 * (psi * n.h_a).re, 1, eps)?;
    let v2 = ratio(2.0 * (psi * n.k_b).re, 2.0 * (psi * n.h_b).re, 2, eps)?;
    Ok((v1, v2))
}

pub fn velocity_m(cfg: &TwoPhotonConfig, p: &EqualTimePoint) -> Result<(f64, f64), NodeSingularity> {
    velocity_m_with(cfg, p, cfg.node_threshold(DEFAULT_NODE_REL))
}

/// Weak-value velocity field. Only defined on equal timeslices; at unequal
/// times the time of particle 1 is used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakValueField {
    pub cfg: TwoPhotonConfig,
    pub eps: f64,
}

impl WeakValueField {
    pub fn new(cfg: TwoPhotonConfig) -> Self {
        WeakValueField { cfg, eps: cfg.node_threshold(DEFAULT_NODE_REL) }
    }
}

impl VelocityField for WeakValueField {
    fn velocity(&self, mp: &MultiPoint) -> Result<(f64, f64), NodeSingularity> {
        debug_assert!(mp.is_equal_time());
        velocity_m_with(&self.cfg, &EqualTimePoint::new(mp.e1.t, mp.e1.x, mp.e2.x), self.eps)
    }
}

/// The four contributions to <x|H_A|psi>, each divided by sqrt 2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTerms {
    pub t1: Amplitude,
    pub t2: Amplitude,
    pub t3: Amplitude,
    pub t4: Amplitude,
}

impl TTerms {
    /// Sum of the four terms.
    pub fn h_a(&self) -> Amplitude {
        self.t1 + self.t2 + self.t3 + self.t4
    }
}

/// Photon species attached to a detector momentum state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Species {
    One,
    Two,
}

/// <k_sA|H_A|k_s'A> species factor: the detector Hamiltonian is diagonal in
/// the species label, so only s = s' contributes.
fn h_a_species(a: Species, b: Species) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// ∫ dk / sqrt(2 pi) e^{-i|k|t + ikx} w(k) f(k) over the packet window, with
/// the exact |k| dispersion and a signed momentum profile.
fn mode_integral(p: &Packet, t: f64, x: f64, energy_weight: bool, tol: f64) -> Result<Amplitude, QuadError> {
    let kc = p.signed_center();
    let half = WINDOW_SIGMAS * p.width();
    let norm = (2.0 * PI).sqrt().recip();
    let f = |k: f64| {
        let w = if energy_weight { k.abs() } else { 1.0 };
        let amp = norm * w * p.profile(k - kc + p.center());
        Complex64::from_polar(amp, -k.abs() * t + k * x)
    };
    integrate(f, kc - half, kc + half, tol).map(|q| q.value)
}

/// Evaluates T1..T4 by quadrature with the exact |k| dispersion. The detector
/// energy operator acts on detector A's momentum mode; cross-species matrix
/// elements vanish through the species factor.
pub fn t_terms(cfg: &TwoPhotonConfig, p: &EqualTimePoint, tol: f64) -> Result<TTerms, QuadError> {
    let (r, l) = (cfg.right(), cfg.left());
    let s = FRAC_1_SQRT_2;
    // T1: A sees photon 1 (right-mover) at x1, B sees photon 2 at x2
    let t1 = mode_integral(r, p.t, p.x1, true, tol)? * mode_integral(l, p.t, p.x2, false, tol)?;
    // T2, T3: H_A connects the species-1 and species-2 modes of detector A
    let c23 = h_a_species(Species::One, Species::Two);
    let t2 = c23 * mode_integral(r, p.t, p.x1, true, tol)? * mode_integral(l, p.t, p.x2, false, tol)?;
    let t3 = c23 * mode_integral(l, p.t, p.x1, true, tol)? * mode_integral(r, p.t, p.x2, false, tol)?;
    // T4: exchanged assignment, A sees photon 2 (left-mover) at x1
    let t4 = mode_integral(l, p.t, p.x1, true, tol)? * mode_integral(r, p.t, p.x2, false, tol)?;
    Ok(TTerms {
        t1: t1 * s * h_a_species(Species::One, Species::One),
        t2: t2 * s,
        t3: t3 * s,
        t4: t4 * s * h_a_species(Species::Two, Species::Two),
    })
}
