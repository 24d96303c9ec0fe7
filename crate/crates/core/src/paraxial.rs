//! Paraxial limit: dispersion E(k) = kz + k^2 / (2 kz) for the transverse
//! wavenumber k, with kz a fixed longitudinal wavenumber.
//!
//! Right-movers carry transverse momentum centred at +k0, left-movers at -k0.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use thiserror::Error;

use crate::kg::{CurrentDensity, MultiPoint, NodeSingularity, TwoPhotonConfig, VelocityField, DEFAULT_NODE_REL};
use crate::wavepacket::{Amplitude, Event, Packet};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("kz must be finite and positive, got {0}")]
pub struct BadKz(pub f64);

/// alpha = 1/(4 sigma^2) + i t/(2 kz), beta = k_c/(2 sigma^2) + i x.
fn alpha_beta(p: &Packet, kz: f64, e: Event) -> (Complex64, Complex64) {
    let s2 = p.width() * p.width();
    (Complex64::new(0.25 / s2, e.t / (2.0 * kz)), Complex64::new(p.signed_center() / (2.0 * s2), e.x))
}

/// Closed-form paraxial amplitude, a Gaussian with complex variance.
pub fn psi_paraxial(p: &Packet, kz: f64, e: Event) -> Amplitude {
    let (a, b) = alpha_beta(p, kz, e);
    let kc = p.signed_center();
    let s2 = p.width() * p.width();
    let pref = p.norm() / (2.0 * PI).sqrt() * (Complex64::new(PI, 0.0) / a).sqrt();
    let phase = Complex64::new(0.0, -kz * e.t);
    pref * (b * b / (4.0 * a) - kc * kc / (4.0 * s2) + phase).exp()
}

/// d/dx of the paraxial amplitude: psi * i beta / (2 alpha).
pub fn psi_paraxial_dx(p: &Packet, kz: f64, e: Event) -> Amplitude {
    let (a, b) = alpha_beta(p, kz, e);
    psi_paraxial(p, kz, e) * Complex64::i() * b / (2.0 * a)
}

/// d^2/dx^2 of the paraxial amplitude: psi (-beta^2/(4 alpha^2) - 1/(2 alpha)).
pub fn psi_paraxial_dxx(p: &Packet, kz: f64, e: Event) -> Amplitude {
    let (a, b) = alpha_beta(p, kz, e);
    psi_paraxial(p, kz, e) * (-(b * b) / (4.0 * a * a) - 1.0 / (2.0 * a))
}

struct Pieces {
    psi: Amplitude,
    d: [Amplitude; 2],
    dd: [Amplitude; 2],
}

fn pieces(cfg: &TwoPhotonConfig, kz: f64, mp: &MultiPoint) -> Pieces {
    let (r, l) = (cfg.right(), cfg.left());
    let s = FRAC_1_SQRT_2;
    let r1 = psi_paraxial(r, kz, mp.e1);
    let r2 = psi_paraxial(r, kz, mp.e2);
    let l1 = psi_paraxial(l, kz, mp.e1);
    let l2 = psi_paraxial(l, kz, mp.e2);
    let (ar1, br1) = alpha_beta(r, kz, mp.e1);
    let (ar2, br2) = alpha_beta(r, kz, mp.e2);
    let (al1, bl1) = alpha_beta(l, kz, mp.e1);
    let (al2, bl2) = alpha_beta(l, kz, mp.e2);
    let g = |a: Complex64, b: Complex64| Complex64::i() * b / (2.0 * a);
    let gg = |a: Complex64, b: Complex64| -(b * b) / (4.0 * a * a) - 1.0 / (2.0 * a);
    let psi = (r1 * l2 + r2 * l1) * s;
    let d1 = (r1 * g(ar1, br1) * l2 + r2 * l1 * g(al1, bl1)) * s;
    let d2 = (r1 * l2 * g(al2, bl2) + r2 * g(ar2, br2) * l1) * s;
    let dd1 = (r1 * gg(ar1, br1) * l2 + r2 * l1 * gg(al1, bl1)) * s;
    let dd2 = (r1 * l2 * gg(al2, bl2) + r2 * gg(ar2, br2) * l1) * s;
    Pieces { psi, d: [d1, d2], dd: [dd1, dd2] }
}

/// Symmetrised paraxial two-photon amplitude.
pub fn psi_paraxial_pair(cfg: &TwoPhotonConfig, kz: f64, mp: &MultiPoint) -> Amplitude {
    pieces(cfg, kz, mp).psi
}

/// Paraxial energy density and current of particle i:
/// rho = Re[psi* (kz psi - (1/2kz) d^2 psi)], j = Im[psi* d psi].
pub fn current_paraxial(cfg: &TwoPhotonConfig, kz: f64, mp: &MultiPoint, particle: u8) -> CurrentDensity {
    let pc = pieces(cfg, kz, mp);
    let i = usize::from(particle != 1);
    let rho = (pc.psi.conj() * (kz * pc.psi - pc.dd[i] / (2.0 * kz))).re;
    let j = (pc.psi.conj() * pc.d[i]).im;
    CurrentDensity { rho, j }
}

/// Ratio of the paraxial density to kz |psi|^2 for particle i.
pub fn density_ratio(cfg: &TwoPhotonConfig, kz: f64, mp: &MultiPoint, particle: u8) -> f64 {
    let cd = current_paraxial(cfg, kz, mp, particle);
    cd.rho / (kz * pieces(cfg, kz, mp).psi.norm_sqr())
}

/// Node threshold on |psi|^2 for the paraxial field.
pub fn paraxial_threshold(cfg: &TwoPhotonConfig, rel: f64) -> f64 {
    rel * cfg.peak_probability()
}

/// Velocity v_i = (1/kz) Im(psi* d_i psi) / |psi|^2 with an explicit threshold on |psi|^2.
pub fn velocity_paraxial_with(cfg: &TwoPhotonConfig, kz: f64, mp: &MultiPoint, eps: f64) -> Result<(f64, f64), NodeSingularity> {
    let pc = pieces(cfg, kz, mp);
    let n = pc.psi.norm_sqr();
    if n < eps || !n.is_finite() {
        return Err(NodeSingularity { particle: 1, rho: n, eps });
    }
    let v = |d: Amplitude| (pc.psi.conj() * d).im / (kz * n);
    Ok((v(pc.d[0]), v(pc.d[1])))
}

pub fn velocity_paraxial(cfg: &TwoPhotonConfig, kz: f64, mp: &MultiPoint) -> Result<(f64, f64), NodeSingularity> {
    velocity_paraxial_with(cfg, kz, mp, paraxial_threshold(cfg, DEFAULT_NODE_REL))
}

/// Paraxial velocity field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParaxialField {
    pub cfg: TwoPhotonConfig,
    pub kz: f64,
    pub eps: f64,
}

impl ParaxialField {
    pub fn new(cfg: TwoPhotonConfig, kz: f64) -> Result<Self, BadKz> {
        if !(kz.is_finite() && kz > 0.0) {
            return Err(BadKz(kz));
        }
        Ok(ParaxialField { cfg, kz, eps: paraxial_threshold(&cfg, DEFAULT_NODE_REL) })
    }
}

impl VelocityField for ParaxialField {
    fn velocity(&self, mp: &MultiPoint) -> Result<(f64, f64), NodeSingularity> {
        velocity_paraxial_with(&self.cfg, self.kz, mp, self.eps)
    }
}

/// Phase-gradient finite-difference oracle for the paraxial velocity.
pub fn velocity_paraxial_fd(cfg: &TwoPhotonConfig, kz: f64, mp: &MultiPoint, h: f64) -> (f64, f64) {
    let psi = psi_paraxial_pair(cfg, kz, mp);
    let n = psi.norm_sqr();
    let grad = |particle: u8| {
        let at = |dx: f64| {
            let mut m = *mp;
            if particle == 1 {
                m.e1.x += dx;
            } else {
                m.e2.x += dx;
            }
            psi_paraxial_pair(cfg, kz, &m)
        };
        let d1 = (at(h) - at(-h)) / (2.0 * h);
        let d2 = (at(0.5 * h) - at(-0.5 * h)) / h;
        (4.0 * d2 - d1) / 3.0
    };
    ((psi.conj() * grad(1)).im / (kz * n), (psi.conj() * grad(2)).im / (kz * n))
}
