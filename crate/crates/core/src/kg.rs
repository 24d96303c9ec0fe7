//! Multitime Klein-Gordon route: the symmetrised two-photon wavefunction,
//! its per-particle conserved currents and the Bohmian velocity fields.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wavepacket::{psi1, psi2, Amplitude, Direction, Event, Packet, PacketError};

/// Default node threshold relative to the peak density scale.
pub const DEFAULT_NODE_REL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("right packet must have direction Right")]
    RightDirection,
    #[error("left packet must have direction Left")]
    LeftDirection,
    #[error(transparent)]
    Packet(#[from] PacketError),
}

/// Raised where a density falls below the node threshold.
#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("interference node: |rho_{particle}| = {rho:e} below threshold {eps:e}")]
pub struct NodeSingularity {
    pub particle: u8,
    pub rho: f64,
    pub eps: f64,
}

/// A right-mover and a left-mover.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct TwoPhotonConfig {
    right: Packet,
    left: Packet,
}

#[derive(Serialize, Deserialize)]
struct RawConfig {
    right: Packet,
    left: Packet,
}

impl TryFrom<RawConfig> for TwoPhotonConfig {
    type Error = ConfigError;
    fn try_from(r: RawConfig) -> Result<Self, ConfigError> {
        TwoPhotonConfig::new(r.right, r.left)
    }
}

impl From<TwoPhotonConfig> for RawConfig {
    fn from(c: TwoPhotonConfig) -> Self {
        RawConfig { right: c.right, left: c.left }
    }
}

impl TwoPhotonConfig {
    pub fn new(right: Packet, left: Packet) -> Result<Self, ConfigError> {
        if right.direction() != Direction::Right {
            return Err(ConfigError::RightDirection);
        }
        if left.direction() != Direction::Left {
            return Err(ConfigError::LeftDirection);
        }
        Ok(TwoPhotonConfig { right, left })
    }

    /// Both packets with the same center and width.
    pub fn symmetric(k0: f64, sigma: f64) -> Result<Self, ConfigError> {
        Ok(TwoPhotonConfig { right: Packet::right(k0, sigma)?, left: Packet::left(k0, sigma)? })
    }

    pub fn from_parameters(k0r: f64, sr: f64, k0l: f64, sl: f64) -> Result<Self, ConfigError> {
        Ok(TwoPhotonConfig { right: Packet::right(k0r, sr)?, left: Packet::left(k0l, sl)? })
    }

    /// k0 = 20, sigma = 1 for both photons.
    pub fn figure_default() -> Self {
        Self::symmetric(20.0, 1.0).expect("valid constants")
    }

    pub fn right(&self) -> &Packet {
        &self.right
    }

    pub fn left(&self) -> &Packet {
        &self.left
    }

    pub fn is_indistinguishable(&self) -> bool {
        self.right.center() == self.left.center() && self.right.width() == self.left.width()
    }

    /// Upper scale of the densities, 2 (k0R + k0L) * 2 sigma_R sigma_L / pi.
    pub fn peak_density(&self) -> f64 {
        2.0 * (self.right.center() + self.left.center()) * 2.0 * self.right.width() * self.left.width() / PI
    }

    /// Peak of |psi|^2, attained where both packets overlap in phase.
    pub fn peak_probability(&self) -> f64 {
        2.0 * 2.0 * self.right.width() * self.left.width() / PI
    }

    /// Node threshold `rel` times the peak density.
    pub fn node_threshold(&self, rel: f64) -> f64 {
        rel * self.peak_density()
    }

    /// Smallest q of the two packets.
    pub fn q(&self) -> f64 {
        self.right.q().min(self.left.q())
    }
}

/// Pair of events, one per particle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiPoint {
    pub e1: Event,
    pub e2: Event,
}

impl MultiPoint {
    pub fn new(e1: Event, e2: Event) -> Self {
        MultiPoint { e1, e2 }
    }

    pub fn equal_time(t: f64, x1: f64, x2: f64) -> Self {
        MultiPoint { e1: Event::new(t, x1), e2: Event::new(t, x2) }
    }

    pub fn swap(&self) -> Self {
        MultiPoint { e1: self.e2, e2: self.e1 }
    }

    pub fn is_equal_time(&self) -> bool {
        self.e1.t == self.e2.t
    }
}

/// Energy density and current of one particle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurrentDensity {
    pub rho: f64,
    pub j: f64,
}

impl CurrentDensity {
    pub fn new(rho: f64, j: f64) -> Self {
        CurrentDensity { rho, j }
    }

    /// j / rho, unchecked.
    pub fn velocity(&self) -> f64 {
        self.j / self.rho
    }

    pub fn is_finite(&self) -> bool {
        self.rho.is_finite() && self.j.is_finite()
    }
}

/// psi_KG = (psi1(X1) psi2(X2) + psi1(X2) psi2(X1)) / sqrt 2.
pub fn psi_kg(cfg: &TwoPhotonConfig, mp: &MultiPoint) -> Amplitude {
    let a = psi1(&cfg.right, mp.e1) * psi2(&cfg.left, mp.e2);
    let b = psi1(&cfg.right, mp.e2) * psi2(&cfg.left, mp.e1);
    (a + b) * FRAC_1_SQRT_2
}

/// Shared pieces of the closed-form currents at one multipoint.
struct Terms {
    aa: f64,
    bb: f64,
    ab: f64,
    cos: f64,
    sin: f64,
    kr: f64,
    kl: f64,
    sr2: f64,
    sl2: f64,
    u1: f64,
    u2: f64,
    v1: f64,
    v2: f64,
}

impl Terms {
    #[inline]
    fn new(cfg: &TwoPhotonConfig, mp: &MultiPoint) -> Self {
        let (kr, kl) = (cfg.right.center(), cfg.left.center());
        let (sr, sl) = (cfg.right.width(), cfg.left.width());
        let (sr2, sl2) = (sr * sr, sl * sl);
        let (u1, u2) = (mp.e1.u(), mp.e2.u());
        let (v1, v2) = (mp.e1.v(), mp.e2.v());
        let pref = 2.0 * sr * sl / PI;
        let ea = v2 * v2 * sl2 + u1 * u1 * sr2;
        let eb = v1 * v1 * sl2 + u2 * u2 * sr2;
        let aa = pref * (-2.0 * ea).exp();
        let bb = pref * (-2.0 * eb).exp();
        let ab = pref * (-(ea + eb)).exp();
        let phi = kr * (u1 - u2) - kl * (v1 - v2);
        let (sin, cos) = phi.sin_cos();
        Terms { aa, bb, ab, cos, sin, kr, kl, sr2, sl2, u1, u2, v1, v2 }
    }

    fn current_1(&self) -> CurrentDensity {
        let Terms { aa, bb, ab, cos, sin, kr, kl, sr2, sl2, u1, v1, .. } = *self;
        let rho = kr * aa + kl * bb + ab * ((kl + kr) * cos + 2.0 * (sl2 * v1 - sr2 * u1) * sin);
        let j = kr * aa - kl * bb + ab * ((kr - kl) * cos - 2.0 * (sl2 * v1 + sr2 * u1) * sin);
        CurrentDensity { rho, j }
    }

    fn current_2(&self) -> CurrentDensity {
        let Terms { aa, bb, ab, cos, sin, kr, kl, sr2, sl2, u2, v2, .. } = *self;
        let rho = kl * aa + kr * bb + ab * ((kr + kl) * cos - 2.0 * (sl2 * v2 - sr2 * u2) * sin);
        let j = kr * bb - kl * aa + ab * ((kr - kl) * cos + 2.0 * (sl2 * v2 + sr2 * u2) * sin);
        CurrentDensity { rho, j }
    }

    fn density(&self) -> f64 {
        0.5 * (self.aa + self.bb) + self.ab * self.cos
    }

    /// Sum of the magnitudes of the terms making up rho_i or j_i.
    fn term_scale(&self, particle: u8) -> f64 {
        let (u, v) = if particle == 1 { (self.u1, self.v1) } else { (self.u2, self.v2) };
        self.kr.max(self.kl) * (self.aa + self.bb)
            + self.ab * (self.kr + self.kl + 2.0 * (self.sl2 * v.abs() + self.sr2 * u.abs()))
    }

    /// Growth of relative rounding error from the exponent and phase arguments.
    fn condition(&self) -> f64 {
        let e = self.sr2 * (self.u1 * self.u1 + self.u2 * self.u2) + self.sl2 * (self.v1 * self.v1 + self.v2 * self.v2);
        1.0 + 2.0 * e + self.kr * (self.u1.abs() + self.u2.abs()) + self.kl * (self.v1.abs() + self.v2.abs())
    }
}

/// Magnitude bound of the terms summed into rho_i and j_i, the scale on
/// which their rounding error is measured.
pub fn term_scale(cfg: &TwoPhotonConfig, mp: &MultiPoint, particle: u8) -> f64 {
    Terms::new(cfg, mp).term_scale(particle)
}

/// Condition factor of the closed-form evaluation: relative rounding error is
/// about machine epsilon times this factor, on the `term_scale`.
pub fn rounding_condition(cfg: &TwoPhotonConfig, mp: &MultiPoint) -> f64 {
    Terms::new(cfg, mp).condition()
}

/// Closed-form current of particle 1 in lightcone variables.
pub fn current_1(cfg: &TwoPhotonConfig, mp: &MultiPoint) -> CurrentDensity {
    Terms::new(cfg, mp).current_1()
}

/// Closed-form current of particle 2 in lightcone variables.
pub fn current_2(cfg: &TwoPhotonConfig, mp: &MultiPoint) -> CurrentDensity {
    Terms::new(cfg, mp).current_2()
}

/// Both currents, sharing the exponentials.
pub fn currents(cfg: &TwoPhotonConfig, mp: &MultiPoint) -> (CurrentDensity, CurrentDensity) {
    let t = Terms::new(cfg, mp);
    (t.current_1(), t.current_2())
}

/// |psi_KG|^2 from the same closed-form pieces.
pub fn density_kg(cfg: &TwoPhotonConfig, mp: &MultiPoint) -> f64 {
    Terms::new(cfg, mp).density()
}

/// Finite-difference oracle: rho_i = -2 Im(psi* d_ti psi), j_i = 2 Im(psi* d_xi psi),
/// with central differences of step `h` applied to `psi_kg`.
pub fn current_fd(cfg: &TwoPhotonConfig, mp: &MultiPoint, particle: u8, h: f64) -> CurrentDensity {
    let shift = |dt: f64, dx: f64| {
        let mut m = *mp;
        let e = if particle == 1 { &mut m.e1 } else { &mut m.e2 };
        e.t += dt;
        e.x += dx;
        psi_kg(cfg, &m)
    };
    let psi = psi_kg(cfg, mp);
    let dt = (shift(h, 0.0) - shift(-h, 0.0)) / (2.0 * h);
    let dx = (shift(0.0, h) - shift(0.0, -h)) / (2.0 * h);
    CurrentDensity { rho: -2.0 * (psi.conj() * dt).im, j: 2.0 * (psi.conj() * dx).im }
}

/// Richardson-extrapolated finite-difference current from steps h and h/2.
pub fn current_fd_richardson(cfg: &TwoPhotonConfig, mp: &MultiPoint, particle: u8, h: f64) -> CurrentDensity {
    let c1 = current_fd(cfg, mp, particle, h);
    let c2 = current_fd(cfg, mp, particle, 0.5 * h);
    CurrentDensity { rho: (4.0 * c2.rho - c1.rho) / 3.0, j: (4.0 * c2.j - c1.j) / 3.0 }
}

fn checked(cd: CurrentDensity, particle: u8, eps: f64) -> Result<f64, NodeSingularity> {
    if cd.rho.abs() < eps || !cd.rho.is_finite() {
        Err(NodeSingularity { particle, rho: cd.rho, eps })
    } else {
        Ok(cd.j / cd.rho)
    }
}

/// v_i = j_i / rho_i with an explicit absolute node threshold.
pub fn velocity_kg_with(cfg: &TwoPhotonConfig, mp: &MultiPoint, eps: f64) -> Result<(f64, f64), NodeSingularity> {
    let (c1, c2) = currents(cfg, mp);
    Ok((checked(c1, 1, eps)?, checked(c2, 2, eps)?))
}

/// v_i = j_i / rho_i with the default node threshold.
pub fn velocity_kg(cfg: &TwoPhotonConfig, mp: &MultiPoint) -> Result<(f64, f64), NodeSingularity> {
    velocity_kg_with(cfg, mp, cfg.node_threshold(DEFAULT_NODE_REL))
}

/// A two-particle velocity field over multitime points.
pub trait VelocityField: Sync {
    fn velocity(&self, mp: &MultiPoint) -> Result<(f64, f64), NodeSingularity>;

    /// Equal-time convenience wrapper.
    fn velocity_at(&self, t: f64, x1: f64, x2: f64) -> Result<(f64, f64), NodeSingularity> {
        self.velocity(&MultiPoint::equal_time(t, x1, x2))
    }
}

/// The Klein-Gordon velocity field for a fixed configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KgField {
    pub cfg: TwoPhotonConfig,
    pub eps: f64,
}

impl KgField {
    pub fn new(cfg: TwoPhotonConfig) -> Self {
        KgField { cfg, eps: cfg.node_threshold(DEFAULT_NODE_REL) }
    }

    pub fn with_threshold(cfg: TwoPhotonConfig, eps: f64) -> Self {
        KgField { cfg, eps }
    }
}

impl VelocityField for KgField {
    fn velocity(&self, mp: &MultiPoint) -> Result<(f64, f64), NodeSingularity> {
        velocity_kg_with(&self.cfg, mp, self.eps)
    }
}

impl<F: VelocityField + ?Sized> VelocityField for &F {
    fn velocity(&self, mp: &MultiPoint) -> Result<(f64, f64), NodeSingularity> {
        (**self).velocity(mp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TwoPhotonConfig {
        TwoPhotonConfig::figure_default()
    }

    fn grid() -> Vec<MultiPoint> {
        let mut v = Vec::new();
        for it in 0..5 {
            let t = -2.0 + 0.5 * it as f64;
            for i in 0..21 {
                for j in 0..21 {
                    v.push(MultiPoint::equal_time(t, -3.0 + 0.3 * i as f64, -3.0 + 0.3 * j as f64));
                }
            }
        }
        v
    }

    #[test]
    fn exchange_symmetry_exact() {
        let c = TwoPhotonConfig::from_parameters(18.0, 0.9, 23.0, 1.4).unwrap();
        let mp = MultiPoint::new(Event::new(0.3, -0.2), Event::new(-0.7, 1.1));
        assert_eq!(psi_kg(&c, &mp), psi_kg(&c, &mp.swap()));
    }

    #[test]
    fn closed_form_matches_finite_differences() {
        let c = cfg();
        let mut worst: f64 = 0.0;
        for mp in grid() {
            for p in [1u8, 2] {
                let exact = if p == 1 { current_1(&c, &mp) } else { current_2(&c, &mp) };
                let fd = current_fd_richardson(&c, &mp, p, 1e-3);
                worst = worst.max((exact.rho - fd.rho).abs()).max((exact.j - fd.j).abs());
            }
        }
        assert!(worst < 1e-6, "{worst:e}");
    }

    #[test]
    fn closed_form_matches_fd_unequal_times_and_packets() {
        let c = TwoPhotonConfig::from_parameters(15.0, 0.8, 27.0, 1.3).unwrap();
        for &(t1, x1, t2, x2) in &[(0.1, -0.3, -0.4, 0.2), (0.5, 0.2, 0.0, -0.6), (-1.0, -1.2, -0.6, 0.9)] {
            let mp = MultiPoint::new(Event::new(t1, x1), Event::new(t2, x2));
            for p in [1u8, 2] {
                let exact = if p == 1 { current_1(&c, &mp) } else { current_2(&c, &mp) };
                let fd = current_fd_richardson(&c, &mp, p, 1e-3);
                assert!((exact.rho - fd.rho).abs() < 1e-6 && (exact.j - fd.j).abs() < 1e-6, "{exact:?} {fd:?}");
            }
        }
    }

    #[test]
    fn fd_error_is_second_order() {
        let c = cfg();
        let mp = MultiPoint::equal_time(-0.5, -0.3, 0.45);
        let exact = current_1(&c, &mp);
        let e1 = (current_fd(&c, &mp, 1, 1e-3).rho - exact.rho).abs();
        let e2 = (current_fd(&c, &mp, 1, 5e-4).rho - exact.rho).abs();
        let r = e1 / e2;
        assert!((3.5..4.5).contains(&r), "{r}");
    }

    #[test]
    fn density_matches_modulus() {
        let c = TwoPhotonConfig::from_parameters(18.0, 0.9, 23.0, 1.4).unwrap();
        let mp = MultiPoint::new(Event::new(0.3, -0.2), Event::new(-0.1, 0.1));
        let d = density_kg(&c, &mp);
        assert!((d - psi_kg(&c, &mp).norm_sqr()).abs() < 1e-14 * c.peak_probability());
    }

    #[test]
    fn free_flight_velocities() {
        let c = cfg();
        let (v1, v2) = velocity_kg(&c, &MultiPoint::equal_time(-2.0, -2.0, 2.0)).unwrap();
        assert!((v1 - 1.0).abs() < 1e-6 && (v2 + 1.0).abs() < 1e-6, "{v1} {v2}");
    }

    #[test]
    fn widely_separated_cross_term_negligible() {
        let c = cfg();
        let mp = MultiPoint::equal_time(0.0, -10.0, 10.0);
        let a = psi1(c.right(), mp.e1) * psi2(c.left(), mp.e2);
        let b = psi1(c.right(), mp.e2) * psi2(c.left(), mp.e1);
        assert!((a * b.conj()).norm() < 1e-30);
    }

    #[test]
    fn mirror_antisymmetry() {
        let c = cfg();
        for &(t, x1, x2) in &[(-0.5, -0.3, 0.8), (0.2, -1.0, 0.1), (-1.1, 0.4, 0.5)] {
            let (a1, a2) = velocity_kg(&c, &MultiPoint::equal_time(t, x1, x2)).unwrap();
            let (b1, b2) = velocity_kg(&c, &MultiPoint::equal_time(t, -x2, -x1)).unwrap();
            assert!((a1 + b2).abs() < 1e-12 && (a2 + b1).abs() < 1e-12);
        }
        let (v1, v2) = velocity_kg(&c, &MultiPoint::equal_time(-0.4, -0.35, 0.35)).unwrap();
        assert!((v1 + v2).abs() < 1e-12);
    }

    #[test]
    fn node_is_reported() {
        let c = cfg();
        let far = MultiPoint::equal_time(0.0, -9.0, 9.0);
        assert!(matches!(velocity_kg(&c, &far), Err(NodeSingularity { .. })));
    }

    #[test]
    fn config_rejects_wrong_directions() {
        let r = Packet::right(20.0, 1.0).unwrap();
        assert_eq!(TwoPhotonConfig::new(r, r), Err(ConfigError::LeftDirection));
        assert_eq!(TwoPhotonConfig::new(r.mirrored(), r.mirrored()), Err(ConfigError::RightDirection));
    }
}
