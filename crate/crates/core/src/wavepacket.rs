//! Gaussian momentum wavepackets and their closed-form position-space amplitudes.
//!
//! The momentum profile is f(k) = N exp(-(k - k0)^2 / (4 sigma^2)) with
//! N = (2 pi sigma^2)^(-1/4), so that the integral of |f|^2 over k is one.
//! Position space uses the unitary measure (2 pi)^(-1/2) dk and extends every
//! k-integral over the whole real line (optical approximation).
//!
//! Left-movers are represented by their energy profile: `psi2` integrates
//! e^{-ik(t+x)} against a Gaussian centred at +k0, which is the same as a
//! momentum profile centred at -k0.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Complex amplitude of a wavefunction.
pub type Amplitude = Complex64;

/// Quality factor below which the optical approximation is not considered validated.
pub const VALIDATED_Q: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Right,
    Left,
}

impl Direction {
    /// +1 for right-movers, -1 for left-movers.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Right => 1.0,
            Direction::Left => -1.0,
        }
    }

    pub fn flipped(self) -> Direction {
        match self {
            Direction::Right => Direction::Left,
            Direction::Left => Direction::Right,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PacketError {
    #[error("packet center must be finite and positive, got {0}")]
    Center(f64),
    #[error("packet width must be finite and positive, got {0}")]
    Width(f64),
}

/// Gaussian wavepacket with center wavenumber k0 and bandwidth sigma.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPacket", into = "RawPacket")]
pub struct Packet {
    center: f64,
    width: f64,
    direction: Direction,
}

#[derive(Serialize, Deserialize)]
struct RawPacket {
    center: f64,
    width: f64,
    direction: Direction,
}

impl TryFrom<RawPacket> for Packet {
    type Error = PacketError;
    fn try_from(r: RawPacket) -> Result<Self, Self::Error> {
        Packet::new(r.center, r.width, r.direction)
    }
}

impl From<Packet> for RawPacket {
    fn from(p: Packet) -> Self {
        RawPacket { center: p.center, width: p.width, direction: p.direction }
    }
}

impl Packet {
    pub fn new(center: f64, width: f64, direction: Direction) -> Result<Self, PacketError> {
        if !(center.is_finite() && center > 0.0) {
            return Err(PacketError::Center(center));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(PacketError::Width(width));
        }
        Ok(Packet { center, width, direction })
    }

    pub fn right(center: f64, width: f64) -> Result<Self, PacketError> {
        Self::new(center, width, Direction::Right)
    }

    pub fn left(center: f64, width: f64) -> Result<Self, PacketError> {
        Self::new(center, width, Direction::Left)
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Optical approximation quality factor k0 / sigma.
    pub fn q(&self) -> f64 {
        self.center / self.width
    }

    /// False when q < 10, outside the regime the closed forms were validated in.
    pub fn in_validated_regime(&self) -> bool {
        self.q() >= VALIDATED_Q
    }

    /// Momentum-space normalisation (2 pi sigma^2)^(-1/4).
    pub fn norm(&self) -> f64 {
        (2.0 * PI * self.width * self.width).powf(-0.25)
    }

    /// Position-space prefactor (2 sigma^2 / pi)^(1/4), the amplitude at the packet center.
    pub fn peak_amplitude(&self) -> f64 {
        (2.0 * self.width * self.width / PI).powf(0.25)
    }

    /// Energy profile f(k) centred at +k0.
    pub fn profile(&self, k: f64) -> f64 {
        let d = k - self.center;
        self.norm() * (-d * d / (4.0 * self.width * self.width)).exp()
    }

    /// Signed momentum of the packet center: +k0 for right-movers, -k0 for left-movers.
    pub fn signed_center(&self) -> f64 {
        self.direction.sign() * self.center
    }

    /// Same packet moving the other way.
    pub fn mirrored(&self) -> Packet {
        Packet { direction: self.direction.flipped(), ..*self }
    }

    /// Center and width scaled jointly by `factor` (Doppler shift). `factor` must be positive.
    pub fn scaled(&self, factor: f64) -> Result<Packet, PacketError> {
        Packet::new(self.center * factor, self.width * factor, self.direction)
    }

    /// Lightcone coordinate the packet depends on: u = t - x for Right, v = t + x for Left.
    pub fn phase_coordinate(&self, e: Event) -> f64 {
        match self.direction {
            Direction::Right => e.u(),
            Direction::Left => e.v(),
        }
    }

    /// Closed-form amplitude as a function of the lightcone coordinate s.
    #[inline]
    pub fn amplitude_at(&self, s: f64) -> Amplitude {
        let s2 = self.width * self.width;
        let arg = Complex64::new(-s * s * s2, -s * self.center);
        self.peak_amplitude() * arg.exp()
    }

    /// Energy-weighted amplitude as a function of the lightcone coordinate s.
    #[inline]
    pub fn amplitude_k_at(&self, s: f64) -> Amplitude {
        let pref = Complex64::new(self.center, -2.0 * self.width * self.width * s);
        pref * self.amplitude_at(s)
    }
}

/// Spacetime point in natural units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub x: f64,
}

impl Event {
    pub fn new(t: f64, x: f64) -> Self {
        Event { t, x }
    }

    /// u = t - x
    pub fn u(&self) -> f64 {
        self.t - self.x
    }

    /// v = t + x
    pub fn v(&self) -> f64 {
        self.t + self.x
    }

    /// Minkowski interval t^2 - x^2.
    pub fn interval(&self) -> f64 {
        self.t * self.t - self.x * self.x
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.is_finite()
    }
}

/// Right-moving amplitude psi1(t, x), a function of u = t - x only.
pub fn psi1(p: &Packet, e: Event) -> Amplitude {
    debug_assert_eq!(p.direction(), Direction::Right);
    p.amplitude_at(e.u())
}

/// Left-moving amplitude psi2(t, x), a function of v = t + x only.
pub fn psi2(p: &Packet, e: Event) -> Amplitude {
    debug_assert_eq!(p.direction(), Direction::Left);
    p.amplitude_at(e.v())
}

/// Energy-weighted right-mover, (k0 - 2i sigma^2 u) psi1.
pub fn psi1_k(p: &Packet, e: Event) -> Amplitude {
    debug_assert_eq!(p.direction(), Direction::Right);
    p.amplitude_k_at(e.u())
}

/// Energy-weighted left-mover, (k0 - 2i sigma^2 v) psi2.
pub fn psi2_k(p: &Packet, e: Event) -> Amplitude {
    debug_assert_eq!(p.direction(), Direction::Left);
    p.amplitude_k_at(e.v())
}

/// Direction-dispatched amplitude.
pub fn psi(p: &Packet, e: Event) -> Amplitude {
    p.amplitude_at(p.phase_coordinate(e))
}

/// Direction-dispatched energy-weighted amplitude.
pub fn psi_k(p: &Packet, e: Event) -> Amplitude {
    p.amplitude_k_at(p.phase_coordinate(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn r() -> Packet {
        Packet::right(20.0, 1.0).unwrap()
    }

    #[test]
    fn origin_value() {
        let z = psi1(&r(), Event::new(0.0, 0.0));
        assert_relative_eq!(z.re, (2.0 / PI).powf(0.25), epsilon = 1e-15);
        assert_eq!(z.im, 0.0);
        assert_relative_eq!(z.re, 0.8932438417380023, epsilon = 1e-12);
        let z = psi2(&r().mirrored(), Event::new(0.0, 0.0));
        assert_relative_eq!(z.re, (2.0 / PI).powf(0.25), epsilon = 1e-15);
    }

    #[test]
    fn weighted_at_origin_is_k0_times_amplitude() {
        let p = r();
        let e = Event::new(0.0, 0.0);
        assert_eq!(psi1_k(&p, e), 20.0 * psi1(&p, e));
        let l = p.mirrored();
        assert_eq!(psi2_k(&l, e), 20.0 * psi2(&l, e));
    }

    #[test]
    fn parity_relation() {
        let p = r();
        let l = p.mirrored();
        for &(t, x) in &[(0.3, -1.2), (-2.0, 0.7), (1.1, 1.1)] {
            assert_eq!(psi2(&l, Event::new(t, x)), psi1(&p, Event::new(t, -x)));
            assert_eq!(psi2_k(&l, Event::new(t, x)), psi1_k(&p, Event::new(t, -x)));
        }
    }

    #[test]
    fn narrow_packet_weighted_limit() {
        let e = Event::new(0.7, -0.4);
        for &s in &[1e-2, 1e-4, 1e-6] {
            let p = Packet::right(20.0, s).unwrap();
            let d = (psi1_k(&p, e) - 20.0 * psi1(&p, e)).norm() / psi1(&p, e).norm();
            assert!(d <= 2.0 * s * s * 1.1 + 1e-15, "sigma {s}: {d}");
        }
    }

    #[test]
    fn validation_rejects_bad_packets() {
        assert!(Packet::right(0.0, 1.0).is_err());
        assert!(Packet::right(1.0, -1.0).is_err());
        assert!(Packet::right(f64::NAN, 1.0).is_err());
        assert!(!Packet::right(5.0, 1.0).unwrap().in_validated_regime());
        assert!(Packet::right(10.0, 1.0).unwrap().in_validated_regime());
    }

    #[test]
    fn serde_rejects_invalid() {
        let bad = r#"{"center":-1.0,"width":1.0,"direction":"right"}"#;
        assert!(serde_json::from_str::<Packet>(bad).is_err());
        let p = r();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<Packet>(&s).unwrap(), p);
    }

    #[test]
    fn normalised_in_position() {
        // trapezoid over +-8 widths in u; grid spacing well below the carrier period
        let p = r();
        for &t in &[-1.0, 0.0, 2.5] {
            let half = 8.0 / p.width();
            let n = 16000;
            let h = 2.0 * half / n as f64;
            let mut s = 0.0;
            for i in 0..=n {
                let x = t - half + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                s += w * psi1(&p, Event::new(t, x)).norm_sqr();
            }
            assert!((s * h - 1.0).abs() < 1e-6, "t={t}: {}", s * h);
        }
    }

    #[test]
    fn momentum_profile_normalised() {
        let p = Packet::right(20.0, 1.3).unwrap();
        let n = 20000;
        let (a, b) = (p.center() - 12.0 * p.width(), p.center() + 12.0 * p.width());
        let h = (b - a) / n as f64;
        let s: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * p.profile(a + i as f64 * h).powi(2)
            })
            .sum();
        assert_relative_eq!(s * h, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn event_lightcone() {
        let e = Event::new(0.25, -1.5);
        assert_eq!(e.u(), 1.75);
        assert_eq!(e.v(), -1.25);
    }
}
