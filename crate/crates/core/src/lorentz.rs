//! Collinear Lorentz boosts of events, currents, velocities and packet parameters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{ConfigError, CurrentDensity, TwoPhotonConfig};
use crate::wavepacket::Event;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoostError {
    #[error("boost velocity must satisfy |theta| < 1, got {0}")]
    Superluminal(f64),
    #[error("velocity {v} hits the frame pole 1/theta for theta = {theta}")]
    PoleAtOne { v: f64, theta: f64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Frame velocity theta with derived Lorentz factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Boost {
    theta: f64,
    gamma: f64,
}

impl TryFrom<f64> for Boost {
    type Error = BoostError;
    fn try_from(theta: f64) -> Result<Self, BoostError> {
        Boost::new(theta)
    }
}

impl From<Boost> for f64 {
    fn from(b: Boost) -> f64 {
        b.theta
    }
}

impl Boost {
    pub fn new(theta: f64) -> Result<Self, BoostError> {
        if !(theta.is_finite() && theta.abs() < 1.0) {
            return Err(BoostError::Superluminal(theta));
        }
        Ok(Boost { theta, gamma: 1.0 / (1.0 - theta * theta).sqrt() })
    }

    pub fn identity() -> Self {
        Boost { theta: 0.0, gamma: 1.0 }
    }

    pub fn from_rapidity(eta: f64) -> Result<Self, BoostError> {
        Boost::new(eta.tanh())
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rapidity(&self) -> f64 {
        self.theta.atanh()
    }

    pub fn inverse(&self) -> Boost {
        Boost { theta: -self.theta, gamma: self.gamma }
    }

    /// Boost by `self` followed by `other`.
    pub fn compose(&self, other: &Boost) -> Boost {
        let theta = (self.theta + other.theta) / (1.0 + self.theta * other.theta);
        Boost::new(theta).expect("composition of subluminal boosts is subluminal")
    }

    /// Doppler factor sqrt((1 - theta) / (1 + theta)) applied to right-movers.
    pub fn doppler_right(&self) -> f64 {
        ((1.0 - self.theta) / (1.0 + self.theta)).sqrt()
    }

    /// Doppler factor sqrt((1 + theta) / (1 - theta)) applied to left-movers.
    pub fn doppler_left(&self) -> f64 {
        ((1.0 + self.theta) / (1.0 - self.theta)).sqrt()
    }
}

/// (t, x) -> gamma (t - theta x, x - theta t).
pub fn boost_event(b: &Boost, e: Event) -> Event {
    Event::new(b.gamma * (e.t - b.theta * e.x), b.gamma * (e.x - b.theta * e.t))
}

/// rho' = gamma (rho - theta j), j' = gamma (j - theta rho).
pub fn boost_current(b: &Boost, cd: CurrentDensity) -> CurrentDensity {
    CurrentDensity { rho: b.gamma * (cd.rho - b.theta * cd.j), j: b.gamma * (cd.j - b.theta * cd.rho) }
}

/// True where the boosted density is not positive, i.e. the velocity is at or beyond 1/theta.
pub fn is_backwards(b: &Boost, cd: CurrentDensity) -> bool {
    boost_current(b, cd).rho <= 0.0
}

/// v' = (v - theta) / (1 - theta v).
pub fn add_velocity(b: &Boost, v: f64) -> Result<f64, BoostError> {
    let den = 1.0 - b.theta * v;
    if den == 0.0 {
        return Err(BoostError::PoleAtOne { v, theta: b.theta });
    }
    Ok((v - b.theta) / den)
}

/// Doppler-shifts center and width of both packets.
pub fn redshift_packets(b: &Boost, cfg: &TwoPhotonConfig) -> Result<TwoPhotonConfig, BoostError> {
    let right = cfg.right().scaled(b.doppler_right()).map_err(ConfigError::from)?;
    let left = cfg.left().scaled(b.doppler_left()).map_err(ConfigError::from)?;
    Ok(TwoPhotonConfig::new(right, left)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{current_1, current_2, MultiPoint};

    #[test]
    fn hand_checked_event() {
        let b = Boost::new(0.6).unwrap();
        assert!((b.gamma() - 1.25).abs() < 1e-15);
        let e = boost_event(&b, Event::new(0.0, 1.0));
        assert!((e.t + 0.75).abs() < 1e-15 && (e.x - 1.25).abs() < 1e-15);
    }

    #[test]
    fn identity_and_lightcone() {
        let e = Event::new(0.3, -2.0);
        assert_eq!(boost_event(&Boost::identity(), e), e);
        for th in [-0.9, -0.3, 0.4, 0.99] {
            let l = boost_event(&Boost::new(th).unwrap(), Event::new(1.0, 1.0));
            assert!((l.t - l.x).abs() < 1e-14);
        }
    }

    #[test]
    fn velocity_addition_examples() {
        let b = Boost::new(0.8).unwrap();
        assert!((add_velocity(&b, 1.5).unwrap() + 3.5).abs() < 1e-14);
        let c = boost_current(&b, CurrentDensity::new(1.0, 1.5));
        assert!((c.velocity() + 3.5).abs() < 1e-14);
        assert!((add_velocity(&Boost::new(0.4).unwrap(), 0.0).unwrap() + 0.4).abs() < 1e-15);
        assert_eq!(add_velocity(&b, 1.0).unwrap(), 1.0);
        assert!(matches!(add_velocity(&Boost::new(0.5).unwrap(), 2.0), Err(BoostError::PoleAtOne { .. })));
    }

    #[test]
    fn backwards_onset_at_inverse_theta() {
        let b = Boost::new(0.5).unwrap();
        assert!(is_backwards(&b, CurrentDensity::new(1.0, 2.0)));
        assert!(is_backwards(&b, CurrentDensity::new(1.0, 2.5)));
        assert!(!is_backwards(&b, CurrentDensity::new(1.0, 1.9)));
    }

    #[test]
    fn redshift_examples() {
        let cfg = TwoPhotonConfig::figure_default();
        let r = redshift_packets(&Boost::new(0.6).unwrap(), &cfg).unwrap();
        assert!((r.right().center() - 10.0).abs() < 1e-13);
        assert!((r.left().center() - 40.0).abs() < 1e-13);
        assert!((r.right().q() - 20.0).abs() < 1e-12 && (r.left().q() - 20.0).abs() < 1e-12);
        assert_eq!(redshift_packets(&Boost::identity(), &cfg).unwrap(), cfg);
        let b = Boost::new(0.35).unwrap();
        let back = redshift_packets(&b.inverse(), &redshift_packets(&b, &cfg).unwrap()).unwrap();
        assert!((back.right().center() - 20.0).abs() < 1e-13 && (back.left().width() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_superluminal() {
        assert!(Boost::new(1.0).is_err());
        assert!(Boost::new(-1.2).is_err());
        assert!(serde_json::from_str::<Boost>("1.5").is_err());
    }

    #[test]
    fn density_covariance() {
        let cfg = TwoPhotonConfig::figure_default();
        for th in [0.2, 0.4, 0.6] {
            let b = Boost::new(th).unwrap();
            let cfg_b = redshift_packets(&b, &cfg).unwrap();
            for &(t1, x1, t2, x2) in &[(-0.3, -0.2, -0.3, 0.4), (0.1, 0.5, -0.2, -0.1), (-1.0, -1.1, -1.0, 0.8)] {
                let mp = MultiPoint::new(Event::new(t1, x1), Event::new(t2, x2));
                let mpb = MultiPoint::new(boost_event(&b, mp.e1), boost_event(&b, mp.e2));
                for (orig, boosted) in [
                    (current_1(&cfg, &mp), current_1(&cfg_b, &mpb)),
                    (current_2(&cfg, &mp), current_2(&cfg_b, &mpb)),
                ] {
                    let pred = boost_current(&b, orig);
                    let scale = cfg.peak_density();
                    assert!((pred.rho - boosted.rho).abs() < 1e-10 * scale, "{pred:?} {boosted:?}");
                    assert!((pred.j - boosted.j).abs() < 1e-10 * scale);
                }
            }
        }
    }
}
