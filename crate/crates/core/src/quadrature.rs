//! Adaptive Gauss-Kronrod (7/15) quadrature for complex integrands, and the
//! k-space oracle used to certify every closed-form amplitude.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::wavepacket::{Amplitude, Event, Packet};

/// Half-width of the integration window in units of sigma.
pub const WINDOW_SIGMAS: f64 = 12.0;

/// Maximum number of interval bisections before giving up.
pub const MAX_SUBDIVISIONS: usize = 4000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not converge: error estimate {estimate:e} > tol {tol:e} after {intervals} intervals")]
    NonConvergence { estimate: f64, tol: f64, intervals: usize },
    #[error("invalid quadrature tolerance {0}")]
    BadTolerance(f64),
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// Gauss weights for the odd-indexed Kronrod nodes 1, 3, 5 and the center.
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 15-point Kronrod estimate with embedded 7-point Gauss error.
fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += s * WGK[j];
        if j % 2 == 1 {
            g += s * WG[j / 2];
        }
    }
    let k = k * h;
    let g = g * h;
    (k, (k - g).norm())
}

struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Segment {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub value: Complex64,
    pub error: f64,
    pub intervals: usize,
}

/// Globally adaptive integration of `f` over [a, b] to absolute tolerance `tol`.
/// The interval with the largest error estimate is bisected until the summed
/// estimate drops below `tol`.
pub fn integrate<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, tol: f64) -> Result<Quadrature, QuadError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(QuadError::BadTolerance(tol));
    }
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, err: e });
    let mut err = e;
    while err > tol {
        if heap.len() >= MAX_SUBDIVISIONS {
            return Err(QuadError::NonConvergence { estimate: err, tol, intervals: heap.len() });
        }
        let s = heap.pop().expect("heap is never empty");
        let m = 0.5 * (s.a + s.b);
        let (v1, e1) = gk15(&f, s.a, m);
        let (v2, e2) = gk15(&f, m, s.b);
        err += e1 + e2 - s.err;
        heap.push(Segment { a: s.a, b: m, value: v1, err: e1 });
        heap.push(Segment { a: m, b: s.b, value: v2, err: e2 });
    }
    let value = heap.iter().fold(Complex64::new(0.0, 0.0), |acc, s| acc + s.value);
    let error = heap.iter().map(|s| s.err).sum();
    Ok(Quadrature { value, error, intervals: heap.len() })
}

/// Which k-space integral the oracle evaluates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Integrand {
    /// (2 pi)^(-1/2) ∫ dk e^{-iks} f(k), s the packet's lightcone coordinate.
    Psi,
    /// (2 pi)^(-1/2) ∫ dk e^{-iks} k f(k).
    PsiK,
    /// (2 pi)^(-1/2) ∫ dk e^{-i(kz + k^2/2kz)t + ikx} f(k) with signed transverse k.
    Paraxial { kz: f64 },
    /// Paraxial integrand weighted by ik, i.e. the x-derivative.
    ParaxialDx { kz: f64 },
}

/// Numerically integrates the selected k-integral over k0 +- 12 sigma to absolute tolerance `tol`.
pub fn quad_oracle(sel: Integrand, p: &Packet, e: Event, tol: f64) -> Result<Amplitude, QuadError> {
    let norm = (2.0 * PI).sqrt().recip();
    let half = WINDOW_SIGMAS * p.width();
    match sel {
        Integrand::Psi | Integrand::PsiK => {
            let s = p.phase_coordinate(e);
            let weighted = matches!(sel, Integrand::PsiK);
            let f = move |k: f64| {
                let w = if weighted { k } else { 1.0 };
                Complex64::from_polar(norm * w * p.profile(k), -k * s)
            };
            integrate(f, p.center() - half, p.center() + half, tol).map(|q| q.value)
        }
        Integrand::Paraxial { kz } | Integrand::ParaxialDx { kz } => {
            let kc = p.signed_center();
            let dx = matches!(sel, Integrand::ParaxialDx { .. });
            let f = move |k: f64| {
                let amp = norm * p.profile(k - kc + p.center());
                let phase = -(kz + k * k / (2.0 * kz)) * e.t + k * e.x;
                let z = Complex64::from_polar(amp, phase);
                if dx {
                    z * Complex64::new(0.0, k)
                } else {
                    z
                }
            };
            integrate(f, kc - half, kc + half, tol).map(|q| q.value)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_weights_sum_to_two() {
        let s: f64 = 2.0 * WGK[..7].iter().sum::<f64>() + WGK[7];
        assert!((s - 2.0).abs() < 1e-15);
        let g: f64 = 2.0 * WG[..3].iter().sum::<f64>() + WG[3];
        assert!((g - 2.0).abs() < 1e-15);
    }

    #[test]
    fn exact_for_high_degree_polynomials() {
        // K15 integrates degree 22 exactly on one panel
        let f = |x: f64| Complex64::new(x.powi(22), x.powi(21));
        let (v, _) = gk15(&f, -1.0, 1.0);
        assert!((v.re - 2.0 / 23.0).abs() < 1e-15);
        assert!(v.im.abs() < 1e-15);
    }

    #[test]
    fn oscillatory_gaussian() {
        // ∫ e^{-x^2} e^{i w x} dx = sqrt(pi) e^{-w^2/4}
        let w = 7.0;
        let q = integrate(|x: f64| Complex64::from_polar((-x * x).exp(), w * x), -12.0, 12.0, 1e-14).unwrap();
        let exact = PI.sqrt() * (-w * w / 4.0).exp();
        assert!((q.value.re - exact).abs() < 1e-14);
        assert!(q.value.im.abs() < 1e-14);
    }

    #[test]
    fn nonconvergence_is_reported() {
        let r = integrate(|x: f64| Complex64::new((1.0 / x).sin(), 0.0), 1e-9, 1.0, 1e-15);
        assert!(matches!(r, Err(QuadError::NonConvergence { .. })));
        assert!(matches!(integrate(|_| Complex64::new(1.0, 0.0), 0.0, 1.0, 0.0), Err(QuadError::BadTolerance(_))));
    }

    #[test]
    fn oracle_exact_at_u_zero() {
        let p = Packet::right(20.0, 1.0).unwrap();
        let v = quad_oracle(Integrand::Psi, &p, Event::new(0.4, 0.4), 1e-12).unwrap();
        assert!((v - Complex64::new(p.peak_amplitude(), 0.0)).norm() < 1e-12);
        let v = quad_oracle(Integrand::PsiK, &p, Event::new(0.0, 0.0), 1e-12).unwrap();
        assert!((v - Complex64::new(20.0 * p.peak_amplitude(), 0.0)).norm() < 1e-11);
    }
}
