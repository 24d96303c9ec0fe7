//! Dormand-Prince 5(4) with Hairer's continuous extension.
//!
//! Integrates forward or backward in time. Right-hand-side failures (nodes of
//! the velocity field) are treated as rejected steps: the step is halved and
//! retried up to `max_retries` times in a row.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError<E> {
    #[error("right-hand side failed {retries} times in a row at t = {t}: {source}")]
    NodeEncounter { t: f64, retries: u32, source: E },
    #[error("step size {h:e} underflowed at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub atol: f64,
    pub rtol: f64,
    /// Initial step magnitude.
    pub h0: f64,
    pub h_max: f64,
    /// Smallest admissible step magnitude.
    pub h_min: f64,
    /// Consecutive right-hand-side failures tolerated before giving up.
    pub max_retries: u32,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { atol: 1e-9, rtol: 1e-9, h0: 1e-3, h_max: 0.1, h_min: 1e-12, max_retries: 40, max_steps: 5_000_000 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdeStats {
    pub steps: usize,
    pub rejections: usize,
    pub node_retries: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Continuous extension of one accepted step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    r: [[f64; N]; 5],
    /// Derivative at the start of the step.
    pub f0: [f64; N],
    /// Derivative at the end of the step.
    pub f1: [f64; N],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn y0(&self) -> [f64; N] {
        self.r[0]
    }

    pub fn y1(&self) -> [f64; N] {
        std::array::from_fn(|i| self.r[0][i] + self.r[1][i])
    }

    /// Interpolated state at t inside the step.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let r = &self.r;
        std::array::from_fn(|i| r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i]))))
    }

    /// Time derivative of the interpolant.
    pub fn eval_derivative(&self, t: f64) -> [f64; N] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let r = &self.r;
        std::array::from_fn(|i| {
            let a = r[2][i] + th * (r[3][i] + th1 * r[4][i]);
            let da = r[3][i] + (1.0 - 2.0 * th) * r[4][i];
            let b = r[1][i] + th1 * a;
            let db = -a + th1 * da;
            (b + th * db) / self.h
        })
    }

    /// Whether t lies within the step, inclusive, for either direction.
    pub fn contains(&self, t: f64) -> bool {
        let (a, b) = if self.h > 0.0 { (self.t0, self.t1()) } else { (self.t1(), self.t0) };
        t >= a && t <= b
    }
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

/// Integrates y' = f(t, y) from (t0, y0) to t_end, calling `on_step` for every
/// accepted step. Returns the final state and statistics.
pub fn dopri5<const N: usize, E, F, S>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &OdeOptions,
    mut on_step: S,
) -> Result<([f64; N], OdeStats), OdeError<E>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
    S: FnMut(&DenseStep<N>),
{
    let mut stats = OdeStats::default();
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0;
    if t_end == t0 {
        return Ok((y, stats));
    }
    let mut k1 = match f(t, &y) {
        Ok(k) => k,
        Err(source) => return Err(OdeError::NodeEncounter { t, retries: 0, source }),
    };
    stats.evaluations += 1;
    let mut h = dir * opts.h0.min(opts.h_max).min((t_end - t0).abs());
    let mut retries = 0u32;
    let mut last_rejected = false;
    loop {
        if stats.steps >= opts.max_steps {
            return Err(OdeError::TooManySteps(opts.max_steps));
        }
        let remaining = t_end - t;
        let mut last = false;
        if (h.abs()) >= remaining.abs() * (1.0 - 1e-12) {
            h = remaining;
            last = true;
        }
        if h.abs() < opts.h_min && !last {
            return Err(OdeError::StepUnderflow { t, h });
        }
        let stage = (|| {
            let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]))?;
            let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = f(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = f(t + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
            let k6 = f(t + h, &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
            let y1 = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = f(t + h, &y1)?;
            Ok((k2, k3, k4, k5, k6, k7, y1))
        })();
        let (_k2, k3, k4, k5, k6, k7, y1) = match stage {
            Ok(v) => {
                stats.evaluations += 6;
                v
            }
            Err(source) => {
                retries += 1;
                stats.node_retries += 1;
                if retries > opts.max_retries {
                    return Err(OdeError::NodeEncounter { t, retries, source });
                }
                h *= 0.5;
                if h.abs() < opts.h_min {
                    return Err(OdeError::StepUnderflow { t, h });
                }
                last_rejected = true;
                continue;
            }
        };
        let mut err = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y1[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / N as f64).sqrt();
        if !err.is_finite() {
            retries += 1;
            stats.node_retries += 1;
            if retries > opts.max_retries {
                return Err(OdeError::NonFinite(t));
            }
            h *= 0.5;
            last_rejected = true;
            continue;
        }
        if err <= 1.0 {
            retries = 0;
            let ydiff: [f64; N] = std::array::from_fn(|i| y1[i] - y[i]);
            let r3: [f64; N] = std::array::from_fn(|i| h * k1[i] - ydiff[i]);
            let r4: [f64; N] = std::array::from_fn(|i| ydiff[i] - h * k7[i] - r3[i]);
            let r5: [f64; N] = std::array::from_fn(|i| {
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
            });
            let step = DenseStep { t0: t, h, r: [y, ydiff, r3, r4, r5], f0: k1, f1: k7 };
            on_step(&step);
            stats.steps += 1;
            t = if last { t_end } else { t + h };
            y = y1;
            k1 = k7;
            if last {
                return Ok((y, stats));
            }
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h = dir * (h.abs() * fac).min(opts.h_max);
        } else {
            stats.rejections += 1;
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h *= fac;
            last_rejected = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Never = std::convert::Infallible;

    #[test]
    fn harmonic_oscillator_accuracy() {
        let opts = OdeOptions { atol: 1e-12, rtol: 1e-12, ..Default::default() };
        let (y, stats) =
            dopri5(|_, y: &[f64; 2]| Ok::<_, Never>([y[1], -y[0]]), 0.0, [0.0, 1.0], 10.0, &opts, |_| {}).unwrap();
        assert!((y[0] - 10f64.sin()).abs() < 1e-10 && (y[1] - 10f64.cos()).abs() < 1e-10);
        assert!(stats.steps > 10);
    }

    #[test]
    fn backward_integration() {
        let opts = OdeOptions::default();
        let (y, _) = dopri5(|_, y: &[f64; 1]| Ok::<_, Never>([-y[0]]), 1.0, [1.0], -1.0, &opts, |_| {}).unwrap();
        assert!((y[0] - 2f64.exp()).abs() < 1e-7);
    }

    #[test]
    fn dense_output_is_fourth_order() {
        // interpolation error of the continuous extension at mid-step
        let mut worst: f64 = 0.0;
        let opts = OdeOptions { atol: 1e-8, rtol: 1e-8, h_max: 0.05, ..Default::default() };
        dopri5(|t, _y: &[f64; 1]| Ok::<_, Never>([t.cos()]), 0.0, [0.0], 6.0, &opts, |s| {
            for th in [0.25, 0.5, 0.75] {
                let t = s.t0 + th * s.h;
                worst = worst.max((s.eval(t)[0] - t.sin()).abs());
            }
        })
        .unwrap();
        assert!(worst < 1e-8, "{worst:e}");
    }

    #[test]
    fn dense_derivative_matches_rhs_at_ends() {
        let opts = OdeOptions::default();
        dopri5(|_, y: &[f64; 2]| Ok::<_, Never>([y[1], -y[0]]), 0.0, [0.0, 1.0], 2.0, &opts, |s| {
            let d0 = s.eval_derivative(s.t0);
            let d1 = s.eval_derivative(s.t1());
            for i in 0..2 {
                assert!((d0[i] - s.f0[i]).abs() < 1e-12 && (d1[i] - s.f1[i]).abs() < 1e-12);
            }
        })
        .unwrap();
    }

    #[test]
    fn dense_output_endpoints() {
        let opts = OdeOptions::default();
        dopri5(|_, y: &[f64; 2]| Ok::<_, Never>([y[1], -y[0]]), 0.0, [0.0, 1.0], 1.0, &opts, |s| {
            assert_eq!(s.eval(s.t0), s.y0());
            let e = s.eval(s.t1());
            let y1 = s.y1();
            assert!((e[0] - y1[0]).abs() < 1e-15 && (e[1] - y1[1]).abs() < 1e-15);
        })
        .unwrap();
    }

    #[test]
    fn node_retries_then_fails() {
        let opts = OdeOptions { max_retries: 5, ..Default::default() };
        let r = dopri5(
            |t, _y: &[f64; 1]| if t > 0.5 { Err("node") } else { Ok([1.0]) },
            0.0,
            [0.0],
            1.0,
            &opts,
            |_| {},
        );
        match r {
            Err(OdeError::NodeEncounter { retries, .. }) => assert_eq!(retries, 6),
            Err(OdeError::StepUnderflow { .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
