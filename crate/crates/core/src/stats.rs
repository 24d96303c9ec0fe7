//! Binned chi-square goodness-of-fit against analytic densities.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Bins with fewer expected counts are pooled into one.
pub const MIN_EXPECTED: f64 = 5.0;

const GL8_X: [f64; 4] = [0.1834346424956498, 0.5255324099163290, 0.7966664774136267, 0.9602898564975363];
const GL8_W: [f64; 4] = [0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763];

/// Composite 8-point Gauss-Legendre rule over [a, b] with `panels` panels.
pub fn gauss_legendre<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        let r = 0.5 * h;
        for k in 0..4 {
            s += GL8_W[k] * (f(c - r * GL8_X[k]) + f(c + r * GL8_X[k]));
        }
    }
    0.5 * h * s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Bins entering the statistic after pooling.
    pub bins: usize,
    /// Original bins merged into the pooled bin.
    pub pooled: usize,
    pub n: u64,
}

impl ChiSquare {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value >= significance
    }
}

/// Pearson chi-square of `observed` counts against bin probabilities `prob`.
/// Probability mass not covered by `prob` and the `overflow` count form an
/// extra bin; all bins with expected count below `MIN_EXPECTED` are pooled.
pub fn chi_square(observed: &[u64], prob: &[f64], overflow: u64) -> ChiSquare {
    assert_eq!(observed.len(), prob.len());
    let n: u64 = observed.iter().sum::<u64>() + overflow;
    let nf = n as f64;
    let covered: f64 = prob.iter().sum();
    let mut stat = 0.0;
    let mut bins: usize = 0;
    let mut pooled = 0;
    let (mut po, mut pe) = (overflow as f64, (1.0 - covered).max(0.0) * nf);
    for (&o, &p) in observed.iter().zip(prob) {
        let e = p * nf;
        if e < MIN_EXPECTED {
            po += o as f64;
            pe += e;
            pooled += 1;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            bins += 1;
        }
    }
    if pe > 0.0 {
        stat += (po - pe).powi(2) / pe;
        bins += 1;
    } else if po > 0.0 {
        stat = f64::INFINITY;
        bins += 1;
    }
    let dof = bins.saturating_sub(1).max(1);
    let p_value = if stat.is_finite() {
        1.0 - ChiSquared::new(dof as f64).expect("dof >= 1").cdf(stat)
    } else {
        0.0
    };
    ChiSquare { statistic: stat, dof, p_value, bins, pooled, n }
}

/// Regular 2D binning over a rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub na: usize,
    pub nb: usize,
}

impl Grid2 {
    pub fn index(&self, a: f64, b: f64) -> Option<usize> {
        let fa = (a - self.a.0) / (self.a.1 - self.a.0);
        let fb = (b - self.b.0) / (self.b.1 - self.b.0);
        if !(0.0..1.0).contains(&fa) || !(0.0..1.0).contains(&fb) {
            return None;
        }
        let i = ((fa * self.na as f64) as usize).min(self.na - 1);
        let j = ((fb * self.nb as f64) as usize).min(self.nb - 1);
        Some(i * self.nb + j)
    }

    /// Counts points into bins; returns (counts, points outside).
    pub fn histogram(&self, pts: impl IntoIterator<Item = (f64, f64)>) -> (Vec<u64>, u64) {
        let mut c = vec![0u64; self.na * self.nb];
        let mut out = 0;
        for (a, b) in pts {
            match self.index(a, b) {
                Some(k) => c[k] += 1,
                None => out += 1,
            }
        }
        (c, out)
    }

    /// Integral of `density` over each bin (composite Gauss-Legendre, `panels`^2 panels per bin).
    pub fn integrate<F: FnMut(f64, f64) -> f64>(&self, mut density: F, panels: usize) -> Vec<f64> {
        let ha = (self.a.1 - self.a.0) / self.na as f64;
        let hb = (self.b.1 - self.b.0) / self.nb as f64;
        let mut out = Vec::with_capacity(self.na * self.nb);
        for i in 0..self.na {
            let a0 = self.a.0 + i as f64 * ha;
            for j in 0..self.nb {
                let b0 = self.b.0 + j as f64 * hb;
                let v = gauss_legendre(|a| gauss_legendre(|b| density(a, b), b0, b0 + hb, panels), a0, a0 + ha, panels);
                out.push(v);
            }
        }
        out
    }

    /// Sums bins along the second axis.
    pub fn marginal_a(&self, v: &[f64]) -> Vec<f64> {
        (0..self.na).map(|i| v[i * self.nb..(i + 1) * self.nb].iter().sum()).collect()
    }

    /// Sums bins along the first axis.
    pub fn marginal_b(&self, v: &[f64]) -> Vec<f64> {
        (0..self.nb).map(|j| (0..self.na).map(|i| v[i * self.nb + j]).sum()).collect()
    }

    pub fn marginal_counts_a(&self, c: &[u64]) -> Vec<u64> {
        (0..self.na).map(|i| c[i * self.nb..(i + 1) * self.nb].iter().sum()).collect()
    }

    pub fn marginal_counts_b(&self, c: &[u64]) -> Vec<u64> {
        (0..self.nb).map(|j| (0..self.na).map(|i| c[i * self.nb + j]).sum()).collect()
    }
}
