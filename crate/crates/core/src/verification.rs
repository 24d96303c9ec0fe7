//! Cross-cutting property suite: equivalence of the two velocity routes,
//! continuity residuals, the optical density identity, detector T-terms,
//! boost covariance, exchange symmetry, metric and paraxial checks.
//!
//! Every check returns a [`CheckReport`]; [`run_suite`] runs them in parallel
//! and merges the reports in a fixed order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::kg::{current_1, current_2, currents, density_kg, rounding_condition, term_scale, velocity_kg_with};
use crate::kg::{CurrentDensity, MultiPoint, TwoPhotonConfig, DEFAULT_NODE_REL};
use crate::lorentz::{boost_current, boost_event, redshift_packets, Boost};
use crate::metric::{coordinate_velocity, shift_from_current, Branch};
use crate::paraxial::{current_paraxial, psi_paraxial_pair, velocity_paraxial_fd, velocity_paraxial_with};
use crate::quadrature::{quad_oracle, Integrand};
use crate::stats::{chi_square, ChiSquare, Grid2};
use crate::trajectories::sample_initial;
use crate::wavepacket::{psi, psi_k, Event, Packet};
use crate::weak_value::{psi_m, t_terms, velocity_m_with, wv_numerators, EqualTimePoint};

/// Version of the report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// All pass thresholds of the suite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// |v_M - v_KG|, and the component identities relative to the peak density.
    pub equivalence: f64,
    /// Closed-form primitives vs quadrature, relative to max(|value|, peak).
    pub quadrature: f64,
    /// Accepted band of the residual ratio under h-halving.
    pub continuity_band: (f64, f64),
    /// Fraction of resolved points that must lie in the band.
    pub continuity_fraction: f64,
    /// Multiple of the rounding floor below which a residual counts as noise.
    pub noise_factor: f64,
    /// Peak-normalised deviation of the density identity.
    pub density_identity: f64,
    pub t_cross: f64,
    pub t_sum: f64,
    /// Density and current covariance relative to the term magnitudes.
    pub covariance: f64,
    /// rho1 - rho2 on the exchange-symmetric line, relative to the peak density.
    pub symmetric_density: f64,
    /// Metric round trip relative to max(1, |v|).
    pub metric: f64,
    pub paraxial_ratio: f64,
    pub paraxial_fd: f64,
    /// Node threshold relative to the peak density.
    pub node_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            equivalence: 1e-10,
            quadrature: 1e-8,
            continuity_band: (3.5, 4.5),
            continuity_fraction: 0.95,
            noise_factor: 10.0,
            density_identity: 1e-3,
            t_cross: 1e-10,
            t_sum: 1e-8,
            covariance: 1e-9,
            symmetric_density: 1e-12,
            metric: 1e-14,
            paraxial_ratio: 1e-2,
            paraxial_fd: 1e-6,
            node_rel: DEFAULT_NODE_REL,
        }
    }
}

/// Regular grid: both particle positions range over `x`, time over `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub t: (f64, f64),
    pub nt: usize,
    pub x: (f64, f64),
    pub nx: usize,
}

fn linspace((a, b): (f64, f64), n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

impl Grid {
    /// t in [-2, 2], x1, x2 in [-4, 4], 5 x 21 x 21.
    pub fn equivalence() -> Self {
        Grid { t: (-2.0, 2.0), nt: 5, x: (-4.0, 4.0), nx: 21 }
    }

    /// t in [-2, 0], x1, x2 in [-3, 3], 5 x 21 x 21.
    pub fn validation() -> Self {
        Grid { t: (-2.0, 0.0), nt: 5, x: (-3.0, 3.0), nx: 21 }
    }

    /// Single-event grid for the one-packet primitives: t, x in [-5, 5], 21 x 21.
    pub fn primitives() -> Self {
        Grid { t: (-5.0, 5.0), nt: 21, x: (-5.0, 5.0), nx: 21 }
    }

    pub fn times(&self) -> Vec<f64> {
        linspace(self.t, self.nt)
    }

    pub fn xs(&self) -> Vec<f64> {
        linspace(self.x, self.nx)
    }

    /// Every (t, x1, x2) of the grid.
    pub fn points(&self) -> Vec<EqualTimePoint> {
        let xs = self.xs();
        let mut out = Vec::with_capacity(self.nt * xs.len() * xs.len());
        for t in self.times() {
            for &a in &xs {
                for &b in &xs {
                    out.push(EqualTimePoint::new(t, a, b));
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        [self.t.0, self.t.1, self.x.0, self.x.1].iter().all(|v| v.is_finite())
    }
}

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    /// The figure of merit compared against `threshold`.
    pub value: f64,
    pub threshold: f64,
    /// Where `value` was attained.
    pub worst_at: Option<Value>,
    pub details: Value,
}

/// Merged suite output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub passed: bool,
    pub tolerances: Tolerances,
    pub checks: Vec<CheckReport>,
}

impl Report {
    pub fn failed(&self) -> impl Iterator<Item = &CheckReport> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Running maximum with its location.
#[derive(Default)]
struct Worst {
    value: f64,
    at: Option<Value>,
}

impl Worst {
    fn push(&mut self, v: f64, at: impl FnOnce() -> Value) {
        // NaN always wins so it cannot hide
        if v > self.value || v.is_nan() && !self.value.is_nan() {
            self.value = v;
            self.at = Some(at());
        }
    }
}

fn loc(p: &EqualTimePoint) -> Value {
    json!({"t": p.t, "x1": p.x1, "x2": p.x2})
}

fn cfg_json(cfg: &TwoPhotonConfig) -> Value {
    json!({
        "k0_right": cfg.right().center(), "sigma_right": cfg.right().width(),
        "k0_left": cfg.left().center(), "sigma_left": cfg.left().width(),
    })
}

/// Velocity routes and the four component identities on the grid.
/// Points where both routes report a node are skipped and counted.
pub fn check_equivalence(cfg: &TwoPhotonConfig, grid: &Grid, tol: &Tolerances) -> CheckReport {
    let eps = cfg.node_threshold(tol.node_rel);
    let peak = cfg.peak_density();
    let mut vel = Worst::default();
    let mut comp = Worst::default();
    let (mut nodes, mut mismatched, mut compared) = (0usize, 0usize, 0usize);
    for p in grid.points() {
        let mp = p.multipoint();
        let (c1, c2) = currents(cfg, &mp);
        let psi = psi_m(cfg, &p).conj();
        let n = wv_numerators(cfg, &p);
        let pairs = [
            (c1.rho, 2.0 * (psi * n.h_a).re),
            (c1.j, 2.0 * (psi * n.k_a).re),
            (c2.rho, 2.0 * (psi * n.h_b).re),
            (c2.j, 2.0 * (psi * n.k_b).re),
        ];
        for (a, b) in pairs {
            comp.push((a - b).abs() / peak, || loc(&p));
        }
        match (velocity_m_with(cfg, &p, eps), velocity_kg_with(cfg, &mp, eps)) {
            (Ok((m1, m2)), Ok((k1, k2))) => {
                compared += 1;
                vel.push((m1 - k1).abs().max((m2 - k2).abs()), || loc(&p));
            }
            (Err(_), Err(_)) => nodes += 1,
            _ => mismatched += 1,
        }
    }
    let value = vel.value.max(comp.value);
    CheckReport {
        name: format!("equivalence_q{}", cfg.q()),
        passed: value < tol.equivalence && mismatched == 0 && compared > 0,
        value,
        threshold: tol.equivalence,
        worst_at: if vel.value >= comp.value { vel.at } else { comp.at },
        details: json!({
            "config": cfg_json(cfg),
            "grid": grid,
            "max_velocity_diff": vel.value,
            "max_component_diff_rel_peak": comp.value,
            "points_compared": compared,
            "node_points_skipped": nodes,
            "node_threshold_mismatches": mismatched,
        }),
    }
}

/// The four one-packet primitives against adaptive quadrature on `grid`
/// (x1 is the position, x2 unused), for each center in `centers` at width sigma.
pub fn check_quadrature(centers: &[f64], sigma: f64, grid: &Grid, tol: &Tolerances) -> CheckReport {
    let mut worst = Worst::default();
    let mut evaluated = 0usize;
    let mut failures = Vec::new();
    for &k0 in centers {
        let packets = match (Packet::right(k0, sigma), Packet::left(k0, sigma)) {
            (Ok(r), Ok(l)) => [r, l],
            (r, l) => {
                failures.push(format!("k0 = {k0}: {:?} {:?}", r.err(), l.err()));
                continue;
            }
        };
        for t in grid.times() {
            for x in grid.xs() {
                let e = Event::new(t, x);
                for p in &packets {
                    for (sel, weight) in [(Integrand::Psi, 1.0), (Integrand::PsiK, p.center())] {
                        let scale = p.peak_amplitude() * weight;
                        let closed = if sel == Integrand::Psi { psi(p, e) } else { psi_k(p, e) };
                        let name = match (sel, p.direction()) {
                            (Integrand::Psi, crate::Direction::Right) => "psi1",
                            (Integrand::Psi, _) => "psi2",
                            (_, crate::Direction::Right) => "psi1_k",
                            _ => "psi2_k",
                        };
                        evaluated += 1;
                        match quad_oracle(sel, p, e, 1e-4 * tol.quadrature * scale) {
                            Ok(q) => {
                                let rel = (q - closed).norm() / closed.norm().max(scale);
                                worst.push(rel, || json!({"primitive": name, "k0": k0, "t": t, "x": x}));
                            }
                            Err(err) => failures.push(format!("{name} k0={k0} t={t} x={x}: {err}")),
                        }
                    }
                }
            }
        }
    }
    CheckReport {
        name: "quadrature".into(),
        passed: worst.value < tol.quadrature && failures.is_empty(),
        value: worst.value,
        threshold: tol.quadrature,
        worst_at: worst.at,
        details: json!({"centers": centers, "sigma": sigma, "grid": grid, "evaluated": evaluated, "failures": failures}),
    }
}

fn shifted_current(cfg: &TwoPhotonConfig, mp: &MultiPoint, particle: u8, dt: f64, dx: f64) -> CurrentDensity {
    let mut m = *mp;
    if particle == 1 {
        m.e1.t += dt;
        m.e1.x += dx;
        current_1(cfg, &m)
    } else {
        m.e2.t += dt;
        m.e2.x += dx;
        current_2(cfg, &m)
    }
}

/// Central-difference residual of d rho_i/dt_i + d j_i/dx_i.
pub fn continuity_residual(cfg: &TwoPhotonConfig, mp: &MultiPoint, particle: u8, h: f64) -> f64 {
    let s = |dt, dx| shifted_current(cfg, mp, particle, dt, dx);
    (s(h, 0.0).rho - s(-h, 0.0).rho) / (2.0 * h) + (s(0.0, h).j - s(0.0, -h).j) / (2.0 * h)
}

/// Rounding floor of `continuity_residual` at step h.
pub fn continuity_noise_floor(cfg: &TwoPhotonConfig, mp: &MultiPoint, particle: u8, h: f64) -> f64 {
    2.0 * f64::EPSILON * rounding_condition(cfg, mp) * term_scale(cfg, mp, particle) / h
}

/// O(h^2) convergence of the continuity residual under h-halving.
///
/// A point is resolved when its residual at h is above `noise_factor` times
/// the rounding floor. Resolved points must show a ratio in the band at the
/// required fraction; any point outside the band must have its h/2 residual
/// within `noise_factor` times the floor.
pub fn check_continuity(cfg: &TwoPhotonConfig, grid: &Grid, h: f64, tol: &Tolerances) -> CheckReport {
    let (lo, hi) = tol.continuity_band;
    let (mut resolved, mut in_band, mut noise, mut failing) = (0usize, 0usize, 0usize, 0usize);
    let mut worst = Worst::default();
    let mut ratios = Vec::new();
    for p in grid.points() {
        let mp = p.multipoint();
        for particle in [1u8, 2] {
            let r1 = continuity_residual(cfg, &mp, particle, h);
            let r2 = continuity_residual(cfg, &mp, particle, 0.5 * h);
            let n1 = tol.noise_factor * continuity_noise_floor(cfg, &mp, particle, h);
            let n2 = tol.noise_factor * continuity_noise_floor(cfg, &mp, particle, 0.5 * h);
            let ratio = r1 / r2;
            let band = (lo..=hi).contains(&ratio);
            if r1.abs() > n1 {
                resolved += 1;
                ratios.push(ratio);
                if band {
                    in_band += 1;
                }
            } else {
                noise += 1;
            }
            if !band && r2.abs() > n2 {
                failing += 1;
                worst.push((r2.abs() / n2).max(f64::MIN_POSITIVE), || {
                    json!({"t": p.t, "x1": p.x1, "x2": p.x2, "particle": particle, "ratio": ratio})
                });
            }
        }
    }
    let fraction = if resolved == 0 { 0.0 } else { in_band as f64 / resolved as f64 };
    ratios.sort_by(f64::total_cmp);
    let median = ratios.get(ratios.len() / 2).copied().unwrap_or(f64::NAN);
    CheckReport {
        name: "continuity".into(),
        passed: fraction >= tol.continuity_fraction && failing == 0,
        value: fraction,
        threshold: tol.continuity_fraction,
        worst_at: worst.at,
        details: json!({
            "config": cfg_json(cfg), "grid": grid, "h": h,
            "resolved": resolved, "in_band": in_band, "noise": noise,
            "failing": failing, "median_ratio": median, "band": [lo, hi],
        }),
    }
}

/// Peak-normalised deviation of rho1 + rho2 from 2 (k0R + k0L) |psi|^2 on the
/// grid: max |difference| / max (rho1 + rho2).
pub fn density_identity_deviation(cfg: &TwoPhotonConfig, grid: &Grid) -> (f64, Option<Value>) {
    let k = 2.0 * (cfg.right().center() + cfg.left().center());
    let mut worst = Worst::default();
    let mut peak: f64 = 0.0;
    for p in grid.points() {
        let mp = p.multipoint();
        let (c1, c2) = currents(cfg, &mp);
        let sum = c1.rho + c2.rho;
        peak = peak.max(sum.abs());
        worst.push((sum - k * density_kg(cfg, &mp)).abs(), || loc(&p));
    }
    (worst.value / peak, worst.at)
}

pub fn check_density_identity(cfg: &TwoPhotonConfig, grid: &Grid, tol: &Tolerances) -> CheckReport {
    let (value, at) = density_identity_deviation(cfg, grid);
    CheckReport {
        name: format!("density_identity_q{}", cfg.q()),
        passed: value < tol.density_identity,
        value,
        threshold: tol.density_identity,
        worst_at: at,
        details: json!({"config": cfg_json(cfg), "grid": grid}),
    }
}

/// Density identity over k0/sigma in `qs` (symmetric packets of width sigma)
/// and for the redshifted configuration at boost `theta`. Requires every
/// deviation below tolerance and a strict decrease along `qs`.
pub fn check_density_identity_sweep(sigma: f64, qs: &[f64], theta: f64, grid: &Grid, tol: &Tolerances) -> CheckReport {
    let mut devs = Vec::new();
    let mut worst = Worst::default();
    let mut errors = Vec::new();
    for &q in qs {
        match TwoPhotonConfig::symmetric(q * sigma, sigma) {
            Ok(c) => {
                let (d, at) = density_identity_deviation(&c, grid);
                devs.push(json!({"q": q, "deviation": d}));
                worst.push(d, || json!({"q": q, "at": at}));
            }
            Err(e) => errors.push(format!("q = {q}: {e}")),
        }
    }
    let series: Vec<f64> = devs.iter().filter_map(|d| d["deviation"].as_f64()).collect();
    let monotone = series.windows(2).all(|w| w[1] < w[0]);
    let boosted = Boost::new(theta)
        .map_err(|e| e.to_string())
        .and_then(|b| redshift_packets(&b, &TwoPhotonConfig::symmetric(qs.first().copied().unwrap_or(20.0) * sigma, sigma).map_err(|e| e.to_string())?).map_err(|e| e.to_string()));
    let boosted_dev = match &boosted {
        Ok(c) => {
            let (d, at) = density_identity_deviation(c, grid);
            worst.push(d, || json!({"theta": theta, "at": at}));
            Some(d)
        }
        Err(e) => {
            errors.push(format!("boost {theta}: {e}"));
            None
        }
    };
    CheckReport {
        name: "density_identity".into(),
        passed: worst.value < tol.density_identity && monotone && errors.is_empty(),
        value: worst.value,
        threshold: tol.density_identity,
        worst_at: worst.at,
        details: json!({
            "sweep": devs, "monotone_decrease": monotone,
            "boost_theta": theta, "boosted_deviation": boosted_dev,
            "boosted_config": boosted.ok().map(|c| cfg_json(&c)),
            "grid": grid, "errors": errors,
        }),
    }
}

/// T-term decomposition at one point: cross terms vanish and T1 + T4
/// reproduces the closed-form h_A. The sum error is taken relative to
/// |T1| + |T4|.
pub fn t_term_errors(cfg: &TwoPhotonConfig, p: &EqualTimePoint) -> Result<(f64, f64), String> {
    let scale = cfg.right().center().max(cfg.left().center()) * cfg.right().peak_amplitude() * cfg.left().peak_amplitude();
    let tt = t_terms(cfg, p, 1e-15 * scale).map_err(|e| e.to_string())?;
    let h = wv_numerators(cfg, p).h_a;
    let cross = tt.t2.norm().max(tt.t3.norm());
    let sum = (tt.t1 + tt.t4 - h).norm() / (tt.t1.norm() + tt.t4.norm());
    Ok((cross, sum))
}

pub fn check_t_terms(cfg: &TwoPhotonConfig, points: &[EqualTimePoint], tol: &Tolerances) -> CheckReport {
    let mut cross = Worst::default();
    let mut sum = Worst::default();
    let mut errors = Vec::new();
    for p in points {
        match t_term_errors(cfg, p) {
            Ok((c, s)) => {
                cross.push(c, || loc(p));
                sum.push(s, || loc(p));
            }
            Err(e) => errors.push(format!("{p:?}: {e}")),
        }
    }
    CheckReport {
        name: "t_terms".into(),
        passed: cross.value < tol.t_cross && sum.value < tol.t_sum && errors.is_empty() && !points.is_empty(),
        value: sum.value,
        threshold: tol.t_sum,
        worst_at: sum.at,
        details: json!({
            "points": points.len(), "max_cross_term": cross.value,
            "cross_threshold": tol.t_cross, "errors": errors,
        }),
    }
}

/// `n` points drawn from |psi_M|^2 at times uniform in the grid's time range.
pub fn random_points(cfg: &TwoPhotonConfig, grid: &Grid, n: usize, seed: u64) -> Vec<EqualTimePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .filter_map(|_| {
            let t = rng.gen_range(grid.t.0..=grid.t.1);
            let s = rng.gen::<u64>();
            let (x1, x2) = *sample_initial(cfg, t, 1, s).ok()?.first()?;
            Some(EqualTimePoint::new(t, x1, x2))
        })
        .collect()
}

/// Currents in the boosted frame with redshifted packets against the boosted
/// original currents, at every grid multipoint. Errors are relative to the
/// magnitudes gamma (1 + |theta|) times the term scale.
pub fn check_covariance(cfg: &TwoPhotonConfig, thetas: &[f64], grid: &Grid, tol: &Tolerances) -> CheckReport {
    let mut worst = Worst::default();
    let mut errors = Vec::new();
    let mut per_theta = Vec::new();
    for &theta in thetas {
        let (b, cb) = match Boost::new(theta).map_err(|e| e.to_string()).and_then(|b| {
            redshift_packets(&b, cfg).map(|c| (b, c)).map_err(|e| e.to_string())
        }) {
            Ok(v) => v,
            Err(e) => {
                errors.push(format!("theta {theta}: {e}"));
                continue;
            }
        };
        let mut w = Worst::default();
        for p in grid.points() {
            let mp = p.multipoint();
            let mb = MultiPoint::new(boost_event(&b, mp.e1), boost_event(&b, mp.e2));
            let (o1, o2) = currents(cfg, &mp);
            let (n1, n2) = currents(&cb, &mb);
            for (particle, o, n) in [(1u8, o1, n1), (2, o2, n2)] {
                let expect = boost_current(&b, o);
                let scale = b.gamma() * (1.0 + theta.abs()) * term_scale(cfg, &mp, particle);
                let d = (expect.rho - n.rho).abs().max((expect.j - n.j).abs()) / scale;
                w.push(d, || json!({"theta": theta, "t": p.t, "x1": p.x1, "x2": p.x2, "particle": particle}));
            }
        }
        per_theta.push(json!({"theta": theta, "max_rel_diff": w.value}));
        if let Some(at) = w.at.clone() {
            worst.push(w.value, || at);
        }
    }
    CheckReport {
        name: "covariance".into(),
        passed: worst.value < tol.covariance && errors.is_empty(),
        value: worst.value,
        threshold: tol.covariance,
        worst_at: worst.at,
        details: json!({"config": cfg_json(cfg), "grid": grid, "per_theta": per_theta, "errors": errors}),
    }
}

/// rho1 = rho2 on the exchange-symmetric line x2 = -x1 for an
/// indistinguishable configuration. The off-line maximum is reported for
/// reference only.
pub fn check_symmetric_densities(cfg: &TwoPhotonConfig, grid: &Grid, tol: &Tolerances) -> CheckReport {
    let peak = cfg.peak_density();
    let mut on = Worst::default();
    let mut off: f64 = 0.0;
    for p in grid.points() {
        let (c1, c2) = currents(cfg, &p.multipoint());
        off = off.max((c1.rho - c2.rho).abs() / peak);
        let q = EqualTimePoint::new(p.t, p.x1, -p.x1);
        let (c1, c2) = currents(cfg, &q.multipoint());
        on.push((c1.rho - c2.rho).abs() / peak, || loc(&q));
    }
    let indist = cfg.is_indistinguishable();
    CheckReport {
        name: "symmetric_densities".into(),
        passed: indist && on.value < tol.symmetric_density,
        value: on.value,
        threshold: tol.symmetric_density,
        worst_at: on.at,
        details: json!({"indistinguishable": indist, "off_line_max_rel_peak": off, "grid": grid}),
    }
}

/// Round trip j/rho -> shift -> co-moving null branch on `n` random (rho, j)
/// with |rho| in [1e-6, 1e3] and |j| in [1e-9, 1e3], log-uniform, random signs.
pub fn check_metric(n: usize, seed: u64, tol: &Tolerances) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst::default();
    let mut nodes = 0usize;
    for _ in 0..n {
        let sign = |r: &mut ChaCha8Rng| if r.gen::<bool>() { 1.0 } else { -1.0 };
        let rho = sign(&mut rng) * 10f64.powf(rng.gen_range(-6.0..3.0));
        let j = sign(&mut rng) * 10f64.powf(rng.gen_range(-9.0..3.0));
        let v = j / rho;
        match shift_from_current(CurrentDensity::new(rho, j), 1e-6) {
            Ok(m) => {
                let back = coordinate_velocity(&m, Branch::co_moving(v));
                worst.push((back - v).abs() / v.abs().max(1.0), || json!({"rho": rho, "j": j}));
            }
            Err(_) => nodes += 1,
        }
    }
    CheckReport {
        name: "metric".into(),
        passed: worst.value < tol.metric && nodes == 0,
        value: worst.value,
        threshold: tol.metric,
        worst_at: worst.at,
        details: json!({"samples": n, "seed": seed, "rejected": nodes}),
    }
}

/// Paraxial density ratio rho / (kz |psi|^2) at each kz/k0 in `ratios`
/// (strictly improving, first within tolerance), and the closed-form velocity
/// against a phase-gradient finite difference at the first ratio. Points with
/// |psi|^2 below `mask_rel` times the peak probability are skipped.
pub fn check_paraxial(cfg: &TwoPhotonConfig, ratios: &[f64], grid: &Grid, mask_rel: f64, tol: &Tolerances) -> CheckReport {
    let k0 = cfg.right().center().max(cfg.left().center());
    let mask = mask_rel * cfg.peak_probability();
    let mut devs = Vec::new();
    let mut worst = Worst::default();
    let mut masked = 0usize;
    let pts = grid.points();
    for &r in ratios {
        let kz = r * k0;
        let mut w = Worst::default();
        for p in &pts {
            let mp = p.multipoint();
            let n = psi_paraxial_pair(cfg, kz, &mp).norm_sqr();
            if n < mask {
                masked += 1;
                continue;
            }
            for particle in [1u8, 2] {
                let d = (current_paraxial(cfg, kz, &mp, particle).rho / (kz * n) - 1.0).abs();
                w.push(d, || json!({"kz_over_k0": r, "t": p.t, "x1": p.x1, "x2": p.x2, "particle": particle}));
            }
        }
        devs.push(w.value);
        if ratios.first() == Some(&r) {
            worst = w;
        }
    }
    let improving = devs.windows(2).all(|w| w[1] < w[0]);
    let mut fd = Worst::default();
    if let Some(&r) = ratios.first() {
        let kz = r * k0;
        for p in &pts {
            let mp = p.multipoint();
            if let Ok((a, b)) = velocity_paraxial_with(cfg, kz, &mp, mask) {
                let (fa, fb) = velocity_paraxial_fd(cfg, kz, &mp, 1e-3);
                fd.push((a - fa).abs().max((b - fb).abs()), || loc(p));
            }
        }
    }
    CheckReport {
        name: "paraxial".into(),
        passed: worst.value < tol.paraxial_ratio && improving && fd.value < tol.paraxial_fd && !devs.is_empty(),
        value: worst.value,
        threshold: tol.paraxial_ratio,
        worst_at: worst.at,
        details: json!({
            "kz_over_k0": ratios, "max_ratio_deviation": devs, "improving": improving,
            "max_fd_velocity_diff": fd.value, "fd_threshold": tol.paraxial_fd,
            "fd_worst_at": fd.at, "mask_rel": mask_rel, "masked_evaluations": masked,
        }),
    }
}

/// Binning of ordered pairs (x1 < x2) in s = x1 + x2 and d = x2 - x1 over
/// `sigmas` standard deviations of the free product packets at time t.
pub fn transport_bins(cfg: &TwoPhotonConfig, t: f64, n: usize, sigmas: f64) -> Grid2 {
    let (sr, sl) = (cfg.right().width(), cfg.left().width());
    let spread = sigmas * (0.25 / (sr * sr) + 0.25 / (sl * sl)).sqrt();
    let dc = 2.0 * t.abs();
    Grid2 { a: (-spread, spread), b: ((dc - spread).max(0.0), dc + spread), na: n, nb: n }
}

/// Probability of each bin for an ordered pair drawn from |psi_M(t)|^2.
/// In (s, d) the ordered density is |psi_M|^2 at x1 = (s - d)/2, x2 = (s + d)/2.
pub fn transport_probabilities(cfg: &TwoPhotonConfig, t: f64, bins: &Grid2) -> Vec<f64> {
    bins.integrate(|s, d| psi_m(cfg, &EqualTimePoint::new(t, 0.5 * (s - d), 0.5 * (s + d))).norm_sqr(), 2)
}

/// Chi-square of ordered positions at time t against |psi_M(t)|^2.
pub fn transport_chi_square(cfg: &TwoPhotonConfig, t: f64, pts: &[(f64, f64)], n_bins: usize) -> ChiSquare {
    let bins = transport_bins(cfg, t, n_bins, 5.0);
    let prob = transport_probabilities(cfg, t, &bins);
    let (counts, out) = bins.histogram(pts.iter().map(|&(a, b)| {
        let (x1, x2) = if a <= b { (a, b) } else { (b, a) };
        (x1 + x2, x2 - x1)
    }));
    chi_square(&counts, &prob, out)
}

/// What the suite runs and where.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub tolerances: Tolerances,
    pub equivalence_grid: Grid,
    pub validation_grid: Grid,
    pub primitive_grid: Grid,
    /// k0/sigma values of the equivalence sweep, in addition to the run configuration.
    pub equivalence_q: Vec<f64>,
    pub quadrature_centers: Vec<f64>,
    pub density_q: Vec<f64>,
    pub density_boost: f64,
    pub covariance_thetas: Vec<f64>,
    pub continuity_h: f64,
    pub t_term_points: usize,
    pub metric_samples: usize,
    pub paraxial_ratios: Vec<f64>,
    pub paraxial_mask: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            tolerances: Tolerances::default(),
            equivalence_grid: Grid::equivalence(),
            validation_grid: Grid::validation(),
            primitive_grid: Grid::primitives(),
            equivalence_q: vec![10.0, 20.0, 40.0],
            quadrature_centers: vec![10.0, 20.0, 40.0],
            density_q: vec![20.0, 40.0, 80.0],
            density_boost: 0.2,
            covariance_thetas: vec![0.2, 0.4, 0.6],
            continuity_h: 1e-3,
            t_term_points: 20,
            metric_samples: 10_000,
            paraxial_ratios: vec![100.0, 1000.0],
            paraxial_mask: 1e-3,
            seed: 20,
        }
    }
}

type Job<'a> = Box<dyn Fn() -> CheckReport + Send + Sync + 'a>;

/// Runs every check of the suite in parallel. Report order is fixed by the
/// job list, independent of scheduling.
pub fn run_suite(cfg: &TwoPhotonConfig, sc: &SuiteConfig) -> Report {
    let tol = &sc.tolerances;
    let sigma = cfg.right().width();
    let mut jobs: Vec<Job> = Vec::new();
    jobs.push(Box::new(move || check_equivalence(cfg, &sc.equivalence_grid, tol)));
    for &q in &sc.equivalence_q {
        jobs.push(Box::new(move || match TwoPhotonConfig::symmetric(q * sigma, sigma) {
            Ok(c) => {
                let mut r = check_equivalence(&c, &sc.equivalence_grid, tol);
                r.name = format!("equivalence_sweep_q{q}");
                r
            }
            Err(e) => invalid(format!("equivalence_sweep_q{q}"), e.to_string()),
        }));
    }
    jobs.push(Box::new(move || check_quadrature(&sc.quadrature_centers, sigma, &sc.primitive_grid, tol)));
    jobs.push(Box::new(move || check_continuity(cfg, &sc.validation_grid, sc.continuity_h, tol)));
    jobs.push(Box::new(move || check_density_identity_sweep(sigma, &sc.density_q, sc.density_boost, &sc.validation_grid, tol)));
    jobs.push(Box::new(move || {
        let pts = random_points(cfg, &sc.validation_grid, sc.t_term_points, sc.seed);
        check_t_terms(cfg, &pts, tol)
    }));
    jobs.push(Box::new(move || check_covariance(cfg, &sc.covariance_thetas, &sc.validation_grid, tol)));
    jobs.push(Box::new(move || check_symmetric_densities(cfg, &sc.equivalence_grid, tol)));
    jobs.push(Box::new(move || check_metric(sc.metric_samples, sc.seed, tol)));
    jobs.push(Box::new(move || check_paraxial(cfg, &sc.paraxial_ratios, &sc.validation_grid, sc.paraxial_mask, tol)));
    let checks: Vec<CheckReport> = crate::parallel::install(|| jobs.par_iter().map(|j| j()).collect());
    Report { schema_version: REPORT_SCHEMA_VERSION, passed: checks.iter().all(|c| c.passed), tolerances: *tol, checks }
}

fn invalid(name: String, msg: String) -> CheckReport {
    CheckReport { name, passed: false, value: f64::NAN, threshold: f64::NAN, worst_at: None, details: json!({"error": msg}) }
}
