//! Coupled trajectory integration dx_i/dt = v_i(t, x1, x2), initial-condition
//! sampling, ensembles, timeslice snapshots and boosted-frame bundles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::Normal;
use thiserror::Error;

use crate::kg::{currents, KgField, MultiPoint, NodeSingularity, TwoPhotonConfig, VelocityField};
use crate::lorentz::{add_velocity, boost_event, redshift_packets, Boost, BoostError};
use crate::ode::{dopri5, DenseStep, OdeError, OdeOptions, OdeStats};
use crate::wavepacket::Event;
use crate::weak_value::{psi_m, EqualTimePoint};

/// Acceptance rate below which the rejection sampler gives up.
pub const MIN_ACCEPTANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("integration failed: {0}")]
    Ode(#[from] OdeError<NodeSingularity>),
    #[error("invalid time span [{t0}, {t1}]")]
    InvalidSpan { t0: f64, t1: f64 },
    #[error("initial positions coincide or are not finite: x1 = {x1}, x2 = {x2}")]
    BadStart { x1: f64, x2: f64 },
    #[error("field undefined at the start: {0}")]
    StartNode(NodeSingularity),
    #[error("time {t} outside integrated span [{lo}, {hi}]")]
    OutOfSpan { t: f64, lo: f64, hi: f64 },
    #[error("rejection sampler stalled: acceptance {rate:e} after {trials} trials")]
    RejectionStall { rate: f64, trials: u64 },
    #[error("invalid sample count or options: {0}")]
    Invalid(String),
    #[error(transparent)]
    Boost(#[from] BoostError),
    /// Integration stopped at t; the trajectory up to t is kept.
    #[error("trajectory terminated at t = {t}: {source}")]
    Terminated { t: f64, partial: Box<TrajectoryPair>, source: Box<TrajectoryError> },
}

/// Integrator settings for trajectory runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOpts {
    /// Absolute and relative local error tolerance on positions.
    pub tol: f64,
    /// Spacing of the output samples.
    pub sample_dt: f64,
    /// Consecutive node retries (step halvings) before a pair is abandoned.
    pub max_retries: u32,
    /// Keep the dense-output steps for exact interpolation.
    pub keep_dense: bool,
}

impl Default for IntegratorOpts {
    fn default() -> Self {
        IntegratorOpts { tol: 1e-9, sample_dt: 0.01, max_retries: 40, keep_dense: false }
    }
}

impl IntegratorOpts {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(TrajectoryError::Invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.sample_dt > 0.0 && self.sample_dt.is_finite()) {
            return Err(TrajectoryError::Invalid(format!("sample_dt must be positive, got {}", self.sample_dt)));
        }
        Ok(())
    }

    fn ode(&self) -> OdeOptions {
        OdeOptions {
            atol: self.tol,
            rtol: self.tol,
            max_retries: self.max_retries,
            h_max: self.sample_dt.max(1e-3).min(0.1),
            ..OdeOptions::default()
        }
    }
}

/// One output sample of a pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub v1: f64,
    pub v2: f64,
}

/// Integrated pair of trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPair {
    pub samples: Vec<Sample>,
    pub stats: OdeStats,
    pub cfg: TwoPhotonConfig,
    #[serde(skip)]
    pub dense: Option<Vec<DenseStep<2>>>,
}

impl TrajectoryPair {
    pub fn t_start(&self) -> f64 {
        self.samples.first().map_or(f64::NAN, |s| s.t)
    }

    pub fn t_end(&self) -> f64 {
        self.samples.last().map_or(f64::NAN, |s| s.t)
    }

    /// min over samples of x2 - x1.
    pub fn min_separation(&self) -> f64 {
        self.samples.iter().map(|s| s.x2 - s.x1).fold(f64::INFINITY, f64::min)
    }

    /// Positions at time t: dense output if kept, a stored sample if t hits
    /// one, cubic Hermite interpolation between samples otherwise.
    pub fn position_at(&self, t: f64) -> Result<(f64, f64), TrajectoryError> {
        let (lo, hi) = (self.t_start().min(self.t_end()), self.t_start().max(self.t_end()));
        let slack = 1e-9 * (1.0 + t.abs());
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(TrajectoryError::OutOfSpan { t, lo, hi });
        }
        let t = t.clamp(lo, hi);
        if let Some(s) = self.samples.iter().find(|s| (s.t - t).abs() <= slack) {
            return Ok((s.x1, s.x2));
        }
        if let Some(steps) = &self.dense {
            if let Some(st) = steps.iter().find(|s| s.contains(t)) {
                let y = st.eval(t);
                return Ok((y[0], y[1]));
            }
        }
        let forward = self.t_end() >= self.t_start();
        let i = self
            .samples
            .windows(2)
            .position(|w| if forward { w[0].t <= t && t <= w[1].t } else { w[1].t <= t && t <= w[0].t })
            .ok_or(TrajectoryError::OutOfSpan { t, lo, hi })?;
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        Ok((hermite(a.t, a.x1, a.v1, b.t, b.x1, b.v1, t), hermite(a.t, a.x2, a.v2, b.t, b.x2, b.v2, t)))
    }
}

fn hermite(t0: f64, y0: f64, d0: f64, t1: f64, y1: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let (s2, s3) = (s * s, s * s * s);
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * h * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * h * d1
}

fn sample_times(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let span = t1 - t0;
    let dir = span.signum();
    let n = (span.abs() / dt * (1.0 + 1e-12)).floor() as usize;
    let mut v: Vec<f64> = (0..=n).map(|k| t0 + dir * k as f64 * dt).collect();
    if (v[n] - t1).abs() > 1e-12 * (1.0 + t1.abs()) {
        v.push(t1);
    } else {
        v[n] = t1;
    }
    v
}

struct RunOutput {
    samples: Vec<Sample>,
    stats: OdeStats,
    dense: Option<Vec<DenseStep<2>>>,
    /// Set when the integration stopped early; `samples` then end at the
    /// last accepted step.
    error: Option<TrajectoryError>,
}

/// Integrates y' = rhs(t, y) from t0 to t1 (either direction), sampling on
/// the grid t0 + k sample_dt.
fn run<R>(rhs: &R, t0: f64, y0: [f64; 2], t1: f64, opts: &IntegratorOpts) -> RunOutput
where
    R: Fn(f64, &[f64; 2]) -> Result<[f64; 2], NodeSingularity>,
{
    let times = sample_times(t0, t1, opts.sample_dt);
    let mut samples = Vec::with_capacity(times.len());
    let mut dense = opts.keep_dense.then(Vec::new);
    let mut last_step: Option<DenseStep<2>> = None;
    let mut idx = 0;
    let record = |t: f64, y: [f64; 2], fallback: [f64; 2]| {
        let v = rhs(t, &y).unwrap_or(fallback);
        Sample { t, x1: y[0], x2: y[1], v1: v[0], v2: v[1] }
    };
    let result = dopri5(rhs, t0, y0, t1, &opts.ode(), |st: &DenseStep<2>| {
        while idx < times.len() && st.contains(times[idx]) {
            let t = times[idx];
            samples.push(record(t, st.eval(t), st.eval_derivative(t)));
            idx += 1;
        }
        if let Some(d) = dense.as_mut() {
            d.push(*st);
        }
        last_step = Some(*st);
    });
    let (stats, error) = match result {
        Ok((yend, stats)) => {
            while idx < times.len() {
                // end point lost to rounding of the final step
                let v = rhs(times[idx], &yend).unwrap_or([f64::NAN; 2]);
                samples.push(Sample { t: times[idx], x1: yend[0], x2: yend[1], v1: v[0], v2: v[1] });
                idx += 1;
            }
            (stats, None)
        }
        Err(e) => {
            if let Some(st) = last_step {
                let t = st.t1();
                if samples.last().map_or(true, |s| s.t != t) {
                    samples.push(record(t, st.y1(), st.f1));
                }
            }
            (OdeStats::default(), Some(TrajectoryError::from(e)))
        }
    };
    if samples.is_empty() {
        samples.push(record(t0, y0, [f64::NAN; 2]));
    }
    RunOutput { samples, stats, dense, error }
}

fn equal_time_rhs<F: VelocityField>(field: &F) -> impl Fn(f64, &[f64; 2]) -> Result<[f64; 2], NodeSingularity> + '_ {
    move |t, y| field.velocity_at(t, y[0], y[1]).map(|(a, b)| [a, b])
}

/// Integrates one pair on equal timeslices from t0 to t1 > t0.
pub fn integrate_pair<F: VelocityField>(
    cfg: &TwoPhotonConfig,
    field: &F,
    x10: f64,
    x20: f64,
    t0: f64,
    t1: f64,
    opts: &IntegratorOpts,
) -> Result<TrajectoryPair, TrajectoryError> {
    opts.validate()?;
    if !(t1 > t0 && t0.is_finite() && t1.is_finite()) {
        return Err(TrajectoryError::InvalidSpan { t0, t1 });
    }
    if !(x10.is_finite() && x20.is_finite()) || x10 == x20 {
        return Err(TrajectoryError::BadStart { x1: x10, x2: x20 });
    }
    field.velocity_at(t0, x10, x20).map_err(TrajectoryError::StartNode)?;
    let rhs = equal_time_rhs(field);
    let out = run(&rhs, t0, [x10, x20], t1, opts);
    let pair = TrajectoryPair { samples: out.samples, stats: out.stats, cfg: *cfg, dense: out.dense };
    match out.error {
        None => Ok(pair),
        Some(error) => Err(TrajectoryError::Terminated { t: pair.t_end(), partial: Box::new(pair), source: Box::new(error) }),
    }
}

/// Draws n ordered pairs (x1 < x2) from |psi_M(t0, x1, x2)|^2.
///
/// The envelope is the mixture (|a|^2 + |b|^2)/2 of the two product Gaussians,
/// which bounds |psi_M|^2 up to a factor 2.
pub fn sample_initial(cfg: &TwoPhotonConfig, t0: f64, n: usize, seed: u64) -> Result<Vec<(f64, f64)>, TrajectoryError> {
    if n == 0 {
        return Err(TrajectoryError::Invalid("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, l) = (cfg.right(), cfg.left());
    let nu = Normal::new(0.0, 0.5 / r.width()).expect("positive width");
    let nv = Normal::new(0.0, 0.5 / l.width()).expect("positive width");
    let pdf_u = |u: f64| (-2.0 * r.width() * r.width() * u * u).exp();
    let pdf_v = |v: f64| (-2.0 * l.width() * l.width() * v * v).exp();
    let pref = cfg.peak_probability() / 2.0;
    let mut out = Vec::with_capacity(n);
    let mut trials: u64 = 0;
    while out.len() < n {
        trials += 1;
        let (u, v): (f64, f64) = (rng.sample(nu), rng.sample(nv));
        // component a: x1 carries the right-mover, x2 the left-mover
        let (x1, x2) = if rng.gen::<bool>() { (t0 - u, v - t0) } else { (v - t0, t0 - u) };
        let g = pref * 0.5 * (pdf_u(t0 - x1) * pdf_v(t0 + x2) + pdf_u(t0 - x2) * pdf_v(t0 + x1));
        let target = psi_m(cfg, &EqualTimePoint::new(t0, x1, x2)).norm_sqr();
        if rng.gen::<f64>() * 2.0 * g < target {
            out.push(if x1 < x2 { (x1, x2) } else { (x2, x1) });
        }
        if trials >= 1_000_000 && (out.len() as f64) < MIN_ACCEPTANCE * trials as f64 {
            return Err(TrajectoryError::RejectionStall { rate: out.len() as f64 / trials as f64, trials });
        }
    }
    Ok(out)
}

/// Pair that failed to integrate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub index: usize,
    pub x10: f64,
    pub x20: f64,
    pub error: String,
    /// Trajectory up to the point where integration stopped, if it started.
    pub partial: Option<TrajectoryPair>,
}

/// Collection of integrated pairs with their provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub pairs: Vec<TrajectoryPair>,
    /// Index of each pair in the initial-condition list.
    pub indices: Vec<usize>,
    pub failures: Vec<PairFailure>,
    pub seed: Option<u64>,
    pub t0: f64,
    pub t1: f64,
    pub cfg: TwoPhotonConfig,
    pub opts: IntegratorOpts,
}

/// Integrates every initial condition in parallel; output order follows the input order.
pub fn integrate_ensemble<F: VelocityField>(
    cfg: &TwoPhotonConfig,
    field: &F,
    ics: &[(f64, f64)],
    t0: f64,
    t1: f64,
    opts: &IntegratorOpts,
    seed: Option<u64>,
) -> Ensemble {
    let results: Vec<Result<TrajectoryPair, TrajectoryError>> = crate::parallel::install(|| {
        ics.par_iter().map(|&(a, b)| integrate_pair(cfg, field, a, b, t0, t1, opts)).collect()
    });
    let mut pairs = Vec::with_capacity(results.len());
    let mut indices = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => {
                pairs.push(p);
                indices.push(i);
            }
            Err(e) => {
                let error = e.to_string();
                let partial = match e {
                    TrajectoryError::Terminated { partial, .. } => Some(*partial),
                    _ => None,
                };
                failures.push(PairFailure { index: i, x10: ics[i].0, x20: ics[i].1, error, partial });
            }
        }
    }
    Ensemble { pairs, indices, failures, seed, t0, t1, cfg: *cfg, opts: *opts }
}

/// Positions of every integrated pair at time t.
pub fn snapshot(ens: &Ensemble, t: f64) -> Result<Vec<(f64, f64)>, TrajectoryError> {
    ens.pairs.iter().map(|p| p.position_at(t)).collect()
}

/// Positions at time t of every pair whose trajectory reaches t, complete
/// or terminated later than t.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    /// Initial-condition index of each point.
    pub ids: Vec<usize>,
    pub points: Vec<(f64, f64)>,
    /// Pairs that stopped before t or never started.
    pub missing: Vec<usize>,
}

pub fn snapshot_alive(ens: &Ensemble, t: f64) -> Snapshot {
    let mut rows: Vec<(usize, (f64, f64))> = Vec::with_capacity(ens.pairs.len() + ens.failures.len());
    let mut missing = Vec::new();
    let all = ens.pairs.iter().zip(ens.indices.iter().copied()).map(|(p, i)| (i, Some(p)));
    let failed = ens.failures.iter().map(|f| (f.index, f.partial.as_ref()));
    for (i, p) in all.chain(failed) {
        match p.map(|p| p.position_at(t)) {
            Some(Ok(x)) => rows.push((i, x)),
            _ => missing.push(i),
        }
    }
    rows.sort_by_key(|r| r.0);
    missing.sort_unstable();
    let (ids, points) = rows.into_iter().unzip();
    Snapshot { t, ids, points, missing }
}

/// Initial conditions with particle 1 pinned at `x1` and particle 2 drawn from
/// the left-mover's marginal at t0.
pub fn pinned_ics(cfg: &TwoPhotonConfig, t0: f64, x1: f64, n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = Normal::new(0.0, 0.5 / cfg.left().width()).expect("positive width");
    (0..n).map(|_| (x1, rng.sample(nv) - t0)).collect()
}

/// Mirror-symmetric initial conditions (x, -x) with x evenly spread across
/// +-1.5 packet widths around the right-mover's center at t0.
pub fn symmetric_ics(cfg: &TwoPhotonConfig, t0: f64, n: usize) -> Vec<(f64, f64)> {
    let w = 0.5 / cfg.right().width();
    (0..n)
        .map(|k| {
            let f = if n == 1 { 0.0 } else { -1.5 + 3.0 * k as f64 / (n - 1) as f64 };
            let x = t0 + f * w;
            (x, -x)
        })
        .collect()
}

/// One particle's track in the boosted frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedSample {
    /// Original-frame time of the sample (path a) or the boosted time (path b).
    pub t_source: f64,
    pub t: f64,
    pub x: f64,
    /// Boosted velocity; NaN at the frame pole.
    pub v: f64,
    /// Boosted density of this particle is not positive here.
    pub backwards: bool,
}

/// Pointwise-boosted original-frame pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedPairA {
    pub original: TrajectoryPair,
    pub tracks: [Vec<BoostedSample>; 2],
}

/// Boosted-frame re-integration of one pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedPairB {
    /// Boosted start events of the two particles.
    pub starts: [Event; 2],
    /// Which particle (1 or 2) was advanced alone to the later start time.
    pub staged_particle: u8,
    /// Samples of the staged particle before the common start.
    pub prelude: Vec<BoostedSample>,
    /// Equal-time evolution in the boosted frame from the common start.
    pub pair: TrajectoryPair,
}

impl BoostedPairB {
    /// All (t', x') points of one particle.
    pub fn track(&self, particle: u8) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> =
            if particle == self.staged_particle { self.prelude.iter().map(|s| (s.t, s.x)).collect() } else { Vec::new() };
        v.extend(self.pair.samples.iter().map(|s| (s.t, if particle == 1 { s.x1 } else { s.x2 })));
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedBundle {
    pub boost: Boost,
    pub cfg: TwoPhotonConfig,
    pub cfg_boosted: TwoPhotonConfig,
    pub path_a: Vec<Result<BoostedPairA, String>>,
    pub path_b: Vec<Result<BoostedPairB, String>>,
}

impl BoostedBundle {
    /// Number of path-(a) samples whose boosted density is not positive.
    pub fn backwards_samples(&self) -> usize {
        self.path_a.iter().flatten().flat_map(|p| p.tracks.iter().flatten()).filter(|s| s.backwards).count()
    }

    /// Number of path-(a) segments along which t' decreases.
    pub fn decreasing_segments(&self) -> usize {
        self.path_a
            .iter()
            .flatten()
            .flat_map(|p| p.tracks.iter())
            .map(|tr| tr.windows(2).filter(|w| w[1].t < w[0].t).count())
            .sum()
    }
}

fn boost_track(b: &Boost, cfg: &TwoPhotonConfig, pair: &TrajectoryPair, particle: u8) -> Vec<BoostedSample> {
    pair.samples
        .iter()
        .map(|s| {
            let (x, v) = if particle == 1 { (s.x1, s.v1) } else { (s.x2, s.v2) };
            let e = boost_event(b, Event::new(s.t, x));
            let (c1, c2) = currents(cfg, &MultiPoint::equal_time(s.t, s.x1, s.x2));
            let c = if particle == 1 { c1 } else { c2 };
            let rho_b = b.gamma() * (c.rho - b.theta() * c.j);
            BoostedSample { t_source: s.t, t: e.t, x: e.x, v: add_velocity(b, v).unwrap_or(f64::NAN), backwards: rho_b <= 0.0 }
        })
        .collect()
}

/// Path (a): integrate in the original frame and boost every sample.
pub fn boost_pointwise(
    cfg: &TwoPhotonConfig,
    b: &Boost,
    x10: f64,
    x20: f64,
    t0: f64,
    t1: f64,
    opts: &IntegratorOpts,
) -> Result<BoostedPairA, TrajectoryError> {
    let field = KgField::new(*cfg);
    let original = integrate_pair(cfg, &field, x10, x20, t0, t1, &IntegratorOpts { keep_dense: true, ..*opts })?;
    let tracks = [boost_track(b, cfg, &original, 1), boost_track(b, cfg, &original, 2)];
    Ok(BoostedPairA { original, tracks })
}

/// Path (b): fresh integration in the boosted frame with redshifted packets.
///
/// The two boosted start events are not simultaneous. The particle with the
/// earlier start is advanced alone, with the other particle held at its start
/// event in the multitime field, until the later start time. From there the
/// pair evolves on equal t' slices up to `t1_boosted`.
pub fn integrate_boosted_frame(
    cfg: &TwoPhotonConfig,
    b: &Boost,
    x10: f64,
    x20: f64,
    t0: f64,
    t1_boosted: f64,
    opts: &IntegratorOpts,
) -> Result<BoostedPairB, TrajectoryError> {
    opts.validate()?;
    let cfg_b = redshift_packets(b, cfg)?;
    let field = KgField::new(cfg_b);
    let s1 = boost_event(b, Event::new(t0, x10));
    let s2 = boost_event(b, Event::new(t0, x20));
    let (staged, early, late) = if s1.t <= s2.t { (1u8, s1, s2) } else { (2u8, s2, s1) };
    let mut prelude = Vec::new();
    let mut x_staged = early.x;
    if late.t > early.t {
        let rhs = |t: f64, y: &[f64; 2]| {
            let moving = Event::new(t, y[0]);
            let mp = if staged == 1 { MultiPoint::new(moving, late) } else { MultiPoint::new(late, moving) };
            field.velocity(&mp).map(|(v1, v2)| [if staged == 1 { v1 } else { v2 }, 0.0])
        };
        let out = run(&rhs, early.t, [early.x, 0.0], late.t, opts);
        if let Some(e) = out.error {
            return Err(e);
        }
        let samples = out.samples;
        x_staged = samples.last().map_or(early.x, |s| s.x1);
        prelude = samples
            .iter()
            .map(|s| BoostedSample { t_source: s.t, t: s.t, x: s.x1, v: s.v1, backwards: false })
            .collect();
    }
    let (x1s, x2s) = if staged == 1 { (x_staged, late.x) } else { (late.x, x_staged) };
    if !(t1_boosted > late.t) {
        return Err(TrajectoryError::InvalidSpan { t0: late.t, t1: t1_boosted });
    }
    let pair = integrate_pair(&cfg_b, &field, x1s, x2s, late.t, t1_boosted, opts)?;
    Ok(BoostedPairB { starts: [s1, s2], staged_particle: staged, prelude, pair })
}

/// Runs both construction paths for every initial condition. Path (b) stops
/// at the earlier of the two boosted end times of path (a), so both paths
/// cover a common t' window.
pub fn integrate_boosted(
    cfg: &TwoPhotonConfig,
    b: &Boost,
    ics: &[(f64, f64)],
    t0: f64,
    t1: f64,
    opts: &IntegratorOpts,
) -> Result<BoostedBundle, TrajectoryError> {
    let cfg_b = redshift_packets(b, cfg)?;
    let work = |&(x10, x20): &(f64, f64)| {
        let a = boost_pointwise(cfg, b, x10, x20, t0, t1, opts);
        let t1b = match &a {
            Ok(p) => p.tracks.iter().map(|tr| tr.last().map_or(f64::NAN, |s| s.t)).fold(f64::INFINITY, f64::min),
            Err(_) => b.gamma() * (t1 - b.theta().abs() * (x10.abs().max(x20.abs()) + (t1 - t0))),
        };
        let bb = integrate_boosted_frame(cfg, b, x10, x20, t0, t1b, opts);
        (a.map_err(|e| e.to_string()), bb.map_err(|e| e.to_string()))
    };
    let results: Vec<_> = crate::parallel::install(|| ics.par_iter().map(work).collect());
    let (path_a, path_b) = results.into_iter().unzip();
    Ok(BoostedBundle { boost: *b, cfg: *cfg, cfg_boosted: cfg_b, path_a, path_b })
}

/// Boosted positions x' of one particle of a path-(a) pair at boosted time t'.
/// Several values are returned where the boosted curve is not monotone in t'.
pub fn boosted_positions_at(b: &Boost, pair: &BoostedPairA, particle: u8, tp: f64) -> Vec<f64> {
    let Some(steps) = &pair.original.dense else { return Vec::new() };
    let i = if particle == 1 { 0 } else { 1 };
    let tprime = |st: &DenseStep<2>, t: f64| b.gamma() * (t - b.theta() * st.eval(t)[i]) - tp;
    let mut out = Vec::new();
    const SUB: usize = 16;
    for st in steps {
        let mut ta = st.t0;
        let mut ga = tprime(st, ta);
        for k in 1..=SUB {
            let tb = st.t0 + st.h * k as f64 / SUB as f64;
            let gb = tprime(st, tb);
            let hit = if ga == 0.0 {
                Some(ta)
            } else if ga * gb < 0.0 {
                let (mut lo, mut hi, mut glo) = (ta, tb, ga);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let gm = tprime(st, mid);
                    if (gm < 0.0) == (glo < 0.0) {
                        lo = mid;
                        glo = gm;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
                        break;
                    }
                }
                Some(0.5 * (lo + hi))
            } else {
                None
            };
            if let Some(t) = hit {
                out.push(b.gamma() * (st.eval(t)[i] - b.theta() * t));
            }
            ta = tb;
            ga = gb;
        }
    }
    if let Some(last) = steps.last() {
        if tprime(last, last.t1()) == 0.0 {
            out.push(b.gamma() * (last.eval(last.t1())[i] - b.theta() * last.t1()));
        }
    }
    out
}

/// Largest spatial distance, at fixed t', between a path-(b) point and the
/// path-(a) curve of the same particle. Points whose t' is not covered by
/// path (a) are skipped. Returns (max discrepancy, points compared).
pub fn path_discrepancy(b: &Boost, a: &BoostedPairA, pb: &BoostedPairB) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for particle in [1u8, 2] {
        for (tp, xb) in pb.track(particle) {
            let xs = boosted_positions_at(b, a, particle, tp);
            if let Some(d) = xs.iter().map(|xa| (xa - xb).abs()).reduce(f64::min) {
                worst = worst.max(d);
                n += 1;
            }
        }
    }
    (worst, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TwoPhotonConfig {
        TwoPhotonConfig::figure_default()
    }

    #[test]
    fn free_flight_before_interaction() {
        let c = cfg();
        let f = KgField::new(c);
        let p = integrate_pair(&c, &f, -4.0, 4.1, -4.0, -3.0, &IntegratorOpts::default()).unwrap();
        for s in &p.samples {
            assert!((s.x1 - (-4.0 + (s.t + 4.0))).abs() < 1e-6);
            assert!((s.x2 - (4.1 - (s.t + 4.0))).abs() < 1e-6);
        }
    }

    #[test]
    fn sample_grid_is_exact() {
        let c = cfg();
        let f = KgField::new(c);
        let p = integrate_pair(&c, &f, -2.1, 1.9, -2.0, 0.0, &IntegratorOpts::default()).unwrap();
        assert_eq!(p.samples.len(), 201);
        assert_eq!(p.samples[0].t, -2.0);
        assert_eq!(p.samples[0].x1, -2.1);
        assert_eq!(p.t_end(), 0.0);
        assert!(p.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = cfg();
        let f = KgField::new(c);
        let o = IntegratorOpts::default();
        assert!(matches!(integrate_pair(&c, &f, 0.0, 1.0, 1.0, 0.0, &o), Err(TrajectoryError::InvalidSpan { .. })));
        assert!(matches!(integrate_pair(&c, &f, 1.0, 1.0, 0.0, 1.0, &o), Err(TrajectoryError::BadStart { .. })));
        assert!(matches!(integrate_pair(&c, &f, -30.0, 30.0, 0.0, 1.0, &o), Err(TrajectoryError::StartNode(_))));
        assert!(sample_initial(&c, -2.0, 0, 1).is_err());
    }

    #[test]
    fn sampler_is_deterministic_and_ordered() {
        let c = cfg();
        let a = sample_initial(&c, -2.0, 500, 7).unwrap();
        let b = sample_initial(&c, -2.0, 500, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|(x1, x2)| x1 < x2));
        let m1 = a.iter().map(|p| p.0).sum::<f64>() / 500.0;
        let m2 = a.iter().map(|p| p.1).sum::<f64>() / 500.0;
        assert!((m1 + 2.0).abs() < 0.1 && (m2 - 2.0).abs() < 0.1, "{m1} {m2}");
        assert_ne!(sample_initial(&c, -2.0, 1, 8).unwrap(), sample_initial(&c, -2.0, 1, 9).unwrap());
    }

    #[test]
    fn snapshot_interpolation() {
        let c = cfg();
        let f = KgField::new(c);
        let o = IntegratorOpts { sample_dt: 0.05, ..Default::default() };
        let p = integrate_pair(&c, &f, -2.05, 1.95, -2.0, -1.0, &o).unwrap();
        let fine = integrate_pair(&c, &f, -2.05, 1.95, -2.0, -1.0, &IntegratorOpts { keep_dense: true, ..o }).unwrap();
        let (a, b) = p.position_at(-1.52).unwrap();
        let (ea, eb) = fine.position_at(-1.52).unwrap();
        assert!((a - ea).abs() < 1e-6 && (b - eb).abs() < 1e-6);
        assert!(matches!(p.position_at(-0.5), Err(TrajectoryError::OutOfSpan { .. })));
        assert_eq!(p.position_at(-2.0).unwrap(), (-2.05, 1.95));
    }

    #[test]
    fn terminated_pair_keeps_partial_path() {
        // reaches a rho_1 = 0 edge with j_1 != 0 just before t = 0
        let c = cfg();
        let f = KgField::new(c);
        let ics = [(-0.7270422701374939, 2.822878483847773), (-2.1, 1.9)];
        let o = IntegratorOpts { sample_dt: 0.5, ..Default::default() };
        let ens = integrate_ensemble(&c, &f, &ics, -2.0, 0.0, &o, None);
        assert_eq!(ens.indices, vec![1]);
        let part = ens.failures[0].partial.as_ref().unwrap();
        assert!(part.t_end() > -0.1 && part.t_end() < 0.0, "{}", part.t_end());
        let s = snapshot_alive(&ens, -0.5);
        assert_eq!(s.ids, vec![0, 1]);
        assert!(s.missing.is_empty());
        assert_eq!(snapshot_alive(&ens, 0.0).missing, vec![0]);
    }

    #[test]
    fn boosted_identity_matches_original() {
        let c = cfg();
        let b = Boost::identity();
        let o = IntegratorOpts::default();
        let a = boost_pointwise(&c, &b, -2.1, 1.8, -2.0, 0.0, &o).unwrap();
        let pb = integrate_boosted_frame(&c, &b, -2.1, 1.8, -2.0, 0.0, &o).unwrap();
        let (d, n) = path_discrepancy(&b, &a, &pb);
        assert!(n > 300);
        assert!(d < 1e-7, "{d:e}");
    }
}
