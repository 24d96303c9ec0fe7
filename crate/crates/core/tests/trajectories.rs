use bohm_sim::kg::KgField;
use bohm_sim::stats::chi_square;
use bohm_sim::trajectories::{integrate_ensemble, integrate_pair, sample_initial, snapshot, IntegratorOpts};
use bohm_sim::verification::{transport_bins, transport_probabilities};
use bohm_sim::weak_value::WeakValueField;
use bohm_sim::TwoPhotonConfig;

fn cfg() -> TwoPhotonConfig {
    TwoPhotonConfig::figure_default()
}

#[test]
fn symmetric_start_stays_mirrored() {
    let c = cfg();
    let p = integrate_pair(&c, &KgField::new(c), -2.0, 2.0, -2.0, 2.0, &IntegratorOpts::default()).unwrap();
    assert!(p.samples.iter().all(|s| (s.x1 + s.x2).abs() < 1e-7));
    assert!(p.min_separation() > 0.0);
}

#[test]
fn weak_value_field_gives_same_paths() {
    let c = cfg();
    let o = IntegratorOpts::default();
    let a = integrate_pair(&c, &KgField::new(c), -2.1, 1.7, -2.0, 1.0, &o).unwrap();
    let b = integrate_pair(&c, &WeakValueField::new(c), -2.1, 1.7, -2.0, 1.0, &o).unwrap();
    for (s, r) in a.samples.iter().zip(&b.samples) {
        assert!((s.x1 - r.x1).abs() < 1e-8 && (s.x2 - r.x2).abs() < 1e-8);
    }
}

#[test]
fn tolerance_halving_converges() {
    let c = cfg();
    let f = KgField::new(c);
    for (x1, x2) in [(-2.1, 1.7), (-1.8, 2.3), (-2.4, 2.05)] {
        let a = integrate_pair(&c, &f, x1, x2, -2.0, 2.0, &IntegratorOpts { tol: 1e-9, ..Default::default() }).unwrap();
        let b = integrate_pair(&c, &f, x1, x2, -2.0, 2.0, &IntegratorOpts { tol: 5e-10, ..Default::default() }).unwrap();
        let (ea, eb) = (a.samples.last().unwrap(), b.samples.last().unwrap());
        let d = (ea.x1 - eb.x1).abs().max((ea.x2 - eb.x2).abs());
        assert!(d < 1e-8, "({x1}, {x2}): {d:e}");
    }
}

#[test]
fn ensembles_are_bit_identical() {
    let c = cfg();
    let f = KgField::new(c);
    let o = IntegratorOpts { sample_dt: 0.1, ..Default::default() };
    let ics = sample_initial(&c, -2.0, 64, 11).unwrap();
    let a = integrate_ensemble(&c, &f, &ics, -2.0, -1.0, &o, Some(11));
    let b = integrate_ensemble(&c, &f, &ics, -2.0, -1.0, &o, Some(11));
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(snapshot(&a, -2.0).unwrap(), ics);
}

#[test]
fn sampler_marginals_fit() {
    let c = cfg();
    let t = -2.0;
    let pts = sample_initial(&c, t, 100_000, 42).unwrap();
    let bins = transport_bins(&c, t, 40, 5.0);
    let prob = transport_probabilities(&c, t, &bins);
    let (counts, out) = bins.histogram(pts.iter().map(|&(a, b)| (a + b, b - a)));
    let sum = chi_square(&bins.marginal_counts_a(&counts), &bins.marginal_a(&prob), out);
    let diff = chi_square(&bins.marginal_counts_b(&counts), &bins.marginal_b(&prob), out);
    assert!(sum.passes(0.01), "{sum:?}");
    assert!(diff.passes(0.01), "{diff:?}");
    let m1 = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let m2 = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    assert!((m1 + 2.0).abs() < 0.01 && (m2 - 2.0).abs() < 0.01);
}
