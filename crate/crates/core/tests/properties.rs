use approx::assert_relative_eq;
use proptest::prelude::*;

use bohm_sim::kg::{current_1, current_2, currents, psi_kg, velocity_kg};
use bohm_sim::lorentz::{add_velocity, boost_current, boost_event, redshift_packets};
use bohm_sim::metric::{coordinate_velocity, shift_from_current, Branch};
use bohm_sim::weak_value::{velocity_m, EqualTimePoint};
use bohm_sim::{Boost, CurrentDensity, Event, MultiPoint, TwoPhotonConfig};

fn config() -> impl Strategy<Value = TwoPhotonConfig> {
    (10.0..40.0f64, 0.5..2.0f64, 10.0..40.0f64, 0.5..2.0f64)
        .prop_map(|(kr, sr, kl, sl)| TwoPhotonConfig::from_parameters(kr, sr, kl, sl).unwrap())
}

proptest! {
    #[test]
    fn exchange_symmetry(cfg in config(), t1 in -2.0..2.0f64, x1 in -3.0..3.0f64, t2 in -2.0..2.0f64, x2 in -3.0..3.0f64) {
        let mp = MultiPoint::new(Event::new(t1, x1), Event::new(t2, x2));
        let a = psi_kg(&cfg, &mp);
        let b = psi_kg(&cfg, &mp.swap());
        prop_assert!((a - b).norm() <= 1e-14 * (1.0 + a.norm()));
        // particle 2 at (X1, X2) is particle 1 at the swapped point
        let c2 = current_2(&cfg, &mp);
        let c1 = current_1(&cfg, &mp.swap());
        let scale = cfg.peak_density();
        prop_assert!((c2.rho - c1.rho).abs() <= 1e-12 * scale);
        prop_assert!((c2.j - c1.j).abs() <= 1e-12 * scale);
    }

    #[test]
    fn equivalence_on_timeslices(cfg in config(), t in -2.0..2.0f64, x1 in -3.0..3.0f64, x2 in -3.0..3.0f64) {
        let p = EqualTimePoint::new(t, x1, x2);
        if let (Ok((m1, m2)), Ok((k1, k2))) = (velocity_m(&cfg, &p), velocity_kg(&cfg, &p.multipoint())) {
            let (c1, c2) = currents(&cfg, &p.multipoint());
            // velocity error grows as the density approaches a node
            let s1 = 1e-13 * cfg.peak_density() / c1.rho.abs();
            let s2 = 1e-13 * cfg.peak_density() / c2.rho.abs();
            prop_assert!((m1 - k1).abs() <= s1 * (1.0 + k1.abs()), "{m1} {k1}");
            prop_assert!((m2 - k2).abs() <= s2 * (1.0 + k2.abs()), "{m2} {k2}");
        }
    }

    #[test]
    fn boost_preserves_interval(theta in -0.95..0.95f64, t in -10.0..10.0f64, x in -10.0..10.0f64) {
        let b = Boost::new(theta).unwrap();
        let e = Event::new(t, x);
        let f = boost_event(&b, e);
        prop_assert!((f.interval() - e.interval()).abs() <= 1e-12 * (t * t + x * x) * b.gamma() * b.gamma());
    }

    #[test]
    fn boost_composition(a in -0.9..0.9f64, c in -0.9..0.9f64) {
        let (ba, bc) = (Boost::new(a).unwrap(), Boost::new(c).unwrap());
        let comp = ba.compose(&bc);
        prop_assert!((comp.rapidity() - ba.rapidity() - bc.rapidity()).abs() < 1e-12);
        prop_assert!((ba.compose(&ba.inverse()).theta()).abs() < 1e-14);
        let e = Event::new(0.3, -1.7);
        let two = boost_event(&ba, boost_event(&bc, e));
        let one = boost_event(&comp, e);
        prop_assert!((two.t - one.t).abs() < 1e-12 && (two.x - one.x).abs() < 1e-12);
    }

    #[test]
    fn velocity_addition_matches_current_boost(theta in -0.9..0.9f64, rho in 0.1..10.0f64, v in -5.0..5.0f64) {
        let b = Boost::new(theta).unwrap();
        let cd = boost_current(&b, CurrentDensity::new(rho, rho * v));
        if let Ok(w) = add_velocity(&b, v) {
            if cd.rho.abs() > 1e-6 * rho {
                prop_assert!((cd.j / cd.rho - w).abs() <= 1e-12 * (1.0 + w.abs()) * rho / cd.rho.abs());
            }
        }
    }

    #[test]
    fn redshift_inverse(cfg in config(), theta in -0.9..0.9f64) {
        let b = Boost::new(theta).unwrap();
        let back = redshift_packets(&b.inverse(), &redshift_packets(&b, &cfg).unwrap()).unwrap();
        assert_relative_eq!(back.right().center(), cfg.right().center(), max_relative = 1e-14);
        assert_relative_eq!(back.left().width(), cfg.left().width(), max_relative = 1e-14);
        prop_assert!((redshift_packets(&b, &cfg).unwrap().right().q() - cfg.right().q()).abs() < 1e-12 * cfg.right().q());
    }

    #[test]
    fn metric_round_trip(rho in prop_oneof![1e-6..1e3f64, -1e3..-1e-6f64], j in -1e3..1e3f64) {
        let v = j / rho;
        let m = shift_from_current(CurrentDensity::new(rho, j), 1e-7).unwrap();
        prop_assert!((coordinate_velocity(&m, Branch::co_moving(v)) - v).abs() <= 1e-14 * v.abs().max(1.0));
        for b in [Branch::Plus, Branch::Minus] {
            let w = coordinate_velocity(&m, b);
            prop_assert!(m.line_element(1.0, w).abs() <= 1e-12 * (1.0 + m.vs * m.vs));
        }
    }
}
