use proptest::prelude::*;

use opo_comb::model::{steady_state, threshold_pump, OpoParams};

fn params() -> impl Strategy<Value = OpoParams> {
    (
        0.05f64..20.0,
        1.0f64..50.0,
        1usize..10,
        0.1f64..10.0,
        0.1f64..5.0,
    )
        .prop_map(|(kappa, sigma, n, k_a, chi)| {
            OpoParams::new(kappa, sigma, n)
                .unwrap()
                .with_rates(k_a, chi)
                .unwrap()
        })
}

fn profiled() -> impl Strategy<Value = OpoParams> {
    (
        0.05f64..20.0,
        1.0f64..50.0,
        prop::collection::vec(0.0f64..3.0, 1..8),
    )
        .prop_filter("one positive weight", |(_, _, p)| {
            p.iter().any(|&w| w > 1e-3)
        })
        .prop_map(|(kappa, sigma, profile)| {
            OpoParams::new(kappa, sigma, profile.len())
                .unwrap()
                .with_profile(profile)
                .unwrap()
        })
}

proptest! {
    #[test]
    fn threshold_relation_holds(p in params()) {
        let ss = steady_state(&p).unwrap();
        let lhs = 4.0 * p.chi * p.chi * ss.alpha.iter().map(|a| a * a).sum::<f64>();
        let rhs = p.k_a * p.k_p * (p.sigma.sqrt() - 1.0);
        prop_assert!((lhs - rhs).abs() < 1e-12 * p.k_a * p.k_p);
        prop_assert_eq!(ss.pump_mean, p.k_a / (2.0 * p.chi));
        prop_assert!(ss.alpha.iter().all(|&a| a >= 0.0));
    }

    #[test]
    fn sigma_recovered_from_drive(p in params()) {
        let ss = steady_state(&p).unwrap();
        let ratio = (ss.pump_in / threshold_pump(&p).unwrap()).powi(2);
        prop_assert!((ratio - p.sigma).abs() < 1e-12 * p.sigma);
    }

    #[test]
    fn common_rate_scaling_keeps_sigma(p in params(), c in 0.01f64..100.0) {
        // the threshold drive scales as k_a sqrt(k_p) / chi
        let ss = steady_state(&p).unwrap();
        let mut scaled = p.clone();
        scaled.k_a *= c;
        scaled.k_p *= c;
        let drive = c.powf(1.5) * ss.pump_in;
        let sigma = (drive / threshold_pump(&scaled).unwrap()).powi(2);
        prop_assert!((sigma - p.sigma).abs() < 1e-12 * p.sigma);

        scaled.chi *= c;
        let drive = c.sqrt() * ss.pump_in;
        let sigma = (drive / threshold_pump(&scaled).unwrap()).powi(2);
        prop_assert!((sigma - p.sigma).abs() < 1e-12 * p.sigma);
    }

    #[test]
    fn profile_ratios_are_kept(p in profiled()) {
        let ss = steady_state(&p).unwrap();
        let (imax, wmax) = p.amplitude_profile.iter().copied().enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        for (a, w) in ss.alpha.iter().zip(&p.amplitude_profile) {
            prop_assert!((a * wmax - ss.alpha[imax] * w).abs() <= 1e-12 * ss.alpha[imax] * wmax + 1e-300);
        }
        prop_assert!(ss.threshold_residual(&p) < 1e-12);
    }

    #[test]
    fn threshold_means_no_signal(kappa in 0.05f64..20.0, n in 1usize..10) {
        let ss = steady_state(&OpoParams::new(kappa, 1.0, n).unwrap()).unwrap();
        prop_assert!(ss.alpha.iter().all(|&a| a == 0.0));
    }
}

#[test]
fn below_threshold_and_bad_rates_are_rejected() {
    assert!(OpoParams::new(1.0, 0.99, 2).is_err());
    assert!(OpoParams::new(0.0, 2.0, 2).is_err());
    assert!(OpoParams::new(1.0, 2.0, 0).is_err());
    assert!(OpoParams::new(1.0, 2.0, 2)
        .unwrap()
        .with_profile(vec![0.0, 0.0])
        .is_err());
    assert!(OpoParams::new(1.0, 2.0, 2)
        .unwrap()
        .with_profile(vec![1.0])
        .is_err());
}
