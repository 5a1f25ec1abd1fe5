use proptest::prelude::*;

use opo_comb::model::{steady_state, OpoParams, SteadyState};
use opo_comb::spectra::{
    transfer_closed_form, transfer_numeric, witness_variance, witness_variance_dc,
};
use opo_comb::{Channel, Error, Witness};

fn setup(kappa: f64, sigma: f64, n: usize) -> (OpoParams, SteadyState) {
    let p = OpoParams::new(kappa, sigma, n).unwrap();
    let ss = steady_state(&p).unwrap();
    (p, ss)
}

fn dc(w: &str, kappa: f64, sigma: f64, n: usize) -> f64 {
    let (p, ss) = setup(kappa, sigma, n);
    witness_variance_dc(&Witness::parse(w).unwrap(), &p, &ss).unwrap()
}

/// Witness with random weights on every Q+/Q-/P+/Qp/Pp channel.
fn random_witness(n: usize, weights: &[f64]) -> Witness {
    let chans: Vec<Channel> = Channel::all(n)
        .filter(|c| !matches!(c, Channel::PMinus(_)))
        .collect();
    Witness::new("random", chans.into_iter().zip(weights.iter().copied())).unwrap()
}

fn permute(w: &Witness, perm: &[usize]) -> Witness {
    let map = |c: Channel| match c {
        Channel::QPlus(i) => Channel::QPlus(perm[i]),
        Channel::QMinus(i) => Channel::QMinus(perm[i]),
        Channel::PPlus(i) => Channel::PPlus(perm[i]),
        Channel::PMinus(i) => Channel::PMinus(perm[i]),
        other => other,
    };
    Witness::new("permuted", w.terms().iter().map(|&(c, x)| (map(c), x))).unwrap()
}

proptest! {
    #[test]
    fn closed_form_matches_linear_solve(
        n in 1usize..=4,
        log_kappa in -1.0f64..1.0,
        sigma in 1.0f64..10.0,
        log_omega in -2.0f64..2.0,
    ) {
        let (p, ss) = setup(10f64.powf(log_kappa), sigma, n);
        let omega = 10f64.powf(log_omega);
        let a = transfer_closed_form(&p, &ss, omega).unwrap();
        let b = transfer_numeric(&p, &ss, omega).unwrap();
        prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-9);
    }

    #[test]
    fn closed_form_matches_linear_solve_for_any_profile(
        profile in prop::collection::vec(0.05f64..3.0, 1..5),
        sigma in 1.0f64..10.0,
        omega in 0.01f64..10.0,
    ) {
        let p = OpoParams::new(1.3, sigma, profile.len()).unwrap().with_profile(profile).unwrap();
        let ss = steady_state(&p).unwrap();
        let a = transfer_closed_form(&p, &ss, omega).unwrap();
        let b = transfer_numeric(&p, &ss, omega).unwrap();
        prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-9);
    }

    #[test]
    fn epr_variance_law(n in 1usize..=8, sigma in 1.0f64..10.0, kappa in prop::sample::select(vec![0.5, 1.0, 2.0])) {
        let (p, ss) = setup(kappa, sigma, n);
        let target = 2.0 * (sigma - 1.0) / (n as f64 * sigma);
        for i in 0..n {
            let v = witness_variance_dc(&Witness::single(Channel::PPlus(i)), &p, &ss).unwrap();
            prop_assert!((v - target).abs() < 1e-6);
        }
    }

    #[test]
    fn pair_relabelling_symmetry(
        n in 2usize..=4,
        sigma in 1.05f64..6.0,
        weights in prop::collection::vec(-2.0f64..2.0, 18),
        seed in any::<u64>(),
    ) {
        let (p, ss) = setup(1.0, sigma, n);
        let w = random_witness(n, &weights);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left((seed % n as u64) as usize);
        if seed & 1 == 1 {
            perm.swap(0, n - 1);
        }
        let w2 = permute(&w, &perm);
        let t = transfer_closed_form(&p, &ss, 0.37).unwrap();
        let (a, b) = (witness_variance(&w, &t).unwrap(), witness_variance(&w2, &t).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        let (a, b) = (witness_variance_dc(&w, &p, &ss).unwrap(), witness_variance_dc(&w2, &p, &ss).unwrap());
        prop_assert!(a == b || (a - b).abs() <= 1e-8 * a.max(1.0));
    }

    #[test]
    fn amplitude_sum_with_pump_weight_is_finite(n in 2usize..=8, sigma in 1.05f64..10.0, x in 0.01f64..100.0) {
        let (p, ss) = setup(1.0, sigma, n);
        let mut terms: Vec<(Channel, f64)> = (0..n).map(|i| (Channel::QPlus(i), 1.0)).collect();
        terms.push((Channel::PumpQ, 2.0 * n as f64 / x));
        let v = witness_variance_dc(&Witness::new("u1", terms).unwrap(), &p, &ss).unwrap();
        prop_assert!(v.is_finite());
        let lone = witness_variance_dc(&Witness::single(Channel::QPlus(0)), &p, &ss).unwrap();
        prop_assert_eq!(lone, f64::INFINITY);
    }
}

#[test]
fn noise_normalisation_is_locked() {
    // Summing |T|^2 with unit noise on every channel gives a different law;
    // only power 2 on the sum/difference channels reproduces 2(sigma-1)/(n sigma).
    for (n, sigma) in [(1, 4.0), (2, 2.0), (3, 9.0)] {
        let (p, ss) = setup(1.0, sigma, n);
        let t = transfer_numeric(&p, &ss, 0.0).unwrap();
        let row = Channel::PPlus(0);
        let unit: f64 = Channel::all(n)
            .map(|c| t.coefficient(row, c).norm_sqr())
            .sum();
        let rs = f64::sqrt(sigma);
        assert!((unit - (rs - 1.0) * (rs + 3.0) / (n as f64 * sigma)).abs() < 1e-12);
        let v = witness_variance(&Witness::single(row), &t).unwrap();
        assert!((v - 2.0 * (sigma - 1.0) / (n as f64 * sigma)).abs() < 1e-12);
        assert!((witness_variance_dc(&Witness::single(row), &p, &ss).unwrap() - v).abs() < 1e-9);
    }
}

#[test]
fn epr_value_single_pair() {
    assert!((dc("P+1", 1.0, 4.0, 1) - 1.5).abs() < 1e-9);
}

#[test]
fn antisymmetric_variance_at_two_k() {
    let (p, ss) = setup(1.0, 3.0, 2);
    let t = transfer_closed_form(&p, &ss, 2.0).unwrap();
    let v = witness_variance(&Witness::single(Channel::QMinus(0)), &t).unwrap();
    assert!((v - 1.0).abs() < 1e-14);
}

#[test]
fn phase_sums_of_two_pairs_cancel() {
    for sigma in [1.2, 2.0, 5.0] {
        assert!(dc("P+2,-1*P+1", 1.0, sigma, 2).abs() < 1e-9);
        assert!(dc("P+2,-1*P+1", 1.0, sigma, 4).abs() < 1e-9);
    }
}

#[test]
fn amplitude_limits() {
    assert!(dc("Q-1", 2.0, 3.0, 3).abs() < 1e-9);
    assert_eq!(dc("Q+1", 2.0, 3.0, 3), f64::INFINITY);
    assert_eq!(dc("Q+1,-1*Q+2", 1.0, 3.0, 2), f64::INFINITY);
}

#[test]
fn phase_witness_below_shot_noise() {
    assert!(dc("P+1,P+2,P+3,-1.18*Pp", 1.0, 1.18, 3) < 1.0);
}

#[test]
fn threshold_limit() {
    for n in 1..=3 {
        let (p, ss) = setup(1.0, 1.0, n);
        for omega in [0.0, 0.3, 3.0] {
            let t = transfer_numeric(&p, &ss, omega).unwrap();
            for ch in [Channel::PumpQ, Channel::PumpP] {
                assert!((t.coefficient(ch, ch).norm() - 1.0).abs() < 1e-14);
                assert!((witness_variance(&Witness::single(ch), &t).unwrap() - 1.0).abs() < 1e-14);
            }
        }
        assert!(dc("P+1", 1.0, 1.0, n).abs() < 1e-12);
        assert!(dc("Q-1", 1.0, 1.0, n).abs() < 1e-12);
        assert_eq!(dc("Q+1", 1.0, 1.0, n), f64::INFINITY);
    }
}

#[test]
fn rejected_inputs() {
    let (p, ss) = setup(1.0, 2.0, 2);
    assert_eq!(
        transfer_closed_form(&p, &ss, 0.0).unwrap_err(),
        Error::ZeroFrequency
    );
    assert!(transfer_numeric(&p, &ss, -1.0).is_err());
    let t0 = transfer_numeric(&p, &ss, 0.0).unwrap();
    assert!(matches!(
        witness_variance(&Witness::single(Channel::PMinus(0)), &t0),
        Err(Error::UndefinedChannel { .. })
    ));
    assert!(matches!(
        witness_variance_dc(&Witness::single(Channel::PMinus(1)), &p, &ss),
        Err(Error::InvalidWitness(_))
    ));
    let (p3, ss3) = setup(1.0, 2.0, 3);
    assert!(matches!(
        witness_variance_dc(&Witness::single(Channel::PPlus(0)), &p, &ss3),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(witness_variance_dc(&Witness::single(Channel::PPlus(2)), &p, &ss).is_err());
    assert!(witness_variance_dc(&Witness::single(Channel::PPlus(2)), &p3, &ss3).is_ok());
}
