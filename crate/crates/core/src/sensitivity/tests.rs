use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn vcov(var_target: f64, var_delta: f64, cov: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[var_target, cov, cov, var_delta])
}

/// Target 1.0, delta_0 0.2, se of the difference 0.1, Delta 0.1, horizon 2.
fn fixture() -> RobustInputs {
    RobustInputs::new(1.0, 0.2, 0.1, Some(&vcov(0.0125, 0.0025, 0.0025)), 0.05, 2.0).unwrap()
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[test]
fn fixture_intervals() {
    let inp = fixture();
    assert!((inp.se_diff - 0.1).abs() < 1e-12);
    let cs0 = robust_cs(&inp, 0.0).unwrap();
    assert_eq!((round3(cs0.lower), round3(cs0.upper)), (0.604, 0.996));
    let cs5 = robust_cs(&inp, 0.5).unwrap();
    assert_eq!((round3(cs5.lower), round3(cs5.upper)), (0.504, 1.096));
    match breakdown_value(&inp) {
        Breakdown::Value { mbar, bisection, .. } => {
            assert_eq!(round3(mbar), 3.02);
            // closed form against an independent evaluation
            let want = (0.8 - critical_value(0.05) * 0.1) / (0.1 * 2.0);
            assert!((mbar - want).abs() < 1e-12);
            assert!((bisection - mbar).abs() < BISECTION_TOL);
        }
        Breakdown::Unbounded => panic!("expected a finite breakdown value"),
    }
}

#[test]
fn fixture_widths_along_grid() {
    let curve = sensitivity_curve(&fixture(), &[0.0, 0.5, 1.0]).unwrap();
    let widths: Vec<f64> = curve.iter().map(|c| round3(c.width())).collect();
    assert_eq!(widths, vec![0.392, 0.592, 0.792]);
    assert_eq!(sensitivity_curve(&fixture(), &[0.7]).unwrap().len(), 1);
    assert!(sensitivity_curve(&fixture(), &[1.0, 0.5]).is_err());
    assert!(robust_cs(&fixture(), -0.1).is_err());
}

#[test]
fn max_violation_examples() {
    assert_eq!(max_placebo_violation(&[-2, -1, 0], &[0.0, 0.0, 0.0]).unwrap(), 0.0);
    let d = max_placebo_violation(&[-2, -1, 0], &[0.1, -0.05, 0.2]).unwrap();
    assert!((d - 0.25).abs() < 1e-15);
    // order of the inputs does not matter
    let d2 = max_placebo_violation(&[0, -2, -1], &[0.2, 0.1, -0.05]).unwrap();
    assert_eq!(d, d2);
    assert!(max_placebo_violation(&[0], &[0.1]).is_err());
    assert!(max_placebo_violation(&[-3, 0], &[0.1, 0.2]).is_err());
}

#[test]
fn zero_violation_gives_flat_curve() {
    let inp = RobustInputs::new(1.0, 0.0, 0.0, Some(&vcov(0.04, 0.0, 0.0)), 0.05, 3.0).unwrap();
    let curve = sensitivity_curve(&inp, &[0.0, 0.5, 1.0, 10.0]).unwrap();
    let z = critical_value(0.05);
    for c in &curve {
        assert!((c.lower - (1.0 - z * 0.2)).abs() < 1e-12);
        assert!((c.upper - (1.0 + z * 0.2)).abs() < 1e-12);
    }
    assert_eq!(breakdown_value(&inp), Breakdown::Unbounded);
}

#[test]
fn breakdown_zero_when_set_contains_zero() {
    let inp = RobustInputs::new(0.1, 0.0, 0.1, Some(&vcov(0.01, 0.0, 0.0)), 0.05, 1.0).unwrap();
    match breakdown_value(&inp) {
        Breakdown::Value { mbar, bisection, .. } => {
            assert_eq!(mbar, 0.0);
            assert_eq!(bisection, 0.0);
        }
        Breakdown::Unbounded => panic!(),
    }
}

#[test]
fn debiased_interval_at_zero() {
    // M = 0 is the plain interval of target - delta_0
    let v = vcov(0.09, 0.04, 0.02);
    let inp = RobustInputs::new(2.0, 0.5, 0.3, Some(&v), 0.1, 1.5).unwrap();
    let se = (0.09f64 + 0.04 - 2.0 * 0.02).sqrt();
    let z = critical_value(0.1);
    let cs = robust_cs(&inp, 0.0).unwrap();
    assert!((cs.lower - (1.5 - z * se)).abs() < 1e-12);
    assert!((cs.upper - (1.5 + z * se)).abs() < 1e-12);
}

#[test]
fn missing_joint_covariance_is_an_error() {
    assert!(RobustInputs::new(1.0, 0.0, 0.1, None, 0.05, 1.0).is_err());
    assert!(RobustInputs::new(1.0, 0.0, 0.1, Some(&DMatrix::identity(3, 3)), 0.05, 1.0).is_err());
}

#[test]
fn mean_horizon_weights_cells() {
    assert!((mean_horizon(&[(1, 10), (2, 10), (3, 20)]).unwrap() - 2.25).abs() < 1e-15);
    assert_eq!(mean_horizon(&[(-1, 5), (2, 5)]).unwrap(), 2.0);
    assert!(mean_horizon(&[(0, 5)]).is_err());
}

#[test]
fn nested_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let a: f64 = rng.random_range(0.01..1.0);
        let b: f64 = rng.random_range(0.01..1.0);
        let c = rng.random_range(-0.9..0.9) * (a * b).sqrt();
        let inp = RobustInputs::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.0..1.0),
            Some(&vcov(a, b, c)),
            rng.random_range(0.01..0.2),
            rng.random_range(1.0..6.0),
        )
        .unwrap();
        let mut grid: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..4.0)).collect();
        grid.sort_by(f64::total_cmp);
        let curve = sensitivity_curve(&inp, &grid).unwrap();
        for w in curve.windows(2) {
            assert!(w[1].lower <= w[0].lower && w[0].upper <= w[1].upper);
        }
        if let Breakdown::Value { mbar, bisection, .. } = breakdown_value(&inp) {
            assert!((mbar - bisection).abs() < BISECTION_TOL);
            assert!(robust_cs(&inp, mbar + 1e-9).unwrap().contains(0.0));
            if mbar > 1e-6 {
                assert!(!robust_cs(&inp, mbar - 1e-6).unwrap().contains(0.0));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn breakdown_is_scale_invariant(
        target in -3.0f64..3.0,
        delta0 in -1.0f64..1.0,
        viol in 0.01f64..1.0,
        var in 0.001f64..0.5,
        scale in 0.01f64..100.0,
    ) {
        let a = RobustInputs::new(target, delta0, viol, Some(&vcov(var, var / 2.0, var / 4.0)), 0.05, 2.0).unwrap();
        let s2 = scale * scale;
        let b = RobustInputs::new(scale * target, scale * delta0, scale * viol, Some(&vcov(s2 * var, s2 * var / 2.0, s2 * var / 4.0)), 0.05, 2.0).unwrap();
        match (breakdown_value(&a), breakdown_value(&b)) {
            (Breakdown::Value { mbar: x, .. }, Breakdown::Value { mbar: y, .. }) => {
                prop_assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
            }
            (x, y) => prop_assert_eq!(x, y),
        }
    }
}
