use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;

fn grid_problem(n: usize, t: usize, y: &[f64], xs: &[(&str, Vec<f64>)], keep: &[bool]) -> FeProblem {
    let mut p = FeProblem { n_units: n, n_times: t, ..Default::default() };
    for u in 0..n {
        for s in 0..t {
            let k = u * t + s;
            if !keep[k] {
                continue;
            }
            p.unit.push(u);
            p.time.push(s);
            p.response.push(y[k]);
            p.cluster.push(u);
            p.cell.push(k);
        }
    }
    for (name, x) in xs {
        let v = p.cell.iter().map(|&k| x[k]).collect();
        p.regressors.push((name.to_string(), v));
    }
    p
}

/// Dummy-variable OLS on the same observations, solved densely.
fn dense_ols(p: &FeProblem) -> Vec<f64> {
    let n = p.n_obs();
    let kx = p.regressors.len();
    let cols = kx + p.n_units + p.n_times - 1;
    let x = DMatrix::from_fn(n, cols, |i, j| {
        if j < kx {
            p.regressors[j].1[i]
        } else if j < kx + p.n_units {
            (p.unit[i] == j - kx) as u8 as f64
        } else {
            (p.time[i] == j - kx - p.n_units + 1) as u8 as f64
        }
    });
    let y = DVector::from_column_slice(&p.response);
    let svd = (x.transpose() * &x).svd(true, true);
    let beta = svd.solve(&(x.transpose() * y), 1e-12).unwrap();
    beta.iter().take(kx).copied().collect()
}

#[test]
fn saturated_two_by_two_has_zero_residuals() {
    // y = alpha_i + xi_t exactly
    let y = [1.0, 3.0, 2.0, 4.0];
    let p = grid_problem(2, 2, &y, &[], &[true; 4]);
    let fit = fit_fe(&p, &FeOptions::default()).unwrap();
    assert!(fit.residuals.iter().all(|e| e.abs() < 1e-12));
    for (k, &yk) in y.iter().enumerate() {
        let pred = fit.predict(k / 2, k % 2, None, &[]).unwrap();
        assert!((pred - yk).abs() < 1e-12);
    }
    let ue: Vec<f64> = fit.unit_effects.iter().map(|x| x.unwrap()).collect();
    assert!((ue[0] + ue[1]).abs() < 1e-12);
}

#[test]
fn matches_dense_dummy_ols() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n, t) = (6, 5);
    let y: Vec<f64> = (0..n * t).map(|_| rng.random::<f64>() * 4.0).collect();
    let x: Vec<f64> = (0..n * t).map(|_| rng.random::<f64>()).collect();
    for keep in [vec![true; n * t], (0..n * t).map(|k| k % 7 != 3).collect::<Vec<_>>()] {
        let p = grid_problem(n, t, &y, &[("x", x.clone())], &keep);
        let fit = fit_fe(&p, &FeOptions::default()).unwrap();
        let oracle = dense_ols(&p);
        assert!((fit.coefficient("x").unwrap() - oracle[0]).abs() < 1e-8);
        // residuals orthogonal to regressor and to every unit / time indicator
        let e = &fit.residuals;
        assert!(e.iter().zip(&p.regressors[0].1).map(|(a, b)| a * b).sum::<f64>().abs() < 1e-8);
        for u in 0..n {
            let s: f64 = (0..p.n_obs()).filter(|&i| p.unit[i] == u).map(|i| e[i]).sum();
            assert!(s.abs() < 1e-8);
        }
        for s in 0..t {
            let r: f64 = (0..p.n_obs()).filter(|&i| p.time[i] == s).map(|i| e[i]).sum();
            assert!(r.abs() < 1e-8);
        }
    }
}

#[test]
fn within_unit_constant_regressor_is_dropped() {
    let (n, t) = (4, 3);
    let y: Vec<f64> = (0..n * t).map(|k| (k * k % 5) as f64).collect();
    let z: Vec<f64> = (0..n * t).map(|k| (k / t) as f64 * 2.0 + 1.0).collect();
    let x: Vec<f64> = (0..n * t).map(|k| ((k * 7) % 11) as f64).collect();
    let p = grid_problem(n, t, &y, &[("z", z), ("x", x)], &[true; 12]);
    let fit = fit_fe(&p, &FeOptions::default()).unwrap();
    assert_eq!(fit.dropped, vec!["z".to_string()]);
    assert!(fit.coefficient("x").is_some());
}

#[test]
fn balanced_equals_two_pass_within() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, t) = (5, 4);
    let y: Vec<f64> = (0..n * t).map(|_| rng.random::<f64>()).collect();
    let p = grid_problem(n, t, &y, &[], &[true; 20]);
    let dm = demean_column(&p, &y, &FeOptions::default()).unwrap();
    let ybar = y.iter().sum::<f64>() / 20.0;
    for u in 0..n {
        for s in 0..t {
            let ui = (0..t).map(|r| y[u * t + r]).sum::<f64>() / t as f64;
            let ts = (0..n).map(|v| y[v * t + s]).sum::<f64>() / n as f64;
            assert!((dm[u * t + s] - (y[u * t + s] - ui - ts + ybar)).abs() < 1e-12);
        }
    }
}

#[test]
fn demeaning_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, t) = (7, 6);
    let y: Vec<f64> = (0..n * t).map(|_| rng.random::<f64>()).collect();
    let keep: Vec<bool> = (0..n * t).map(|k| k % 5 != 0).collect();
    let p = grid_problem(n, t, &y, &[], &keep);
    for trends in [false, true] {
        let opts = FeOptions { unit_trends: trends, ..Default::default() };
        let dm = demean_column(&p, &p.response, &opts).unwrap();
        assert!(projection_change(&p, &dm, trends) <= 1e-9);
    }
}

#[test]
fn unit_trends_absorb_linear_unit_paths() {
    let (n, t) = (4, 6);
    let mut y = vec![0.0; n * t];
    let x: Vec<f64> = (0..n * t).map(|k| ((k * 13) % 7) as f64).collect();
    for u in 0..n {
        for s in 0..t {
            y[u * t + s] = u as f64 + 0.3 * (u as f64 + 1.0) * s as f64 + (s * s) as f64 * 0.1 + 2.0 * x[u * t + s];
        }
    }
    let p = grid_problem(n, t, &y, &[("x", x)], &[true; 24]);
    let fit = fit_fe(&p, &FeOptions { unit_trends: true, ..Default::default() }).unwrap();
    assert!((fit.coefficient("x").unwrap() - 2.0).abs() < 1e-8);
    assert!(fit.residuals.iter().all(|e| e.abs() < 1e-8));
    let pred = fit.predict(2, 5, None, &[p.regressors[0].1[2 * 6 + 5]]).unwrap();
    assert!((pred - y[2 * 6 + 5]).abs() < 1e-8);
}

#[test]
fn twfe_two_by_two_identity() {
    let ds = PanelDataset::from_grid(&[vec![0.0, 3.0], vec![0.0, 1.0]], &[vec![0, 1], vec![0, 0]]).unwrap();
    let est = fit_twfe(&ds);
    assert!((est - 2.0).abs() < 1e-12);
    let shifted = PanelDataset::from_grid(&[vec![5.0, 8.0], vec![0.0, 1.0]], &[vec![0, 1], vec![0, 0]]).unwrap();
    assert!((fit_twfe(&shifted) - 2.0).abs() < 1e-12);
}

fn fit_twfe(ds: &PanelDataset) -> f64 {
    // a single cluster per unit: the 2x2 has two clusters
    twfe_att(ds).unwrap().estimate
}

#[test]
fn twfe_requires_variation() {
    let ds = PanelDataset::from_grid(&[vec![0.0, 3.0], vec![0.0, 1.0]], &[vec![0, 0], vec![0, 0]]).unwrap();
    assert!(twfe_att(&ds).is_err());
    // treatment varying only over time is absorbed by time effects
    let ds = PanelDataset::from_grid(&[vec![0.0, 3.0], vec![0.0, 1.0]], &[vec![0, 1], vec![0, 1]]).unwrap();
    assert_eq!(twfe_att(&ds).unwrap_err(), Error::TreatmentCollinear);
}

#[test]
fn single_cluster_is_rejected() {
    let ds = PanelDataset::from_grid(
        &[vec![0.0, 3.0, 1.0], vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 2.0]],
        &[vec![0, 1, 1], vec![0, 0, 0], vec![0, 0, 1]],
    )
    .unwrap()
    .with_clusters(&["a".into(), "a".into(), "a".into()])
    .unwrap();
    assert_eq!(twfe_att(&ds).unwrap_err(), Error::TooFewClusters(1));
}

#[test]
fn cluster_vcov_invariant_to_relabeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, t) = (8, 4);
    let y: Vec<f64> = (0..n * t).map(|_| rng.random::<f64>()).collect();
    let x: Vec<f64> = (0..n * t).map(|_| rng.random::<f64>()).collect();
    let p = grid_problem(n, t, &y, &[("x", x)], &[true; 32]);
    let fit = fit_fe(&p, &FeOptions::default()).unwrap();
    let a: Vec<usize> = p.unit.iter().map(|u| u / 2).collect();
    let b: Vec<usize> = p.unit.iter().map(|u| 100 - u / 2).collect();
    let va = cluster_vcov(&fit, &a, SmallSample::Full).unwrap();
    let vb = cluster_vcov(&fit, &b, SmallSample::Full).unwrap();
    assert_eq!(va.n_clusters, 4);
    assert!((va.matrix[(0, 0)] - vb.matrix[(0, 0)]).abs() < 1e-14);
}

fn simulate_regression(rng: &mut ChaCha8Rng, n: usize, t: usize, rho_one: bool) -> (FeFit, FeProblem) {
    let z = Normal::new(0.0, 1.0).unwrap();
    let mut y = vec![0.0; n * t];
    let mut x = vec![0.0; n * t];
    for u in 0..n {
        let xu = z.sample(rng);
        let eu = z.sample(rng);
        for s in 0..t {
            let k = u * t + s;
            // serially correlated regressor and error when rho_one
            x[k] = if rho_one { xu * s as f64 } else { z.sample(rng) };
            let e = if rho_one { eu * s as f64 } else { z.sample(rng) };
            y[k] = 0.5 * x[k] + e;
        }
    }
    let p = grid_problem(n, t, &y, &[("x", x)], &vec![true; n * t]);
    (fit_fe(&p, &FeOptions::default()).unwrap(), p)
}

#[test]
fn cluster_se_close_to_ols_se_under_iid_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let reps = 500;
    let mut ratio = 0.0;
    for _ in 0..reps {
        let (fit, p) = simulate_regression(&mut rng, 200, 5, false);
        let c = cluster_vcov(&fit, &p.cluster, SmallSample::Full).unwrap().se(0);
        let o = homoskedastic_vcov(&fit)[(0, 0)].sqrt();
        ratio += c / o;
    }
    ratio /= reps as f64;
    assert!((ratio - 1.0).abs() < 0.15, "mean ratio {ratio}");
}

#[test]
fn cluster_se_exceeds_naive_under_serial_correlation() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut wins = 0;
    for _ in 0..100 {
        let (fit, p) = simulate_regression(&mut rng, 60, 8, true);
        let c = cluster_vcov(&fit, &p.cluster, SmallSample::Full).unwrap().se(0);
        let o = homoskedastic_vcov(&fit)[(0, 0)].sqrt();
        wins += (c > o) as usize;
    }
    assert!(wins >= 90, "cluster SE larger in {wins}/100");
}

fn staggered_grid(adopt: &[Option<usize>], t: usize, effect: impl Fn(i64) -> f64, drift: f64) -> PanelDataset {
    let mut y = Vec::new();
    let mut d = Vec::new();
    for (u, g) in adopt.iter().enumerate() {
        let mut yr = Vec::new();
        let mut dr = Vec::new();
        for s in 0..t {
            let treated = g.is_some_and(|g| s >= g);
            let mut v = u as f64 * 0.7 + (s as f64).sin() * 2.0;
            if g.is_some() {
                v += drift * s as f64;
            }
            if treated {
                v += effect(s as i64 - g.unwrap() as i64 + 1);
            }
            yr.push(v);
            dr.push(treated as u8);
        }
        y.push(yr);
        d.push(dr);
    }
    PanelDataset::from_grid(&y, &d).unwrap()
}

#[test]
fn event_study_recovers_constant_effect() {
    let adopt = [Some(3), Some(3), Some(5), Some(5), None, None];
    let ds = staggered_grid(&adopt, 8, |_| 1.0, 0.0);
    let es = twfe_event_study(&ds, 4, 2).unwrap();
    for c in &es.coefficients {
        let want = if c.l < 0 { 0.0 } else { 1.0 };
        assert!((c.estimate - want).abs() < 1e-8, "l={} est={}", c.l, c.estimate);
    }
    assert!((es.long_run.unwrap().estimate - 1.0).abs() < 1e-8);
}

#[test]
fn event_study_shows_pretrend() {
    let adopt = [Some(4), Some(4), Some(6), Some(6), None, None, None];
    let ds = staggered_grid(&adopt, 9, |_| 0.0, 0.5);
    // fully saturated in relative time: every lead and lag is a linear drift
    let es = twfe_event_study(&ds, 5, 5).unwrap();
    for c in &es.coefficients {
        assert!((c.estimate - 0.5 * c.l as f64).abs() < 1e-8, "l={} est={}", c.l, c.estimate);
    }
    let pre: Vec<f64> = es.coefficients.iter().filter(|c| c.l < 0).map(|c| c.estimate).collect();
    assert_eq!(pre.len(), 5);
    assert!(pre.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn event_study_two_periods_reports_missing_lead() {
    let ds = PanelDataset::from_grid(&[vec![0.0, 3.0], vec![0.0, 1.0], vec![1.0, 1.5]], &[vec![0, 1], vec![0, 0], vec![0, 0]])
        .unwrap();
    let es = twfe_event_study(&ds, 1, 1).unwrap();
    assert!(es.omitted.iter().any(|m| m.starts_with("l=-1")));
    assert_eq!(es.coefficients.len(), 1);
    assert!((es.coefficients[0].estimate - 2.25).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_fit_recovers_constant_effect(
        tau in -5.0f64..5.0,
        alpha in prop::collection::vec(-3.0f64..3.0, 4..7),
        xi in prop::collection::vec(-3.0f64..3.0, 3..6),
        adopt_seed in 0u64..1000,
    ) {
        let (n, t) = (alpha.len(), xi.len());
        let mut rng = ChaCha8Rng::seed_from_u64(adopt_seed);
        let mut y = vec![vec![0.0; t]; n];
        let mut d = vec![vec![0u8; t]; n];
        for u in 0..n {
            // unit 0 never treated, unit 1 treated from period 1 on
            let g = match u { 0 => t, 1 => 1, _ => rng.random_range(1..=t) };
            for s in 0..t {
                d[u][s] = (s >= g) as u8;
                y[u][s] = alpha[u] + xi[s] + tau * d[u][s] as f64;
            }
        }
        let ds = PanelDataset::from_grid(&y, &d).unwrap();
        let est = twfe_att(&ds).unwrap().estimate;
        prop_assert!((est - tau).abs() < 1e-8);
    }
}
