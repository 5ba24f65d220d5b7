use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fe::twfe_att;
use crate::panel::PanelDataset;
use crate::simulate::adversarial_negative_weighting;

/// Unit effect `0.7 i`, period effect `sin(s)`, `tau(g, l)` on treated
/// cells, optional N(0, 1)-ish noise from `seed`.
fn staggered(adopt: &[Option<usize>], t: usize, tau: impl Fn(usize, i64) -> f64, seed: Option<u64>) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
    let mut y = Vec::new();
    let mut d = Vec::new();
    for (i, a) in adopt.iter().enumerate() {
        let mut yr = Vec::new();
        let mut dr = Vec::new();
        for s in 0..t {
            let on = a.is_some_and(|g| s >= g);
            let mut v = 0.7 * i as f64 + (s as f64).sin();
            if on {
                let g = a.unwrap();
                v += tau(g, s as i64 - g as i64 + 1);
            }
            if seed.is_some() {
                v += rng.random_range(-1.7..1.7);
            }
            yr.push(v);
            dr.push(on as u8);
        }
        y.push(yr);
        d.push(dr);
    }
    PanelDataset::from_grid(&y, &d).unwrap()
}

fn cohorts(spec: &[(Option<usize>, usize)]) -> Vec<Option<usize>> {
    spec.iter().flat_map(|&(a, n)| std::iter::repeat_n(a, n)).collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn csdid_recovers_constant_effect() {
    let ds = staggered(&cohorts(&[(Some(2), 3), (Some(4), 3), (None, 3)]), 7, |_, _| 2.0, None);
    for comparison in [Comparison::Never, Comparison::NotYet] {
        let r = csdid(&ds, &CsdidOptions { comparison, base_offset: 1 }).unwrap();
        assert!(close(r.estimates.att, 2.0, 1e-10));
        for d in &r.estimates.dynamic {
            let want = if d.l >= 1 { 2.0 } else { 0.0 };
            assert!(close(d.estimate, want, 1e-10), "{comparison:?} {d:?}");
        }
    }
}

#[test]
fn csdid_recovers_dynamic_effect() {
    let ds = staggered(&cohorts(&[(Some(2), 2), (Some(3), 4), (None, 3)]), 6, |_, l| l as f64, None);
    let r = csdid(&ds, &CsdidOptions::default()).unwrap();
    for d in r.estimates.dynamic.iter().filter(|d| d.l >= 1) {
        assert!(close(d.estimate, d.l as f64, 1e-10));
    }
    // cell-weighted: cohort 2 has l = 1..4 (2 units each), cohort 3 has l = 1..3 (4 units each)
    let want = (2.0 * (1.0 + 2.0 + 3.0 + 4.0) + 4.0 * (1.0 + 2.0 + 3.0)) / (2.0 * 4.0 + 4.0 * 3.0);
    assert!(close(r.estimates.att, want, 1e-10));
    // a later base period sees the effect at l = 0 as zero too
    let r2 = csdid(&ds, &CsdidOptions { base_offset: 2, ..Default::default() }).unwrap();
    assert!(close(r2.estimates.att, want, 1e-10));
}

#[test]
fn csdid_two_by_two_is_simple_did() {
    let y = vec![vec![1.0, 4.0], vec![2.0, 3.5], vec![0.5, 2.0], vec![3.0, 7.5]];
    let d = vec![vec![0, 0], vec![0, 0], vec![0, 1], vec![0, 1]];
    let ds = PanelDataset::from_grid(&y, &d).unwrap();
    let did = ((2.0 - 0.5) + (7.5 - 3.0)) / 2.0 - ((4.0 - 1.0) + (3.5 - 2.0)) / 2.0;
    for comparison in [Comparison::Never, Comparison::NotYet] {
        let r = csdid(&ds, &CsdidOptions { comparison, base_offset: 1 }).unwrap();
        assert!(close(r.estimates.att, did, 1e-12));
    }
    assert!(close(iw(&ds).unwrap().estimates.att, did, 1e-10));
    assert!(close(stacked_did(&ds, 1, 1).unwrap().static_effect, did, 1e-10));
    assert!(close(did_multiple(&ds).unwrap().estimates.att, did, 1e-12));
    assert!(close(panel_match(&ds, 1, 1).unwrap().estimates.att, did, 1e-12));
    let b = bacon_decompose(&ds).unwrap();
    assert_eq!(b.components.len(), 1);
    assert!(close(b.components[0].estimate, did, 1e-12));
}

#[test]
fn csdid_requires_never_treated_for_never_comparison() {
    let ds = staggered(&cohorts(&[(Some(2), 2), (Some(4), 2)]), 6, |_, _| 1.0, None);
    assert!(matches!(csdid(&ds, &CsdidOptions::default()), Err(crate::Error::NoNeverTreated)));
    let r = csdid(&ds, &CsdidOptions { comparison: Comparison::NotYet, base_offset: 1 }).unwrap();
    assert!(close(r.estimates.att, 1.0, 1e-10));
    assert!(!r.grid.omitted.is_empty());
}

#[test]
fn iw_matches_csdid_never_on_balanced_panel() {
    let ds = staggered(
        &cohorts(&[(Some(2), 3), (Some(3), 2), (Some(5), 4), (None, 4)]),
        7,
        |g, l| g as f64 + 0.3 * l as f64,
        Some(11),
    );
    let a = iw(&ds).unwrap();
    let b = csdid(&ds, &CsdidOptions::default()).unwrap();
    assert!(close(a.estimates.att, b.estimates.att, 1e-8));
    assert_eq!(a.estimates.periods(), b.estimates.periods());
    for (x, y) in a.estimates.dynamic.iter().zip(&b.estimates.dynamic) {
        assert!(close(x.estimate, y.estimate, 1e-8), "{x:?} {y:?}");
        assert_eq!(x.n_cells, y.n_cells);
    }
}

#[test]
fn iw_uses_last_cohort_without_never_treated() {
    let ds = staggered(&cohorts(&[(Some(2), 3), (Some(3), 3), (Some(5), 3)]), 7, |_, _| 2.0, None);
    let r = iw(&ds).unwrap();
    assert_eq!(r.comparison_cohort, Some(5));
    assert!(r.cohort_effects.iter().all(|e| e.0 != 5 && (e.0 as i64 + e.1 - 1) < 5));
    assert!(close(r.estimates.att, 2.0, 1e-8));
    assert!(r.estimates.warnings.iter().any(|w| w.contains("comparison group")));
}

/// Dense least squares on the stacked design: stack-unit and stack-period
/// dummies plus one dummy per relative-time bin.
fn stacked_oracle(ds: &PanelDataset, leads: usize, lags: usize) -> Vec<(i64, f64)> {
    let es = crate::panel::compute_event_structure(ds);
    let t = ds.n_times();
    let never = es.units_in(crate::panel::Cohort::Never);
    let gs = es.adoption_times();
    let bins: Vec<i64> = ((1 - leads as i64)..=(lags as i64)).filter(|&l| l != 0).collect();
    let mut rows: Vec<(usize, usize, Option<i64>, f64)> = Vec::new();
    let mut n_vu = 0;
    for (si, &g) in gs.iter().enumerate() {
        let lo = (g as i64 - leads as i64).max(0) as usize;
        let hi = (g + lags - 1).min(t - 1);
        for (u, tr) in
            es.units_in(crate::panel::Cohort::Adopts(g)).into_iter().map(|u| (u, true)).chain(never.iter().map(|&u| (u, false)))
        {
            for s in lo..=hi {
                rows.push((n_vu, si * t + s, tr.then_some(s as i64 - g as i64 + 1), ds.outcome(u, s).unwrap()));
            }
            n_vu += 1;
        }
    }
    let used: Vec<i64> = bins.iter().copied().filter(|b| rows.iter().any(|r| r.2 == Some(*b))).collect();
    let n_st = gs.len() * t;
    let k = n_vu + n_st + used.len();
    let mut x = DMatrix::zeros(rows.len(), k);
    let mut y = DVector::zeros(rows.len());
    for (i, r) in rows.iter().enumerate() {
        x[(i, r.0)] = 1.0;
        x[(i, n_vu + r.1)] = 1.0;
        if let Some(j) = used.iter().position(|b| Some(*b) == r.2) {
            x[(i, n_vu + n_st + j)] = 1.0;
        }
        y[i] = r.3;
    }
    let beta = x.svd(true, true).solve(&y, 1e-9).unwrap();
    used.iter().enumerate().map(|(j, &l)| (l, beta[n_vu + n_st + j])).collect()
}

#[test]
fn stacked_constant_effect() {
    let ds = staggered(&cohorts(&[(Some(3), 3), (Some(5), 2), (None, 3)]), 8, |_, _| 2.0, None);
    let r = stacked_did(&ds, 2, 3).unwrap();
    assert!(close(r.static_effect, 2.0, 1e-8));
    for d in &r.estimates.dynamic {
        assert!(close(d.estimate, if d.l >= 1 { 2.0 } else { 0.0 }, 1e-8), "{d:?}");
    }
    assert_eq!(r.stacks.len(), 2);
}

#[test]
fn stacked_matches_dense_regression() {
    let ds = staggered(&cohorts(&[(Some(3), 3), (Some(4), 3), (None, 3)]), 8, |g, _| if g == 3 { 1.0 } else { 3.0 }, None);
    let r = stacked_did(&ds, 2, 2).unwrap();
    // equal cohort sizes: the bins average the two cohort effects
    assert!(close(r.estimates.dynamic_at(1).unwrap().estimate, 2.0, 1e-8));
    assert!(close(r.static_effect, 2.0, 1e-8));
    for (l, b) in stacked_oracle(&ds, 2, 2) {
        assert!(close(r.estimates.dynamic_at(l).unwrap().estimate, b, 1e-7), "l={l}");
    }

    let ds = staggered(
        &cohorts(&[(Some(3), 2), (Some(4), 6), (None, 4)]),
        8,
        |g, l| if g == 3 { 1.0 } else { 3.0 + 0.1 * l as f64 },
        Some(5),
    );
    let r = stacked_did(&ds, 3, 3).unwrap();
    for (l, b) in stacked_oracle(&ds, 3, 3) {
        assert!(close(r.estimates.dynamic_at(l).unwrap().estimate, b, 1e-7), "l={l}");
    }
    // unequal stacks: the implicit weights are not the cohort shares
    let ds = staggered(&cohorts(&[(Some(3), 2), (Some(4), 6), (None, 4)]), 8, |g, _| if g == 3 { 1.0 } else { 3.0 }, None);
    let tau1 = stacked_did(&ds, 2, 2).unwrap().estimates.dynamic_at(1).unwrap().estimate;
    assert!((tau1 - 2.5).abs() > 0.01, "{tau1}");
    assert!(tau1 > 1.0 && tau1 < 3.0);
}

fn reversal_panel() -> PanelDataset {
    let d = vec![vec![0, 0, 1, 1, 0], vec![0, 0, 0, 0, 0], vec![0, 0, 0, 1, 1], vec![1, 0, 0, 0, 0]];
    let y = vec![
        vec![1.0, 2.0, 5.0, 7.0, 3.0],
        vec![0.0, 1.0, 1.5, 2.5, 3.0],
        vec![2.0, 2.5, 4.0, 9.0, 10.0],
        vec![3.0, 1.0, 2.0, 2.0, 4.0],
    ];
    PanelDataset::from_grid(&y, &d).unwrap()
}

#[test]
fn panel_match_hand_enumeration() {
    let ds = reversal_panel();
    let r = panel_match(&ds, 1, 2).unwrap();
    assert_eq!(r.matched_sets.len(), 2);
    let a = &r.matched_sets[0];
    assert_eq!((a.unit, a.time, a.members.clone()), (0, 2, vec![1, 2, 3]));
    assert_eq!(a.leads[1].members, vec![1, 3]);
    let c = &r.matched_sets[1];
    assert_eq!((c.unit, c.time, c.members.clone()), (2, 3, vec![1, 3]));

    // unit A, switch at 2
    let a1 = (5.0 - 2.0) - ((1.5 - 1.0) + (4.0 - 2.5) + (2.0 - 1.0)) / 3.0;
    let a2 = (7.0 - 2.0) - ((2.5 - 1.0) + (2.0 - 1.0)) / 2.0;
    // unit C, switch at 3
    let c1 = (9.0 - 4.0) - ((2.5 - 1.5) + (2.0 - 2.0)) / 2.0;
    let c2 = (10.0 - 4.0) - ((3.0 - 1.5) + (4.0 - 2.0)) / 2.0;
    let e = &r.estimates;
    assert!(close(e.dynamic_at(1).unwrap().estimate, (a1 + c1) / 2.0, 1e-12));
    assert!(close(e.dynamic_at(2).unwrap().estimate, (a2 + c2) / 2.0, 1e-12));
    assert!(close(e.att, (a1 + a2 + c1 + c2) / 4.0, 1e-12));
}

#[test]
fn panel_match_history_longer_than_data() {
    let ds = reversal_panel();
    let r = panel_match(&ds, 3, 1).unwrap();
    assert_eq!(r.insufficient_history, 1);
    assert_eq!(r.matched_sets.len(), 1);
    assert_eq!(r.matched_sets[0].members, vec![1]);
    assert!(panel_match(&ds, 4, 1).is_err());
}

#[test]
fn did_multiple_negates_leavers() {
    // joiners and leavers, effect 2 whenever treated
    let d = vec![vec![0, 1, 1, 1], vec![1, 1, 0, 0], vec![0, 0, 0, 0], vec![1, 1, 1, 1], vec![0, 0, 1, 0]];
    let y: Vec<Vec<f64>> = d
        .iter()
        .enumerate()
        .map(|(i, r)| r.iter().enumerate().map(|(s, &x)| i as f64 + 0.5 * s as f64 + 2.0 * x as f64).collect())
        .collect();
    let ds = PanelDataset::from_grid(&y, &d).unwrap();
    let r = did_multiple(&ds).unwrap();
    assert!(close(r.estimates.att, 2.0, 1e-12));
    assert!(r.periods.iter().any(|p| p.leaver_did.is_some_and(|x| close(x, 2.0, 1e-12))));

    let none = PanelDataset::from_grid(&[vec![0.0, 1.0], vec![2.0, 3.0]], &[vec![0, 0], vec![1, 1]]).unwrap();
    assert!(matches!(did_multiple(&none), Err(crate::Error::NoSwitchers)));
}

#[test]
fn reversal_panels_are_refused_by_staggered_estimators() {
    let ds = reversal_panel();
    assert!(csdid(&ds, &CsdidOptions::default()).is_err());
    assert!(iw(&ds).is_err());
    assert!(stacked_did(&ds, 1, 1).is_err());
    assert!(bacon_decompose(&ds).is_err());
}

#[test]
fn bacon_single_cohort_is_one_comparison() {
    let ds = staggered(&cohorts(&[(Some(3), 4), (None, 3)]), 6, |_, l| l as f64, Some(3));
    let b = bacon_decompose(&ds).unwrap();
    assert_eq!(b.components.len(), 1);
    assert!(close(b.components[0].weight, 1.0, 1e-12));
    assert!(close(b.components[0].estimate, b.twfe, 1e-8));
}

#[test]
fn bacon_constant_effect_components_agree() {
    let ds = staggered(&cohorts(&[(Some(2), 2), (Some(4), 3), (Some(5), 1), (None, 3)]), 7, |_, _| 1.5, None);
    let b = bacon_decompose(&ds).unwrap();
    assert_eq!(b.components.len(), 3 + 2 * 3);
    for c in &b.components {
        assert!(close(c.estimate, 1.5, 1e-10), "{c:?}");
    }
    assert!(close(b.twfe, 1.5, 1e-8));
}

#[test]
fn bacon_adversarial_fixture_has_negative_forbidden_comparison() {
    let sp = adversarial_negative_weighting();
    let b = bacon_decompose(&sp.dataset).unwrap();
    let forbidden = b.components.iter().find(|c| c.kind == ComparisonKind::LaterVsEarlier).unwrap();
    assert!(forbidden.estimate < 0.0);
    assert!(b.twfe < 0.0);
    assert!(close(b.reconstructed, b.twfe, 1e-8));
    assert!(close(b.twfe, twfe_att(&sp.dataset).unwrap().estimate, 1e-8));
}

#[test]
fn bacon_refuses_missing_cells() {
    let sp = crate::simulate::simulate_panel(&crate::simulate::DgpSpec { missing_rate: 0.1, ..Default::default() }).unwrap();
    assert!(matches!(bacon_decompose(&sp.dataset), Err(crate::Error::Unbalanced(_))));
}

fn adoption_strategy(t: usize) -> impl Strategy<Value = Vec<Option<usize>>> {
    prop::collection::vec(prop::option::weighted(0.75, 1..t), 6..14)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bacon_weights_sum_to_one_and_reconstruct_twfe(
        adopt in adoption_strategy(6),
        always in 0usize..3,
        seed in 0u64..1000,
    ) {
        let mut adopt = adopt;
        adopt.extend(std::iter::repeat_n(Some(0), always));
        let ds = staggered(&adopt, 6, |g, l| g as f64 * 0.5 + l as f64, Some(seed));
        if let Ok(b) = bacon_decompose(&ds) {
            let w: f64 = b.components.iter().map(|c| c.weight).sum();
            prop_assert!((w - 1.0).abs() < 1e-8, "weights {w}");
            prop_assert!(b.components.iter().all(|c| c.weight >= -1e-12));
            prop_assert!((b.reconstructed - b.twfe).abs() < 1e-7 * (1.0 + b.twfe.abs()));
        }
    }

    #[test]
    fn estimators_invariant_to_fixed_effect_shifts(
        adopt in adoption_strategy(6),
        seed in 0u64..1000,
        a in -20.0f64..20.0,
        b in -20.0f64..20.0,
    ) {
        let mut adopt = adopt;
        adopt.push(None);
        let ds = staggered(&adopt, 6, |g, l| g as f64 + l as f64, Some(seed));
        let y: Vec<Vec<f64>> = (0..ds.n_units())
            .map(|i| (0..6).map(|s| ds.outcome(i, s).unwrap() + a * i as f64 + b * (s * s) as f64).collect())
            .collect();
        let d: Vec<Vec<u8>> = (0..ds.n_units()).map(|i| (0..6).map(|s| ds.treated(i, s).unwrap() as u8).collect()).collect();
        let shifted = PanelDataset::from_grid(&y, &d).unwrap();
        let pairs: Vec<(Option<f64>, Option<f64>)> = vec![
            (csdid(&ds, &CsdidOptions::default()).ok().map(|r| r.estimates.att), csdid(&shifted, &CsdidOptions::default()).ok().map(|r| r.estimates.att)),
            (iw(&ds).ok().map(|r| r.estimates.att), iw(&shifted).ok().map(|r| r.estimates.att)),
            (stacked_did(&ds, 2, 2).ok().map(|r| r.static_effect), stacked_did(&shifted, 2, 2).ok().map(|r| r.static_effect)),
            (panel_match(&ds, 2, 2).ok().map(|r| r.estimates.att), panel_match(&shifted, 2, 2).ok().map(|r| r.estimates.att)),
            (did_multiple(&ds).ok().map(|r| r.estimates.att), did_multiple(&shifted).ok().map(|r| r.estimates.att)),
        ];
        for (x, y) in pairs {
            prop_assert_eq!(x.is_some(), y.is_some());
            if let (Some(x), Some(y)) = (x, y) {
                prop_assert!((x - y).abs() < 1e-7 * (1.0 + x.abs()), "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn noiseless_att_is_convex_combination(adopt in adoption_strategy(7), scale in 0.1f64..5.0) {
        let mut adopt = adopt;
        adopt.push(None);
        let tau = |g: usize, l: i64| scale * (1.0 + g as f64 + 0.5 * l as f64);
        let ds = staggered(&adopt, 7, tau, None);
        let vals: Vec<f64> = adopt.iter().flatten().flat_map(|&g| (g..7).map(move |s| tau(g, (s - g + 1) as i64))).collect();
        if vals.is_empty() {
            return Ok(());
        }
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min) - 1e-8;
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1e-8;
        for opts in [CsdidOptions::default(), CsdidOptions { comparison: Comparison::NotYet, base_offset: 1 }] {
            if let Ok(r) = csdid(&ds, &opts) {
                prop_assert!(r.estimates.att >= lo && r.estimates.att <= hi);
            }
        }
        if let Ok(r) = iw(&ds) {
            prop_assert!(r.estimates.att >= lo && r.estimates.att <= hi);
        }
        if let Ok(r) = panel_match(&ds, 1, 3) {
            prop_assert!(r.estimates.att >= lo && r.estimates.att <= hi);
        }
    }

    #[test]
    fn local_comparisons_coincide_with_one_period_history(adopt in adoption_strategy(6), seed in 0u64..1000) {
        let ds = staggered(&adopt, 6, |g, l| g as f64 - l as f64, Some(seed));
        let nyt = csdid(&ds, &CsdidOptions { comparison: Comparison::NotYet, base_offset: 1 });
        let pm = panel_match(&ds, 1, 4);
        if let (Ok(a), Ok(b)) = (&nyt, &pm) {
            for d in &b.estimates.dynamic {
                let c = a.estimates.dynamic_at(d.l).unwrap();
                prop_assert!((c.estimate - d.estimate).abs() < 1e-9);
                prop_assert_eq!(c.n_cells, d.n_cells);
            }
        }
        if let (Ok(b), Ok(m)) = (&pm, did_multiple(&ds)) {
            let t1 = b.estimates.dynamic_at(1).unwrap();
            prop_assert!((t1.estimate - m.estimates.att).abs() < 1e-9);
        }
    }
}
