mod common;

use cksvar::model::*;
use cksvar::stats::norm_cdf;
use cksvar::Quarter;
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn toy_dataset(t: usize, y2: impl Fn(usize) -> f64, bound: f64) -> Dataset {
    let values = DMatrix::from_fn(t, 2, |r, c| if c == 1 { y2(r) } else { (r as f64 * 0.7).sin() });
    let dates = (0..t).map(|i| Quarter::new(1990, 1).offset(i as i64)).collect();
    Dataset::new(dates, values, vec![bound; t], None, vec!["a".into(), "r".into()], 1).unwrap()
}

#[test]
fn interior_series_has_no_spells() {
    let d = toy_dataset(20, |_| 1.0, 0.0);
    let reg = detect_regimes(&d, REGIME_TOL_SYNTHETIC).unwrap();
    assert!(reg.d.iter().all(|x| !x));
    assert!(reg.spells.is_empty());
}

#[test]
fn spells_partition_indicator() {
    let d = toy_dataset(12, |t| if [2, 3, 4, 7, 11].contains(&t) { 0.0 } else { 1.0 }, 0.0);
    let reg = detect_regimes(&d, REGIME_TOL_SYNTHETIC).unwrap();
    assert_eq!(reg.spells, vec![(2, 4), (7, 7), (11, 11)]);
    let covered: usize = reg.spells.iter().map(|(a, b)| b - a + 1).sum();
    assert_eq!(covered, reg.d.iter().filter(|x| **x).count());
}

#[test]
fn regressor_row_count_and_layout() {
    let d = toy_dataset(10, |t| 1.0 + t as f64, 0.0);
    let mut spec = ModelSpec::new(Variant::Ksvar, 2, 1);
    spec.include_intercept = false;
    let reg = build_regressors(&d, &spec).unwrap();
    assert_eq!(reg.n(), 8);
    // row 0 is dataset row 2; lag 1 of the rate is 1 + 1
    assert_eq!(reg.x[(0, 1)], 2.0);
    assert_eq!(reg.x[(0, 3)], 1.0);
    assert_eq!(reg.dims.y2_lag_cols(), vec![1, 3]);
}

#[test]
fn short_sample_is_rejected() {
    let d = toy_dataset(6, |_| 1.0, 0.0);
    let spec = ModelSpec::new(Variant::Cksvar, 2, 1);
    assert!(matches!(build_regressors(&d, &spec), Err(cksvar::Error::InsufficientSample { .. })));
}

#[test]
fn never_at_bound_latent_slots_vanish() {
    let d = toy_dataset(30, |t| 2.0 + (t as f64).cos(), 0.0);
    let ck = build_regressors(&d, &ModelSpec::new(Variant::Cksvar, 2, 1)).unwrap();
    let ks = build_regressors(&d, &ModelSpec::new(Variant::Ksvar, 2, 1)).unwrap();
    assert!(!ck.any_unknown());
    assert_eq!(ck.x, ks.x);
    for r in 0..ck.n() {
        assert!(ck.latent_slots(r).iter().all(|s| *s == LatentSlot::Known(0.0)));
    }
}

#[test]
fn latent_slot_filled_from_stored_path() {
    // ξ = 1 and α = 0 make the structural and reduced-form shadows coincide
    let s = random_structural(2, 1, (1.0, 0.0), true, 3);
    let spec = spec_for(&s, Variant::Cksvar);
    let mut opts = SimOptions::new(400, 11, 0.0);
    opts.bound = vec![0.3];
    let sim = simulate(&s, &spec, &opts).unwrap();
    let reg = build_regressors(&sim.data, &spec).unwrap();
    let filled = reg.fill_latent(&sim.ybar, &sim.data.bound);
    let mut checked = 0;
    for r in 0..reg.n() {
        let t = reg.start + r;
        if sim.data.values[(t - 1, 1)] <= 0.3 {
            assert_eq!(reg.latent_slots(r)[0], LatentSlot::Unknown);
            assert!((filled[(r, 0)] - (sim.shadow[t - 1] - 0.3)).abs() < 1e-12);
            assert!(filled[(r, 0)] < 0.0);
            checked += 1;
        } else {
            assert_eq!(filled[(r, 0)], 0.0);
        }
    }
    assert!(checked > 5);
}

#[test]
fn betatilde_limits() {
    let mut s = random_structural(3, 1, (0.0, 0.0), false, 5);
    let spec = spec_for(&s, Variant::Ksvar);
    let rf = reduced_from_structural(&s, &spec).unwrap();
    assert_eq!(rf.betatilde, s.beta);
    s.lambda = 1.0;
    let rf = reduced_from_structural(&s, &spec).unwrap();
    assert!(rf.betatilde.iter().all(|v| *v == 0.0));
}

#[test]
fn impact_multiplier_values() {
    let b = DVector::from_vec(vec![0.5]);
    let g = DVector::from_vec(vec![0.2]);
    let (above, below) = impact_multipliers(&b, &g, 0.5).unwrap();
    assert!((above[0] - 0.5 / 0.9).abs() < 1e-15);
    assert!((below[0] - 0.25 / 0.95).abs() < 1e-15);
    let (a1, b1) = impact_multipliers(&b, &g, 1.0).unwrap();
    assert_eq!(a1, b1);
    let (_, b0) = impact_multipliers(&b, &g, 0.0).unwrap();
    assert_eq!(b0[0], 0.0);
    assert!(impact_multipliers(&DVector::from_vec(vec![2.0]), &DVector::from_vec(vec![0.5]), 1.0).is_err());
}

#[test]
fn simulate_matches_structural_oracle() {
    for (seed, lam, alpha) in [(1, 0.0, 0.0), (2, 0.5, 1.0), (3, 0.3, 0.2), (4, 1.0, 0.0)] {
        let s = random_structural(3, 2, (lam, alpha), true, seed);
        let spec = spec_for(&s, Variant::Cksvar);
        let eps = std_normals(500, 3, seed + 100);
        let opts = SimOptions::new(500, 0, 0.2);
        let sim = simulate_with_shocks(&s, &spec, &eps, &opts).unwrap();
        let (vals, star) = structural_oracle(&s, &eps, 0.2);
        assert!((&sim.data.values - &vals).amax() < 1e-10, "seed {seed}");
        let gap = sim.shadow.iter().zip(&star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-10);
        assert!(sim.data.values.column(2).iter().any(|v| *v == 0.2), "design should hit the bound");
    }
}

#[test]
fn no_bound_is_a_linear_var() {
    let s = random_structural(2, 1, (0.4, 0.5), true, 8);
    let spec = spec_for(&s, Variant::Cksvar);
    let sim = simulate(&s, &spec, &SimOptions::new(200, 42, -1e12)).unwrap();
    let eps = std_normals(200, 2, 42);
    let (vals, _) = structural_oracle(&s, &eps, -1e12);
    assert!((&sim.data.values - &vals).amax() < 1e-10);
}

#[test]
fn kinked_nesting_gives_identical_draws() {
    let s = random_structural(2, 2, (0.0, 0.0), false, 9);
    let a = simulate(&s, &spec_for(&s, Variant::Cksvar), &SimOptions::new(100, 5, 0.1)).unwrap();
    let b = simulate(&s, &spec_for(&s, Variant::Ksvar), &SimOptions::new(100, 5, 0.1)).unwrap();
    assert_eq!(a.data.values, b.data.values);
    assert!(a.data.values.column(1).iter().any(|v| *v == 0.1));
}

#[test]
fn censoring_frequency_matches_normal_cdf() {
    // γ = 0 and no lags in the policy equation: Y2* = b2 + a·ε2
    let mut s = random_structural(2, 1, (0.3, 0.0), false, 10);
    s.gamma[0] = 0.0;
    s.b2.iter_mut().for_each(|v| *v = 0.0);
    s.b2[0] = 0.4;
    s.a22starinv = 0.8;
    let spec = spec_for(&s, Variant::Ksvar);
    let n = 100_000;
    let sim = simulate(&s, &spec, &SimOptions::new(n, 77, 0.0)).unwrap();
    let freq = sim.data.values.column(1).iter().filter(|v| **v <= 0.0).count() as f64 / n as f64;
    let p = norm_cdf(-0.4 / 0.8);
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((freq - p).abs() < 4.0 * se, "{freq} vs {p}");
}

#[test]
fn reduced_form_matches_regression_on_long_simulation() {
    // Regression on the direct simulator's output with the stored structural
    // shadow: Ȳ2 = b + (Y* − b)/κ at the bound. Ȳ2 on X gives C2 and u2; Y1
    // on (X, D·(Ȳ2 − b), u2) gives C1 and −β̃ (u2 is a control function for
    // the correlation between u1 and the kink regressor).
    let s = random_structural(2, 1, (0.4, 0.5), false, 12);
    let spec = spec_for(&s, Variant::Ksvar);
    let rf = reduced_from_structural(&s, &spec).unwrap();
    let kap = s.kappa().unwrap();
    let n = 1_000_000;
    let b = 0.3;
    let eps = std_normals(n, 2, 99);
    let (vals, star) = structural_oracle(&s, &eps, b);
    let ols = |rows: &[Vec<f64>], y: &[f64]| {
        let c = rows[0].len();
        let mut xtx = DMatrix::<f64>::zeros(c, c);
        let mut xty = DVector::<f64>::zeros(c);
        for (x, yv) in rows.iter().zip(y) {
            for i in 0..c {
                for j in 0..c {
                    xtx[(i, j)] += x[i] * x[j];
                }
                xty[i] += x[i] * yv;
            }
        }
        let inv = xtx.try_inverse().unwrap();
        let coef = &inv * xty;
        (coef, inv)
    };
    let mut xs = Vec::new();
    let mut ybar = Vec::new();
    let mut kink = Vec::new();
    let mut y1 = Vec::new();
    for t in 1..n {
        let d = vals[(t, 1)] <= b;
        let yb = if d { b + (star[t] - b) / kap } else { vals[(t, 1)] };
        xs.push(vec![1.0, vals[(t - 1, 0)], vals[(t - 1, 1)]]);
        ybar.push(yb);
        kink.push(if d { yb - b } else { 0.0 });
        y1.push(vals[(t, 0)]);
    }
    let (c2, inv2) = ols(&xs, &ybar);
    let u2: Vec<f64> = xs.iter().zip(&ybar).map(|(x, y)| y - (0..3).map(|i| c2[i] * x[i]).sum::<f64>()).collect();
    let x1: Vec<Vec<f64>> = (0..xs.len()).map(|i| vec![xs[i][0], xs[i][1], xs[i][2], kink[i], u2[i]]).collect();
    let (c1, inv1) = ols(&x1, &y1);
    let u1: Vec<f64> = (0..xs.len())
        .map(|i| y1[i] - (0..3).map(|j| c1[j] * xs[i][j]).sum::<f64>() - c1[3] * kink[i])
        .collect();
    let nf = xs.len() as f64;
    let s11 = u1.iter().map(|v| v * v).sum::<f64>() / nf;
    let s12 = u1.iter().zip(&u2).map(|(a, b)| a * b).sum::<f64>() / nf;
    let s22 = u2.iter().map(|v| v * v).sum::<f64>() / nf;
    let om = rf.omega();
    let resid_var = s11 - s12 * s12 / s22;
    let se_bt = (resid_var * inv1[(3, 3)]).sqrt();
    assert!((-c1[3] - rf.betatilde[0]).abs() < 3.0 * se_bt, "{} vs {}", -c1[3], rf.betatilde[0]);
    for i in 0..3 {
        assert!((c1[i] - rf.c[(0, i)]).abs() < 3.0 * (resid_var * inv1[(i, i)]).sqrt());
        assert!((c2[i] - rf.c[(1, i)]).abs() < 3.0 * (s22 * inv2[(i, i)]).sqrt());
    }
    // sampling sd of a sample covariance: sqrt((σ_ii σ_jj + σ_ij²)/n)
    let se = |a: f64, b: f64, c: f64| ((a * b + c * c) / nf).sqrt();
    assert!((s11 - om[(0, 0)]).abs() < 3.0 * se(om[(0, 0)], om[(0, 0)], om[(0, 0)]));
    assert!((s12 - om[(0, 1)]).abs() < 3.0 * se(om[(0, 0)], om[(1, 1)], om[(0, 1)]));
    assert!((s22 - om[(1, 1)]).abs() < 3.0 * se(om[(1, 1)], om[(1, 1)], om[(1, 1)]));
}

#[test]
fn explosive_dynamics_are_guarded() {
    let mut s = random_structural(2, 1, (0.5, 0.0), false, 13);
    s.b1[(0, 1)] = 1.5;
    let spec = spec_for(&s, Variant::Cksvar);
    assert!(matches!(simulate(&s, &spec, &SimOptions::new(50, 1, -1e9)), Err(cksvar::Error::Unstable(_))));
    let mut opts = SimOptions::new(5000, 1, -1e9);
    opts.allow_explosive = true;
    assert!(matches!(simulate(&s, &spec, &opts), Err(cksvar::Error::Explosive { .. })));
}

#[test]
fn csvar_mask_drops_observed_rate_lags_and_kink() {
    let spec = ModelSpec::new(Variant::Csvar, 2, 2);
    let dims = spec.dims(3, 0);
    let mask = spec.mask(&dims).unwrap();
    for col in dims.y2_lag_cols() {
        assert!((0..3).all(|eq| !mask.c[eq * dims.n_x() + col]));
    }
    assert!(mask.bt.iter().all(|b| !b));
    let full = ModelSpec::new(Variant::Cksvar, 2, 2).mask(&dims).unwrap();
    assert!(mask.nested_in(&full));
    assert!(ModelSpec::new(Variant::Ksvar, 2, 2).mask(&dims).unwrap().nested_in(&full));
    assert_eq!(full.n_free() - mask.n_free(), 2 * 2 + 2 + 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simulated_paths_respect_the_bound(seed in 0u64..10_000, lam in 0.0f64..1.0, alpha in 0.0f64..2.0, b in -0.5f64..0.8) {
        let s = random_structural(2, 2, (lam, alpha), true, seed);
        let spec = spec_for(&s, Variant::Cksvar);
        if let Ok(sim) = simulate(&s, &spec, &SimOptions::new(200, seed, b)) {
            for t in 0..200 {
                let y2 = sim.data.values[(t, 1)];
                prop_assert!(y2 >= b);
                if y2 > b {
                    prop_assert_eq!(y2, sim.shadow[t]);
                } else {
                    prop_assert!(sim.shadow[t] <= b);
                }
            }
        }
    }

    #[test]
    fn identification_equations_hold(seed in 0u64..10_000, lam in 0.0f64..1.0, alpha in 0.0f64..2.0) {
        let s = random_structural(3, 1, (lam, alpha), true, seed);
        let spec = spec_for(&s, Variant::Cksvar);
        let rf = reduced_from_structural(&s, &spec).unwrap();
        let res = identification_residual(&rf.omega(), &rf.betatilde, s.xi(), &s.beta, &s.gamma);
        prop_assert!(res < 1e-10, "residual {}", res);
    }
}
