mod common;

use cksvar::likelihood::*;
use cksvar::model::*;
use cksvar::stats::norm_cdf;
use common::*;
use nalgebra::{DMatrix, DVector};

fn interior_data(s: &StructuralParams, t: usize, seed: u64) -> Dataset {
    simulate(s, &spec_for(s, Variant::Ksvar), &SimOptions::new(t, seed, -1e9)).unwrap().data
}

#[test]
fn no_bound_periods_give_gaussian_var_likelihood() {
    let s = random_structural(3, 2, (0.0, 0.0), false, 1);
    let data = interior_data(&s, 150, 2);
    let spec = spec_for(&s, Variant::Ksvar);
    let rf = reduced_from_structural(&s, &spec).unwrap();
    let ll = loglik_ksvar(&rf, &data, &spec).unwrap();
    let reg = build_regressors(&data, &spec).unwrap();
    let om = rf.omega();
    let mut oracle = 0.0;
    for r in 0..reg.n() {
        let e: Vec<f64> = (0..3).map(|i| reg.y[(r, i)] - (0..reg.x.ncols()).map(|c| rf.c[(i, c)] * reg.x[(r, c)]).sum::<f64>()).collect();
        oracle += mvn_logpdf(&e, &om);
    }
    assert!((ll - oracle).abs() < 1e-9 * oracle.abs(), "{ll} vs {oracle}");
}

/// Joint density of `Y1` and `Ȳ2 = b + w`, integrated over `w ≤ 0` by brute force.
fn censored_density_by_quadrature(a: &[f64], bt: &[f64], omega: &DMatrix<f64>, nodes: usize) -> f64 {
    let k = a.len();
    let lo = -40.0 * omega[(k - 1, k - 1)].sqrt() - 40.0;
    let h = -lo / nodes as f64;
    let mut acc = 0.0;
    for i in 0..nodes {
        let w = lo + (i as f64 + 0.5) * h;
        let mut u = a.to_vec();
        for j in 0..k - 1 {
            u[j] += bt[j] * w;
        }
        u[k - 1] += w;
        acc += mvn_logpdf(&u, omega).exp() * h;
    }
    acc
}

#[test]
fn censored_contribution_matches_quadrature() {
    let omega = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.3, 0.8, 0.25, -0.2, 0.25, 0.6]);
    let dims = Dims { k: 3, p: 1, m: 0, intercept: true };
    // single useful row: the last of a short dataset
    let c = DMatrix::from_fn(3, dims.n_x(), |i, j| 0.1 * (i as f64 + 1.0) - 0.05 * j as f64);
    let bt = DVector::from_vec(vec![0.4, -0.7]);
    let rf = ReducedFormParams::from_omega(dims, c.clone(), DMatrix::zeros(3, 1), bt.clone(), &omega).unwrap();
    let t = 8;
    let values = DMatrix::from_fn(t, 3, |r, i| if i == 2 { if r == t - 1 { 0.0 } else { 0.5 + 0.1 * r as f64 } } else { (r + i) as f64 * 0.1 });
    let dates = (0..t).map(|i| cksvar::Quarter::new(2000, 1).offset(i as i64)).collect();
    let data = Dataset::new(dates, values, vec![0.0; t], None, vec!["a".into(), "b".into(), "r".into()], 2).unwrap();
    let spec = ModelSpec::new(Variant::Ksvar, 1, 2);
    let reg = build_regressors(&data, &spec).unwrap();
    let contrib = contributions_exact(&rf, &reg).unwrap();
    let r = reg.n() - 1;
    assert!(reg.d[r]);
    let a: Vec<f64> = (0..3)
        .map(|i| {
            let y = if i == 2 { 0.0 } else { reg.y[(r, i)] };
            y - (0..dims.n_x()).map(|cidx| c[(i, cidx)] * reg.x[(r, cidx)]).sum::<f64>()
        })
        .collect();
    let q = censored_density_by_quadrature(&a, bt.as_slice(), &omega, 1_000_000);
    assert!((contrib[r].exp() - q).abs() < 1e-6 * q.max(1e-300) + 1e-12, "{} vs {q}", contrib[r].exp());
}

#[test]
fn no_spell_particle_filter_equals_exact() {
    let s = random_structural(2, 2, (0.5, 0.5), true, 4);
    let spec = spec_for(&s, Variant::Cksvar);
    let data = simulate(&s, &spec, &SimOptions::new(200, 9, -1e9)).unwrap().data;
    let rf = reduced_from_structural(&s, &spec).unwrap();
    let (ll, lat) = loglik_cksvar(&rf, &data, &spec, &LikelihoodConfig::with_particles(64, 1)).unwrap();
    // with no spell the shadow lags are the observed lags
    let mut ks = rf.clone();
    for (j, col) in rf.dims.y2_lag_cols().into_iter().enumerate() {
        for eq in 0..2 {
            ks.c[(eq, col)] += rf.cstar[(eq, j)];
        }
    }
    ks.cstar.fill(0.0);
    let exact = loglik_ksvar(&ks, &data, &spec.with_variant(Variant::Ksvar)).unwrap();
    assert!((ll - exact).abs() < 1e-10 * exact.abs(), "{ll} vs {exact}");
    assert_eq!(lat.ybar, data.y2());
    assert!(lat.rows.is_empty());
}

#[test]
fn seeded_runs_are_bit_identical() {
    let s = random_structural(2, 2, (0.5, 0.5), true, 6);
    let spec = spec_for(&s, Variant::Cksvar);
    let data = simulate(&s, &spec, &SimOptions::new(300, 3, 0.0)).unwrap().data;
    let rf = reduced_from_structural(&s, &spec).unwrap();
    let cfg = LikelihoodConfig::with_particles(500, 77);
    let a = loglik_cksvar(&rf, &data, &spec, &cfg).unwrap();
    let b = loglik_cksvar(&rf, &data, &spec, &cfg).unwrap();
    assert_eq!(a.0.to_bits(), b.0.to_bits());
    assert_eq!(a.1, b.1);
}

#[test]
fn kinked_model_embeds_exactly() {
    let s = random_structural(3, 1, (0.2, 0.0), false, 7);
    let spec = spec_for(&s, Variant::Ksvar);
    let data = simulate(&s, &spec, &SimOptions::new(300, 4, 0.1)).unwrap().data;
    assert!(detect_regimes(&data, REGIME_TOL_SYNTHETIC).unwrap().share() > 0.05);
    let rf = reduced_from_structural(&s, &spec).unwrap();
    let exact = loglik_ksvar(&rf, &data, &spec).unwrap();
    let (smc, _) = loglik_cksvar(&rf, &data, &spec.with_variant(Variant::Cksvar), &LikelihoodConfig::with_particles(128, 3)).unwrap();
    assert!((exact - smc).abs() < 1e-9, "{exact} {smc}");
}

#[test]
fn shifting_rate_and_bound_leaves_likelihood_unchanged() {
    let s = random_structural(2, 2, (0.5, 0.5), true, 8);
    let spec = spec_for(&s, Variant::Cksvar);
    let data = simulate(&s, &spec, &SimOptions::new(250, 5, 0.0)).unwrap().data;
    let rf = reduced_from_structural(&s, &spec).unwrap();
    let cfg = LikelihoodConfig::with_particles(400, 12);
    let base = loglik_cksvar(&rf, &data, &spec, &cfg).unwrap().0;
    let shift = 1.7;
    let mut moved = data.clone();
    for t in 0..moved.t() {
        moved.values[(t, 1)] += shift;
        moved.bound[t] += shift;
    }
    let mut rf2 = rf.clone();
    let y2cols = rf.dims.y2_lag_cols();
    for eq in 0..2 {
        let lagsum: f64 = y2cols.iter().map(|&c| rf.c[(eq, c)]).sum::<f64>() + rf.cstar.row(eq).sum();
        let own = if eq == 1 { 1.0 } else { 0.0 };
        rf2.c[(eq, 0)] += shift * (own - lagsum);
    }
    let moved_ll = loglik_cksvar(&rf2, &moved, &spec, &cfg).unwrap().0;
    assert!((base - moved_ll).abs() < 1e-8, "{base} vs {moved_ll}");
}

#[test]
fn length_one_spell_smoother_matches_quadrature() {
    let (data, rf, spec, row) = single_spell_design();
    let (_, post_mean) = quadrature_oracle(&data, &rf, &spec, row, 2000);
    let lat = smooth_latent(&rf, &data, &spec, &LikelihoodConfig::with_particles(100_000, 3)).unwrap();
    assert_eq!(lat.rows.len(), 1);
    assert!(lat.rows[0].smoothed_mean <= lat.rows[0].bound);
    assert!((lat.rows[0].smoothed_mean - post_mean).abs() < 1e-3, "{} vs {post_mean}", lat.rows[0].smoothed_mean);
}

#[test]
fn particle_likelihood_matches_quadrature_small_n() {
    let (data, rf, spec, row) = single_spell_design();
    let (oracle, _) = quadrature_oracle(&data, &rf, &spec, row, 2000);
    let (ll, _) = loglik_cksvar(&rf, &data, &spec, &LikelihoodConfig::with_particles(20_000, 8)).unwrap();
    assert!((ll - oracle).abs() < 5e-3, "{ll} vs {oracle}");
}

fn standard_design() -> (Dataset, Simulated, ReducedFormParams, ModelSpec) {
    let s = random_structural(2, 1, (0.5, 0.5), true, 30);
    let spec = spec_for(&s, Variant::Cksvar);
    let sim = simulate(&s, &spec, &SimOptions::new(200, 31, 0.6)).unwrap();
    let rf = reduced_from_structural(&s, &spec).unwrap();
    (sim.data.clone(), sim, rf, spec)
}

#[test]
fn seed_variance_is_small() {
    let (data, _, rf, spec) = standard_design();
    let share = detect_regimes(&data, REGIME_TOL_SYNTHETIC).unwrap().share();
    assert!(share > 0.1 && share < 0.6, "share {share}");
    let lls: Vec<f64> = (0..20)
        .map(|seed| loglik_cksvar(&rf, &data, &spec, &LikelihoodConfig::with_particles(4096, seed)).unwrap().0)
        .collect();
    let mean = lls.iter().sum::<f64>() / 20.0;
    let var = lls.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 19.0;
    assert!(var < 0.05f64.powi(2), "variance {var}");
}

#[test]
fn smoothed_means_cover_truth() {
    let s = random_structural(2, 1, (0.5, 0.5), true, 30);
    let spec = spec_for(&s, Variant::Cksvar);
    let sim = simulate(&s, &spec, &SimOptions::new(1000, 100, 0.6)).unwrap();
    let rf = reduced_from_structural(&s, &spec).unwrap();
    let data = sim.data.clone();
    let lat = smooth_latent(&rf, &data, &spec, &LikelihoodConfig::with_particles(4096, 2)).unwrap();
    let mut inside = 0;
    for r in &lat.rows {
        assert!(r.smoothed_mean <= r.bound + 1e-12);
        assert!(r.smoothed_q[2] <= r.bound + 1e-12);
        if (r.smoothed_mean - sim.ybar[r.row]).abs() <= 2.0 * r.smoothed_sd {
            inside += 1;
        }
    }
    let n = lat.rows.len();
    assert!(n > 20);
    assert!(inside as f64 >= 0.95 * n as f64, "{inside}/{n}");
    for t in 0..data.t() {
        if !lat.rows.iter().any(|r| r.row == t) {
            assert_eq!(lat.ybar[t], data.values[(t, 1)]);
        }
    }
}

#[test]
fn underflow_is_reported_as_negative_infinity() {
    let s = random_structural(2, 1, (0.0, 0.0), false, 40);
    let spec = spec_for(&s, Variant::Ksvar);
    let mut rf = reduced_from_structural(&s, &spec).unwrap();
    let data = simulate(&s, &spec, &SimOptions::new(60, 1, 0.2)).unwrap().data;
    rf.c[(1, 0)] = 1e200;
    let ll = loglik_ksvar(&rf, &data, &spec).unwrap();
    assert_eq!(ll, f64::NEG_INFINITY);
    let _ = norm_cdf(0.0);
}
