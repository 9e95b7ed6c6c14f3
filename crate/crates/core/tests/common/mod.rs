#![allow(dead_code)]

use cksvar::likelihood::contributions_exact;
use cksvar::model::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A stable random structural draw with `k` variables and `p` lags.
pub fn random_structural(k: usize, p: usize, xi_parts: (f64, f64), latent: bool, seed: u64) -> StructuralParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = Dims { k, p, m: 0, intercept: true };
    let nx = dims.n_x();
    let mut u = |a: f64, b: f64| rng.random_range(a..b);
    let beta = DVector::from_fn(k - 1, |_, _| u(-0.6, 0.6));
    let gamma = DVector::from_fn(k - 1, |_, _| u(-0.5, 0.5));
    let mut b1 = DMatrix::from_fn(k - 1, nx, |_, _| u(-0.1, 0.1));
    let mut b2 = DVector::from_fn(nx, |_, _| u(-0.1, 0.1));
    for j in 1..=p {
        for i in 0..k - 1 {
            b1[(i, dims.col_lag(j, i))] += if j == 1 { 0.35 } else { 0.05 };
        }
        b2[dims.col_lag(j, k - 1)] += if j == 1 { 0.45 } else { 0.05 };
    }
    b1.column_mut(0).iter_mut().for_each(|v| *v = u(-0.5, 0.5));
    b2[0] = u(0.2, 0.8);
    let (b12star, b22star) = if latent {
        (DMatrix::from_fn(k - 1, p, |_, _| u(-0.15, 0.15)), DVector::from_fn(p, |_, _| u(0.0, 0.15)))
    } else {
        (DMatrix::zeros(k - 1, p), DVector::zeros(p))
    };
    let mut a11inv = DMatrix::from_fn(k - 1, k - 1, |_, _| u(-0.2, 0.2));
    for i in 0..k - 1 {
        a11inv[(i, i)] = u(0.6, 1.2);
    }
    StructuralParams {
        dims,
        beta,
        lambda: xi_parts.0,
        alpha: xi_parts.1,
        gamma,
        b1,
        b12star,
        b2,
        b22star,
        a11inv,
        a22starinv: u(0.5, 1.0),
    }
}

pub fn spec_for(s: &StructuralParams, variant: Variant) -> ModelSpec {
    let mut spec = ModelSpec::new(variant, s.dims.p, s.dims.k - 1);
    spec.include_intercept = s.dims.intercept;
    spec
}

/// Direct simulation of the structural equations, solving each period for
/// the regime. Returns observed values (`t × k`) and the structural shadow.
pub fn structural_oracle(s: &StructuralParams, eps: &DMatrix<f64>, bound: f64) -> (DMatrix<f64>, Vec<f64>) {
    let Dims { k, p, .. } = s.dims;
    let t_len = eps.nrows();
    let mut y: Vec<Vec<f64>> = vec![{
        let mut r = vec![0.0; k];
        r[k - 1] = bound.max(0.0);
        r
    }; p];
    let mut ystar: Vec<f64> = vec![bound.max(0.0); p];
    for t in 0..t_len {
        let h = p + t;
        let mut x = vec![1.0];
        for j in 1..=p {
            x.extend_from_slice(&y[h - j]);
        }
        let xs: Vec<f64> = (1..=p).map(|j| ystar[h - j]).collect();
        let e: Vec<f64> = (0..k).map(|i| eps[(t, i)]).collect();
        let (row, star) = structural_step(s, &x, &xs, &e, bound, 0.0);
        y.push(row);
        ystar.push(star);
    }
    let vals = DMatrix::from_fn(t_len, k, |t, i| y[p + t][i]);
    (vals, ystar[p..].to_vec())
}

/// One period of the structural equations given regressors `x` (intercept
/// and observed lags), structural shadow lags `xs`, standardized shocks and
/// an additive shift of the policy-equation error.
pub fn structural_step(s: &StructuralParams, x: &[f64], xs: &[f64], eps: &[f64], bound: f64, shift2: f64) -> (Vec<f64>, f64) {
    let k = s.dims.k;
    let p = s.dims.p;
    let g = s.gamma.dot(&s.beta);
    let xi = s.xi();
    let s1: Vec<f64> = (0..k - 1)
        .map(|i| {
            let mut v: f64 = (0..x.len()).map(|c| s.b1[(i, c)] * x[c]).sum();
            v += (0..p).map(|j| s.b12star[(i, j)] * xs[j]).sum::<f64>();
            v + (0..k - 1).map(|c| s.a11inv[(i, c)] * eps[c]).sum::<f64>()
        })
        .collect();
    let s2: f64 = (0..x.len()).map(|c| s.b2[c] * x[c]).sum::<f64>()
        + (0..p).map(|j| s.b22star[j] * xs[j]).sum::<f64>()
        + s.a22starinv * eps[k - 1] + shift2;
    let gs1: f64 = (0..k - 1).map(|i| s.gamma[i] * s1[i]).sum();
    let slack = (gs1 + s2) / (1.0 - g);
    let mut row = vec![0.0; k];
    let star;
    if slack >= bound {
        row[k - 1] = slack;
        for i in 0..k - 1 {
            row[i] = s.beta[i] * slack + s1[i];
        }
        star = slack;
    } else {
        let b = bound;
        star = (-s.alpha * b + (1.0 + s.alpha) * (g * (1.0 - s.lambda) * b + gs1 + s2)) / (1.0 - xi * g);
        assert!(star < b + 1e-12, "incoherent regime guess");
        row[k - 1] = b;
        for i in 0..k - 1 {
            row[i] = s.beta[i] * (s.lambda * star + (1.0 - s.lambda) * b) + s1[i];
        }
    }
    (row, star)
}

pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Multivariate normal log density via an explicit inverse (test code only).
pub fn mvn_logpdf(e: &[f64], omega: &DMatrix<f64>) -> f64 {
    let k = e.len();
    let inv = omega.clone().try_inverse().unwrap();
    let v = DVector::from_column_slice(e);
    let q = (v.transpose() * inv * &v)[(0, 0)];
    -0.5 * (k as f64 * (2.0 * std::f64::consts::PI).ln() + omega.determinant().ln() + q)
}

pub fn std_normals(t: usize, k: usize, seed: u64) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = DMatrix::zeros(t, k);
    for r in 0..t {
        for c in 0..k {
            e[(r, c)] = StandardNormal.sample(&mut rng);
        }
    }
    e
}

/// One-spell design with the spell at row `s` of the window. Returns data,
/// reduced form, spec and the window row of the spell.
pub fn single_spell_design() -> (Dataset, ReducedFormParams, ModelSpec, usize) {
    let s = random_structural(2, 1, (0.5, 0.6), true, 21);
    let spec = spec_for(&s, Variant::Cksvar);
    let mut rf = reduced_from_structural(&s, &spec).unwrap();
    rf.cstar[(0, 0)] = 0.35;
    rf.cstar[(1, 0)] = 0.25;
    let mut u = std_normals(120, 2, 5) * rf.omega_chol.transpose();
    // push one period below the bound and keep its neighbours well above
    let b = -4.0;
    let mut opts = SimOptions::new(120, 0, b);
    opts.allow_explosive = false;
    let sim = loop {
        let sim = simulate_reduced(&rf, &u, &opts, 1.0).unwrap();
        let spells = detect_regimes(&sim.data, REGIME_TOL_SYNTHETIC).unwrap().spells;
        if spells.len() == 1 && spells[0].0 == spells[0].1 && spells[0].0 > 3 && spells[0].0 < 100 {
            break sim;
        }
        // deepen the shock at t = 60
        u[(60, 1)] -= 0.5;
    };
    let spell = detect_regimes(&sim.data, REGIME_TOL_SYNTHETIC).unwrap().spells[0].0;
    (sim.data, rf, spec, spell - 1)
}

/// Likelihood of the one-spell design by Gauss–Legendre quadrature over the
/// single latent value, plus the posterior mean of `Ȳ2` at the spell.
pub fn quadrature_oracle(data: &Dataset, rf: &ReducedFormParams, spec: &ModelSpec, row: usize, nodes: usize) -> (f64, f64) {
    let reg = build_regressors(data, spec).unwrap();
    let om = rf.omega();
    let exact = contributions_exact(rf, &reg).unwrap();
    let others: f64 = (0..reg.n()).filter(|&r| r != row && r != row + 1).map(|r| exact[r]).sum();
    let b = reg.bound[row];
    let resid = |r: usize, w_lag: f64, w_now: f64| -> Vec<f64> {
        (0..2)
            .map(|i| {
                let mu: f64 = (0..reg.x.ncols()).map(|c| rf.c[(i, c)] * reg.x[(r, c)]).sum::<f64>()
                    + rf.cstar[(i, 0)] * (reg.ybar_base[r][0] + w_lag);
                let y = if i == 1 && reg.d[r] { reg.bound[r] } else { reg.y[(r, i)] };
                let mut e = y - mu;
                if i == 0 {
                    e += rf.betatilde[0] * w_now;
                } else {
                    e += w_now;
                }
                e
            })
            .collect()
    };
    // integrand in w: joint density of row `row` at w times density of the next row
    let f = |w: f64| (mvn_logpdf(&resid(row, 0.0, w), &om) + mvn_logpdf(&resid(row + 1, w, 0.0), &om)).exp();
    let (x, wts) = gauss_legendre(nodes);
    let lo = -30.0;
    let half = -lo / 2.0;
    let mut z = 0.0;
    let mut zm = 0.0;
    for (xi, wi) in x.iter().zip(&wts) {
        let w = half * (xi + 1.0) + lo;
        let v = f(w) * wi * half;
        z += v;
        zm += v * w;
    }
    let _ = b;
    (others + z.ln(), zm / z + reg.bound[row])
}
