//! Derivative-free simplex search, quasi-Newton refinement with
//! finite-difference gradients, and a numerical Hessian. All routines minimize.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub evals: usize,
    pub converged: bool,
    pub message: String,
}

/// Nelder–Mead with adaptive coefficients for higher dimensions.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], step: f64, max_evals: usize, ftol: f64) -> OptimResult {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += if x[i].abs() > 1e-8 { step * x[i].abs().max(0.1) } else { step };
        simplex.push(x);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();
    let mut iters = 0;
    let mut converged = false;
    while evals < max_evals {
        iters += 1;
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        fv = idx.iter().map(|&i| fv[i]).collect();
        if (fv[n] - fv[0]).abs() <= ftol * (fv[0].abs() + 1e-10) {
            converged = true;
            break;
        }
        let mut cen = vec![0.0; n];
        for x in &simplex[..n] {
            for (c, v) in cen.iter_mut().zip(x) {
                *c += v / nf;
            }
        }
        let lerp = |t: f64| -> Vec<f64> { cen.iter().zip(&simplex[n]).map(|(c, w)| c + t * (c - w)).collect() };
        let xr = lerp(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < fv[0] {
            let xe = lerp(gamma);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                fv[n] = fe;
            } else {
                simplex[n] = xr;
                fv[n] = fr;
            }
        } else if fr < fv[n - 1] {
            simplex[n] = xr;
            fv[n] = fr;
        } else {
            let (xc, fc) = if fr < fv[n] {
                let xc = lerp(alpha * rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = lerp(-rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < fv[n].min(fr) {
                simplex[n] = xc;
                fv[n] = fc;
            } else {
                for i in 1..=n {
                    let x: Vec<f64> = simplex[0].iter().zip(&simplex[i]).map(|(b, v)| b + sigma * (v - b)).collect();
                    fv[i] = eval(&x, &mut evals);
                    simplex[i] = x;
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| fv[a].total_cmp(&fv[b])).unwrap();
    OptimResult {
        x: simplex[best].clone(),
        f: fv[best],
        iters,
        evals,
        converged,
        message: if converged { "simplex collapsed".into() } else { "evaluation budget exhausted".into() },
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Convergence on the max-norm of the gradient.
    pub gtol: f64,
    /// Convergence on the relative change of the objective.
    pub ftol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
    /// Forward rather than central differences.
    #[serde(default)]
    pub forward: bool,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iter: 500, gtol: 1e-5, ftol: 1e-12, fd_step: 1e-5, forward: false }
    }
}

/// Forward-difference gradient given `f(x)`.
pub fn fd_gradient_forward<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], fx: f64, rel: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i];
            (fp - fx) / h
        })
        .collect()
}

/// Central-difference gradient.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], rel: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub fn bfgs<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> OptimResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    evals += 1;
    if !fx.is_finite() {
        return OptimResult { x: x0.to_vec(), f: fx, iters: 0, evals, converged: false, message: "non-finite start".into() };
    }
    let grad = |f: &mut F, x: &DVector<f64>, fx: f64, evals: &mut usize| {
        if opts.forward {
            *evals += n;
            DVector::from_vec(fd_gradient_forward(f, x.as_slice(), fx, opts.fd_step))
        } else {
            *evals += 2 * n;
            DVector::from_vec(fd_gradient(f, x.as_slice(), opts.fd_step))
        }
    };
    let mut g = grad(&mut f, &x, fx, &mut evals);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut small_steps = 0;
    let mut failures = 0;
    let mut message = String::from("iteration limit");
    let mut converged = false;
    let mut iters = 0;
    while iters < opts.max_iter {
        iters += 1;
        if g.amax() < opts.gtol {
            converged = true;
            message = "gradient tolerance".into();
            break;
        }
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if slope >= 0.0 || !slope.is_finite() {
            h = DMatrix::identity(n, n);
            d = -g.clone();
            slope = g.dot(&d);
        }
        // keep the first trial step moderate in parameter space
        let dn = d.amax();
        let mut t = if dn > 1.0 { 1.0 / dn } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let xn = &x + &d * t;
            let fnew = f(xn.as_slice());
            evals += 1;
            if fnew.is_finite() && fnew <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fnew));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            failures += 1;
            if failures >= 2 {
                message = "line search failed".into();
                // a failed search at a near-stationary point is a normal finish
                converged = g.amax() < 1e3 * opts.gtol;
                break;
            }
            h = DMatrix::identity(n, n);
            scaled = false;
            continue;
        };
        failures = 0;
        let gn = grad(&mut f, &xn, fnew, &mut evals);
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        let rel = (fx - fnew).abs() / (fx.abs() + 1e-10);
        x = xn;
        g = gn;
        fx = fnew;
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                h = DMatrix::identity(n, n) * (sy / y.dot(&y));
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρsyᵀ)H(I − ρysᵀ) + ρssᵀ
            h = &h - (&hy * s.transpose() + &s * hy.transpose()) * rho + (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        if rel < opts.ftol {
            small_steps += 1;
            if small_steps >= 3 {
                converged = true;
                message = "objective tolerance".into();
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    OptimResult { x: x.as_slice().to_vec(), f: fx, iters, evals, converged, message }
}

/// Central-difference Hessian.
pub fn hessian<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], rel: f64) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let h: Vec<f64> = x.iter().map(|v| rel * v.abs().max(1.0)).collect();
    let mut xp = x.to_vec();
    let mut out = DMatrix::zeros(n, n);
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for i in 0..n {
        xp[i] = x[i] + h[i];
        fp[i] = f(&xp);
        xp[i] = x[i] - h[i];
        fm[i] = f(&xp);
        xp[i] = x[i];
        out[(i, i)] = (fp[i] - 2.0 * f0 + fm[i]) / (h[i] * h[i]);
    }
    for i in 0..n {
        for j in 0..i {
            let mut e = |si: f64, sj: f64| {
                xp[i] = x[i] + si * h[i];
                xp[j] = x[j] + sj * h[j];
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0)) / (4.0 * h[i] * h[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosen(x: &[f64]) -> f64 {
        (0..x.len() - 1).map(|i| 100.0 * (x[i + 1] - x[i] * x[i]).powi(2) + (1.0 - x[i]).powi(2)).sum()
    }

    #[test]
    fn bfgs_solves_rosenbrock() {
        let r = bfgs(rosen, &[-1.2, 1.0, -0.5, 0.3], &BfgsOptions { gtol: 1e-7, ..Default::default() });
        assert!(r.x.iter().all(|v| (v - 1.0).abs() < 1e-5), "{:?}", r);
    }

    #[test]
    fn simplex_solves_quadratic() {
        let q = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2) + x[0] * x[1];
        let r = nelder_mead(q, &[0.0, 0.0], 0.5, 5000, 1e-14);
        let b = bfgs(q, &[0.0, 0.0], &BfgsOptions::default());
        assert!((r.f - b.f).abs() < 1e-10);
    }

    #[test]
    fn hessian_of_quadratic_is_exact() {
        let q = |x: &[f64]| 2.0 * x[0] * x[0] + x[0] * x[1] + 0.5 * x[1] * x[1];
        let h = hessian(q, &[0.3, -0.7], 1e-4);
        assert!((h[(0, 0)] - 4.0).abs() < 1e-6 && (h[(0, 1)] - 1.0).abs() < 1e-6 && (h[(1, 1)] - 1.0).abs() < 1e-6);
    }
}
