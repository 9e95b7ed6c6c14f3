//! Rational-expectations solution with fully effective UMP, by undetermined
//! coefficients on the state `(î*_{t−1}, zᵃ, zᵇ)`.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::params::DSGEParams;
use crate::{DsgeError, Result};

/// Tolerance on the state-space conditions checked after solving.
pub const RULE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRules {
    pub d_yis: f64,
    pub d_yi: f64,
    pub d_ya: f64,
    pub d_yb: f64,
    pub d_pis: f64,
    pub d_pi: f64,
    pub d_pa: f64,
    pub d_pb: f64,
    pub d_isis: f64,
    pub d_isi: f64,
    pub d_isa: f64,
    pub d_isb: f64,
    pub rho_a: f64,
    pub rho_b: f64,
}

impl DecisionRules {
    /// Loading of `y_t = (ŷ, π̂, î*)` on `x_{t−1} = (î*, zᵃ, zᵇ)`.
    pub fn c(&self) -> Matrix3<f64> {
        let (ra, rb) = (self.rho_a, self.rho_b);
        Matrix3::new(
            self.d_yis, ra * self.d_ya, rb * self.d_yb,
            self.d_pis, ra * self.d_pa, rb * self.d_pb,
            self.d_isis, ra * self.d_isa, rb * self.d_isb,
        )
    }

    /// Loading of `y_t` on `(εⁱ, εᵃ, εᵇ)`.
    pub fn d(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.d_yi, self.d_ya, self.d_yb,
            self.d_pi, self.d_pa, self.d_pb,
            self.d_isi, self.d_isa, self.d_isb,
        )
    }

    pub fn a(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.d_isis, self.rho_a * self.d_isa, self.rho_b * self.d_isb,
            0.0, self.rho_a, 0.0,
            0.0, 0.0, self.rho_b,
        )
    }

    pub fn b(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.d_isi, self.d_isa, self.d_isb,
            0.0, 1.0, 0.0,
            0.0, 0.0, 1.0,
        )
    }

    /// VAR(1) coefficient `C·B·D⁻¹`.
    pub fn g(&self) -> Result<Matrix3<f64>> {
        let dinv = self.d().try_inverse().ok_or_else(|| DsgeError::Singular("shock loading D".into()))?;
        Ok(self.c() * self.b() * dinv)
    }

    /// `‖A − B·D⁻¹·C‖∞`, zero exactly when `y_t` is a VAR(1).
    pub fn var1_residual(&self) -> Result<f64> {
        var1_residual(&self.a(), &self.b(), &self.c(), &self.d())
    }
}

pub fn var1_residual(a: &Matrix3<f64>, b: &Matrix3<f64>, c: &Matrix3<f64>, d: &Matrix3<f64>) -> Result<f64> {
    let dinv = d.try_inverse().ok_or_else(|| DsgeError::Singular("shock loading D".into()))?;
    Ok(inf_norm(&(a - b * dinv * c)))
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &Matrix3<f64>) -> f64 {
    (0..3).map(|r| m.row(r).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_eval(c: &[f64], x: f64) -> (f64, f64) {
    let (mut v, mut d) = (0.0, 0.0);
    for &a in c.iter().rev() {
        d = d * x + v;
        v = v * x + a;
    }
    (v, d)
}

/// Root moduli and real roots of a polynomial (coefficients low to high).
fn poly_roots(c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = c.len() - 1;
    let lead = c[n];
    let mut comp = DMatrix::zeros(n, n);
    for i in 0..n {
        comp[(0, i)] = -c[n - 1 - i] / lead;
        if i + 1 < n {
            comp[(i + 1, i)] = 1.0;
        }
    }
    let ev = comp.complex_eigenvalues();
    let moduli = ev.iter().map(|z| z.norm()).collect();
    let real = ev.iter().filter(|z| z.im.abs() < 1e-10 * (1.0 + z.re.abs())).map(|z| z.re).collect();
    (moduli, real)
}

/// Decision rules under `ξ* = 1`, whatever `ξ*` the parameters carry.
pub fn solve_linear_re(p: &DSGEParams) -> Result<DecisionRules> {
    p.validate()?;
    let DSGEParams { sigma, delta, kappa, rho_i, r_pi, r_y, rho_a, rho_b, chi_a, chi_b, .. } = *p;

    // Coefficient D on the lagged rate solves
    // (D − ρᵢ)Q(D) + (1 − ρᵢ)D(r_π κ + r_y(1 − δD)) = 0,
    // Q(D) = σ(1 − D)(1 − δD) − κD.
    let q = [sigma, -sigma * (1.0 + delta) - kappa, sigma * delta];
    let mut cubic = poly_mul(&[-rho_i, 1.0], &q);
    cubic[1] += (1.0 - rho_i) * (r_pi * kappa + r_y);
    cubic[2] -= (1.0 - rho_i) * r_y * delta;
    let (moduli, real) = poly_roots(&cubic);
    let n_stable = moduli.iter().filter(|m| **m < 1.0).count();
    if n_stable != 1 {
        return Err(DsgeError::Indeterminate(n_stable));
    }
    let mut big_d = *real
        .iter()
        .filter(|r| r.abs() < 1.0)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .ok_or(DsgeError::Indeterminate(0))?;
    for _ in 0..3 {
        let (v, dv) = poly_eval(&cubic, big_d);
        if dv != 0.0 {
            big_d -= v / dv;
        }
    }
    let qd = sigma * (1.0 - big_d) * (1.0 - delta * big_d) - kappa * big_d;
    if qd.abs() < 1e-14 || (1.0 - delta * big_d).abs() < 1e-14 {
        return Err(DsgeError::Singular("state coefficient".into()));
    }
    let d_yis = -big_d * (1.0 - delta * big_d) / qd;
    let d_pis = kappa * d_yis / (1.0 - delta * big_d);

    // Policy shock: y and π load on î* through c_y.
    let c_y = d_yis - 1.0 / sigma + d_pis / sigma;
    let c_p = delta * d_pis + kappa * c_y;
    let denom = 1.0 - (1.0 - rho_i) * (r_pi * c_p + r_y * c_y);
    if denom.abs() < 1e-14 {
        return Err(DsgeError::Singular("policy-shock loading".into()));
    }
    let d_isi = 1.0 / denom;
    let d_yi = c_y * d_isi;
    let d_pi = c_p * d_isi;

    // Exogenous shocks: three linear equations each in (d_y, d_π, d_i*).
    let shock = |rho: f64, fy: f64, fp: f64| -> Result<Vector3<f64>> {
        let m = Matrix3::new(
            1.0 - rho, -rho / sigma, -(d_yis - 1.0 / sigma + d_pis / sigma),
            -kappa, 1.0 - delta * rho, -delta * d_pis,
            -(1.0 - rho_i) * r_y, -(1.0 - rho_i) * r_pi, 1.0,
        );
        m.lu().solve(&Vector3::new(fy, fp, 0.0)).ok_or_else(|| DsgeError::Singular("shock loadings".into()))
    };
    let va = shock(rho_a, 0.0, -chi_a)?;
    let vb = shock(rho_b, -chi_b, 0.0)?;

    let r = DecisionRules {
        d_yis,
        d_yi,
        d_ya: va[0],
        d_yb: vb[0],
        d_pis,
        d_pi,
        d_pa: va[1],
        d_pb: vb[1],
        d_isis: big_d,
        d_isi,
        d_isa: va[2],
        d_isb: vb[2],
        rho_a,
        rho_b,
    };
    let ratio = r.d_isis / r.d_isi;
    let m1 = (r.d_yis - r.d_yi * ratio).abs();
    let m2 = (r.d_pis - r.d_pi * ratio).abs();
    if m1 > RULE_TOL * (1.0 + r.d_yis.abs()) || m2 > RULE_TOL * (1.0 + r.d_pis.abs()) {
        return Err(DsgeError::Singular(format!("matching identities fail by {m1:e}, {m2:e}")));
    }
    Ok(r)
}

/// Loadings of the long yield on `(î*, zᵃ, zᵇ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongRateRules {
    pub f_is: f64,
    pub f_a: f64,
    pub f_b: f64,
}

/// Forward solution of `R_t = ((R̄−μ)/R̄) î*_t + (μ/R̄) E_t R_{t+1}`.
pub fn long_rate_rules(r: &DecisionRules, mu: f64, rl_bar: f64) -> Result<LongRateRules> {
    if !(mu >= 0.0 && rl_bar > 0.0 && mu / rl_bar < 1.0) {
        return Err(DsgeError::Invalid("need 0 <= mu / rl_bar < 1".into()));
    }
    let (k0, m) = ((rl_bar - mu) / rl_bar, mu / rl_bar);
    if (m * r.d_isis).abs() >= 1.0 || (m * r.rho_a).abs() >= 1.0 || (m * r.rho_b).abs() >= 1.0 {
        return Err(DsgeError::Invalid("long-rate recursion does not converge".into()));
    }
    let f_is = k0 / (1.0 - m * r.d_isis);
    Ok(LongRateRules {
        f_is,
        f_a: m * f_is * r.d_isa * r.rho_a / (1.0 - m * r.rho_a),
        f_b: m * f_is * r.d_isb * r.rho_b / (1.0 - m * r.rho_b),
    })
}

impl LongRateRules {
    /// `(C̃, D̃)` for `(ŷ, π̂, R̂_L)`.
    pub fn system(&self, r: &DecisionRules) -> (Matrix3<f64>, Matrix3<f64>) {
        let mut c = r.c();
        let mut d = r.d();
        let la = self.f_is * r.d_isa + self.f_a;
        let lb = self.f_is * r.d_isb + self.f_b;
        c[(2, 0)] = self.f_is * r.d_isis;
        c[(2, 1)] = r.rho_a * la;
        c[(2, 2)] = r.rho_b * lb;
        d[(2, 0)] = self.f_is * r.d_isi;
        d[(2, 1)] = la;
        d[(2, 2)] = lb;
        (c, d)
    }

    pub fn var1_residual(&self, r: &DecisionRules) -> Result<f64> {
        let (c, d) = self.system(r);
        var1_residual(&r.a(), &r.b(), &c, &d)
    }
}
