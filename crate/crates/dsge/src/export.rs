//! The closed-form (`prop2`) solution written as a CKSVAR(1) in `(ŷ, π̂, î)`.
//!
//! With `z_t = R z_{t−1} + ε_t` and `Y1_t = a·e_t + H z_t`, eliminating `z`
//! gives `Y1_t = a·e_t + M(Y1_{t−1} − a·e_{t−1}) + Hε_t` with `M = HRH⁻¹`,
//! and `e_{t−1}` splits into the observed rate and the shadow rate with
//! weights `1−λ*` and `λ*`.

use cksvar::model::{Dims, ModelSpec, StructuralParams, Variant};
use nalgebra::{DMatrix, DVector, Matrix2};

use crate::params::DSGEParams;
use crate::rules::solve_linear_re;
use crate::{DsgeError, Result};

/// Structural CKSVAR parameters and the matching model specification.
/// Structural shocks are ordered `(εᵃ/sd_a, εᵇ/sd_b, εⁱ/sd_i)`.
pub fn export_as_cksvar(p: &DSGEParams) -> Result<(StructuralParams, ModelSpec)> {
    p.validate()?;
    let r = solve_linear_re(p)?;
    let s_inv = 1.0 / p.sigma;
    let a_y = r.d_yis - (1.0 - r.d_pis) * s_inv;
    let a_p = p.delta * r.d_pis + p.kappa * a_y;
    let hya = p.rho_a * (r.d_ya + r.d_pa * s_inv);
    let hyb = p.rho_b * (r.d_yb + r.d_pb * s_inv) - p.chi_b;
    let hpa = p.delta * p.rho_a * r.d_pa - p.chi_a + p.kappa * hya;
    let hpb = p.delta * p.rho_b * r.d_pb + p.kappa * hyb;
    let h = Matrix2::new(hya, hyb, hpa, hpb);
    let h_inv = h.try_inverse().ok_or_else(|| DsgeError::Singular("shock loading of (y, π)".into()))?;
    let m = h * Matrix2::new(p.rho_a, 0.0, 0.0, p.rho_b) * h_inv;
    let a = [a_y, a_p];

    let dims = Dims { k: 3, p: 1, m: 0, intercept: true };
    let lam = p.lambda_star;
    let mut b1 = DMatrix::zeros(2, dims.n_x());
    let mut b12star = DMatrix::zeros(2, 1);
    for row in 0..2 {
        let ma = m[(row, 0)] * a[0] + m[(row, 1)] * a[1];
        b1[(row, dims.col_lag(1, 0))] = m[(row, 0)];
        b1[(row, dims.col_lag(1, 1))] = m[(row, 1)];
        b1[(row, dims.col_lag(1, 2))] = -ma * (1.0 - lam);
        b12star[(row, 0)] = -ma * lam;
    }
    let mut b2 = DVector::zeros(dims.n_x());
    b2[dims.col_lag(1, 2)] = p.rho_i * (1.0 - lam);
    let s = StructuralParams {
        dims,
        beta: DVector::from_vec(a.to_vec()),
        lambda: lam,
        alpha: p.alpha,
        gamma: DVector::from_vec(vec![(1.0 - p.rho_i) * p.r_y, (1.0 - p.rho_i) * p.r_pi]),
        b1,
        b12star,
        b2,
        b22star: DVector::from_element(1, p.rho_i * lam),
        a11inv: DMatrix::from_fn(2, 2, |i, j| h[(i, j)] * [p.sd_a, p.sd_b][j]),
        a22starinv: p.sd_i,
    };
    let variant = if lam == 0.0 && p.alpha == 0.0 {
        Variant::Ksvar
    } else if p.xi_star() == 1.0 {
        Variant::Csvar
    } else {
        Variant::Cksvar
    };
    let mut spec = ModelSpec::new(variant, 1, 2);
    spec.include_intercept = true;
    s.validate()?;
    Ok((s, spec))
}
