use serde::{Deserialize, Serialize};

use crate::{DsgeError, Result};

/// Coefficients of the log-linear system. Rates, inflation and output are in
/// percent deviations from steady state at a quarterly rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DSGEParams {
    pub sigma: f64,
    pub delta: f64,
    pub kappa: f64,
    pub rho_i: f64,
    pub r_pi: f64,
    pub r_y: f64,
    pub rho_a: f64,
    pub rho_b: f64,
    pub chi_a: f64,
    pub chi_b: f64,
    /// QE effectiveness.
    pub lambda_star: f64,
    /// Forward-guidance strength.
    pub alpha: f64,
    /// Lower bound on the short rate in deviation units.
    pub b: f64,
    /// Innovation standard deviations, used only when shocks are drawn.
    pub sd_i: f64,
    pub sd_a: f64,
    pub sd_b: f64,
}

impl DSGEParams {
    /// The illustrative calibration, with fully effective UMP. The bound is
    /// `−100(1 − δ)`, the zero net rate at zero steady-state inflation.
    pub fn calibration() -> Self {
        let d = derive_reduced_params(&DeepParams::calibration(), 2.0, 0.997, 0.9).expect("calibration is valid");
        DSGEParams {
            sigma: 2.0,
            delta: 0.997,
            kappa: d.kappa,
            rho_i: 0.7,
            r_pi: 1.5,
            r_y: 0.5,
            rho_a: 0.9,
            rho_b: 0.9,
            chi_a: d.chi_a,
            chi_b: d.chi_b,
            lambda_star: 1.0,
            alpha: 0.0,
            b: -100.0 * (1.0 - 0.997),
            sd_i: 0.1,
            sd_a: 0.5,
            sd_b: 0.5,
        }
    }

    pub fn xi_star(&self) -> f64 {
        self.lambda_star * (1.0 + self.alpha)
    }

    /// Same model with UMP effectiveness `xi`, normalized to `α = 0`.
    pub fn with_xi(mut self, xi: f64) -> Self {
        self.lambda_star = xi;
        self.alpha = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DsgeError::Invalid(m.into()));
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("discount factor must lie in (0, 1)");
        }
        if self.r_pi <= 1.0 {
            return bad("the inflation response must exceed one");
        }
        if !(0.0..1.0).contains(&self.rho_a) || !(0.0..1.0).contains(&self.rho_b) {
            return bad("shock persistence must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.rho_i) {
            return bad("rate smoothing must lie in [0, 1)");
        }
        if self.b > 0.0 {
            return bad("the bound must be nonpositive");
        }
        if self.sigma <= 0.0 || self.kappa <= 0.0 {
            return bad("sigma and kappa must be positive");
        }
        if !(0.0..=1.0).contains(&self.lambda_star) || self.alpha < 0.0 {
            return bad("need lambda_star in [0, 1] and alpha >= 0");
        }
        if [self.sd_i, self.sd_a, self.sd_b].iter().any(|s| *s < 0.0) {
            return bad("negative shock standard deviation");
        }
        Ok(())
    }
}

/// Household, firm and bond-market primitives behind the reduced
/// coefficients. `calvo` is the probability that a firm cannot reset its
/// price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeepParams {
    pub calvo: f64,
    /// Frisch elasticity.
    pub nu: f64,
    pub theta: f64,
    pub lambda_p: f64,
    pub nu_p: f64,
    pub omega_u: f64,
    pub cu_y: f64,
    pub cr_y: f64,
    /// Steady-state trading cost.
    pub zeta: f64,
    pub rho_zeta: f64,
    /// QE response to the shadow rate.
    pub gamma_qe: f64,
    /// Coupon decay of the long bond.
    pub mu: f64,
    pub rl_bar: f64,
}

impl DeepParams {
    /// Price and labour values of the illustrative calibration. The bond
    /// block is set so that `λ* = 1`.
    pub fn calibration() -> Self {
        let (omega_u, cr_y, zeta, rho_zeta) = (0.5, 1.0, 0.5, 1.0);
        DeepParams {
            calvo: 0.75,
            nu: 0.5,
            theta: 1.0,
            lambda_p: 1.2,
            nu_p: 1.0,
            omega_u,
            cu_y: 1.0,
            cr_y,
            zeta,
            rho_zeta,
            gamma_qe: 1.0 / ((1.0 - omega_u) * cr_y * zeta / (1.0 + zeta) * rho_zeta),
            mu: 0.99,
            rl_bar: 1.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.calvo == 0.0 {
            return Err(DsgeError::Invalid("Calvo probability of zero".into()));
        }
        for (n, v) in [("calvo", self.calvo), ("omega_u", self.omega_u)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(DsgeError::Invalid(format!("{n} = {v} outside (0, 1)")));
            }
        }
        // Consumption shares of output equal one without government spending.
        for (n, v) in [("cu_y", self.cu_y), ("cr_y", self.cr_y)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(DsgeError::Invalid(format!("{n} = {v} outside (0, 1]")));
            }
        }
        if self.nu <= 0.0 || self.zeta <= 0.0 || self.rho_zeta <= 0.0 {
            return Err(DsgeError::Invalid("nu, zeta and rho_zeta must be positive".into()));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) || self.rl_bar <= self.mu {
            return Err(DsgeError::Invalid("need mu in (0, 1] and rl_bar > mu".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedCoefficients {
    pub lambda_star: f64,
    pub kappa: f64,
    pub chi_a: f64,
    pub chi_b: f64,
}

/// Phillips-curve slope and shock loadings under linear production and
/// full indexation, plus the QE effectiveness implied by the bond block.
pub fn derive_reduced_params(dp: &DeepParams, sigma: f64, delta: f64, rho_b: f64) -> Result<ReducedCoefficients> {
    dp.validate()?;
    let c = dp.calvo;
    let slope = (1.0 - c * delta) * (1.0 - c) / c;
    Ok(ReducedCoefficients {
        lambda_star: (1.0 - dp.omega_u) * dp.cr_y * dp.zeta / (1.0 + dp.zeta) * dp.rho_zeta * dp.gamma_qe,
        kappa: slope * (sigma + 1.0 / dp.nu),
        chi_a: slope * (1.0 + dp.nu) / dp.nu,
        chi_b: rho_b / sigma,
    })
}
