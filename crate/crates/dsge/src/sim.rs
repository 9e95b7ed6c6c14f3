//! Simulation under the three solution methods.
//!
//! All methods work with the effective rate `e = (1−λ*)î + λ*î*`, which by
//! substituting the shadow-rate rule equals `(1−ξ*)î + ξ*î^Taylor`. The
//! constraint binds exactly when `î^Taylor < b`.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::params::DSGEParams;
use crate::rules::{solve_linear_re, DecisionRules};
use crate::{DsgeError, Result};

pub const OCCBIN_HORIZON: usize = 200;
pub const OCCBIN_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Prop2,
    Occbin,
    /// No lower bound: `î = î*` throughout.
    Linear,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Prop2 => "prop2",
            Method::Occbin => "occbin",
            Method::Linear => "linear",
        }
    }
}

/// Predetermined state entering period `t`: the lagged effective rate and
/// the lagged exogenous processes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub e: f64,
    pub za: f64,
    pub zb: f64,
}

/// Innovation paths `(εⁱ, εᵃ, εᵇ)`, one entry per period.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Shocks {
    pub i: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Shocks {
    pub fn zeros(t: usize) -> Self {
        Shocks { i: vec![0.0; t], a: vec![0.0; t], b: vec![0.0; t] }
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    fn check(&self) -> Result<()> {
        if self.a.len() != self.i.len() || self.b.len() != self.i.len() {
            return Err(DsgeError::Invalid("shock paths differ in length".into()));
        }
        if self.i.iter().chain(&self.a).chain(&self.b).any(|v| !v.is_finite()) {
            return Err(DsgeError::Invalid("non-finite shock".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPath {
    pub method: Method,
    pub init: State,
    pub y: Vec<f64>,
    pub pi: Vec<f64>,
    pub i: Vec<f64>,
    pub istar: Vec<f64>,
    pub itaylor: Vec<f64>,
    /// Effective rate `(1−λ*)î + λ*î*`.
    pub eff: Vec<f64>,
    pub za: Vec<f64>,
    pub zb: Vec<f64>,
    pub at_elb: Vec<bool>,
    /// One-step expectations used by the producing method.
    pub ey: Vec<f64>,
    pub epi: Vec<f64>,
}

impl SimPath {
    fn new(method: Method, init: State, t: usize) -> Self {
        let v = || Vec::with_capacity(t);
        SimPath {
            method,
            init,
            y: v(),
            pi: v(),
            i: v(),
            istar: v(),
            itaylor: v(),
            eff: v(),
            za: v(),
            zb: v(),
            at_elb: Vec::with_capacity(t),
            ey: v(),
            epi: v(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// State entering the period after the last one.
    pub fn terminal_state(&self) -> State {
        match self.len() {
            0 => self.init,
            n => State { e: self.eff[n - 1], za: self.za[n - 1], zb: self.zb[n - 1] },
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, p: &DSGEParams, y: f64, pi: f64, it: f64, e: f64, za: f64, zb: f64, bounded: bool, ey: f64, epi: f64) {
        let bind = bounded && it < p.b;
        let (i, istar) = if bind { (p.b, -p.alpha * p.b + (1.0 + p.alpha) * it) } else { (it, it) };
        self.y.push(y);
        self.pi.push(pi);
        self.i.push(i);
        self.istar.push(istar);
        self.itaylor.push(it);
        self.eff.push(e);
        self.za.push(za);
        self.zb.push(zb);
        self.at_elb.push(bind);
        self.ey.push(ey);
        self.epi.push(epi);
    }
}

/// Current-period loadings of the closed-form (`prop2`) solution, where `y` and `π`
/// are affine in the effective rate given the exogenous state.
struct Prop2 {
    r: DecisionRules,
    a_y: f64,
    a_p: f64,
    g: f64,
}

impl Prop2 {
    fn new(p: &DSGEParams) -> Result<Self> {
        let r = solve_linear_re(p)?;
        let a_y = r.d_yis - (1.0 - r.d_pis) / p.sigma;
        let a_p = p.delta * r.d_pis + p.kappa * a_y;
        let g = (1.0 - p.rho_i) * (p.r_pi * a_p + p.r_y * a_y);
        if 1.0 - g <= 0.0 || 1.0 - p.xi_star() * g <= 0.0 {
            return Err(DsgeError::Singular("current-period system is not coherent".into()));
        }
        Ok(Prop2 { r, a_y, a_p, g })
    }

    /// Parts of `y` and `π` that do not depend on the current rate.
    fn h(&self, p: &DSGEParams, za: f64, zb: f64) -> (f64, f64) {
        let r = &self.r;
        let hy = p.rho_a * (r.d_ya + r.d_pa / p.sigma) * za + (p.rho_b * (r.d_yb + r.d_pb / p.sigma) - p.chi_b) * zb;
        let hp = p.delta * (p.rho_a * r.d_pa * za + p.rho_b * r.d_pb * zb) + p.kappa * hy - p.chi_a * za;
        (hy, hp)
    }

    fn expect(&self, e: f64, za: f64, zb: f64) -> (f64, f64) {
        let r = &self.r;
        (
            r.d_yis * e + r.rho_a * r.d_ya * za + r.rho_b * r.d_yb * zb,
            r.d_pis * e + r.rho_a * r.d_pa * za + r.rho_b * r.d_pb * zb,
        )
    }
}

fn run_prop2(p: &DSGEParams, shocks: &Shocks, init: State, bounded: bool, method: Method) -> Result<SimPath> {
    p.validate()?;
    shocks.check()?;
    let m = Prop2::new(p)?;
    let xi = p.xi_star();
    let mut out = SimPath::new(method, init, shocks.len());
    let mut st = init;
    for t in 0..shocks.len() {
        let za = p.rho_a * st.za + shocks.a[t];
        let zb = p.rho_b * st.zb + shocks.b[t];
        let (hy, hp) = m.h(p, za, zb);
        let s = p.rho_i * st.e + (1.0 - p.rho_i) * (p.r_pi * hp + p.r_y * hy) + shocks.i[t];
        let slack = s / (1.0 - m.g);
        let (e, it) = if !bounded || slack >= p.b {
            (slack, slack)
        } else {
            let e = ((1.0 - xi) * p.b + xi * s) / (1.0 - xi * m.g);
            (e, s + m.g * e)
        };
        let (y, pi) = (m.a_y * e + hy, m.a_p * e + hp);
        let (ey, epi) = m.expect(e, za, zb);
        out.push(p, y, pi, it, e, za, zb, bounded, ey, epi);
        st = State { e, za, zb };
    }
    Ok(out)
}

/// Piecewise-linear solution in which agents form expectations with the
/// fully effective rules and the current period is solved under the true
/// `ξ*`.
pub fn simulate_prop2(p: &DSGEParams, shocks: &Shocks, init: State) -> Result<SimPath> {
    run_prop2(p, shocks, init, true, Method::Prop2)
}

/// The economy without a lower bound.
pub fn simulate_linear(p: &DSGEParams, shocks: &Shocks, init: State) -> Result<SimPath> {
    run_prop2(p, shocks, init, false, Method::Linear)
}

/// Affine map from `(e_{s−1}, zᵃ_s, zᵇ_s, 1)` to `(ŷ, π̂, î^Taylor, e)_s`.
type Rule = Matrix4<f64>;

fn terminal_rule(r: &DecisionRules) -> Rule {
    Matrix4::new(
        r.d_yis, r.d_ya, r.d_yb, 0.0,
        r.d_pis, r.d_pa, r.d_pb, 0.0,
        r.d_isis, r.d_isa, r.d_isb, 0.0,
        r.d_isis, r.d_isa, r.d_isb, 0.0,
    )
}

struct Plan {
    y: Vec<f64>,
    pi: Vec<f64>,
    it: Vec<f64>,
    e: Vec<f64>,
}

/// Perfect-foresight path under a guessed regime sequence, solved backwards
/// from the linear rule.
fn plan_for(p: &DSGEParams, term: &Rule, st: State, z0: (f64, f64), eps_i: f64, regimes: &[bool]) -> Result<Plan> {
    let h = regimes.len();
    let xi = p.xi_star();
    let (s_inv, ra, rb) = (1.0 / p.sigma, p.rho_a, p.rho_b);
    let mut rules = vec![Rule::zeros(); h];
    let mut next = *term;
    for s in (0..h).rev() {
        let (ny, np) = (next.row(0), next.row(1));
        let m = Matrix4::new(
            1.0, 0.0, 0.0, -ny[0] + s_inv - np[0] * s_inv,
            -p.kappa, 1.0, 0.0, -p.delta * np[0],
            -(1.0 - p.rho_i) * p.r_y, -(1.0 - p.rho_i) * p.r_pi, 1.0, 0.0,
            0.0, 0.0, if regimes[s] { -xi } else { -1.0 }, 1.0,
        );
        let shock = if s == 0 { eps_i } else { 0.0 };
        let rhs = Matrix4::new(
            0.0, ra * (ny[1] + np[1] * s_inv), rb * (ny[2] + np[2] * s_inv) - p.chi_b, ny[3] + np[3] * s_inv,
            0.0, p.delta * np[1] * ra - p.chi_a, p.delta * np[2] * rb, p.delta * np[3],
            p.rho_i, 0.0, 0.0, shock,
            0.0, 0.0, 0.0, if regimes[s] { (1.0 - xi) * p.b } else { 0.0 },
        );
        let rule = m.lu().solve(&rhs).ok_or_else(|| DsgeError::Singular(format!("period {s} of the regime plan")))?;
        rules[s] = rule;
        next = rule;
    }
    let mut plan = Plan { y: Vec::with_capacity(h), pi: Vec::with_capacity(h), it: Vec::with_capacity(h), e: Vec::with_capacity(h) };
    let (mut e_lag, mut za, mut zb) = (st.e, z0.0, z0.1);
    for rule in &rules {
        let u = rule * Vector4::new(e_lag, za, zb, 1.0);
        plan.y.push(u[0]);
        plan.pi.push(u[1]);
        plan.it.push(u[2]);
        plan.e.push(u[3]);
        e_lag = u[3];
        za *= ra;
        zb *= rb;
    }
    Ok(plan)
}

/// Piecewise-linear guess-and-verify solution. Each period's innovations are
/// unanticipated, and the regime sequence is re-solved from that period on.
pub fn solve_occbin(p: &DSGEParams, init: State, shocks: &Shocks, horizon: usize) -> Result<SimPath> {
    p.validate()?;
    shocks.check()?;
    if horizon < 2 {
        return Err(DsgeError::Invalid("horizon must be at least 2".into()));
    }
    let r = solve_linear_re(p)?;
    let term = terminal_rule(&r);
    let mut out = SimPath::new(Method::Occbin, init, shocks.len());
    let mut st = init;
    let mut guess = vec![false; horizon];
    for t in 0..shocks.len() {
        let za = p.rho_a * st.za + shocks.a[t];
        let zb = p.rho_b * st.zb + shocks.b[t];
        let mut iter = 0;
        let plan = loop {
            if iter == OCCBIN_MAX_ITER {
                return Err(DsgeError::NoConvergence(OCCBIN_MAX_ITER));
            }
            iter += 1;
            let plan = plan_for(p, &term, st, (za, zb), shocks.i[t], &guess)?;
            let implied: Vec<bool> = plan.it.iter().map(|v| *v < p.b).collect();
            if implied[horizon - 1] {
                return Err(DsgeError::Horizon(horizon));
            }
            if implied == guess {
                break plan;
            }
            guess = implied;
        };
        // Expectations are the planned values one period ahead.
        out.push(p, plan.y[0], plan.pi[0], plan.it[0], plan.e[0], za, zb, true, plan.y[1], plan.pi[1]);
        st = State { e: plan.e[0], za, zb };
        guess.rotate_left(1);
        guess[horizon - 1] = false;
    }
    Ok(out)
}

/// Dispatch on the solution method.
pub fn simulate(p: &DSGEParams, method: Method, shocks: &Shocks, init: State) -> Result<SimPath> {
    match method {
        Method::Prop2 => simulate_prop2(p, shocks, init),
        Method::Occbin => solve_occbin(p, init, shocks, OCCBIN_HORIZON),
        Method::Linear => simulate_linear(p, shocks, init),
    }
}

/// Largest absolute residual of the model equations along a path, using the
/// path's own expectations.
pub fn equation_residuals(p: &DSGEParams, path: &SimPath, shocks: &Shocks) -> f64 {
    let mut worst: f64 = 0.0;
    let mut lag = path.init;
    for t in 0..path.len() {
        let (y, pi, i, is, it, e) = (path.y[t], path.pi[t], path.i[t], path.istar[t], path.itaylor[t], path.eff[t]);
        let res = [
            y - (path.ey[t] - (e - path.epi[t]) / p.sigma - p.chi_b * path.zb[t]),
            pi - (p.delta * path.epi[t] + p.kappa * y - p.chi_a * path.za[t]),
            it - (p.rho_i * lag.e + (1.0 - p.rho_i) * (p.r_pi * pi + p.r_y * y) + shocks.i[t]),
            e - ((1.0 - p.lambda_star) * i + p.lambda_star * is),
            path.za[t] - (p.rho_a * lag.za + shocks.a[t]),
            path.zb[t] - (p.rho_b * lag.zb + shocks.b[t]),
            if path.method == Method::Linear {
                (e - it).abs() + (i - is).abs()
            } else {
                let r1 = is - (-p.alpha * i + (1.0 + p.alpha) * it);
                let r2 = i - is.max(p.b);
                let r3 = if path.at_elb[t] != (is < p.b) { 1.0 } else { 0.0 };
                r1.abs() + r2.abs() + r3
            },
        ];
        worst = res.iter().fold(worst, |w, v| w.max(v.abs()));
        lag = State { e, za: path.za[t], zb: path.zb[t] };
    }
    worst
}
