//! Identified set of the structural parameters `(ξ, β, γ)` implied by a
//! reduced form, sign-restriction filtering, and shadow-rate paths.
//!
//! Eliminating `β = cβ̃` reduces the two identification equations to a
//! quadratic in the scalar `c` at every `ξ`, so each grid point has at most
//! two solutions. Accepted points must satisfy the coherency conditions
//! `1 − γβ > 0` and `1 − ξγβ > 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irf::Engine;
use crate::likelihood::LatentEstimate;
use crate::model::{self, identification_residual, Dataset, ReducedFormParams, SINGULAR_GUARD};
use crate::period::Quarter;
use crate::serde_mat;

/// Largest residual of the identification equations for an accepted point.
pub const ACCEPT_RESIDUAL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StructuralPoint {
    pub xi: f64,
    #[serde(with = "serde_mat::vector")]
    pub beta: DVector<f64>,
    #[serde(with = "serde_mat::vector")]
    pub gamma: DVector<f64>,
}

impl StructuralPoint {
    pub fn gamma_beta(&self) -> f64 {
        self.gamma.dot(&self.beta)
    }

    pub fn kappa(&self, alpha: f64) -> Result<f64> {
        model::kappa(self.xi, self.gamma_beta(), alpha)
    }

    /// Shift of the reduced-form errors (internal order) produced by a
    /// policy shock of size `shock`.
    pub fn error_shift(&self, shock: f64) -> Result<Vec<f64>> {
        let den = 1.0 - self.gamma_beta();
        if den.abs() < SINGULAR_GUARD {
            return Err(Error::Singular("1 - γβ".into()));
        }
        let mut v: Vec<f64> = self.beta.iter().map(|b| b * shock / den).collect();
        v.push(shock / den);
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { lo: 0.0, hi: 1.0, step: 0.005 }
    }
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || self.hi < self.lo || self.hi > 1.0 {
            return Err(Error::Config("ξ grid needs lo ≤ hi ≤ 1 and a positive step".into()));
        }
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        let mut v: Vec<f64> = (0..=n).map(|i| self.lo + i as f64 * self.step).collect();
        if let Some(last) = v.last_mut() {
            if (*last - self.hi).abs() < 1e-9 {
                *last = self.hi;
            }
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SignViolation {
    pub row: usize,
    pub date: Quarter,
    pub horizon: usize,
    pub variable: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SetPoint {
    pub xi: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub residual: f64,
    pub accepted: bool,
    pub rejection_reason: Option<String>,
    pub violation: Option<SignViolation>,
}

impl SetPoint {
    pub fn point(&self) -> StructuralPoint {
        StructuralPoint {
            xi: self.xi,
            beta: DVector::from_vec(self.beta.clone()),
            gamma: DVector::from_vec(self.gamma.clone()),
        }
    }

    fn rejected(xi: f64, reason: &str) -> Self {
        SetPoint {
            xi,
            beta: Vec::new(),
            gamma: Vec::new(),
            residual: f64::NAN,
            accepted: false,
            rejection_reason: Some(reason.into()),
            violation: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IdentifiedSet {
    pub grid: GridSpec,
    pub betatilde: Vec<f64>,
    pub omega: Vec<Vec<f64>>,
    /// Ordered by ξ, then by solution index.
    pub points: Vec<SetPoint>,
}

impl IdentifiedSet {
    pub fn accepted_points(&self) -> Vec<StructuralPoint> {
        self.points.iter().filter(|p| p.accepted).map(|p| p.point()).collect()
    }

    pub fn accepted_xis(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.points.iter().filter(|p| p.accepted).map(|p| p.xi).collect();
        v.dedup();
        v
    }

    /// Smallest and largest accepted ξ.
    pub fn xi_projection(&self) -> Option<(f64, f64)> {
        let v = self.accepted_xis();
        Some((*v.first()?, *v.last()?))
    }

    pub fn contains_xi(&self, xi: f64, tol: f64) -> bool {
        self.accepted_xis().iter().any(|x| (x - xi).abs() <= tol + 1e-12)
    }

    pub fn is_empty(&self) -> bool {
        !self.points.iter().any(|p| p.accepted)
    }
}

/// Scalars of `Ω` and `β̃` that the identification equations depend on.
struct Moments {
    a: DMatrix<f64>,
    w: DVector<f64>,
    s: f64,
    q_bw: f64,
    q_bb: f64,
    sigma2: f64,
}

impl Moments {
    fn new(omega: &DMatrix<f64>, bt: &DVector<f64>) -> Result<Self> {
        let k = omega.nrows();
        let a = omega.view((0, 0), (k - 1, k - 1)).into_owned();
        let w = omega.view((0, k - 1), (k - 1, 1)).column(0).into_owned();
        let s = omega[(k - 1, k - 1)];
        let ch = a.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let aib = ch.solve(bt);
        let aiw = ch.solve(&w);
        Ok(Moments { q_bw: w.dot(&aib), q_bb: bt.dot(&aib), sigma2: s - w.dot(&aiw), a, w, s })
    }

    /// `γ` from the second identification equation at a given `β`.
    fn gamma(&self, beta: &DVector<f64>) -> Option<DVector<f64>> {
        let m = &self.a - beta * self.w.transpose();
        m.lu().solve(&(&self.w - beta * self.s))
    }
}

/// All solutions at one ξ, with coherency screening.
pub fn solve_at(omega: &DMatrix<f64>, bt: &DVector<f64>, xi: f64) -> Result<Vec<SetPoint>> {
    let mom = Moments::new(omega, bt)?;
    let mut out = Vec::new();
    if bt.amax() == 0.0 {
        let beta = DVector::zeros(bt.len());
        let gamma = mom.gamma(&beta).ok_or_else(|| Error::Singular("Ω11".into()))?;
        out.push(finish(omega, bt, xi, beta, gamma));
        return Ok(out);
    }
    let d = mom.q_bw * mom.q_bw + mom.q_bb * mom.sigma2;
    let qa = (1.0 - xi) * mom.q_bw + xi * d;
    let qb = (1.0 - xi) + (1.0 + xi) * mom.q_bw;
    // qa c² − qb c + 1 = 0
    let mut roots = Vec::new();
    if qa.abs() < 1e-14 {
        if qb.abs() > 1e-14 {
            roots.push(1.0 / qb);
        }
    } else {
        let disc = qb * qb - 4.0 * qa;
        if disc >= 0.0 {
            let q = 0.5 * (qb + qb.signum() * disc.sqrt());
            if q != 0.0 {
                roots.push(q / qa);
                roots.push(1.0 / q);
            }
        }
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    for c in roots {
        // a spurious root introduced by clearing the pole of γ(β)
        if (1.0 - c * mom.q_bw).abs() < 1e-10 {
            continue;
        }
        let c = polish(&mom, bt, xi, c);
        let beta = bt * c;
        if let Some(gamma) = mom.gamma(&beta) {
            out.push(finish(omega, bt, xi, beta, gamma));
        }
    }
    if out.is_empty() {
        out.push(SetPoint::rejected(xi, "no real solution"));
    }
    Ok(out)
}

/// Newton steps on `c(1−ξ) − 1 + ξγ(cβ̃)cβ̃ = 0`.
fn polish(mom: &Moments, bt: &DVector<f64>, xi: f64, mut c: f64) -> f64 {
    let h = |c: f64| -> Option<f64> {
        let beta = bt * c;
        let g = mom.gamma(&beta)?.dot(&beta);
        Some(c * (1.0 - xi) - 1.0 + xi * g)
    };
    for _ in 0..5 {
        let Some(f) = h(c) else { break };
        if f.abs() < 1e-15 {
            break;
        }
        let e = 1e-7 * c.abs().max(1e-3);
        let (Some(fp), Some(fm)) = (h(c + e), h(c - e)) else { break };
        let df = (fp - fm) / (2.0 * e);
        if df == 0.0 || !df.is_finite() {
            break;
        }
        let nc = c - f / df;
        match h(nc) {
            Some(nf) if nf.abs() < f.abs() => c = nc,
            _ => break,
        }
    }
    c
}

fn finish(omega: &DMatrix<f64>, bt: &DVector<f64>, xi: f64, beta: DVector<f64>, gamma: DVector<f64>) -> SetPoint {
    let g = gamma.dot(&beta);
    let residual = identification_residual(omega, bt, xi, &beta, &gamma);
    let reason = if !(1.0 - g > SINGULAR_GUARD) {
        Some("incoherent: 1 - γβ ≤ 0")
    } else if !(1.0 - xi * g > SINGULAR_GUARD) {
        Some("incoherent: 1 - ξγβ ≤ 0")
    } else if !(residual < ACCEPT_RESIDUAL) {
        Some("residual above tolerance")
    } else {
        None
    };
    SetPoint {
        xi,
        beta: beta.iter().copied().collect(),
        gamma: gamma.iter().copied().collect(),
        residual,
        accepted: reason.is_none(),
        rejection_reason: reason.map(String::from),
        violation: None,
    }
}

pub fn solve_identified_set(rf: &ReducedFormParams, grid: &GridSpec) -> Result<IdentifiedSet> {
    rf.check_shapes()?;
    let omega = rf.omega();
    let mut points = Vec::new();
    for xi in grid.values()? {
        points.extend(solve_at(&omega, &rf.betatilde, xi)?);
    }
    Ok(IdentifiedSet {
        grid: *grid,
        betatilde: rf.betatilde.iter().copied().collect(),
        omega: serde_mat::to_rows(&omega),
        points,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    NonNegative,
    NonPositive,
    Free,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SignRule {
    /// Dataset column.
    pub variable: usize,
    pub sign: Sign,
    /// Inclusive horizon range.
    pub horizons: (usize, usize),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SignRestrictionSpec {
    pub rules: Vec<SignRule>,
    /// Policy shock used to evaluate the responses.
    pub shock: f64,
    /// Dataset rows at which the restrictions are enforced; `None` means every
    /// period with a full set of lags.
    pub dates: Option<Vec<usize>>,
    pub draws: usize,
    pub seed: u64,
    /// Slack for Monte Carlo rounding in the sign checks.
    pub tol: f64,
}

impl SignRestrictionSpec {
    /// An expansionary shock raises `nonneg` and lowers `nonpos` over
    /// horizons 0 to 4.
    pub fn monetary(nonneg: &[usize], nonpos: &[usize]) -> Self {
        let rule = |v: usize, sign| SignRule { variable: v, sign, horizons: (0, 4) };
        SignRestrictionSpec {
            rules: nonneg
                .iter()
                .map(|&v| rule(v, Sign::NonNegative))
                .chain(nonpos.iter().map(|&v| rule(v, Sign::NonPositive)))
                .collect(),
            shock: -0.25,
            dates: None,
            draws: 200,
            seed: 0,
            tol: 1e-9,
        }
    }

    pub fn is_vacuous(&self) -> bool {
        self.rules.iter().all(|r| r.sign == Sign::Free)
    }
}

/// Keeps the accepted points whose mean responses obey every sign rule at
/// every enforcement date.
pub fn apply_sign_restrictions(
    set: &IdentifiedSet,
    rf: &ReducedFormParams,
    data: &Dataset,
    latent: &LatentEstimate,
    srs: &SignRestrictionSpec,
) -> Result<IdentifiedSet> {
    let mut out = set.clone();
    if srs.is_vacuous() || set.is_empty() {
        return Ok(out);
    }
    let k = data.k();
    if let Some(r) = srs.rules.iter().find(|r| r.variable >= k || r.horizons.0 > r.horizons.1) {
        return Err(Error::Config(format!("invalid sign rule {r:?}")));
    }
    let hmax = srs.rules.iter().map(|r| r.horizons.1).max().unwrap_or(0);
    let eng = Engine::new(rf, data, latent, hmax, srs.draws, srs.seed, true)?;
    let rows: Vec<usize> = match &srs.dates {
        Some(d) => d.clone(),
        None => (rf.dims.p..data.t()).collect(),
    };
    let names = data.endog_names();
    let flat = vec![false; k];
    for sp in out.points.iter_mut().filter(|p| p.accepted) {
        let pt = sp.point();
        'dates: for &row in &rows {
            let (mean, _) = eng.response(&pt, srs.shock, row, &flat)?;
            for h in 0..=hmax {
                for rule in &srs.rules {
                    if h < rule.horizons.0 || h > rule.horizons.1 {
                        continue;
                    }
                    let v = mean[(h, rule.variable)];
                    let bad = match rule.sign {
                        Sign::NonNegative => v < -srs.tol,
                        Sign::NonPositive => v > srs.tol,
                        Sign::Free => false,
                    };
                    if bad {
                        sp.accepted = false;
                        sp.rejection_reason = Some("sign restriction".into());
                        sp.violation = Some(SignViolation {
                            row,
                            date: data.dates[row],
                            horizon: h,
                            variable: names[rule.variable].clone(),
                            value: v,
                        });
                        break 'dates;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Structural shadow rate implied by a point: the observed rate above the
/// bound, `κȲ2 + (1−κ)b` below it.
pub fn shadow_rate_path(point: &StructuralPoint, alpha: f64, latent: &LatentEstimate, bound: &[f64]) -> Result<Vec<f64>> {
    if bound.len() != latent.ybar.len() {
        return Err(Error::InvalidSpec("bound and latent path lengths differ".into()));
    }
    let kap = point.kappa(alpha)?;
    Ok(latent.ybar.iter().zip(bound).map(|(&y, &b)| if y < b { kap * y + (1.0 - kap) * b } else { y }).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShadowBand {
    pub dates: Vec<Quarter>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub observed: Vec<f64>,
    pub alpha: f64,
}

/// Per-period band of shadow rates over the accepted points. With
/// `quantiles`, the 5% and 95% smoothed quantiles replace the smoothed mean
/// at the bound, so the band also reflects filtering uncertainty.
pub fn shadow_rate_envelope(
    set: &IdentifiedSet,
    alpha: f64,
    latent: &LatentEstimate,
    data: &Dataset,
    quantiles: bool,
) -> Result<ShadowBand> {
    let points = set.accepted_points();
    if points.is_empty() {
        return Err(Error::InvalidSpec("identified set has no accepted points".into()));
    }
    let t = data.t();
    let mut lo_path = latent.clone();
    let mut hi_path = latent.clone();
    if quantiles {
        for r in &latent.rows {
            lo_path.ybar[r.row] = r.smoothed_q[0];
            hi_path.ybar[r.row] = r.smoothed_q[2];
        }
    }
    let mut lower = vec![f64::INFINITY; t];
    let mut upper = vec![f64::NEG_INFINITY; t];
    for pt in &points {
        for path in [&lo_path, &hi_path] {
            let s = shadow_rate_path(pt, alpha, path, &data.bound)?;
            for i in 0..t {
                lower[i] = lower[i].min(s[i]);
                upper[i] = upper[i].max(s[i]);
            }
        }
    }
    Ok(ShadowBand { dates: data.dates.clone(), lower, upper, observed: data.y2(), alpha })
}
