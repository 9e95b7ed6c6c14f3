//! Model family types, the structural to reduced-form map, regime detection
//! and regressor construction.
//!
//! Internally the constrained variable is always ordered last: equations
//! `0..k-1` are the unconstrained block `Y1` and equation `k-1` is `Y2`.
//! Regressor columns are `[intercept], lag 1 of all k variables, ..., lag p,
//! exogenous controls`. The latent regressors are lags of the reduced-form
//! shadow value `Ȳ2` (equal to `Y2` whenever the bound is slack) and their
//! coefficients live in a separate `k × p` block.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::period::Quarter;
use crate::serde_mat;

/// Allowed undershoot of the observed constrained variable below its bound.
pub const TOL_BOUND: f64 = 1e-6;
/// Regime detection tolerance for synthetic data.
pub const REGIME_TOL_SYNTHETIC: f64 = 1e-9;
/// Regime detection tolerance for ingested data.
pub const REGIME_TOL_DATA: f64 = 1e-6;
/// Minimum modulus of `1 - ξγβ` and `1 - γβ`.
pub const SINGULAR_GUARD: f64 = 1e-8;
/// Absolute value treated as an exploding simulation.
const OVERFLOW: f64 = 1e8;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Dataset {
    pub dates: Vec<Quarter>,
    #[serde(with = "serde_mat::matrix")]
    pub values: DMatrix<f64>,
    pub bound: Vec<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub exog: DMatrix<f64>,
    /// Endogenous names followed by exogenous names.
    pub names: Vec<String>,
    /// Column of `values` holding the constrained variable.
    pub constrained: usize,
}

impl Dataset {
    pub fn new(
        dates: Vec<Quarter>,
        values: DMatrix<f64>,
        bound: Vec<f64>,
        exog: Option<DMatrix<f64>>,
        names: Vec<String>,
        constrained: usize,
    ) -> Result<Self> {
        let t = values.nrows();
        let exog = exog.unwrap_or_else(|| DMatrix::zeros(t, 0));
        let d = Dataset { dates, values, bound, exog, names, constrained };
        d.validate(TOL_BOUND)?;
        Ok(d)
    }

    pub fn t(&self) -> usize {
        self.values.nrows()
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    pub fn m(&self) -> usize {
        self.exog.ncols()
    }

    pub fn validate(&self, tol_bound: f64) -> Result<()> {
        let t = self.t();
        if self.k() < 2 {
            return Err(Error::InvalidData("need at least two endogenous variables".into()));
        }
        if self.constrained >= self.k() {
            return Err(Error::InvalidData("constrained column out of range".into()));
        }
        if self.dates.len() != t || self.bound.len() != t || self.exog.nrows() != t {
            return Err(Error::InvalidData("series lengths differ".into()));
        }
        if self.names.len() != self.k() + self.m() {
            return Err(Error::InvalidData("expected one name per column".into()));
        }
        if self.dates.windows(2).any(|w| w[1] != w[0].succ()) {
            return Err(Error::InvalidData("dates are not consecutive quarters".into()));
        }
        if let Some(i) = self.values.iter().chain(self.exog.iter()).position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite value at flat index {i}")));
        }
        if let Some(i) = self.bound.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite bound at row {i}")));
        }
        for i in 0..t {
            let y2 = self.values[(i, self.constrained)];
            if y2 < self.bound[i] - tol_bound {
                return Err(Error::InvalidData(format!(
                    "constrained variable {y2} below bound {} at {}",
                    self.bound[i], self.dates[i]
                )));
            }
        }
        Ok(())
    }

    /// Rows `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        let n = end - start;
        Dataset {
            dates: self.dates[start..end].to_vec(),
            values: self.values.rows(start, n).into_owned(),
            bound: self.bound[start..end].to_vec(),
            exog: self.exog.rows(start, n).into_owned(),
            names: self.names.clone(),
            constrained: self.constrained,
        }
    }

    /// Rows between two dates, inclusive.
    pub fn window(&self, start: Quarter, end: Quarter) -> Result<Dataset> {
        let i = self.dates.iter().position(|d| *d == start);
        let j = self.dates.iter().position(|d| *d == end);
        match (i, j) {
            (Some(i), Some(j)) if i <= j => Ok(self.slice(i, j + 1)),
            _ => Err(Error::InvalidData(format!("window {start}..{end} not covered"))),
        }
    }

    pub fn y2(&self) -> Vec<f64> {
        self.values.column(self.constrained).iter().copied().collect()
    }

    pub fn endog_names(&self) -> &[String] {
        &self.names[..self.k()]
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Cksvar,
    Ksvar,
    Csvar,
}

impl Variant {
    pub fn has_latent(self) -> bool {
        !matches!(self, Variant::Ksvar)
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Cksvar => "CKSVAR",
            Variant::Ksvar => "KSVAR",
            Variant::Csvar => "CSVAR",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "cksvar" => Ok(Variant::Cksvar),
            "ksvar" => Ok(Variant::Ksvar),
            "csvar" => Ok(Variant::Csvar),
            _ => Err(format!("unknown variant '{s}'")),
        }
    }
}

/// Which equations each exogenous control enters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum ExogPolicy {
    All,
    /// One entry per exogenous column: dataset indices of the equations it enters.
    Only(Vec<Vec<usize>>),
}

/// A regressor, with variables named by dataset column.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Regressor {
    Intercept,
    Lag { var: usize, lag: usize },
    Exog(usize),
    /// Lag of the latent shadow value.
    Latent(usize),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Restriction {
    Zero { equation: usize, regressor: Regressor },
    /// Zero kink coefficient in the given unconstrained equation.
    BetaTilde { equation: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub p: usize,
    pub constrained_index: usize,
    pub include_intercept: bool,
    pub exog_policy: ExogPolicy,
    #[serde(default)]
    pub restrictions: Vec<Restriction>,
}

impl ModelSpec {
    pub fn new(variant: Variant, p: usize, constrained_index: usize) -> Self {
        ModelSpec {
            variant,
            p,
            constrained_index,
            include_intercept: true,
            exog_policy: ExogPolicy::All,
            restrictions: Vec::new(),
        }
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        ModelSpec { variant, ..self.clone() }
    }

    pub fn with_restrictions(&self, extra: &[Restriction]) -> Self {
        let mut s = self.clone();
        for r in extra {
            if !s.restrictions.contains(r) {
                s.restrictions.push(*r);
            }
        }
        s
    }

    pub fn dims(&self, k: usize, m: usize) -> Dims {
        Dims { k, p: self.p, m, intercept: self.include_intercept }
    }

    /// Free-coefficient pattern implied by the variant, exogenous policy and
    /// zero restrictions.
    pub fn mask(&self, dims: &Dims) -> Result<Mask> {
        let Dims { k, p, m, .. } = *dims;
        if self.p == 0 {
            return Err(Error::InvalidSpec("lag order must be at least 1".into()));
        }
        if self.constrained_index >= k {
            return Err(Error::InvalidSpec("constrained index out of range".into()));
        }
        let nx = dims.n_x();
        let perm = Perm::new(k, self.constrained_index);
        let mut mask = Mask {
            nx,
            k,
            p,
            c: vec![true; k * nx],
            cstar: vec![self.variant.has_latent(); k * p],
            bt: vec![true; k - 1],
        };
        if self.variant == Variant::Csvar {
            for j in 1..=p {
                let col = dims.col_lag(j, k - 1);
                for eq in 0..k {
                    mask.c[eq * nx + col] = false;
                }
            }
            mask.bt.iter_mut().for_each(|b| *b = false);
        }
        if let ExogPolicy::Only(lists) = &self.exog_policy {
            if lists.len() != m {
                return Err(Error::InvalidSpec("exogenous policy needs one list per control".into()));
            }
            for (i, eqs) in lists.iter().enumerate() {
                let col = dims.col_exog(i);
                for eq in 0..k {
                    if !eqs.iter().any(|&e| perm.internal(e) == Some(eq)) {
                        mask.c[eq * nx + col] = false;
                    }
                }
            }
        }
        for r in &self.restrictions {
            match *r {
                Restriction::BetaTilde { equation } => {
                    let eq = perm.internal(equation).filter(|&e| e < k - 1).ok_or_else(|| {
                        Error::InvalidSpec(format!("kink restriction on non-Y1 equation {equation}"))
                    })?;
                    mask.bt[eq] = false;
                }
                Restriction::Zero { equation, regressor } => {
                    let eq = perm
                        .internal(equation)
                        .ok_or_else(|| Error::InvalidSpec(format!("equation {equation} out of range")))?;
                    match regressor {
                        Regressor::Latent(lag) => {
                            if lag == 0 || lag > p {
                                return Err(Error::InvalidSpec(format!("latent lag {lag} out of range")));
                            }
                            mask.cstar[eq * p + lag - 1] = false;
                        }
                        other => {
                            let col = dims.column_of(other, &perm)?;
                            mask.c[eq * nx + col] = false;
                        }
                    }
                }
            }
        }
        Ok(mask)
    }
}

/// Shape of a model: number of endogenous variables, lags, exogenous controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct Dims {
    pub k: usize,
    pub p: usize,
    pub m: usize,
    pub intercept: bool,
}

impl Dims {
    pub fn n_x(&self) -> usize {
        self.intercept as usize + self.k * self.p + self.m
    }

    /// Column of lag `j` (1-based) of internal variable `ivar`.
    pub fn col_lag(&self, j: usize, ivar: usize) -> usize {
        self.intercept as usize + (j - 1) * self.k + ivar
    }

    pub fn col_exog(&self, i: usize) -> usize {
        self.intercept as usize + self.k * self.p + i
    }

    pub fn y2_lag_cols(&self) -> Vec<usize> {
        (1..=self.p).map(|j| self.col_lag(j, self.k - 1)).collect()
    }

    fn column_of(&self, r: Regressor, perm: &Perm) -> Result<usize> {
        match r {
            Regressor::Intercept if self.intercept => Ok(0),
            Regressor::Intercept => Err(Error::InvalidSpec("model has no intercept".into())),
            Regressor::Lag { var, lag } => {
                let iv = perm.internal(var).ok_or_else(|| Error::InvalidSpec(format!("variable {var} out of range")))?;
                if lag == 0 || lag > self.p {
                    return Err(Error::InvalidSpec(format!("lag {lag} out of range")));
                }
                Ok(self.col_lag(lag, iv))
            }
            Regressor::Exog(i) if i < self.m => Ok(self.col_exog(i)),
            Regressor::Exog(i) => Err(Error::InvalidSpec(format!("exogenous column {i} out of range"))),
            Regressor::Latent(_) => unreachable!(),
        }
    }
}

/// Mapping between dataset column order and the internal order with the
/// constrained variable last.
#[derive(Debug, Clone)]
pub struct Perm {
    /// `to_data[i]` is the dataset column of internal variable `i`.
    pub to_data: Vec<usize>,
}

impl Perm {
    pub fn new(k: usize, constrained: usize) -> Self {
        let mut to_data: Vec<usize> = (0..k).filter(|&c| c != constrained).collect();
        to_data.push(constrained);
        Perm { to_data }
    }

    pub fn internal(&self, data_col: usize) -> Option<usize> {
        self.to_data.iter().position(|&c| c == data_col)
    }
}

/// Free-coefficient pattern, row-major by equation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub nx: usize,
    pub k: usize,
    pub p: usize,
    pub c: Vec<bool>,
    pub cstar: Vec<bool>,
    pub bt: Vec<bool>,
}

impl Mask {
    pub fn n_free(&self) -> usize {
        self.c.iter().chain(&self.cstar).chain(&self.bt).filter(|b| **b).count()
    }

    /// True when every free cell of `self` is also free in `other`.
    pub fn nested_in(&self, other: &Mask) -> bool {
        self.nx == other.nx
            && self.k == other.k
            && self.p == other.p
            && self
                .c
                .iter()
                .zip(&other.c)
                .chain(self.cstar.iter().zip(&other.cstar))
                .chain(self.bt.iter().zip(&other.bt))
                .all(|(a, b)| !a || *b)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReducedFormParams {
    pub dims: Dims,
    /// `k × n_x` coefficients on the observed regressors.
    #[serde(with = "serde_mat::matrix")]
    pub c: DMatrix<f64>,
    /// `k × p` coefficients on lags of the reduced-form shadow value.
    #[serde(with = "serde_mat::matrix")]
    pub cstar: DMatrix<f64>,
    #[serde(with = "serde_mat::vector")]
    pub betatilde: DVector<f64>,
    /// Lower-triangular Cholesky factor of Ω.
    #[serde(with = "serde_mat::matrix")]
    pub omega_chol: DMatrix<f64>,
}

impl ReducedFormParams {
    pub fn from_omega(
        dims: Dims,
        c: DMatrix<f64>,
        cstar: DMatrix<f64>,
        betatilde: DVector<f64>,
        omega: &DMatrix<f64>,
    ) -> Result<Self> {
        let chol = omega.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let rf = ReducedFormParams { dims, c, cstar, betatilde, omega_chol: chol.l() };
        rf.check_shapes()?;
        Ok(rf)
    }

    pub fn omega(&self) -> DMatrix<f64> {
        &self.omega_chol * self.omega_chol.transpose()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let Dims { k, p, .. } = self.dims;
        let ok = self.c.shape() == (k, self.dims.n_x())
            && self.cstar.shape() == (k, p)
            && self.betatilde.len() == k - 1
            && self.omega_chol.shape() == (k, k);
        if !ok {
            return Err(Error::InvalidSpec("reduced-form blocks do not conform to dims".into()));
        }
        if (0..k).any(|i| self.omega_chol[(i, i)] <= 0.0 || !self.omega_chol[(i, i)].is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(())
    }

    fn x1_cols(&self) -> Vec<usize> {
        let y2 = self.dims.y2_lag_cols();
        (0..self.dims.n_x()).filter(|c| !y2.contains(c)).collect()
    }

    fn block(&self, rows: std::ops::Range<usize>, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.c[(rows.start + i, cols[j])])
    }

    pub fn c11(&self) -> DMatrix<f64> {
        self.block(0..self.dims.k - 1, &self.x1_cols())
    }

    pub fn c12(&self) -> DMatrix<f64> {
        self.block(0..self.dims.k - 1, &self.dims.y2_lag_cols())
    }

    pub fn c21(&self) -> DMatrix<f64> {
        self.block(self.dims.k - 1..self.dims.k, &self.x1_cols())
    }

    pub fn c22(&self) -> DMatrix<f64> {
        self.block(self.dims.k - 1..self.dims.k, &self.dims.y2_lag_cols())
    }

    pub fn c12star(&self) -> DMatrix<f64> {
        self.cstar.rows(0, self.dims.k - 1).into_owned()
    }

    pub fn c22star(&self) -> DMatrix<f64> {
        self.cstar.rows(self.dims.k - 1, 1).into_owned()
    }

    /// Lag matrices of the above-bound regime, where the shadow lags equal
    /// the observed lags.
    pub fn above_lag_matrices(&self) -> Vec<DMatrix<f64>> {
        let Dims { k, p, .. } = self.dims;
        (1..=p)
            .map(|j| {
                let mut a = DMatrix::from_fn(k, k, |r, v| self.c[(r, self.dims.col_lag(j, v))]);
                for r in 0..k {
                    a[(r, k - 1)] += self.cstar[(r, j - 1)];
                }
                a
            })
            .collect()
    }

    /// Spectral radius of the above-bound companion matrix.
    pub fn spectral_radius(&self) -> f64 {
        companion_radius(&self.above_lag_matrices())
    }

    /// True when the parameters obey the zero pattern of `mask`.
    pub fn respects(&self, mask: &Mask) -> bool {
        let nx = mask.nx;
        let p = mask.p;
        (0..mask.k).all(|r| (0..nx).all(|c| mask.c[r * nx + c] || self.c[(r, c)] == 0.0))
            && (0..mask.k).all(|r| (0..p).all(|j| mask.cstar[r * p + j] || self.cstar[(r, j)] == 0.0))
            && (0..mask.k - 1).all(|i| mask.bt[i] || self.betatilde[i] == 0.0)
    }
}

pub fn companion_radius(lags: &[DMatrix<f64>]) -> f64 {
    let k = lags[0].nrows();
    let p = lags.len();
    let mut comp = DMatrix::zeros(k * p, k * p);
    for (j, a) in lags.iter().enumerate() {
        comp.view_mut((0, j * k), (k, k)).copy_from(a);
    }
    for i in 0..k * (p - 1) {
        comp[(k + i, i)] = 1.0;
    }
    comp.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StructuralParams {
    pub dims: Dims,
    #[serde(with = "serde_mat::vector")]
    pub beta: DVector<f64>,
    pub lambda: f64,
    pub alpha: f64,
    #[serde(with = "serde_mat::vector")]
    pub gamma: DVector<f64>,
    /// `(k-1) × n_x`
    #[serde(with = "serde_mat::matrix")]
    pub b1: DMatrix<f64>,
    /// `(k-1) × p`, on lags of the structural shadow value.
    #[serde(with = "serde_mat::matrix")]
    pub b12star: DMatrix<f64>,
    #[serde(with = "serde_mat::vector")]
    pub b2: DVector<f64>,
    #[serde(with = "serde_mat::vector")]
    pub b22star: DVector<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub a11inv: DMatrix<f64>,
    pub a22starinv: f64,
}

impl StructuralParams {
    pub fn xi(&self) -> f64 {
        self.lambda * (1.0 + self.alpha)
    }

    pub fn gamma_beta(&self) -> f64 {
        self.gamma.dot(&self.beta)
    }

    /// Loading of the reduced-form shadow value on the structural one.
    pub fn kappa(&self) -> Result<f64> {
        kappa(self.xi(), self.gamma_beta(), self.alpha)
    }

    pub fn validate(&self) -> Result<()> {
        let Dims { k, p, .. } = self.dims;
        let nx = self.dims.n_x();
        let ok = self.beta.len() == k - 1
            && self.gamma.len() == k - 1
            && self.b1.shape() == (k - 1, nx)
            && self.b12star.shape() == (k - 1, p)
            && self.b2.len() == nx
            && self.b22star.len() == p
            && self.a11inv.shape() == (k - 1, k - 1);
        if !ok {
            return Err(Error::InvalidSpec("structural blocks do not conform to dims".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) || self.alpha < 0.0 {
            return Err(Error::InvalidSpec("need λ in [0,1] and α ≥ 0".into()));
        }
        if self.a22starinv == 0.0 || self.a11inv.clone().lu().determinant().abs() < 1e-300 {
            return Err(Error::Singular("shock loading matrix".into()));
        }
        Ok(())
    }
}

/// `κ = (1+α)(1−γβ)/(1−ξγβ)`.
pub fn kappa(xi: f64, gamma_beta: f64, alpha: f64) -> Result<f64> {
    let den = 1.0 - xi * gamma_beta;
    if den.abs() < SINGULAR_GUARD {
        return Err(Error::Singular("1 - ξγβ".into()));
    }
    Ok((1.0 + alpha) * (1.0 - gamma_beta) / den)
}

/// Impact responses of `Y1` to a unit shift in the policy shock, above and at
/// the bound.
pub fn impact_multipliers(
    beta: &DVector<f64>,
    gamma: &DVector<f64>,
    xi: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let g = gamma.dot(beta);
    let d_above = 1.0 - g;
    let d_below = 1.0 - xi * g;
    if d_above.abs() < SINGULAR_GUARD || d_below.abs() < SINGULAR_GUARD {
        return Err(Error::Singular("impact multiplier denominator".into()));
    }
    Ok((beta / d_above, beta * (xi / d_below)))
}

/// Reduced-form kink coefficient `β̃ = (1−ξ)β/(1−ξγβ)`.
pub fn betatilde_of(beta: &DVector<f64>, gamma: &DVector<f64>, xi: f64) -> Result<DVector<f64>> {
    let den = 1.0 - xi * gamma.dot(beta);
    if den.abs() < SINGULAR_GUARD {
        return Err(Error::Singular("1 - ξγβ".into()));
    }
    Ok(beta * ((1.0 - xi) / den))
}

/// Map from reduced-form errors to the structural-form errors
/// `e1 = u1 − βu2`, `e2 = u2 − γu1`.
pub fn structural_errors(beta: &DVector<f64>, gamma: &DVector<f64>, u: &[f64]) -> Vec<f64> {
    let k = u.len();
    let u2 = u[k - 1];
    let mut e: Vec<f64> = (0..k - 1).map(|i| u[i] - beta[i] * u2).collect();
    e.push(u2 - (0..k - 1).map(|i| gamma[i] * u[i]).sum::<f64>());
    e
}

/// `M` with `u = M e`: `u2 = (γe1 + e2)/(1−γβ)`, `u1 = e1 + βu2`.
pub fn error_map(beta: &DVector<f64>, gamma: &DVector<f64>) -> Result<DMatrix<f64>> {
    let k = beta.len() + 1;
    let den = 1.0 - gamma.dot(beta);
    if den.abs() < SINGULAR_GUARD {
        return Err(Error::Singular("1 - γβ".into()));
    }
    let mut m = DMatrix::zeros(k, k);
    for j in 0..k - 1 {
        m[(k - 1, j)] = gamma[j] / den;
    }
    m[(k - 1, k - 1)] = 1.0 / den;
    for i in 0..k - 1 {
        for j in 0..k {
            m[(i, j)] = beta[i] * m[(k - 1, j)] + if i == j { 1.0 } else { 0.0 };
        }
    }
    Ok(m)
}

pub fn reduced_from_structural(s: &StructuralParams, spec: &ModelSpec) -> Result<ReducedFormParams> {
    s.validate()?;
    let dims = s.dims;
    let Dims { k, p, .. } = dims;
    if spec.p != p || spec.include_intercept != dims.intercept {
        return Err(Error::InvalidSpec("structural dims disagree with model spec".into()));
    }
    let latent_nonzero = s.b12star.iter().chain(s.b22star.iter()).any(|v| *v != 0.0);
    if spec.variant == Variant::Ksvar && latent_nonzero {
        return Err(Error::InvalidSpec("KSVAR requires zero latent-lag blocks".into()));
    }
    let g = s.gamma_beta();
    let xi = s.xi();
    let den = 1.0 - g;
    if den.abs() < SINGULAR_GUARD || (1.0 - xi * g).abs() < SINGULAR_GUARD {
        return Err(Error::Singular("structural system is not invertible".into()));
    }
    let kap = s.kappa()?;
    // Structural shadow lags are (1−κ)·observed + κ·reduced-form shadow.
    let y2cols = dims.y2_lag_cols();
    let mut b1 = s.b1.clone();
    let mut b2 = s.b2.clone();
    for (j, &col) in y2cols.iter().enumerate() {
        for r in 0..k - 1 {
            b1[(r, col)] += (1.0 - kap) * s.b12star[(r, j)];
        }
        b2[col] += (1.0 - kap) * s.b22star[j];
    }
    let b12 = &s.b12star * kap;
    let b22 = &s.b22star * kap;

    let c2 = (b1.transpose() * &s.gamma + &b2) / den;
    let c22 = (b12.transpose() * &s.gamma + &b22) / den;
    let c1 = &b1 + &s.beta * c2.transpose();
    let c12 = &b12 + &s.beta * c22.transpose();

    let mut c = DMatrix::zeros(k, dims.n_x());
    c.rows_mut(0, k - 1).copy_from(&c1);
    c.row_mut(k - 1).copy_from(&c2.transpose());
    let mut cstar = DMatrix::zeros(k, p);
    cstar.rows_mut(0, k - 1).copy_from(&c12);
    cstar.row_mut(k - 1).copy_from(&c22.transpose());

    let m = error_map(&s.beta, &s.gamma)?;
    let mut se = DMatrix::zeros(k, k);
    se.view_mut((0, 0), (k - 1, k - 1)).copy_from(&(&s.a11inv * s.a11inv.transpose()));
    se[(k - 1, k - 1)] = s.a22starinv * s.a22starinv;
    let mut omega = &m * se * m.transpose();
    omega = (&omega + omega.transpose()) * 0.5;
    let bt = betatilde_of(&s.beta, &s.gamma, xi)?;
    ReducedFormParams::from_omega(dims, c, cstar, bt, &omega)
}

/// Residuals of the two identification equations at `(ξ, β, γ)`, max norm.
pub fn identification_residual(
    omega: &DMatrix<f64>,
    betatilde: &DVector<f64>,
    xi: f64,
    beta: &DVector<f64>,
    gamma: &DVector<f64>,
) -> f64 {
    let k = omega.nrows();
    let r7 = match betatilde_of(beta, gamma, xi) {
        Ok(b) => (b - betatilde).amax(),
        Err(_) => f64::INFINITY,
    };
    // γ(Ω11 − Ω12β') = Ω12' − Ω22β'
    let o11 = omega.view((0, 0), (k - 1, k - 1));
    let o12 = omega.view((0, k - 1), (k - 1, 1));
    let o22 = omega[(k - 1, k - 1)];
    let lhs = gamma.transpose() * (o11 - o12 * beta.transpose());
    let rhs = o12.transpose() - beta.transpose() * o22;
    r7.max((lhs - rhs).amax())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RegimePath {
    pub d: Vec<bool>,
    /// Inclusive `(start, end)` row indices of maximal runs at the bound.
    pub spells: Vec<(usize, usize)>,
}

impl RegimePath {
    pub fn from_indicator(d: Vec<bool>) -> Self {
        let mut spells = Vec::new();
        let mut start = None;
        for (t, &at) in d.iter().enumerate() {
            match (at, start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    spells.push((s, t - 1));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            spells.push((s, d.len() - 1));
        }
        RegimePath { d, spells }
    }

    pub fn share(&self) -> f64 {
        self.d.iter().filter(|b| **b).count() as f64 / self.d.len().max(1) as f64
    }
}

pub fn detect_regimes(data: &Dataset, tol: f64) -> Result<RegimePath> {
    let y2 = data.y2();
    if y2.iter().chain(&data.bound).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite constrained variable or bound".into()));
    }
    let d = y2.iter().zip(&data.bound).map(|(y, b)| *y <= b + tol).collect();
    Ok(RegimePath::from_indicator(d))
}

/// Regressors and the latent-slot template for an estimation window.
///
/// For row `t` and lag `j`, the shadow lag is `ybar_base[t][j-1] + w` where
/// `w = min(Ȳ2,t−j − b_t−j, 0)` is zero when `D_{t−j} = 0` and unknown
/// (flagged in `unknown`) otherwise.
#[derive(Debug, Clone)]
pub struct Regressors {
    pub dims: Dims,
    pub perm: Perm,
    /// First dataset row in the window.
    pub start: usize,
    pub x: DMatrix<f64>,
    /// Endogenous variables in internal order.
    pub y: DMatrix<f64>,
    pub bound: Vec<f64>,
    pub d: Vec<bool>,
    pub unknown: Vec<Vec<bool>>,
    pub ybar_base: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatentSlot {
    Known(f64),
    Unknown,
}

impl Regressors {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn latent_slots(&self, row: usize) -> Vec<LatentSlot> {
        self.unknown[row]
            .iter()
            .map(|&u| if u { LatentSlot::Unknown } else { LatentSlot::Known(0.0) })
            .collect()
    }

    /// Fill the slots from a full-length reduced-form shadow path.
    pub fn fill_latent(&self, ybar: &[f64], bound: &[f64]) -> DMatrix<f64> {
        let p = self.dims.p;
        DMatrix::from_fn(self.n(), p, |r, j| {
            if self.unknown[r][j] {
                let s = self.start + r - (j + 1);
                (ybar[s] - bound[s]).min(0.0)
            } else {
                0.0
            }
        })
    }

    pub fn any_unknown(&self) -> bool {
        self.unknown.iter().flatten().any(|u| *u)
    }
}

pub fn build_regressors(data: &Dataset, spec: &ModelSpec) -> Result<Regressors> {
    build_regressors_from(data, spec, spec.p, REGIME_TOL_SYNTHETIC)
}

/// Regressors conditioning on the first `start ≥ p` observations.
pub fn build_regressors_from(data: &Dataset, spec: &ModelSpec, start: usize, tol: f64) -> Result<Regressors> {
    let k = data.k();
    let p = spec.p;
    if spec.constrained_index != data.constrained {
        return Err(Error::InvalidSpec("constrained index disagrees with dataset".into()));
    }
    if p == 0 || start < p {
        return Err(Error::InvalidSpec("need start ≥ p ≥ 1".into()));
    }
    let dims = spec.dims(k, data.m());
    let nx = dims.n_x();
    let t = data.t();
    let need = nx + if spec.variant.has_latent() { p } else { 0 };
    if t <= start || t - start <= need {
        return Err(Error::InsufficientSample { need, have: t.saturating_sub(start) });
    }
    let regimes = detect_regimes(data, tol)?;
    let perm = Perm::new(k, data.constrained);
    let n = t - start;
    let mut x = DMatrix::zeros(n, nx);
    let mut y = DMatrix::zeros(n, k);
    let mut unknown = Vec::with_capacity(n);
    let mut ybar_base = Vec::with_capacity(n);
    let y2c = data.constrained;
    for r in 0..n {
        let s = start + r;
        if dims.intercept {
            x[(r, 0)] = 1.0;
        }
        for j in 1..=p {
            for iv in 0..k {
                x[(r, dims.col_lag(j, iv))] = data.values[(s - j, perm.to_data[iv])];
            }
        }
        for i in 0..data.m() {
            x[(r, dims.col_exog(i))] = data.exog[(s, i)];
        }
        for iv in 0..k {
            y[(r, iv)] = data.values[(s, perm.to_data[iv])];
        }
        unknown.push((1..=p).map(|j| regimes.d[s - j]).collect::<Vec<_>>());
        ybar_base.push(
            (1..=p)
                .map(|j| if regimes.d[s - j] { data.bound[s - j] } else { data.values[(s - j, y2c)] })
                .collect::<Vec<_>>(),
        );
    }
    Ok(Regressors {
        dims,
        perm,
        start,
        x,
        y,
        bound: data.bound[start..].to_vec(),
        d: regimes.d[start..].to_vec(),
        unknown,
        ybar_base,
    })
}

/// Simulation settings.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub t: usize,
    pub seed: u64,
    /// Either one value (constant bound) or `t` values.
    pub bound: Vec<f64>,
    /// `t × m` exogenous controls, if the model has any.
    pub exog: Option<DMatrix<f64>>,
    /// `p × k` presample values in internal order, oldest first.
    pub init: Option<DMatrix<f64>>,
    pub allow_explosive: bool,
    pub start: Quarter,
}

impl SimOptions {
    pub fn new(t: usize, seed: u64, bound: f64) -> Self {
        SimOptions {
            t,
            seed,
            bound: vec![bound],
            exog: None,
            init: None,
            allow_explosive: false,
            start: Quarter::new(2000, 1),
        }
    }

    fn bound_at(&self, t: usize) -> f64 {
        if self.bound.len() == 1 {
            self.bound[0]
        } else {
            self.bound[t]
        }
    }
}

/// Simulated data together with the stored latent paths.
#[derive(Debug, Clone)]
pub struct Simulated {
    /// Internal variable order, constrained variable last.
    pub data: Dataset,
    /// Structural shadow value `Y*2`.
    pub shadow: Vec<f64>,
    /// Reduced-form shadow value `Ȳ2`.
    pub ybar: Vec<f64>,
    /// Structural shocks used, `t × k`.
    pub shocks: DMatrix<f64>,
}

pub fn simulate(s: &StructuralParams, spec: &ModelSpec, opts: &SimOptions) -> Result<Simulated> {
    let k = s.dims.k;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut eps = DMatrix::zeros(opts.t, k);
    for t in 0..opts.t {
        for i in 0..k {
            eps[(t, i)] = StandardNormal.sample(&mut rng);
        }
    }
    simulate_with_shocks(s, spec, &eps, opts)
}

/// Drive the piecewise reduced form with given structural shocks (`t × k`).
pub fn simulate_with_shocks(
    s: &StructuralParams,
    spec: &ModelSpec,
    eps: &DMatrix<f64>,
    opts: &SimOptions,
) -> Result<Simulated> {
    let rf = reduced_from_structural(s, spec)?;
    let k = s.dims.k;
    let m = error_map(&s.beta, &s.gamma)?;
    let mut load = DMatrix::zeros(k, k);
    load.view_mut((0, 0), (k - 1, k - 1)).copy_from(&s.a11inv);
    load[(k - 1, k - 1)] = s.a22starinv;
    let u = eps * (m * load).transpose();
    let mut out = simulate_reduced(&rf, &u, opts, s.kappa()?)?;
    out.shocks = eps.clone();
    Ok(out)
}

/// Forward recursion of the reduced form given reduced-form errors `u`
/// (`t × k`). `kappa` converts the reduced-form shadow value to the
/// structural one for the stored latent path.
pub fn simulate_reduced(rf: &ReducedFormParams, u: &DMatrix<f64>, opts: &SimOptions, kappa: f64) -> Result<Simulated> {
    let dims = rf.dims;
    let Dims { k, p, m, .. } = dims;
    let t_len = opts.t;
    if u.nrows() != t_len || u.ncols() != k {
        return Err(Error::InvalidSpec("shock matrix shape".into()));
    }
    if !opts.allow_explosive {
        let r = rf.spectral_radius();
        if r >= 1.0 {
            return Err(Error::Unstable(r));
        }
    }
    let exog = match (&opts.exog, m) {
        (_, 0) => DMatrix::zeros(t_len, 0),
        (Some(e), _) if e.shape() == (t_len, m) => e.clone(),
        _ => return Err(Error::InvalidSpec("exogenous path shape".into())),
    };
    // history rows: presample then simulated, internal order
    let mut hist: Vec<Vec<f64>> = Vec::with_capacity(p + t_len);
    let mut hist_w: Vec<f64> = Vec::with_capacity(p + t_len);
    let b0 = opts.bound_at(0);
    for j in 0..p {
        let row: Vec<f64> = match &opts.init {
            Some(init) => (0..k).map(|i| init[(j, i)]).collect(),
            None => {
                let mut r = vec![0.0; k];
                r[k - 1] = b0.max(0.0);
                r
            }
        };
        hist.push(row);
        hist_w.push(0.0);
    }
    let nx = dims.n_x();
    let mut x = vec![0.0; nx];
    let mut values = DMatrix::zeros(t_len, k);
    let mut bound = Vec::with_capacity(t_len);
    let mut shadow = Vec::with_capacity(t_len);
    let mut ybar_path = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let h = p + t;
        let b = opts.bound_at(t);
        if dims.intercept {
            x[0] = 1.0;
        }
        for j in 1..=p {
            for iv in 0..k {
                x[dims.col_lag(j, iv)] = hist[h - j][iv];
            }
        }
        for i in 0..m {
            x[dims.col_exog(i)] = exog[(t, i)];
        }
        let mut mu = vec![0.0; k];
        for (r, mu_r) in mu.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, xv) in x.iter().enumerate() {
                acc += rf.c[(r, c)] * xv;
            }
            for j in 1..=p {
                acc += rf.cstar[(r, j - 1)] * (hist[h - j][k - 1] + hist_w[h - j]);
            }
            *mu_r = acc;
        }
        let ybar = mu[k - 1] + u[(t, k - 1)];
        let mut row = vec![0.0; k];
        let w;
        if ybar >= b {
            row[k - 1] = ybar;
            for i in 0..k - 1 {
                row[i] = mu[i] + u[(t, i)];
            }
            w = 0.0;
            shadow.push(ybar);
        } else {
            row[k - 1] = b;
            for i in 0..k - 1 {
                row[i] = mu[i] + u[(t, i)] - rf.betatilde[i] * (ybar - b);
            }
            w = ybar - b;
            shadow.push(b + kappa * w);
        }
        // keep w consistent with the shadow lag convention b + w
        ybar_path.push(ybar);
        if row.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW) {
            return Err(Error::Explosive { period: t });
        }
        for i in 0..k {
            values[(t, i)] = row[i];
        }
        bound.push(b);
        hist.push(row);
        hist_w.push(w);
    }
    let dates = (0..t_len).map(|i| opts.start.offset(i as i64)).collect();
    let names = (0..k)
        .map(|i| if i == k - 1 { "y2".to_string() } else { format!("y1_{}", i + 1) })
        .chain((0..m).map(|i| format!("x{}", i + 1)))
        .collect();
    let data = Dataset { dates, values, bound, exog, names, constrained: k - 1 };
    Ok(Simulated { data, shadow, ybar: ybar_path, shocks: DMatrix::zeros(0, 0) })
}
