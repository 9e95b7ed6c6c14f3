//! Maximum-likelihood fitting, information criteria, likelihood-ratio tests
//! and lag selection.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{loglik, LikelihoodConfig};
use crate::model::{
    build_regressors_from, Dataset, Dims, Mask, ModelSpec, ReducedFormParams, Regressor, Regressors,
    Restriction, Variant, REGIME_TOL_SYNTHETIC,
};
use crate::optim::{bfgs, hessian, nelder_mead, BfgsOptions};
use crate::period::Quarter;
use crate::stats::chi2_sf;

/// Tolerance on `ℓ_r − ℓ_u` beyond which a test statistic is flagged.
pub const LR_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    pub seed: u64,
    pub n_starts: usize,
    /// Relative spread of the random starts around the warm start.
    pub start_scale: f64,
    /// Simplex evaluations per free parameter before the quasi-Newton polish.
    pub simplex_evals_per_param: usize,
    pub bfgs: BfgsOptions,
    /// Quasi-Newton settings used when the simulated likelihood is active.
    pub smc_bfgs: BfgsOptions,
    /// Simulated-likelihood settings; the seed is held fixed across
    /// evaluations so the objective is a smooth function of the parameters.
    pub likelihood: LikelihoodConfig,
    /// Number of initial observations conditioned on (default: the lag order).
    pub condition_on: Option<usize>,
    pub regime_tol: f64,
    pub covariance: bool,
    /// Extra starting point, typically the optimum of a nested model.
    pub init: Option<ReducedFormParams>,
    pub workers: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            seed: 0,
            n_starts: 10,
            start_scale: 0.1,
            simplex_evals_per_param: 20,
            bfgs: BfgsOptions::default(),
            smc_bfgs: BfgsOptions { gtol: 1e-3, ftol: 1e-9, fd_step: 1e-4, forward: true, ..Default::default() },
            likelihood: LikelihoodConfig::default(),
            condition_on: None,
            regime_tol: REGIME_TOL_SYNTHETIC,
            covariance: true,
            init: None,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartDiagnostics {
    pub index: usize,
    pub initial_loglik: f64,
    pub loglik: f64,
    pub converged: bool,
    pub message: String,
    pub evals: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationResult {
    pub spec: ModelSpec,
    pub rf: ReducedFormParams,
    pub loglik: f64,
    pub npar: usize,
    pub t_eff: usize,
    pub aic_per_obs: f64,
    /// Free parameters: masked coefficients, shadow-lag coefficients, kink
    /// coefficients, then the Cholesky factor of Ω by rows with log diagonal.
    pub theta: Vec<f64>,
    pub param_names: Vec<String>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub std_errors: Option<Vec<f64>>,
    pub converged: bool,
    pub starts: Vec<StartDiagnostics>,
    pub sample: (Quarter, Quarter),
    pub condition_on: usize,
    pub likelihood: LikelihoodConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub lr: f64,
    pub df: usize,
    pub pvalue: f64,
    pub loglik_restricted: f64,
    pub loglik_unrestricted: f64,
    pub restricted: ModelSpec,
    pub unrestricted: ModelSpec,
    pub warning: Option<String>,
}

/// Packing between reduced-form parameters and the free vector.
#[derive(Debug, Clone)]
pub struct ParamMap {
    pub dims: Dims,
    pub mask: Mask,
}

impl ParamMap {
    pub fn new(spec: &ModelSpec, dims: Dims) -> Result<Self> {
        Ok(ParamMap { mask: spec.mask(&dims)?, dims })
    }

    pub fn len(&self) -> usize {
        let k = self.dims.k;
        self.mask.n_free() + k * (k + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pack(&self, rf: &ReducedFormParams) -> Vec<f64> {
        let Dims { k, p, .. } = self.dims;
        let nx = self.mask.nx;
        let mut out = Vec::with_capacity(self.len());
        for r in 0..k {
            for c in 0..nx {
                if self.mask.c[r * nx + c] {
                    out.push(rf.c[(r, c)]);
                }
            }
        }
        for r in 0..k {
            for j in 0..p {
                if self.mask.cstar[r * p + j] {
                    out.push(rf.cstar[(r, j)]);
                }
            }
        }
        for i in 0..k - 1 {
            if self.mask.bt[i] {
                out.push(rf.betatilde[i]);
            }
        }
        for i in 0..k {
            for j in 0..=i {
                let v = rf.omega_chol[(i, j)];
                out.push(if i == j { v.ln() } else { v });
            }
        }
        out
    }

    pub fn unpack(&self, theta: &[f64]) -> ReducedFormParams {
        let Dims { k, p, .. } = self.dims;
        let nx = self.mask.nx;
        let mut it = theta.iter().copied();
        let mut c = DMatrix::zeros(k, nx);
        for r in 0..k {
            for col in 0..nx {
                if self.mask.c[r * nx + col] {
                    c[(r, col)] = it.next().unwrap();
                }
            }
        }
        let mut cstar = DMatrix::zeros(k, p);
        for r in 0..k {
            for j in 0..p {
                if self.mask.cstar[r * p + j] {
                    cstar[(r, j)] = it.next().unwrap();
                }
            }
        }
        let mut bt = DVector::zeros(k - 1);
        for i in 0..k - 1 {
            if self.mask.bt[i] {
                bt[i] = it.next().unwrap();
            }
        }
        let mut l = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let v = it.next().unwrap();
                l[(i, j)] = if i == j { v.exp() } else { v };
            }
        }
        ReducedFormParams { dims: self.dims, c, cstar, betatilde: bt, omega_chol: l }
    }

    /// Human-readable parameter labels. `names` are the dataset column
    /// names, `y_order` maps internal to dataset columns.
    pub fn names(&self, names: &[String], to_data: &[usize]) -> Vec<String> {
        let Dims { k, p, intercept, .. } = self.dims;
        let nx = self.mask.nx;
        let var = |i: usize| names[to_data[i]].clone();
        let y2 = var(k - 1);
        let reg_name = |c: usize| -> String {
            if intercept && c == 0 {
                return "const".into();
            }
            let c0 = c - intercept as usize;
            if c0 < k * p {
                format!("{}(-{})", var(c0 % k), c0 / k + 1)
            } else {
                names.get(k + c0 - k * p).cloned().unwrap_or_else(|| format!("exog{}", c0 - k * p))
            }
        };
        let mut out = Vec::new();
        for r in 0..k {
            for c in 0..nx {
                if self.mask.c[r * nx + c] {
                    out.push(format!("{}: {}", var(r), reg_name(c)));
                }
            }
        }
        for r in 0..k {
            for j in 0..p {
                if self.mask.cstar[r * p + j] {
                    out.push(format!("{}: {y2}*(-{})", var(r), j + 1));
                }
            }
        }
        for i in 0..k - 1 {
            if self.mask.bt[i] {
                out.push(format!("{}: kink", var(i)));
            }
        }
        for i in 0..k {
            for j in 0..=i {
                out.push(if i == j { format!("log chol[{i},{i}]") } else { format!("chol[{i},{j}]") });
            }
        }
        out
    }
}

pub fn n_params(spec: &ModelSpec, dims: &Dims) -> Result<usize> {
    Ok(ParamMap::new(spec, *dims)?.len())
}

/// Regime-split least squares: each equation is fitted on the periods where
/// the bound does not bind, with the shadow-lag and kink coefficients at zero.
pub fn warm_start(reg: &Regressors, map: &ParamMap) -> Result<ReducedFormParams> {
    let Dims { k, p, .. } = map.dims;
    let nx = map.mask.nx;
    let free_rows: Vec<usize> = (0..reg.n()).filter(|&r| !reg.d[r]).collect();
    let rows: Vec<usize> = if free_rows.len() >= nx + k + 5 { free_rows } else { (0..reg.n()).collect() };
    let mut c = DMatrix::zeros(k, nx);
    let mut resid = DMatrix::zeros(rows.len(), k);
    for eq in 0..k {
        let cols: Vec<usize> = (0..nx).filter(|&col| map.mask.c[eq * nx + col]).collect();
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| reg.y[(r, eq)]));
        let mut fitted = DVector::zeros(rows.len());
        if !cols.is_empty() {
            let x = DMatrix::from_fn(rows.len(), cols.len(), |i, j| reg.x[(rows[i], cols[j])]);
            let b = x
                .clone()
                .svd(true, true)
                .solve(&y, 1e-12)
                .map_err(|e| Error::Singular(format!("warm start: {e}")))?;
            for (j, &col) in cols.iter().enumerate() {
                c[(eq, col)] = b[j];
            }
            fitted = &x * &b;
        }
        resid.set_column(eq, &(y - fitted));
    }
    let n = rows.len() as f64;
    let mut omega = resid.transpose() * &resid / n;
    for i in 0..k {
        omega[(i, i)] = omega[(i, i)].max(1e-8);
    }
    let cstar = DMatrix::zeros(k, p);
    let bt = DVector::zeros(k - 1);
    if omega.clone().cholesky().is_none() {
        omega = DMatrix::from_diagonal(&omega.diagonal());
    }
    ReducedFormParams::from_omega(map.dims, c, cstar, bt, &omega)
}

/// Projects `rf` onto the zero pattern of `map` (used for nested starts).
fn project(rf: &ReducedFormParams, map: &ParamMap) -> Option<ReducedFormParams> {
    if rf.dims != map.dims {
        return None;
    }
    Some(map.unpack(&map.pack(rf)))
}

struct Problem<'a> {
    reg: &'a Regressors,
    map: &'a ParamMap,
    cfg: LikelihoodConfig,
    simulated: bool,
}

impl Problem<'_> {
    fn negll(&self, theta: &[f64]) -> f64 {
        let rf = self.map.unpack(theta);
        match loglik(&rf, self.reg, &self.cfg) {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    }
}

fn run_start(prob: &Problem, idx: usize, theta0: &[f64], opts: &FitOptions) -> (Vec<f64>, f64, StartDiagnostics) {
    let f0 = prob.negll(theta0);
    let n = theta0.len();
    let mut x = theta0.to_vec();
    let mut evals = 1;
    if opts.simplex_evals_per_param > 0 && f0.is_finite() {
        let nm = nelder_mead(|t| prob.negll(t), &x, 0.05, opts.simplex_evals_per_param * n, 1e-10);
        evals += nm.evals;
        if nm.f <= f0 {
            x = nm.x;
        }
    }
    let bo = if prob.simulated { &opts.smc_bfgs } else { &opts.bfgs };
    let b = bfgs(|t| prob.negll(t), &x, bo);
    evals += b.evals;
    let diag = StartDiagnostics {
        index: idx,
        initial_loglik: -f0,
        loglik: -b.f,
        converged: b.converged,
        message: b.message.clone(),
        evals,
    };
    (b.x, b.f, diag)
}

/// Maximum-likelihood fit.
pub fn fit(spec: &ModelSpec, data: &Dataset, opts: &FitOptions) -> Result<EstimationResult> {
    let start = opts.condition_on.unwrap_or(spec.p);
    let reg = build_regressors_from(data, spec, start, opts.regime_tol)?;
    let dims = reg.dims;
    let map = ParamMap::new(spec, dims)?;
    let npar = map.len();
    let t_eff = reg.n();
    if t_eff <= npar {
        return Err(Error::InsufficientSample { need: npar + 1, have: t_eff });
    }
    let simulated = reg.any_unknown() && map.mask.cstar.iter().any(|b| *b);
    let prob = Problem { reg: &reg, map: &map, cfg: opts.likelihood, simulated };

    let warm = map.pack(&warm_start(&reg, &map)?);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(init) = opts.init.as_ref().and_then(|rf| project(rf, &map)) {
        starts.push(map.pack(&init));
    }
    starts.push(warm.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < opts.n_starts.max(1) {
        let th: Vec<f64> = warm
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + opts.start_scale * z * v.abs().max(0.1)
            })
            .collect();
        starts.push(th);
    }
    starts.truncate(opts.n_starts.max(1));

    let runs = run_all(&prob, &starts, opts);
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    let mut diags = Vec::with_capacity(runs.len());
    for (i, (x, f, d)) in runs.into_iter().enumerate() {
        diags.push(d);
        if f.is_finite() && best.as_ref().is_none_or(|b| f < b.2) {
            best = Some((i, x, f));
        }
    }
    let Some((bi, theta, f)) = best else {
        return Err(Error::Convergence("every start produced a non-finite likelihood".into()));
    };
    let rf = map.unpack(&theta);
    let ll = -f;
    let (covariance, std_errors) = if opts.covariance {
        let rel = if simulated { 1e-3 } else { 1e-4 };
        let h = hessian(|t| prob.negll(t), &theta, rel);
        covariance_from_hessian(&h)
    } else {
        (None, None)
    };
    Ok(EstimationResult {
        spec: spec.clone(),
        rf,
        loglik: ll,
        npar,
        t_eff,
        aic_per_obs: (2.0 * npar as f64 - 2.0 * ll) / t_eff as f64,
        theta,
        param_names: map.names(&data.names, &reg.perm.to_data),
        covariance,
        std_errors,
        converged: diags[bi].converged,
        starts: diags,
        sample: (data.dates[start], *data.dates.last().unwrap()),
        condition_on: start,
        likelihood: opts.likelihood,
    })
}

fn run_all(prob: &Problem, starts: &[Vec<f64>], opts: &FitOptions) -> Vec<(Vec<f64>, f64, StartDiagnostics)> {
    let workers = opts.workers.max(1).min(starts.len());
    if workers <= 1 {
        return starts.iter().enumerate().map(|(i, s)| run_start(prob, i, s, opts)).collect();
    }
    let mut out: Vec<Option<(Vec<f64>, f64, StartDiagnostics)>> = (0..starts.len()).map(|_| None).collect();
    std::thread::scope(|sc| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                sc.spawn(move || {
                    (w..starts.len())
                        .step_by(workers)
                        .map(|i| (i, run_start(prob, i, &starts[i], opts)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("start worker panicked") {
                out[i] = Some(r);
            }
        }
    });
    out.into_iter().map(|r| r.unwrap()).collect()
}

type Cov = (Option<Vec<Vec<f64>>>, Option<Vec<f64>>);

fn covariance_from_hessian(h: &DMatrix<f64>) -> Cov {
    if h.iter().any(|v| !v.is_finite()) {
        return (None, None);
    }
    let sym = (h + h.transpose()) * 0.5;
    let Some(ch) = sym.cholesky() else {
        return (None, None);
    };
    let cov = ch.inverse();
    let se = (0..cov.nrows()).map(|i| cov[(i, i)].sqrt()).collect();
    let rows = (0..cov.nrows()).map(|i| cov.row(i).iter().copied().collect()).collect();
    (Some(rows), Some(se))
}

/// Likelihood-ratio test of nested fits on the same sample.
pub fn lr_test(restricted: &EstimationResult, unrestricted: &EstimationResult) -> Result<TestResult> {
    let dr = restricted.rf.dims;
    let du = unrestricted.rf.dims;
    if dr != du {
        return Err(Error::NotNested("models differ in dimensions".into()));
    }
    if restricted.sample != unrestricted.sample || restricted.t_eff != unrestricted.t_eff {
        return Err(Error::NotNested("models were fitted on different samples".into()));
    }
    let mr = restricted.spec.mask(&dr)?;
    let mu = unrestricted.spec.mask(&du)?;
    if !mr.nested_in(&mu) || restricted.npar >= unrestricted.npar {
        return Err(Error::NotNested("restricted free set is not a strict subset".into()));
    }
    Ok(lr_from_logliks(
        restricted.loglik,
        unrestricted.loglik,
        unrestricted.npar - restricted.npar,
        &restricted.spec,
        &unrestricted.spec,
    ))
}

fn lr_from_logliks(lr_ll: f64, lu_ll: f64, df: usize, rs: &ModelSpec, us: &ModelSpec) -> TestResult {
    let raw = 2.0 * (lu_ll - lr_ll);
    let warning = (lr_ll > lu_ll + LR_TOLERANCE).then(|| {
        format!("restricted loglik exceeds unrestricted by {:.2e}; optimizer did not converge", lr_ll - lu_ll)
    });
    let lr = raw.max(0.0);
    TestResult {
        lr,
        df,
        pvalue: chi2_sf(lr, df),
        loglik_restricted: lr_ll,
        loglik_unrestricted: lu_ll,
        restricted: rs.clone(),
        unrestricted: us.clone(),
        warning,
    }
}

/// Fits the restricted model, then the unrestricted one starting from the
/// restricted optimum.
pub fn test_nested(
    data: &Dataset,
    restricted: &ModelSpec,
    unrestricted: &ModelSpec,
    opts: &FitOptions,
) -> Result<(TestResult, EstimationResult, EstimationResult)> {
    let r = fit(restricted, data, opts)?;
    let mut o = opts.clone();
    o.init = Some(r.rf.clone());
    let u = fit(unrestricted, data, &o)?;
    Ok((lr_test(&r, &u)?, r, u))
}

fn y1_equations(data: &Dataset) -> Vec<usize> {
    (0..data.k()).filter(|&c| c != data.constrained).collect()
}

/// Restrictions removing every effect of the bound on the unconstrained
/// equations: lags of the policy rate, lags of its shadow value, and the kink.
pub fn ih1_restrictions(data: &Dataset, p: usize, variant: Variant) -> Vec<Restriction> {
    let y2 = data.constrained;
    let mut out = Vec::new();
    for eq in y1_equations(data) {
        for lag in 1..=p {
            out.push(Restriction::Zero { equation: eq, regressor: Regressor::Lag { var: y2, lag } });
            if variant.has_latent() {
                out.push(Restriction::Zero { equation: eq, regressor: Regressor::Latent(lag) });
            }
        }
        out.push(Restriction::BetaTilde { equation: eq });
    }
    out
}

pub fn ih1_df(k: usize, p: usize, variant: Variant) -> usize {
    match variant {
        Variant::Ksvar => (p + 1) * (k - 1),
        _ => (2 * p + 1) * (k - 1),
    }
}

pub fn ih2_df(k: usize, p: usize) -> usize {
    p * (k - 1) + p + (k - 1)
}

fn base_spec(data: &Dataset, p: usize, variant: Variant) -> ModelSpec {
    ModelSpec::new(variant, p, data.constrained)
}

/// Irrelevance of the bound for the unconstrained variables.
pub fn test_ih1(data: &Dataset, p: usize, variant: Variant, opts: &FitOptions) -> Result<TestResult> {
    test_ih1_with(data, &base_spec(data, p, variant), opts).map(|r| r.0)
}

pub fn test_ih1_with(
    data: &Dataset,
    spec: &ModelSpec,
    opts: &FitOptions,
) -> Result<(TestResult, EstimationResult, EstimationResult)> {
    if spec.variant == Variant::Csvar {
        return Err(Error::InvalidSpec("the first irrelevance test needs a kinked alternative".into()));
    }
    let restricted = spec.with_restrictions(&ih1_restrictions(data, spec.p, spec.variant));
    test_nested(data, &restricted, spec, opts)
}

/// Pure censoring without a kink: CSVAR against CKSVAR.
pub fn test_ih2(data: &Dataset, p: usize, opts: &FitOptions) -> Result<TestResult> {
    test_ih2_with(data, &base_spec(data, p, Variant::Cksvar), opts).map(|r| r.0)
}

pub fn test_ih2_with(
    data: &Dataset,
    spec: &ModelSpec,
    opts: &FitOptions,
) -> Result<(TestResult, EstimationResult, EstimationResult)> {
    let unrestricted = spec.with_variant(Variant::Cksvar);
    let restricted = spec.with_variant(Variant::Csvar);
    test_nested(data, &restricted, &unrestricted, opts)
}

/// Default targets for an exclusion test: the unconstrained equations other
/// than the excluded variable's own.
pub fn default_exclusion_targets(data: &Dataset, excluded: usize) -> Vec<usize> {
    y1_equations(data).into_iter().filter(|&e| e != excluded).collect()
}

pub fn exclusion_restrictions(p: usize, excluded: usize, targets: &[usize]) -> Vec<Restriction> {
    targets
        .iter()
        .flat_map(|&eq| (1..=p).map(move |lag| Restriction::Zero { equation: eq, regressor: Regressor::Lag { var: excluded, lag } }))
        .collect()
}

/// Zero restrictions on the lags of `excluded` in `targets`.
pub fn test_exclusion(
    data: &Dataset,
    p: usize,
    variant: Variant,
    excluded: usize,
    targets: Option<&[usize]>,
    opts: &FitOptions,
) -> Result<TestResult> {
    if excluded >= data.k() || excluded == data.constrained {
        return Err(Error::InvalidSpec("excluded variable must be an unconstrained endogenous variable".into()));
    }
    let targets = targets.map(|t| t.to_vec()).unwrap_or_else(|| default_exclusion_targets(data, excluded));
    if targets.is_empty() {
        return Err(Error::InvalidSpec("no target equations".into()));
    }
    let spec = base_spec(data, p, variant);
    let restricted = spec.with_restrictions(&exclusion_restrictions(p, excluded, &targets));
    test_nested(data, &restricted, &spec, opts).map(|r| r.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagRow {
    pub p: usize,
    pub loglik: f64,
    pub npar: usize,
    pub aic_per_obs: f64,
    /// Test of this order against `p + 1` (absent for the largest order).
    pub lr_next: Option<f64>,
    pub df_next: Option<usize>,
    pub pvalue_next: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagSelection {
    pub p_aic: usize,
    pub p_seq: usize,
    pub t_eff: usize,
    pub rows: Vec<LagRow>,
    pub fits: Vec<EstimationResult>,
}

/// Embeds a fit of order `p` into order `p + 1` with zero extra lags.
fn embed_next_lag(rf: &ReducedFormParams) -> ReducedFormParams {
    let d = rf.dims;
    let nd = Dims { p: d.p + 1, ..d };
    let mut c = DMatrix::zeros(d.k, nd.n_x());
    for r in 0..d.k {
        if d.intercept {
            c[(r, 0)] = rf.c[(r, 0)];
        }
        for j in 1..=d.p {
            for v in 0..d.k {
                c[(r, nd.col_lag(j, v))] = rf.c[(r, d.col_lag(j, v))];
            }
        }
        for i in 0..d.m {
            c[(r, nd.col_exog(i))] = rf.c[(r, d.col_exog(i))];
        }
    }
    let mut cstar = DMatrix::zeros(d.k, nd.p);
    cstar.columns_mut(0, d.p).copy_from(&rf.cstar);
    ReducedFormParams { dims: nd, c, cstar, betatilde: rf.betatilde.clone(), omega_chol: rf.omega_chol.clone() }
}

/// Fits orders `1..=pmax` on the common sample that conditions on `pmax`
/// initial observations.
pub fn select_lag(data: &Dataset, pmax: usize, variant: Variant, opts: &FitOptions) -> Result<LagSelection> {
    select_lag_with(data, &base_spec(data, 1, variant), pmax, opts)
}

pub fn select_lag_with(data: &Dataset, template: &ModelSpec, pmax: usize, opts: &FitOptions) -> Result<LagSelection> {
    if pmax == 0 {
        return Err(Error::InvalidSpec("pmax must be at least 1".into()));
    }
    let mut o = opts.clone();
    o.condition_on = Some(pmax);
    let mut fits: Vec<EstimationResult> = Vec::with_capacity(pmax);
    for p in 1..=pmax {
        let spec = ModelSpec { p, ..template.clone() };
        o.init = fits.last().map(|f| embed_next_lag(&f.rf));
        fits.push(fit(&spec, data, &o)?);
    }
    let mut rows = Vec::with_capacity(pmax);
    for (i, f) in fits.iter().enumerate() {
        let next = fits.get(i + 1).map(|g| lr_from_logliks(f.loglik, g.loglik, g.npar - f.npar, &f.spec, &g.spec));
        rows.push(LagRow {
            p: f.spec.p,
            loglik: f.loglik,
            npar: f.npar,
            aic_per_obs: f.aic_per_obs,
            lr_next: next.as_ref().map(|t| t.lr),
            df_next: next.as_ref().map(|t| t.df),
            pvalue_next: next.as_ref().map(|t| t.pvalue),
        });
    }
    let p_aic = rows.iter().min_by(|a, b| a.aic_per_obs.total_cmp(&b.aic_per_obs)).unwrap().p;
    let p_seq = rows.iter().find(|r| r.pvalue_next.is_none_or(|pv| pv >= 0.05)).unwrap().p;
    Ok(LagSelection { p_aic, p_seq, t_eff: fits[0].t_eff, rows, fits })
}
