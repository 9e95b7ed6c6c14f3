//! State-dependent generalized impulse responses to a policy shock.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identification::{IdentifiedSet, StructuralPoint};
use crate::likelihood::LatentEstimate;
use crate::model::{Dataset, Perm, ReducedFormParams};
use crate::period::Quarter;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IRFRequest {
    /// Size of the policy shock in units of the shadow rate.
    pub shock: f64,
    pub horizon: usize,
    /// Dataset row at which the shock hits.
    pub date: usize,
    pub draws: usize,
    pub seed: u64,
    pub cumulative: bool,
    /// Dataset columns cumulated when `cumulative` is set; `None` means every
    /// unconstrained variable.
    pub flow_variables: Option<Vec<usize>>,
    pub antithetic: bool,
}

impl Default for IRFRequest {
    fn default() -> Self {
        IRFRequest {
            shock: -0.25,
            horizon: 12,
            date: 0,
            draws: 1000,
            seed: 0,
            cumulative: false,
            flow_variables: None,
            antithetic: true,
        }
    }
}

impl IRFRequest {
    fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::Config("at least one draw is needed".into()));
        }
        Ok(())
    }
}

/// Responses by horizon (rows) and variable in dataset order (columns).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IRFResult {
    pub date: Quarter,
    pub row: usize,
    pub at_bound: bool,
    pub horizon: usize,
    pub draws: usize,
    pub points: usize,
    pub cumulative: bool,
    pub variables: Vec<String>,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    /// Monte Carlo standard errors (largest over points for an envelope).
    pub se: Vec<Vec<f64>>,
}

impl IRFResult {
    /// Point responses; for an envelope, the midpoint of the band.
    pub fn mean(&self) -> Vec<Vec<f64>> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l.iter().zip(u).map(|(a, b)| 0.5 * (a + b)).collect())
            .collect()
    }
}

/// Paired-simulation engine with common random numbers shared by every
/// structural point and base date.
pub struct Engine<'a> {
    rf: &'a ReducedFormParams,
    data: &'a Dataset,
    ybar: &'a [f64],
    perm: Perm,
    horizon: usize,
    antithetic: bool,
    /// Reduced-form errors per base draw, `(H+1)·k` each, internal order.
    errors: Vec<Vec<f64>>,
}

impl<'a> Engine<'a> {
    pub fn new(
        rf: &'a ReducedFormParams,
        data: &'a Dataset,
        latent: &'a LatentEstimate,
        horizon: usize,
        draws: usize,
        seed: u64,
        antithetic: bool,
    ) -> Result<Self> {
        rf.check_shapes()?;
        let k = rf.dims.k;
        if data.k() != k || data.m() != rf.dims.m {
            return Err(Error::InvalidSpec("dataset does not match the reduced form".into()));
        }
        if latent.ybar.len() != data.t() {
            return Err(Error::InvalidSpec("latent path length differs from the dataset".into()));
        }
        let base = if antithetic { draws.div_ceil(2) } else { draws };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = &rf.omega_chol;
        let errors = (0..base)
            .map(|_| {
                let mut u = vec![0.0; (horizon + 1) * k];
                for h in 0..=horizon {
                    let z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
                    for i in 0..k {
                        u[h * k + i] = (0..=i).map(|j| l[(i, j)] * z[j]).sum();
                    }
                }
                u
            })
            .collect();
        Ok(Engine { rf, data, ybar: &latent.ybar, perm: Perm::new(k, data.constrained), horizon, antithetic, errors })
    }

    /// One path from the state at `row`, observed values written to `out`
    /// (`(H+1)·k`, internal order).
    fn path(&self, row: usize, u: &[f64], sign: f64, shift: &[f64], out: &mut [f64]) {
        let rf = self.rf;
        let d = rf.dims;
        let (k, p) = (d.k, d.p);
        let t_len = self.data.t();
        let mut ylag = vec![0.0; p * k];
        let mut blag = vec![0.0; p];
        for j in 1..=p {
            for iv in 0..k {
                ylag[(j - 1) * k + iv] = self.data.values[(row - j, self.perm.to_data[iv])];
            }
            blag[j - 1] = self.ybar[row - j];
        }
        let mut mu = vec![0.0; k];
        for h in 0..=self.horizon {
            let s = (row + h).min(t_len - 1);
            let b = self.data.bound[s];
            for (r, m) in mu.iter_mut().enumerate() {
                let mut acc = if d.intercept { rf.c[(r, 0)] } else { 0.0 };
                for j in 1..=p {
                    for iv in 0..k {
                        acc += rf.c[(r, d.col_lag(j, iv))] * ylag[(j - 1) * k + iv];
                    }
                    acc += rf.cstar[(r, j - 1)] * blag[j - 1];
                }
                for i in 0..d.m {
                    acc += rf.c[(r, d.col_exog(i))] * self.data.exog[(s, i)];
                }
                *m = acc + sign * u[h * k + r] + if h == 0 { shift[r] } else { 0.0 };
            }
            let ybar = mu[k - 1];
            let o = &mut out[h * k..(h + 1) * k];
            if ybar >= b {
                o.copy_from_slice(&mu);
            } else {
                for i in 0..k - 1 {
                    o[i] = mu[i] - rf.betatilde[i] * (ybar - b);
                }
                o[k - 1] = b;
            }
            if p > 0 {
                ylag.copy_within(0..(p - 1) * k, k);
                ylag[..k].copy_from_slice(o);
                blag.copy_within(0..p - 1, 1);
                blag[0] = ybar;
            }
        }
    }

    /// Mean response and Monte Carlo standard error, `(H+1) × k` in dataset
    /// order, before any cumulation.
    pub fn response(&self, point: &StructuralPoint, shock: f64, row: usize, cumulate: &[bool]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let k = self.rf.dims.k;
        let p = self.rf.dims.p;
        if row < p || row >= self.data.t() {
            return Err(Error::InvalidSpec(format!("base row {row} lacks {p} lags inside the sample")));
        }
        let shift = point.error_shift(shock)?;
        let n = (self.horizon + 1) * k;
        let zero = vec![0.0; k];
        let mut a = vec![0.0; n];
        let mut bpath = vec![0.0; n];
        let mut sum = vec![0.0; n];
        let mut sum2 = vec![0.0; n];
        let mut diff = vec![0.0; n];
        let signs: &[f64] = if self.antithetic { &[1.0, -1.0] } else { &[1.0] };
        for u in &self.errors {
            diff.iter_mut().for_each(|v| *v = 0.0);
            for &sg in signs {
                self.path(row, u, sg, &zero, &mut a);
                self.path(row, u, sg, &shift, &mut bpath);
                for i in 0..n {
                    diff[i] += (bpath[i] - a[i]) / signs.len() as f64;
                }
            }
            for i in 0..k {
                let col = self.perm.to_data[i];
                if cumulate[col] {
                    for h in 1..=self.horizon {
                        diff[h * k + i] += diff[(h - 1) * k + i];
                    }
                }
            }
            for i in 0..n {
                sum[i] += diff[i];
                sum2[i] += diff[i] * diff[i];
            }
        }
        let m = self.errors.len() as f64;
        let mut mean = DMatrix::zeros(self.horizon + 1, k);
        let mut se = DMatrix::zeros(self.horizon + 1, k);
        for h in 0..=self.horizon {
            for i in 0..k {
                let col = self.perm.to_data[i];
                let mu = sum[h * k + i] / m;
                mean[(h, col)] = mu;
                let var = if m > 1.0 { ((sum2[h * k + i] / m - mu * mu) * m / (m - 1.0)).max(0.0) } else { 0.0 };
                se[(h, col)] = (var / m).sqrt();
            }
        }
        Ok((mean, se))
    }
}

fn cumulate_mask(data: &Dataset, req: &IRFRequest) -> Vec<bool> {
    let k = data.k();
    let mut mask = vec![false; k];
    if req.cumulative {
        match &req.flow_variables {
            Some(v) => v.iter().filter(|&&c| c < k).for_each(|&c| mask[c] = true),
            None => (0..k).filter(|&c| c != data.constrained).for_each(|c| mask[c] = true),
        }
    }
    mask
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn at_bound(data: &Dataset, row: usize) -> bool {
    data.values[(row, data.constrained)] <= data.bound[row] + crate::model::REGIME_TOL_DATA
}

/// Generalized impulse response at one structural point.
pub fn girf(
    point: &StructuralPoint,
    rf: &ReducedFormParams,
    data: &Dataset,
    latent: &LatentEstimate,
    req: &IRFRequest,
) -> Result<IRFResult> {
    req.validate()?;
    let eng = Engine::new(rf, data, latent, req.horizon, req.draws, req.seed, req.antithetic)?;
    let (mean, se) = eng.response(point, req.shock, req.date, &cumulate_mask(data, req))?;
    let rows = to_rows(&mean);
    Ok(IRFResult {
        date: data.dates[req.date],
        row: req.date,
        at_bound: at_bound(data, req.date),
        horizon: req.horizon,
        draws: req.draws,
        points: 1,
        cumulative: req.cumulative,
        variables: data.endog_names().to_vec(),
        lower: rows.clone(),
        upper: rows,
        se: to_rows(&se),
    })
}

fn envelope_with(eng: &Engine, points: &[StructuralPoint], data: &Dataset, req: &IRFRequest, row: usize) -> Result<IRFResult> {
    let mask = cumulate_mask(data, req);
    let k = data.k();
    let mut lo = DMatrix::from_element(req.horizon + 1, k, f64::INFINITY);
    let mut hi = DMatrix::from_element(req.horizon + 1, k, f64::NEG_INFINITY);
    let mut se_max = DMatrix::<f64>::zeros(req.horizon + 1, k);
    for pt in points {
        let (m, se) = eng.response(pt, req.shock, row, &mask)?;
        lo.zip_apply(&m, |a, b| *a = a.min(b));
        hi.zip_apply(&m, |a, b| *a = a.max(b));
        se_max.zip_apply(&se, |a, b| *a = a.max(b));
    }
    Ok(IRFResult {
        date: data.dates[row],
        row,
        at_bound: at_bound(data, row),
        horizon: req.horizon,
        draws: req.draws,
        points: points.len(),
        cumulative: req.cumulative,
        variables: data.endog_names().to_vec(),
        lower: to_rows(&lo),
        upper: to_rows(&hi),
        se: to_rows(&se_max),
    })
}

/// Pointwise band over the accepted points of an identified set.
pub fn girf_envelope(
    set: &IdentifiedSet,
    rf: &ReducedFormParams,
    data: &Dataset,
    latent: &LatentEstimate,
    req: &IRFRequest,
) -> Result<IRFResult> {
    req.validate()?;
    let points = set.accepted_points();
    if points.is_empty() {
        return Err(Error::InvalidSpec("identified set has no accepted points".into()));
    }
    let eng = Engine::new(rf, data, latent, req.horizon, req.draws, req.seed, req.antithetic)?;
    envelope_with(&eng, &points, data, req, req.date)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimelineRow {
    pub date: Quarter,
    pub row: usize,
    pub at_bound: bool,
    pub horizon: usize,
    pub variable: String,
    pub lower: f64,
    pub upper: f64,
}

/// Envelope responses at selected horizons for every date with a full set
/// of lags.
pub fn irf_timeline(
    set: &IdentifiedSet,
    rf: &ReducedFormParams,
    data: &Dataset,
    latent: &LatentEstimate,
    horizons: &[usize],
    req: &IRFRequest,
) -> Result<Vec<TimelineRow>> {
    req.validate()?;
    let points = set.accepted_points();
    if points.is_empty() {
        return Err(Error::InvalidSpec("identified set has no accepted points".into()));
    }
    let hmax = horizons.iter().copied().max().unwrap_or(0);
    let eng = Engine::new(rf, data, latent, hmax, req.draws, req.seed, req.antithetic)?;
    let r = IRFRequest { horizon: hmax, ..req.clone() };
    let names = data.endog_names().to_vec();
    let mut out = Vec::new();
    for row in rf.dims.p..data.t() {
        let env = envelope_with(&eng, &points, data, &r, row)?;
        for &h in horizons {
            for (c, name) in names.iter().enumerate() {
                out.push(TimelineRow {
                    date: env.date,
                    row,
                    at_bound: env.at_bound,
                    horizon: h,
                    variable: name.clone(),
                    lower: env.lower[h][c],
                    upper: env.upper[h][c],
                });
            }
        }
    }
    Ok(out)
}
