//! Exact likelihood of the kinked model and the particle-filter likelihood of
//! the models with latent shadow lags.
//!
//! Every period contributes either a Gaussian density (bound slack) or the
//! density of `Y1` jointly with the event `Ȳ2 ≤ b`. Writing the reduced-form
//! error as `u = a + c·w` with `w = Ȳ2 − b ≤ 0`, `c = (β̃', 1)'`, the censored
//! contribution integrates `w` out in closed form:
//!
//! `log f = −½log|2πΩ| − ½(a'Pa − r²/q) + ½log(2π/q) + log Φ(r/√q)`
//!
//! with `P = Ω⁻¹`, `q = c'Pc`, `r = c'Pa`, and the conditional of `w` is
//! `N(−r/q, 1/q)` truncated above at zero. The particle filter uses that
//! conditional as its proposal (a fully adapted filter), so within a spell the
//! incremental weights are the predictive densities above.
//!
//! Particles are only needed while some lag of the shadow value is unknown.
//! The filter runs one independent block per such stretch, with its own random
//! stream, which keeps the estimate a smooth function of the parameters between
//! resampling events and lets blocks share common random numbers across models.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_regressors, Dataset, ModelSpec, ReducedFormParams, Regressors, Variant};
use crate::period::Quarter;
use crate::stats::{norm_logcdf, trunc_normal_upper, LN_2PI};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LikelihoodConfig {
    pub n_particles: usize,
    /// Resample when the effective sample size drops below this fraction.
    pub resampling_threshold: f64,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        LikelihoodConfig { n_particles: 4096, resampling_threshold: 0.5, seed: 0, antithetic: true }
    }
}

impl LikelihoodConfig {
    pub fn with_particles(n: usize, seed: u64) -> Self {
        LikelihoodConfig { n_particles: n, seed, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::Config("n_particles must be at least 2".into()));
        }
        if !(self.resampling_threshold > 0.0 && self.resampling_threshold <= 1.0) {
            return Err(Error::Config("resampling threshold must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Filtered and smoothed estimates of the reduced-form shadow value `Ȳ2`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LatentEstimate {
    pub dates: Vec<Quarter>,
    /// Full-length path: observed outside the bound, smoothed mean at it.
    pub ybar: Vec<f64>,
    pub rows: Vec<LatentRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LatentRow {
    /// Dataset row of the period at the bound.
    pub row: usize,
    pub bound: f64,
    pub filtered_mean: f64,
    pub filtered_q: [f64; 3],
    pub smoothed_mean: f64,
    pub smoothed_sd: f64,
    /// 5%, 50% and 95% quantiles.
    pub smoothed_q: [f64; 3],
}

impl LatentEstimate {
    /// Observed series with no latent periods.
    pub fn observed(data: &Dataset) -> Self {
        LatentEstimate { dates: data.dates.clone(), ybar: data.y2(), rows: Vec::new() }
    }

    /// Reduced-form shadow deviations `min(Ȳ2 − b, 0)` from the smoothed path.
    pub fn deviation(&self, bound: &[f64]) -> Vec<f64> {
        self.ybar.iter().zip(bound).map(|(y, b)| (y - b).min(0.0)).collect()
    }
}

/// Per-evaluation constants shared by every period.
struct Kernel {
    l: DMatrix<f64>,
    /// −½ log|2πΩ|
    c0: f64,
    ct: DVector<f64>,
    q: f64,
    sq: f64,
    /// `L⁻¹ C*`, `k × p`
    g: DMatrix<f64>,
}

impl Kernel {
    fn new(rf: &ReducedFormParams) -> Result<Self> {
        rf.check_shapes()?;
        let k = rf.dims.k;
        let l = rf.omega_chol.clone();
        let logdet: f64 = (0..k).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
        let c0 = -0.5 * (k as f64 * LN_2PI + logdet);
        let mut c = DVector::from_element(k, 1.0);
        c.rows_mut(0, k - 1).copy_from(&rf.betatilde);
        let ct = solve_lower(&l, &c);
        let q = ct.norm_squared();
        let g = DMatrix::from_columns(
            &(0..rf.dims.p).map(|j| solve_lower(&l, &rf.cstar.column(j).into_owned())).collect::<Vec<_>>(),
        );
        Ok(Kernel { l, c0, ct, q, sq: q.sqrt(), g })
    }

    /// Log density for a whitened residual `e`; at the bound also returns the
    /// conditional mean of `w`.
    #[inline]
    fn contrib(&self, e: &[f64], at_bound: bool) -> (f64, f64) {
        let ss: f64 = e.iter().map(|v| v * v).sum();
        if !ss.is_finite() {
            return (f64::NEG_INFINITY, 0.0);
        }
        if !at_bound {
            return (self.c0 - 0.5 * ss, 0.0);
        }
        let r: f64 = e.iter().zip(self.ct.iter()).map(|(a, b)| a * b).sum();
        let ll = self.c0 - 0.5 * (ss - r * r / self.q) + 0.5 * (LN_2PI - self.q.ln()) + norm_logcdf(r / self.sq);
        (ll, -r / self.q)
    }
}

fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.solve_lower_triangular(b).expect("Cholesky factor has a positive diagonal")
}

/// Whitened residual of row `r` with all unknown shadow lags at the bound.
fn base_residual(rf: &ReducedFormParams, reg: &Regressors, kern: &Kernel, r: usize) -> DVector<f64> {
    let k = rf.dims.k;
    let p = rf.dims.p;
    let mut e = DVector::zeros(k);
    for i in 0..k {
        let mut mu = 0.0;
        for c in 0..reg.x.ncols() {
            mu += rf.c[(i, c)] * reg.x[(r, c)];
        }
        for j in 0..p {
            mu += rf.cstar[(i, j)] * reg.ybar_base[r][j];
        }
        let y = if i == k - 1 && reg.d[r] { reg.bound[r] } else { reg.y[(r, i)] };
        e[i] = y - mu;
    }
    solve_lower(&kern.l, &e)
}

/// Exact log likelihood treating every shadow lag as observed at its base
/// value (exact for the kinked model).
/// Returns −∞ when some contribution underflows.
pub fn loglik_exact(rf: &ReducedFormParams, reg: &Regressors) -> Result<f64> {
    let total: f64 = contributions_exact(rf, reg)?.iter().sum();
    Ok(if total.is_nan() { f64::NEG_INFINITY } else { total })
}

pub fn contributions_exact(rf: &ReducedFormParams, reg: &Regressors) -> Result<Vec<f64>> {
    let kern = Kernel::new(rf)?;
    Ok((0..reg.n())
        .map(|r| {
            let e = base_residual(rf, reg, &kern, r);
            kern.contrib(e.as_slice(), reg.d[r]).0
        })
        .collect())
}

pub fn loglik_ksvar(rf: &ReducedFormParams, data: &Dataset, spec: &ModelSpec) -> Result<f64> {
    if spec.variant != Variant::Ksvar {
        return Err(Error::InvalidSpec("exact likelihood requires the KSVAR variant".into()));
    }
    let reg = build_regressors(data, spec)?;
    loglik_exact(rf, &reg)
}

pub fn loglik_cksvar(
    rf: &ReducedFormParams,
    data: &Dataset,
    spec: &ModelSpec,
    cfg: &LikelihoodConfig,
) -> Result<(f64, LatentEstimate)> {
    if !spec.variant.has_latent() {
        return Err(Error::InvalidSpec("simulated likelihood requires a latent-lag variant".into()));
    }
    let reg = build_regressors(data, spec)?;
    let (ll, lat) = particle_filter(rf, &reg, cfg, true)?;
    Ok((ll, lat.expect("latent requested").into_estimate(data)))
}

pub fn smooth_latent(
    rf: &ReducedFormParams,
    data: &Dataset,
    spec: &ModelSpec,
    cfg: &LikelihoodConfig,
) -> Result<LatentEstimate> {
    if !spec.variant.has_latent() {
        let reg = build_regressors(data, spec)?;
        let (_, lat) = particle_filter(rf, &reg, cfg, true)?;
        return Ok(lat.expect("latent requested").into_estimate(data));
    }
    Ok(loglik_cksvar(rf, data, spec, cfg)?.1)
}

/// Log likelihood for any variant given prebuilt regressors: exact when no
/// shadow lag is ever unknown or the latent block is zero, simulated otherwise.
pub fn loglik(rf: &ReducedFormParams, reg: &Regressors, cfg: &LikelihoodConfig) -> Result<f64> {
    if !reg.any_unknown() || rf.cstar.iter().all(|v| *v == 0.0) {
        return loglik_exact(rf, reg);
    }
    Ok(particle_filter(rf, reg, cfg, false)?.0)
}

/// Latent estimates gathered by the filter, keyed by window row.
pub struct LatentRows {
    start: usize,
    rows: Vec<LatentRow>,
}

impl LatentRows {
    fn into_estimate(self, data: &Dataset) -> LatentEstimate {
        let mut ybar = data.y2();
        let mut rows = self.rows;
        for r in rows.iter_mut() {
            r.row += self.start;
            ybar[r.row] = r.smoothed_mean;
        }
        LatentEstimate { dates: data.dates.clone(), ybar, rows }
    }
}

struct Block {
    /// Window rows processed in the block.
    rows: Vec<usize>,
    /// Drawn deviations per row (empty when the row is not at the bound).
    draws: Vec<Vec<f64>>,
    /// Ancestor of each particle at each row.
    anc: Vec<Vec<u32>>,
    filtered: Vec<(f64, [f64; 3])>,
}

/// Runs the filter. Shadow values are carried as deviations `w ≤ 0` from the
/// bound, newest lag first.
pub fn particle_filter(
    rf: &ReducedFormParams,
    reg: &Regressors,
    cfg: &LikelihoodConfig,
    want_latent: bool,
) -> Result<(f64, Option<LatentRows>)> {
    cfg.validate()?;
    let kern = Kernel::new(rf)?;
    let k = rf.dims.k;
    let p = rf.dims.p;
    let n = cfg.n_particles;
    let sd_w = 1.0 / kern.sq;

    let mut total = 0.0;
    let mut latent = Vec::new();
    let mut win = vec![0.0; n * p];
    let mut win_next = vec![0.0; n * p];
    let mut logw = vec![0.0; n];
    let mut lw = vec![0.0; n];
    let mut weights = vec![1.0 / n as f64; n];
    let mut cond_mean = vec![0.0; n];
    let mut anc: Vec<u32> = (0..n as u32).collect();
    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut sorted_w = vec![0.0; n];
    let mut e = vec![0.0; k];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut open: Option<Block> = None;

    for r in 0..reg.n() {
        let unknown = reg.unknown[r].iter().any(|u| *u);
        if !unknown {
            if let Some(b) = open.take() {
                if want_latent {
                    finish_block(b, &weights, &mut latent);
                }
            }
        }
        let base = base_residual(rf, reg, &kern, r);
        let at = reg.d[r];
        if !unknown {
            let (ll, m) = kern.contrib(base.as_slice(), at);
            if !ll.is_finite() {
                return Ok((f64::NEG_INFINITY, None));
            }
            total += ll;
            if at {
                // a new block, all particles identical
                rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(r as u64 + 1);
                weights.iter_mut().for_each(|w| *w = 1.0 / n as f64);
                win.iter_mut().for_each(|w| *w = 0.0);
                cond_mean.iter_mut().for_each(|c| *c = m);
                let draws = draw_latent(&mut rng, &cond_mean, sd_w, cfg.antithetic);
                shift_windows(&mut win, &draws, None, p, &mut win_next);
                std::mem::swap(&mut win, &mut win_next);
                if want_latent {
                    let f = weighted_summary(&draws, &weights);
                    open = Some(Block {
                        rows: vec![r],
                        draws: vec![draws],
                        anc: vec![(0..n as u32).collect()],
                        filtered: vec![f],
                    });
                } else {
                    open = Some(Block { rows: vec![], draws: vec![], anc: vec![], filtered: vec![] });
                }
            }
            continue;
        }

        // some lag unknown: particle-specific predictive densities
        let unk = &reg.unknown[r];
        for i in 0..n {
            let wi = &win[i * p..(i + 1) * p];
            for a in 0..k {
                let mut v = base[a];
                for j in 0..p {
                    if unk[j] {
                        v -= kern.g[(a, j)] * wi[j];
                    }
                }
                e[a] = v;
            }
            let (ll, m) = kern.contrib(&e, at);
            lw[i] = ll;
            cond_mean[i] = m;
        }
        let mut mx = f64::NEG_INFINITY;
        for i in 0..n {
            logw[i] = weights[i].ln() + lw[i];
            mx = mx.max(logw[i]);
        }
        if !mx.is_finite() {
            return Err(Error::Degenerate { period: reg.start + r });
        }
        let mut s = 0.0;
        for i in 0..n {
            let v = (logw[i] - mx).exp();
            weights[i] = v;
            s += v;
        }
        total += mx + s.ln();
        let mut ess_den = 0.0;
        for w in weights.iter_mut() {
            *w /= s;
            ess_den += *w * *w;
        }
        let ess = 1.0 / ess_den;
        let resampled = ess < cfg.resampling_threshold * n as f64;
        if resampled {
            // ordering by the newest shadow lag keeps the selected ancestors
            // close to continuous in the parameters
            order.sort_unstable_by(|&a, &b| win[a as usize * p].total_cmp(&win[b as usize * p]).then(a.cmp(&b)));
            sorted_w.iter_mut().zip(&order).for_each(|(w, &o)| *w = weights[o as usize]);
            systematic_resample(&sorted_w, rng.random::<f64>(), &mut anc);
            anc.iter_mut().for_each(|a| *a = order[*a as usize]);
            let cm: Vec<f64> = anc.iter().map(|&a| cond_mean[a as usize]).collect();
            cond_mean.copy_from_slice(&cm);
            weights.iter_mut().for_each(|w| *w = 1.0 / n as f64);
        } else {
            anc.iter_mut().enumerate().for_each(|(i, a)| *a = i as u32);
        }
        let draws = if at {
            draw_latent(&mut rng, &cond_mean, sd_w, cfg.antithetic)
        } else {
            vec![0.0; n]
        };
        shift_windows(&win, &draws, if resampled { Some(&anc) } else { None }, p, &mut win_next);
        std::mem::swap(&mut win, &mut win_next);
        if want_latent {
            if let Some(b) = open.as_mut() {
                b.rows.push(r);
                b.filtered.push(if at { weighted_summary(&draws, &weights) } else { (0.0, [0.0; 3]) });
                b.draws.push(if at { draws } else { Vec::new() });
                b.anc.push(anc.clone());
            }
        }
    }
    if let Some(b) = open.take() {
        if want_latent {
            finish_block(b, &weights, &mut latent);
        }
    }
    if !total.is_finite() {
        return Ok((f64::NEG_INFINITY, None));
    }
    let lat = want_latent.then(|| {
        // the window rows are filled in later; carry the bound with each row
        let rows = latent
            .into_iter()
            .map(|(row, filt, smooth)| {
                let (fm, fq) = filt;
                let (sm, ssd, sq) = smooth;
                LatentRow {
                    row,
                    bound: reg.bound[row],
                    filtered_mean: fm + reg.bound[row],
                    filtered_q: fq.map(|v| v + reg.bound[row]),
                    smoothed_mean: sm + reg.bound[row],
                    smoothed_sd: ssd,
                    smoothed_q: sq.map(|v| v + reg.bound[row]),
                }
            })
            .collect();
        LatentRows { start: reg.start, rows }
    });
    Ok((total, lat))
}

type Smoothed = (usize, (f64, [f64; 3]), (f64, f64, [f64; 3]));

fn finish_block(b: Block, weights: &[f64], out: &mut Vec<Smoothed>) {
    let n = weights.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rows = Vec::new();
    for s in (0..b.rows.len()).rev() {
        if !b.draws[s].is_empty() {
            let vals: Vec<f64> = idx.iter().map(|&i| b.draws[s][i]).collect();
            let (mean, q) = weighted_summary(&vals, weights);
            let var = vals.iter().zip(weights).map(|(v, w)| w * (v - mean) * (v - mean)).sum::<f64>();
            rows.push((b.rows[s], b.filtered[s], (mean, var.max(0.0).sqrt(), q)));
        }
        for i in idx.iter_mut() {
            *i = b.anc[s][*i] as usize;
        }
    }
    rows.reverse();
    out.extend(rows);
}

fn draw_latent(rng: &mut ChaCha8Rng, mean: &[f64], sd: f64, antithetic: bool) -> Vec<f64> {
    let n = mean.len();
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let u: f64 = rng.random::<f64>().max(1e-300);
        out[i] = trunc_normal_upper(mean[i], sd, u);
        if antithetic && i + 1 < n {
            out[i + 1] = trunc_normal_upper(mean[i + 1], sd, (1.0 - u).max(1e-300));
            i += 2;
        } else {
            i += 1;
        }
    }
    out
}

fn shift_windows(win: &[f64], draws: &[f64], anc: Option<&Vec<u32>>, p: usize, out: &mut [f64]) {
    let n = draws.len();
    for i in 0..n {
        let src = anc.map_or(i, |a| a[i] as usize);
        out[i * p] = draws[i];
        for j in 1..p {
            out[i * p + j] = win[src * p + j - 1];
        }
    }
}

/// Systematic resampling with a single uniform offset.
pub fn systematic_resample(weights: &[f64], u: f64, out: &mut [u32]) {
    let n = weights.len();
    let step = 1.0 / n as f64;
    let mut cum = weights[0];
    let mut j = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let target = (u + i as f64) * step;
        while target > cum && j + 1 < n {
            j += 1;
            cum += weights[j];
        }
        *o = j as u32;
    }
}

fn weighted_summary(vals: &[f64], weights: &[f64]) -> (f64, [f64; 3]) {
    let mean = vals.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>();
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let mut q = [0.0; 3];
    let probs = [0.05, 0.5, 0.95];
    let mut cum = 0.0;
    let mut qi = 0;
    for &i in &order {
        cum += weights[i];
        while qi < 3 && cum >= probs[qi] {
            q[qi] = vals[i];
            qi += 1;
        }
    }
    while qi < 3 {
        q[qi] = vals[*order.last().unwrap()];
        qi += 1;
    }
    (mean, q)
}
