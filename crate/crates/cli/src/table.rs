//! Aligned text tables and long-format CSV bodies.

use std::fmt::Write;

use cksvar::estimation::{EstimationResult, LagSelection, TestResult};
use cksvar::identification::{IdentifiedSet, ShadowBand};
use cksvar::ingest::Manifest;
use cksvar::irf::{IRFResult, TimelineRow};
use cksvar::likelihood::LatentEstimate;
use cksvar::model::Dataset;
use nkdsge::scenario::{Episode, PolicyScenario};

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map(|x| format!("{x:.prec$}")).unwrap_or_else(|| "-".into())
}

pub fn ingest(m: &Manifest, d: &Dataset) -> String {
    let mut s = String::new();
    writeln!(s, "window      {} - {}", m.window.0, m.window.1).unwrap();
    writeln!(s, "periods     {}", m.t).unwrap();
    writeln!(s, "endogenous  {}", m.endog.join(", ")).unwrap();
    writeln!(s, "exogenous   {}", if m.exog.is_empty() { "-".into() } else { m.exog.join(", ") }).unwrap();
    writeln!(s, "constrained {}", m.constrained).unwrap();
    writeln!(s, "at bound    {:.1}%", 100.0 * cksvar::ingest::elb_share(d, 1e-9)).unwrap();
    writeln!(s, "censored    {}", m.censored_quarters.len()).unwrap();
    writeln!(s, "dataset     sha256 {}", m.dataset_sha256).unwrap();
    for src in &m.sources {
        writeln!(s, "source      {} sha256 {}", src.path.display(), src.sha256).unwrap();
    }
    s
}

pub fn estimation(r: &EstimationResult) -> String {
    let mut s = String::new();
    writeln!(s, "{}({})  sample {} - {}  T = {}", r.spec.variant.label(), r.spec.p, r.sample.0, r.sample.1, r.t_eff).unwrap();
    writeln!(s, "log likelihood  {:.3}", r.loglik).unwrap();
    writeln!(s, "parameters      {}", r.npar).unwrap();
    writeln!(s, "AIC per obs     {:.4}", r.aic_per_obs).unwrap();
    writeln!(s, "converged       {}", if r.converged { "yes" } else { "no" }).unwrap();
    writeln!(s).unwrap();
    let w = r.param_names.iter().map(|n| n.chars().count()).max().unwrap_or(9).max(9);
    writeln!(s, "{:<w$}  {:>12}  {:>10}", "parameter", "estimate", "s.e.").unwrap();
    for (i, n) in r.param_names.iter().enumerate() {
        let se = r.std_errors.as_ref().map(|v| v[i]);
        writeln!(s, "{:<w$}  {:>12.5}  {:>10}", n, r.theta[i], opt(se, 5)).unwrap();
    }
    s
}

pub struct TestRow {
    pub name: String,
    pub model: String,
    pub test: TestResult,
}

/// Hypothesis, model, LR statistic, degrees of freedom and p-value.
pub fn tests(rows: &[TestRow]) -> String {
    let mut s = format!("{:<10}  {:<12}  {:>9}  {:>4}  {:>8}\n", "Hypothesis", "Model", "LR", "df", "p-value");
    for r in rows {
        writeln!(s, "{:<10}  {:<12}  {:>9.3}  {:>4}  {:>8.3}", r.name, r.model, r.test.lr, r.test.df, r.test.pvalue).unwrap();
        if let Some(w) = &r.test.warning {
            writeln!(s, "  warning: {w}").unwrap();
        }
    }
    s
}

pub fn lag_selection(sel: &LagSelection) -> String {
    let mut s = format!("T = {}\n", sel.t_eff);
    writeln!(s, "{:>2}  {:>12}  {:>5}  {:>9}  {:>9}  {:>4}  {:>8}", "p", "loglik", "npar", "AIC/T", "LR(p+1)", "df", "p-value").unwrap();
    for r in &sel.rows {
        writeln!(
            s,
            "{:>2}  {:>12.3}  {:>5}  {:>9.4}  {:>9}  {:>4}  {:>8}",
            r.p,
            r.loglik,
            r.npar,
            r.aic_per_obs,
            opt(r.lr_next, 3),
            r.df_next.map(|d| d.to_string()).unwrap_or_else(|| "-".into()),
            opt(r.pvalue_next, 3)
        )
        .unwrap();
    }
    writeln!(s, "selected: AIC p = {}, sequential tests p = {}", sel.p_aic, sel.p_seq).unwrap();
    s
}

/// Maximal runs of accepted grid values.
fn intervals(set: &IdentifiedSet) -> Vec<(f64, f64)> {
    let xs = set.accepted_xis();
    let step = set.grid.step;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for x in xs {
        match out.last_mut() {
            Some(last) if x - last.1 <= step * 1.5 => last.1 = x,
            _ => out.push((x, x)),
        }
    }
    out
}

pub fn identified(raw: &IdentifiedSet, filtered: &IdentifiedSet) -> String {
    let fmt = |set: &IdentifiedSet| {
        let iv = intervals(set);
        if iv.is_empty() {
            "empty".to_string()
        } else {
            iv.iter().map(|(a, b)| format!("[{a:.3}, {b:.3}]")).collect::<Vec<_>>().join(" ")
        }
    };
    format!(
        "grid            {} to {} step {}\nidentified set  {}\nwith signs      {}\n",
        raw.grid.lo,
        raw.grid.hi,
        raw.grid.step,
        fmt(raw),
        fmt(filtered)
    )
}

pub fn set_csv(set: &IdentifiedSet) -> String {
    let k1 = set.betatilde.len();
    let mut s = String::from("xi,accepted,residual");
    for i in 0..k1 {
        write!(s, ",beta{i}").unwrap();
    }
    for i in 0..k1 {
        write!(s, ",gamma{i}").unwrap();
    }
    s.push_str(",reason\n");
    for p in &set.points {
        write!(s, "{},{},{}", p.xi, p.accepted, p.residual).unwrap();
        for i in 0..k1 {
            write!(s, ",{}", p.beta.get(i).map(|v| v.to_string()).unwrap_or_default()).unwrap();
        }
        for i in 0..k1 {
            write!(s, ",{}", p.gamma.get(i).map(|v| v.to_string()).unwrap_or_default()).unwrap();
        }
        let reason = p
            .rejection_reason
            .clone()
            .or_else(|| p.violation.as_ref().map(|v| format!("sign of {} at {} h{}", v.variable, v.date, v.horizon)))
            .unwrap_or_default();
        writeln!(s, ",{}", reason.replace(',', ";")).unwrap();
    }
    s
}

pub fn irf_csv(r: &IRFResult) -> String {
    let mut s = String::from("date,horizon,variable,lower,upper,se\n");
    for h in 0..=r.horizon {
        for (v, name) in r.variables.iter().enumerate() {
            writeln!(s, "{},{h},{name},{},{},{}", r.date, r.lower[h][v], r.upper[h][v], r.se[h][v]).unwrap();
        }
    }
    s
}

pub fn irf(r: &IRFResult) -> String {
    let mut s = format!(
        "shock at {}{}  points {}  draws {}{}\n",
        r.date,
        if r.at_bound { " (at bound)" } else { "" },
        r.points,
        r.draws,
        if r.cumulative { "  cumulative" } else { "" }
    );
    write!(s, "{:>3}", "h").unwrap();
    for n in &r.variables {
        write!(s, "  {:>23}", n).unwrap();
    }
    s.push('\n');
    for h in 0..=r.horizon {
        write!(s, "{h:>3}").unwrap();
        for v in 0..r.variables.len() {
            write!(s, "  {:>23}", format!("[{:.4}, {:.4}]", r.lower[h][v], r.upper[h][v])).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn timeline_csv(rows: &[TimelineRow]) -> String {
    let mut s = String::from("date,at_bound,horizon,variable,lower,upper\n");
    for r in rows {
        writeln!(s, "{},{},{},{},{},{}", r.date, r.at_bound, r.horizon, r.variable, r.lower, r.upper).unwrap();
    }
    s
}

pub fn shadow_csv(b: &ShadowBand, latent: &LatentEstimate) -> String {
    let mut s = String::from("date,observed,lower,upper,reduced_shadow\n");
    for i in 0..b.dates.len() {
        writeln!(s, "{},{},{},{},{}", b.dates[i], b.observed[i], b.lower[i], b.upper[i], latent.ybar[i]).unwrap();
    }
    s
}

/// One row per `ξ*` and period; `_noelb` columns are the economy without the
/// bound under the same shocks.
pub fn episode_csv(e: &Episode) -> String {
    let mut s = String::from("xi,period,y,pi,i,istar,at_elb,y_noelb,pi_noelb,i_noelb\n");
    for r in &e.runs {
        let (p, n) = (&r.path, &r.no_elb);
        for t in 0..p.len() {
            writeln!(s, "{},{},{},{},{},{},{},{},{},{}", r.xi, t + 1, p.y[t], p.pi[t], p.i[t], p.istar[t], p.at_elb[t], n.y[t], n.pi[t], n.i[t]).unwrap();
        }
    }
    s
}

pub fn policy_csv(s: &PolicyScenario) -> String {
    let mut out = String::from("xi,method,horizon,i,istar,y,pi\n");
    for r in &s.runs {
        for (name, irf) in [("prop2", &r.prop2), ("occbin", &r.occbin), ("no_elb", &r.no_elb)] {
            for h in 0..irf.y.len() {
                writeln!(out, "{},{name},{h},{},{},{},{}", r.xi, irf.i[h], irf.istar[h], irf.y[h], irf.pi[h]).unwrap();
            }
        }
    }
    out
}
