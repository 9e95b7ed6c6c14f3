//! Impulse responses and the two bundled scenarios: demand-driven lower-bound
//! episodes, and a policy cut while at the bound.

use serde::{Deserialize, Serialize};

use crate::params::DSGEParams;
use crate::sim::{simulate, simulate_prop2, Method, Shocks, SimPath, State};
use crate::{DsgeError, Result};

/// Responses to a shadow-rate innovation, as differences between paired
/// paths with zero future shocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsgeIrf {
    pub method: Method,
    pub xi: f64,
    pub shock: f64,
    /// Whether the unshocked path starts at the bound.
    pub base_at_elb: bool,
    pub i: Vec<f64>,
    pub istar: Vec<f64>,
    pub y: Vec<f64>,
    pub pi: Vec<f64>,
}

pub fn dsge_girf(p: &DSGEParams, method: Method, init: State, shock: f64, horizon: usize) -> Result<DsgeIrf> {
    let n = horizon + 1;
    let base = simulate(p, method, &Shocks::zeros(n), init)?;
    let mut sh = Shocks::zeros(n);
    sh.i[0] = shock;
    let hit = simulate(p, method, &sh, init)?;
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    Ok(DsgeIrf {
        method,
        xi: p.xi_star(),
        shock,
        base_at_elb: base.at_elb[0],
        i: diff(&hit.i, &base.i),
        istar: diff(&hit.istar, &base.istar),
        y: diff(&hit.y, &base.y),
        pi: diff(&hit.pi, &base.pi),
    })
}

/// Length of the first run of bound periods.
pub fn first_spell(path: &SimPath) -> usize {
    path.at_elb.iter().skip_while(|b| !**b).take_while(|b| **b).count()
}

/// Smallest demand-shock size in `(0, hi]` whose run under `run` keeps the
/// economy at the bound for at least `min_spell` periods, to within `tol`.
pub fn bisect_demand_size(
    run: impl Fn(f64) -> Result<SimPath>,
    min_spell: usize,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    if first_spell(&run(hi)?) < min_spell {
        return Err(DsgeError::Invalid(format!("no shock up to {hi} gives a spell of {min_spell} periods")));
    }
    let (mut lo, mut hi) = (0.0, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if first_spell(&run(mid)?) >= min_spell {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Demand innovations hitting at the given 1-based periods. A positive
/// `εᵇ` lowers demand.
pub fn demand_shocks(periods: usize, at: &[usize], size: f64) -> Shocks {
    let mut s = Shocks::zeros(periods);
    for &t in at {
        if (1..=periods).contains(&t) {
            s.b[t - 1] = size;
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub xis: Vec<f64>,
    pub periods: usize,
    /// 1-based periods of the demand innovations.
    pub demand_at: Vec<usize>,
    /// `None` selects the size by bisection.
    pub demand_size: Option<f64>,
    pub min_spell: usize,
    pub policy_shock: f64,
    pub horizon: usize,
}

impl ScenarioConfig {
    pub fn figure1() -> Self {
        ScenarioConfig {
            name: "figure1".into(),
            xis: vec![0.0, 0.5, 1.0],
            periods: 40,
            demand_at: vec![6, 7],
            demand_size: None,
            min_spell: 4,
            policy_shock: 0.0,
            horizon: 0,
        }
    }

    pub fn figure2() -> Self {
        ScenarioConfig {
            name: "figure2".into(),
            xis: vec![0.0, 0.5, 1.0],
            periods: 1,
            demand_at: vec![1],
            demand_size: None,
            min_spell: 4,
            policy_shock: -0.25,
            horizon: 20,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "figure1" => Ok(Self::figure1()),
            "figure2" => Ok(Self::figure2()),
            _ => Err(DsgeError::Invalid(format!("unknown scenario {name}"))),
        }
    }

    /// Overrides from `key = value` lines. `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        let bad = |k: &str, v: &str| DsgeError::Invalid(format!("bad value {v:?} for {k}"));
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| DsgeError::Invalid(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let list = |v: &str| v.split(',').map(|s| s.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>();
            match k {
                "scenario" => *self = Self::by_name(v)?,
                "xi" => self.xis = list(v).map_err(|_| bad(k, v))?,
                "periods" => self.periods = v.parse().map_err(|_| bad(k, v))?,
                "demand_at" => {
                    self.demand_at = v.split(',').map(|s| s.trim().parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad(k, v))?
                }
                "demand_size" => self.demand_size = if v == "auto" { None } else { Some(v.parse().map_err(|_| bad(k, v))?) },
                "min_spell" => self.min_spell = v.parse().map_err(|_| bad(k, v))?,
                "policy_shock" => self.policy_shock = v.parse().map_err(|_| bad(k, v))?,
                "horizon" => self.horizon = v.parse().map_err(|_| bad(k, v))?,
                _ => return Err(DsgeError::Invalid(format!("unknown key {k}"))),
            }
        }
        Ok(())
    }
}

/// One `ξ*` of the demand-episode scenario, beside the economy without the
/// bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRun {
    pub xi: f64,
    pub path: SimPath,
    pub no_elb: SimPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub config: ScenarioConfig,
    pub demand_size: f64,
    pub runs: Vec<EpisodeRun>,
}

/// Demand innovations at the configured periods drive the closed-form
/// economy to the bound from steady state. The default size is the smallest
/// one that holds the economy without UMP at the bound for `min_spell`
/// periods.
pub fn figure1(base: &DSGEParams, cfg: &ScenarioConfig) -> Result<Episode> {
    let size = match cfg.demand_size {
        Some(s) => s,
        None => {
            let p0 = base.with_xi(0.0);
            bisect_demand_size(|s| simulate_prop2(&p0, &demand_shocks(cfg.periods, &cfg.demand_at, s), State::default()), cfg.min_spell, 100.0, 1e-6)?
        }
    };
    let shocks = demand_shocks(cfg.periods, &cfg.demand_at, size);
    let mut runs = Vec::new();
    for &xi in &cfg.xis {
        let p = base.with_xi(xi);
        runs.push(EpisodeRun {
            xi,
            path: simulate_prop2(&p, &shocks, State::default())?,
            no_elb: simulate(&p, Method::Linear, &shocks, State::default())?,
        });
    }
    Ok(Episode { config: cfg.clone(), demand_size: size, runs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAtBound {
    pub xi: f64,
    pub init: State,
    pub prop2: DsgeIrf,
    pub occbin: DsgeIrf,
    pub no_elb: DsgeIrf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyScenario {
    pub config: ScenarioConfig,
    pub demand_size: f64,
    pub runs: Vec<PolicyAtBound>,
}

/// State after the demand innovation of period 1, realized under OccBin.
pub fn demand_state(p: &DSGEParams, size: f64) -> Result<State> {
    let sh = demand_shocks(1, &[1], size);
    Ok(simulate(p, Method::Occbin, &sh, State::default())?.terminal_state())
}

/// A policy cut in period 2 after a severe demand innovation in period 1.
/// The default size is the smallest one that keeps the economy without UMP
/// at the bound for `min_spell` periods, counting period 1.
pub fn figure2(base: &DSGEParams, cfg: &ScenarioConfig) -> Result<PolicyScenario> {
    let size = match cfg.demand_size {
        Some(s) => s,
        None => {
            let p0 = base.with_xi(0.0);
            let n = cfg.min_spell + 40;
            bisect_demand_size(|s| simulate(&p0, Method::Occbin, &demand_shocks(n, &[1], s), State::default()), cfg.min_spell, 100.0, 1e-6)?
        }
    };
    let mut runs = Vec::new();
    for &xi in &cfg.xis {
        let p = base.with_xi(xi);
        let init = demand_state(&p, size)?;
        runs.push(PolicyAtBound {
            xi,
            init,
            prop2: dsge_girf(&p, Method::Prop2, init, cfg.policy_shock, cfg.horizon)?,
            occbin: dsge_girf(&p, Method::Occbin, init, cfg.policy_shock, cfg.horizon)?,
            no_elb: dsge_girf(&p, Method::Linear, init, cfg.policy_shock, cfg.horizon)?,
        });
    }
    Ok(PolicyScenario { config: cfg.clone(), demand_size: size, runs })
}
