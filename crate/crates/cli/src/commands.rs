use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use cksvar::estimation::{
    default_exclusion_targets, exclusion_restrictions, fit, select_lag_with, test_ih1_with, test_ih2_with, test_nested,
    EstimationResult, FitOptions, LagSelection, TestResult,
};
use cksvar::identification::{apply_sign_restrictions, shadow_rate_envelope, solve_identified_set, GridSpec, IdentifiedSet, SignRestrictionSpec};
use cksvar::ingest::{ingest_files, load_dataset, IngestConfig};
use cksvar::irf::{girf_envelope, irf_timeline, IRFRequest};
use cksvar::likelihood::{smooth_latent, LatentEstimate, LikelihoodConfig};
use cksvar::model::{Dataset, ModelSpec, Variant, REGIME_TOL_DATA};
use cksvar::period::Quarter;
use nkdsge::scenario::{figure1, figure2, ScenarioConfig};
use nkdsge::DSGEParams;
use serde::Serialize;

use crate::args::*;
use crate::artifact::{hash_input, Artifacts, Header, Input};
use crate::table;

/// Whether every requested computation converged.
pub enum Outcome {
    Converged,
    NotConverged(Vec<String>),
}

impl Outcome {
    fn from_flags(flags: &[(&str, bool)]) -> Self {
        let bad: Vec<String> = flags.iter().filter(|(_, ok)| !ok).map(|(n, _)| format!("{n} did not converge")).collect();
        if bad.is_empty() {
            Outcome::Converged
        } else {
            Outcome::NotConverged(bad)
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let problems = validate(cli);
    if !problems.is_empty() {
        bail!("invalid configuration:\n  {}", problems.join("\n  "));
    }
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(cli, a),
        Command::Estimate(m) => cmd_estimate(cli, m),
        Command::Test { which } => cmd_test(cli, which),
        Command::Idset(a) => cmd_idset(cli, a),
        Command::Irf(a) => cmd_irf(cli, a),
        Command::Shadow(a) => cmd_shadow(cli, a),
        Command::Dsge { which: DsgeCommand::Scenario(a) } => cmd_dsge(cli, a),
    }
}

/// Every configuration problem at once.
pub fn validate(cli: &Cli) -> Vec<String> {
    let mut out = Vec::new();
    if cli.workers == 0 {
        out.push("--workers must be at least 1".to_string());
    }
    let model = |m: &ModelArgs, out: &mut Vec<String>| {
        if !m.data.exists() {
            out.push(format!("dataset {} does not exist", m.data.display()));
        }
        if m.p == 0 {
            out.push("--p must be at least 1".into());
        }
        if m.particles < 2 {
            out.push("--particles must be at least 2".into());
        }
        if m.starts == 0 {
            out.push("--starts must be at least 1".into());
        }
    };
    let id = |a: &IdsetArgs, out: &mut Vec<String>| {
        model(&a.model, out);
        let lo = if a.negative_xi { a.xi_lo.min(-1.0) } else { a.xi_lo };
        if lo < 0.0 && !a.negative_xi {
            out.push("negative --xi-lo needs --negative-xi".into());
        }
        if !(a.xi_step > 0.0) || a.xi_hi > 1.0 || lo > a.xi_hi {
            out.push("the ξ grid needs lo ≤ hi ≤ 1 and a positive step".into());
        }
        if a.sign_draws == 0 {
            out.push("--sign-draws must be at least 1".into());
        }
        for d in &a.sign_dates {
            if d.parse::<Quarter>().is_err() {
                out.push(format!("bad --sign-dates entry {d}"));
            }
        }
    };
    match &cli.command {
        Command::Ingest(a) => {
            if a.preset == PresetArg::Custom && a.config.is_none() {
                out.push("--preset custom needs --config".into());
            }
            if let Some(c) = &a.config {
                if !c.exists() {
                    out.push(format!("config {} does not exist", c.display()));
                }
            }
            for s in &a.sources {
                if !s.exists() {
                    out.push(format!("source {} does not exist", s.display()));
                }
            }
        }
        Command::Estimate(m) => model(m, &mut out),
        Command::Test { which } => match which {
            TestCommand::Ih1(m) => {
                model(m, &mut out);
                if m.variant == VariantArg::Csvar {
                    out.push("ih1 needs a kinked unrestricted model (ksvar or cksvar)".into());
                }
            }
            TestCommand::Ih2(m) => {
                model(m, &mut out);
                if m.variant != VariantArg::Cksvar {
                    out.push("ih2 tests CSVAR against an unrestricted CKSVAR; use --variant cksvar".into());
                }
            }
            TestCommand::ExclLong(a) => model(&a.model, &mut out),
            TestCommand::LagSelect(a) => {
                model(&a.model, &mut out);
                if a.pmax == 0 {
                    out.push("--pmax must be at least 1".into());
                }
            }
        },
        Command::Idset(a) => id(a, &mut out),
        Command::Irf(a) => {
            id(&a.id, &mut out);
            if a.draws == 0 {
                out.push("--draws must be at least 1".into());
            }
            if let Some(d) = &a.date {
                if d.parse::<Quarter>().is_err() {
                    out.push(format!("bad --date {d}"));
                }
            }
            if a.date.is_none() && a.horizons.is_empty() {
                out.push("the timeline needs --horizons".into());
            }
        }
        Command::Shadow(a) => {
            id(&a.id, &mut out);
            if a.alpha < 0.0 {
                out.push("--alpha must be nonnegative".into());
            }
        }
        Command::Dsge { which: DsgeCommand::Scenario(a) } => {
            if ScenarioConfig::by_name(&a.name).is_err() {
                out.push(format!("unknown scenario {} (figure1, figure2)", a.name));
            }
            if let Some(c) = &a.config {
                if !c.exists() {
                    out.push(format!("scenario config {} does not exist", c.display()));
                }
            }
        }
    }
    out
}

fn variant(v: VariantArg) -> Variant {
    match v {
        VariantArg::Cksvar => Variant::Cksvar,
        VariantArg::Ksvar => Variant::Ksvar,
        VariantArg::Csvar => Variant::Csvar,
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into())
}

fn spec_label(m: &ModelArgs) -> String {
    format!("{}{}", variant(m.variant).label().to_ascii_lowercase(), m.p)
}

fn load(m: &ModelArgs) -> Result<(Dataset, Vec<Input>)> {
    let mut inputs = vec![hash_input(&m.data)?];
    let manifest = m.data.with_extension("json");
    if manifest.exists() {
        inputs.push(hash_input(&manifest)?);
    }
    let data = load_dataset(&m.data).with_context(|| format!("loading {}", m.data.display()))?;
    Ok((data, inputs))
}

fn fit_options(cli: &Cli, m: &ModelArgs) -> FitOptions {
    FitOptions {
        seed: cli.seed,
        n_starts: m.starts,
        likelihood: LikelihoodConfig::with_particles(m.particles, cli.seed),
        regime_tol: REGIME_TOL_DATA,
        covariance: !m.no_covariance,
        workers: cli.workers,
        ..Default::default()
    }
}

fn model_spec(data: &Dataset, m: &ModelArgs) -> ModelSpec {
    ModelSpec::new(variant(m.variant), m.p, data.constrained)
}

fn column(data: &Dataset, key: &str) -> Result<usize> {
    if let Some(i) = data.endog_names().iter().position(|n| n == key) {
        return Ok(i);
    }
    match key.parse::<usize>() {
        Ok(i) if i < data.k() => Ok(i),
        _ => Err(anyhow!("no endogenous variable {key} (have {})", data.endog_names().join(", "))),
    }
}

fn cmd_ingest(cli: &Cli, a: &IngestArgs) -> Result<Outcome> {
    let mut inputs: Vec<Input> = a.sources.iter().map(|p| hash_input(p)).collect::<Result<_>>()?;
    let config = match &a.config {
        Some(p) => {
            inputs.push(hash_input(p)?);
            serde_json::from_str::<IngestConfig>(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?
        }
        None if a.preset == PresetArg::Jp => IngestConfig::jp(),
        None => IngestConfig::us(),
    };
    let preset = match a.preset {
        PresetArg::Us => "us",
        PresetArg::Jp => "jp",
        PresetArg::Custom => "custom",
    };
    let name = a.name.clone().unwrap_or_else(|| preset.to_string());
    let assembled = ingest_files(&config, &a.sources)?;
    let mut art = Artifacts::new(&cli.out, "ingest", &name, preset, cli.seed)?;
    cksvar::ingest::write_assembled(&assembled, &art.stem_path())?;
    let header = Header::new(cli, &inputs)?;
    art.txt(&header, &table::ingest(&assembled.manifest, &assembled.dataset))?;
    Ok(Outcome::Converged)
}

#[derive(Serialize)]
struct EstimateOut<'a> {
    estimation: &'a EstimationResult,
}

fn cmd_estimate(cli: &Cli, m: &ModelArgs) -> Result<Outcome> {
    let (data, inputs) = load(m)?;
    let res = fit(&model_spec(&data, m), &data, &fit_options(cli, m))?;
    let mut art = Artifacts::new(&cli.out, "estimate", &dataset_name(&m.data), &spec_label(m), cli.seed)?;
    art.json(cli, &inputs, &EstimateOut { estimation: &res })?;
    art.txt(&Header::new(cli, &inputs)?, &table::estimation(&res))?;
    Ok(Outcome::from_flags(&[("estimation", res.converged)]))
}

#[derive(Serialize)]
struct TestOut<'a> {
    test: &'a TestResult,
    restricted: &'a EstimationResult,
    unrestricted: &'a EstimationResult,
}

fn cmd_test(cli: &Cli, which: &TestCommand) -> Result<Outcome> {
    let (name, m, run): (&str, &ModelArgs, _) = match which {
        TestCommand::Ih1(m) => ("IH1", m, 0),
        TestCommand::Ih2(m) => ("IH2", m, 1),
        TestCommand::ExclLong(a) => ("EXCL", &a.model, 2),
        TestCommand::LagSelect(a) => return cmd_lag_select(cli, a),
    };
    let (data, inputs) = load(m)?;
    let spec = model_spec(&data, m);
    let opts = fit_options(cli, m);
    let (t, r, u) = match run {
        0 => test_ih1_with(&data, &spec, &opts)?,
        1 => test_ih2_with(&data, &spec, &opts)?,
        _ => {
            let TestCommand::ExclLong(a) = which else { unreachable!() };
            let excluded = column(&data, &a.excluded)?;
            if excluded == data.constrained {
                bail!("the excluded variable must be unconstrained");
            }
            let targets = if a.targets.is_empty() {
                default_exclusion_targets(&data, excluded)
            } else {
                a.targets.iter().map(|t| column(&data, t)).collect::<Result<_>>()?
            };
            let restricted = spec.with_restrictions(&exclusion_restrictions(m.p, excluded, &targets));
            test_nested(&data, &restricted, &spec, &opts)?
        }
    };
    let cmd = format!("test-{}", name.to_ascii_lowercase());
    let mut art = Artifacts::new(&cli.out, &cmd, &dataset_name(&m.data), &spec_label(m), cli.seed)?;
    art.json(cli, &inputs, &TestOut { test: &t, restricted: &r, unrestricted: &u })?;
    let row = table::TestRow { name: name.into(), model: format!("{}({})", spec.variant.label(), m.p), test: t.clone() };
    art.txt(&Header::new(cli, &inputs)?, &table::tests(&[row]))?;
    Ok(Outcome::from_flags(&[("restricted fit", r.converged), ("unrestricted fit", u.converged), ("test", t.warning.is_none())]))
}

fn cmd_lag_select(cli: &Cli, a: &LagArgs) -> Result<Outcome> {
    let m = &a.model;
    let (data, inputs) = load(m)?;
    let sel: LagSelection = select_lag_with(&data, &model_spec(&data, m), a.pmax, &fit_options(cli, m))?;
    let label = format!("{}-pmax{}", variant(m.variant).label().to_ascii_lowercase(), a.pmax);
    let mut art = Artifacts::new(&cli.out, "test-lag-select", &dataset_name(&m.data), &label, cli.seed)?;
    art.json(cli, &inputs, &sel)?;
    art.txt(&Header::new(cli, &inputs)?, &table::lag_selection(&sel))?;
    let flags: Vec<(String, bool)> = sel.fits.iter().map(|f| (format!("p = {}", f.spec.p), f.converged)).collect();
    let refs: Vec<(&str, bool)> = flags.iter().map(|(n, b)| (n.as_str(), *b)).collect();
    Ok(Outcome::from_flags(&refs))
}

/// Fit, smoothed shadow values and the sign-filtered identified set.
struct Identified {
    data: Dataset,
    inputs: Vec<Input>,
    fit: EstimationResult,
    latent: LatentEstimate,
    raw: IdentifiedSet,
    set: IdentifiedSet,
    signs: Option<SignRestrictionSpec>,
}

fn identify(cli: &Cli, a: &IdsetArgs) -> Result<Identified> {
    let m = &a.model;
    let (data, inputs) = load(m)?;
    let res = fit(&model_spec(&data, m), &data, &fit_options(cli, m))?;
    let latent = smooth_latent(&res.rf, &data, &res.spec, &res.likelihood)?;
    let lo = if a.negative_xi { a.xi_lo.min(-1.0) } else { a.xi_lo };
    let raw = solve_identified_set(&res.rf, &GridSpec { lo, hi: a.xi_hi, step: a.xi_step })?;
    let (set, signs) = if a.nonneg.is_empty() && a.nonpos.is_empty() {
        (raw.clone(), None)
    } else {
        let nonneg: Vec<usize> = a.nonneg.iter().map(|v| column(&data, v)).collect::<Result<_>>()?;
        let nonpos: Vec<usize> = a.nonpos.iter().map(|v| column(&data, v)).collect::<Result<_>>()?;
        let mut spec = SignRestrictionSpec::monetary(&nonneg, &nonpos);
        spec.rules.iter_mut().for_each(|r| r.horizons = (0, a.sign_horizon));
        spec.draws = a.sign_draws;
        spec.seed = cli.seed;
        if !a.sign_dates.is_empty() {
            let rows = a
                .sign_dates
                .iter()
                .map(|d| {
                    let q: Quarter = d.parse().map_err(|e: String| anyhow!(e))?;
                    data.dates.iter().position(|x| *x == q).ok_or_else(|| anyhow!("{q} is not in the dataset"))
                })
                .collect::<Result<Vec<_>>>()?;
            spec.dates = Some(rows);
        }
        (apply_sign_restrictions(&raw, &res.rf, &data, &latent, &spec)?, Some(spec))
    };
    Ok(Identified { data, inputs, fit: res, latent, raw, set, signs })
}

#[derive(Serialize)]
struct IdsetOut<'a> {
    estimation: &'a EstimationResult,
    projection_unrestricted: Option<(f64, f64)>,
    projection: Option<(f64, f64)>,
    sign_restrictions: &'a Option<SignRestrictionSpec>,
    identified_set: &'a IdentifiedSet,
}

fn id_label(a: &IdsetArgs) -> String {
    let mut s = spec_label(&a.model);
    if !a.nonneg.is_empty() || !a.nonpos.is_empty() {
        s.push_str("-signs");
    }
    s
}

fn cmd_idset(cli: &Cli, a: &IdsetArgs) -> Result<Outcome> {
    let id = identify(cli, a)?;
    let mut art = Artifacts::new(&cli.out, "idset", &dataset_name(&a.model.data), &id_label(a), cli.seed)?;
    art.json(
        cli,
        &id.inputs,
        &IdsetOut {
            estimation: &id.fit,
            projection_unrestricted: id.raw.xi_projection(),
            projection: id.set.xi_projection(),
            sign_restrictions: &id.signs,
            identified_set: &id.set,
        },
    )?;
    let header = Header::new(cli, &id.inputs)?;
    art.csv(&header, &table::set_csv(&id.set))?;
    art.txt(&header, &table::identified(&id.raw, &id.set))?;
    Ok(Outcome::from_flags(&[("estimation", id.fit.converged)]))
}

fn cmd_irf(cli: &Cli, a: &IrfArgs) -> Result<Outcome> {
    let id = identify(cli, &a.id)?;
    if id.set.is_empty() || id.set.accepted_points().is_empty() {
        bail!("the identified set is empty");
    }
    let req = IRFRequest { shock: a.shock, horizon: a.horizon, draws: a.draws, seed: cli.seed, cumulative: a.cumulative, ..Default::default() };
    let label = format!("{}-{}", id_label(&a.id), a.date.as_deref().unwrap_or("timeline"));
    let mut art = Artifacts::new(&cli.out, "irf", &dataset_name(&a.id.model.data), &label, cli.seed)?;
    let header = Header::new(cli, &id.inputs)?;
    match &a.date {
        Some(d) => {
            let q: Quarter = d.parse().map_err(|e: String| anyhow!(e))?;
            let row = id.data.dates.iter().position(|x| *x == q).ok_or_else(|| anyhow!("{q} is not in the dataset"))?;
            let r = girf_envelope(&id.set, &id.fit.rf, &id.data, &id.latent, &IRFRequest { date: row, ..req })?;
            art.json(cli, &id.inputs, &r)?;
            art.csv(&header, &table::irf_csv(&r))?;
            art.txt(&header, &table::irf(&r))?;
        }
        None => {
            let rows = irf_timeline(&id.set, &id.fit.rf, &id.data, &id.latent, &a.horizons, &req)?;
            art.json(cli, &id.inputs, &rows)?;
            art.csv(&header, &table::timeline_csv(&rows))?;
        }
    }
    Ok(Outcome::from_flags(&[("estimation", id.fit.converged)]))
}

fn cmd_shadow(cli: &Cli, a: &ShadowArgs) -> Result<Outcome> {
    let id = identify(cli, &a.id)?;
    let band = shadow_rate_envelope(&id.set, a.alpha, &id.latent, &id.data, a.quantiles)?;
    let mut art = Artifacts::new(&cli.out, "shadow", &dataset_name(&a.id.model.data), &id_label(&a.id), cli.seed)?;
    art.json(cli, &id.inputs, &band)?;
    let header = Header::new(cli, &id.inputs)?;
    art.csv(&header, &table::shadow_csv(&band, &id.latent))?;
    Ok(Outcome::from_flags(&[("estimation", id.fit.converged)]))
}

fn cmd_dsge(cli: &Cli, a: &ScenarioArgs) -> Result<Outcome> {
    let mut cfg = ScenarioConfig::by_name(&a.name)?;
    let mut inputs = Vec::new();
    if let Some(p) = &a.config {
        inputs.push(hash_input(p)?);
        cfg.apply_kv(&fs::read_to_string(p)?)?;
    }
    if !a.xi.is_empty() {
        cfg.xis = a.xi.clone();
    }
    if a.demand_size.is_some() {
        cfg.demand_size = a.demand_size;
    }
    if let Some(n) = a.periods {
        cfg.periods = n;
    }
    if let Some(h) = a.horizon {
        cfg.horizon = h;
    }
    let base = DSGEParams::calibration();
    let xis: Vec<String> = cfg.xis.iter().map(|x| format!("{x}")).collect();
    let label = format!("xi{}", xis.join("-"));
    let mut art = Artifacts::new(&cli.out, "dsge", &cfg.name, &label, cli.seed)?;
    let header = Header::new(&(cli, &cfg), &inputs)?;
    match cfg.name.as_str() {
        "figure1" => {
            let e = figure1(&base, &cfg)?;
            art.json(&(cli, &cfg), &inputs, &e)?;
            art.csv(&header, &table::episode_csv(&e))?;
        }
        _ => {
            let s = figure2(&base, &cfg)?;
            art.json(&(cli, &cfg), &inputs, &s)?;
            art.csv(&header, &table::policy_csv(&s))?;
        }
    }
    Ok(Outcome::Converged)
}
