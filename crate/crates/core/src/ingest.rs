//! File-based construction of estimation datasets from raw monthly or
//! quarterly series.
//!
//! Monthly series are averaged to quarters before any transform is applied.
//! Difference transforms lose their first observation. Missing values inside
//! the sample window are an error; nothing is imputed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::period::Quarter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Monthly,
    Quarterly,
}

/// A named series. `periods` are month indices (`12·year + month − 1`) for
/// monthly data and [`Quarter::index`] values for quarterly data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub name: String,
    pub units: String,
    pub frequency: Frequency,
    pub periods: Vec<i64>,
    pub values: Vec<f64>,
}

impl RawSeries {
    pub fn quarterly(name: &str, dates: &[Quarter], values: Vec<f64>) -> Result<Self> {
        let s = RawSeries {
            name: name.into(),
            units: String::new(),
            frequency: Frequency::Quarterly,
            periods: dates.iter().map(|q| q.index()).collect(),
            values,
        };
        s.validate()?;
        Ok(s)
    }

    /// `months` are `(year, month)` pairs with `month` in `1..=12`.
    pub fn monthly(name: &str, months: &[(i32, u32)], values: Vec<f64>) -> Result<Self> {
        let s = RawSeries {
            name: name.into(),
            units: String::new(),
            frequency: Frequency::Monthly,
            periods: months.iter().map(|&(y, m)| month_index(y, m)).collect(),
            values,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.periods.len() != self.values.len() {
            return Err(Error::InvalidData(format!("{}: dates and values differ in length", self.name)));
        }
        if self.periods.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidData(format!("{}: dates are not strictly increasing", self.name)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Quarter of each observation; quarterly series only.
    pub fn quarters(&self) -> Result<Vec<Quarter>> {
        if self.frequency != Frequency::Quarterly {
            return Err(Error::InvalidData(format!("{} is not quarterly", self.name)));
        }
        Ok(self.periods.iter().map(|&i| Quarter::from_index(i)).collect())
    }

    fn value_at(&self, period: i64) -> Option<f64> {
        self.periods.binary_search(&period).ok().map(|i| self.values[i])
    }

    fn to_quarterly(&self) -> Result<RawSeries> {
        match self.frequency {
            Frequency::Quarterly => Ok(self.clone()),
            Frequency::Monthly => Ok(monthly_to_quarterly_mean(self)?.series),
        }
    }
}

fn month_index(year: i32, month: u32) -> i64 {
    year as i64 * 12 + month as i64 - 1
}

/// Result of quarterly averaging, with the quarters dropped for lack of
/// three monthly observations.
#[derive(Debug, Clone)]
pub struct Aggregated {
    pub series: RawSeries,
    pub dropped: Vec<Quarter>,
}

/// Quarterly arithmetic means of a monthly series. Quarters with fewer than
/// three observations are dropped and reported; a missing month value makes
/// the quarter missing rather than partial.
pub fn monthly_to_quarterly_mean(s: &RawSeries) -> Result<Aggregated> {
    if s.frequency != Frequency::Monthly {
        return Err(Error::InvalidData(format!("{} is not monthly", s.name)));
    }
    s.validate()?;
    let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (&m, &v) in s.periods.iter().zip(&s.values) {
        let q = Quarter::of_month(m.div_euclid(12) as i32, (m.rem_euclid(12) + 1) as u32);
        groups.entry(q.index()).or_default().push(v);
    }
    let mut periods = Vec::new();
    let mut values = Vec::new();
    let mut dropped = Vec::new();
    for (q, vs) in groups {
        if vs.len() == 3 {
            periods.push(q);
            values.push(vs.iter().sum::<f64>() / 3.0);
        } else {
            dropped.push(Quarter::from_index(q));
        }
    }
    if periods.is_empty() {
        return Err(Error::InvalidData(format!("{}: no complete quarter", s.name)));
    }
    let series = RawSeries { name: s.name.clone(), units: s.units.clone(), frequency: Frequency::Quarterly, periods, values };
    Ok(Aggregated { series, dropped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Level,
    /// `400·ln(x_t / x_{t−1})`.
    LogDiffAnnualized,
    /// `400·(x_t − x_{t−1}) / x_{t−1}`.
    PctDiffAnnualized,
    /// `100·(x − potential) / potential`, with the potential series named.
    GapPercent { potential: String },
}

/// Applies `kind` to a series. `other` is the potential series for
/// [`Transform::GapPercent`] and is ignored otherwise.
pub fn transform(s: &RawSeries, kind: &Transform, other: Option<&RawSeries>) -> Result<RawSeries> {
    let mut out = RawSeries { periods: vec![], values: vec![], ..s.clone() };
    match kind {
        Transform::Level => return Ok(s.clone()),
        Transform::LogDiffAnnualized | Transform::PctDiffAnnualized => {
            for i in 1..s.len() {
                if s.periods[i] != s.periods[i - 1] + 1 {
                    continue;
                }
                let (a, b) = (s.values[i - 1], s.values[i]);
                let v = if matches!(kind, Transform::LogDiffAnnualized) {
                    if a <= 0.0 || b <= 0.0 {
                        return Err(Error::InvalidData(format!("{}: nonpositive level under log", s.name)));
                    }
                    400.0 * (b / a).ln()
                } else {
                    400.0 * (b - a) / a
                };
                out.periods.push(s.periods[i]);
                out.values.push(v);
            }
        }
        Transform::GapPercent { potential } => {
            let pot = other.ok_or_else(|| Error::Config(format!("gap for {} needs series {potential}", s.name)))?;
            if pot.frequency != s.frequency {
                return Err(Error::InvalidData(format!("{} and {} differ in frequency", s.name, pot.name)));
            }
            for (&p, &v) in s.periods.iter().zip(&s.values) {
                if let Some(z) = pot.value_at(p) {
                    out.periods.push(p);
                    out.values.push(100.0 * (v - z) / z);
                }
            }
        }
    }
    Ok(out)
}

/// One dataset column built from a source column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub output: String,
    pub source: String,
    pub transform: Transform,
}

impl Recipe {
    pub fn new(output: &str, source: &str, transform: Transform) -> Self {
        Recipe { output: output.into(), source: source.into(), transform }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundRecipe {
    Constant { value: f64 },
    /// A source series plus a fixed offset, in the units of the policy rate.
    Series { source: String, offset: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Us,
    Jp,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub preset: Preset,
    pub endog: Vec<Recipe>,
    /// Output name of the constrained variable.
    pub constrained: String,
    #[serde(default)]
    pub exog: Vec<Recipe>,
    pub bound: BoundRecipe,
    /// Inclusive sample window; `None` uses the common coverage.
    #[serde(default)]
    pub window: Option<(Quarter, Quarter)>,
    /// Equations (output names) the exogenous controls enter; `None` means all.
    #[serde(default)]
    pub exog_equations: Option<Vec<String>>,
    /// Replace observations of the constrained variable that fall below the
    /// bound by the bound itself. Otherwise such observations are an error.
    #[serde(default)]
    pub censor_below_bound: bool,
}

impl IngestConfig {
    /// FRED mnemonics: GDPDEF, GDPC1, GDPPOT, GS10, FEDFUNDS.
    pub fn us() -> Self {
        IngestConfig {
            preset: Preset::Us,
            endog: vec![
                Recipe::new("inflation", "GDPDEF", Transform::LogDiffAnnualized),
                Recipe::new("output_gap", "GDPC1", Transform::GapPercent { potential: "GDPPOT".into() }),
                Recipe::new("long_rate", "GS10", Transform::Level),
                Recipe::new("policy_rate", "FEDFUNDS", Transform::Level),
            ],
            constrained: "policy_rate".into(),
            exog: vec![],
            bound: BoundRecipe::Constant { value: 0.2 },
            window: Some((Quarter::new(1960, 1), Quarter::new(2019, 1))),
            exog_equations: None,
            // Quarterly average rates were around 0.1 from 2009 to 2015.
            censor_below_bound: true,
        }
    }

    /// Expected columns: CORE_CPI, BOJ_GAP (already in percent), JGB9,
    /// CALL_RATE, POTENTIAL_GDP and IOR.
    pub fn jp() -> Self {
        IngestConfig {
            preset: Preset::Jp,
            endog: vec![
                Recipe::new("inflation", "CORE_CPI", Transform::PctDiffAnnualized),
                Recipe::new("output_gap", "BOJ_GAP", Transform::Level),
                Recipe::new("long_rate", "JGB9", Transform::Level),
                Recipe::new("policy_rate", "CALL_RATE", Transform::Level),
            ],
            constrained: "policy_rate".into(),
            exog: vec![Recipe::new("trend_growth", "POTENTIAL_GDP", Transform::PctDiffAnnualized)],
            bound: BoundRecipe::Series { source: "IOR".into(), offset: 0.07 },
            window: Some((Quarter::new(1985, 3), Quarter::new(2019, 1))),
            exog_equations: None,
            // The call rate sits a few basis points below IOR + 7bp after 2016.
            censor_below_bound: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.endog.is_empty() {
            return Err(Error::Config("no endogenous recipes".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for r in self.endog.iter().chain(&self.exog) {
            if !seen.insert(r.output.as_str()) || r.output == "date" || r.output == "bound" {
                return Err(Error::Config(format!("output name '{}' repeated or reserved", r.output)));
            }
        }
        if !self.endog.iter().any(|r| r.output == self.constrained) {
            return Err(Error::Config(format!("constrained variable '{}' has no recipe", self.constrained)));
        }
        if let Some((a, b)) = self.window {
            if b < a {
                return Err(Error::Config(format!("window {a}..{b} is empty")));
            }
        }
        if let Some(eqs) = &self.exog_equations {
            if let Some(e) = eqs.iter().find(|e| !self.endog.iter().any(|r| &r.output == *e)) {
                return Err(Error::Config(format!("exogenous controls assigned to unknown equation '{e}'")));
            }
        }
        Ok(())
    }
}

fn lookup<'a>(sources: &'a BTreeMap<String, RawSeries>, name: &str) -> Result<&'a RawSeries> {
    sources.get(name).ok_or_else(|| Error::Config(format!("no source column '{name}'")))
}

fn build_column(r: &Recipe, sources: &BTreeMap<String, RawSeries>) -> Result<RawSeries> {
    let s = lookup(sources, &r.source)?.to_quarterly()?;
    let other = match &r.transform {
        Transform::GapPercent { potential } => Some(lookup(sources, potential)?.to_quarterly()?),
        _ => None,
    };
    let mut out = transform(&s, &r.transform, other.as_ref())?;
    out.name = r.output.clone();
    Ok(out)
}

/// Per-quarter bound over `dates`.
pub fn build_bound(recipe: &BoundRecipe, dates: &[Quarter], sources: &[RawSeries]) -> Result<Vec<f64>> {
    let map: BTreeMap<String, RawSeries> = sources.iter().map(|s| (s.name.clone(), s.clone())).collect();
    bound_from(recipe, dates, &map)
}

fn bound_from(recipe: &BoundRecipe, dates: &[Quarter], sources: &BTreeMap<String, RawSeries>) -> Result<Vec<f64>> {
    match recipe {
        BoundRecipe::Constant { value } => Ok(vec![*value; dates.len()]),
        BoundRecipe::Series { source, offset } => {
            let s = lookup(sources, source)?.to_quarterly()?;
            dates
                .iter()
                .map(|q| match s.value_at(q.index()) {
                    Some(v) if v.is_finite() => Ok(v + offset),
                    _ => Err(Error::InvalidData(format!("bound series {source} does not cover {q}"))),
                })
                .collect()
        }
    }
}

/// Digest of an input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: PathBuf,
    pub sha256: String,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: IngestConfig,
    pub window: (Quarter, Quarter),
    pub t: usize,
    pub endog: Vec<String>,
    pub exog: Vec<String>,
    pub constrained: String,
    pub sources: Vec<SourceFile>,
    /// Quarters dropped from monthly sources for incomplete coverage.
    pub dropped_quarters: BTreeMap<String, Vec<Quarter>>,
    /// Quarters whose constrained observation was raised to the bound.
    pub censored_quarters: Vec<Quarter>,
    /// Hash of the dataset CSV as written by [`dataset_csv`].
    pub dataset_sha256: String,
}

#[derive(Debug, Clone)]
pub struct Assembled {
    pub dataset: Dataset,
    pub manifest: Manifest,
}

/// Aligns, windows and validates the recipe outputs.
pub fn assemble(config: &IngestConfig, raws: &[RawSeries], files: &[SourceFile]) -> Result<Assembled> {
    config.validate()?;
    let mut sources = BTreeMap::new();
    for r in raws {
        r.validate()?;
        if sources.insert(r.name.clone(), r.clone()).is_some() {
            return Err(Error::InvalidData(format!("source column '{}' appears twice", r.name)));
        }
    }
    let mut dropped = BTreeMap::new();
    for r in raws.iter().filter(|r| r.frequency == Frequency::Monthly) {
        let a = monthly_to_quarterly_mean(r)?;
        if !a.dropped.is_empty() {
            dropped.insert(r.name.clone(), a.dropped);
        }
    }
    let endog: Vec<RawSeries> = config.endog.iter().map(|r| build_column(r, &sources)).collect::<Result<_>>()?;
    let exog: Vec<RawSeries> = config.exog.iter().map(|r| build_column(r, &sources)).collect::<Result<_>>()?;
    let cols: Vec<&RawSeries> = endog.iter().chain(&exog).collect();

    // Common coverage, over which every column must be present.
    let lo = cols.iter().map(|c| c.periods.first().copied()).collect::<Option<Vec<_>>>();
    let hi = cols.iter().map(|c| c.periods.last().copied()).collect::<Option<Vec<_>>>();
    let (lo, hi) = match (lo, hi) {
        (Some(lo), Some(hi)) => (lo.into_iter().max().unwrap(), hi.into_iter().min().unwrap()),
        _ => return Err(Error::InvalidData("a recipe produced an empty series".into())),
    };
    let (start, end) = match config.window {
        Some((a, b)) => {
            if a.index() < lo || b.index() > hi {
                return Err(Error::InvalidData(format!(
                    "window {a}..{b} outside the common coverage {}..{}",
                    Quarter::from_index(lo),
                    Quarter::from_index(hi)
                )));
            }
            (a, b)
        }
        None if lo <= hi => (Quarter::from_index(lo), Quarter::from_index(hi)),
        None => return Err(Error::InvalidData("recipes share no common quarter".into())),
    };
    let dates = Quarter::range(start, end);
    let t = dates.len();
    let grab = |c: &RawSeries| -> Result<Vec<f64>> {
        dates
            .iter()
            .map(|q| match c.value_at(q.index()) {
                Some(v) if v.is_finite() => Ok(v),
                _ => Err(Error::InvalidData(format!("{} missing at {q}", c.name))),
            })
            .collect()
    };
    let mut values = DMatrix::zeros(t, endog.len());
    for (j, c) in endog.iter().enumerate() {
        for (i, v) in grab(c)?.into_iter().enumerate() {
            values[(i, j)] = v;
        }
    }
    let mut xm = DMatrix::zeros(t, exog.len());
    for (j, c) in exog.iter().enumerate() {
        for (i, v) in grab(c)?.into_iter().enumerate() {
            xm[(i, j)] = v;
        }
    }
    let bound = bound_from(&config.bound, &dates, &sources)?;
    let constrained = config.endog.iter().position(|r| r.output == config.constrained).unwrap();
    let mut censored = Vec::new();
    if config.censor_below_bound {
        for (i, q) in dates.iter().enumerate() {
            if values[(i, constrained)] < bound[i] {
                values[(i, constrained)] = bound[i];
                censored.push(*q);
            }
        }
    }
    let names: Vec<String> = cols.iter().map(|c| c.name.clone()).collect();
    let dataset = Dataset::new(dates, values, bound, Some(xm), names, constrained)?;
    let manifest = Manifest {
        config: config.clone(),
        window: (start, end),
        t,
        endog: config.endog.iter().map(|r| r.output.clone()).collect(),
        exog: config.exog.iter().map(|r| r.output.clone()).collect(),
        constrained: config.constrained.clone(),
        sources: files.to_vec(),
        dropped_quarters: dropped,
        censored_quarters: censored,
        dataset_sha256: sha256_hex(dataset_csv(&dataset).as_bytes()),
    };
    Ok(Assembled { dataset, manifest })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim(), "" | "." | "NA" | "N/A" | "#N/A" | "NaN" | "nan" | "null")
}

enum Stamp {
    Month(i32, u32),
    Quarter(Quarter),
}

/// `YYYY-Qn`, `YYYYQn`, `YYYY-MM` or `YYYY-MM-DD` (day ignored).
fn parse_stamp(s: &str) -> Result<Stamp> {
    let t = s.trim();
    if t.to_ascii_uppercase().contains('Q') {
        return t.parse::<Quarter>().map(Stamp::Quarter).map_err(Error::InvalidData);
    }
    let mut it = t.split(['-', '/']);
    let bad = || Error::InvalidData(format!("unrecognized date '{s}'"));
    let y: i32 = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    let m: u32 = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    if !(1..=12).contains(&m) {
        return Err(bad());
    }
    Ok(Stamp::Month(y, m))
}

/// Reads a wide CSV (date column first, one series per further column).
/// Month-stamped files whose observations sit three months apart on
/// quarter-start months, as FRED writes quarterly data, are read as
/// quarterly.
pub fn read_csv_str(text: &str) -> Result<Vec<RawSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header.len() < 2 {
        return Err(Error::InvalidData("expected a date column and at least one series".into()));
    }
    let mut stamps = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![vec![]; header.len() - 1];
    for rec in rdr.records() {
        let rec = rec?;
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        stamps.push(parse_stamp(&rec[0])?);
        for (j, col) in cols.iter_mut().enumerate() {
            let f = rec.get(j + 1).unwrap_or("");
            col.push(if is_missing(f) {
                f64::NAN
            } else {
                f.trim().parse().map_err(|_| Error::InvalidData(format!("bad number '{f}' in {}", header[j + 1])))?
            });
        }
    }
    let all_q = stamps.iter().all(|s| matches!(s, Stamp::Quarter(_)));
    let all_m = stamps.iter().all(|s| matches!(s, Stamp::Month(..)));
    let (frequency, periods): (Frequency, Vec<i64>) = if all_q {
        (Frequency::Quarterly, stamps.iter().map(|s| if let Stamp::Quarter(q) = s { q.index() } else { 0 }).collect())
    } else if all_m {
        let months: Vec<i64> = stamps.iter().map(|s| if let Stamp::Month(y, m) = s { month_index(*y, *m) } else { 0 }).collect();
        let quarterly = months.len() > 1 && months.iter().all(|m| m.rem_euclid(3) == 0) && months.windows(2).all(|w| w[1] - w[0] == 3);
        if quarterly {
            (Frequency::Quarterly, months.iter().map(|m| m.div_euclid(3)).collect())
        } else {
            (Frequency::Monthly, months)
        }
    } else {
        return Err(Error::InvalidData("mixed monthly and quarterly dates".into()));
    };
    header[1..]
        .iter()
        .zip(cols)
        .map(|(name, values)| {
            // Trailing and leading blanks are outside the series' coverage.
            let keep: Vec<usize> = (0..values.len()).filter(|&i| !values[i].is_nan()).collect();
            let (a, b) = match (keep.first(), keep.last()) {
                (Some(&a), Some(&b)) => (a, b + 1),
                _ => (0, 0),
            };
            let s = RawSeries {
                name: name.clone(),
                units: String::new(),
                frequency,
                periods: periods[a..b].to_vec(),
                values: values[a..b].to_vec(),
            };
            s.validate()?;
            Ok(s)
        })
        .collect()
}

pub fn read_csv(path: &Path) -> Result<(Vec<RawSeries>, SourceFile)> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Error::InvalidData(format!("{} is not UTF-8", path.display())))?;
    let series = read_csv_str(&text)?;
    let file = SourceFile { path: path.to_path_buf(), sha256: sha256_hex(&bytes), columns: series.iter().map(|s| s.name.clone()).collect() };
    Ok((series, file))
}

/// Reads every file and assembles the dataset.
pub fn ingest_files(config: &IngestConfig, paths: &[PathBuf]) -> Result<Assembled> {
    let mut raws = Vec::new();
    let mut files = Vec::new();
    for p in paths {
        let (s, f) = read_csv(p)?;
        raws.extend(s);
        files.push(f);
    }
    assemble(config, &raws, &files)
}

/// Re-runs an assembly from its manifest, checking source hashes.
pub fn reassemble(manifest: &Manifest) -> Result<Assembled> {
    let paths: Vec<PathBuf> = manifest.sources.iter().map(|s| s.path.clone()).collect();
    let out = ingest_files(&manifest.config, &paths)?;
    for (a, b) in out.manifest.sources.iter().zip(&manifest.sources) {
        if a.sha256 != b.sha256 {
            return Err(Error::InvalidData(format!("{} changed since the manifest was written", a.path.display())));
        }
    }
    Ok(out)
}

/// Dataset as CSV: `date`, endogenous columns, exogenous columns, `bound`.
pub fn dataset_csv(d: &Dataset) -> String {
    let mut s = String::from("date");
    for n in &d.names {
        s.push(',');
        s.push_str(n);
    }
    s.push_str(",bound\n");
    for t in 0..d.t() {
        s.push_str(&d.dates[t].to_string());
        for j in 0..d.k() {
            s.push_str(&format!(",{}", d.values[(t, j)]));
        }
        for j in 0..d.m() {
            s.push_str(&format!(",{}", d.exog[(t, j)]));
        }
        s.push_str(&format!(",{}\n", d.bound[t]));
    }
    s
}

/// Column roles for reading a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub endog: Vec<String>,
    pub exog: Vec<String>,
    pub constrained: String,
}

/// Parses a dataset CSV. Without a layout every column other than `date`
/// and `bound` is endogenous and the last one is constrained.
pub fn parse_dataset(text: &str, layout: Option<&Layout>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let col = |n: &str| header.iter().position(|h| h == n).ok_or_else(|| Error::InvalidData(format!("dataset lacks column '{n}'")));
    let date_c = col("date")?;
    let bound_c = col("bound")?;
    let layout = match layout {
        Some(l) => l.clone(),
        None => {
            let endog: Vec<String> = header.iter().filter(|h| *h != "date" && *h != "bound").cloned().collect();
            let constrained = endog.last().cloned().ok_or_else(|| Error::InvalidData("dataset has no series".into()))?;
            Layout { endog, exog: vec![], constrained }
        }
    };
    let ec: Vec<usize> = layout.endog.iter().map(|n| col(n)).collect::<Result<_>>()?;
    let xc: Vec<usize> = layout.exog.iter().map(|n| col(n)).collect::<Result<_>>()?;
    let mut dates = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut xrows: Vec<Vec<f64>> = Vec::new();
    let mut bound = Vec::new();
    let num = |f: &str| f.parse::<f64>().map_err(|_| Error::InvalidData(format!("bad number '{f}'")));
    for rec in rdr.records() {
        let rec = rec?;
        dates.push(rec[date_c].parse::<Quarter>().map_err(Error::InvalidData)?);
        rows.push(ec.iter().map(|&c| num(&rec[c])).collect::<Result<_>>()?);
        xrows.push(xc.iter().map(|&c| num(&rec[c])).collect::<Result<_>>()?);
        bound.push(num(&rec[bound_c])?);
    }
    let t = rows.len();
    let values = DMatrix::from_fn(t, ec.len(), |i, j| rows[i][j]);
    let exog = DMatrix::from_fn(t, xc.len(), |i, j| xrows[i][j]);
    let constrained = layout
        .endog
        .iter()
        .position(|n| *n == layout.constrained)
        .ok_or_else(|| Error::InvalidData(format!("constrained column '{}' is not endogenous", layout.constrained)))?;
    let names = layout.endog.iter().chain(&layout.exog).cloned().collect();
    Dataset::new(dates, values, bound, Some(exog), names, constrained)
}

/// Reads a dataset CSV, taking column roles from a manifest next to it
/// (same stem, `.json`) when one exists.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mpath = path.with_extension("json");
    let layout = if mpath.exists() {
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(&mpath)?)?;
        Some(Layout { endog: m.endog, exog: m.exog, constrained: m.constrained })
    } else {
        None
    };
    parse_dataset(&text, layout.as_ref())
}

/// Writes `<stem>.csv` and `<stem>.json`.
pub fn write_assembled(a: &Assembled, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let csv_path = stem.with_extension("csv");
    let json_path = stem.with_extension("json");
    std::fs::write(&csv_path, dataset_csv(&a.dataset))?;
    std::fs::write(&json_path, serde_json::to_string_pretty(&a.manifest)? + "\n")?;
    Ok((csv_path, json_path))
}

/// Share of periods with the constrained variable at its bound.
pub fn elb_share(d: &Dataset, tol: f64) -> f64 {
    let n = (0..d.t()).filter(|&t| d.values[(t, d.constrained)] <= d.bound[t] + tol).count();
    n as f64 / d.t() as f64
}
