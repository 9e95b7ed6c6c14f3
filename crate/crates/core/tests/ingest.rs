use cksvar::ingest::*;
use cksvar::Quarter;

fn months(start: (i32, u32), n: usize) -> Vec<(i32, u32)> {
    (0..n as i64)
        .map(|i| {
            let m = start.0 as i64 * 12 + start.1 as i64 - 1 + i;
            (m.div_euclid(12) as i32, (m.rem_euclid(12) + 1) as u32)
        })
        .collect()
}

fn quarterly(name: &str, start: Quarter, vals: Vec<f64>) -> RawSeries {
    let dates: Vec<Quarter> = (0..vals.len() as i64).map(|i| start.offset(i)).collect();
    RawSeries::quarterly(name, &dates, vals).unwrap()
}

#[test]
fn quarterly_means() {
    let s = RawSeries::monthly("c", &months((2000, 1), 24), vec![3.5; 24]).unwrap();
    let a = monthly_to_quarterly_mean(&s).unwrap();
    assert_eq!(a.series.values, vec![3.5; 8]);
    assert!(a.dropped.is_empty());

    let s = RawSeries::monthly("m", &months((2000, 1), 3), vec![1.0, 2.0, 3.0]).unwrap();
    assert_eq!(monthly_to_quarterly_mean(&s).unwrap().series.values, vec![2.0]);

    // March 2000 through March 2001: the lone March is a partial quarter.
    let s = RawSeries::monthly("p", &months((2000, 3), 13), (0..13).map(f64::from).collect()).unwrap();
    let a = monthly_to_quarterly_mean(&s).unwrap();
    assert_eq!(a.series.len(), 4);
    assert_eq!(a.dropped, vec![Quarter::new(2000, 1)]);
    assert_eq!(a.series.quarters().unwrap()[0], Quarter::new(2000, 2));
    assert_eq!(a.series.values[0], 2.0);

    let s = RawSeries::monthly("x", &months((2000, 2), 2), vec![1.0, 2.0]).unwrap();
    assert!(monthly_to_quarterly_mean(&s).is_err());
    let q = quarterly("q", Quarter::new(2000, 1), vec![1.0]);
    assert!(monthly_to_quarterly_mean(&q).is_err());
}

#[test]
fn transforms() {
    let q0 = Quarter::new(1990, 1);
    let flat = quarterly("p", q0, vec![100.0, 100.0, 100.0]);
    let out = transform(&flat, &Transform::LogDiffAnnualized, None).unwrap();
    assert_eq!(out.values, vec![0.0, 0.0]);
    assert_eq!(out.quarters().unwrap()[0], Quarter::new(1990, 2));

    let dbl = quarterly("p", q0, vec![1.0, 2.0]);
    let v = transform(&dbl, &Transform::LogDiffAnnualized, None).unwrap().values[0];
    assert!((v - 277.258_872_223_978_1).abs() < 1e-9);
    let v = transform(&dbl, &Transform::PctDiffAnnualized, None).unwrap().values[0];
    assert!((v - 400.0).abs() < 1e-12);

    let gap = Transform::GapPercent { potential: "pot".into() };
    let a = quarterly("a", q0, vec![101.0, 99.0, 100.0]);
    let pot = quarterly("pot", q0, vec![100.0, 100.0, 100.0]);
    let g = transform(&a, &gap, Some(&pot)).unwrap().values;
    assert!((g[0] - 1.0).abs() < 1e-12 && (g[1] + 1.0).abs() < 1e-12 && g[2] == 0.0);
    assert!(transform(&a, &gap, None).is_err());

    let neg = quarterly("n", q0, vec![1.0, -1.0]);
    assert!(transform(&neg, &Transform::LogDiffAnnualized, None).is_err());
}

#[test]
fn transforms_commute_with_truncation() {
    let q0 = Quarter::new(1980, 1);
    let vals: Vec<f64> = (0..40).map(|i| 100.0 * (1.0 + 0.01 * i as f64 + 0.003 * (i as f64).sin())).collect();
    let s = quarterly("s", q0, vals.clone());
    let full = transform(&s, &Transform::LogDiffAnnualized, None).unwrap();
    let cut = quarterly("s", q0.offset(10), vals[10..30].to_vec());
    let part = transform(&cut, &Transform::LogDiffAnnualized, None).unwrap();
    // One observation is lost at the new start.
    assert_eq!(part.len(), 19);
    for (p, v) in part.periods.iter().zip(&part.values) {
        let i = full.periods.iter().position(|x| x == p).unwrap();
        assert_eq!(*v, full.values[i]);
    }
}

#[test]
fn bounds() {
    let dates = Quarter::range(Quarter::new(2010, 1), Quarter::new(2010, 4));
    let us = IngestConfig::us();
    assert_eq!(build_bound(&us.bound, &dates, &[]).unwrap(), vec![0.2; 4]);

    let ior = RawSeries::monthly("IOR", &months((2009, 1), 36), vec![-0.1; 36]).unwrap();
    let jp = IngestConfig::jp();
    for b in build_bound(&jp.bound, &dates, std::slice::from_ref(&ior)).unwrap() {
        assert!((b + 0.03).abs() < 1e-12);
    }
    let zero = RawSeries::monthly("IOR", &months((2009, 1), 36), vec![0.0; 36]).unwrap();
    let r = BoundRecipe::Series { source: "IOR".into(), offset: 0.0 };
    assert_eq!(build_bound(&r, &dates, &[zero]).unwrap(), vec![0.0; 4]);

    let short = RawSeries::monthly("IOR", &months((2010, 1), 6), vec![0.0; 6]).unwrap();
    assert!(build_bound(&r, &dates, &[short]).is_err());
}

/// Synthetic FRED-style sources covering 1959q1 to 2019q4.
fn us_sources() -> Vec<RawSeries> {
    let q0 = Quarter::new(1959, 1);
    let n = 244;
    let defl: Vec<f64> = (0..n).map(|i| 20.0 * (0.008 * i as f64).exp()).collect();
    let gdp: Vec<f64> = (0..n).map(|i| 3000.0 * (0.007 * i as f64).exp() * (1.0 + 0.01 * (i as f64 / 5.0).sin())).collect();
    let pot: Vec<f64> = (0..n).map(|i| 3000.0 * (0.007 * i as f64).exp()).collect();
    let nm = 3 * n;
    let ffr: Vec<f64> = (0..nm).map(|i| (4.0 + 4.0 * (i as f64 / 40.0).sin()).max(0.1)).collect();
    let gs10: Vec<f64> = (0..nm).map(|i| 6.0 + 2.0 * (i as f64 / 60.0).cos()).collect();
    vec![
        quarterly("GDPDEF", q0, defl),
        quarterly("GDPC1", q0, gdp),
        quarterly("GDPPOT", q0, pot),
        RawSeries::monthly("FEDFUNDS", &months((1959, 1), nm), ffr).unwrap(),
        RawSeries::monthly("GS10", &months((1959, 1), nm), gs10).unwrap(),
    ]
}

#[test]
fn us_assembly() {
    let a = assemble(&IngestConfig::us(), &us_sources(), &[]).unwrap();
    let d = &a.dataset;
    // 59 full years plus one quarter.
    assert_eq!(d.t(), 59 * 4 + 1);
    assert_eq!(d.dates[0], Quarter::new(1960, 1));
    assert_eq!(d.endog_names(), ["inflation", "output_gap", "long_rate", "policy_rate"]);
    assert_eq!(d.constrained, 3);
    assert_eq!(d.m(), 0);
    assert!((d.values[(0, 0)] - 400.0 * 0.008).abs() < 1e-9);
    assert!(d.bound.iter().all(|&b| b == 0.2));
    let share = elb_share(d, 1e-6);
    assert!(share > 0.0 && share < 1.0);
    assert_eq!(a.manifest.t, 237);
}

#[test]
fn assembly_errors() {
    let mut cfg = IngestConfig::us();
    cfg.endog.clear();
    assert!(assemble(&cfg, &us_sources(), &[]).is_err());

    let mut cfg = IngestConfig::us();
    cfg.window = Some((Quarter::new(1950, 1), Quarter::new(2019, 1)));
    assert!(assemble(&cfg, &us_sources(), &[]).is_err());

    let mut src = us_sources();
    src[4].values[300] = f64::NAN;
    assert!(assemble(&IngestConfig::us(), &src, &[]).is_err());

    let mut src = us_sources();
    src.push(src[0].clone());
    assert!(assemble(&IngestConfig::us(), &src, &[]).is_err());

    let mut cfg = IngestConfig::us();
    cfg.constrained = "nope".into();
    assert!(assemble(&cfg, &us_sources(), &[]).is_err());
}

#[test]
fn jp_assembly_adds_trend_growth_and_censors() {
    let q0 = Quarter::new(1984, 1);
    let n = 150;
    let nm = 3 * n;
    let call: Vec<f64> = (0..nm).map(|i| if i < 200 { 5.0 - 0.025 * i as f64 } else { -0.05 }).collect();
    let src = vec![
        RawSeries::monthly("CORE_CPI", &months((1984, 1), nm), (0..nm).map(|i| 90.0 + 0.01 * i as f64).collect()).unwrap(),
        quarterly("BOJ_GAP", q0, (0..n).map(|i| (i as f64 / 7.0).sin()).collect()),
        RawSeries::monthly("JGB9", &months((1984, 1), nm), vec![1.0; nm]).unwrap(),
        RawSeries::monthly("CALL_RATE", &months((1984, 1), nm), call).unwrap(),
        quarterly("POTENTIAL_GDP", q0, (0..n).map(|i| 400.0 * (1.0 + 0.002 * i as f64)).collect()),
        RawSeries::monthly("IOR", &months((1984, 1), nm), vec![-0.1; nm]).unwrap(),
    ];
    let a = assemble(&IngestConfig::jp(), &src, &[]).unwrap();
    let d = &a.dataset;
    assert_eq!(d.dates[0], Quarter::new(1985, 3));
    assert_eq!(d.t(), Quarter::new(2019, 1).index() as usize - Quarter::new(1985, 3).index() as usize + 1);
    assert_eq!(d.m(), 1);
    assert_eq!(d.names.last().unwrap(), "trend_growth");
    assert!(!a.manifest.censored_quarters.is_empty());
    assert!((0..d.t()).all(|t| d.values[(t, 3)] >= d.bound[t]));

    let mut cfg = IngestConfig::jp();
    cfg.censor_below_bound = false;
    assert!(assemble(&cfg, &src, &[]).is_err());
}

#[test]
fn csv_reading_detects_frequency_and_blanks() {
    let q = "DATE,GDPC1\n1960-01-01,100\n1960-04-01,101\n1960-07-01,.\n1960-10-01,103\n";
    let s = read_csv_str(q).unwrap();
    assert_eq!(s[0].frequency, Frequency::Quarterly);
    assert_eq!(s[0].quarters().unwrap()[3], Quarter::new(1960, 4));
    assert!(s[0].values[2].is_nan());

    let m = "date,a,b\n2000-01,1,\n2000-02,2,5\n2000-03,3,6\n";
    let s = read_csv_str(m).unwrap();
    assert_eq!(s[0].frequency, Frequency::Monthly);
    assert_eq!(s[1].len(), 2);

    let s = read_csv_str("date,x\n2001Q1,1\n2001-Q2,2\n").unwrap();
    assert_eq!(s[0].quarters().unwrap(), vec![Quarter::new(2001, 1), Quarter::new(2001, 2)]);
    assert!(read_csv_str("date,x\n2001Q1,1\n2001-05,2\n").is_err());
    assert!(read_csv_str("date,x\n2001-13,1\n").is_err());
}

fn write_sources(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut paths = Vec::new();
    for s in us_sources() {
        let mut text = format!("date,{}\n", s.name);
        for (p, v) in s.periods.iter().zip(&s.values) {
            let stamp = match s.frequency {
                Frequency::Monthly => format!("{}-{:02}", p.div_euclid(12), p.rem_euclid(12) + 1),
                Frequency::Quarterly => Quarter::from_index(*p).to_string(),
            };
            text.push_str(&format!("{stamp},{v}\n"));
        }
        let path = dir.join(format!("{}.csv", s.name));
        std::fs::write(&path, text).unwrap();
        paths.push(path);
    }
    paths
}

#[test]
fn assembly_is_reproducible_from_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_sources(dir.path());
    let a = ingest_files(&IngestConfig::us(), &paths).unwrap();
    assert_eq!(a.manifest.sources.len(), 5);
    assert!(a.manifest.sources.iter().all(|s| s.sha256.len() == 64));
    let (csv1, json1) = write_assembled(&a, &dir.path().join("us")).unwrap();
    let bytes1 = std::fs::read(&csv1).unwrap();
    assert_eq!(sha256_hex(&bytes1), a.manifest.dataset_sha256);

    let m: Manifest = serde_json::from_str(&std::fs::read_to_string(&json1).unwrap()).unwrap();
    let b = reassemble(&m).unwrap();
    let (csv2, json2) = write_assembled(&b, &dir.path().join("again")).unwrap();
    assert_eq!(bytes1, std::fs::read(csv2).unwrap());
    assert_eq!(std::fs::read(json1).unwrap(), std::fs::read(json2).unwrap());

    let loaded = load_dataset(&csv1).unwrap();
    assert_eq!(loaded, a.dataset);

    std::fs::write(&paths[0], "date,GDPDEF\n1960Q1,1\n").unwrap();
    assert!(reassemble(&m).is_err());
}
