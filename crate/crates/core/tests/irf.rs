mod common;

use cksvar::identification::*;
use cksvar::irf::*;
use cksvar::likelihood::LatentEstimate;
use cksvar::model::*;
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Case {
    s: StructuralParams,
    rf: ReducedFormParams,
    sim: Simulated,
    latent: LatentEstimate,
    point: StructuralPoint,
}

fn case(k: usize, p: usize, xi_parts: (f64, f64), bound: f64, seed: u64, t: usize) -> Case {
    let s = random_structural(k, p, xi_parts, true, seed);
    let spec = spec_for(&s, Variant::Cksvar);
    let rf = reduced_from_structural(&s, &spec).unwrap();
    let sim = simulate(&s, &spec, &SimOptions::new(t, seed, bound)).unwrap();
    let latent = LatentEstimate { dates: sim.data.dates.clone(), ybar: sim.ybar.clone(), rows: vec![] };
    let point = StructuralPoint { xi: s.xi(), beta: s.beta.clone(), gamma: s.gamma.clone() };
    Case { s, rf, sim, latent, point }
}

fn req(date: usize, horizon: usize, shock: f64) -> IRFRequest {
    IRFRequest { date, horizon, shock, ..Default::default() }
}

#[test]
fn zero_shock_gives_zero_response() {
    let c = case(3, 2, (0.5, 0.0), 0.3, 1, 200);
    let r = girf(&c.point, &c.rf, &c.sim.data, &c.latent, &req(50, 8, 0.0)).unwrap();
    assert!(r.lower.iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn linear_states_match_companion_responses() {
    let c = case(3, 2, (0.5, 0.0), -1e12, 2, 200);
    let h = 12;
    let r = girf(&c.point, &c.rf, &c.sim.data, &c.latent, &req(120, h, -0.25)).unwrap();
    let a = c.rf.above_lag_matrices();
    let shift = DVector::from_vec(c.point.error_shift(-0.25).unwrap());
    let mut psi: Vec<DMatrix<f64>> = vec![DMatrix::identity(3, 3)];
    for hh in 1..=h {
        let mut m = DMatrix::zeros(3, 3);
        for (j, aj) in a.iter().enumerate() {
            if hh > j {
                m += aj * &psi[hh - j - 1];
            }
        }
        psi.push(m);
    }
    for hh in 0..=h {
        let want = &psi[hh] * &shift;
        for v in 0..3 {
            let got = r.lower[hh][v];
            assert!((got - want[v]).abs() <= 3.0 * r.se[hh][v] + 1e-10, "h {hh} v {v}: {got} vs {}", want[v]);
        }
    }
}

#[test]
fn interior_responses_are_linear_in_the_shock() {
    let c = case(2, 1, (0.5, 0.0), -1e12, 3, 100);
    let a = girf(&c.point, &c.rf, &c.sim.data, &c.latent, &req(40, 6, -0.25)).unwrap();
    let b = girf(&c.point, &c.rf, &c.sim.data, &c.latent, &req(40, 6, -0.5)).unwrap();
    for (x, y) in a.lower.iter().flatten().zip(b.lower.iter().flatten()) {
        assert!((2.0 * x - y).abs() < 1e-12 * (1.0 + y.abs()));
    }
}

#[test]
fn no_impact_effect_at_bound_when_xi_is_zero() {
    let c = case(3, 1, (0.0, 0.0), 0.6, 4, 200);
    // A bound far above every realized rate keeps each simulated path at it.
    let mut data = c.sim.data.clone();
    data.bound.iter_mut().for_each(|b| *b = 50.0);
    for t in 0..data.t() {
        data.values[(t, 2)] = 50.0;
    }
    for row in [20, 80, 150] {
        let r = girf(&c.point, &c.rf, &data, &c.latent, &req(row, 2, -0.25)).unwrap();
        assert!(r.at_bound);
        for v in 0..3 {
            assert!(r.lower[0][v].abs() < 1e-10, "row {row}: {:?}", r.lower[0]);
        }
    }
}

#[test]
fn requests_are_deterministic() {
    let c = case(3, 2, (0.3, 0.2), 0.3, 5, 200);
    let a = girf(&c.point, &c.rf, &c.sim.data, &c.latent, &req(90, 8, -0.25)).unwrap();
    let b = girf(&c.point, &c.rf, &c.sim.data, &c.latent, &req(90, 8, -0.25)).unwrap();
    assert_eq!(a.lower, b.lower);
    assert_eq!(a.se, b.se);
}

/// Paired structural simulations from the stored state at `row`.
fn oracle(c: &Case, row: usize, h: usize, shock: f64, draws: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let s = &c.s;
    let (k, p) = (s.dims.k, s.dims.p);
    let bound = c.sim.data.bound[row];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = DMatrix::<f64>::zeros(h + 1, k);
    let mut sum2 = DMatrix::<f64>::zeros(h + 1, k);
    for _ in 0..draws {
        let eps: Vec<Vec<f64>> = (0..=h).map(|_| (0..k).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let mut paths = Vec::new();
        for shift in [0.0, shock] {
            let mut y: Vec<Vec<f64>> = (0..p).map(|j| (0..k).map(|i| c.sim.data.values[(row - p + j, i)]).collect()).collect();
            let mut ys: Vec<f64> = (0..p).map(|j| c.sim.shadow[row - p + j]).collect();
            let mut out = Vec::new();
            for (hh, e) in eps.iter().enumerate() {
                let n = y.len();
                let mut x = vec![1.0];
                for j in 1..=p {
                    x.extend_from_slice(&y[n - j]);
                }
                let xs: Vec<f64> = (1..=p).map(|j| ys[n - j]).collect();
                let (r, st) = structural_step(s, &x, &xs, e, bound, if hh == 0 { shift } else { 0.0 });
                out.push(r.clone());
                y.push(r);
                ys.push(st);
            }
            paths.push(out);
        }
        for hh in 0..=h {
            for v in 0..k {
                let d = paths[1][hh][v] - paths[0][hh][v];
                sum[(hh, v)] += d;
                sum2[(hh, v)] += d * d;
            }
        }
    }
    let n = draws as f64;
    let mean = &sum / n;
    let se = DMatrix::from_fn(h + 1, k, |i, j| ((sum2[(i, j)] / n - mean[(i, j)].powi(2)) / (n - 1.0)).max(0.0).sqrt());
    (mean, se)
}

#[test]
fn responses_match_structural_simulation() {
    let c = case(2, 1, (0.4, 0.3), 0.5, 6, 300);
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    use rand::Rng;
    let mut checked = 0;
    for _ in 0..10 {
        let row = rng.random_range(5..290);
        let r = girf(&c.point, &c.rf, &c.sim.data, &c.latent, &IRFRequest { draws: 2000, ..req(row, 8, -0.25) }).unwrap();
        let (m, se) = oracle(&c, row, 8, -0.25, 2000, row as u64);
        for h in [0, 4, 8] {
            for v in 0..2 {
                let tol = 3.0 * (r.se[h][v].powi(2) + se[(h, v)].powi(2)).sqrt() + 1e-10;
                assert!((r.lower[h][v] - m[(h, v)]).abs() <= tol, "row {row} h {h} v {v}: {} vs {}", r.lower[h][v], m[(h, v)]);
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 60);
}

#[test]
fn envelopes_and_sign_filters() {
    let c = case(3, 1, (0.5, 0.0), 0.4, 7, 150);
    let set = solve_identified_set(&c.rf, &GridSpec { lo: 0.0, hi: 1.0, step: 0.05 }).unwrap();
    assert!(!set.is_empty());
    let r = IRFRequest { draws: 100, ..req(60, 4, -0.25) };

    let mut single = set.clone();
    let first = single.points.iter().position(|p| p.accepted).unwrap();
    for (i, p) in single.points.iter_mut().enumerate() {
        p.accepted = i == first;
    }
    let env = girf_envelope(&single, &c.rf, &c.sim.data, &c.latent, &r).unwrap();
    let pt = girf(&single.points[first].point(), &c.rf, &c.sim.data, &c.latent, &r).unwrap();
    assert_eq!(env.lower, pt.lower);
    assert_eq!(env.upper, pt.lower);

    let full = girf_envelope(&set, &c.rf, &c.sim.data, &c.latent, &r).unwrap();
    for h in 0..=4 {
        for v in 0..3 {
            assert!(full.lower[h][v] <= env.lower[h][v] && full.upper[h][v] >= env.upper[h][v]);
        }
    }

    let free = SignRestrictionSpec { rules: vec![], ..SignRestrictionSpec::monetary(&[], &[]) };
    let same = apply_sign_restrictions(&set, &c.rf, &c.sim.data, &c.latent, &free).unwrap();
    assert_eq!(same.accepted_xis(), set.accepted_xis());

    let loose = SignRestrictionSpec { draws: 50, ..SignRestrictionSpec::monetary(&[0], &[]) };
    let tight = SignRestrictionSpec { draws: 50, ..SignRestrictionSpec::monetary(&[0, 1], &[2]) };
    let a = apply_sign_restrictions(&set, &c.rf, &c.sim.data, &c.latent, &loose).unwrap();
    let b = apply_sign_restrictions(&a, &c.rf, &c.sim.data, &c.latent, &tight).unwrap();
    let bt = apply_sign_restrictions(&set, &c.rf, &c.sim.data, &c.latent, &tight).unwrap();
    for ((p0, p1), p2) in set.points.iter().zip(&a.points).zip(&bt.points) {
        assert!(!p1.accepted || p0.accepted);
        assert!(!p2.accepted || p0.accepted);
    }
    for (q, r) in b.points.iter().zip(&a.points) {
        assert!(!q.accepted || r.accepted);
    }
    for p in bt.points.iter().filter(|p| p.violation.is_some()) {
        assert!(!p.accepted && p.violation.as_ref().unwrap().horizon <= 4);
    }
}

#[test]
fn timeline_is_flat_for_linear_data() {
    let c = case(2, 1, (0.5, 0.0), -1e12, 8, 60);
    let set = solve_identified_set(&c.rf, &GridSpec { lo: 0.0, hi: 1.0, step: 0.25 }).unwrap();
    let rows = irf_timeline(&set, &c.rf, &c.sim.data, &c.latent, &[0, 4, 8], &IRFRequest { draws: 20, cumulative: true, ..req(0, 8, -0.25) }).unwrap();
    assert_eq!(rows.len(), (60 - 1) * 3 * 2);
    for r in &rows {
        let same = rows.iter().find(|q| q.horizon == r.horizon && q.variable == r.variable).unwrap();
        assert!((r.lower - same.lower).abs() < 1e-10 && (r.upper - same.upper).abs() < 1e-10);
    }
}
