#![allow(dead_code)]

use nkdsge::{DSGEParams, Shocks};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// A random calibration; may or may not be determinate.
pub fn random_params(rng: &mut ChaCha8Rng) -> DSGEParams {
    DSGEParams {
        sigma: rng.random_range(0.5..5.0),
        delta: rng.random_range(0.9..0.999),
        kappa: rng.random_range(0.01..1.0),
        rho_i: rng.random_range(0.0..0.95),
        r_pi: rng.random_range(1.05..3.0),
        r_y: rng.random_range(0.0..1.0),
        rho_a: rng.random_range(0.0..0.95),
        rho_b: rng.random_range(0.0..0.95),
        chi_a: rng.random_range(0.0..1.0),
        chi_b: rng.random_range(0.0..1.0),
        ..DSGEParams::calibration()
    }
}

pub fn draw_shocks(t: usize, sd: (f64, f64, f64), seed: u64) -> Shocks {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Shocks::zeros(t);
    let (ni, na, nb) = (Normal::new(0.0, sd.0).unwrap(), Normal::new(0.0, sd.1).unwrap(), Normal::new(0.0, sd.2).unwrap());
    for k in 0..t {
        s.i[k] = ni.sample(&mut rng);
        s.a[k] = na.sample(&mut rng);
        s.b[k] = nb.sample(&mut rng);
    }
    s
}

pub fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
