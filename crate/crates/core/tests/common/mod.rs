//! Synthetic fatigue data shared by the integration tests. Inputs span the
//! usual laboratory ranges; fatigue life follows a power law in strain with
//! mild binder and voids effects plus seeded noise.
#![allow(dead_code)]

pub mod oracle;

use fatigue_core::dataset::Sample;
use rand::Rng as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const BINDER: (f64, f64) = (4.0, 6.7);
pub const VOIDS: (f64, f64) = (1.2, 12.8);
pub const STRAIN: (f64, f64) = (115.0, 1000.0);

/// Noise-free log10 fatigue life.
pub fn log_life(binder: f64, voids: f64, strain: f64) -> f64 {
    12.6 - 3.0 * strain.log10() + 0.35 * (binder - 5.3) - 0.08 * (voids - 6.0)
}

fn draw(rng: &mut ChaCha8Rng, noise: f64) -> (f64, f64, f64, f64) {
    let b = rng.random_range(BINDER.0..=BINDER.1);
    let v = rng.random_range(VOIDS.0..=VOIDS.1);
    let e = 10f64.powf(rng.random_range(STRAIN.0.log10()..=STRAIN.1.log10()));
    let eps = if noise > 0.0 { rng.random_range(-noise..=noise) } else { 0.0 };
    let nf = 10f64.powf(log_life(b, v, e) + eps);
    (b, v, e, nf)
}

/// `n` samples at modeling conditions (20 °C, 10 Hz).
pub fn synthetic(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (b, v, e, nf) = draw(&mut rng, 0.1);
            Sample::new(b, v, e, 20.0, 10.0, nf, format!("syn{}", i % 7))
        })
        .collect()
}

/// A raw corpus needing filtering: modeling-condition rows, rows at other
/// temperatures and frequencies, and gross fatigue-life outliers.
pub fn raw_corpus(seed: u64) -> Vec<Sample> {
    let mut out = synthetic(230, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for i in 0..12 {
        let (b, v, e, nf) = draw(&mut rng, 0.1);
        let (t, f) = if i % 2 == 0 { (25.0, 10.0) } else { (20.0, 5.0) };
        out.push(Sample::new(b, v, e, t, f, nf, "other"));
    }
    for (i, nf) in [150.0, 900.0, 4.5e6, 2.2e7].into_iter().enumerate() {
        let (b, v, e, _) = draw(&mut rng, 0.0);
        out.push(Sample::new(b, v, e, 21.1, 10.0, nf, format!("odd{i}")));
    }
    out
}

/// Targets exactly linear in the inputs: `1000 + 200 b - 50 v + 3 e`.
pub fn linear(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (b, v, e, _) = draw(&mut rng, 0.0);
            Sample::new(b, v, e, 20.0, 10.0, 1000.0 + 200.0 * b - 50.0 * v + 3.0 * e, "lin")
        })
        .collect()
}
