#![allow(dead_code)]

use lwa_sbl::scalar::CMatrix;
use nalgebra::DMatrix;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn complex_gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

pub fn positive(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Largest entrywise modulus of `a - b` over the largest modulus of `b`.
pub fn rel_diff(a: &CMatrix<f64>, b: &CMatrix<f64>) -> f64 {
    let num = (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let den = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
    num / den
}
