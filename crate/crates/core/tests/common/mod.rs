#![allow(dead_code)]

use infopolicy::kernel::{JointDistribution, StochasticKernel};
use infopolicy::simplex::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

/// Flat-Dirichlet draw, bounded away from the boundary by `floor`.
pub fn interior(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Distribution {
    let w: Vec<f64> = (0..n).map(|_| floor + rng.gen::<f64>()).collect();
    Distribution::normalize(w).unwrap()
}

pub fn kernel(rng: &mut ChaCha8Rng, rows: usize, cols: usize, floor: f64) -> StochasticKernel {
    let rows: Vec<Vec<f64>> = (0..rows)
        .map(|_| interior(rng, cols, floor).into_weights())
        .collect();
    StochasticKernel::from_rows(&rows).unwrap()
}

pub fn joint(rng: &mut ChaCha8Rng, rows: usize, cols: usize, floor: f64) -> JointDistribution {
    let flat = interior(rng, rows * cols, floor).into_weights();
    let rows: Vec<Vec<f64>> = flat.chunks(cols).map(<[f64]>::to_vec).collect();
    JointDistribution::from_rows(&rows).unwrap()
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn uniform_rows(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
) -> Vec<Vec<f64>> {
    (0..rows).map(|_| uniform_vec(rng, cols, lo, hi)).collect()
}

/// `I(M) = Σ m ln(m / (r c))` on a raw non-negative array, marginals by
/// summation. Independent of the library implementation.
pub fn raw_mutual_information(m: &[Vec<f64>]) -> f64 {
    let r: Vec<f64> = m.iter().map(|row| row.iter().sum()).collect();
    let c: Vec<f64> = (0..m[0].len())
        .map(|j| m.iter().map(|row| row[j]).sum())
        .collect();
    let mut total = 0.0;
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if *v > 0.0 {
                total += v * (v / (r[i] * c[j])).ln();
            }
        }
    }
    total
}

pub fn binary_entropy(p: f64) -> f64 {
    -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
}
