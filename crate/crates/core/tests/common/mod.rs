//! Shared fixtures for the integration suites: an independent SVD oracle and
//! seeded matrix generators.
//!
//! The oracle is a one-sided Jacobi iteration, deliberately unrelated to the
//! power-iteration-with-deflation path inside the crate, so agreement between
//! the two is evidence rather than the same code checked against itself.

// Each integration target compiles its own copy and uses its own subset.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rsvd_core::DataMatrix;

/// All singular values of `x`, descending, via one-sided Jacobi: rotate
/// column pairs until they are mutually orthogonal, then read the values off
/// as column norms. Converges to machine precision on anything small enough
/// for a test.
pub fn oracle_singular_values(x: &DataMatrix) -> Vec<f64> {
    let work = if x.n_rows() >= x.n_cols() { x.clone() } else { x.transposed() };
    let cols = work.n_cols();
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| work.column(j)).collect();

    for _sweep in 0..64 {
        let mut rotated = false;
        for i in 0..cols.saturating_sub(1) {
            for j in i + 1..cols {
                let (head, tail) = a.split_at_mut(j);
                let (ci, cj) = (&mut head[i], &mut tail[0]);
                let aii = dot(ci, ci);
                let ajj = dot(cj, cj);
                let aij = dot(ci, cj);
                if aij.abs() <= 1e-15 * (aii * ajj).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (ajj - aii) / (2.0 * aij);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (vi, vj) in ci.iter_mut().zip(cj.iter_mut()) {
                    let (oi, oj) = (*vi, *vj);
                    *vi = c * oi - s * oj;
                    *vj = s * oi + c * oj;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = a.iter().map(|col| dot(col, col).sqrt()).collect();
    sigma.sort_by(|x, y| y.total_cmp(x));
    sigma
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn test_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix of iid Uniform(-1, 1) entries.
pub fn uniform_matrix(seed: u64, n: usize, p: usize) -> DataMatrix {
    let mut rng = test_rng(seed);
    DataMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0)).unwrap()
}

/// `k` orthonormal columns of length `dim`: Gaussian draws, Gram-Schmidt.
pub fn random_orthonormal(rng: &mut ChaCha8Rng, dim: usize, k: usize) -> Vec<Vec<f64>> {
    assert!(k <= dim, "cannot draw {k} orthonormal vectors in dimension {dim}");
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for prev in &cols {
            let proj = dot(&v, prev);
            for (vi, pi) in v.iter_mut().zip(prev) {
                *vi -= proj * pi;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm < 1e-8 {
            continue; // essentially in the span already; redraw
        }
        v.iter_mut().for_each(|vi| *vi /= norm);
        cols.push(v);
    }
    cols
}

/// Planted `u v^T` signal with Gaussian noise: `lambda u v^T + noise_sd * E`.
pub fn planted_rank_one(seed: u64, n: usize, p: usize, lambda: f64, noise_sd: f64) -> DataMatrix {
    planted_low_rank(seed, n, p, &[lambda], noise_sd)
}

/// Planted low-rank signal with the given spectrum and orthonormal factors.
pub fn planted_low_rank(seed: u64, n: usize, p: usize, spectrum: &[f64], noise_sd: f64) -> DataMatrix {
    let mut rng = test_rng(seed);
    let u = random_orthonormal(&mut rng, n, spectrum.len());
    let v = random_orthonormal(&mut rng, p, spectrum.len());
    DataMatrix::from_fn(n, p, |i, j| {
        let signal: f64 = spectrum.iter().enumerate().map(|(k, s)| s * u[k][i] * v[k][j]).sum();
        signal + noise_sd * rng.sample::<f64, _>(StandardNormal)
    })
    .unwrap()
}

/// Largest entry of `V^T V - I` in absolute value, for a set of columns.
pub fn gram_deviation(vectors: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot(a, b) - target).abs());
        }
    }
    worst
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch in max_abs_diff");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
