//! Density power divergence weights, objective, and fixed-point updates.
//!
//! Everything here works on the *scaled* factor pair `(a, b)`: the model for
//! one layer is `x_ij ~ a_i * b_j` with Gaussian noise of variance `sigma2`.
//! The weight attached to each cell is
//! `w_ij = exp(-alpha (x_ij - a_i b_j)^2 / (2 sigma2))`, so `alpha = 0` makes
//! every weight 1 and the updates collapse to ordinary least squares.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

/// Work size (cells touched) below which updates stay sequential. The
/// parallel and sequential paths use the same per-row reduction order, so
/// results are bitwise identical either way.
const PAR_THRESHOLD: usize = 1 << 15;

/// Denominator guard for the sigma^2 update, per matrix cell: if
/// `sum(w) - n p alpha/(1+alpha)^{3/2}` falls at or below `1e-8 * n * p`
/// the update is considered broken down and the previous value is kept.
const SIGMA2_DENOM_GUARD: f64 = 1e-8;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain(format!("sigma2 must be positive and finite, got {sigma2}")));
    }
    Ok(())
}

fn check_pair_dims(x: &DataMatrix, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != x.n_rows() || b.len() != x.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "factor lengths ({}, {}) do not match a {}x{} matrix",
            a.len(),
            b.len(),
            x.n_rows(),
            x.n_cols()
        )));
    }
    Ok(())
}

/// Weight of a single residual: `exp(-alpha r^2 / (2 sigma2))`, in `(0, 1]`.
pub fn dpd_weight(residual: f64, sigma2: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_sigma2(sigma2)?;
    Ok((-alpha * residual * residual / (2.0 * sigma2)).exp())
}

/// Mean density power divergence objective for the layer `(a, b, sigma2)`.
///
/// Per cell the loss is
/// `(2 pi)^{-alpha/2} sigma^{-alpha} [ (1+alpha)^{-1/2} - ((1+alpha)/alpha) w_ij ]`,
/// averaged over all cells. Undefined at `alpha = 0`; callers working in the
/// least-squares regime should track the squared-residual sum instead.
pub fn mdpde_objective(x: &DataMatrix, a: &[f64], b: &[f64], sigma2: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Err(Error::Domain(
            "the divergence objective is undefined at alpha = 0; use the squared-residual sum".into(),
        ));
    }
    check_sigma2(sigma2)?;
    check_pair_dims(x, a, b)?;

    let coef = alpha / (2.0 * sigma2);
    let weight_sums = map_rows(x, |i| {
        let ai = a[i];
        let mut sum = 0.0;
        for (&xij, &bj) in x.row(i).iter().zip(b) {
            let r = xij - ai * bj;
            sum += (-coef * r * r).exp();
        }
        sum
    });
    let total: f64 = weight_sums.iter().sum();
    let cells = (x.n_rows() * x.n_cols()) as f64;
    let scale = (2.0 * std::f64::consts::PI).powf(-alpha / 2.0) * sigma2.powf(-alpha / 2.0);
    Ok(scale * ((1.0 + alpha).powf(-0.5) - (1.0 + alpha) / alpha * total / cells))
}

/// Result of a left/right factor update.
#[derive(Debug, Clone)]
pub struct SlopeUpdate {
    /// Updated factor values, same length as the input factor.
    pub values: Vec<f64>,
    /// Number of entries whose weighted denominator vanished; those entries
    /// keep their previous value.
    pub degenerate: usize,
}

/// One fixed-point sweep over the left factor:
/// `a_i <- sum_j b_j x_ij w_ij / sum_j b_j^2 w_ij`, with weights computed
/// from the incoming `(a, b, sigma2)`.
pub fn update_left(x: &DataMatrix, a: &[f64], b: &[f64], sigma2: f64, alpha: f64) -> Result<SlopeUpdate> {
    check_alpha(alpha)?;
    check_sigma2(sigma2)?;
    check_pair_dims(x, a, b)?;

    let coef = alpha / (2.0 * sigma2);
    let updated = map_rows(x, |i| {
        let ai = a[i];
        let mut num = 0.0;
        let mut den = 0.0;
        for (&xij, &bj) in x.row(i).iter().zip(b) {
            let r = xij - ai * bj;
            let w = (-coef * r * r).exp();
            num += bj * xij * w;
            den += bj * bj * w;
        }
        if den <= f64::MIN_POSITIVE {
            (ai, 1usize)
        } else {
            (num / den, 0usize)
        }
    });
    let degenerate = updated.iter().map(|&(_, d)| d).sum();
    Ok(SlopeUpdate { values: updated.into_iter().map(|(v, _)| v).collect(), degenerate })
}

/// One fixed-point sweep over the right factor:
/// `b_j <- sum_i a_i x_ij w_ij / sum_i a_i^2 w_ij`. Mirror image of
/// [`update_left`]: `update_right(X, a, b, ..)` equals
/// `update_left(X^T, b, a, ..)` bit for bit.
pub fn update_right(x: &DataMatrix, a: &[f64], b: &[f64], sigma2: f64, alpha: f64) -> Result<SlopeUpdate> {
    check_alpha(alpha)?;
    check_sigma2(sigma2)?;
    check_pair_dims(x, a, b)?;

    let coef = alpha / (2.0 * sigma2);
    let n = x.n_rows();
    let p = x.n_cols();
    let run = |j: usize| {
        let bj = b[j];
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let xij = x.get(i, j);
            let ai = a[i];
            let r = xij - ai * bj;
            let w = (-coef * r * r).exp();
            num += ai * xij * w;
            den += ai * ai * w;
        }
        if den <= f64::MIN_POSITIVE {
            (bj, 1usize)
        } else {
            (num / den, 0usize)
        }
    };
    let updated: Vec<(f64, usize)> = if n * p >= PAR_THRESHOLD {
        (0..p).into_par_iter().map(run).collect()
    } else {
        (0..p).map(run).collect()
    };
    let degenerate = updated.iter().map(|&(_, d)| d).sum();
    Ok(SlopeUpdate { values: updated.into_iter().map(|(v, _)| v).collect(), degenerate })
}

/// How a sigma^2 update resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sigma2Outcome {
    /// Plain fixed-point value.
    Updated,
    /// Fixed-point value fell below the floor; the floor is returned.
    Floored,
    /// Weighted denominator (nearly) vanished; the previous value is kept.
    DenominatorGuard,
}

/// Result of a sigma^2 update.
#[derive(Debug, Clone, Copy)]
pub struct Sigma2Update {
    pub value: f64,
    pub outcome: Sigma2Outcome,
}

/// One fixed-point sweep over the noise scale:
/// `sigma2 <- sum_ij e_ij^2 w_ij / (sum_ij w_ij - n p alpha / (1+alpha)^{3/2})`,
/// with residuals and weights from `(a, b, sigma2_prev)`.
///
/// The subtracted term unbiases the estimating equation: differentiating the
/// mean objective in `sigma2` leaves one `alpha/(1+alpha)^{3/2}` per cell, so
/// the total correction scales with the cell count. (Dropping that factor
/// reduces the update to a plain weighted mean squared residual, which
/// under-estimates the scale by up to `1 - alpha` and spirals every fit
/// toward zero.) At a Gaussian noise scale `s` the map has `s^2` as an
/// attracting fixed point. The correction can still push the denominator to
/// zero or below when nearly all weights vanish, in which case the previous
/// value is kept and flagged.
pub fn update_sigma2(
    x: &DataMatrix,
    a: &[f64],
    b: &[f64],
    sigma2_prev: f64,
    alpha: f64,
    sigma2_floor: f64,
) -> Result<Sigma2Update> {
    check_alpha(alpha)?;
    check_sigma2(sigma2_prev)?;
    check_pair_dims(x, a, b)?;
    if !(sigma2_floor > 0.0 && sigma2_floor.is_finite()) {
        return Err(Error::Domain(format!("sigma2 floor must be positive, got {sigma2_floor}")));
    }

    let coef = alpha / (2.0 * sigma2_prev);
    let partials = map_rows(x, |i| {
        let ai = a[i];
        let mut num = 0.0;
        let mut wsum = 0.0;
        for (&xij, &bj) in x.row(i).iter().zip(b) {
            let r = xij - ai * bj;
            let w = (-coef * r * r).exp();
            num += r * r * w;
            wsum += w;
        }
        (num, wsum)
    });
    let num: f64 = partials.iter().map(|&(n, _)| n).sum();
    let wsum: f64 = partials.iter().map(|&(_, w)| w).sum();

    let cells = (x.n_rows() * x.n_cols()) as f64;
    let den = wsum - cells * alpha / (1.0 + alpha).powf(1.5);
    if den <= SIGMA2_DENOM_GUARD * cells {
        return Ok(Sigma2Update { value: sigma2_prev, outcome: Sigma2Outcome::DenominatorGuard });
    }
    let value = num / den;
    if value < sigma2_floor {
        Ok(Sigma2Update { value: sigma2_floor, outcome: Sigma2Outcome::Floored })
    } else {
        Ok(Sigma2Update { value, outcome: Sigma2Outcome::Updated })
    }
}

/// Map a closure over row indices, in parallel above the work threshold.
/// Results come back in row order regardless of the execution path.
fn map_rows<T: Send>(x: &DataMatrix, f: impl Fn(usize) -> T + Send + Sync) -> Vec<T> {
    let n = x.n_rows();
    if n * x.n_cols() >= PAR_THRESHOLD {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn weight_matches_closed_form() {
        // exp(-0.5 * 2^2 / (2*1)) = exp(-1)
        let w = dpd_weight(2.0, 1.0, 0.5).unwrap();
        assert!(close(w, (-1.0f64).exp(), 1e-15));
        assert!(close(w, 0.36787944117144233, 1e-15));
    }

    #[test]
    fn weight_limits_and_domain() {
        assert_eq!(dpd_weight(123.4, 2.0, 0.0).unwrap(), 1.0);
        assert_eq!(dpd_weight(0.0, 3.0, 0.7).unwrap(), 1.0);
        let w = dpd_weight(5.0, 0.5, 1.0).unwrap();
        assert!(w > 0.0 && w < 1.0);
        assert!(matches!(dpd_weight(1.0, 0.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(dpd_weight(1.0, -1.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(dpd_weight(1.0, 1.0, 1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn weight_decreases_in_residual_magnitude() {
        let mut prev = dpd_weight(0.0, 1.0, 0.5).unwrap();
        for k in 1..20 {
            let w = dpd_weight(k as f64 * 0.5, 1.0, 0.5).unwrap();
            assert!(w < prev);
            prev = w;
        }
    }

    #[test]
    fn objective_at_zero_residual() {
        // all residuals zero, alpha = 1, sigma2 = 1:
        // (2 pi)^{-1/2} (2^{-1/2} - 2) computed by direct evaluation
        let x = DataMatrix::from_fn(4, 3, |i, j| ((i + 1) * (j + 2)) as f64).unwrap();
        let a: Vec<f64> = (1..=4).map(|i| i as f64).collect();
        let b: Vec<f64> = (2..=4).map(|j| j as f64).collect();
        let h = mdpde_objective(&x, &a, &b, 1.0, 1.0).unwrap();
        assert!(close(h, -0.5157897690289873, 1e-12));
    }

    #[test]
    fn objective_matches_scalar_oracle() {
        // independent cell-by-cell evaluation of the loss
        let x = DataMatrix::from_rows(&[vec![2.0, 0.5], vec![-1.0, 3.0], vec![0.0, 1.0]]).unwrap();
        let a = [1.0, -0.5, 2.0];
        let b = [0.7, 1.3];
        let (sigma2, alpha): (f64, f64) = (0.8, 0.4);
        let mut sum = 0.0;
        for i in 0..3 {
            for j in 0..2 {
                let e = x.get(i, j) - a[i] * b[j];
                let v = (2.0 * std::f64::consts::PI).powf(-alpha / 2.0)
                    * sigma2.sqrt().powf(-alpha)
                    * ((1.0 + alpha).powf(-0.5)
                        - (1.0 + alpha) / alpha * (-alpha * e * e / (2.0 * sigma2)).exp());
                sum += v;
            }
        }
        let oracle = sum / 6.0;
        let h = mdpde_objective(&x, &a, &b, sigma2, alpha).unwrap();
        assert!(close(h, oracle, 1e-14), "{h} vs {oracle}");
    }

    #[test]
    fn objective_tends_to_weightless_limit() {
        // residuals far beyond sigma: the exponential term dies and the
        // objective approaches (2 pi)^{-a/2} sigma^{-a} (1+a)^{-1/2}
        let x = DataMatrix::from_fn(3, 3, |_, _| 1e6).unwrap();
        let a = [1e-9, 1e-9, 1e-9];
        let b = [1e-9, 1e-9, 1e-9];
        let (sigma2, alpha) = (2.0, 0.5);
        let h = mdpde_objective(&x, &a, &b, sigma2, alpha).unwrap();
        let limit = (2.0 * std::f64::consts::PI).powf(-0.25) * sigma2.powf(-0.25) * 1.5f64.powf(-0.5);
        assert!(close(h, limit, 1e-9));
        assert!(close(limit, 0.43366253529203874, 1e-12));
    }

    #[test]
    fn objective_rejects_alpha_zero_and_bad_dims() {
        let x = DataMatrix::from_fn(2, 2, |_, _| 1.0).unwrap();
        assert!(matches!(
            mdpde_objective(&x, &[1.0, 1.0], &[1.0, 1.0], 1.0, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            mdpde_objective(&x, &[1.0], &[1.0, 1.0], 1.0, 0.5),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn update_left_matches_scalar_oracle() {
        let x = DataMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0], vec![1.0, 1.0]]).unwrap();
        let a = [1.0, 1.0, 1.0];
        let b = [1.0, 1.0];
        let (sigma2, alpha) = (1.0, 0.3);
        // independent per-row loop
        let mut expect = Vec::new();
        for i in 0..3 {
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..2 {
                let e: f64 = x.get(i, j) - a[i] * b[j];
                let w = (-alpha * e * e / (2.0 * sigma2)).exp();
                num += b[j] * x.get(i, j) * w;
                den += b[j] * b[j] * w;
            }
            expect.push(num / den);
        }
        let got = update_left(&x, &a, &b, sigma2, alpha).unwrap();
        assert_eq!(got.degenerate, 0);
        for (g, e) in got.values.iter().zip(&expect) {
            assert!(close(*g, *e, 1e-12), "{g} vs {e}");
        }
    }

    #[test]
    fn update_left_symmetric_input_is_exact() {
        // x_ij = 1, b_j identical: the weighted ratio collapses to
        // sum(b)/sum(b^2) no matter how a is scaled
        let x = DataMatrix::from_fn(10, 10, |_, _| 1.0).unwrap();
        let b = vec![1.0 / 10f64.sqrt(); 10];
        let expect = 10f64.sqrt();
        for scale in [0.1, 1.0, 7.0] {
            let a = vec![scale / 10f64.sqrt(); 10];
            let got = update_left(&x, &a, &b, 1.0, 0.6).unwrap();
            assert_eq!(got.degenerate, 0);
            for v in got.values {
                assert!(close(v, expect, 1e-12));
            }
        }
    }

    #[test]
    fn update_left_alpha_zero_is_least_squares() {
        let x = DataMatrix::from_rows(&[vec![1.0, 4.0, -2.0], vec![0.5, 2.0, 8.0]]).unwrap();
        let a = [3.0, -1.0]; // arbitrary; weights are 1 regardless
        let b = [1.0, -2.0, 0.5];
        let got = update_left(&x, &a, &b, 5.0, 0.0).unwrap();
        for (i, v) in got.values.iter().enumerate() {
            let num: f64 = (0..3).map(|j| b[j] * x.get(i, j)).sum();
            let den: f64 = b.iter().map(|bj| bj * bj).sum();
            assert!(close(*v, num / den, 1e-15));
        }
    }

    #[test]
    fn update_left_zero_b_keeps_a_and_flags() {
        let x = DataMatrix::from_fn(3, 2, |i, j| (i + j) as f64).unwrap();
        let a = [1.0, 2.0, 3.0];
        let got = update_left(&x, &a, &[0.0, 0.0], 1.0, 0.5).unwrap();
        assert_eq!(got.degenerate, 3);
        assert_eq!(got.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn update_right_is_transpose_of_update_left() {
        let x = DataMatrix::from_fn(5, 4, |i, j| ((i * 7 + j * 3) % 11) as f64 - 4.0).unwrap();
        let a: Vec<f64> = (0..5).map(|i| 0.3 * i as f64 + 0.2).collect();
        let b: Vec<f64> = (0..4).map(|j| 1.1 - 0.4 * j as f64).collect();
        let right = update_right(&x, &a, &b, 0.7, 0.45).unwrap();
        let left_t = update_left(&x.transposed(), &b, &a, 0.7, 0.45).unwrap();
        assert_eq!(right.values, left_t.values);
        assert_eq!(right.degenerate, left_t.degenerate);
    }

    #[test]
    fn update_sigma2_matches_scalar_oracle() {
        let x = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let a = [1.0, 1.0];
        let b = [1.0, 1.0];
        let (prev, alpha) = (1.0, 0.5);
        let (mut num, mut wsum) = (0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                let e: f64 = x.get(i, j) - 1.0;
                let w = (-alpha * e * e / (2.0 * prev)).exp();
                num += e * e * w;
                wsum += w;
            }
        }
        let oracle = num / (wsum - 4.0 * 0.5 / 1.5f64.powf(1.5));
        let got = update_sigma2(&x, &a, &b, prev, alpha, 1e-12).unwrap();
        assert_eq!(got.outcome, Sigma2Outcome::Updated);
        assert!(close(got.value, oracle, 1e-12), "{} vs {oracle}", got.value);
    }

    #[test]
    fn update_sigma2_alpha_zero_is_mean_square() {
        let x = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 5.0]]).unwrap();
        let a = [1.0, 2.0];
        let b = [1.0, 2.0];
        let msr: f64 = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| {
                let e = x.get(i, j) - a[i] * b[j];
                e * e
            })
            .sum::<f64>()
            / 4.0;
        let got = update_sigma2(&x, &a, &b, 1.0, 0.0, 1e-12).unwrap();
        assert!(close(got.value, msr, 1e-15));
    }

    #[test]
    fn update_sigma2_zero_residuals_floors() {
        let x = DataMatrix::from_fn(3, 3, |i, j| ((i + 1) * (j + 1)) as f64).unwrap();
        let a = [1.0, 2.0, 3.0];
        let b = [1.0, 2.0, 3.0];
        let got = update_sigma2(&x, &a, &b, 1.0, 0.5, 1e-12).unwrap();
        assert_eq!(got.outcome, Sigma2Outcome::Floored);
        assert_eq!(got.value, 1e-12);
    }

    #[test]
    fn update_sigma2_guard_keeps_previous() {
        // residuals enormous relative to sigma2: all weights underflow and
        // the unbiasing constant drives the denominator negative
        let x = DataMatrix::from_fn(2, 2, |_, _| 1e8).unwrap();
        let a = [1e-6, 1e-6];
        let b = [1e-6, 1e-6];
        let got = update_sigma2(&x, &a, &b, 0.5, 0.8, 1e-12).unwrap();
        assert_eq!(got.outcome, Sigma2Outcome::DenominatorGuard);
        assert_eq!(got.value, 0.5);
    }
}
