//! Hyperparameter selection: choosing the target rank from the classical
//! spectrum, and choosing the robustness exponent `alpha` on a grid.
//!
//! The rank rule keeps the smallest leading block of classical (`alpha` = 0)
//! components whose cumulative squared singular values exceed a `1 - epsilon`
//! share of the total squared Frobenius mass.
//!
//! The `alpha` score balances estimator variance against drift from the most
//! robust fit on the grid: a variance proxy `(n + p) * sigma2 * (1 +
//! alpha^2/(1 + 2 alpha))^{3/2}` plus the mean squared distance between each
//! candidate's scaled singular vectors and those of the `alpha` = 1 reference
//! fit. Smaller is better; ties resolve toward the smallest `alpha`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::svd::{rank_one_with_basis, rsvd_dpd, RSvdConfig, RSvdModel};

/// Outcome of the classical rank scan.
#[derive(Debug, Clone, Serialize)]
pub struct RankSelection {
    pub chosen_rank: usize,
    /// Classical singular values extracted during the scan (possibly fewer
    /// than `min(n, p)` when the scan stopped early).
    pub classical_lambdas: Vec<f64>,
    pub epsilon: f64,
}

/// Pick the smallest rank whose classical components carry more than a
/// `1 - epsilon` share of `||X||_F^2`.
pub fn select_rank(x: &DataMatrix, epsilon: f64) -> Result<RankSelection> {
    if !epsilon.is_finite() || epsilon <= 0.0 || epsilon >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "epsilon must lie strictly between 0 and 1, got {epsilon}"
        )));
    }
    let total = x.frobenius_norm().powi(2);
    let max_rank = x.n_rows().min(x.n_cols());
    // alpha = 0 makes each pass plain deflated power iteration; the tight
    // tolerance keeps the cumulative shares accurate.
    let config = RSvdConfig::new(0.0, 1).with_tol(1e-9).with_max_iter(300);
    let mut working = x.clone();
    let mut u_basis: Vec<Vec<f64>> = Vec::new();
    let mut v_basis: Vec<Vec<f64>> = Vec::new();
    let mut lambdas = Vec::new();
    let mut cumulative = 0.0;
    let mut chosen = max_rank;
    for k in 0..max_rank {
        let fit = match rank_one_with_basis(&working, &config, None, &u_basis, &v_basis) {
            Ok(fit) => fit,
            // The residual ran out of directions: everything is captured.
            Err(Error::RankDeficient { .. }) | Err(Error::DegenerateInput(_)) if k > 0 => {
                chosen = k;
                break;
            }
            Err(e) => return Err(e),
        };
        cumulative += fit.triple.lambda * fit.triple.lambda;
        lambdas.push(fit.triple.lambda);
        working.deflate_in_place(fit.triple.lambda, &fit.triple.u, &fit.triple.v);
        let exhausted = working.frobenius_norm() <= 1e-14 * total.sqrt();
        u_basis.push(fit.triple.u);
        v_basis.push(fit.triple.v);
        if cumulative > (1.0 - epsilon) * total || exhausted {
            chosen = k + 1;
            break;
        }
    }
    Ok(RankSelection {
        chosen_rank: chosen,
        classical_lambdas: lambdas,
        epsilon,
    })
}

/// Score a candidate fit against the `alpha` = 1 reference fit.
///
/// Both models must have the same rank and dimensions. Candidate components
/// are sign-aligned to the reference before the distance terms are taken, so
/// the score is invariant to the joint sign ambiguity of `(u, v)`.
pub fn alpha_criterion(candidate: &RSvdModel, reference: &RSvdModel, alpha: f64) -> Result<f64> {
    if !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let r = candidate.rank();
    if r == 0 || reference.rank() != r {
        return Err(Error::DimensionMismatch(format!(
            "cannot compare a rank-{r} candidate with a rank-{} reference",
            reference.rank()
        )));
    }
    let n = candidate.triples[0].u.len();
    let p = candidate.triples[0].v.len();
    if reference.triples[0].u.len() != n || reference.triples[0].v.len() != p {
        return Err(Error::DimensionMismatch(
            "candidate and reference describe different matrix shapes".into(),
        ));
    }
    let variance = (n + p) as f64
        * candidate.sigma2
        * (1.0 + alpha * alpha / (1.0 + 2.0 * alpha)).powf(1.5);
    let mut drift_u = 0.0;
    let mut drift_v = 0.0;
    for (cand, refr) in candidate.triples.iter().zip(&reference.triples) {
        let dot: f64 = cand.u.iter().zip(&refr.u).map(|(a, b)| a * b).sum();
        let sign = if dot < 0.0 { -1.0 } else { 1.0 };
        drift_u += cand
            .u
            .iter()
            .zip(&refr.u)
            .map(|(a, b)| {
                let d = sign * cand.lambda * a - refr.lambda * b;
                d * d
            })
            .sum::<f64>();
        drift_v += cand
            .v
            .iter()
            .zip(&refr.v)
            .map(|(a, b)| {
                let d = sign * cand.lambda * a - refr.lambda * b;
                d * d
            })
            .sum::<f64>();
    }
    Ok(variance + drift_u / r as f64 + drift_v / r as f64)
}

/// Outcome of the grid search over `alpha`.
#[derive(Debug, Clone, Serialize)]
pub struct AlphaSelection {
    pub grid: Vec<f64>,
    /// Criterion value per grid entry, aligned with `grid`. Entries whose
    /// fit failed or did not converge score infinity.
    pub scores: Vec<f64>,
    /// Whether every component of the fit at that grid entry converged.
    pub converged: Vec<bool>,
    pub chosen_alpha: f64,
}

/// Fit the decomposition at each grid value and pick the `alpha` with the
/// smallest criterion score.
///
/// The grid must contain 1.0, which anchors the reference fit. `template`
/// supplies the iteration controls (`tol`, `max_iter`, `sigma2_floor`); its
/// `alpha` and `rank` fields are ignored.
pub fn select_alpha(
    x: &DataMatrix,
    grid: &[f64],
    rank: usize,
    template: &RSvdConfig,
) -> Result<AlphaSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("alpha grid is empty".into()));
    }
    for &g in grid {
        if !g.is_finite() || !(0.0..=1.0).contains(&g) {
            return Err(Error::Domain(format!("grid value {g} lies outside [0, 1]")));
        }
    }
    if !grid.iter().any(|&g| (g - 1.0).abs() <= 1e-12) {
        return Err(Error::InvalidInput(
            "alpha grid must contain 1.0 (the reference fit)".into(),
        ));
    }
    let make_config = |alpha: f64| RSvdConfig {
        alpha,
        rank,
        ..template.clone()
    };
    let reference = rsvd_dpd(x, &make_config(1.0))?;
    let fits: Vec<Result<RSvdModel>> = grid
        .par_iter()
        .map(|&g| rsvd_dpd(x, &make_config(g)))
        .collect();
    let mut scores = Vec::with_capacity(grid.len());
    let mut converged = Vec::with_capacity(grid.len());
    for (i, fit) in fits.into_iter().enumerate() {
        match fit {
            Ok(model) => {
                let ok = !model.truncated && model.converged.iter().all(|&c| c);
                converged.push(ok);
                scores.push(if ok {
                    alpha_criterion(&model, &reference, grid[i])?
                } else {
                    f64::INFINITY
                });
            }
            Err(_) => {
                converged.push(false);
                scores.push(f64::INFINITY);
            }
        }
    }
    // Scan in ascending alpha so ties resolve toward the smallest value.
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let mut best = order[0];
    for &i in &order[1..] {
        if scores[i] < scores[best] {
            best = i;
        }
    }
    Ok(AlphaSelection {
        grid: grid.to_vec(),
        scores,
        converged,
        chosen_alpha: grid[best],
    })
}

/// JSON document produced by the grid-search command.
#[derive(Debug, Serialize)]
pub struct AlphaReport {
    pub grid: Vec<f64>,
    pub scores: Vec<f64>,
    pub converged: Vec<bool>,
    pub chosen_alpha: f64,
    pub chosen_rank: usize,
    /// Present when the rank came from the classical scan rather than the
    /// command line.
    pub epsilon: Option<f64>,
}
