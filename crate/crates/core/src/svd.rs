//! Rank-one robust fits and the sequential multi-component decomposition.
//!
//! A component is fitted by alternating the weighted slope updates from
//! [`crate::dpd`] on the scaled pair `(a, b) = (lambda * u, v)`: the left
//! sweep re-estimates `lambda * u` against the unit right vector, the right
//! sweep re-estimates `v` against the freshly scaled left vector, then the
//! noise scale is refreshed. Later components run on the deflated residual
//! matrix with both candidate vectors re-orthogonalized against the already
//! extracted ones inside every iteration.

use crate::dpd::{mdpde_objective, update_left, update_right, update_sigma2};
use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

const POWER_MAX_ITER: usize = 50;
const POWER_TOL: f64 = 1e-9;

/// A power step whose image norm falls below this fraction of the matrix
/// norm means the candidate direction is (numerically) in the null space;
/// the next starting candidate is tried instead. Safe because the dominant
/// singular value is never below `|X|_F / sqrt(min(n, p))`.
const POWER_STALL_REL: f64 = 1e-12;

/// Residual directions whose norm falls below this fraction of the input
/// vector norm are treated as lying in the span of the extracted components.
const SPAN_TOL: f64 = 1e-12;

/// A residual matrix whose Frobenius norm falls below this fraction of the
/// original input is considered exhausted: further components would only fit
/// rounding noise, so the decomposition truncates instead.
const RESIDUAL_EXHAUSTED: f64 = 1e-14;

/// One singular component: `lambda >= 0`, `u` and `v` unit vectors.
#[derive(Debug, Clone)]
pub struct SvdTriple {
    pub lambda: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Decomposition settings.
#[derive(Debug, Clone)]
pub struct RSvdConfig {
    /// Robustness parameter in `[0, 1]`; `0` reproduces the classical SVD.
    pub alpha: f64,
    /// Number of components to extract.
    pub rank: usize,
    /// Convergence tolerance on
    /// `max(rel dlambda, |du|_inf, |dv|_inf, rel dsigma2)`.
    pub tol: f64,
    /// Iteration cap per component.
    pub max_iter: usize,
    /// Lower bound kept under the noise-scale estimate.
    pub sigma2_floor: f64,
}

impl RSvdConfig {
    pub fn new(alpha: f64, rank: usize) -> Self {
        Self { alpha, rank, tol: 1e-6, max_iter: 100, sigma2_floor: 1e-12 }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_sigma2_floor(mut self, floor: f64) -> Self {
        self.sigma2_floor = floor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Domain(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.rank == 0 {
            return Err(Error::Domain("rank must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Domain(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Domain("max_iter must be at least 1".into()));
        }
        if !(self.sigma2_floor > 0.0 && self.sigma2_floor.is_finite()) {
            return Err(Error::Domain(format!(
                "sigma2_floor must be positive, got {}",
                self.sigma2_floor
            )));
        }
        Ok(())
    }
}

/// Per-iteration log entry of a rank-one fit.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub lambda: f64,
    pub delta_lambda_rel: f64,
    pub delta_u: f64,
    pub delta_v: f64,
    pub sigma2: f64,
    /// Divergence objective after the sweep; absent in the `alpha = 0`
    /// least-squares regime where it is undefined.
    pub objective: Option<f64>,
}

/// Converged (or iteration-capped) rank-one fit.
#[derive(Debug, Clone)]
pub struct RankOneFit {
    pub triple: SvdTriple,
    pub sigma2: f64,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
}

impl RankOneFit {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Full decomposition: components in extraction order (dominant first).
#[derive(Debug, Clone)]
pub struct RSvdModel {
    pub triples: Vec<SvdTriple>,
    /// Noise-scale estimate from the last extracted component.
    pub sigma2: f64,
    pub alpha: f64,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
    /// True when fewer components than requested could be extracted.
    pub truncated: bool,
}

impl RSvdModel {
    pub fn rank(&self) -> usize {
        self.triples.len()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.triples.iter().map(|t| t.lambda).collect()
    }

    /// Low-rank reconstruction `sum_k lambda_k u_k v_k^T`.
    pub fn reconstruct(&self) -> Result<DataMatrix> {
        let (n, p) = (self.triples[0].u.len(), self.triples[0].v.len());
        let mut values = vec![0.0; n * p];
        for t in &self.triples {
            for i in 0..n {
                let scale = t.lambda * t.u[i];
                let row = &mut values[i * p..(i + 1) * p];
                for (x, &vj) in row.iter_mut().zip(&t.v) {
                    *x += scale * vj;
                }
            }
        }
        DataMatrix::from_vec(n, p, values)
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Remove the projection of `vec` onto an orthonormal basis (one modified
/// Gram-Schmidt pass). Errors when the residual direction vanishes, i.e. the
/// vector lies in the span of the basis.
pub fn orthogonalize_against(vec: &[f64], basis: &[Vec<f64>]) -> Result<Vec<f64>> {
    let input_norm = norm2(vec);
    if input_norm == 0.0 {
        return Err(Error::DegenerateInput("cannot orthogonalize a zero vector".into()));
    }
    let mut r = vec.to_vec();
    for q in basis {
        debug_assert_eq!(q.len(), vec.len());
        let c = dot(&r, q);
        for (ri, qi) in r.iter_mut().zip(q) {
            *ri -= c * qi;
        }
    }
    if norm2(&r) <= SPAN_TOL * input_norm {
        return Err(Error::RankDeficient { achieved: basis.len() });
    }
    Ok(r)
}

/// Flip signs so the largest-magnitude element of `u` is nonnegative
/// (lowest index wins ties); `v` flips along with `u` to keep
/// `lambda u v^T` unchanged.
fn enforce_sign(u: &mut [f64], v: &mut [f64]) {
    let mut best = 0;
    for i in 1..u.len() {
        if u[i].abs() > u[best].abs() {
            best = i;
        }
    }
    if u[best] < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Classical first singular triple by power iteration on `X^T X`.
///
/// Starts from the column-norm direction; if that stalls (e.g. it is
/// orthogonal to the dominant right vector) the column-sum direction and the
/// canonical basis vectors are tried in turn.
fn power_init(x: &DataMatrix) -> Result<SvdTriple> {
    let (n, p) = (x.n_rows(), x.n_cols());
    if x.frobenius_norm() == 0.0 {
        return Err(Error::DegenerateInput("cannot decompose an all-zero matrix".into()));
    }

    let col_norms: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| x.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    let col_sums: Vec<f64> = (0..p).map(|j| (0..n).map(|i| x.get(i, j)).sum()).collect();
    let mut candidates: Vec<Vec<f64>> = vec![col_norms, col_sums];
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        candidates.push(e);
    }

    let stall = POWER_STALL_REL * x.frobenius_norm();
    'candidate: for start in candidates {
        let norm = norm2(&start);
        if norm == 0.0 {
            continue;
        }
        let mut v: Vec<f64> = start.iter().map(|s| s / norm).collect();
        let mut u = vec![0.0; n];
        let mut lambda = 0.0;
        for _ in 0..POWER_MAX_ITER {
            // u <- X v (normalized)
            for i in 0..n {
                u[i] = dot(x.row(i), &v);
            }
            let nu = norm2(&u);
            if nu <= stall {
                continue 'candidate;
            }
            u.iter_mut().for_each(|x| *x /= nu);
            // v <- X^T u (normalized); the norm is the singular value estimate
            let mut vn = vec![0.0; p];
            for i in 0..n {
                let ui = u[i];
                for (vj, &xij) in vn.iter_mut().zip(x.row(i)) {
                    *vj += ui * xij;
                }
            }
            lambda = norm2(&vn);
            if lambda <= stall {
                continue 'candidate;
            }
            vn.iter_mut().for_each(|x| *x /= lambda);
            let moved = inf_diff(&vn, &v);
            v = vn;
            if moved < POWER_TOL {
                break;
            }
        }
        return Ok(SvdTriple { lambda, u, v });
    }
    Err(Error::DegenerateInput("power iteration found no nonzero direction".into()))
}

fn mean_sq_residual(x: &DataMatrix, lambda: f64, u: &[f64], v: &[f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..x.n_rows() {
        let scale = lambda * u[i];
        for (&xij, &vj) in x.row(i).iter().zip(v) {
            let e = xij - scale * vj;
            sum += e * e;
        }
    }
    sum / (x.n_rows() * x.n_cols()) as f64
}

fn validate_init(x: &DataMatrix, init: &SvdTriple) -> Result<()> {
    if init.u.len() != x.n_rows() || init.v.len() != x.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "init vectors ({}, {}) do not match a {}x{} matrix",
            init.u.len(),
            init.v.len(),
            x.n_rows(),
            x.n_cols()
        )));
    }
    if !(init.lambda.is_finite() && init.lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "init lambda must be finite and nonnegative, got {}",
            init.lambda
        )));
    }
    for (name, vec) in [("u", &init.u), ("v", &init.v)] {
        if (norm2(vec) - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("init {name} must have unit norm")));
        }
    }
    Ok(())
}

fn check_decomposable(x: &DataMatrix) -> Result<()> {
    if x.n_rows() < 2 || x.n_cols() < 2 {
        return Err(Error::InvalidInput(format!(
            "decomposition needs at least a 2x2 matrix, got {}x{}",
            x.n_rows(),
            x.n_cols()
        )));
    }
    if x.frobenius_norm() == 0.0 {
        return Err(Error::DegenerateInput("cannot decompose an all-zero matrix".into()));
    }
    Ok(())
}

/// Fit a single robust rank-one layer of `x`.
///
/// `init` may supply a starting triple (unit vectors); otherwise the
/// classical power-iteration triple is used. The returned vectors follow the
/// sign convention of [`enforce_sign`]; the trace records one entry per
/// completed sweep.
pub fn rank_one_dpd(x: &DataMatrix, config: &RSvdConfig, init: Option<SvdTriple>) -> Result<RankOneFit> {
    config.validate()?;
    check_decomposable(x)?;
    rank_one_with_basis(x, config, init, &[], &[])
}

pub(crate) fn rank_one_with_basis(
    x: &DataMatrix,
    config: &RSvdConfig,
    init: Option<SvdTriple>,
    u_basis: &[Vec<f64>],
    v_basis: &[Vec<f64>],
) -> Result<RankOneFit> {
    if let Some(t) = init {
        validate_init(x, &t)?;
        return run_alternating(x, config, t, u_basis, v_basis);
    }
    let classical = power_init(x).and_then(|t| run_alternating(x, config, t, u_basis, v_basis));
    if config.alpha == 0.0 {
        return classical;
    }

    // With alpha > 0 the weighted iteration can carry a second fixed point:
    // started from the classical triple on grossly contaminated data it may
    // settle on the outlier itself, because the outlier dominates the
    // classical direction and then monopolizes the weights. A flat start
    // approaches from the bulk side instead, so the two runs bracket both
    // basins, and whichever end point reaches the lower divergence value is
    // the estimate (the classical run wins ties). On data with several
    // comparably-sized components the runs occasionally settle on different
    // components; that only permutes the extraction order, which the final
    // sort puts back.
    let flat = flat_init(x, u_basis, v_basis)
        .and_then(|t| run_alternating(x, config, t, u_basis, v_basis));
    match (classical, flat) {
        (Ok(c), Ok(f)) => {
            let co = objective_at(x, config, &c, c.sigma2)?;
            let fo = objective_at(x, config, &f, f.sigma2)?;
            Ok(if fo < co { f } else { c })
        }
        (Ok(c), Err(_)) => Ok(c),
        (Err(_), Ok(f)) => Ok(f),
        (Err(c), Err(_)) => Err(c),
    }
}

/// Uniform-direction starting triple, kept clear of the extracted span.
fn flat_init(x: &DataMatrix, u_basis: &[Vec<f64>], v_basis: &[Vec<f64>]) -> Result<SvdTriple> {
    let (n, p) = (x.n_rows(), x.n_cols());
    let mut u = vec![(n as f64).sqrt().recip(); n];
    let mut v = vec![(p as f64).sqrt().recip(); p];
    if !u_basis.is_empty() {
        u = orthogonalize_against(&u, u_basis)?;
        let nu = norm2(&u);
        u.iter_mut().for_each(|ui| *ui /= nu);
    }
    if !v_basis.is_empty() {
        v = orthogonalize_against(&v, v_basis)?;
        let nv = norm2(&v);
        v.iter_mut().for_each(|vi| *vi /= nv);
    }
    let lambda = u.iter().enumerate().map(|(i, ui)| ui * dot(x.row(i), &v)).sum::<f64>().abs();
    Ok(SvdTriple { lambda, u, v })
}

fn objective_at(x: &DataMatrix, config: &RSvdConfig, fit: &RankOneFit, sigma2: f64) -> Result<f64> {
    let scaled: Vec<f64> = fit.triple.u.iter().map(|ui| fit.triple.lambda * ui).collect();
    mdpde_objective(x, &scaled, &fit.triple.v, sigma2, config.alpha)
}

fn run_alternating(
    x: &DataMatrix,
    config: &RSvdConfig,
    init: SvdTriple,
    u_basis: &[Vec<f64>],
    v_basis: &[Vec<f64>],
) -> Result<RankOneFit> {
    let mut lambda = init.lambda;
    let mut u = init.u;
    let mut v = init.v;
    let mut sigma2 = mean_sq_residual(x, lambda, &u, &v).max(config.sigma2_floor);
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..config.max_iter {
        let lambda_old = lambda;
        let u_old = u.clone();
        let v_old = v.clone();
        let sigma2_old = sigma2;

        // Left sweep on the scaled pair (lambda*u, v); the new vector
        // absorbs the scale because the regressor v has unit norm.
        let a_scaled: Vec<f64> = u.iter().map(|ui| lambda * ui).collect();
        let mut a_new = update_left(x, &a_scaled, &v, sigma2, config.alpha)?.values;
        if !u_basis.is_empty() {
            a_new = orthogonalize_against(&a_new, u_basis)?;
        }
        let na = norm2(&a_new);
        if na == 0.0 || !na.is_finite() {
            return Err(Error::DegenerateInput("left update collapsed to zero".into()));
        }
        lambda = na;
        u = a_new.iter().map(|ai| ai / na).collect();

        // Right sweep against the freshly scaled left vector; the result is
        // the (roughly unit) direction of v, so lambda picks up its norm.
        let a_scaled: Vec<f64> = u.iter().map(|ui| lambda * ui).collect();
        let mut b_new = update_right(x, &a_scaled, &v, sigma2, config.alpha)?.values;
        if !v_basis.is_empty() {
            b_new = orthogonalize_against(&b_new, v_basis)?;
        }
        let nb = norm2(&b_new);
        if nb == 0.0 || !nb.is_finite() {
            return Err(Error::DegenerateInput("right update collapsed to zero".into()));
        }
        lambda *= nb;
        v = b_new.iter().map(|bj| bj / nb).collect();

        // Noise-scale sweep from the updated layer.
        let a_scaled: Vec<f64> = u.iter().map(|ui| lambda * ui).collect();
        sigma2 = update_sigma2(x, &a_scaled, &v, sigma2, config.alpha, config.sigma2_floor)?.value;

        let objective = if config.alpha > 0.0 {
            Some(mdpde_objective(x, &a_scaled, &v, sigma2, config.alpha)?)
        } else {
            None
        };
        let delta_lambda_rel = (lambda - lambda_old).abs() / lambda_old.max(f64::MIN_POSITIVE);
        let delta_u = inf_diff(&u, &u_old);
        let delta_v = inf_diff(&v, &v_old);
        trace.push(IterationRecord { lambda, delta_lambda_rel, delta_u, delta_v, sigma2, objective });

        // The noise scale is part of the estimate, so it must settle too:
        // on exactly interpolable data the vectors can reach their fixed
        // point immediately while sigma2 is still descending toward the
        // floor, and stopping there would leave the objective value (used to
        // choose between starting points) at an arbitrary depth.
        let delta_sigma2_rel = (sigma2 - sigma2_old).abs() / sigma2_old;
        if delta_lambda_rel.max(delta_u).max(delta_v).max(delta_sigma2_rel) < config.tol {
            converged = true;
            break;
        }
    }

    enforce_sign(&mut u, &mut v);
    Ok(RankOneFit { triple: SvdTriple { lambda, u, v }, sigma2, converged, trace })
}

/// Sequential robust decomposition: extract `config.rank` components, each
/// fitted on the residual left by its predecessors and kept orthogonal to
/// them. If the residual runs out of usable directions the model truncates
/// at the achieved rank (flagged, not an error).
pub fn rsvd_dpd(x: &DataMatrix, config: &RSvdConfig) -> Result<RSvdModel> {
    config.validate()?;
    check_decomposable(x)?;
    if config.rank > x.n_rows().min(x.n_cols()) {
        return Err(Error::DimensionMismatch(format!(
            "rank {} exceeds min dimension of a {}x{} matrix",
            config.rank,
            x.n_rows(),
            x.n_cols()
        )));
    }

    // A component fitted to tolerance `tol` leaves deflation residue of
    // roughly that relative size, so the exhaustion cutoff must sit above it
    // or later components would chase the residue of earlier ones.
    let exhausted = RESIDUAL_EXHAUSTED.max(10.0 * config.tol) * x.frobenius_norm();
    let mut working = x.clone();
    let mut u_basis: Vec<Vec<f64>> = Vec::new();
    let mut v_basis: Vec<Vec<f64>> = Vec::new();
    let mut model = RSvdModel {
        triples: Vec::new(),
        sigma2: config.sigma2_floor,
        alpha: config.alpha,
        converged: Vec::new(),
        iterations: Vec::new(),
        truncated: false,
    };

    for k in 0..config.rank {
        if k > 0 && working.frobenius_norm() <= exhausted {
            model.truncated = true;
            break;
        }
        let fit = match rank_one_with_basis(&working, config, None, &u_basis, &v_basis) {
            Ok(fit) => fit,
            Err(Error::RankDeficient { .. }) | Err(Error::DegenerateInput(_)) if k > 0 => {
                model.truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        working.deflate_in_place(fit.triple.lambda, &fit.triple.u, &fit.triple.v);
        u_basis.push(fit.triple.u.clone());
        v_basis.push(fit.triple.v.clone());
        model.sigma2 = fit.sigma2;
        model.converged.push(fit.converged);
        model.iterations.push(fit.iterations());
        model.triples.push(fit.triple);
    }
    sort_components(&mut model);
    Ok(model)
}

/// Order components by descending singular value. Extraction order already
/// tends that way, but a robust fit can pull out a weaker component first
/// when the weighting regards a stronger one as outlying mass; the reported
/// decomposition should not depend on that.
fn sort_components(model: &mut RSvdModel) {
    let mut order: Vec<usize> = (0..model.triples.len()).collect();
    order.sort_by(|&a, &b| {
        model.triples[b]
            .lambda
            .partial_cmp(&model.triples[a].lambda)
            .expect("singular values are finite")
    });
    if order.windows(2).all(|w| w[0] < w[1]) {
        return;
    }
    let mut triples = Vec::with_capacity(order.len());
    let mut converged = Vec::with_capacity(order.len());
    let mut iterations = Vec::with_capacity(order.len());
    for &i in &order {
        triples.push(model.triples[i].clone());
        converged.push(model.converged[i]);
        iterations.push(model.iterations[i]);
    }
    model.triples = triples;
    model.converged = converged;
    model.iterations = iterations;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize, p: usize) -> DataMatrix {
        DataMatrix::from_fn(n, p, |_, _| 1.0).unwrap()
    }

    #[test]
    fn all_ones_matrix_has_exact_rank_one_fit() {
        let x = ones(10, 10);
        let fit = rank_one_dpd(&x, &RSvdConfig::new(0.5, 1), None).unwrap();
        assert!(fit.converged);
        assert!((fit.triple.lambda - 10.0).abs() < 1e-9);
        let e = 1.0 / 10f64.sqrt();
        for &ui in &fit.triple.u {
            assert!((ui - e).abs() < 1e-9);
        }
        for &vj in &fit.triple.v {
            assert!((vj - e).abs() < 1e-9);
        }
    }

    #[test]
    fn contaminated_ones_classical_vs_robust() {
        // all-ones with one cell bumped to 101: the classical fit chases the
        // spike, the robust fit ignores it
        let x = DataMatrix::from_fn(10, 10, |i, j| if i == 0 && j == 0 { 101.0 } else { 1.0 }).unwrap();
        let oracle = (110.0 + 8500f64.sqrt()) / 2.0; // top eigenvalue of the reduced [[101,3],[3,9]]

        let classical = rank_one_dpd(&x, &RSvdConfig::new(0.0, 1).with_tol(1e-10).with_max_iter(500), None).unwrap();
        assert!((classical.triple.lambda - oracle).abs() / oracle < 0.01, "{}", classical.triple.lambda);

        let robust = rank_one_dpd(&x, &RSvdConfig::new(0.75, 1), None).unwrap();
        assert!((robust.triple.lambda - 10.0).abs() / 10.0 < 0.05, "{}", robust.triple.lambda);
    }

    #[test]
    fn diagonal_matrix_recovers_top_singular_values() {
        let x = DataMatrix::from_fn(3, 3, |i, j| if i == j { (3 - i) as f64 } else { 0.0 }).unwrap();
        let model = rsvd_dpd(&x, &RSvdConfig::new(0.0, 2).with_tol(1e-10)).unwrap();
        assert!(!model.truncated);
        let lambdas = model.lambdas();
        assert!((lambdas[0] - 3.0).abs() < 1e-8);
        assert!((lambdas[1] - 2.0).abs() < 1e-8);
        // singular vectors are canonical basis vectors up to sign convention
        assert!((model.triples[0].u[0].abs() - 1.0).abs() < 1e-6);
        assert!(model.triples[0].u[0] > 0.0);
    }

    #[test]
    fn sign_convention_makes_dominant_entry_nonnegative() {
        // rank-one matrix built from a negative-heavy left vector
        let u = [-0.8, 0.1, 0.1];
        let v = [0.5, 0.5];
        let x = DataMatrix::from_fn(3, 2, |i, j| 4.0 * u[i] * v[j]).unwrap();
        let fit = rank_one_dpd(&x, &RSvdConfig::new(0.0, 1), None).unwrap();
        let dominant = fit
            .triple
            .u
            .iter()
            .cloned()
            .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
            .unwrap();
        assert!(dominant >= 0.0);
        assert!(fit.triple.lambda > 0.0);
    }

    #[test]
    fn fixed_point_holds_at_convergence() {
        let x = DataMatrix::from_fn(8, 6, |i, j| ((i * 13 + j * 7) % 9) as f64 * 0.3 + 0.4).unwrap();
        let cfg = RSvdConfig::new(0.5, 1).with_tol(1e-9).with_max_iter(500);
        let fit = rank_one_dpd(&x, &cfg, None).unwrap();
        assert!(fit.converged);
        let a: Vec<f64> = fit.triple.u.iter().map(|ui| fit.triple.lambda * ui).collect();
        let tol10 = 10.0 * cfg.tol;

        let left = crate::dpd::update_left(&x, &a, &fit.triple.v, fit.sigma2, 0.5).unwrap();
        for (li, ai) in left.values.iter().zip(&a) {
            assert!((li - ai).abs() <= tol10 * fit.triple.lambda, "{li} vs {ai}");
        }
        let right = crate::dpd::update_right(&x, &a, &fit.triple.v, fit.sigma2, 0.5).unwrap();
        for (rj, vj) in right.values.iter().zip(&fit.triple.v) {
            assert!((rj - vj).abs() <= tol10, "{rj} vs {vj}");
        }
        let s2 = crate::dpd::update_sigma2(&x, &a, &fit.triple.v, fit.sigma2, 0.5, cfg.sigma2_floor).unwrap();
        assert!((s2.value - fit.sigma2).abs() <= tol10 * fit.sigma2);
    }

    #[test]
    fn orthogonalize_rejects_spanned_vectors() {
        let basis = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        assert!(matches!(
            orthogonalize_against(&[1.0, 0.0, 0.0], &basis),
            Err(Error::RankDeficient { achieved: 2 })
        ));
        let r = orthogonalize_against(&[1.0, 2.0, 3.0], &basis).unwrap();
        let input_norm = (14f64).sqrt();
        for q in &basis {
            assert!(dot(&r, q).abs() <= 1e-10 * input_norm);
        }
    }

    #[test]
    fn exact_low_rank_input_truncates() {
        // rank-2 matrix, rank-3 request: third direction does not exist
        let x = DataMatrix::from_fn(4, 4, |i, j| {
            let u1 = [1.0, 2.0, 3.0, 4.0];
            let u2 = [1.0, -1.0, 1.0, -1.0];
            u1[i] * u1[j] + u2[i] * u2[j]
        })
        .unwrap();
        let model = rsvd_dpd(&x, &RSvdConfig::new(0.0, 3)).unwrap();
        assert!(model.truncated);
        assert_eq!(model.rank(), 2);
    }

    #[test]
    fn power_init_survives_column_norm_stall() {
        // right vector (1,-1)/sqrt(2): equal column norms make the first
        // starting direction orthogonal to it
        let u = [1.0, 2.0, 3.0];
        let x = DataMatrix::from_fn(3, 2, |i, j| u[i] * if j == 0 { 1.0 } else { -1.0 }).unwrap();
        let fit = rank_one_dpd(&x, &RSvdConfig::new(0.0, 1), None).unwrap();
        let expect = (14f64 * 2.0).sqrt();
        assert!((fit.triple.lambda - expect).abs() < 1e-6, "{}", fit.triple.lambda);
    }

    #[test]
    fn entry_contracts_are_enforced() {
        let zero = DataMatrix::from_fn(3, 3, |_, _| 0.0).unwrap();
        assert!(matches!(
            rank_one_dpd(&zero, &RSvdConfig::new(0.5, 1), None),
            Err(Error::DegenerateInput(_))
        ));
        let thin = DataMatrix::from_fn(3, 1, |_, _| 1.0).unwrap();
        assert!(matches!(
            rank_one_dpd(&thin, &RSvdConfig::new(0.5, 1), None),
            Err(Error::InvalidInput(_))
        ));
        let x = ones(3, 3);
        assert!(matches!(
            rsvd_dpd(&x, &RSvdConfig::new(0.5, 4)),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(RSvdConfig::new(1.5, 1).validate().is_err());
        assert!(RSvdConfig::new(0.5, 0).validate().is_err());
        assert!(RSvdConfig::new(0.5, 1).with_tol(0.0).validate().is_err());
    }

    #[test]
    fn reconstruction_matches_input_for_exact_low_rank() {
        let x = DataMatrix::from_fn(5, 4, |i, j| (i as f64 + 1.0) * (j as f64 + 0.5)).unwrap();
        let model = rsvd_dpd(&x, &RSvdConfig::new(0.0, 1).with_tol(1e-12).with_max_iter(500)).unwrap();
        let rec = model.reconstruct().unwrap();
        for (a, b) in rec.values().iter().zip(x.values()) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
