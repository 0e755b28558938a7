//! Evaluation support: mask accuracy metrics, a synthetic video generator
//! with controllable contamination, a consistency experiment for the leading
//! singular value, and wall-clock benchmarks.
//!
//! Everything random is driven by explicitly derived `ChaCha8` streams, so a
//! given seed reproduces bit-identical data regardless of thread count, and
//! variants of one scene (say, with and without tampering) share the same
//! background and noise draws.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::svd::{rank_one_dpd, rsvd_dpd, RSvdConfig};
use crate::video::{matricize, ForegroundMask, FrameSequence};

// ---------------------------------------------------------------------------
// Mask metrics

/// Precision/recall/F1 for one frame, with the raw counts that produced them.
#[derive(Debug, Clone, Serialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Metrics over all frames pooled (counts summed before the ratios).
#[derive(Debug, Clone, Serialize)]
pub struct PooledMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaskMetrics {
    pub per_frame: Vec<FrameMetrics>,
    pub pooled: PooledMetrics,
}

/// Precision, recall and F1 from raw counts.
///
/// Degenerate frames follow fixed conventions: with an empty prediction and
/// empty truth all three scores are 1; an empty prediction against nonempty
/// truth scores precision 0, and an empty truth against a nonempty
/// prediction scores recall 0.
fn scores(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let precision = if tp + fp == 0 {
        if fn_ == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        if fp == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Compare a predicted mask against ground truth, frame by frame and pooled.
pub fn evaluate_mask(pred: &ForegroundMask, truth: &ForegroundMask) -> Result<MaskMetrics> {
    if (pred.height, pred.width) != (truth.height, truth.width) {
        return Err(Error::DimensionMismatch(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.height, pred.width, truth.height, truth.width
        )));
    }
    if pred.n_frames() != truth.n_frames() {
        return Err(Error::DimensionMismatch(format!(
            "prediction has {} frames, truth has {}",
            pred.n_frames(),
            truth.n_frames()
        )));
    }
    let mut per_frame = Vec::with_capacity(pred.n_frames());
    let (mut tp_all, mut fp_all, mut fn_all) = (0usize, 0usize, 0usize);
    for (t, (p_frame, t_frame)) in pred.frames.iter().zip(&truth.frames).enumerate() {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&p, &g) in p_frame.iter().zip(t_frame) {
            match (p, g) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let (precision, recall, f1) = scores(tp, fp, fn_);
        per_frame.push(FrameMetrics {
            frame: t,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        });
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
    }
    let (precision, recall, f1) = scores(tp_all, fp_all, fn_all);
    Ok(MaskMetrics {
        per_frame,
        pooled: PooledMetrics {
            true_positives: tp_all,
            false_positives: fp_all,
            false_negatives: fn_all,
            precision,
            recall,
            f1,
        },
    })
}

// ---------------------------------------------------------------------------
// Synthetic video

/// Intensity added to background pixels covered by the synthetic object.
pub const OBJECT_CONTRAST: f64 = 0.2;

const COVER_VALUE: f64 = 0.05;
const COVER_FRACTION: f64 = 0.6;
const BLUR_RADIUS: isize = 2;

/// Frame-level corruption applied to selected frames of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Contamination {
    None,
    /// Each pixel independently becomes 0 or 1 with probability `density`.
    SaltPepper { density: f64 },
    /// A centred block covering 60% of each dimension is painted dark.
    Cover,
    /// A box blur with a 5x5 window.
    DefocusBlur,
    /// Additive Gaussian noise on top of the base noise.
    GaussianNoise { sd: f64 },
    /// The whole frame content moves by (rows, columns); exposed edges
    /// replicate the nearest original pixel (a camera bump).
    Shift { dy: i64, dx: i64 },
}

/// Recipe for a synthetic grayscale scene: a low-rank background, an
/// optional bright moving square (the ground-truth foreground), Gaussian
/// observation noise, and optional per-frame contamination.
#[derive(Debug, Clone, Serialize)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub n_frames: usize,
    /// Exact rank of the matricized clean background (>= 1).
    pub background_rank: usize,
    /// Side length of the moving square; 0 disables the object.
    pub object_size: usize,
    /// Per-frame displacement (rows, columns); the square clamps at borders.
    pub object_velocity: (i64, i64),
    /// Standard deviation of the Gaussian observation noise on every frame.
    pub noise_sd: f64,
    pub contamination: Contamination,
    /// Frame indices the contamination applies to.
    pub contaminated_frames: Vec<usize>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(height: usize, width: usize, n_frames: usize) -> Self {
        SynthSpec {
            height,
            width,
            n_frames,
            background_rank: 1,
            object_size: 0,
            object_velocity: (0, 1),
            noise_sd: 0.0,
            contamination: Contamination::None,
            contaminated_frames: Vec::new(),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.n_frames == 0 {
            return Err(Error::InvalidInput(
                "height, width and n_frames must all be positive".into(),
            ));
        }
        let max_rank = (self.height * self.width).min(self.n_frames);
        if self.background_rank == 0 || self.background_rank > max_rank {
            return Err(Error::InvalidInput(format!(
                "background rank {} outside 1..={max_rank}",
                self.background_rank
            )));
        }
        if self.object_size > self.height.min(self.width) {
            return Err(Error::InvalidInput(format!(
                "object size {} does not fit a {}x{} frame",
                self.object_size, self.height, self.width
            )));
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return Err(Error::InvalidInput(format!(
                "noise sd must be nonnegative, got {}",
                self.noise_sd
            )));
        }
        match self.contamination {
            Contamination::SaltPepper { density } if !(0.0..=1.0).contains(&density) => {
                return Err(Error::InvalidInput(format!(
                    "salt-and-pepper density {density} outside [0, 1]"
                )));
            }
            Contamination::GaussianNoise { sd } if !sd.is_finite() || sd < 0.0 => {
                return Err(Error::InvalidInput(format!(
                    "contamination noise sd must be nonnegative, got {sd}"
                )));
            }
            _ => {}
        }
        if let Some(&bad) = self
            .contaminated_frames
            .iter()
            .find(|&&t| t >= self.n_frames)
        {
            return Err(Error::InvalidInput(format!(
                "contaminated frame {bad} out of range for {} frames",
                self.n_frames
            )));
        }
        Ok(())
    }
}

/// A generated scene: observed frames, ground-truth object mask, and the
/// clean (noise- and object-free) background for error measurements.
#[derive(Debug, Clone)]
pub struct SyntheticVideo {
    pub frames: FrameSequence,
    pub truth: ForegroundMask,
    pub clean_background: FrameSequence,
}

/// Seed a `ChaCha8` generator from a base seed and a stream path, so that
/// distinct purposes (background, noise, contamination, ...) never share a
/// stream.
pub(crate) fn derive_rng(seed: u64, stream: &[u64]) -> ChaCha8Rng {
    let mut z = splitmix64(seed ^ 0x9E37_79B9_7F4A_7C15);
    for &part in stream {
        z = splitmix64(z ^ part.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    }
    ChaCha8Rng::seed_from_u64(z)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Generate a synthetic scene from a spec.
///
/// The background, noise and contamination use separate derived streams:
/// two specs differing only in object or contamination settings share the
/// exact same background and noise values.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SyntheticVideo> {
    spec.validate()?;
    let (h, w, p) = (spec.height, spec.width, spec.n_frames);
    let pixels = h * w;
    let rank = spec.background_rank;

    // Clean background: a smooth bilinear base pattern (temporal coefficient
    // one) plus rank-1 extra patterns with small seeded coefficients. The
    // matricized background is exactly rank `rank`.
    let mut rng_bg = derive_rng(spec.seed, &[1]);
    let corners: [f64; 4] = std::array::from_fn(|_| rng_bg.random::<f64>());
    let mut base = vec![0.0; pixels];
    for y in 0..h {
        let sy = if h > 1 { y as f64 / (h - 1) as f64 } else { 0.5 };
        for x in 0..w {
            let sx = if w > 1 { x as f64 / (w - 1) as f64 } else { 0.5 };
            let blend = corners[0] * (1.0 - sy) * (1.0 - sx)
                + corners[1] * (1.0 - sy) * sx
                + corners[2] * sy * (1.0 - sx)
                + corners[3] * sy * sx;
            base[y * w + x] = 0.35 + 0.3 * blend;
        }
    }
    let extra_patterns: Vec<Vec<f64>> = (1..rank)
        .map(|_| (0..pixels).map(|_| 2.0 * rng_bg.random::<f64>() - 1.0).collect())
        .collect();
    let amplitude = 0.12 / rank as f64;
    let extra_coeffs: Vec<Vec<f64>> = (1..rank)
        .map(|_| {
            (0..p)
                .map(|_| amplitude * (2.0 * rng_bg.random::<f64>() - 1.0))
                .collect()
        })
        .collect();

    let mut clean = Vec::with_capacity(p);
    for t in 0..p {
        let mut frame = base.clone();
        for (pattern, coeffs) in extra_patterns.iter().zip(&extra_coeffs) {
            let c = coeffs[t];
            for (f, &g) in frame.iter_mut().zip(pattern) {
                *f += c * g;
            }
        }
        clean.push(frame);
    }

    // Object footprint per frame; also the ground truth mask.
    let mut truth = vec![vec![false; pixels]; p];
    if spec.object_size > 0 {
        let size = spec.object_size;
        let (dy, dx) = spec.object_velocity;
        for (t, mask) in truth.iter_mut().enumerate() {
            let top = (t as i64 * dy).clamp(0, (h - size) as i64) as usize;
            let left = (t as i64 * dx).clamp(0, (w - size) as i64) as usize;
            for y in top..top + size {
                for x in left..left + size {
                    mask[y * w + x] = true;
                }
            }
        }
    }

    let mut frames = Vec::with_capacity(p);
    for t in 0..p {
        let mut frame = clean[t].clone();
        for (value, &fg) in frame.iter_mut().zip(&truth[t]) {
            if fg {
                *value = (*value + OBJECT_CONTRAST).min(1.0);
            }
        }
        if spec.noise_sd > 0.0 {
            let mut rng = derive_rng(spec.seed, &[2, t as u64]);
            for value in frame.iter_mut() {
                *value = (*value + spec.noise_sd * gaussian(&mut rng)).clamp(0.0, 1.0);
            }
        }
        frames.push(frame);
    }

    let mut tampered = spec.contaminated_frames.clone();
    tampered.sort_unstable();
    tampered.dedup();
    for &t in &tampered {
        let mut rng = derive_rng(spec.seed, &[3, t as u64]);
        let frame = &mut frames[t];
        match spec.contamination {
            Contamination::None => {}
            Contamination::SaltPepper { density } => {
                for value in frame.iter_mut() {
                    if rng.random::<f64>() < density {
                        *value = if rng.random::<f64>() < 0.5 { 0.0 } else { 1.0 };
                    }
                }
            }
            Contamination::Cover => {
                let ch = ((h as f64 * COVER_FRACTION).round() as usize).max(1);
                let cw = ((w as f64 * COVER_FRACTION).round() as usize).max(1);
                let top = (h - ch) / 2;
                let left = (w - cw) / 2;
                for y in top..top + ch {
                    for x in left..left + cw {
                        frame[y * w + x] = COVER_VALUE;
                    }
                }
            }
            Contamination::DefocusBlur => {
                let original = frame.clone();
                for y in 0..h as isize {
                    for x in 0..w as isize {
                        let mut sum = 0.0;
                        let mut count = 0.0;
                        for yy in y - BLUR_RADIUS..=y + BLUR_RADIUS {
                            for xx in x - BLUR_RADIUS..=x + BLUR_RADIUS {
                                if yy >= 0 && yy < h as isize && xx >= 0 && xx < w as isize {
                                    sum += original[yy as usize * w + xx as usize];
                                    count += 1.0;
                                }
                            }
                        }
                        frame[y as usize * w + x as usize] = sum / count;
                    }
                }
            }
            Contamination::GaussianNoise { sd } => {
                for value in frame.iter_mut() {
                    *value = (*value + sd * gaussian(&mut rng)).clamp(0.0, 1.0);
                }
            }
            Contamination::Shift { dy, dx } => {
                let original = frame.clone();
                for y in 0..h as i64 {
                    for x in 0..w as i64 {
                        let sy = (y - dy).clamp(0, h as i64 - 1) as usize;
                        let sx = (x - dx).clamp(0, w as i64 - 1) as usize;
                        frame[y as usize * w + x as usize] = original[sy * w + sx];
                    }
                }
            }
        }
    }

    Ok(SyntheticVideo {
        frames: FrameSequence::new(h, w, frames)?,
        truth: ForegroundMask {
            height: h,
            width: w,
            frames: truth,
        },
        clean_background: FrameSequence::new(h, w, clean)?,
    })
}

// ---------------------------------------------------------------------------
// Consistency experiment

/// Leading singular value of the planted model used by the consistency
/// experiment.
pub const CONSISTENCY_TRUE_LAMBDA: f64 = 3.0;

/// Bias and RMSE of the leading singular value estimate across matrix sizes.
#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub sizes: Vec<usize>,
    pub replications: usize,
    pub alpha: f64,
    pub seed: u64,
    pub true_lambda: f64,
    /// Mean of `lambda_hat - true_lambda` per size.
    pub bias: Vec<f64>,
    /// Root mean squared error of `lambda_hat` per size.
    pub rmse: Vec<f64>,
}

/// One cell of the consistency experiment: plant an `n x n` rank-3 signal
/// with singular values (3, 2, 1) and orthonormal Gaussian factors supported
/// on disjoint index blocks, add N(0, `noise_sd`^2) noise, fit at `alpha`,
/// and return the leading singular value estimate.
///
/// The disjoint supports matter: they make the components mutually invisible
/// to the weighted rank-one fits, so the noiseless matrix is recovered
/// exactly and the estimation error is driven by the noise alone. Factors
/// with shared support leave the weaker components as structured residue
/// inside the stronger ones' fits, which tilts the leading singular value
/// by an amount that does not shrink with `n`.
pub fn consistency_replicate(
    n: usize,
    replicate: usize,
    alpha: f64,
    seed: u64,
    noise_sd: f64,
) -> Result<f64> {
    if n < 6 {
        return Err(Error::InvalidInput(format!(
            "consistency matrices need n >= 6, got {n}"
        )));
    }
    if !noise_sd.is_finite() || noise_sd < 0.0 {
        return Err(Error::InvalidInput(format!(
            "noise sd must be nonnegative, got {noise_sd}"
        )));
    }
    let mut rng = derive_rng(seed, &[0xC0, n as u64, replicate as u64]);
    let u = block_factors(&mut rng, n, 3);
    let v = block_factors(&mut rng, n, 3);
    let s = [CONSISTENCY_TRUE_LAMBDA, 2.0, 1.0];
    let mut values = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut x = 0.0;
            for k in 0..3 {
                x += s[k] * u[k][i] * v[k][j];
            }
            if noise_sd > 0.0 {
                x += noise_sd * gaussian(&mut rng);
            }
            values.push(x);
        }
    }
    let x = DataMatrix::from_vec(n, n, values)?;
    let config = RSvdConfig::new(alpha, 3).with_tol(1e-7).with_max_iter(300);
    let model = rsvd_dpd(&x, &config)?;
    Ok(model.triples[0].lambda)
}

/// Run the consistency experiment over a grid of sizes with `replications`
/// independent draws each; the noise scale is `1/n`.
pub fn consistency_experiment(
    sizes: &[usize],
    replications: usize,
    alpha: f64,
    seed: u64,
) -> Result<ConsistencyReport> {
    if sizes.is_empty() || replications == 0 {
        return Err(Error::InvalidInput(
            "need at least one size and one replication".into(),
        ));
    }
    let cells: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&n| (0..replications).map(move |r| (n, r)))
        .collect();
    let estimates: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&(n, r)| consistency_replicate(n, r, alpha, seed, 1.0 / n as f64))
        .collect();
    let mut bias = Vec::with_capacity(sizes.len());
    let mut rmse = Vec::with_capacity(sizes.len());
    for (i, _) in sizes.iter().enumerate() {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for r in 0..replications {
            let est = match &estimates[i * replications + r] {
                Ok(v) => *v,
                Err(e) => {
                    return Err(Error::Domain(format!(
                        "consistency cell (n={}, rep={r}) failed: {e}",
                        sizes[i]
                    )))
                }
            };
            let err = est - CONSISTENCY_TRUE_LAMBDA;
            sum += err;
            sum_sq += err * err;
        }
        bias.push(sum / replications as f64);
        rmse.push((sum_sq / replications as f64).sqrt());
    }
    Ok(ConsistencyReport {
        sizes: sizes.to_vec(),
        replications,
        alpha,
        seed,
        true_lambda: CONSISTENCY_TRUE_LAMBDA,
        bias,
        rmse,
    })
}

/// Draw `k` unit factors of length `n` with disjoint supports: factor `i`
/// holds normalized Gaussian entries on the index block `[i*n/k, (i+1)*n/k)`
/// and zeros elsewhere, so the factors are orthonormal by construction.
fn block_factors(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    for i in 0..k {
        let (lo, hi) = (i * n / k, (i + 1) * n / k);
        loop {
            let mut c = vec![0.0; n];
            for slot in &mut c[lo..hi] {
                *slot = gaussian(rng);
            }
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                c.iter_mut().for_each(|v| *v /= norm);
                cols.push(c);
                break;
            }
        }
    }
    cols
}

// ---------------------------------------------------------------------------
// Timing

#[derive(Debug, Clone, Serialize)]
pub struct TimingCell {
    pub height: usize,
    pub width: usize,
    pub n_frames: usize,
    pub seconds_per_frame_mean: f64,
    pub seconds_per_frame_sd: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingReport {
    pub alpha: f64,
    pub rank: usize,
    pub runs: usize,
    pub cells: Vec<TimingCell>,
}

/// Time full decompositions of synthetic scenes at the given frame shapes,
/// reporting mean and standard deviation of seconds per frame.
pub fn timing_benchmark(
    shapes: &[(usize, usize, usize)],
    alpha: f64,
    rank: usize,
    runs: usize,
    seed: u64,
) -> Result<TimingReport> {
    if shapes.is_empty() || runs == 0 {
        return Err(Error::InvalidInput(
            "need at least one shape and one run".into(),
        ));
    }
    let mut cells = Vec::with_capacity(shapes.len());
    for &(h, w, p) in shapes {
        let mut spec = SynthSpec::new(h, w, p);
        spec.object_size = (h.min(w) / 5).max(1).min(h.min(w));
        spec.noise_sd = 0.02;
        spec.seed = seed;
        let video = generate_synthetic(&spec)?;
        let x = matricize(&video.frames);
        let config = RSvdConfig::new(alpha, rank);
        rsvd_dpd(&x, &config)?; // warm-up
        let mut samples = Vec::with_capacity(runs);
        for _ in 0..runs {
            let start = Instant::now();
            rsvd_dpd(&x, &config)?;
            samples.push(start.elapsed().as_secs_f64() / p as f64);
        }
        let mean = samples.iter().sum::<f64>() / runs as f64;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / runs as f64;
        cells.push(TimingCell {
            height: h,
            width: w,
            n_frames: p,
            seconds_per_frame_mean: mean,
            seconds_per_frame_sd: var.sqrt(),
        });
    }
    Ok(TimingReport {
        alpha,
        rank,
        runs,
        cells,
    })
}

/// Median seconds per alternating iteration of a rank-one fit on a seeded
/// random `n_rows x n_cols` matrix. The tolerance is set low enough that
/// the fit always runs `iters` iterations.
pub fn per_iteration_seconds(
    n_rows: usize,
    n_cols: usize,
    alpha: f64,
    iters: usize,
    repeats: usize,
    seed: u64,
) -> Result<f64> {
    if iters == 0 || repeats == 0 {
        return Err(Error::InvalidInput(
            "need at least one iteration and one repeat".into(),
        ));
    }
    let mut rng = derive_rng(seed, &[0x71, n_rows as u64, n_cols as u64]);
    let x = DataMatrix::from_fn(n_rows, n_cols, |_, _| rng.random::<f64>())?;
    let config = RSvdConfig::new(alpha, 1)
        .with_tol(1e-300)
        .with_max_iter(iters);
    rank_one_dpd(&x, &config, None)?; // warm-up
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let fit = rank_one_dpd(&x, &config, None)?;
        samples.push(start.elapsed().as_secs_f64() / fit.iterations().max(1) as f64);
    }
    samples.sort_by(f64::total_cmp);
    Ok(samples[samples.len() / 2])
}
