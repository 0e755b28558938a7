//! The `run.json` manifest a background run leaves behind, and the
//! threshold sweep that replays stored residuals against ground truth.

use std::path::Path;

use serde::{Deserialize, Serialize};

use rsvd_core::io::read_matrix_bin;
use rsvd_core::pgm::read_frame;
use rsvd_core::{Error, Result};

/// Everything needed to interpret a background run directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub height: usize,
    pub width: usize,
    pub alpha: f64,
    pub k_sigma: f64,
    pub batch_size: usize,
    pub batches: Vec<BatchEntry>,
}

/// One independently fitted batch of frames.
#[derive(Debug, Serialize, Deserialize)]
pub struct BatchEntry {
    pub index: usize,
    /// Original frame filenames, in processing order.
    pub frames: Vec<String>,
    pub model_file: String,
    pub residuals_file: String,
    pub rank: usize,
    pub sigma2: f64,
    /// Absolute-residual cutoff used for the masks: `k_sigma * sqrt(sigma2)`.
    pub threshold: f64,
    pub converged: bool,
}

/// Pooled F1 per candidate threshold, and the best one.
#[derive(Debug, Serialize)]
pub struct SweepReport {
    pub k_sigma: Vec<f64>,
    pub pooled_f1: Vec<f64>,
    pub best_k_sigma: f64,
    pub best_f1: f64,
}

/// Re-threshold the stored residuals of a run at each `k` and score the
/// resulting masks against the truth directory, pooled over all frames.
/// Ties resolve toward the smallest `k`.
pub fn sweep_k_sigma(
    run_dir: &Path,
    manifest: &RunManifest,
    truth_dir: &Path,
    ks: &[f64],
) -> Result<SweepReport> {
    let pixels = manifest.height * manifest.width;
    let mut tp = vec![0u64; ks.len()];
    let mut fp = vec![0u64; ks.len()];
    let mut fn_ = vec![0u64; ks.len()];
    for batch in &manifest.batches {
        let resid = read_matrix_bin(&run_dir.join(&batch.residuals_file))?;
        if resid.n_rows() != pixels || resid.n_cols() != batch.frames.len() {
            return Err(Error::Format(format!(
                "{} is {}x{}, but the manifest describes {} pixels x {} frames",
                batch.residuals_file,
                resid.n_rows(),
                resid.n_cols(),
                pixels,
                batch.frames.len()
            )));
        }
        let sigma = batch.sigma2.sqrt();
        for (t, name) in batch.frames.iter().enumerate() {
            let truth = read_frame(&truth_dir.join(name))?;
            if (truth.height, truth.width) != (manifest.height, manifest.width) {
                return Err(Error::InvalidInput(format!(
                    "truth mask {name} is {}x{}, run frames are {}x{}",
                    truth.height, truth.width, manifest.height, manifest.width
                )));
            }
            for pixel in 0..pixels {
                let r = resid.row(pixel)[t].abs();
                let actual = truth.pixels[pixel] >= 128;
                for (ki, &k) in ks.iter().enumerate() {
                    match (r > k * sigma, actual) {
                        (true, true) => tp[ki] += 1,
                        (true, false) => fp[ki] += 1,
                        (false, true) => fn_[ki] += 1,
                        (false, false) => {}
                    }
                }
            }
        }
    }
    let pooled_f1: Vec<f64> = (0..ks.len())
        .map(|i| {
            let denom = 2 * tp[i] + fp[i] + fn_[i];
            if denom == 0 {
                // Empty prediction against empty truth counts as perfect.
                1.0
            } else {
                2.0 * tp[i] as f64 / denom as f64
            }
        })
        .collect();
    let mut best = 0;
    for i in 1..ks.len() {
        if pooled_f1[i] > pooled_f1[best]
            || (pooled_f1[i] == pooled_f1[best] && ks[i] < ks[best])
        {
            best = i;
        }
    }
    Ok(SweepReport {
        k_sigma: ks.to_vec(),
        pooled_f1: pooled_f1.clone(),
        best_k_sigma: ks[best],
        best_f1: pooled_f1[best],
    })
}
