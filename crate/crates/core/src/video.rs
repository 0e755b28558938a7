//! Video background modelling: matricize a frame sequence, fit a low-rank
//! robust decomposition, and flag foreground pixels whose residuals exceed a
//! multiple of the fitted noise scale.
//!
//! Frames hold intensities in `[0, 1]`. The matricized form puts one frame
//! per column (row-major pixel order down the rows), so a static background
//! is exactly rank one and moving objects appear as sparse residuals.

use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::pgm::{list_frames, read_frame, write_frame, GrayFrame};
use crate::select::select_rank;
use crate::svd::{rsvd_dpd, RSvdConfig, RSvdModel};

/// Default residual threshold multiplier for foreground extraction.
pub const DEFAULT_K_SIGMA: f64 = 3.0;

/// A sequence of equally sized grayscale frames with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    height: usize,
    width: usize,
    frames: Vec<Vec<f64>>,
}

impl FrameSequence {
    pub fn new(height: usize, width: usize, frames: Vec<Vec<f64>>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "frame dimensions must be positive, got {height}x{width}"
            )));
        }
        if frames.is_empty() {
            return Err(Error::InvalidInput("sequence has no frames".into()));
        }
        for (t, frame) in frames.iter().enumerate() {
            if frame.len() != height * width {
                return Err(Error::DimensionMismatch(format!(
                    "frame {t} has {} pixels, expected {}",
                    frame.len(),
                    height * width
                )));
            }
            if let Some(bad) = frame.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidInput(format!(
                    "frame {t} has intensity {bad} outside [0, 1]"
                )));
            }
        }
        Ok(FrameSequence { height, width, frames })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t]
    }

    /// Keep only frames `range.start..range.end` (used for batching).
    pub fn slice(&self, start: usize, end: usize) -> Result<FrameSequence> {
        if start >= end || end > self.frames.len() {
            return Err(Error::InvalidInput(format!(
                "frame range {start}..{end} out of bounds for {} frames",
                self.frames.len()
            )));
        }
        Ok(FrameSequence {
            height: self.height,
            width: self.width,
            frames: self.frames[start..end].to_vec(),
        })
    }

    pub fn from_gray_frames(frames: &[GrayFrame]) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidInput("sequence has no frames".into()));
        }
        let (height, width) = (frames[0].height, frames[0].width);
        let mut data = Vec::with_capacity(frames.len());
        for (t, frame) in frames.iter().enumerate() {
            if (frame.height, frame.width) != (height, width) {
                return Err(Error::DimensionMismatch(format!(
                    "frame {t} is {}x{}, expected {height}x{width}",
                    frame.height, frame.width
                )));
            }
            data.push(frame.pixels.iter().map(|&b| dequantize(b)).collect());
        }
        FrameSequence::new(height, width, data)
    }

    /// Load every PGM/PPM file in `dir`, in lexicographic filename order.
    pub fn from_pgm_dir(dir: &Path) -> Result<Self> {
        let frames = list_frames(dir)?
            .iter()
            .map(|p| read_frame(p))
            .collect::<Result<Vec<_>>>()?;
        Self::from_gray_frames(&frames)
    }

    /// Quantize frame `t` back to 8 bits.
    pub fn to_gray(&self, t: usize) -> GrayFrame {
        GrayFrame {
            height: self.height,
            width: self.width,
            pixels: self.frames[t].iter().map(|&v| quantize(v)).collect(),
        }
    }
}

/// Map a `[0, 1]` intensity to 8 bits (clamped, round half away from zero).
pub fn quantize(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

/// Map an 8-bit intensity back to `[0, 1]`.
pub fn dequantize(b: u8) -> f64 {
    f64::from(b) / 255.0
}

/// Stack a sequence into an `(h*w) x n_frames` matrix, one frame per column.
pub fn matricize(seq: &FrameSequence) -> DataMatrix {
    let pixels = seq.height * seq.width;
    let p = seq.n_frames();
    let mut values = vec![0.0; pixels * p];
    for (t, frame) in seq.frames.iter().enumerate() {
        for (pixel, &v) in frame.iter().enumerate() {
            values[pixel * p + t] = v;
        }
    }
    DataMatrix::from_vec(pixels, p, values).expect("sequence invariants guarantee a valid matrix")
}

/// Rebuild a frame sequence from a matricized `(h*w) x n_frames` matrix.
///
/// Values may overshoot `[0, 1]` by reconstruction error; anything within
/// `1e-9` of the range is clamped, larger excursions are rejected.
pub fn devectorize(x: &DataMatrix, height: usize, width: usize) -> Result<FrameSequence> {
    if x.n_rows() != height * width {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows, expected {} for {height}x{width} frames",
            x.n_rows(),
            height * width
        )));
    }
    let frames = (0..x.n_cols())
        .map(|t| {
            x.column(t)
                .into_iter()
                .map(|v| {
                    if (-1e-9..=1.0 + 1e-9).contains(&v) {
                        Ok(v.clamp(0.0, 1.0))
                    } else {
                        Err(Error::InvalidInput(format!(
                            "value {v} in frame {t} is too far outside [0, 1]"
                        )))
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(height, width, frames)
}

/// Per-frame boolean foreground masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForegroundMask {
    pub height: usize,
    pub width: usize,
    pub frames: Vec<Vec<bool>>,
}

impl ForegroundMask {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// Number of foreground pixels in frame `t`.
    pub fn count(&self, t: usize) -> usize {
        self.frames[t].iter().filter(|&&b| b).count()
    }

    /// Render frame `t` as an 8-bit mask image (255 foreground, 0 background).
    pub fn to_gray(&self, t: usize) -> GrayFrame {
        GrayFrame {
            height: self.height,
            width: self.width,
            pixels: self.frames[t].iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    pub fn write_pgm(&self, t: usize, path: &Path) -> Result<()> {
        write_frame(path, &self.to_gray(t))
    }

    /// Load masks from a directory of PGM files; any pixel >= 128 counts as
    /// foreground.
    pub fn from_pgm_dir(dir: &Path) -> Result<Self> {
        let frames = list_frames(dir)?
            .iter()
            .map(|p| read_frame(p))
            .collect::<Result<Vec<_>>>()?;
        let (height, width) = (frames[0].height, frames[0].width);
        let mut data = Vec::with_capacity(frames.len());
        for (t, frame) in frames.iter().enumerate() {
            if (frame.height, frame.width) != (height, width) {
                return Err(Error::DimensionMismatch(format!(
                    "mask {t} is {}x{}, expected {height}x{width}",
                    frame.height, frame.width
                )));
            }
            data.push(frame.pixels.iter().map(|&b| b >= 128).collect());
        }
        Ok(ForegroundMask { height, width, frames: data })
    }
}

/// Controls for [`model_background`].
#[derive(Debug, Clone)]
pub struct BackgroundConfig {
    pub alpha: f64,
    /// Explicit rank; `None` selects it from the classical spectrum.
    pub rank: Option<usize>,
    /// Share tolerance for automatic rank selection.
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub sigma2_floor: f64,
}

impl BackgroundConfig {
    pub fn new(alpha: f64) -> Self {
        let defaults = RSvdConfig::new(alpha, 1);
        BackgroundConfig {
            alpha,
            rank: None,
            epsilon: 0.1,
            tol: defaults.tol,
            max_iter: defaults.max_iter,
            sigma2_floor: defaults.sigma2_floor,
        }
    }

    fn fit_config(&self, rank: usize) -> RSvdConfig {
        RSvdConfig::new(self.alpha, rank)
            .with_tol(self.tol)
            .with_max_iter(self.max_iter)
            .with_sigma2_floor(self.sigma2_floor)
    }
}

/// A fitted background model for one frame sequence.
#[derive(Debug, Clone)]
pub struct BackgroundModel {
    pub model: RSvdModel,
    pub height: usize,
    pub width: usize,
    /// Low-rank reconstruction in matricized layout.
    pub background: DataMatrix,
}

impl BackgroundModel {
    /// Background estimate as a frame sequence (clamped to `[0, 1]`).
    pub fn background_frames(&self) -> Result<FrameSequence> {
        let clamped = DataMatrix::from_vec(
            self.background.n_rows(),
            self.background.n_cols(),
            self.background.values().iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        )?;
        devectorize(&clamped, self.height, self.width)
    }

    /// Residual matrix `X - background` in matricized layout.
    pub fn residuals(&self, seq: &FrameSequence) -> Result<DataMatrix> {
        let x = check_same_shape(self, seq)?;
        DataMatrix::from_vec(
            x.n_rows(),
            x.n_cols(),
            x.values()
                .iter()
                .zip(self.background.values())
                .map(|(a, b)| a - b)
                .collect(),
        )
    }
}

fn check_same_shape(bg: &BackgroundModel, seq: &FrameSequence) -> Result<DataMatrix> {
    if (seq.height(), seq.width()) != (bg.height, bg.width)
        || seq.n_frames() != bg.background.n_cols()
    {
        return Err(Error::DimensionMismatch(format!(
            "sequence is {}x{} with {} frames, model expects {}x{} with {}",
            seq.height(),
            seq.width(),
            seq.n_frames(),
            bg.height,
            bg.width,
            bg.background.n_cols()
        )));
    }
    Ok(matricize(seq))
}

/// Fit a robust low-rank background to a frame sequence.
pub fn model_background(seq: &FrameSequence, config: &BackgroundConfig) -> Result<BackgroundModel> {
    let x = matricize(seq);
    let rank = match config.rank {
        Some(r) => r,
        None => select_rank(&x, config.epsilon)?.chosen_rank,
    };
    let model = rsvd_dpd(&x, &config.fit_config(rank))?;
    let background = model.reconstruct()?;
    Ok(BackgroundModel {
        model,
        height: seq.height(),
        width: seq.width(),
        background,
    })
}

/// Flag pixels whose absolute residual exceeds `k_sigma * sqrt(sigma2)`.
pub fn extract_foreground(
    seq: &FrameSequence,
    bg: &BackgroundModel,
    k_sigma: f64,
) -> Result<ForegroundMask> {
    if !k_sigma.is_finite() || k_sigma <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "k_sigma must be positive, got {k_sigma}"
        )));
    }
    let x = check_same_shape(bg, seq)?;
    let threshold = k_sigma * bg.model.sigma2.sqrt();
    let pixels = bg.height * bg.width;
    let p = x.n_cols();
    let mut frames = vec![vec![false; pixels]; p];
    for pixel in 0..pixels {
        let x_row = x.row(pixel);
        let b_row = bg.background.row(pixel);
        for t in 0..p {
            if (x_row[t] - b_row[t]).abs() > threshold {
                frames[t][pixel] = true;
            }
        }
    }
    Ok(ForegroundMask {
        height: bg.height,
        width: bg.width,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svd::SvdTriple;

    fn two_frame_sequence() -> FrameSequence {
        FrameSequence::new(
            2,
            2,
            vec![
                vec![0.1, 0.2, 0.3, 0.4],
                vec![0.5, 0.6, 0.7, 0.8],
            ],
        )
        .unwrap()
    }

    #[test]
    fn matricize_puts_one_frame_per_column() {
        let x = matricize(&two_frame_sequence());
        assert_eq!((x.n_rows(), x.n_cols()), (4, 2));
        assert_eq!(x.column(0), vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(x.column(1), vec![0.5, 0.6, 0.7, 0.8]);
    }

    #[test]
    fn matricized_dimensions_scale_with_frame_size() {
        let seq = FrameSequence::new(316, 236, vec![vec![0.5; 316 * 236]; 4]).unwrap();
        let x = matricize(&seq);
        assert_eq!((x.n_rows(), x.n_cols()), (74576, 4));
    }

    #[test]
    fn devectorize_inverts_matricize_exactly() {
        let seq = two_frame_sequence();
        let back = devectorize(&matricize(&seq), 2, 2).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn devectorize_rejects_wild_values() {
        let x = DataMatrix::from_vec(4, 1, vec![0.1, 0.2, 1.5, 0.4]).unwrap();
        assert!(matches!(
            devectorize(&x, 2, 2),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn sequence_validation_rejects_out_of_range_intensities() {
        assert!(FrameSequence::new(1, 2, vec![vec![0.0, 1.1]]).is_err());
        assert!(FrameSequence::new(1, 2, vec![vec![-0.1, 0.5]]).is_err());
        assert!(FrameSequence::new(1, 2, vec![vec![0.5]]).is_err());
        assert!(FrameSequence::new(0, 2, vec![vec![]]).is_err());
    }

    #[test]
    fn quantization_roundtrip_is_exact_on_byte_values() {
        for b in [0u8, 1, 17, 128, 254, 255] {
            assert_eq!(quantize(dequantize(b)), b);
        }
        assert_eq!(quantize(-0.3), 0);
        assert_eq!(quantize(2.0), 255);
    }

    #[test]
    fn static_sequence_is_reconstructed_exactly() {
        let frame: Vec<f64> = (0..12).map(|i| 0.2 + 0.05 * (i as f64)).collect();
        let seq = FrameSequence::new(3, 4, vec![frame; 5]).unwrap();
        let bg = model_background(&seq, &BackgroundConfig::new(0.5)).unwrap();
        assert_eq!(bg.model.rank(), 1);
        let x = matricize(&seq);
        for (a, b) in bg.background.values().iter().zip(x.values()) {
            assert!((a - b).abs() < 1e-9);
        }
        let residuals = bg.residuals(&seq).unwrap();
        assert!(residuals.frobenius_norm() < 1e-9);
    }

    /// Background model with a constant 0.5 background and a chosen noise
    /// scale, bypassing the fit.
    fn constant_background(h: usize, w: usize, p: usize, sigma2: f64) -> BackgroundModel {
        let pixels = h * w;
        let norm = (pixels as f64).sqrt();
        let background = DataMatrix::from_fn(pixels, p, |_, _| 0.5).unwrap();
        BackgroundModel {
            model: RSvdModel {
                triples: vec![SvdTriple {
                    lambda: 0.5 * norm * (p as f64).sqrt(),
                    u: vec![1.0 / norm; pixels],
                    v: vec![1.0 / (p as f64).sqrt(); p],
                }],
                sigma2,
                alpha: 0.75,
                converged: vec![true],
                iterations: vec![1],
                truncated: false,
            },
            height: h,
            width: w,
            background,
        }
    }

    #[test]
    fn foreground_flags_exactly_the_pixels_beyond_the_threshold() {
        // sigma = 0.02, threshold at k = 3 is 0.06.
        let bg = constant_background(2, 3, 4, 0.0004);
        let mut frames = vec![vec![0.5; 6]; 4];
        frames[1][4] = 0.7; // +0.2, well past the threshold
        frames[2][0] = 0.55; // +0.05, inside the threshold
        let seq = FrameSequence::new(2, 3, frames).unwrap();
        let mask = extract_foreground(&seq, &bg, 3.0).unwrap();
        assert_eq!(mask.count(0), 0);
        assert_eq!(mask.count(1), 1);
        assert!(mask.frames[1][4]);
        assert_eq!(mask.count(2), 0);
        assert_eq!(mask.count(3), 0);
    }

    #[test]
    fn foreground_threshold_scales_with_k_sigma() {
        let bg = constant_background(2, 3, 1, 0.0004);
        let mut frames = vec![vec![0.5; 6]];
        frames[0][2] = 0.55; // +0.05 = 2.5 sigma
        let seq = FrameSequence::new(2, 3, frames).unwrap();
        assert_eq!(extract_foreground(&seq, &bg, 3.0).unwrap().count(0), 0);
        assert_eq!(extract_foreground(&seq, &bg, 2.0).unwrap().count(0), 1);
        assert!(extract_foreground(&seq, &bg, 0.0).is_err());
    }

    #[test]
    fn mask_gray_roundtrip() {
        let mask = ForegroundMask {
            height: 2,
            width: 2,
            frames: vec![vec![true, false, false, true]],
        };
        let gray = mask.to_gray(0);
        assert_eq!(gray.pixels, vec![255, 0, 0, 255]);
    }

    #[test]
    fn slice_takes_a_frame_range() {
        let seq = two_frame_sequence();
        let s = seq.slice(1, 2).unwrap();
        assert_eq!(s.n_frames(), 1);
        assert_eq!(s.frame(0), seq.frame(1));
        assert!(seq.slice(1, 1).is_err());
        assert!(seq.slice(0, 3).is_err());
    }

    #[test]
    fn tampering_stays_out_of_the_clean_frames_at_high_alpha() {
        // Static scene, salt-and-pepper on three consecutive frames. The
        // robust background on the clean frames stays within 2% RMS of the
        // true static image; the classical fit smears the tampering across
        // every frame and lands strictly worse.
        let mut spec = crate::eval::SynthSpec::new(16, 16, 12);
        spec.background_rank = 1;
        spec.object_size = 0;
        spec.noise_sd = 0.0;
        spec.contamination = crate::eval::Contamination::SaltPepper { density: 0.2 };
        spec.contaminated_frames = vec![5, 6, 7];
        spec.seed = 31;
        let video = crate::eval::generate_synthetic(&spec).unwrap();
        let truth = matricize(&video.clean_background);

        let clean_rms = |alpha: f64| -> f64 {
            let mut cfg = BackgroundConfig::new(alpha);
            cfg.rank = Some(1);
            cfg.max_iter = 200;
            let bg = model_background(&video.frames, &cfg).unwrap();
            let mut sq = 0.0;
            let mut count = 0usize;
            for t in (0..12).filter(|t| !spec.contaminated_frames.contains(t)) {
                for (a, b) in bg.background.column(t).iter().zip(truth.column(t)) {
                    sq += (a - b) * (a - b);
                    count += 1;
                }
            }
            (sq / count as f64).sqrt()
        };

        let robust = clean_rms(0.75);
        let classical = clean_rms(0.0);
        assert!(robust <= 0.02, "robust clean-frame RMS {robust}");
        assert!(classical > robust, "classical RMS {classical} not above robust {robust}");
    }

    #[test]
    fn noiseless_moving_square_is_masked_perfectly() {
        // Without observation noise the robust rank-one fit interpolates the
        // background exactly and the only residuals are the object cells, so
        // even a low threshold recovers the ground-truth mask bit for bit.
        let mut spec = crate::eval::SynthSpec::new(24, 24, 10);
        spec.object_size = 5;
        spec.object_velocity = (1, 1);
        spec.noise_sd = 0.0;
        spec.seed = 7;
        let video = crate::eval::generate_synthetic(&spec).unwrap();
        let mut cfg = BackgroundConfig::new(0.75);
        cfg.rank = Some(1);
        cfg.max_iter = 200;
        let bg = model_background(&video.frames, &cfg).unwrap();
        let mask = extract_foreground(&video.frames, &bg, 2.0).unwrap();
        let metrics = crate::eval::evaluate_mask(&mask, &video.truth).unwrap();
        assert!(metrics.pooled.f1 >= 0.9, "pooled F1 {}", metrics.pooled.f1);
        assert_eq!(metrics.pooled.f1, 1.0);
    }

    #[test]
    fn background_scales_with_the_data_before_clamping() {
        let mut spec = crate::eval::SynthSpec::new(12, 12, 8);
        spec.object_size = 3;
        spec.object_velocity = (0, 1);
        spec.noise_sd = 0.01;
        spec.seed = 13;
        let video = crate::eval::generate_synthetic(&spec).unwrap();
        let half = FrameSequence::new(
            12,
            12,
            (0..8).map(|t| video.frames.frame(t).iter().map(|v| 0.5 * v).collect()).collect(),
        )
        .unwrap();

        let mut cfg = BackgroundConfig::new(0.75);
        cfg.rank = Some(1);
        cfg.max_iter = 300;
        let bg = model_background(&video.frames, &cfg).unwrap();
        let bg_half = model_background(&half, &cfg).unwrap();
        for (a, b) in bg_half.background.values().iter().zip(bg.background.values()) {
            assert!((a - 0.5 * b).abs() <= 1e-9, "half-scale background {a} vs {}", 0.5 * b);
        }
    }
}
