//! Command-line surface: subcommands, flags, and the small parsers behind
//! flags that take "auto", comma-separated lists, or `AxBxC` shapes.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "rsvd",
    version,
    about = "Robust SVD by density power divergence: decomposition, video background modelling, evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose a matrix file (.csv or .bin) into a robust SVD model.
    Decompose(DecomposeArgs),
    /// Fit a low-rank background to a directory of PGM frames and extract
    /// foreground masks, batch by batch.
    Background(BackgroundArgs),
    /// Score predicted masks against ground truth, or sweep the detection
    /// threshold over a finished background run.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic grayscale scene with ground-truth masks.
    Synth(SynthArgs),
    /// Grid-search the robustness parameter alpha on a matrix file.
    SelectAlpha(SelectAlphaArgs),
    /// Measure bias and RMSE of the leading singular value across sizes.
    Consistency(ConsistencyArgs),
    /// Time full decompositions across frame shapes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Input matrix: .csv (rows of comma-separated numbers) or .bin.
    pub input: PathBuf,
    /// Directory for model.json (and selection.json under --alpha auto).
    #[arg(short, long, default_value = ".")]
    pub out: PathBuf,
    /// Robustness parameter in [0, 1], or "auto" to pick it on --grid.
    #[arg(long, default_value = "0.75")]
    pub alpha: AlphaArg,
    /// Component count, or "auto" to take the smallest classical rank
    /// carrying a 1 - epsilon share of the squared Frobenius mass.
    #[arg(long, default_value = "auto")]
    pub rank: RankArg,
    /// Spectrum-share tolerance for --rank auto.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Candidate grid for --alpha auto; must contain 1.
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    pub grid: FloatList,
    /// Convergence tolerance of the alternating fit.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Iteration cap per component.
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct SelectAlphaArgs {
    /// Input matrix: .csv or .bin.
    pub input: PathBuf,
    /// Directory for selection.json.
    #[arg(short, long, default_value = ".")]
    pub out: PathBuf,
    /// Component count, or "auto" (see `rsvd decompose --help`).
    #[arg(long, default_value = "auto")]
    pub rank: RankArg,
    /// Spectrum-share tolerance for --rank auto.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Candidate grid; must contain 1.
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    pub grid: FloatList,
    /// Convergence tolerance of the alternating fits.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Iteration cap per component.
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct BackgroundArgs {
    /// Directory of equally sized PGM frames (lexicographic order).
    pub frames: PathBuf,
    /// Output directory; gets background/, foreground/, mask/, per-batch
    /// model and residual files, and run.json.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Robustness parameter in [0, 1].
    #[arg(long, default_value_t = 0.75)]
    pub alpha: f64,
    /// Background rank per batch, or "auto".
    #[arg(long, default_value = "auto")]
    pub rank: RankArg,
    /// Spectrum-share tolerance for --rank auto.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Foreground threshold in noise standard deviations.
    #[arg(long, default_value_t = 3.0)]
    pub k_sigma: f64,
    /// Frames per independent fit.
    #[arg(long, default_value_t = 120)]
    pub batch: usize,
    /// Convergence tolerance of the alternating fit.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Iteration cap per component.
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["pred", "run"])))]
pub struct EvaluateArgs {
    /// Directory of predicted masks (any pixel >= 128 is foreground).
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Background run directory (as written by `rsvd background`); sweeps
    /// --sweep thresholds over its stored residuals.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Ground-truth mask directory; filenames must match the predictions.
    #[arg(long)]
    pub truth: PathBuf,
    /// k-sigma grid for --run mode.
    #[arg(long, default_value = "1,1.5,2,2.5,3,3.5,4,4.5,5")]
    pub sweep: FloatList,
    /// Also write per-frame scores as per_frame.csv (--pred mode).
    #[arg(long)]
    pub csv: bool,
    /// Directory for metrics.json or sweep.json.
    #[arg(short, long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; gets frames/, truth/, clean/ and spec.json.
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 40)]
    pub frames: usize,
    /// Exact rank of the matricized clean background.
    #[arg(long, default_value_t = 1)]
    pub background_rank: usize,
    /// Side of the bright moving square; 0 disables the object.
    #[arg(long, default_value_t = 7)]
    pub object_size: usize,
    /// Per-frame object displacement as "dy,dx".
    #[arg(long, default_value = "0,1")]
    pub velocity: IntPair,
    /// Standard deviation of the Gaussian observation noise.
    #[arg(long, default_value_t = 0.02)]
    pub noise_sd: f64,
    /// Tampering applied to --tampered frames.
    #[arg(long, value_enum, default_value_t = ContaminationKind::None)]
    pub contamination: ContaminationKind,
    /// Pixel flip probability for salt-pepper contamination.
    #[arg(long, default_value_t = 0.1)]
    pub density: f64,
    /// Noise standard deviation for gaussian contamination.
    #[arg(long, default_value_t = 0.1)]
    pub sd: f64,
    /// Frame displacement "dy,dx" for shift contamination.
    #[arg(long, default_value = "2,2")]
    pub shift: IntPair,
    /// Comma-separated 0-based frame indices the contamination hits.
    #[arg(long, default_value = "")]
    pub tampered: IndexList,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ConsistencyArgs {
    /// Directory for consistency.json.
    #[arg(short, long, default_value = ".")]
    pub out: PathBuf,
    /// Comma-separated matrix sizes (each n gives an n x n cell).
    #[arg(long, default_value = "50,100,200,400")]
    pub sizes: IndexList,
    /// Replications per size.
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Directory for bench.json.
    #[arg(short, long, default_value = ".")]
    pub out: PathBuf,
    /// Comma-separated frame shapes, each "HEIGHTxWIDTHxFRAMES".
    #[arg(long, default_value = "32x32x16,32x32x32,64x64x32")]
    pub shapes: ShapeList,
    #[arg(long, default_value_t = 0.75)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1)]
    pub rank: usize,
    /// Timed repetitions per shape (at least 5 for a usable spread).
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Robustness parameter: a number or "auto".
#[derive(Debug, Clone, Copy)]
pub enum AlphaArg {
    Auto,
    Value(f64),
}

impl FromStr for AlphaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(AlphaArg::Auto);
        }
        s.parse::<f64>()
            .map(AlphaArg::Value)
            .map_err(|_| format!("expected a number or \"auto\", got {s:?}"))
    }
}

/// Component count: a positive integer or "auto".
#[derive(Debug, Clone, Copy)]
pub enum RankArg {
    Auto,
    Value(usize),
}

impl FromStr for RankArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(RankArg::Auto);
        }
        s.parse::<usize>()
            .map(RankArg::Value)
            .map_err(|_| format!("expected a positive integer or \"auto\", got {s:?}"))
    }
}

/// Comma-separated floating-point list, e.g. "0,0.5,1".
#[derive(Debug, Clone)]
pub struct FloatList(pub Vec<f64>);

impl FromStr for FloatList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|_| format!("bad number {t:?}")))
            .collect::<Result<Vec<_>, _>>()
            .map(FloatList)
    }
}

/// Comma-separated list of nonnegative integers; empty means none.
#[derive(Debug, Clone)]
pub struct IndexList(pub Vec<usize>);

impl FromStr for IndexList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<usize>().map_err(|_| format!("bad index {t:?}")))
            .collect::<Result<Vec<_>, _>>()
            .map(IndexList)
    }
}

/// Signed integer pair "a,b" (velocities and shifts).
#[derive(Debug, Clone, Copy)]
pub struct IntPair(pub i64, pub i64);

impl FromStr for IntPair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(format!("expected \"dy,dx\", got {s:?}"));
        }
        let dy = parts[0].parse().map_err(|_| format!("bad integer {:?}", parts[0]))?;
        let dx = parts[1].parse().map_err(|_| format!("bad integer {:?}", parts[1]))?;
        Ok(IntPair(dy, dx))
    }
}

/// Comma-separated "HxWxF" shape list.
#[derive(Debug, Clone)]
pub struct ShapeList(pub Vec<(usize, usize, usize)>);

impl FromStr for ShapeList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                let dims: Vec<&str> = t.split('x').collect();
                if dims.len() != 3 {
                    return Err(format!("expected HEIGHTxWIDTHxFRAMES, got {t:?}"));
                }
                let parse = |d: &str| d.parse::<usize>().map_err(|_| format!("bad dimension {d:?}"));
                Ok((parse(dims[0])?, parse(dims[1])?, parse(dims[2])?))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(ShapeList)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ContaminationKind {
    None,
    SaltPepper,
    Cover,
    Blur,
    Gaussian,
    Shift,
}

impl fmt::Display for ContaminationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ContaminationKind::None => "none",
            ContaminationKind::SaltPepper => "salt-pepper",
            ContaminationKind::Cover => "cover",
            ContaminationKind::Blur => "blur",
            ContaminationKind::Gaussian => "gaussian",
            ContaminationKind::Shift => "shift",
        };
        f.write_str(name)
    }
}
