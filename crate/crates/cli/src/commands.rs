//! Command implementations. Each command validates its flags first (those
//! errors exit 4), then loads inputs (errors exit 2), then runs the library
//! and writes its artifacts.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use rsvd_core::eval::{
    consistency_experiment, evaluate_mask, generate_synthetic, timing_benchmark, Contamination,
    MaskMetrics, SynthSpec,
};
use rsvd_core::io::{
    read_matrix_bin, read_matrix_csv, write_atomic, write_matrix_bin, write_model_json,
};
use rsvd_core::pgm::{self, GrayFrame};
use rsvd_core::select::{select_alpha, select_rank, AlphaReport};
use rsvd_core::video::{
    extract_foreground, model_background, BackgroundConfig, ForegroundMask, FrameSequence,
};
use rsvd_core::{DataMatrix, Error, Result, RSvdConfig, RSvdModel};

use crate::args::{
    AlphaArg, BackgroundArgs, BenchArgs, Cli, Command, ConsistencyArgs, ContaminationKind,
    DecomposeArgs, EvaluateArgs, RankArg, SelectAlphaArgs, SynthArgs,
};
use crate::manifest::{sweep_k_sigma, BatchEntry, RunManifest};

/// Whether every fitted component converged within its iteration budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Clean,
    NotConverged,
}

pub fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Decompose(a) => cmd_decompose(a),
        Command::Background(a) => cmd_background(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::SelectAlpha(a) => cmd_select_alpha(a),
        Command::Consistency(a) => cmd_consistency(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing

fn misuse(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

fn check_unit_interval(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || !(0.0..=1.0).contains(&v) {
        return Err(misuse(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v <= 0.0 {
        return Err(misuse(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn check_epsilon(rank: RankArg, epsilon: f64) -> Result<()> {
    if matches!(rank, RankArg::Auto) && !(epsilon.is_finite() && 0.0 < epsilon && epsilon < 1.0) {
        return Err(misuse(format!(
            "epsilon must lie strictly between 0 and 1, got {epsilon}"
        )));
    }
    Ok(())
}

fn check_fit_controls(tol: f64, max_iter: usize) -> Result<()> {
    check_positive("tol", tol)?;
    if max_iter == 0 {
        return Err(misuse("max-iter must be at least 1"));
    }
    Ok(())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(misuse("the alpha grid is empty"));
    }
    for &g in grid {
        check_unit_interval("every grid value", g)?;
    }
    if !grid.iter().any(|&g| (g - 1.0).abs() <= 1e-12) {
        return Err(misuse("the alpha grid must contain 1 (the reference fit)"));
    }
    Ok(())
}

/// Load a matrix by extension. Errors raised here are input problems.
fn read_matrix(path: &Path) -> Result<DataMatrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_matrix_csv(path),
        Some("bin") => read_matrix_bin(path),
        _ => Err(Error::Format(format!(
            "{}: unsupported input extension (expected .csv or .bin)",
            path.display()
        ))),
    }
}

/// Reclassify shape errors raised while LOADING files: at that point a
/// dimension mismatch describes the data, not the caller's parameters.
fn input_shaped(e: Error) -> Error {
    match e {
        Error::DimensionMismatch(msg) => Error::InvalidInput(msg),
        other => other,
    }
}

/// Filenames (not paths) of the PGM frames in a directory, sorted.
fn frame_names(dir: &Path) -> Result<Vec<String>> {
    pgm::list_frames(dir)?
        .iter()
        .map(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(str::to_owned)
                .ok_or_else(|| Error::Format(format!("{}: non-UTF-8 filename", p.display())))
        })
        .collect()
}

fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("serialization failed: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn model_status(model: &RSvdModel) -> Status {
    if model.truncated || model.converged.iter().any(|&c| !c) {
        Status::NotConverged
    } else {
        Status::Clean
    }
}

// ---------------------------------------------------------------------------
// decompose / select-alpha

fn cmd_decompose(a: DecomposeArgs) -> Result<Status> {
    if let AlphaArg::Value(v) = a.alpha {
        check_unit_interval("alpha", v)?;
    }
    if let RankArg::Value(0) = a.rank {
        return Err(misuse("rank must be at least 1"));
    }
    check_epsilon(a.rank, a.epsilon)?;
    check_fit_controls(a.tol, a.max_iter)?;
    if matches!(a.alpha, AlphaArg::Auto) {
        check_grid(&a.grid.0)?;
    }

    let x = read_matrix(&a.input).map_err(input_shaped)?;
    fs::create_dir_all(&a.out)?;
    let template = RSvdConfig::new(0.0, 1)
        .with_tol(a.tol)
        .with_max_iter(a.max_iter);
    let (rank, selected_epsilon) = match a.rank {
        RankArg::Value(r) => (r, None),
        RankArg::Auto => (select_rank(&x, a.epsilon)?.chosen_rank, Some(a.epsilon)),
    };
    let (alpha, selection) = match a.alpha {
        AlphaArg::Value(v) => (v, None),
        AlphaArg::Auto => {
            let sel = select_alpha(&x, &a.grid.0, rank, &template)?;
            (sel.chosen_alpha, Some(sel))
        }
    };
    let config = RSvdConfig { alpha, rank, ..template };
    let model = rsvd_core::rsvd_dpd(&x, &config)?;
    let model_path = a.out.join("model.json");
    write_model_json(&model_path, &model)?;
    println!("wrote {} (alpha {alpha}, rank {})", model_path.display(), model.rank());
    if let Some(sel) = selection {
        let report = AlphaReport {
            grid: sel.grid,
            scores: sel.scores,
            converged: sel.converged,
            chosen_alpha: sel.chosen_alpha,
            chosen_rank: rank,
            epsilon: selected_epsilon,
        };
        let path = a.out.join("selection.json");
        write_json_pretty(&path, &report)?;
        println!("wrote {}", path.display());
    }
    Ok(model_status(&model))
}

fn cmd_select_alpha(a: SelectAlphaArgs) -> Result<Status> {
    if let RankArg::Value(0) = a.rank {
        return Err(misuse("rank must be at least 1"));
    }
    check_epsilon(a.rank, a.epsilon)?;
    check_fit_controls(a.tol, a.max_iter)?;
    check_grid(&a.grid.0)?;

    let x = read_matrix(&a.input).map_err(input_shaped)?;
    fs::create_dir_all(&a.out)?;
    let template = RSvdConfig::new(0.0, 1)
        .with_tol(a.tol)
        .with_max_iter(a.max_iter);
    let (rank, selected_epsilon) = match a.rank {
        RankArg::Value(r) => (r, None),
        RankArg::Auto => (select_rank(&x, a.epsilon)?.chosen_rank, Some(a.epsilon)),
    };
    let sel = select_alpha(&x, &a.grid.0, rank, &template)?;
    let chosen_converged = sel
        .grid
        .iter()
        .position(|&g| g == sel.chosen_alpha)
        .map(|i| sel.converged[i])
        .unwrap_or(false);
    let report = AlphaReport {
        grid: sel.grid,
        scores: sel.scores,
        converged: sel.converged,
        chosen_alpha: sel.chosen_alpha,
        chosen_rank: rank,
        epsilon: selected_epsilon,
    };
    let path = a.out.join("selection.json");
    write_json_pretty(&path, &report)?;
    println!("wrote {} (alpha {}, rank {rank})", path.display(), report.chosen_alpha);
    Ok(if chosen_converged { Status::Clean } else { Status::NotConverged })
}

// ---------------------------------------------------------------------------
// background

fn cmd_background(a: BackgroundArgs) -> Result<Status> {
    check_unit_interval("alpha", a.alpha)?;
    if let RankArg::Value(0) = a.rank {
        return Err(misuse("rank must be at least 1"));
    }
    check_epsilon(a.rank, a.epsilon)?;
    check_positive("k-sigma", a.k_sigma)?;
    if a.batch == 0 {
        return Err(misuse("batch must be at least 1"));
    }
    check_fit_controls(a.tol, a.max_iter)?;

    let seq = FrameSequence::from_pgm_dir(&a.frames).map_err(input_shaped)?;
    let names = frame_names(&a.frames)?;
    for sub in ["background", "foreground", "mask"] {
        fs::create_dir_all(a.out.join(sub))?;
    }

    let mut config = BackgroundConfig::new(a.alpha);
    config.rank = match a.rank {
        RankArg::Auto => None,
        RankArg::Value(r) => Some(r),
    };
    config.epsilon = a.epsilon;
    config.tol = a.tol;
    config.max_iter = a.max_iter;

    let n = seq.n_frames();
    let mut batches = Vec::new();
    let mut status = Status::Clean;
    let mut start = 0;
    while start < n {
        let index = batches.len();
        let end = (start + a.batch).min(n);
        let chunk = seq.slice(start, end)?;
        let bg = model_background(&chunk, &config)?;
        let mask = extract_foreground(&chunk, &bg, a.k_sigma)?;
        let bg_frames = bg.background_frames()?;
        for (t, name) in names[start..end].iter().enumerate() {
            pgm::write_frame(&a.out.join("background").join(name), &bg_frames.to_gray(t))?;
            mask.write_pgm(t, &a.out.join("mask").join(name))?;
            let original = chunk.to_gray(t);
            let cutout: Vec<u8> = original
                .pixels
                .iter()
                .zip(&mask.frames[t])
                .map(|(&p, &m)| if m { p } else { 0 })
                .collect();
            let fg = GrayFrame::new(seq.height(), seq.width(), cutout)?;
            pgm::write_frame(&a.out.join("foreground").join(name), &fg)?;
        }
        let model_file = format!("model_batch_{index:03}.json");
        let residuals_file = format!("residuals_batch_{index:03}.bin");
        write_model_json(&a.out.join(&model_file), &bg.model)?;
        write_matrix_bin(&a.out.join(&residuals_file), &bg.residuals(&chunk)?)?;
        if model_status(&bg.model) == Status::NotConverged {
            status = Status::NotConverged;
        }
        batches.push(BatchEntry {
            index,
            frames: names[start..end].to_vec(),
            model_file,
            residuals_file,
            rank: bg.model.rank(),
            sigma2: bg.model.sigma2,
            threshold: a.k_sigma * bg.model.sigma2.sqrt(),
            converged: model_status(&bg.model) == Status::Clean,
        });
        start = end;
    }
    let manifest = RunManifest {
        height: seq.height(),
        width: seq.width(),
        alpha: a.alpha,
        k_sigma: a.k_sigma,
        batch_size: a.batch,
        batches,
    };
    write_json_pretty(&a.out.join("run.json"), &manifest)?;
    println!(
        "wrote {} ({} frames in {} batches)",
        a.out.join("run.json").display(),
        n,
        manifest.batches.len()
    );
    Ok(status)
}

// ---------------------------------------------------------------------------
// evaluate

fn cmd_evaluate(a: EvaluateArgs) -> Result<Status> {
    fs::create_dir_all(&a.out)?;
    if let Some(pred_dir) = &a.pred {
        let metrics = score_directories(pred_dir, &a.truth)?;
        let path = a.out.join("metrics.json");
        write_json_pretty(&path, &metrics)?;
        if a.csv {
            let csv_path = a.out.join("per_frame.csv");
            write_per_frame_csv(&csv_path, &metrics)?;
            println!("wrote {}", csv_path.display());
        }
        println!(
            "wrote {} (pooled F1 {:.4} over {} frames)",
            path.display(),
            metrics.pooled.f1,
            metrics.per_frame.len()
        );
        Ok(Status::Clean)
    } else {
        for &k in &a.sweep.0 {
            check_positive("every sweep value", k)?;
        }
        if a.sweep.0.is_empty() {
            return Err(misuse("the sweep grid is empty"));
        }
        let run_dir = a.run.as_deref().expect("clap guarantees --run in this mode");
        let manifest: RunManifest = read_json(&run_dir.join("run.json"))?;
        check_truth_alignment(&manifest, &a.truth)?;
        let report = sweep_k_sigma(run_dir, &manifest, &a.truth, &a.sweep.0)?;
        let path = a.out.join("sweep.json");
        write_json_pretty(&path, &report)?;
        println!(
            "wrote {} (best k-sigma {} at pooled F1 {:.4})",
            path.display(),
            report.best_k_sigma,
            report.best_f1
        );
        Ok(Status::Clean)
    }
}

fn score_directories(pred_dir: &Path, truth_dir: &Path) -> Result<MaskMetrics> {
    let pred_names = frame_names(pred_dir)?;
    let truth_names = frame_names(truth_dir)?;
    if pred_names != truth_names {
        return Err(Error::InvalidInput(format!(
            "prediction and truth directories do not list the same frames \
             ({} vs {} files)",
            pred_names.len(),
            truth_names.len()
        )));
    }
    let pred = ForegroundMask::from_pgm_dir(pred_dir).map_err(input_shaped)?;
    let truth = ForegroundMask::from_pgm_dir(truth_dir).map_err(input_shaped)?;
    if (pred.height, pred.width) != (truth.height, truth.width) {
        return Err(Error::InvalidInput(format!(
            "predictions are {}x{}, truth masks are {}x{}",
            pred.height, pred.width, truth.height, truth.width
        )));
    }
    evaluate_mask(&pred, &truth)
}

fn check_truth_alignment(manifest: &RunManifest, truth_dir: &Path) -> Result<()> {
    let run_names: Vec<&String> = manifest.batches.iter().flat_map(|b| &b.frames).collect();
    let truth_names = frame_names(truth_dir)?;
    if run_names.len() != truth_names.len()
        || run_names.iter().zip(&truth_names).any(|(a, b)| *a != b)
    {
        return Err(Error::InvalidInput(format!(
            "run manifest and truth directory do not list the same frames \
             ({} vs {} files)",
            run_names.len(),
            truth_names.len()
        )));
    }
    Ok(())
}

fn write_per_frame_csv(path: &Path, metrics: &MaskMetrics) -> Result<()> {
    let mut text = String::from("frame,tp,fp,fn,precision,recall,f1\n");
    for m in &metrics.per_frame {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            m.frame, m.true_positives, m.false_positives, m.false_negatives,
            m.precision, m.recall, m.f1
        ));
    }
    write_atomic(path, text.as_bytes())
}

// ---------------------------------------------------------------------------
// synth

fn cmd_synth(a: SynthArgs) -> Result<Status> {
    let mut spec = SynthSpec::new(a.height, a.width, a.frames);
    spec.background_rank = a.background_rank;
    spec.object_size = a.object_size;
    spec.object_velocity = (a.velocity.0, a.velocity.1);
    spec.noise_sd = a.noise_sd;
    spec.seed = a.seed;
    spec.contamination = match a.contamination {
        ContaminationKind::None => Contamination::None,
        ContaminationKind::SaltPepper => Contamination::SaltPepper { density: a.density },
        ContaminationKind::Cover => Contamination::Cover,
        ContaminationKind::Blur => Contamination::DefocusBlur,
        ContaminationKind::Gaussian => Contamination::GaussianNoise { sd: a.sd },
        ContaminationKind::Shift => Contamination::Shift { dy: a.shift.0, dx: a.shift.1 },
    };
    spec.contaminated_frames = a.tampered.0.clone();
    // The generator validates the spec itself, but those are parameter
    // errors here, not data errors.
    let video = generate_synthetic(&spec).map_err(|e| match e {
        Error::InvalidInput(msg) => misuse(msg),
        other => other,
    })?;
    for sub in ["frames", "truth", "clean"] {
        fs::create_dir_all(a.out.join(sub))?;
    }
    for t in 0..a.frames {
        let name = format!("frame_{t:05}.pgm");
        pgm::write_frame(&a.out.join("frames").join(&name), &video.frames.to_gray(t))?;
        video.truth.write_pgm(t, &a.out.join("truth").join(&name))?;
        pgm::write_frame(&a.out.join("clean").join(&name), &video.clean_background.to_gray(t))?;
    }
    write_json_pretty(&a.out.join("spec.json"), &spec)?;
    println!(
        "wrote {} frames with truth and clean background under {}",
        a.frames,
        a.out.display()
    );
    Ok(Status::Clean)
}

// ---------------------------------------------------------------------------
// consistency / bench

fn cmd_consistency(a: ConsistencyArgs) -> Result<Status> {
    if a.sizes.0.is_empty() {
        return Err(misuse("need at least one size"));
    }
    if let Some(&small) = a.sizes.0.iter().find(|&&n| n < 6) {
        return Err(misuse(format!("sizes must be at least 6, got {small}")));
    }
    if a.reps == 0 {
        return Err(misuse("reps must be at least 1"));
    }
    check_unit_interval("alpha", a.alpha)?;

    fs::create_dir_all(&a.out)?;
    let report = consistency_experiment(&a.sizes.0, a.reps, a.alpha, a.seed)?;
    let path = a.out.join("consistency.json");
    write_json_pretty(&path, &report)?;
    let rmse: Vec<String> = report.rmse.iter().map(|r| format!("{r:.5}")).collect();
    println!("wrote {} (rmse {})", path.display(), rmse.join(", "));
    Ok(Status::Clean)
}

fn cmd_bench(a: BenchArgs) -> Result<Status> {
    if a.shapes.0.is_empty() {
        return Err(misuse("need at least one shape"));
    }
    if a.shapes.0.iter().any(|&(h, w, f)| h == 0 || w == 0 || f == 0) {
        return Err(misuse("shape dimensions must all be positive"));
    }
    check_unit_interval("alpha", a.alpha)?;
    if a.rank == 0 {
        return Err(misuse("rank must be at least 1"));
    }
    if a.runs < 5 {
        return Err(misuse(format!(
            "runs must be at least 5 for a usable spread, got {}",
            a.runs
        )));
    }

    fs::create_dir_all(&a.out)?;
    let report = timing_benchmark(&a.shapes.0, a.alpha, a.rank, a.runs, a.seed)?;
    let path = a.out.join("bench.json");
    write_json_pretty(&path, &report)?;
    for cell in &report.cells {
        println!(
            "{}x{}x{}: {:.4} s/frame (sd {:.4})",
            cell.height, cell.width, cell.n_frames,
            cell.seconds_per_frame_mean, cell.seconds_per_frame_sd
        );
    }
    println!("wrote {}", path.display());
    Ok(Status::Clean)
}
