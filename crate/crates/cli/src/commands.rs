use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lbc_core::evalcorrect::{
    format_error_csv, parse_error_csv, predict_errors, SequenceData, SEGMENT_LENGTHS,
};
use lbc_core::features::{compute_features, format_feature_csv, parse_feature_csv, DEFAULT_Z_THRESHOLD};
use lbc_core::gp::{fit, Dof, GpModel};
use lbc_core::odometry::{preprocess, FrameDiagnostics, FrameStatus};
use lbc_core::pointcloud::{list_sequence_frames, read_kitti_bin, write_kitti_bin, PointCloudError};
use lbc_core::synth::{generate_frames, path_with_turn, straight_path, weaving_path};
use lbc_core::trajectory::{read_kitti_poses, write_kitti_poses, TrajectoryError};
use lbc_core::{
    apply_correction, compute_error_samples, make_training_set, segment_errors, EvalError, FeatureVector, Odometry,
    SceneSpec, SegmentErrorReport, Trajectory, Twist,
};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::CliError;

/// Whether any frame was flagged during odometry.
pub enum Outcome {
    Clean,
    Flagged(usize),
}

fn read_poses(path: &Path) -> Result<Trajectory, CliError> {
    read_kitti_poses(path).map_err(|e| match e {
        TrajectoryError::Io { .. } => CliError::Io(e.to_string()),
        e => CliError::data(path.display(), e),
    })
}

fn write_poses(traj: &Trajectory, path: &Path) -> Result<(), CliError> {
    create_parent(path)?;
    write_kitti_poses(traj, path).map_err(|e| CliError::Io(e.to_string()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    create_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

fn read_features(path: &Path) -> Result<Vec<FeatureVector>, CliError> {
    parse_feature_csv(&read_text(path)?).map_err(|e| CliError::data(path.display(), e))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn eval_error(context: impl std::fmt::Display, e: EvalError) -> CliError {
    CliError::data(context, e)
}

fn sequence_frames(cfg: &PipelineConfig, seq: &str) -> Result<Vec<PathBuf>, CliError> {
    let dir = cfg.resolve_sequence(seq);
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("{} is not a directory", dir.display())));
    }
    list_sequence_frames(&dir).map_err(|e| match e {
        PointCloudError::NoFrames(_) => CliError::Usage(e.to_string()),
        e => CliError::Io(e.to_string()),
    })
}

#[derive(Serialize)]
struct DiagnosticsRow<'a> {
    frame: usize,
    keypoints: usize,
    matches: usize,
    rounds: usize,
    iterations: usize,
    inliers: usize,
    final_cost: f64,
    condition_number: f64,
    status: &'static str,
    detail: &'a str,
}

impl<'a> From<&'a FrameDiagnostics> for DiagnosticsRow<'a> {
    fn from(d: &'a FrameDiagnostics) -> Self {
        let detail = match &d.status {
            FrameStatus::BadFrame(reason) => reason.as_str(),
            _ => "",
        };
        DiagnosticsRow {
            frame: d.frame_index,
            keypoints: d.keypoints,
            matches: d.matches,
            rounds: d.rounds,
            iterations: d.iterations,
            inliers: d.inliers,
            final_cost: d.final_cost,
            condition_number: d.condition_number,
            status: d.status.label(),
            detail,
        }
    }
}

/// Runs odometry over a sequence directory, writing `poses.txt`,
/// `diagnostics.csv` and `features.csv` into `out_dir`.
pub fn odom(cfg: &PipelineConfig, seq: &str, out_dir: &Path) -> Result<Outcome, CliError> {
    let files = sequence_frames(cfg, seq)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut odometry = Odometry::new(cfg.odometry());
    let mut features = Vec::with_capacity(files.len());
    for (i, path) in files.iter().enumerate() {
        match read_kitti_bin(path, i) {
            Ok(frame) => {
                if let Some(p) = odometry.push_frame(frame) {
                    features.push(compute_features(&p.frame, &p.keys, DEFAULT_Z_THRESHOLD));
                }
            }
            Err(e) => {
                warn!("frame {i} ({}): {e}; extrapolating", path.display());
                odometry.push_unusable(i, e.to_string());
            }
        }
        if (i + 1) % 100 == 0 {
            info!("{} / {} frames", i + 1, files.len());
        }
    }
    let out = odometry.finish();
    write_poses(&out.trajectory, &out_dir.join("poses.txt"))?;
    let rows: Vec<DiagnosticsRow> = out.diagnostics.iter().map(DiagnosticsRow::from).collect();
    write_csv(&out_dir.join("diagnostics.csv"), &rows)?;
    write_text(&out_dir.join("features.csv"), &format_feature_csv(&features))?;
    let flagged = out.flagged_frames();
    info!("{} poses written, {flagged} flagged frames", out.trajectory.len());
    Ok(if flagged > 0 { Outcome::Flagged(flagged) } else { Outcome::Clean })
}

/// Feature table of a sequence, frames processed in parallel. Frames that
/// cannot be read or reduced to keypoints have no row.
pub fn features(cfg: &PipelineConfig, seq: &str, out: &Path) -> Result<(), CliError> {
    let files = sequence_frames(cfg, seq)?;
    let odom_cfg = cfg.odometry();
    let rows: Vec<Option<FeatureVector>> = files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let processed = read_kitti_bin(path, i)
                .map_err(|e| e.to_string())
                .and_then(|f| preprocess(f, &odom_cfg));
            match processed {
                Ok(p) => Some(compute_features(&p.frame, &p.keys, DEFAULT_Z_THRESHOLD)),
                Err(e) => {
                    warn!("frame {i} ({}): {e}; no feature row", path.display());
                    None
                }
            }
        })
        .collect();
    let rows: Vec<FeatureVector> = rows.into_iter().flatten().collect();
    write_text(out, &format_feature_csv(&rows))
}

pub fn errors(cfg: &PipelineConfig, odom: &str, gt: &str, out: &Path) -> Result<(), CliError> {
    let odom_traj = read_poses(&cfg.resolve_poses(odom))?;
    let gt_traj = read_poses(&cfg.resolve_poses(gt))?;
    let samples = compute_error_samples(&odom_traj, &gt_traj, cfg.kappa).map_err(|e| eval_error("errors", e))?;
    write_text(out, &format_error_csv(&samples))
}

/// One sequence given to `train`.
pub struct SequenceFiles {
    pub id: String,
    pub features: PathBuf,
    pub errors: PathBuf,
}

#[derive(Serialize)]
struct ModelReport {
    n: usize,
    log_marginal_likelihood: f64,
    length_scales: Vec<f64>,
    signal_std: f64,
    noise_std: f64,
    jitter: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation_rmse: Option<f64>,
    n_validation: usize,
}

#[derive(Serialize)]
struct TrainReport {
    sequences: Vec<String>,
    holdout: Option<String>,
    models: BTreeMap<&'static str, ModelReport>,
}

pub fn model_file_name(dof: Dof) -> String {
    format!("{}.json", dof.name())
}

/// Fits the z, pitch and roll models and writes them with `train_report.json`.
pub fn train(
    cfg: &PipelineConfig,
    sequences: &[SequenceFiles],
    holdout: Option<&str>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let data: Vec<SequenceData> = sequences
        .par_iter()
        .map(|s| {
            let features = read_features(&s.features)?;
            let samples = parse_error_csv(&read_text(&s.errors)?).map_err(|e| CliError::data(s.errors.display(), e))?;
            Ok(SequenceData {
                id: s.id.clone(),
                features,
                samples,
            })
        })
        .collect::<Result<_, CliError>>()?;
    let set = make_training_set(&data, holdout).map_err(|e| eval_error("training set", e))?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let opts = cfg.fit_options();
    let mut models = BTreeMap::new();
    for dof in Dof::ALL {
        let table = set.train_for(dof);
        info!("fitting {} on {} rows", dof.name(), table.len());
        let model =
            fit(&table.x, &table.y, None, &opts, dof).map_err(|e| CliError::data(format!("{} model", dof.name()), e))?;
        let validation = set.validation_for(dof);
        let validation_rmse = if validation.is_empty() {
            None
        } else {
            let pred = model
                .predict_mean(&validation.x)
                .map_err(|e| CliError::data("validation", e))?;
            let sse: f64 = (&pred - &validation.y).iter().map(|r| r * r).sum();
            Some((sse / validation.len() as f64).sqrt())
        };
        let path = out_dir.join(model_file_name(dof));
        fs::write(&path, model.save()).map_err(|e| CliError::io(&path, e))?;
        models.insert(
            dof.name(),
            ModelReport {
                n: model.n_train(),
                log_marginal_likelihood: model.log_marginal_likelihood,
                length_scales: model.hyper.length_scales(),
                signal_std: model.hyper.signal_std(),
                noise_std: model.hyper.noise_std(),
                jitter: model.jitter,
                validation_rmse,
                n_validation: validation.len(),
            },
        );
    }
    let report = TrainReport {
        sequences: sequences.iter().map(|s| s.id.clone()).collect(),
        holdout: holdout.map(str::to_string),
        models,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    write_text(&out_dir.join("train_report.json"), &text)
}

pub fn load_models(dir: &Path) -> Result<Vec<GpModel>, CliError> {
    Dof::ALL
        .iter()
        .map(|&dof| {
            let path = dir.join(model_file_name(dof));
            let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
            let model = GpModel::load(&bytes).map_err(|e| CliError::data(path.display(), e))?;
            if model.dof != dof {
                return Err(CliError::Data(format!(
                    "{} holds a {} model",
                    path.display(),
                    model.dof.name()
                )));
            }
            Ok(model)
        })
        .collect()
}

/// Where `correct` gets its window-error predictions.
pub enum PredictionSource {
    Models { dir: PathBuf, features: PathBuf },
    /// Precomputed window errors in the error-table format.
    Table(PathBuf),
}

pub fn correct(cfg: &PipelineConfig, poses: &str, source: &PredictionSource, out: &Path) -> Result<(), CliError> {
    let odom = read_poses(&cfg.resolve_poses(poses))?;
    let kappa = cfg.kappa;
    if kappa > odom.len() {
        return Err(eval_error("correct", EvalError::InvalidKappa { kappa, len: odom.len() }));
    }
    let frames = kappa..odom.len();
    let predictions: BTreeMap<usize, Twist> = match source {
        PredictionSource::Models { dir, features } => {
            let models = load_models(dir)?;
            let features = read_features(features)?;
            predict_errors(&models, &features, frames).map_err(|e| eval_error("prediction", e))?
        }
        PredictionSource::Table(path) => {
            let samples = parse_error_csv(&read_text(path)?).map_err(|e| CliError::data(path.display(), e))?;
            if let Some(s) = samples.iter().find(|s| s.kappa != kappa) {
                return Err(CliError::Data(format!(
                    "{}: prediction for frame {} uses window {}, expected {kappa}",
                    path.display(),
                    s.frame_index,
                    s.kappa
                )));
            }
            samples.into_iter().map(|s| (s.frame_index, s.xi_err)).collect()
        }
    };
    let corrected = apply_correction(&odom, &predictions, kappa).map_err(|e| eval_error("correction", e))?;
    if !predictions.is_empty() {
        let n = predictions.len() as f64;
        for dof in Dof::ALL {
            let k = dof.twist_index();
            let mean = predictions.values().map(|t| t.to_array()[k].abs()).sum::<f64>() / n;
            info!("mean |prediction| {}: {mean:e}", dof.name());
        }
    }
    write_poses(&corrected, out)
}

/// Segment report, or an empty one with a warning when the path is too short.
fn report_or_empty(odom: &Trajectory, gt: &Trajectory) -> Result<SegmentErrorReport, CliError> {
    match segment_errors(odom, gt) {
        Ok(r) => Ok(r),
        Err(EvalError::PathTooShort { length }) => {
            warn!("ground-truth path is {length:.1} m, shorter than {} m; report is empty", SEGMENT_LENGTHS[0]);
            Ok(SegmentErrorReport::empty())
        }
        Err(e) => Err(eval_error("eval", e)),
    }
}

#[derive(Serialize)]
struct LengthRow {
    length: u32,
    before: Option<f64>,
    after: Option<f64>,
}

/// Scores `odom` (and optionally `corrected`) against `gt`. Writes
/// `report.json`, `report_corrected.json` and `per_length.csv` when an output
/// directory is given. Returns the reports.
pub fn eval(
    cfg: &PipelineConfig,
    odom: &str,
    gt: &str,
    corrected: Option<&str>,
    out_dir: Option<&Path>,
) -> Result<(SegmentErrorReport, Option<SegmentErrorReport>), CliError> {
    let gt_traj = read_poses(&cfg.resolve_poses(gt))?;
    let before = report_or_empty(&read_poses(&cfg.resolve_poses(odom))?, &gt_traj)?;
    let after = match corrected {
        Some(c) => Some(report_or_empty(&read_poses(&cfg.resolve_poses(c))?, &gt_traj)?),
        None => None,
    };
    if let Some(dir) = out_dir {
        write_text(&dir.join("report.json"), &before.to_json())?;
        if let Some(a) = &after {
            write_text(&dir.join("report_corrected.json"), &a.to_json())?;
        }
        let rows: Vec<LengthRow> = SEGMENT_LENGTHS
            .iter()
            .filter(|&&l| before.get(l).is_some())
            .map(|&l| LengthRow {
                length: l,
                before: before.get(l),
                after: after.as_ref().and_then(|a| a.get(l)),
            })
            .collect();
        write_length_csv(&dir.join("per_length.csv"), &rows, after.is_some())?;
    }
    Ok((before, after))
}

fn write_length_csv(path: &Path, rows: &[LengthRow], with_after: bool) -> Result<(), CliError> {
    let mut text = String::from(if with_after { "length,before,after\n" } else { "length,error\n" });
    for r in rows {
        let before = r.before.expect("filtered");
        match (with_after, r.after) {
            (true, Some(a)) => text.push_str(&format!("{},{before},{a}\n", r.length)),
            (true, None) => text.push_str(&format!("{},{before},\n", r.length)),
            (false, _) => text.push_str(&format!("{},{before}\n", r.length)),
        }
    }
    write_text(path, &text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Corridor,
    Varied,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum PathShape {
    Straight,
    Weaving,
    Turn,
}

pub struct SynthArgs {
    pub scene: Option<PathBuf>,
    pub preset: Preset,
    pub path: PathShape,
    pub frames: usize,
    pub step: f64,
}

const SYNTH_CHUNK: usize = 64;

/// Writes `velodyne/NNNNNN.bin`, the ground truth `poses.txt` and `scene.json`.
pub fn synth(cfg: &PipelineConfig, args: &SynthArgs, out_dir: &Path) -> Result<(), CliError> {
    if args.frames == 0 {
        return Err(CliError::Usage("--frames must be positive".into()));
    }
    if !(args.step > 0.0 && args.step.is_finite()) {
        return Err(CliError::Usage("--step must be positive".into()));
    }
    let scene = match &args.scene {
        Some(path) => SceneSpec::from_json(&read_text(path)?).map_err(|e| CliError::data(path.display(), e))?,
        None => match args.preset {
            Preset::Corridor => SceneSpec::corridor_with_boxes(cfg.seed),
            Preset::Varied => SceneSpec::varied_route(args.frames as f64 * args.step, cfg.seed),
        },
    };
    let n = args.frames;
    let gt = match args.path {
        PathShape::Straight => straight_path(n, args.step),
        PathShape::Weaving => weaving_path(n, args.step, 0.05, 200.0),
        PathShape::Turn => {
            let third = n / 3;
            path_with_turn(third, third, n - 1 - 2 * third, args.step, std::f64::consts::FRAC_PI_2)
        }
    };
    let velodyne = out_dir.join("velodyne");
    fs::create_dir_all(&velodyne).map_err(|e| CliError::io(&velodyne, e))?;
    for (c, poses) in gt.poses.chunks(SYNTH_CHUNK).enumerate() {
        let first = c * SYNTH_CHUNK;
        let frames = generate_frames(&scene, poses, first).map_err(|e| CliError::data("scene", e))?;
        for f in &frames {
            let path = velodyne.join(format!("{:06}.bin", f.frame_index));
            write_kitti_bin(f, &path).map_err(|e| CliError::Io(e.to_string()))?;
        }
        info!("{} / {n} sweeps", first + frames.len());
    }
    write_poses(&gt, &out_dir.join("poses.txt"))?;
    write_text(&out_dir.join("scene.json"), &scene.to_json())
}

