//! Windowed odometry-error extraction, learned correction and segment scoring.
//!
//! Poses follow the KITTI convention: `P_τ` maps frame-τ coordinates into
//! frame 0. The relative motion `T_{τ,τ−κ} = P_τ⁻¹ P_{τ−κ}` maps frame τ−κ into
//! frame τ, and the odometry error over a window is
//! `T_err = T_gt,{τ,τ−κ} · T_odom,{τ,τ−κ}⁻¹`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;
use crate::gp::{Dof, GpError, GpModel};
use crate::liegroup::{exp_map, log_map, Pose, Twist};
use crate::trajectory::Trajectory;

pub const DEFAULT_KAPPA: usize = 10;
pub const SEGMENT_LENGTHS: [u32; 8] = [100, 200, 300, 400, 500, 600, 700, 800];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("trajectory lengths differ: {odom} vs {gt}")]
    LengthMismatch { odom: usize, gt: usize },
    #[error("window {kappa} invalid for a trajectory of {len} poses")]
    InvalidKappa { kappa: usize, len: usize },
    #[error("no prediction for frame {0}")]
    MissingPrediction(usize),
    #[error("ground-truth path is {length:.1} m, shorter than the shortest segment")]
    PathTooShort { length: f64 },
    #[error("unknown sequence {0:?}")]
    UnknownSequence(String),
    #[error("holding out a sequence needs at least 2 sequences, got {0}")]
    TooFewSequences(usize),
    #[error("sequence {sequence:?} has no feature row for frame {frame}")]
    MissingFeature { sequence: String, frame: usize },
    #[error("no training rows")]
    NoSamples,
    #[error("error table line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("error table header does not match the expected columns")]
    Header,
    #[error(transparent)]
    Gp(#[from] GpError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorSample {
    pub frame_index: usize,
    pub kappa: usize,
    pub xi_err: Twist,
}

/// `T_{τ,τ−κ} = P_τ⁻¹ P_{τ−κ}`
pub fn relative_motion(traj: &Trajectory, tau: usize, kappa: usize) -> Pose {
    traj.poses[tau].inverse() * traj.poses[tau - kappa]
}

/// One error sample per frame `τ = κ..len−1`.
pub fn compute_error_samples(odom: &Trajectory, gt: &Trajectory, kappa: usize) -> Result<Vec<ErrorSample>, EvalError> {
    if odom.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            odom: odom.len(),
            gt: gt.len(),
        });
    }
    if kappa == 0 || odom.len() <= kappa {
        return Err(EvalError::InvalidKappa { kappa, len: odom.len() });
    }
    let mut out = Vec::with_capacity(odom.len() - kappa);
    for tau in kappa..odom.len() {
        let t_err = relative_motion(gt, tau, kappa) * relative_motion(odom, tau, kappa).inverse();
        match log_map(&t_err) {
            Ok(xi_err) => out.push(ErrorSample {
                frame_index: tau,
                kappa,
                xi_err,
            }),
            Err(e) => log::warn!("dropping error sample at frame {tau}: {e}"),
        }
    }
    Ok(out)
}

/// `Ad_T x`, so that `T exp(x) T⁻¹ = exp(Ad_T x)`.
fn adjoint_apply(t: &Pose, x: &Twist) -> Twist {
    let phi = t.rotation * x.phi;
    let rho = t.rotation * x.rho + t.translation.cross(&phi);
    Twist { rho, phi }
}

/// Corrects odometry with predicted window errors.
///
/// Frames `0..κ` are copied. For `τ ≥ κ` the corrected step is
/// `T_corr,{τ,τ−1} = exp(ξ*_τ / κ) · T_odom,{τ,τ−1}`, accumulated from the
/// previous corrected pose.
pub fn apply_correction(
    odom: &Trajectory,
    predictions: &BTreeMap<usize, Twist>,
    kappa: usize,
) -> Result<Trajectory, EvalError> {
    if kappa == 0 || odom.len() < kappa {
        return Err(EvalError::InvalidKappa { kappa, len: odom.len() });
    }
    // P_corr,τ = D_τ P_odom,τ with D_τ = D_{τ−1} · P_odom,τ exp(−ξ*/κ) P_odom,τ⁻¹.
    // Tracking the left offset D keeps a zero correction exact.
    let mut poses = odom.poses[..kappa].to_vec();
    let mut offset = Pose::identity();
    for tau in kappa..odom.len() {
        let xi = predictions.get(&tau).ok_or(EvalError::MissingPrediction(tau))?;
        let step = xi.scaled(-1.0 / kappa as f64);
        if step.rho != Vector3::zeros() || step.phi != Vector3::zeros() {
            offset = offset * exp_map(&adjoint_apply(&odom.poses[tau], &step));
        }
        poses.push(offset * odom.poses[tau]);
    }
    Ok(Trajectory {
        poses,
        frame_period: odom.frame_period,
    })
}

/// Error twist with only the learned components set: `[0, 0, z, roll, pitch, 0]`.
pub fn learned_twist(z: f64, pitch: f64, roll: f64) -> Twist {
    Twist::from_array([0.0, 0.0, z, roll, pitch, 0.0])
}

/// Model input for one DOF: normal sum for z and pitch, azimuth slices for roll.
pub fn feature_input(dof: Dof, f: &FeatureVector) -> Vec<f64> {
    match dof {
        Dof::Z | Dof::Pitch => f.normal_sum.to_vec(),
        Dof::Roll => f.azimuth_slices.to_vec(),
    }
}

pub fn feature_dim(dof: Dof) -> usize {
    match dof {
        Dof::Z | Dof::Pitch => 3,
        Dof::Roll => crate::features::AZIMUTH_SLICES,
    }
}

/// Predicts window errors for every frame in `frames` from the three models.
pub fn predict_errors(
    models: &[GpModel],
    features: &[FeatureVector],
    frames: impl IntoIterator<Item = usize>,
) -> Result<BTreeMap<usize, Twist>, EvalError> {
    let by_frame: BTreeMap<usize, &FeatureVector> = features.iter().map(|f| (f.frame_index, f)).collect();
    let frames: Vec<usize> = frames.into_iter().collect();
    let rows: Vec<&FeatureVector> = frames
        .iter()
        .map(|t| {
            by_frame.get(t).copied().ok_or_else(|| EvalError::MissingFeature {
                sequence: String::new(),
                frame: *t,
            })
        })
        .collect::<Result<_, _>>()?;
    let mut out: BTreeMap<usize, Twist> = frames.iter().map(|&t| (t, Twist::zero())).collect();
    for model in models {
        let dim = feature_dim(model.dof);
        if model.input_dim() != dim {
            return Err(GpError::DimensionMismatch {
                expected: dim,
                found: model.input_dim(),
            }
            .into());
        }
        let x = DMatrix::from_fn(rows.len(), dim, |i, d| feature_input(model.dof, rows[i])[d]);
        let mean = model.predict_mean(&x)?;
        let k = model.dof.twist_index();
        for (i, t) in frames.iter().enumerate() {
            let twist = out.get_mut(t).expect("frame present");
            let mut v = twist.to_array();
            v[k] = mean[i];
            *twist = Twist::from_array(v);
        }
    }
    Ok(out)
}

/// Translational segment errors in percent, keyed by segment length in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentErrorReport {
    pub per_length: BTreeMap<String, f64>,
    pub total: f64,
    pub n_segments: usize,
    /// Mean rotational error per length in degrees per meter.
    #[serde(skip)]
    pub rotation_per_length: BTreeMap<String, f64>,
}

impl SegmentErrorReport {
    pub fn empty() -> Self {
        Self {
            per_length: BTreeMap::new(),
            total: 0.0,
            n_segments: 0,
            rotation_per_length: BTreeMap::new(),
        }
    }

    pub fn get(&self, length: u32) -> Option<f64> {
        self.per_length.get(&length.to_string()).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentOptions {
    pub lengths: Vec<f64>,
    /// Start frames are taken every `step` frames.
    pub step: usize,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            lengths: SEGMENT_LENGTHS.iter().map(|&l| l as f64).collect(),
            step: 1,
        }
    }
}

pub fn segment_errors(odom: &Trajectory, gt: &Trajectory) -> Result<SegmentErrorReport, EvalError> {
    segment_errors_with(odom, gt, &SegmentOptions::default())
}

/// Segment errors in the style of the KITTI odometry devkit. For each start
/// frame and length `L`, the segment ends at the first frame whose
/// ground-truth path distance from the start reaches `L`.
pub fn segment_errors_with(
    odom: &Trajectory,
    gt: &Trajectory,
    opts: &SegmentOptions,
) -> Result<SegmentErrorReport, EvalError> {
    if odom.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            odom: odom.len(),
            gt: gt.len(),
        });
    }
    let dist = gt.path_distances();
    let path = dist.last().copied().unwrap_or(0.0);
    let shortest = opts.lengths.iter().copied().fold(f64::INFINITY, f64::min);
    if path < shortest {
        return Err(EvalError::PathTooShort { length: path });
    }
    let mut t_sums: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    let mut total = 0.0;
    let mut count = 0;
    for first in (0..gt.len()).step_by(opts.step.max(1)) {
        for (li, &len) in opts.lengths.iter().enumerate() {
            let target = dist[first] + len;
            // dist is non-decreasing, so the first frame reaching the target is a partition point.
            let last = first + dist[first..].partition_point(|d| *d < target);
            if last >= gt.len() {
                continue;
            }
            let gt_delta = gt.poses[first].inverse() * gt.poses[last];
            let odom_delta = odom.poses[first].inverse() * odom.poses[last];
            let err = odom_delta.inverse() * gt_delta;
            let t_err = err.translation.norm() / len * 100.0;
            let r_err = err.rotation_angle().to_degrees() / len;
            let e = t_sums.entry(li).or_insert((0.0, 0.0, 0));
            e.0 += t_err;
            e.1 += r_err;
            e.2 += 1;
            total += t_err;
            count += 1;
        }
    }
    let mut report = SegmentErrorReport::empty();
    for (li, (t, r, n)) in t_sums {
        let key = format_length(opts.lengths[li]);
        report.per_length.insert(key.clone(), t / n as f64);
        report.rotation_per_length.insert(key, r / n as f64);
    }
    report.n_segments = count;
    report.total = if count > 0 { total / count as f64 } else { 0.0 };
    Ok(report)
}

fn format_length(l: f64) -> String {
    if l.fract() == 0.0 {
        format!("{}", l as i64)
    } else {
        format!("{l}")
    }
}

/// Features and error samples of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceData {
    pub id: String,
    pub features: Vec<FeatureVector>,
    pub samples: Vec<ErrorSample>,
}

/// Inputs and targets for one DOF.
#[derive(Clone, Debug, PartialEq)]
pub struct DofTable {
    pub dof: Dof,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl DofTable {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    /// One table per entry of [`Dof::ALL`].
    pub train: Vec<DofTable>,
    pub validation: Vec<DofTable>,
}

impl TrainingSet {
    pub fn train_for(&self, dof: Dof) -> &DofTable {
        self.train.iter().find(|t| t.dof == dof).expect("all DOFs present")
    }

    pub fn validation_for(&self, dof: Dof) -> &DofTable {
        self.validation.iter().find(|t| t.dof == dof).expect("all DOFs present")
    }
}

fn build_tables(seqs: &[&SequenceData]) -> Result<Vec<DofTable>, EvalError> {
    let mut rows: Vec<(&FeatureVector, &ErrorSample)> = Vec::new();
    for seq in seqs {
        let by_frame: BTreeMap<usize, &FeatureVector> = seq.features.iter().map(|f| (f.frame_index, f)).collect();
        for s in &seq.samples {
            let f = by_frame.get(&s.frame_index).ok_or_else(|| EvalError::MissingFeature {
                sequence: seq.id.clone(),
                frame: s.frame_index,
            })?;
            rows.push((f, s));
        }
    }
    Ok(Dof::ALL
        .iter()
        .map(|&dof| {
            let dim = feature_dim(dof);
            let k = dof.twist_index();
            DofTable {
                dof,
                x: DMatrix::from_fn(rows.len(), dim, |i, d| feature_input(dof, rows[i].0)[d]),
                y: DVector::from_fn(rows.len(), |i, _| rows[i].1.xi_err.to_array()[k]),
            }
        })
        .collect())
}

/// Splits sequences into training and validation tables per DOF. With no
/// holdout every sequence is used for training and validation is empty.
pub fn make_training_set(sequences: &[SequenceData], holdout: Option<&str>) -> Result<TrainingSet, EvalError> {
    if let Some(h) = holdout {
        if !sequences.iter().any(|s| s.id == h) {
            return Err(EvalError::UnknownSequence(h.to_string()));
        }
        if sequences.len() < 2 {
            return Err(EvalError::TooFewSequences(sequences.len()));
        }
    }
    let (val, train): (Vec<&SequenceData>, Vec<&SequenceData>) =
        sequences.iter().partition(|s| Some(s.id.as_str()) == holdout);
    Ok(TrainingSet {
        train: build_tables(&train)?,
        validation: build_tables(&val)?,
    })
}

pub fn error_csv_header() -> &'static str {
    "tau,kappa,rho1,rho2,rho3,phi1,phi2,phi3"
}

pub fn format_error_csv(samples: &[ErrorSample]) -> String {
    let mut out = String::from(error_csv_header());
    out.push('\n');
    for s in samples {
        write!(out, "{},{}", s.frame_index, s.kappa).expect("write to string");
        for v in s.xi_err.to_array() {
            write!(out, ",{v:e}").expect("write to string");
        }
        out.push('\n');
    }
    out
}

pub fn parse_error_csv(text: &str) -> Result<Vec<ErrorSample>, EvalError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header_ok = lines
        .next()
        .map(|(_, h)| h.split(',').map(str::trim).eq(error_csv_header().split(',')))
        .unwrap_or(false);
    if !header_ok {
        return Err(EvalError::Header);
    }
    let mut out = Vec::new();
    for (lineno, line) in lines {
        let err = |reason: String| EvalError::Parse {
            line: lineno + 1,
            reason,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(err(format!("expected 8 columns, found {}", fields.len())));
        }
        let tau = fields[0].parse::<usize>().map_err(|e| err(format!("tau: {e}")))?;
        let kappa = fields[1].parse::<usize>().map_err(|e| err(format!("kappa: {e}")))?;
        if kappa == 0 || tau < kappa {
            return Err(err(format!("need tau >= kappa >= 1, got tau={tau}, kappa={kappa}")));
        }
        let mut v = [0.0; 6];
        for (slot, f) in v.iter_mut().zip(&fields[2..]) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| err(format!("{f:?} is not a number")))?;
        }
        out.push(ErrorSample {
            frame_index: tau,
            kappa,
            xi_err: Twist::from_array(v),
        });
    }
    Ok(out)
}
