//! Frame-to-frame lidar odometry.
//!
//! Each sweep is reduced to keypoints, matched to the previous sweep's
//! keypoints by Euclidean nearest neighbor, and aligned by minimizing
//! Geman-McClure robustified point-to-plane / point-to-point errors with
//! iteratively reweighted Gauss-Newton on SE(3). A constant-velocity motion
//! model seeds each frame and enters the objective as a weak quadratic prior.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};
use thiserror::Error;

use crate::keypoints::{select_keypoints, KeypointParams, KeypointRule, KeypointSet};
use crate::liegroup::{exp_map, log_map, skew, Pose, Twist, RENORMALIZE_EVERY};
use crate::pointcloud::{compute_surface_stats, KnnIndex, PointFrame, DEFAULT_KNN_K};
use crate::trajectory::Trajectory;

pub const MIN_MATCHES: usize = 30;
/// Measurement Hessians with a larger condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdometryError {
    #[error("{found} matches, need at least {MIN_MATCHES}")]
    TooFewMatches { found: usize },
    #[error("normal equations are singular (condition number {condition:e})")]
    SingularNormalEquations { condition: f64 },
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchKind {
    Plane,
    Point,
}

/// A current-frame keypoint paired with its nearest previous-frame keypoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Match {
    /// Index into the current keypoint cloud.
    pub source_index: usize,
    /// Keypoint position in the current sensor frame.
    pub source: Vector3<f64>,
    /// Matched point in the target (previous) frame.
    pub target: Vector3<f64>,
    /// Unit surface normal at the target; present for `Plane` matches only.
    pub target_normal: Option<Vector3<f64>>,
    pub kind: MatchKind,
}

impl Match {
    pub fn plane(source: Vector3<f64>, target: Vector3<f64>, normal: Vector3<f64>) -> Self {
        Self {
            source_index: 0,
            source,
            target,
            target_normal: Some(normal.normalize()),
            kind: MatchKind::Plane,
        }
    }

    pub fn point(source: Vector3<f64>, target: Vector3<f64>) -> Self {
        Self {
            source_index: 0,
            source,
            target,
            target_normal: None,
            kind: MatchKind::Point,
        }
    }
}

/// Keypoints of one sweep with the data matching needs.
#[derive(Clone, Debug, Default)]
pub struct KeyCloud {
    pub points: Vec<Vector3<f64>>,
    /// Normal for planar-tagged keypoints.
    pub normals: Vec<Option<Vector3<f64>>>,
}

impl KeyCloud {
    pub fn from_frame(frame: &PointFrame, keys: &KeypointSet) -> Self {
        let mut cloud = KeyCloud::default();
        for (i, rule) in keys.iter() {
            cloud.points.push(frame.points[i]);
            let normal = match rule {
                KeypointRule::Planar => frame.stats_of(i).map(|s| s.normal),
                KeypointRule::Intensity => None,
            };
            cloud.normals.push(normal);
        }
        cloud
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, pose: &Pose) -> KeyCloud {
        KeyCloud {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
            normals: self
                .normals
                .iter()
                .map(|n| n.map(|n| pose.rotation * n))
                .collect(),
        }
    }
}

/// A key cloud with its search index, used as the matching target.
#[derive(Clone, Debug)]
pub struct MatchTarget {
    pub cloud: KeyCloud,
    pub index: KnnIndex,
}

impl MatchTarget {
    pub fn new(cloud: KeyCloud) -> Self {
        let index = KnnIndex::new(&cloud.points);
        Self { cloud, index }
    }
}

/// Pairs every current keypoint (moved into the target frame by `seed`) with
/// its nearest target keypoint within `max_dist`.
pub fn match_points(
    current: &KeyCloud,
    seed: &Pose,
    target: &MatchTarget,
    max_dist: f64,
) -> Result<Vec<Match>, OdometryError> {
    let mut matches = Vec::new();
    for (i, p) in current.points.iter().enumerate() {
        let moved = seed.transform_point(p);
        if let Some(nb) = target.index.nearest_within(&moved, max_dist) {
            let normal = target.cloud.normals[nb.index];
            matches.push(Match {
                source_index: i,
                source: *p,
                target: target.cloud.points[nb.index],
                target_normal: normal,
                kind: if normal.is_some() { MatchKind::Plane } else { MatchKind::Point },
            });
        }
    }
    if matches.len() < MIN_MATCHES {
        return Err(OdometryError::TooFewMatches { found: matches.len() });
    }
    Ok(matches)
}

/// Geman-McClure cost `½u²/(1+u²)`.
pub fn robust_cost(u: f64) -> f64 {
    let u2 = u * u;
    0.5 * u2 / (1.0 + u2)
}

/// IRLS weight `ρ'(u)/u = 1/(1+u²)²`.
pub fn robust_weight(u: f64) -> f64 {
    let d = 1.0 + u * u;
    1.0 / (d * d)
}

/// Measurement scales whitening the match residuals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchNoise {
    /// Point-to-point standard deviation, `R = σ²I` (m).
    pub point_sigma: f64,
    /// Scale dividing the point-to-plane distance (m). 1 leaves it unwhitened.
    pub plane_sigma: f64,
}

impl Default for MatchNoise {
    fn default() -> Self {
        Self {
            point_sigma: 0.05,
            plane_sigma: 0.05,
        }
    }
}

impl MatchNoise {
    pub fn with_point_sigma(point_sigma: f64) -> Self {
        Self {
            point_sigma,
            ..Default::default()
        }
    }

    /// Plane residuals left as raw distances.
    pub fn unit_plane(point_sigma: f64) -> Self {
        Self {
            point_sigma,
            plane_sigma: 1.0,
        }
    }
}

/// Whitened residual of a match: `nᵀe/σₙ` (scalar) for planes, `e/σ` for
/// points, with `e = q − T p`.
#[derive(Clone, Copy, Debug)]
enum Residual {
    Plane(f64),
    Point(Vector3<f64>),
}

fn residual(m: &Match, pose: &Pose, noise: &MatchNoise) -> Residual {
    let e = m.target - pose.transform_point(&m.source);
    match (m.kind, m.target_normal) {
        (MatchKind::Plane, Some(n)) => Residual::Plane(n.dot(&e) / noise.plane_sigma),
        _ => Residual::Point(e / noise.point_sigma),
    }
}

/// Whitened error norm `u` of one match under `pose`.
pub fn whitened_error(m: &Match, pose: &Pose, noise: &MatchNoise) -> f64 {
    match residual(m, pose, noise) {
        Residual::Plane(r) => r.abs(),
        Residual::Point(r) => r.norm(),
    }
}

/// Whitened error norm for an explicit error vector and measurement covariance.
pub fn whitened_error_with_covariance(e: &Vector3<f64>, covariance: &Matrix3<f64>) -> Option<f64> {
    let chol = covariance.cholesky()?;
    Some(e.dot(&chol.solve(e)).max(0.0).sqrt())
}

/// Derivative of `u` with respect to a left perturbation `exp(δ)·pose`.
pub fn whitened_error_jacobian(m: &Match, pose: &Pose, noise: &MatchNoise) -> Vector6<f64> {
    let x = pose.transform_point(&m.source);
    let mut de = nalgebra::Matrix3x6::zeros();
    de.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-Matrix3::identity()));
    de.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(&x));
    match residual(m, pose, noise) {
        Residual::Plane(r) => {
            let n = m.target_normal.expect("plane match carries a normal");
            (de.transpose() * n) * (r.signum() / noise.plane_sigma)
        }
        Residual::Point(r) => {
            let u = r.norm();
            if u == 0.0 {
                Vector6::zeros()
            } else {
                de.transpose() * r / (u * noise.point_sigma)
            }
        }
    }
}

/// SE(3) adjoint for `[rho; phi]` twists.
pub fn adjoint(t: &Pose) -> Matrix6<f64> {
    let mut a = Matrix6::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&t.rotation);
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&(skew(&t.translation) * t.rotation));
    a.fixed_view_mut::<3, 3>(3, 3).copy_from(&t.rotation);
    a
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorParams {
    pub noise: MatchNoise,
    /// Prior stiffness relative to the mean measurement weight.
    pub prior_weight: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the update twist norm.
    pub step_tolerance: f64,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            noise: MatchNoise::default(),
            prior_weight: 1e-2,
            max_iterations: 50,
            step_tolerance: 1e-7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateDiagnostics {
    pub final_cost: f64,
    pub iterations: usize,
    /// Matches with whitened error below 1.
    pub inliers: usize,
    /// Condition number of the measurement-only Hessian at the last linearization.
    pub condition_number: f64,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub diagnostics: EstimateDiagnostics,
}

struct Linearization {
    hessian: Matrix6<f64>,
    gradient: Vector6<f64>,
    weight_sum: f64,
}

fn linearize(matches: &[Match], pose: &Pose, noise: &MatchNoise) -> Linearization {
    let x_jac = |x: &Vector3<f64>| {
        let mut de = nalgebra::Matrix3x6::zeros();
        de.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-Matrix3::identity()));
        de.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(x));
        de
    };
    let mut hessian = Matrix6::zeros();
    let mut gradient = Vector6::zeros();
    let mut weight_sum = 0.0;
    for m in matches {
        let x = pose.transform_point(&m.source);
        let de = x_jac(&x);
        match residual(m, pose, noise) {
            Residual::Plane(r) => {
                let n = m.target_normal.expect("plane match carries a normal");
                let j: Vector6<f64> = de.transpose() * n / noise.plane_sigma;
                let w = robust_weight(r.abs());
                hessian += j * j.transpose() * w;
                gradient += j * (w * r);
                weight_sum += w;
            }
            Residual::Point(r) => {
                let j = de / noise.point_sigma;
                let w = robust_weight(r.norm());
                hessian += j.transpose() * j * w;
                gradient += j.transpose() * r * w;
                weight_sum += w;
            }
        }
    }
    Linearization {
        hessian,
        gradient,
        weight_sum,
    }
}

fn measurement_cost(matches: &[Match], pose: &Pose, noise: &MatchNoise) -> f64 {
    matches
        .iter()
        .map(|m| robust_cost(whitened_error(m, pose, noise)))
        .sum()
}

/// Deviation from the prior center, invariant to a common left transform.
fn prior_deviation(pose: &Pose, center: &Pose) -> Vector6<f64> {
    log_map(&(center.inverse() * *pose))
        .map(|t| t.to_vector())
        .unwrap_or_else(|_| Vector6::repeat(f64::MAX.sqrt()))
}

/// Condition number of a symmetric positive semi-definite matrix.
pub fn condition_number(h: &Matrix6<f64>) -> f64 {
    let eig = SymmetricEigen::new(*h).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 || max <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Robust Gauss-Newton from `init`, with the prior centered on `prior_center`.
pub fn refine_pose(
    matches: &[Match],
    init: &Pose,
    prior_center: &Pose,
    params: &EstimatorParams,
) -> Result<PoseEstimate, OdometryError> {
    if matches.len() < MIN_MATCHES {
        return Err(OdometryError::TooFewMatches { found: matches.len() });
    }
    let noise = &params.noise;
    let mut pose = *init;
    let mut iterations = 0;
    let mut converged = false;
    let mut condition = 0.0;
    let mut prior_stiffness = 0.0;
    let total_cost = |p: &Pose, stiffness: f64| {
        let d = prior_deviation(p, prior_center);
        measurement_cost(matches, p, noise) + 0.5 * stiffness * d.norm_squared()
    };

    while iterations < params.max_iterations {
        iterations += 1;
        let lin = linearize(matches, &pose, noise);
        condition = condition_number(&lin.hessian);
        if !(condition <= MAX_CONDITION) {
            return Err(OdometryError::SingularNormalEquations { condition });
        }
        prior_stiffness = params.prior_weight * lin.weight_sum / matches.len() as f64;
        // d(prior deviation)/dδ for a left perturbation, to first order.
        let a = adjoint(&pose.inverse());
        let dev = prior_deviation(&pose, prior_center);
        let h = lin.hessian + a.transpose() * a * prior_stiffness;
        let g = lin.gradient + a.transpose() * dev * prior_stiffness;
        let Some(chol) = h.cholesky() else {
            return Err(OdometryError::SingularNormalEquations {
                condition: f64::INFINITY,
            });
        };
        let delta = -chol.solve(&g);

        let current = total_cost(&pose, prior_stiffness);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = exp_map(&Twist::from_vector(&(delta * step))) * pose;
            if total_cost(&cand, prior_stiffness) <= current {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some(cand) => pose = cand,
            None => {
                converged = true;
                break;
            }
        }
        if (delta * step).norm() < params.step_tolerance {
            converged = true;
            break;
        }
    }

    let inliers = matches
        .iter()
        .filter(|m| whitened_error(m, &pose, noise) < 1.0)
        .count();
    Ok(PoseEstimate {
        pose,
        diagnostics: EstimateDiagnostics {
            final_cost: total_cost(&pose, prior_stiffness),
            iterations,
            inliers,
            condition_number: condition,
            converged,
        },
    })
}

/// Estimates the transform taking match sources onto their targets, starting
/// from and weakly anchored to `seed`.
pub fn estimate_pose(
    matches: &[Match],
    seed: &Pose,
    params: &EstimatorParams,
) -> Result<PoseEstimate, OdometryError> {
    refine_pose(matches, seed, seed, params)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OdometryConfig {
    pub knn_k: usize,
    pub keypoints: KeypointParams,
    pub max_match_dist: f64,
    /// Matching radius for the first round while no motion has been observed.
    pub initial_match_dist: f64,
    pub estimator: EstimatorParams,
    /// Re-match/re-optimize rounds after the first.
    pub rematch_iterations: usize,
    /// Upper bound on rounds while the estimate is still moving.
    pub max_rounds: usize,
}

impl Default for OdometryConfig {
    fn default() -> Self {
        Self {
            knn_k: DEFAULT_KNN_K,
            keypoints: KeypointParams::default(),
            max_match_dist: 1.5,
            initial_match_dist: 4.0,
            estimator: EstimatorParams::default(),
            rematch_iterations: 2,
            max_rounds: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FrameStatus {
    /// First frame of the sequence, pose fixed to identity.
    Origin,
    Ok,
    TooFewMatches,
    Singular,
    /// The sweep could not be read or reduced to keypoints.
    BadFrame(String),
}

impl FrameStatus {
    pub fn is_flagged(&self) -> bool {
        !matches!(self, FrameStatus::Origin | FrameStatus::Ok)
    }

    pub fn label(&self) -> &'static str {
        match self {
            FrameStatus::Origin => "origin",
            FrameStatus::Ok => "ok",
            FrameStatus::TooFewMatches => "too_few_matches",
            FrameStatus::Singular => "singular",
            FrameStatus::BadFrame(_) => "bad_frame",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameDiagnostics {
    pub frame_index: usize,
    pub keypoints: usize,
    pub matches: usize,
    pub rounds: usize,
    pub iterations: usize,
    pub inliers: usize,
    pub final_cost: f64,
    pub condition_number: f64,
    pub status: FrameStatus,
}

impl FrameDiagnostics {
    fn empty(frame_index: usize, status: FrameStatus) -> Self {
        Self {
            frame_index,
            keypoints: 0,
            matches: 0,
            rounds: 0,
            iterations: 0,
            inliers: 0,
            final_cost: 0.0,
            condition_number: 0.0,
            status,
        }
    }
}

/// A sweep after statistics and keypoint extraction.
#[derive(Clone, Debug)]
pub struct ProcessedFrame {
    pub frame: PointFrame,
    pub keys: KeypointSet,
}

#[derive(Clone, Debug)]
pub struct OdometryOutput {
    pub trajectory: Trajectory,
    pub diagnostics: Vec<FrameDiagnostics>,
}

impl OdometryOutput {
    pub fn flagged_frames(&self) -> usize {
        self.diagnostics.iter().filter(|d| d.status.is_flagged()).count()
    }
}

/// Extracts statistics and keypoints from a raw sweep.
pub fn preprocess(frame: PointFrame, config: &OdometryConfig) -> Result<ProcessedFrame, String> {
    let frame = compute_surface_stats(frame, config.knn_k).map_err(|e| e.to_string())?;
    let keys = select_keypoints(&frame, &config.keypoints).map_err(|e| e.to_string())?;
    Ok(ProcessedFrame { frame, keys })
}

/// Incremental odometry over a stream of sweeps.
#[derive(Debug)]
pub struct Odometry {
    config: OdometryConfig,
    poses: Vec<Pose>,
    last_step: Pose,
    /// Keypoints of the last usable sweep and that sweep's pose.
    target: Option<(MatchTarget, Pose)>,
    diagnostics: Vec<FrameDiagnostics>,
}

impl Odometry {
    pub fn new(config: OdometryConfig) -> Self {
        Self {
            config,
            poses: Vec::new(),
            last_step: Pose::identity(),
            target: None,
            diagnostics: Vec::new(),
        }
    }

    pub fn config(&self) -> &OdometryConfig {
        &self.config
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn diagnostics(&self) -> &[FrameDiagnostics] {
        &self.diagnostics
    }

    fn append_pose(&mut self, pose: Pose) {
        let pose = if self.poses.len().is_multiple_of(RENORMALIZE_EVERY) {
            pose.renormalized()
        } else {
            pose
        };
        if let Some(prev) = self.poses.last() {
            // Differencing poses amplifies any drift from orthonormality, so the
            // extrapolation step is projected back onto SE(3) every frame.
            self.last_step = (prev.inverse() * pose).renormalized();
        }
        self.poses.push(pose);
    }

    fn predicted_pose(&self) -> Pose {
        self.poses.last().map(|p| *p * self.last_step).unwrap_or_else(Pose::identity)
    }

    /// Records a sweep that could not be used; its pose is extrapolated.
    pub fn push_unusable(&mut self, frame_index: usize, reason: String) {
        let status = FrameStatus::BadFrame(reason);
        if self.poses.is_empty() {
            self.poses.push(Pose::identity());
        } else {
            let p = self.predicted_pose();
            self.append_pose(p);
        }
        self.diagnostics.push(FrameDiagnostics::empty(frame_index, status));
    }

    /// Processes the next sweep. Returns the preprocessed sweep when keypoints
    /// could be extracted.
    pub fn push_frame(&mut self, frame: PointFrame) -> Option<ProcessedFrame> {
        let frame_index = frame.frame_index;
        let processed = match preprocess(frame, &self.config) {
            Ok(p) => p,
            Err(reason) => {
                self.push_unusable(frame_index, reason);
                return None;
            }
        };
        let cloud = KeyCloud::from_frame(&processed.frame, &processed.keys);
        let n_keys = cloud.len();

        let Some((target, target_pose)) = self.target.take() else {
            // First usable sweep.
            let status = if self.poses.is_empty() { FrameStatus::Origin } else { FrameStatus::Ok };
            let pose = self.predicted_pose();
            if self.poses.is_empty() {
                self.poses.push(Pose::identity());
            } else {
                self.append_pose(pose);
            }
            let mut d = FrameDiagnostics::empty(frame_index, status);
            d.keypoints = n_keys;
            self.diagnostics.push(d);
            let pose = *self.poses.last().expect("pose just pushed");
            self.target = Some((MatchTarget::new(cloud), pose));
            return Some(processed);
        };

        let predicted = self.predicted_pose();
        let seed = (target_pose.inverse() * predicted).renormalized();
        // Without a previous step the seed is the identity, possibly far off.
        let first_dist = if self.poses.len() < 2 {
            self.config.initial_match_dist.max(self.config.max_match_dist)
        } else {
            self.config.max_match_dist
        };
        let (relative, mut diag) = self.align(&cloud, &target, &seed, first_dist, frame_index);
        diag.keypoints = n_keys;
        let pose = match relative {
            Some(rel) => target_pose * rel,
            None => predicted,
        };
        self.append_pose(pose);
        self.diagnostics.push(diag);
        let pose = *self.poses.last().expect("pose just pushed");
        self.target = Some((MatchTarget::new(cloud), pose));
        Some(processed)
    }

    fn align(
        &self,
        cloud: &KeyCloud,
        target: &MatchTarget,
        seed: &Pose,
        first_dist: f64,
        frame_index: usize,
    ) -> (Option<Pose>, FrameDiagnostics) {
        let cfg = &self.config;
        let min_rounds = 1 + cfg.rematch_iterations;
        let mut estimate = *seed;
        let mut diag = FrameDiagnostics::empty(frame_index, FrameStatus::Ok);
        for round in 0..cfg.max_rounds.max(min_rounds) {
            let dist = if round == 0 { first_dist } else { cfg.max_match_dist };
            let matches = match match_points(cloud, &estimate, target, dist) {
                Ok(m) => m,
                Err(OdometryError::TooFewMatches { found }) => {
                    diag.matches = found;
                    diag.status = FrameStatus::TooFewMatches;
                    return (None, diag);
                }
                Err(e) => unreachable!("matching cannot fail with {e}"),
            };
            diag.matches = matches.len();
            match refine_pose(&matches, &estimate, seed, &cfg.estimator) {
                Ok(est) => {
                    let moved = log_map(&(estimate.inverse() * est.pose))
                        .map(|t| t.norm())
                        .unwrap_or(f64::INFINITY);
                    estimate = est.pose;
                    diag.rounds = round + 1;
                    diag.iterations += est.diagnostics.iterations;
                    diag.inliers = est.diagnostics.inliers;
                    diag.final_cost = est.diagnostics.final_cost;
                    diag.condition_number = est.diagnostics.condition_number;
                    if round + 1 >= min_rounds && moved < 1e-4 {
                        break;
                    }
                }
                Err(OdometryError::SingularNormalEquations { condition }) => {
                    diag.condition_number = condition;
                    diag.status = FrameStatus::Singular;
                    return (None, diag);
                }
                Err(OdometryError::TooFewMatches { found }) => {
                    diag.matches = found;
                    diag.status = FrameStatus::TooFewMatches;
                    return (None, diag);
                }
                Err(e) => unreachable!("refinement cannot fail with {e}"),
            }
        }
        (Some(estimate), diag)
    }

    pub fn finish(self) -> OdometryOutput {
        OdometryOutput {
            trajectory: Trajectory::new(self.poses),
            diagnostics: self.diagnostics,
        }
    }
}

/// Runs odometry over a whole sequence.
pub fn run_odometry<I>(frames: I, config: &OdometryConfig) -> Result<OdometryOutput, OdometryError>
where
    I: IntoIterator<Item = PointFrame>,
{
    let mut odom = Odometry::new(config.clone());
    for frame in frames {
        odom.push_frame(frame);
    }
    if odom.poses.len() < 2 {
        return Err(OdometryError::TooFewFrames(odom.poses.len()));
    }
    Ok(odom.finish())
}
