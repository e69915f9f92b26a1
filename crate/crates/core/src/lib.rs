//! Lidar odometry with learned, geometry-dependent bias correction.
//!
//! The pipeline runs keypoint-based scan-to-scan odometry, extracts geometric
//! features per sweep, learns the odometry error in z, pitch and roll as a
//! function of those features with Gaussian-process regression, and applies
//! the predicted corrections to new trajectories.

pub mod evalcorrect;
pub mod features;
pub mod gp;
pub mod keypoints;
pub mod liegroup;
pub mod odometry;
pub mod pointcloud;
pub mod synth;
pub mod trajectory;

pub use evalcorrect::{
    apply_correction, compute_error_samples, make_training_set, segment_errors, ErrorSample, EvalError,
    SegmentErrorReport,
};
pub use features::{compute_features, FeatureVector};
pub use gp::{Dof, GpError, GpModel, Hyperparams};
pub use keypoints::{select_keypoints, KeypointParams, KeypointRule, KeypointSet};
pub use liegroup::{exp_map, log_map, LieError, Pose, Twist};
pub use odometry::{run_odometry, MatchNoise, Odometry, OdometryConfig, OdometryError, OdometryOutput};
pub use pointcloud::{compute_surface_stats, PointCloudError, PointFrame, SurfaceStats};
pub use synth::{generate_sequence, generate_sweep, SceneSpec, SynthError};
pub use trajectory::{Trajectory, TrajectoryError};
