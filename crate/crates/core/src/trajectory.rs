//! Frame-indexed pose sequences and the KITTI pose text format.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::liegroup::Pose;

/// Velodyne sweep period at 10 Hz.
pub const DEFAULT_FRAME_PERIOD: f64 = 0.1;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("line {line}: expected 12 numbers, found {found}")]
    BadFieldCount { line: usize, found: usize },
    #[error("line {line}: {value:?} is not a number")]
    BadNumber { line: usize, value: String },
    #[error("pose file is empty")]
    Empty,
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Poses mapping frame coordinates to frame-0 coordinates, one per frame.
/// `poses[0]` is the identity for trajectories produced by this crate.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
    pub frame_period: f64,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Self {
        Self {
            poses,
            frame_period: DEFAULT_FRAME_PERIOD,
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Motion from frame `i - 1` to frame `i`, expressed in frame `i - 1`.
    pub fn step(&self, i: usize) -> Pose {
        self.poses[i - 1].inverse() * self.poses[i]
    }

    /// Cumulative path length at each frame.
    pub fn path_distances(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for (i, p) in self.poses.iter().enumerate() {
            if i > 0 {
                acc += (p.translation - self.poses[i - 1].translation).norm();
            }
            out.push(acc);
        }
        out
    }

    pub fn path_length(&self) -> f64 {
        self.path_distances().last().copied().unwrap_or(0.0)
    }

    /// Sub-trajectory `[start, end)` re-expressed relative to its first pose.
    pub fn rebased_slice(&self, start: usize, end: usize) -> Trajectory {
        let base = self.poses[start].inverse();
        Trajectory {
            poses: self.poses[start..end].iter().map(|p| base * *p).collect(),
            frame_period: self.frame_period,
        }
    }

    /// Applies `g` on the left of every pose.
    pub fn left_transformed(&self, g: &Pose) -> Trajectory {
        Trajectory {
            poses: self.poses.iter().map(|p| *g * *p).collect(),
            frame_period: self.frame_period,
        }
    }
}

/// One line of 12 numbers: row-major `[R | t]`.
pub fn format_pose_line(p: &Pose) -> String {
    let mut s = String::new();
    for r in 0..3 {
        for c in 0..4 {
            let v = if c < 3 { p.rotation[(r, c)] } else { p.translation[r] };
            if !s.is_empty() {
                s.push(' ');
            }
            write!(s, "{v:e}").expect("write to string");
        }
    }
    s
}

pub fn format_kitti_poses(traj: &Trajectory) -> String {
    let mut out = String::new();
    for p in &traj.poses {
        out.push_str(&format_pose_line(p));
        out.push('\n');
    }
    out
}

pub fn parse_kitti_poses(text: &str) -> Result<Trajectory, TrajectoryError> {
    let mut poses = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut vals = [0.0; 12];
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 12 {
            return Err(TrajectoryError::BadFieldCount {
                line: lineno + 1,
                found: fields.len(),
            });
        }
        for (k, f) in fields.iter().enumerate() {
            vals[k] = f
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| TrajectoryError::BadNumber {
                    line: lineno + 1,
                    value: f.to_string(),
                })?;
        }
        let rotation = Matrix3::new(
            vals[0], vals[1], vals[2], vals[4], vals[5], vals[6], vals[8], vals[9], vals[10],
        );
        let translation = Vector3::new(vals[3], vals[7], vals[11]);
        poses.push(Pose::new(rotation, translation));
    }
    if poses.is_empty() {
        return Err(TrajectoryError::Empty);
    }
    Ok(Trajectory::new(poses))
}

pub fn read_kitti_poses(path: &Path) -> Result<Trajectory, TrajectoryError> {
    let text = fs::read_to_string(path).map_err(|source| TrajectoryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_kitti_poses(&text)
}

pub fn write_kitti_poses(traj: &Trajectory, path: &Path) -> Result<(), TrajectoryError> {
    fs::write(path, format_kitti_poses(traj)).map_err(|source| TrajectoryError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::{exp_map, Twist};

    #[test]
    fn text_round_trip_is_exact() {
        let poses = (0..5)
            .map(|i| exp_map(&Twist::from_array([i as f64 * 0.7, 0.1, -0.03, 0.01, 0.2 * i as f64, -0.5])))
            .collect();
        let t = Trajectory::new(poses);
        let back = parse_kitti_poses(&format_kitti_poses(&t)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_kitti_poses(""), Err(TrajectoryError::Empty)));
        assert!(matches!(
            parse_kitti_poses("1 0 0 0 0 1 0 0 0 0 1"),
            Err(TrajectoryError::BadFieldCount { line: 1, found: 11 })
        ));
        assert!(matches!(
            parse_kitti_poses("1 0 0 0 0 1 0 0 0 0 1 x"),
            Err(TrajectoryError::BadNumber { line: 1, .. })
        ));
    }

    #[test]
    fn kitti_identity_line() {
        let t = parse_kitti_poses("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 2 0 1 0 0 0 0 1 0\n").unwrap();
        assert_eq!(t.poses[0], Pose::identity());
        assert_eq!(t.poses[1].translation, Vector3::new(2.0, 0.0, 0.0));
        assert_eq!(t.path_length(), 2.0);
        assert_eq!(t.step(1).translation, Vector3::new(2.0, 0.0, 0.0));
    }
}
