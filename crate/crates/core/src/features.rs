//! Geometric input features for the error models.
//!
//! Both features are computed over a frame's keypoints. Only keypoints tagged
//! planar contribute, and both are normalized by the total keypoint count.

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use crate::keypoints::{KeypointRule, KeypointSet};
use crate::pointcloud::PointFrame;

pub const AZIMUTH_SLICES: usize = 16;
/// `|n_z|` at or above this counts as a z-pointing normal.
pub const DEFAULT_Z_THRESHOLD: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("feature table line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("feature table header does not match the expected columns")]
    Header,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub frame_index: usize,
    pub normal_sum: [f64; 3],
    pub azimuth_slices: [f64; AZIMUTH_SLICES],
}

/// Sum of absolute normal components over planar keypoints, divided by the keypoint count.
pub fn normal_sum_feature(frame: &PointFrame, keys: &KeypointSet) -> [f64; 3] {
    let m = keys.len();
    if m == 0 {
        return [0.0; 3];
    }
    let mut sum = [0.0; 3];
    for (i, rule) in keys.iter() {
        if rule != KeypointRule::Planar {
            continue;
        }
        if let Some(s) = frame.stats_of(i) {
            for (acc, c) in sum.iter_mut().zip(s.normal.iter()) {
                *acc += c.abs();
            }
        }
    }
    sum.map(|v| v / m as f64)
}

/// Azimuth slice of a point; slice 0 starts at `-pi`.
pub fn azimuth_slice(x: f64, y: f64) -> usize {
    let a = y.atan2(x);
    let s = (AZIMUTH_SLICES as f64 * (a + PI) / (2.0 * PI)).floor();
    (s.max(0.0) as usize).min(AZIMUTH_SLICES - 1)
}

/// Per-slice count of planar keypoints with `|n_z| >= z_threshold`, divided by the keypoint count.
pub fn azimuth_slice_feature(frame: &PointFrame, keys: &KeypointSet, z_threshold: f64) -> [f64; AZIMUTH_SLICES] {
    let mut out = [0.0; AZIMUTH_SLICES];
    let m = keys.len();
    if m == 0 {
        return out;
    }
    for (i, rule) in keys.iter() {
        if rule != KeypointRule::Planar {
            continue;
        }
        let Some(s) = frame.stats_of(i) else { continue };
        if s.normal[2].abs() >= z_threshold {
            let p = frame.points[i];
            out[azimuth_slice(p[0], p[1])] += 1.0;
        }
    }
    out.map(|c| c / m as f64)
}

pub fn compute_features(frame: &PointFrame, keys: &KeypointSet, z_threshold: f64) -> FeatureVector {
    FeatureVector {
        frame_index: frame.frame_index,
        normal_sum: normal_sum_feature(frame, keys),
        azimuth_slices: azimuth_slice_feature(frame, keys, z_threshold),
    }
}

pub fn feature_csv_header() -> String {
    let mut h = String::from("frame_index,ns_x,ns_y,ns_z");
    for i in 0..AZIMUTH_SLICES {
        write!(h, ",az_{i}").expect("write to string");
    }
    h
}

pub fn format_feature_csv(rows: &[FeatureVector]) -> String {
    let mut out = feature_csv_header();
    out.push('\n');
    for r in rows {
        write!(out, "{}", r.frame_index).expect("write to string");
        for v in r.normal_sum.iter().chain(r.azimuth_slices.iter()) {
            write!(out, ",{v:e}").expect("write to string");
        }
        out.push('\n');
    }
    out
}

pub fn parse_feature_csv(text: &str) -> Result<Vec<FeatureVector>, FeatureError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header_ok = lines
        .next()
        .map(|(_, h)| {
            h.split(',').map(str::trim).collect::<Vec<_>>()
                == feature_csv_header().split(',').collect::<Vec<_>>()
        })
        .unwrap_or(false);
    if !header_ok {
        return Err(FeatureError::Header);
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        let parse_err = |reason: String| FeatureError::Parse {
            line: lineno + 1,
            reason,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 + AZIMUTH_SLICES {
            return Err(parse_err(format!("expected {} columns, found {}", 4 + AZIMUTH_SLICES, fields.len())));
        }
        let frame_index = fields[0]
            .parse::<usize>()
            .map_err(|e| parse_err(format!("frame index: {e}")))?;
        let mut vals = [0.0; 3 + AZIMUTH_SLICES];
        for (v, f) in vals.iter_mut().zip(&fields[1..]) {
            *v = f
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(format!("{f:?} is not a number")))?;
        }
        rows.push(FeatureVector {
            frame_index,
            normal_sum: [vals[0], vals[1], vals[2]],
            azimuth_slices: std::array::from_fn(|i| vals[3 + i]),
        });
    }
    Ok(rows)
}
