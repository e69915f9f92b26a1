//! Keypoint selection.
//!
//! A point is kept if its range-normalized intensity `I·r²` is among the
//! highest in the frame, or if its neighborhood is among the most planar
//! (largest `(λ₁+λ₂+λ₃)/λ₁`). Each rule's threshold is the per-frame quantile
//! that lets it admit `target_fraction / 2` of the points; ties at the quantile
//! are resolved by point index. Points below `ground_height` never qualify
//! for the planar rule.

use std::cmp::Ordering;

use thiserror::Error;

use crate::pointcloud::PointFrame;

pub const DEFAULT_TARGET_FRACTION: f64 = 0.05;
pub const DEFAULT_GROUND_HEIGHT: f64 = -1.2;
/// Planarity ratio a neighborhood must exceed regardless of the quantile.
pub const DEFAULT_MIN_PLANARITY: f64 = 25.0;

const MIN_VALID_POINTS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KeypointError {
    #[error("only {valid} points usable for keypoint selection (need {MIN_VALID_POINTS})")]
    EmptySelection { valid: usize },
    #[error("target fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("frame has no surface statistics")]
    MissingStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KeypointRule {
    Intensity,
    Planar,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeypointParams {
    pub target_fraction: f64,
    pub ground_height: f64,
    pub min_planarity: f64,
}

impl Default for KeypointParams {
    fn default() -> Self {
        Self {
            target_fraction: DEFAULT_TARGET_FRACTION,
            ground_height: DEFAULT_GROUND_HEIGHT,
            min_planarity: DEFAULT_MIN_PLANARITY,
        }
    }
}

/// Selected point indices (ascending) and the rule that admitted each.
/// A point passing both rules is tagged `Planar`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeypointSet {
    pub indices: Vec<usize>,
    pub tags: Vec<KeypointRule>,
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, KeypointRule)> + '_ {
        self.indices.iter().copied().zip(self.tags.iter().copied())
    }

    pub fn planar_count(&self) -> usize {
        self.tags.iter().filter(|t| **t == KeypointRule::Planar).count()
    }
}

/// Normalized intensity under a Lambertian model: `I·r²`.
pub fn normalized_intensity(frame: &PointFrame, i: usize) -> f64 {
    frame.intensity[i] * frame.points[i].norm_squared()
}

/// Indices of the `count` largest scores, ties going to the smaller index.
fn top_by_score(mut scored: Vec<(usize, f64)>, count: usize) -> Vec<usize> {
    let cmp = |a: &(usize, f64), b: &(usize, f64)| -> Ordering {
        b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
    };
    if count < scored.len() {
        scored.select_nth_unstable_by(count, cmp);
        scored.truncate(count);
    }
    scored.into_iter().map(|(i, _)| i).collect()
}

pub fn select_keypoints(frame: &PointFrame, params: &KeypointParams) -> Result<KeypointSet, KeypointError> {
    let fraction = params.target_fraction;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(KeypointError::InvalidFraction(fraction));
    }
    let stats = frame.stats.as_ref().ok_or(KeypointError::MissingStats)?;
    let n = frame.len();
    if n < MIN_VALID_POINTS {
        return Err(KeypointError::EmptySelection { valid: n });
    }
    let per_rule = ((fraction / 2.0) * n as f64).round().max(1.0) as usize;

    let intensity: Vec<(usize, f64)> = (0..n).map(|i| (i, normalized_intensity(frame, i))).collect();
    let planar: Vec<(usize, f64)> = (0..n)
        .filter(|&i| frame.points[i][2] >= params.ground_height)
        .filter_map(|i| stats[i].as_ref().map(|s| (i, s)))
        .filter(|(_, s)| !s.is_line_like())
        .map(|(i, s)| (i, s.planarity_ratio()))
        .filter(|(_, ratio)| *ratio > params.min_planarity)
        .collect();

    let mut tag: Vec<Option<KeypointRule>> = vec![None; n];
    for i in top_by_score(intensity, per_rule) {
        tag[i] = Some(KeypointRule::Intensity);
    }
    for i in top_by_score(planar, per_rule) {
        tag[i] = Some(KeypointRule::Planar);
    }
    let (indices, tags): (Vec<usize>, Vec<KeypointRule>) = tag
        .into_iter()
        .enumerate()
        .filter_map(|(i, t)| t.map(|t| (i, t)))
        .unzip();
    if indices.is_empty() {
        return Err(KeypointError::EmptySelection { valid: n });
    }
    Ok(KeypointSet { indices, tags })
}
