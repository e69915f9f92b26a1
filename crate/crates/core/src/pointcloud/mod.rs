//! Point-cloud data model, KITTI Velodyne ingestion and per-point surface statistics.

mod kdtree;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use thiserror::Error;

pub use kdtree::{brute_force_knn, KnnIndex, Neighbor};

/// Default neighborhood size for covariance estimation.
pub const DEFAULT_KNN_K: usize = 20;

/// Neighborhoods whose largest eigenvalue is below this are treated as coincident points.
pub const DEGENERATE_EIGENVALUE: f64 = 1e-12;

/// `λ₂/λ₃` below this marks a line-like neighborhood.
pub const LINE_RATIO: f64 = 0.01;

#[derive(Debug, Error)]
pub enum PointCloudError {
    #[error("file length {len} is not a positive multiple of 16 bytes")]
    TruncatedFile { len: usize },
    #[error("non-finite coordinate at point {index}")]
    NonFiniteData { index: usize },
    #[error("point {index} lies at the sensor origin")]
    ZeroRange { index: usize },
    #[error("point cloud is empty")]
    Empty,
    #[error("{points} points but {intensities} intensities")]
    LengthMismatch { points: usize, intensities: usize },
    #[error("need more than k = {k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("no .bin frames in {0}")]
    NoFrames(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Local surface description from the covariance of a point's neighborhood.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceStats {
    /// Unit eigenvector of the smallest eigenvalue, oriented toward the sensor.
    pub normal: Vector3<f64>,
    /// Ascending eigenvalues `λ₁ ≤ λ₂ ≤ λ₃` (m²).
    pub eigenvalues: [f64; 3],
    pub neighbor_count: usize,
}

impl SurfaceStats {
    /// `(λ₁+λ₂+λ₃)/λ₁`; infinite for an exact plane.
    pub fn planarity_ratio(&self) -> f64 {
        let [l1, l2, l3] = self.eigenvalues;
        let sum = l1 + l2 + l3;
        if l1 > 0.0 {
            sum / l1
        } else {
            f64::INFINITY
        }
    }

    /// True when the neighborhood spreads along one direction only.
    pub fn is_line_like(&self) -> bool {
        let [_, l2, l3] = self.eigenvalues;
        l2 < LINE_RATIO * l3
    }
}

/// One lidar sweep in the sensor frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PointFrame {
    pub points: Vec<Vector3<f64>>,
    pub intensity: Vec<f64>,
    pub frame_index: usize,
    /// Per-point statistics; `None` entries are degenerate neighborhoods.
    pub stats: Option<Vec<Option<SurfaceStats>>>,
}

impl PointFrame {
    /// Validates finiteness, non-zero range and matching lengths.
    pub fn new(
        points: Vec<Vector3<f64>>,
        intensity: Vec<f64>,
        frame_index: usize,
    ) -> Result<Self, PointCloudError> {
        if points.is_empty() {
            return Err(PointCloudError::Empty);
        }
        if points.len() != intensity.len() {
            return Err(PointCloudError::LengthMismatch {
                points: points.len(),
                intensities: intensity.len(),
            });
        }
        for (index, p) in points.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) || !intensity[index].is_finite() {
                return Err(PointCloudError::NonFiniteData { index });
            }
            if p.norm_squared() == 0.0 {
                return Err(PointCloudError::ZeroRange { index });
            }
        }
        Ok(Self {
            points,
            intensity,
            frame_index,
            stats: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn stats_of(&self, i: usize) -> Option<&SurfaceStats> {
        self.stats.as_ref().and_then(|s| s[i].as_ref())
    }

    /// Same sweep expressed after applying `pose` to every point. Statistics
    /// are dropped; normals would otherwise need re-orientation.
    pub fn transformed(&self, pose: &crate::liegroup::Pose) -> PointFrame {
        PointFrame {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
            intensity: self.intensity.clone(),
            frame_index: self.frame_index,
            stats: None,
        }
    }
}

/// Parses a KITTI Velodyne `.bin` file: little-endian f32 `(x, y, z, reflectance)` records.
pub fn read_kitti_bin(path: &Path, frame_index: usize) -> Result<PointFrame, PointCloudError> {
    let bytes = fs::read(path).map_err(|source| PointCloudError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_kitti_bin(&bytes, frame_index)
}

pub fn parse_kitti_bin(bytes: &[u8], frame_index: usize) -> Result<PointFrame, PointCloudError> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(16) {
        return Err(PointCloudError::TruncatedFile { len: bytes.len() });
    }
    let n = bytes.len() / 16;
    let mut points = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for (index, rec) in bytes.chunks_exact(16).enumerate() {
        let f = |k: usize| f32::from_le_bytes([rec[4 * k], rec[4 * k + 1], rec[4 * k + 2], rec[4 * k + 3]]);
        let (x, y, z, r) = (f(0), f(1), f(2), f(3));
        if !(x.is_finite() && y.is_finite() && z.is_finite() && r.is_finite()) {
            return Err(PointCloudError::NonFiniteData { index });
        }
        points.push(Vector3::new(x as f64, y as f64, z as f64));
        intensity.push(r as f64);
    }
    PointFrame::new(points, intensity, frame_index)
}

pub fn encode_kitti_bin(frame: &PointFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame.len() * 16);
    for (p, i) in frame.points.iter().zip(&frame.intensity) {
        for v in [p[0], p[1], p[2], *i] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_kitti_bin(frame: &PointFrame, path: &Path) -> Result<(), PointCloudError> {
    fs::write(path, encode_kitti_bin(frame)).map_err(|source| PointCloudError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Lists `*.bin` files of a sequence in lexicographic (temporal) order.
/// Accepts either the sequence directory or its `velodyne/` subdirectory.
pub fn list_sequence_frames(dir: &Path) -> Result<Vec<PathBuf>, PointCloudError> {
    let velodyne = dir.join("velodyne");
    let root = if velodyne.is_dir() { velodyne } else { dir.to_path_buf() };
    let io_err = |source| PointCloudError::Io {
        path: root.clone(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(&root).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.extension().is_some_and(|e| e == "bin") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(PointCloudError::NoFrames(root));
    }
    Ok(files)
}

pub fn build_knn_index(frame: &PointFrame) -> KnnIndex {
    KnnIndex::new(&frame.points)
}

/// Mean-centered covariance of a neighborhood (divided by the count).
pub fn neighborhood_covariance(points: &[Vector3<f64>], neighbors: &[Neighbor]) -> Matrix3<f64> {
    let n = neighbors.len() as f64;
    let mean = neighbors
        .iter()
        .fold(Vector3::zeros(), |acc, nb| acc + points[nb.index])
        / n;
    neighbors.iter().fold(Matrix3::zeros(), |acc, nb| {
        let d = points[nb.index] - mean;
        acc + d * d.transpose()
    }) / n
}

/// Eigen-decomposition of a neighborhood covariance into [`SurfaceStats`].
/// Returns `None` when all neighbors coincide.
pub fn stats_from_covariance(
    cov: &Matrix3<f64>,
    point: &Vector3<f64>,
    neighbor_count: usize,
) -> Option<SurfaceStats> {
    let eig = SymmetricEigen::new(*cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.map(|i| eig.eigenvalues[i].max(0.0));
    if eigenvalues[2] < DEGENERATE_EIGENVALUE {
        return None;
    }
    let mut normal: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    normal /= normal.norm();
    if normal.dot(&(-point)) < 0.0 {
        normal = -normal;
    }
    Some(SurfaceStats {
        normal,
        eigenvalues,
        neighbor_count,
    })
}

/// Fills `frame.stats` from the covariance of each point's `k` nearest neighbors
/// (the point itself included).
pub fn compute_surface_stats(mut frame: PointFrame, k: usize) -> Result<PointFrame, PointCloudError> {
    if frame.len() <= k {
        return Err(PointCloudError::TooFewPoints { n: frame.len(), k });
    }
    let index = build_knn_index(&frame);
    let stats = frame
        .points
        .par_iter()
        .map(|p| {
            let nbrs = index.knn(p, k);
            let cov = neighborhood_covariance(&frame.points, &nbrs);
            stats_from_covariance(&cov, p, nbrs.len())
        })
        .collect();
    frame.stats = Some(stats);
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cyclic Jacobi eigenvalue iteration for a symmetric 3x3 matrix.
    fn jacobi_eigenvalues(m: &Matrix3<f64>) -> [f64; 3] {
        let mut a = *m;
        for _ in 0..100 {
            let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
            if off < 1e-30 {
                break;
            }
            for (p, q) in [(0, 1), (0, 2), (1, 2)] {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let mut j = Matrix3::identity();
                j[(p, p)] = c;
                j[(q, q)] = c;
                j[(p, q)] = s;
                j[(q, p)] = -s;
                a = j.transpose() * a * j;
            }
        }
        let mut e = [a[(0, 0)], a[(1, 1)], a[(2, 2)]];
        e.sort_by(f64::total_cmp);
        e
    }

    fn frame_from(points: Vec<Vector3<f64>>) -> PointFrame {
        let n = points.len();
        PointFrame::new(points, vec![1.0; n], 0).unwrap()
    }

    #[test]
    fn single_record() {
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 0.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let f = parse_kitti_bin(&bytes, 0).unwrap();
        assert_eq!(f.points, vec![Vector3::new(1.0, 2.0, 3.0)]);
        assert_eq!(f.intensity, vec![0.5]);
    }

    #[test]
    fn empty_and_truncated_files() {
        assert!(matches!(parse_kitti_bin(&[], 0), Err(PointCloudError::TruncatedFile { len: 0 })));
        assert!(matches!(parse_kitti_bin(&[0u8; 20], 0), Err(PointCloudError::TruncatedFile { len: 20 })));
    }

    #[test]
    fn two_records_keep_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("000000.bin");
        let mut bytes = Vec::new();
        for v in [1.0f32, 0.0, 0.0, 0.1, -4.0, 2.5, 0.25, 0.9] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&path, &bytes).unwrap();
        let f = read_kitti_bin(&path, 3).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f.frame_index, 3);
        assert_eq!(f.points[0], Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(f.points[1], Vector3::new(-4.0, 2.5, 0.25));
        assert_relative_eq!(f.intensity[1], 0.9f32 as f64);
    }

    #[test]
    fn non_finite_rejected() {
        let mut bytes = Vec::new();
        for v in [1.0f32, f32::NAN, 0.0, 0.1] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(parse_kitti_bin(&bytes, 0), Err(PointCloudError::NonFiniteData { index: 0 })));
    }

    #[test]
    fn origin_point_rejected() {
        let r = PointFrame::new(vec![Vector3::zeros()], vec![1.0], 0);
        assert!(matches!(r, Err(PointCloudError::ZeroRange { index: 0 })));
    }

    #[test]
    fn encode_round_trip() {
        let f = PointFrame::new(
            vec![Vector3::new(1.5, -2.25, 0.125), Vector3::new(10.0, 0.5, -1.75)],
            vec![0.5, 0.75],
            0,
        )
        .unwrap();
        assert_eq!(parse_kitti_bin(&encode_kitti_bin(&f), 0).unwrap(), f);
    }

    #[test]
    fn plane_normal() {
        let pts: Vec<_> = (0..400)
            .map(|i| Vector3::new((i % 20) as f64 * 0.1 - 1.0, (i / 20) as f64 * 0.1 - 1.0, -1.5))
            .collect();
        let f = compute_surface_stats(frame_from(pts), 20).unwrap();
        for i in 0..f.len() {
            let s = f.stats_of(i).unwrap();
            assert!(s.eigenvalues[0] < 1e-9);
            // Plane below the sensor: the normal points up toward the origin.
            assert_relative_eq!(s.normal, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-9);
        }
    }

    #[test]
    fn line_is_flagged_line_like() {
        let pts: Vec<_> = (1..100).map(|i| Vector3::new(i as f64 * 0.1, 2.0, 0.0)).collect();
        let f = compute_surface_stats(frame_from(pts), 10).unwrap();
        for i in 0..f.len() {
            let s = f.stats_of(i).unwrap();
            assert!(s.eigenvalues[0] < 1e-12 && s.eigenvalues[1] < 1e-12);
            assert!(s.eigenvalues[2] > 0.0);
            assert!(s.is_line_like());
        }
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let mut pts = vec![Vector3::new(1.0, 1.0, 1.0); 30];
        pts.push(Vector3::new(50.0, 0.0, 0.0));
        let f = compute_surface_stats(frame_from(pts), 10).unwrap();
        assert!(f.stats_of(0).is_none());
    }

    #[test]
    fn needs_more_points_than_k() {
        let pts = vec![Vector3::new(1.0, 0.0, 0.0); 5];
        assert!(matches!(
            compute_surface_stats(frame_from(pts), 5),
            Err(PointCloudError::TooFewPoints { n: 5, k: 5 })
        ));
    }

    #[test]
    fn quadric_patch_eigenvalues_match_jacobi() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = (0..300)
            .map(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                let y: f64 = rng.random_range(-1.0..1.0);
                Vector3::new(x + 4.0, y, 0.3 * x * x - 0.2 * x * y + 0.5 * y * y - 1.0)
            })
            .collect();
        let f = compute_surface_stats(frame_from(pts.clone()), 20).unwrap();
        let index = KnnIndex::new(&pts);
        for i in (0..pts.len()).step_by(7) {
            let s = f.stats_of(i).unwrap();
            let nb = index.knn(&pts[i], 20);
            let cov = neighborhood_covariance(&pts, &nb);
            let oracle = jacobi_eigenvalues(&cov);
            for d in 0..3 {
                assert!((s.eigenvalues[d] - oracle[d].max(0.0)).abs() < 1e-8);
            }
            // Conservation: eigenvalue sum equals the covariance trace.
            assert!((s.eigenvalues.iter().sum::<f64>() - cov.trace()).abs() < 1e-10);
            assert!((s.normal.norm() - 1.0).abs() < 1e-9);
            assert!(s.normal.dot(&(-pts[i])) >= 0.0);
            assert!(s.eigenvalues[0] <= s.eigenvalues[1] && s.eigenvalues[1] <= s.eigenvalues[2]);
        }
    }

    #[test]
    fn list_frames_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let vel = dir.path().join("velodyne");
        fs::create_dir(&vel).unwrap();
        for name in ["000002.bin", "000000.bin", "000001.bin", "notes.txt"] {
            fs::write(vel.join(name), [0u8; 16]).unwrap();
        }
        let files = list_sequence_frames(dir.path()).unwrap();
        let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
        assert_eq!(names, vec!["000000.bin", "000001.bin", "000002.bin"]);
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(list_sequence_frames(empty.path()), Err(PointCloudError::NoFrames(_))));
    }
}
