//! Synthetic scenes, trajectories and sweeps with exact ground truth.
//!
//! Sweeps are produced by density sampling of primitive surfaces rather than
//! ray casting: each visible surface within range receives points at a fixed
//! areal density, and there is no occlusion between primitives. Faces of boxes
//! and cylinders facing away from the sensor are culled. With a falloff range
//! set, density beyond it decays as `1/r²`, roughly as for a spinning lidar.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;
use crate::liegroup::{exp_map, Pose, Twist};
use crate::pointcloud::PointFrame;
use crate::trajectory::Trajectory;

pub const DEFAULT_MAX_RANGE: f64 = 80.0;
/// Returns closer than this are discarded, as a real sensor would.
pub const MIN_RANGE: f64 = 1.0;
/// Height of the sensor above the floor in the preset scenes.
pub const SENSOR_HEIGHT: f64 = 1.73;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no surface within range of the sensor at frame {frame_index}")]
    EmptySweep { frame_index: usize },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("scene JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Primitive {
    /// Two-sided parallelogram `origin + s·u + t·v`, `s, t ∈ [0, 1]`, with `u ⟂ v`.
    Rect {
        origin: [f64; 3],
        u: [f64; 3],
        v: [f64; 3],
        reflectance: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        density: Option<f64>,
    },
    /// Box rotated by `yaw` about the vertical axis.
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
        #[serde(default)]
        yaw: f64,
        reflectance: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        density: Option<f64>,
    },
    /// Vertical cylinder without caps; `base` is the center of the bottom circle.
    Cylinder {
        base: [f64; 3],
        radius: f64,
        height: f64,
        reflectance: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        density: Option<f64>,
    },
}

impl Primitive {
    fn density(&self) -> Option<f64> {
        match self {
            Primitive::Rect { density, .. } | Primitive::Box { density, .. } | Primitive::Cylinder { density, .. } => {
                *density
            }
        }
    }

    fn reflectance(&self) -> f64 {
        match self {
            Primitive::Rect { reflectance, .. }
            | Primitive::Box { reflectance, .. }
            | Primitive::Cylinder { reflectance, .. } => *reflectance,
        }
    }

    fn validate(&self) -> Result<(), String> {
        if let Some(d) = self.density() {
            if !(d > 0.0 && d.is_finite()) {
                return Err(format!("density {d} must be positive"));
            }
        }
        let r = self.reflectance();
        if !(r > 0.0 && r.is_finite()) {
            return Err(format!("reflectance {r} must be positive"));
        }
        match self {
            Primitive::Rect { u, v, .. } => {
                let (u, v) = (Vector3::from(*u), Vector3::from(*v));
                if u.norm() == 0.0 || v.norm() == 0.0 {
                    return Err("rect edges must be non-zero".into());
                }
                if u.dot(&v).abs() > 1e-9 * u.norm() * v.norm() {
                    return Err("rect edges must be orthogonal".into());
                }
            }
            Primitive::Box { half_extents, .. } => {
                if half_extents.iter().any(|h| !(*h > 0.0)) {
                    return Err("box half extents must be positive".into());
                }
            }
            Primitive::Cylinder { radius, height, .. } => {
                if !(*radius > 0.0 && *height > 0.0) {
                    return Err("cylinder radius and height must be positive".into());
                }
            }
        }
        Ok(())
    }
}

fn default_max_range() -> f64 {
    DEFAULT_MAX_RANGE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    /// Points per square meter, unless a primitive overrides it.
    pub point_density: f64,
    /// Isotropic Gaussian noise added to every point (m).
    pub noise_std: f64,
    pub seed: u64,
    #[serde(default = "default_max_range")]
    pub max_range: f64,
    /// Range beyond which density decays as `(falloff_range / r)²`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub falloff_range: Option<f64>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidScene(m));
        if !(self.point_density > 0.0 && self.point_density.is_finite()) {
            return bad(format!("point_density {} must be positive", self.point_density));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std {} must be non-negative", self.noise_std));
        }
        if !(self.max_range > MIN_RANGE) {
            return bad(format!("max_range {} must exceed {MIN_RANGE}", self.max_range));
        }
        if let Some(r) = self.falloff_range {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("falloff_range {r} must be positive"));
            }
        }
        for (i, p) in self.primitives.iter().enumerate() {
            p.validate().map_err(|m| SynthError::InvalidScene(format!("primitive {i}: {m}")))?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<SceneSpec, SynthError> {
        let s: SceneSpec = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn read(path: &Path) -> Result<SceneSpec, SynthError> {
        let text = fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// A straight corridor along +x with walls, parked cars and poles.
    /// The floor sits [`SENSOR_HEIGHT`] below the origin.
    pub fn corridor_with_boxes(seed: u64) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let floor = -SENSOR_HEIGHT;
        let (x0, x1) = (-60.0, 260.0);
        let mut prims = vec![
            floor_rect(x0, x1, -20.0, 20.0, floor),
            wall(x0, x1, 7.0, floor, 6.0, 0.3),
            wall(x0, x1, -7.0, floor, 6.0, 0.3),
        ];
        lane_markings(&mut prims, x0, x1, floor);
        let mut x = x0 + 5.0;
        while x < x1 - 5.0 {
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            prims.push(car(x, side * rng.random_range(3.5..5.0), floor, rng.random_range(-0.2..0.2), &mut rng));
            x += rng.random_range(6.0..14.0);
        }
        let mut x = x0 + 3.0;
        while x < x1 {
            prims.push(pole(x, 6.0, floor));
            prims.push(sign(x, 6.0, floor + 2.5, &mut rng));
            x += 15.0;
        }
        SceneSpec {
            primitives: prims,
            point_density: 12.0,
            noise_std: 0.01,
            seed,
            max_range: 40.0,
            falloff_range: Some(8.0),
        }
    }

    /// A long road along +x whose surroundings change every few tens of meters:
    /// wall distances and heights, parked-car density, building blocks and
    /// their orientation all vary by region, so geometric features vary along
    /// the route. Small retroreflective signs give compact bright targets.
    pub fn varied_route(length: f64, seed: u64) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let floor = -SENSOR_HEIGHT;
        let (x0, x1) = (-60.0, length + 60.0);
        let mut prims = vec![floor_rect(x0, x1, -40.0, 40.0, floor)];
        lane_markings(&mut prims, x0, x1, floor);
        let mut x = x0;
        while x < x1 {
            let len = rng.random_range(30.0..70.0);
            let end = (x + len).min(x1);
            // Each side: open, a wall, or a block of buildings.
            for side in [1.0, -1.0] {
                match rng.random_range(0..3) {
                    0 => {}
                    1 => {
                        let d = rng.random_range(6.0..14.0);
                        prims.push(wall(x, end, side * d, floor, rng.random_range(2.0..8.0), rng.random_range(0.2..0.5)));
                    }
                    _ => {
                        let yaw_spread = rng.random_range(0.0..0.5);
                        let mut bx = x;
                        while bx < end - 4.0 {
                            let w = rng.random_range(6.0..14.0_f64).min(end - bx);
                            let depth = rng.random_range(4.0..10.0);
                            let h = rng.random_range(2.5..6.0);
                            let d = rng.random_range(8.0..14.0);
                            prims.push(Primitive::Box {
                                center: [bx + w / 2.0, side * (d + depth / 2.0), floor + h / 2.0],
                                half_extents: [w / 2.0, depth / 2.0, h / 2.0],
                                yaw: rng.random_range(-yaw_spread..=yaw_spread),
                                reflectance: rng.random_range(0.2..0.5),
                                density: None,
                            });
                            if rng.random_bool(0.4) {
                                prims.push(canopy(bx + w / 2.0, side * (d - 1.0), floor + rng.random_range(2.6..3.4), w * 0.4, &mut rng));
                            }
                            bx += w + rng.random_range(1.0..5.0);
                        }
                    }
                }
                let car_rate = rng.random_range(0.0..1.0);
                let mut cx = x + rng.random_range(0.0..6.0);
                while cx < end - 3.0 {
                    if rng.random_bool(car_rate) {
                        let lateral = side * rng.random_range(3.5..5.5);
                        let yaw = rng.random_range(-0.3..0.3);
                        prims.push(car(cx, lateral, floor, yaw, &mut rng));
                    }
                    cx += rng.random_range(5.0..8.0);
                }
            }
            if rng.random_bool(0.7) {
                let spacing = rng.random_range(10.0..25.0);
                let mut px = x + 2.0;
                while px < end {
                    let py = if rng.random_bool(0.5) { 5.5 } else { -5.5 };
                    prims.push(pole(px, py, floor));
                    if rng.random_bool(0.6) {
                        prims.push(sign(px, py, floor + rng.random_range(2.2..3.2), &mut rng));
                    }
                    px += spacing;
                }
            }
            x = end;
        }
        SceneSpec {
            primitives: prims,
            point_density: 12.0,
            noise_std: 0.01,
            seed,
            max_range: 40.0,
            falloff_range: Some(8.0),
        }
    }
}

fn floor_rect(x0: f64, x1: f64, y0: f64, y1: f64, z: f64) -> Primitive {
    Primitive::Rect {
        origin: [x0, y0, z],
        u: [x1 - x0, 0.0, 0.0],
        v: [0.0, y1 - y0, 0.0],
        reflectance: 0.15,
        density: Some(3.0),
    }
}

fn wall(x0: f64, x1: f64, y: f64, floor: f64, height: f64, reflectance: f64) -> Primitive {
    Primitive::Rect {
        origin: [x0, y, floor],
        u: [x1 - x0, 0.0, 0.0],
        v: [0.0, 0.0, height],
        reflectance,
        density: None,
    }
}

fn car(x: f64, y: f64, floor: f64, yaw: f64, rng: &mut ChaCha8Rng) -> Primitive {
    let h = rng.random_range(0.7..0.9);
    Primitive::Box {
        center: [x, y, floor + h],
        half_extents: [rng.random_range(1.9..2.4), rng.random_range(0.8..1.0), h],
        yaw,
        reflectance: rng.random_range(0.3..0.8),
        density: Some(30.0),
    }
}

/// Painted road lines: a dashed center line and two solid edge lines.
fn lane_markings(prims: &mut Vec<Primitive>, x0: f64, x1: f64, floor: f64) {
    let paint = |x: f64, y: f64, len: f64, width: f64| Primitive::Rect {
        origin: [x, y - width / 2.0, floor + 0.005],
        u: [len, 0.0, 0.0],
        v: [0.0, width, 0.0],
        reflectance: 0.9,
        density: Some(80.0),
    };
    let mut x = x0;
    while x < x1 {
        prims.push(paint(x, 0.0, 3.0_f64.min(x1 - x), 0.15));
        x += 9.0;
    }
    for y in [-3.2, 3.2] {
        prims.push(paint(x0, y, x1 - x0, 0.12));
    }
}

/// Thin horizontal slab whose underside is visible from the road.
fn canopy(x: f64, y: f64, z: f64, half_width: f64, rng: &mut ChaCha8Rng) -> Primitive {
    Primitive::Box {
        center: [x, y, z],
        half_extents: [half_width, rng.random_range(0.8..1.5), 0.1],
        yaw: 0.0,
        reflectance: rng.random_range(0.2..0.5),
        density: None,
    }
}

/// Retroreflective plate facing along the road.
fn sign(x: f64, y: f64, z: f64, rng: &mut ChaCha8Rng) -> Primitive {
    Primitive::Box {
        center: [x, y, z],
        half_extents: [0.05, 0.4, 0.4],
        yaw: rng.random_range(-0.3..0.3),
        reflectance: rng.random_range(0.97..1.0),
        density: Some(150.0),
    }
}

fn pole(x: f64, y: f64, floor: f64) -> Primitive {
    Primitive::Cylinder {
        base: [x, y, floor],
        radius: 0.15,
        height: 6.0,
        reflectance: 0.6,
        density: Some(40.0),
    }
}

struct Sampler<'a> {
    sensor: Vector3<f64>,
    max_range: f64,
    falloff_range: Option<f64>,
    rng: &'a mut ChaCha8Rng,
    out: &'a mut Vec<(Vector3<f64>, f64)>,
}

impl Sampler<'_> {
    fn keep(&mut self, p: Vector3<f64>, reflectance: f64) {
        let r = (p - self.sensor).norm();
        if !(MIN_RANGE..=self.max_range).contains(&r) {
            return;
        }
        if let Some(r0) = self.falloff_range {
            if r > r0 && !self.rng.random_bool((r0 / r).powi(2)) {
                return;
            }
        }
        self.out.push((p, reflectance));
    }

    fn count(&mut self, expected: f64) -> usize {
        // Stochastic rounding keeps the expected density exact for small areas.
        let base = expected.floor();
        let extra = self.rng.random_bool((expected - base).clamp(0.0, 1.0));
        base as usize + extra as usize
    }

    /// Samples `origin + s·u + t·v`; `outward` culls faces seen from behind.
    fn rect(
        &mut self,
        origin: Vector3<f64>,
        u: Vector3<f64>,
        v: Vector3<f64>,
        outward: Option<Vector3<f64>>,
        density: f64,
        reflectance: f64,
    ) {
        let n = u.cross(&v).normalize();
        let rel = self.sensor - origin;
        let d = rel.dot(&n);
        if d.abs() >= self.max_range {
            return;
        }
        if let Some(o) = outward {
            if rel.dot(&o) <= 0.0 {
                return;
            }
        }
        // Part of the rect inside the square bounding the range disk.
        let rho = (self.max_range * self.max_range - d * d).sqrt();
        let (lu, lv) = (u.norm(), v.norm());
        let (sc, tc) = (rel.dot(&u) / (lu * lu), rel.dot(&v) / (lv * lv));
        let (s0, s1) = ((sc - rho / lu).max(0.0), (sc + rho / lu).min(1.0));
        let (t0, t1) = ((tc - rho / lv).max(0.0), (tc + rho / lv).min(1.0));
        if s0 >= s1 || t0 >= t1 {
            return;
        }
        let area = (s1 - s0) * lu * (t1 - t0) * lv;
        let n_pts = self.count(area * density);
        for _ in 0..n_pts {
            let s = self.rng.random_range(s0..s1);
            let t = self.rng.random_range(t0..t1);
            self.keep(origin + u * s + v * t, reflectance);
        }
    }
}

fn sample_primitive(prim: &Primitive, scene: &SceneSpec, sampler: &mut Sampler) {
    let density = prim.density().unwrap_or(scene.point_density);
    let reflectance = prim.reflectance();
    match prim {
        Primitive::Rect { origin, u, v, .. } => {
            sampler.rect(Vector3::from(*origin), Vector3::from(*u), Vector3::from(*v), None, density, reflectance);
        }
        Primitive::Box {
            center,
            half_extents,
            yaw,
            ..
        } => {
            let c = Vector3::from(*center);
            let reach = Vector3::from(*half_extents).norm();
            if (c - sampler.sensor).norm() - reach > sampler.max_range {
                return;
            }
            let rot = Pose::rot_z(*yaw).rotation;
            let axes = [rot.column(0).into_owned(), rot.column(1).into_owned(), rot.column(2).into_owned()];
            for k in 0..3 {
                let (a, b) = ((k + 1) % 3, (k + 2) % 3);
                for sign in [1.0, -1.0] {
                    let normal = axes[k] * sign;
                    let face_center = c + normal * half_extents[k];
                    let ea = axes[a] * half_extents[a];
                    let eb = axes[b] * half_extents[b];
                    sampler.rect(face_center - ea - eb, ea * 2.0, eb * 2.0, Some(normal), density, reflectance);
                }
            }
        }
        Primitive::Cylinder {
            base, radius, height, ..
        } => {
            let b = Vector3::from(*base);
            let horiz = Vector3::new(sampler.sensor.x - b.x, sampler.sensor.y - b.y, 0.0);
            if horiz.norm() - radius > sampler.max_range || horiz.norm() <= *radius {
                return;
            }
            let n_pts = sampler.count(2.0 * PI * radius * height * density);
            for _ in 0..n_pts {
                let theta = sampler.rng.random_range(-PI..PI);
                let dir = Vector3::new(theta.cos(), theta.sin(), 0.0);
                if dir.dot(&horiz) <= *radius {
                    // Facing away from (or grazing) the sensor.
                    continue;
                }
                let z = sampler.rng.random_range(0.0..*height);
                sampler.keep(b + dir * *radius + Vector3::new(0.0, 0.0, z), reflectance);
            }
        }
    }
}

fn frame_rng(scene: &SceneSpec, frame_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    rng.set_stream(frame_index as u64);
    rng
}

/// One sweep seen from `sensor_pose` (sensor to world), in sensor coordinates.
/// Intensity is `reflectance / r²`, so `I·r²` recovers the reflectance.
pub fn generate_sweep(scene: &SceneSpec, sensor_pose: &Pose, frame_index: usize) -> Result<PointFrame, SynthError> {
    scene.validate()?;
    let mut rng = frame_rng(scene, frame_index);
    let mut world = Vec::new();
    let mut sampler = Sampler {
        sensor: sensor_pose.translation,
        max_range: scene.max_range,
        falloff_range: scene.falloff_range,
        rng: &mut rng,
        out: &mut world,
    };
    for prim in &scene.primitives {
        sample_primitive(prim, scene, &mut sampler);
    }
    let to_sensor = sensor_pose.inverse();
    let mut points = Vec::with_capacity(world.len());
    let mut intensity = Vec::with_capacity(world.len());
    for (p, refl) in world {
        let mut q = to_sensor.transform_point(&p);
        if scene.noise_std > 0.0 {
            let n: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            q += Vector3::from(n) * scene.noise_std;
        }
        let r2 = q.norm_squared();
        if r2 == 0.0 {
            continue;
        }
        points.push(q);
        intensity.push(refl / r2);
    }
    if points.is_empty() {
        return Err(SynthError::EmptySweep { frame_index });
    }
    Ok(PointFrame::new(points, intensity, frame_index).expect("synthetic points are finite and non-zero"))
}

/// Sweeps for `poses`, numbered from `first_index`, generated in parallel.
pub fn generate_frames(scene: &SceneSpec, poses: &[Pose], first_index: usize) -> Result<Vec<PointFrame>, SynthError> {
    poses
        .par_iter()
        .enumerate()
        .map(|(i, p)| generate_sweep(scene, p, first_index + i))
        .collect()
}

/// One sweep per trajectory pose, plus the matching ground truth.
pub fn generate_sequence(scene: &SceneSpec, trajectory: &Trajectory) -> Result<(Vec<PointFrame>, Trajectory), SynthError> {
    let frames = generate_frames(scene, &trajectory.poses, 0)?;
    Ok((frames, trajectory.clone()))
}

/// Lazily generated sweeps, for sequences too long to hold in memory.
pub fn sweeps<'a>(
    scene: &'a SceneSpec,
    trajectory: &'a Trajectory,
) -> impl Iterator<Item = Result<PointFrame, SynthError>> + 'a {
    trajectory
        .poses
        .iter()
        .enumerate()
        .map(move |(i, p)| generate_sweep(scene, p, i))
}

/// Trajectory built from per-frame `(forward distance, yaw change)` steps,
/// starting at `start`.
pub fn path_from_steps(start: Pose, steps: impl IntoIterator<Item = (f64, f64)>) -> Trajectory {
    let mut poses = vec![start];
    for (ds, dyaw) in steps {
        let prev = *poses.last().expect("non-empty");
        let step = Pose::new(Pose::rot_z(dyaw).rotation, Vector3::new(ds, 0.0, 0.0));
        poses.push(prev * step);
    }
    Trajectory::new(poses)
}

/// `n` poses along +x, `step` meters apart.
pub fn straight_path(n: usize, step: f64) -> Trajectory {
    path_from_steps(Pose::identity(), std::iter::repeat_n((step, 0.0), n.saturating_sub(1)))
}

/// Straight, then a constant-rate turn by `angle` over `n_turn` frames, then straight.
pub fn path_with_turn(n_before: usize, n_turn: usize, n_after: usize, step: f64, angle: f64) -> Trajectory {
    let rate = if n_turn > 0 { angle / n_turn as f64 } else { 0.0 };
    let steps = std::iter::repeat_n((step, 0.0), n_before)
        .chain(std::iter::repeat_n((step, rate), n_turn))
        .chain(std::iter::repeat_n((step, 0.0), n_after));
    path_from_steps(Pose::identity(), steps)
}

/// Path along +x whose heading oscillates with amplitude `yaw_amplitude` (rad)
/// and period `wavelength` (m).
pub fn weaving_path(n: usize, step: f64, yaw_amplitude: f64, wavelength: f64) -> Trajectory {
    let yaw = |i: usize| yaw_amplitude * (2.0 * PI * i as f64 * step / wavelength).sin();
    path_from_steps(Pose::identity(), (1..n).map(|i| (step, yaw(i) - yaw(i - 1))))
}

/// Corrupts `base` so that its per-frame error relative to `base`,
/// `log(T_base,{τ,τ−1} · T_out,{τ,τ−1}⁻¹)`, equals `bias[τ]` for `τ ≥ 1`.
/// `bias[0]` is ignored.
pub fn inject_bias_twists(base: &Trajectory, bias: &[Twist]) -> Trajectory {
    assert_eq!(base.len(), bias.len(), "one bias per frame");
    let mut poses = Vec::with_capacity(base.len());
    if let Some(first) = base.poses.first() {
        poses.push(*first);
    }
    for tau in 1..base.len() {
        // P_out,τ = P_out,τ−1 · T_base,{τ,τ−1}⁻¹ · exp(b)
        let step = base.step(tau);
        let prev = *poses.last().expect("non-empty");
        poses.push(prev * step * exp_map(&bias[tau]));
    }
    Trajectory {
        poses,
        frame_period: base.frame_period,
    }
}

/// [`inject_bias_twists`] with the bias of each frame computed from its features.
pub fn inject_bias(base: &Trajectory, features: &[FeatureVector], bias_fn: impl Fn(&FeatureVector) -> Twist) -> Trajectory {
    let bias: Vec<Twist> = features.iter().map(bias_fn).collect();
    inject_bias_twists(base, &bias)
}
