//! Fixtures shared by the benchmarks.

use lbc_core::gp::{Dof, GpModel, Hyperparams};
use lbc_core::odometry::{preprocess, ProcessedFrame};
use lbc_core::synth::generate_sweep;
use lbc_core::{OdometryConfig, Pose, SceneSpec, Twist};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A raw corridor sweep at `x` meters along the corridor.
pub fn corridor_sweep(x: f64, frame_index: usize) -> lbc_core::PointFrame {
    let scene = SceneSpec::corridor_with_boxes(1);
    generate_sweep(&scene, &Pose::from_translation([x, 0.0, 0.0].into()), frame_index).expect("scene is valid")
}

/// Two consecutive preprocessed corridor sweeps, one meter apart.
pub fn corridor_pair() -> (ProcessedFrame, ProcessedFrame) {
    let cfg = OdometryConfig::default();
    let a = preprocess(corridor_sweep(0.0, 0), &cfg).expect("usable sweep");
    let b = preprocess(corridor_sweep(1.0, 1), &cfg).expect("usable sweep");
    (a, b)
}

pub fn random_twists(n: usize, scale: f64, seed: u64) -> Vec<Twist> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Twist::from_array(std::array::from_fn(|_| rng.random_range(-scale..scale))))
        .collect()
}

/// A GP on `n` random `dim`-dimensional inputs with a smooth target.
pub fn random_gp(n: usize, dim: usize, seed: u64) -> (GpModel, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: DMatrix<f64> = DMatrix::from_fn(n, dim, |_, _| rng.random_range(0.0..1.0));
    let y = DVector::from_fn(n, |i, _| (3.0 * x[(i, 0)]).sin() + 1e-3 * rng.random_range(-1.0..1.0_f64));
    let hyper = Hyperparams::new(&vec![0.3; dim], 1.0, 1e-2);
    let model = GpModel::condition(x, y, hyper, Dof::Z).expect("well conditioned");
    let queries = DMatrix::from_fn(100, dim, |_, _| rng.random_range(0.0..1.0));
    (model, queries)
}
