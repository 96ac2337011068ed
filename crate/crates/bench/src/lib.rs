//! Shared fixtures for the criterion benchmarks.

use multipatch::dataset::{render_scene, Scene, SceneSpec};
use multipatch::nn::{NetworkConfig, NetworkWeights, PATCH_SIDE};
use multipatch::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Nine-view benchmark scene.
pub fn scene() -> Scene {
    render_scene(&SceneSpec::benchmark(1)).expect("benchmark scene")
}

/// Default-sized network with random weights.
pub fn network() -> NetworkWeights<f32> {
    NetworkWeights::init(&NetworkConfig::default(), 1).expect("network init")
}

pub fn random_tensor(rng: &mut ChaCha8Rng, side: usize) -> Tensor<f32> {
    let data = (0..side * side).map(|_| rng.random::<f32>()).collect();
    Tensor::from_vec(&[1, side, side], data).expect("tensor")
}

/// Labelled tuples of `views` random patches.
pub fn random_batch(seed: u64, size: usize, views: usize) -> Vec<(Vec<Tensor<f32>>, u8)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|i| ((0..views).map(|_| random_tensor(&mut rng, PATCH_SIDE)).collect(), (i % 2) as u8))
        .collect()
}
