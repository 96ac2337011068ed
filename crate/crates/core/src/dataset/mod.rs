//! Synthetic scenes with exact ground truth, training-patch sampling and the training loop.

mod cache;
mod presets;
mod sample;
mod scene;
mod store;
mod texture;
mod train;

pub use cache::{decode_patch_cache, encode_patch_cache, read_patch_cache, write_patch_cache};
pub use sample::{
    extract_views, sample_from_scenes, sample_patches, BatchSource, PatchPool, PatchSample, SamplerConfig, SceneSampler,
};
pub use scene::{render_scene, van_der_corput, CameraRing, Scene, SceneSpec, Specular, Surface};
pub use store::{image_path, load_scene, write_scene};
pub use texture::Texture;
pub use train::{
    block_means, classification_accuracy, train, CurvePoint, TrainReport, TrainSchedule, TrainState,
};

/// Derive an independent stream seed from a master seed and an index.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
