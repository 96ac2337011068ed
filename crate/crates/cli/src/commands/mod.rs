pub mod bench;
pub mod eval;
pub mod gen;
pub mod gradcheck;
pub mod sample;
pub mod sweep;
pub mod train;

use std::path::Path;

use log::info;
use multipatch::dataset::{load_scene, mix_seed, render_scene, Scene, SceneSpec};
use multipatch::nn::{load_weights, Fusion, NetworkWeights};
use multipatch::similarity::MeasureKind;
use multipatch::sweep::Measure;

use crate::config::{require_exists, RunConfig};
use crate::error::{invalid, CliResult};
use crate::manifest::Manifest;

/// Seed streams derived from the run seed.
pub const SCENE_STREAM: u64 = 0;
pub const HOLDOUT_STREAM: u64 = 1 << 20;
pub const SAMPLE_STREAM: u64 = 2 << 20;
pub const INIT_STREAM: u64 = 3 << 20;

/// Scenes from `paths.train_scenes`, or freshly rendered training scenes.
pub fn training_scenes(cfg: &RunConfig, manifest: &mut Manifest) -> CliResult<Vec<Scene>> {
    if cfg.paths.train_scenes.is_empty() {
        let n = cfg.sampling.generated_scenes;
        if n == 0 {
            return Err(invalid!("no training scenes: pass --scene or set sampling.generated_scenes"));
        }
        info!("rendering {n} training scenes");
        return (0..n)
            .map(|i| Ok(render_scene(&SceneSpec::training(mix_seed(cfg.seed, SCENE_STREAM + i as u64), cfg.views))?))
            .collect();
    }
    cfg.paths
        .train_scenes
        .iter()
        .map(|dir| {
            require_exists(dir, "scene directory")?;
            manifest.input(dir)?;
            let scene = load_scene(dir)?;
            if scene.views.len() < cfg.views {
                return Err(invalid!("{} has {} views, {} needed", dir.display(), scene.views.len(), cfg.views));
            }
            Ok(scene)
        })
        .collect()
}

/// Noise-free scenes without highlights, disjoint from the training seeds.
pub fn holdout_scenes(cfg: &RunConfig, count: usize) -> CliResult<Vec<Scene>> {
    (0..count)
        .map(|i| {
            let mut spec = SceneSpec::training(mix_seed(cfg.seed, HOLDOUT_STREAM + i as u64), cfg.views);
            spec.speculars.clear();
            spec.noise_sigma = 0.0;
            Ok(render_scene(&spec)?)
        })
        .collect()
}

pub fn load_network(path: &Path, manifest: &mut Manifest) -> CliResult<NetworkWeights<f32>> {
    require_exists(path, "weights file")?;
    manifest.input(path)?;
    Ok(load_weights(path)?)
}

/// Weights for a learned measure, checked against the view count.
pub fn measure_weights(cfg: &RunConfig, manifest: &mut Manifest) -> CliResult<Option<NetworkWeights<f32>>> {
    if !cfg.measure.is_learned() {
        return Ok(None);
    }
    let path = cfg
        .paths
        .weights
        .as_deref()
        .ok_or_else(|| invalid!("measure {} needs --weights", cfg.measure))?;
    let w = load_network(path, manifest)?;
    if w.fusion == Fusion::Concat {
        let n = if cfg.measure == MeasureKind::LearnedPairwise { 2 } else { cfg.views };
        if n != w.n_views {
            return Err(invalid!(
                "concat-fusion weights were trained with {} views, the sweep feeds {n}",
                w.n_views
            ));
        }
    }
    Ok(Some(w))
}

pub fn measure<'a>(kind: MeasureKind, weights: Option<&'a NetworkWeights<f32>>) -> Measure<'a> {
    match (kind, weights) {
        (MeasureKind::Sad, _) => Measure::Sad,
        (MeasureKind::Zncc, _) => Measure::Zncc,
        (MeasureKind::LearnedPairwise, Some(w)) => Measure::LearnedPairwise(w),
        (MeasureKind::LearnedMulti, Some(w)) => Measure::LearnedMulti(w),
        (k, None) => unreachable!("learned measure {k} without weights"),
    }
}
