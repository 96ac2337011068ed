use std::path::PathBuf;
use std::time::Instant;

use log::info;
use multipatch::dataset::{load_scene, mix_seed, render_scene, SceneSpec};
use multipatch::eval::evaluate_depth;
use multipatch::geometry::depth_planes;
use multipatch::nn::NetworkWeights;
use multipatch::sweep::{box_filter_volume, build_cost_volume, extract_depth, tile_origins, Measure};
use serde::Serialize;

use super::{load_network, INIT_STREAM};
use crate::config::{require_exists, RunConfig};
use crate::error::{invalid, CliResult};
use crate::manifest::Manifest;

pub const REPORT_NAME: &str = "bench.json";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Scene directory; the benchmark preset is rendered when omitted.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Weights for the learned stage; randomly initialized when omitted.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    planes: usize,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Args {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = &self.scene {
            cfg.paths.scene = Some(s.clone());
        }
        if let Some(w) = &self.weights {
            cfg.paths.weights = Some(w.clone());
        }
        cfg.sweep.plane_count = self.planes;
        if let Some(v) = self.views {
            cfg.views = v;
        }
        if let Some(o) = &self.out {
            cfg.paths.out = Some(o.clone());
        }
    }
}

#[derive(Debug, Serialize)]
struct Stage {
    name: &'static str,
    seconds: f64,
}

fn timed<T>(stages: &mut Vec<Stage>, name: &'static str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
    let t = Instant::now();
    let v = f()?;
    let seconds = t.elapsed().as_secs_f64();
    info!("{name:<16} {seconds:>9.3} s");
    stages.push(Stage { name, seconds });
    Ok(v)
}

pub fn run(_args: &Args, cfg: &RunConfig) -> CliResult<()> {
    let out = cfg.out_dir()?;
    let mut manifest = Manifest::new("bench", cfg);
    let mut stages = Vec::new();
    let scene = timed(&mut stages, "scene", || match &cfg.paths.scene {
        Some(dir) => {
            require_exists(dir, "scene directory")?;
            manifest.input(dir)?;
            Ok(load_scene(dir)?)
        }
        None => Ok(render_scene(&SceneSpec::benchmark(cfg.seed))?),
    })?;
    if scene.views.len() < cfg.views {
        return Err(invalid!("the scene has {} views, {} requested", scene.views.len(), cfg.views));
    }
    let weights = match &cfg.paths.weights {
        Some(p) => load_network(p, &mut manifest)?,
        None => NetworkWeights::init(&cfg.network(), mix_seed(cfg.seed, INIT_STREAM))?,
    };
    let depths = depth_planes(&cfg.depth_range()?);
    let (reference, partners) = (&scene.views[0], &scene.views[1..cfg.views]);

    let zncc = timed(&mut stages, "zncc_volume", || {
        Ok(build_cost_volume(reference, partners, &depths, &Measure::Zncc, &cfg.sweep)?)
    })?;
    let learned = timed(&mut stages, "learned_volume", || {
        Ok(build_cost_volume(reference, partners, &depths, &Measure::LearnedMulti(&weights), &cfg.sweep)?)
    })?;
    let learned_seconds = stages.last().unwrap().seconds;
    let filtered = timed(&mut stages, "box_filter", || Ok(box_filter_volume(&learned, cfg.sweep.box_filter_radius)))?;
    let depth = timed(&mut stages, "extract", || Ok(extract_depth(&filtered, cfg.sweep.subpixel)))?;
    timed(&mut stages, "evaluate", || {
        Ok(evaluate_depth(&depth, &scene.gt_depth, &reference.camera, cfg.eval.truncation_mm, cfg.eval.unit_to_mm).ok())
    })?;
    drop(zncc);

    let (w, h) = (reference.image.width(), reference.image.height());
    let (g, _) = cfg.sweep.tile_grid();
    let step = g * cfg.sweep.score_stride;
    let tiles = tile_origins(w, cfg.sweep.tile_side, step)?.len() * tile_origins(h, cfg.sweep.tile_side, step)?.len();
    let network_scores = (depths.len() * tiles * g * g) as f64;
    let report = serde_json::json!({
        "image": [w, h],
        "views": cfg.views,
        "planes": depths.len(),
        "threads": rayon::current_num_threads(),
        "stages": stages,
        "learned_network_scores_per_second": network_scores / learned_seconds,
        "learned_pixel_planes_per_second": (depths.len() * w * h) as f64 / learned_seconds,
    });
    info!(
        "learned measure: {:.0} network scores/s, {:.0} pixel-planes/s",
        network_scores / learned_seconds,
        (depths.len() * w * h) as f64 / learned_seconds
    );
    std::fs::create_dir_all(out)?;
    let path = out.join(REPORT_NAME);
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
    manifest.output(&path)?;
    manifest.results = report;
    manifest.write(out)?;
    Ok(())
}
