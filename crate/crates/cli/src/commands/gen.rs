use std::path::PathBuf;

use clap::ValueEnum;
use log::info;
use multipatch::dataset::{render_scene, write_scene, SceneSpec};

use crate::config::{require_exists, RunConfig};
use crate::error::{invalid, CliResult};
use crate::manifest::Manifest;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    /// Fronto-parallel plane at `--depth`.
    Plane,
    /// Slanted plane with two spheres.
    Benchmark,
    /// Textured plane with specular highlights.
    Specular,
    /// Randomized training scene.
    Training,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Scene description (JSON). Mutually exclusive with --preset.
    #[arg(long, conflicts_with = "preset")]
    spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Plane depth for the plane preset.
    #[arg(long, default_value_t = 0.7)]
    depth: f64,
    /// Override the camera count.
    #[arg(long)]
    views: Option<usize>,
    /// Scene directory to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Args {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.views {
            cfg.views = v;
        }
        if let Some(o) = &self.out {
            cfg.paths.out = Some(o.clone());
        }
    }
}

pub fn run(args: &Args, cfg: &RunConfig) -> CliResult<()> {
    let out = cfg.out_dir()?;
    let mut manifest = Manifest::new("gen", cfg);
    let mut spec = match (&args.spec, args.preset) {
        (Some(path), _) => {
            require_exists(path, "scene spec")?;
            manifest.input(path)?;
            let text = std::fs::read_to_string(path)?;
            let mut spec: SceneSpec = serde_json::from_str(&text).map_err(|e| invalid!("scene spec {}: {e}", path.display()))?;
            spec.seed = cfg.seed;
            spec
        }
        (None, Some(Preset::Plane)) => SceneSpec::plane(cfg.seed, args.depth),
        (None, Some(Preset::Benchmark)) => SceneSpec::benchmark(cfg.seed),
        (None, Some(Preset::Specular)) => SceneSpec::specular(cfg.seed),
        (None, Some(Preset::Training)) => SceneSpec::training(cfg.seed, args.views.unwrap_or(cfg.views)),
        (None, None) => SceneSpec {
            seed: cfg.seed,
            ..SceneSpec::default()
        },
    };
    if let Some(v) = args.views {
        spec.cameras.count = v;
    }
    spec.validate()?;
    info!("rendering {}x{} scene with {} views", spec.width, spec.height, spec.cameras.count);
    let scene = render_scene(&spec)?;
    write_scene(&scene, out)?;
    manifest.output(out)?;
    manifest.results = serde_json::json!({
        "views": scene.views.len(),
        "gt_valid_pixels": scene.gt_depth.valid_count(),
    });
    manifest.write(out)?;
    info!("wrote {}", out.display());
    Ok(())
}
