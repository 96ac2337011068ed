use std::path::PathBuf;

use log::info;
use multipatch::dataset::{mix_seed, sample_from_scenes, write_patch_cache, Scene};

use super::{training_scenes, SAMPLE_STREAM};
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::manifest::Manifest;

pub const CACHE_NAME: &str = "patches.bin";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Scene directories; training scenes are rendered when omitted.
    #[arg(long = "scene")]
    scenes: Vec<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    views: Option<usize>,
    /// Plane offset of negative samples.
    #[arg(long)]
    neg_offset: Option<usize>,
    /// Emit both negative twins per positive.
    #[arg(long)]
    both_twins: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Args {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if !self.scenes.is_empty() {
            cfg.paths.train_scenes = self.scenes.clone();
        }
        if let Some(c) = self.count {
            cfg.sampling.count = c;
        }
        if let Some(v) = self.views {
            cfg.views = v;
        }
        if let Some(o) = self.neg_offset {
            cfg.sampling.neg_offset = o;
        }
        if self.both_twins {
            cfg.sampling.both_twins = true;
        }
        if let Some(o) = &self.out {
            cfg.paths.out = Some(o.clone());
        }
    }
}

pub fn run(_args: &Args, cfg: &RunConfig) -> CliResult<()> {
    let out = cfg.out_dir()?;
    let mut manifest = Manifest::new("sample", cfg);
    let scenes = training_scenes(cfg, &mut manifest)?;
    let refs: Vec<&Scene> = scenes.iter().collect();
    let samples = sample_from_scenes(
        &refs,
        &cfg.depth_range()?,
        cfg.sampling.count,
        &cfg.sampler(),
        mix_seed(cfg.seed, SAMPLE_STREAM),
    )?;
    std::fs::create_dir_all(out)?;
    let path = out.join(CACHE_NAME);
    write_patch_cache(&samples, &path)?;
    manifest.output(&path)?;
    manifest.results = serde_json::json!({
        "samples": samples.len(),
        "positives": samples.iter().filter(|s| s.label == 1).count(),
    });
    manifest.write(out)?;
    info!("wrote {} samples to {}", samples.len(), path.display());
    Ok(())
}
