use std::path::PathBuf;
use std::time::Instant;

use log::{info, warn};
use multipatch::dataset::load_scene;
use multipatch::eval::{error_heatmap, evaluate_depth, PointCloud};
use multipatch::geometry::depth_planes;
use multipatch::io::{write_pfm, write_ply, write_ppm};
use multipatch::similarity::{Consensus, MeasureKind};
use multipatch::sweep::{box_filter_volume, build_cost_volume, extract_depth};

use super::{measure, measure_weights};
use crate::config::{require_exists, RunConfig};
use crate::error::{invalid, CliResult};
use crate::manifest::Manifest;

pub const DEPTH_NAME: &str = "depth.pfm";
pub const CONFIDENCE_NAME: &str = "conf.pfm";
pub const HEATMAP_NAME: &str = "heatmap.ppm";
pub const CLOUD_NAME: &str = "points.ply";

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    scene: Option<PathBuf>,
    /// sad, zncc, learned2 or learnedN.
    #[arg(long)]
    measure: Option<MeasureKind>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Views used, reference included; the first n views of the scene.
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    planes: Option<usize>,
    #[arg(long)]
    z_min: Option<f64>,
    #[arg(long)]
    z_max: Option<f64>,
    /// Consensus of pairwise scores: mean or median.
    #[arg(long)]
    consensus: Option<Consensus>,
    #[arg(long)]
    no_box_filter: bool,
    #[arg(long)]
    no_subpixel: bool,
    /// Write the raw score slice of this plane index (repeatable).
    #[arg(long = "dump-slice")]
    dump_slices: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Args {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = &self.scene {
            cfg.paths.scene = Some(s.clone());
        }
        if let Some(m) = self.measure {
            cfg.measure = m;
        }
        if let Some(w) = &self.weights {
            cfg.paths.weights = Some(w.clone());
        }
        if let Some(v) = self.views {
            cfg.views = v;
        }
        if let Some(p) = self.planes {
            cfg.sweep.plane_count = p;
        }
        if let Some(z) = self.z_min {
            cfg.range.z_min = z;
        }
        if let Some(z) = self.z_max {
            cfg.range.z_max = z;
        }
        if let Some(c) = self.consensus {
            cfg.sweep.consensus = c;
        }
        if self.no_box_filter {
            cfg.sweep.box_filter = false;
        }
        if self.no_subpixel {
            cfg.sweep.subpixel = false;
        }
        if let Some(o) = &self.out {
            cfg.paths.out = Some(o.clone());
        }
    }
}

pub fn run(args: &Args, cfg: &RunConfig) -> CliResult<()> {
    let out = cfg.out_dir()?;
    let scene_dir = cfg.paths.scene.as_deref().ok_or_else(|| invalid!("no scene: pass --scene"))?;
    require_exists(scene_dir, "scene directory")?;
    let mut manifest = Manifest::new("sweep", cfg);
    manifest.input(scene_dir)?;
    let weights = measure_weights(cfg, &mut manifest)?;
    let scene = load_scene(scene_dir)?;
    if scene.views.len() < cfg.views {
        return Err(invalid!("{} has {} views, {} requested", scene_dir.display(), scene.views.len(), cfg.views));
    }
    let depths = depth_planes(&cfg.depth_range()?);
    if let Some(&k) = args.dump_slices.iter().find(|&&k| k >= depths.len()) {
        return Err(invalid!("slice {k} is out of range for {} planes", depths.len()));
    }
    let m = measure(cfg.measure, weights.as_ref());
    info!("{} sweep over {} planes with {} views", cfg.measure, depths.len(), cfg.views);

    let t0 = Instant::now();
    let raw = build_cost_volume(&scene.views[0], &scene.views[1..cfg.views], &depths, &m, &cfg.sweep)?;
    let t_build = t0.elapsed().as_secs_f64();
    std::fs::create_dir_all(out)?;
    for &k in &args.dump_slices {
        let p = out.join(format!("slice_{k:03}.pfm"));
        write_pfm(&raw.slice_map(k), &p)?;
        manifest.output(&p)?;
    }
    let vol = if cfg.sweep.box_filter {
        box_filter_volume(&raw, cfg.sweep.box_filter_radius)
    } else {
        raw
    };
    let depth = extract_depth(&vol, cfg.sweep.subpixel);
    info!("cost volume in {t_build:.2} s, {} valid pixels", depth.valid_count());

    let camera = scene.views[0].camera;
    let heat = error_heatmap(&depth, &scene.gt_depth, cfg.eval.truncation_mm, cfg.eval.unit_to_mm)?;
    let cloud = PointCloud::from_depth_map(&depth, &camera, None)?;
    let paths = [DEPTH_NAME, CONFIDENCE_NAME, HEATMAP_NAME, CLOUD_NAME].map(|n| out.join(n));
    write_pfm(&depth.depth_map(), &paths[0])?;
    write_pfm(&depth.confidence_map(), &paths[1])?;
    write_ppm(&heat, &paths[2])?;
    write_ply(cloud.points(), &paths[3])?;
    for p in &paths {
        manifest.output(p)?;
    }

    let mut results = serde_json::json!({
        "measure": cfg.measure.name(),
        "views": cfg.views,
        "plane_count": depths.len(),
        "valid_pixels": depth.valid_count(),
        "build_seconds": t_build,
    });
    if scene.gt_depth.valid_count() > 0 {
        match evaluate_depth(&depth, &scene.gt_depth, &camera, cfg.eval.truncation_mm, cfg.eval.unit_to_mm) {
            Ok((acc, comp, _, _)) => {
                info!(
                    "accuracy {:.3}/{:.3} mm, completeness {:.3}/{:.3} mm (mean/median)",
                    acc.mean, acc.median, comp.mean, comp.median
                );
                results["accuracy"] = serde_json::to_value(acc)?;
                results["completeness"] = serde_json::to_value(comp)?;
            }
            Err(e) => warn!("skipping evaluation: {e}"),
        }
    }
    manifest.results = results;
    manifest.write(out)?;
    info!("wrote {}", out.display());
    Ok(())
}
