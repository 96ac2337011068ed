use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use multipatch::eval::{error_heatmap, evaluate_depth, EvalResult};
use multipatch::io::{read_cameras, read_pfm, write_ppm};
use multipatch::sweep::DepthMap;

use crate::config::{require_exists, RunConfig};
use crate::error::{invalid, CliResult};
use crate::manifest::Manifest;

pub const RESULT_NAME: &str = "eval.json";
pub const TABLE_NAME: &str = "eval.csv";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Estimated depth maps (PFM), one per evaluated object.
    #[arg(long = "est", required = true)]
    estimates: Vec<PathBuf>,
    /// Scene directories supplying ground truth and cameras, one per estimate.
    #[arg(long = "scene", conflicts_with_all = ["gt", "cams"])]
    scenes: Vec<PathBuf>,
    /// Ground-truth depth maps (PFM), one per estimate.
    #[arg(long)]
    gt: Vec<PathBuf>,
    /// Camera files, one per estimate.
    #[arg(long)]
    cams: Vec<PathBuf>,
    /// Camera index of the depth maps' reference view.
    #[arg(long, default_value_t = 0)]
    view: usize,
    /// Row labels; defaults to the estimate paths.
    #[arg(long = "label")]
    labels: Vec<String>,
    /// View count recorded in each row.
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    truncation: Option<f64>,
    #[arg(long)]
    unit_to_mm: Option<f64>,
    /// Also write heatmap_<row>.ppm.
    #[arg(long)]
    heatmap: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Args {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(t) = self.truncation {
            cfg.eval.truncation_mm = t;
        }
        if let Some(u) = self.unit_to_mm {
            cfg.eval.unit_to_mm = u;
        }
        if let Some(o) = &self.out {
            cfg.paths.out = Some(o.clone());
        }
    }
}

fn depth(path: &Path, manifest: &mut Manifest) -> CliResult<DepthMap> {
    require_exists(path, "depth map")?;
    manifest.input(path)?;
    Ok(DepthMap::from_float_map(&read_pfm(path)?))
}

pub fn run(args: &Args, cfg: &RunConfig) -> CliResult<()> {
    let out = cfg.out_dir()?;
    let n = args.estimates.len();
    let (gts, cams): (Vec<PathBuf>, Vec<PathBuf>) = if !args.scenes.is_empty() {
        (
            args.scenes.iter().map(|s| s.join("gt_depth.pfm")).collect(),
            args.scenes.iter().map(|s| s.join("cams.txt")).collect(),
        )
    } else {
        (args.gt.clone(), args.cams.clone())
    };
    if gts.len() != n || cams.len() != n {
        return Err(invalid!("need one ground truth and one camera file per estimate ({n} estimates)"));
    }
    if !args.labels.is_empty() && args.labels.len() != n {
        return Err(invalid!("need one label per estimate"));
    }
    let mut manifest = Manifest::new("eval", cfg);
    let mut rows = Vec::with_capacity(n);
    std::fs::create_dir_all(out)?;
    for i in 0..n {
        let est = depth(&args.estimates[i], &mut manifest)?;
        let gt = depth(&gts[i], &mut manifest)?;
        require_exists(&cams[i], "camera file")?;
        manifest.input(&cams[i])?;
        let cameras = read_cameras(&cams[i])?;
        let camera = *cameras
            .get(args.view)
            .ok_or_else(|| invalid!("{} has no camera {}", cams[i].display(), args.view))?;
        let (t, u) = (cfg.eval.truncation_mm, cfg.eval.unit_to_mm);
        let (acc, comp, recon_points, gt_points) = evaluate_depth(&est, &gt, &camera, t, u)?;
        let label = args.labels.get(i).cloned().unwrap_or_else(|| args.estimates[i].display().to_string());
        info!(
            "{label}: accuracy {:.3}/{:.3} mm, completeness {:.3}/{:.3} mm",
            acc.mean, acc.median, comp.mean, comp.median
        );
        if args.heatmap {
            let p = out.join(format!("heatmap_{i}.ppm"));
            write_ppm(&error_heatmap(&est, &gt, t, u)?, &p)?;
            manifest.output(&p)?;
        }
        rows.push(EvalResult {
            label,
            views: args.views,
            accuracy_mean: acc.mean,
            accuracy_median: acc.median,
            completeness_mean: comp.mean,
            completeness_median: comp.median,
            truncation_mm: t,
            recon_points,
            gt_points,
            median_truncated: true,
        });
    }
    let json_path = out.join(RESULT_NAME);
    std::fs::write(&json_path, serde_json::to_string_pretty(&rows)? + "\n")?;
    let mut csv = String::from("label,views,accuracy_mean,accuracy_median,completeness_mean,completeness_median\n");
    for r in &rows {
        let views = r.views.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{},{views},{:.4},{:.4},{:.4},{:.4}",
            r.label, r.accuracy_mean, r.accuracy_median, r.completeness_mean, r.completeness_median
        )
        .unwrap();
    }
    let csv_path = out.join(TABLE_NAME);
    std::fs::write(&csv_path, csv)?;
    manifest.output(&json_path)?;
    manifest.output(&csv_path)?;
    manifest.results = serde_json::to_value(&rows)?;
    manifest.write(out)?;
    Ok(())
}
