use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use multipatch::dataset::{
    classification_accuracy, mix_seed, read_patch_cache, sample_from_scenes, train, BatchSource, CurvePoint, PatchPool,
    SceneSampler, TrainState,
};
use multipatch::nn::{load_weights, save_weights, GradientSet, NetworkWeights};
use serde::{Deserialize, Serialize};

use super::{holdout_scenes, training_scenes, INIT_STREAM, SAMPLE_STREAM};
use crate::config::{require_exists, RunConfig};
use crate::error::{invalid, CliError, CliResult};
use crate::manifest::Manifest;

pub const WEIGHTS_NAME: &str = "weights.bin";
pub const VELOCITY_NAME: &str = "velocity.bin";
pub const STATE_NAME: &str = "train_state.json";
pub const CURVE_NAME: &str = "loss.csv";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Training scene directories; training scenes are rendered when omitted.
    #[arg(long = "scene")]
    scenes: Vec<PathBuf>,
    /// Train from a patch cache written by `sample` instead of scenes.
    #[arg(long, conflicts_with = "scenes")]
    cache: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    decay_period: Option<usize>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    head_width: Option<usize>,
    #[arg(long)]
    fusion: Option<multipatch::nn::Fusion>,
    #[arg(long)]
    views: Option<usize>,
    /// Iterations per loss-curve point.
    #[arg(long)]
    log_every: Option<usize>,
    /// Held-out samples scored after training.
    #[arg(long)]
    holdout: Option<usize>,
    /// Continue from the weights, momentum and iteration count in the output directory.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Args {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if !self.scenes.is_empty() {
            cfg.paths.train_scenes = self.scenes.clone();
        }
        if let Some(c) = &self.cache {
            cfg.paths.cache = Some(c.clone());
        }
        let t = &mut cfg.train;
        if let Some(v) = self.iterations {
            t.iterations = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.lr {
            t.base_lr = v;
        }
        if let Some(v) = self.decay_period {
            t.decay_period = v;
        }
        if let Some(v) = self.momentum {
            t.momentum = v;
        }
        if let Some(v) = self.log_every {
            t.log_every = v;
        }
        if let Some(v) = self.head_width {
            cfg.network.head_width = v;
        }
        if let Some(v) = self.fusion {
            cfg.network.fusion = v;
        }
        if let Some(v) = self.views {
            cfg.views = v;
        }
        if let Some(v) = self.holdout {
            cfg.sampling.holdout_samples = v;
        }
        if let Some(o) = &self.out {
            cfg.paths.out = Some(o.clone());
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SavedState {
    iteration: usize,
    has_velocity: bool,
}

fn velocity_as_weights(v: &GradientSet<f32>, w: &NetworkWeights<f32>) -> NetworkWeights<f32> {
    NetworkWeights {
        branch: v.branch.clone(),
        head: v.head.clone(),
        fusion: w.fusion,
        n_views: w.n_views,
    }
}

fn read_curve(path: &Path, upto: usize) -> CliResult<Vec<CurvePoint>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || invalid!("malformed line {line:?} in {}", path.display());
        if f.len() != 3 {
            return Err(bad());
        }
        let p = CurvePoint {
            iteration: f[0].parse().map_err(|_| bad())?,
            loss: f[1].parse().map_err(|_| bad())?,
            lr: f[2].parse().map_err(|_| bad())?,
        };
        if p.iteration <= upto {
            out.push(p);
        }
    }
    Ok(out)
}

fn write_curve(path: &Path, curve: &[CurvePoint]) -> CliResult<()> {
    let mut s = String::from("iteration,loss,lr\n");
    for p in curve {
        writeln!(s, "{},{},{}", p.iteration, p.loss, p.lr).unwrap();
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn run(args: &Args, cfg: &RunConfig) -> CliResult<()> {
    let out = cfg.out_dir()?;
    fs::create_dir_all(out)?;
    let mut manifest = Manifest::new("train", cfg);
    let weights_path = out.join(WEIGHTS_NAME);
    let velocity_path = out.join(VELOCITY_NAME);
    let state_path = out.join(STATE_NAME);
    let curve_path = out.join(CURVE_NAME);

    let mut state = TrainState::new(&cfg.train);
    let mut weights;
    let mut curve;
    if args.resume {
        require_exists(&weights_path, "weights file to resume from")?;
        require_exists(&state_path, "training state")?;
        manifest.input(&weights_path)?;
        manifest.input(&state_path)?;
        weights = load_weights(&weights_path)?;
        let saved: SavedState = serde_json::from_str(&fs::read_to_string(&state_path)?)
            .map_err(|e| invalid!("{}: {e}", state_path.display()))?;
        if saved.has_velocity {
            require_exists(&velocity_path, "momentum buffer")?;
            manifest.input(&velocity_path)?;
            let v = load_weights(&velocity_path)?;
            state.optimizer.set_velocity(Some(GradientSet {
                branch: v.branch,
                head: v.head,
            }));
        }
        state.iteration = saved.iteration;
        curve = read_curve(&curve_path, saved.iteration)?;
        if weights.config().head_width != cfg.network.head_width || weights.fusion != cfg.network.fusion {
            warn!("network settings differ from the weights being resumed; the weights win");
        }
        if saved.iteration >= cfg.train.iterations {
            warn!("already at iteration {}, nothing to do", saved.iteration);
        }
        info!("resuming at iteration {}", saved.iteration);
    } else {
        weights = NetworkWeights::init(&cfg.network(), mix_seed(cfg.seed, INIT_STREAM))?;
        curve = Vec::new();
    }

    let sample_seed = mix_seed(cfg.seed, SAMPLE_STREAM);
    let mut source: Box<dyn BatchSource> = match &cfg.paths.cache {
        Some(path) => {
            require_exists(path, "patch cache")?;
            manifest.input(path)?;
            Box::new(PatchPool::new(read_patch_cache(path)?, sample_seed)?)
        }
        None => Box::new(SceneSampler {
            scenes: training_scenes(cfg, &mut manifest)?,
            range: cfg.depth_range()?,
            config: cfg.sampler(),
            seed: sample_seed,
        }),
    };

    info!(
        "training {} parameters for {} iterations, batch {}",
        weights.param_count(),
        cfg.train.iterations,
        cfg.train.batch_size
    );
    let started = std::time::Instant::now();
    let report = train(&mut weights, source.as_mut(), &cfg.train, &mut state, |p| {
        info!("iteration {:>6}  loss {:.5}  lr {:.2e}", p.iteration, p.loss, p.lr);
    })
    .map_err(|e| match e {
        multipatch::Error::Divergence { .. } => CliError::Runtime(e.to_string()),
        other => other.into(),
    })?;
    curve.extend(report.curve);

    save_weights(&weights, &weights_path)?;
    let has_velocity = match state.optimizer.velocity() {
        Some(v) => {
            save_weights(&velocity_as_weights(v, &weights), &velocity_path)?;
            true
        }
        None => false,
    };
    let saved = SavedState {
        iteration: state.iteration,
        has_velocity,
    };
    fs::write(&state_path, serde_json::to_string_pretty(&saved)? + "\n")?;
    write_curve(&curve_path, &curve)?;

    let mut results = serde_json::json!({
        "iterations": state.iteration,
        "seconds": started.elapsed().as_secs_f64(),
        "final_loss": curve.last().map(|p| p.loss),
    });
    if cfg.sampling.holdout_samples > 0 {
        let scenes = holdout_scenes(cfg, 2)?;
        let refs: Vec<_> = scenes.iter().collect();
        let n = cfg.sampling.holdout_samples.next_multiple_of(if cfg.sampling.both_twins { 4 } else { 2 });
        let samples = sample_from_scenes(&refs, &cfg.depth_range()?, n, &cfg.sampler(), mix_seed(cfg.seed, SAMPLE_STREAM + 1))?;
        let acc = classification_accuracy(&weights, &samples)?;
        info!("held-out accuracy {acc:.4} on {} samples", samples.len());
        results["holdout_accuracy"] = serde_json::json!(acc);
    }
    for p in [&weights_path, &state_path, &curve_path] {
        manifest.output(p)?;
    }
    if has_velocity {
        manifest.output(&velocity_path)?;
    }
    manifest.results = results;
    manifest.write(out)?;
    info!("wrote {}", weights_path.display());
    Ok(())
}
