//! Run configuration.
//!
//! Every field has a default. A JSON file given with `--config` replaces any
//! subset of them, and command-line flags override both.

use std::path::{Path, PathBuf};

use multipatch::dataset::{SamplerConfig, TrainSchedule};
use multipatch::eval::{DEFAULT_TRUNCATION_MM, METRES_TO_MM};
use multipatch::geometry::DepthRange;
use multipatch::nn::{Fusion, NetworkConfig};
use multipatch::similarity::MeasureKind;
use multipatch::sweep::SweepConfig;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Source of all randomness in a run.
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub measure: MeasureKind,
    /// Views per sweep or training sample, reference included.
    pub views: usize,
    pub range: RangeConfig,
    pub sweep: SweepConfig,
    pub network: NetworkSettings,
    pub sampling: SamplingSettings,
    pub train: TrainSchedule,
    pub eval: EvalSettings,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 0,
            measure: MeasureKind::Zncc,
            views: 5,
            range: RangeConfig::default(),
            sweep: SweepConfig::default(),
            network: NetworkSettings::default(),
            sampling: SamplingSettings::default(),
            train: TrainSchedule::default(),
            eval: EvalSettings::default(),
            paths: Paths::default(),
        }
    }
}

/// Swept depth interval; the plane count is `sweep.plane_count`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangeConfig {
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for RangeConfig {
    fn default() -> Self {
        RangeConfig { z_min: 0.45, z_max: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSettings {
    pub head_width: usize,
    pub fusion: Fusion,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        let d = NetworkConfig::default();
        NetworkSettings {
            head_width: d.head_width,
            fusion: d.fusion,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSettings {
    pub neg_offset: usize,
    pub both_twins: bool,
    /// Samples written by `sample`.
    pub count: usize,
    /// Training scenes rendered when no scene directory is given.
    pub generated_scenes: usize,
    /// Held-out samples scored after training; 0 skips the check.
    pub holdout_samples: usize,
}

impl Default for SamplingSettings {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplingSettings {
            neg_offset: d.neg_offset,
            both_twins: d.both_twins,
            count: 1024,
            generated_scenes: 8,
            holdout_samples: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub truncation_mm: f64,
    /// Millimetres per scene unit.
    pub unit_to_mm: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            truncation_mm: DEFAULT_TRUNCATION_MM,
            unit_to_mm: METRES_TO_MM,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Scene directory for `sweep` and `bench`.
    pub scene: Option<PathBuf>,
    /// Scene directories used by `sample` and `train`.
    pub train_scenes: Vec<PathBuf>,
    /// Patch cache used by `train` instead of scenes.
    pub cache: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| invalid!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| invalid!("config {}: {e}", path.display()))
    }

    pub fn depth_range(&self) -> CliResult<DepthRange> {
        Ok(DepthRange::new(self.range.z_min, self.range.z_max, self.sweep.plane_count)?)
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            n_views: self.views,
            neg_offset: self.sampling.neg_offset,
            both_twins: self.sampling.both_twins,
        }
    }

    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            head_width: self.network.head_width,
            fusion: self.network.fusion,
            n_views: self.views,
            ..NetworkConfig::default()
        }
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.paths.out.as_deref().ok_or_else(|| invalid!("no output directory: pass --out or set paths.out"))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.views < 2 {
            return Err(invalid!("views must be at least 2, got {}", self.views));
        }
        self.depth_range()?;
        self.sweep.validate(self.measure)?;
        self.train.validate()?;
        self.sampler().validate()?;
        if !(self.eval.truncation_mm > 0.0 && self.eval.unit_to_mm > 0.0) {
            return Err(invalid!("truncation and unit scale must be positive"));
        }
        Ok(())
    }
}

pub fn require_exists(path: &Path, what: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(invalid!("{what} {} does not exist", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"views": 3, "sweep": {"plane_count": 64}}"#).unwrap();
        assert_eq!(c.views, 3);
        assert_eq!(c.sweep.plane_count, 64);
        assert_eq!(c.sweep.box_filter_radius, SweepConfig::default().box_filter_radius);
        assert_eq!(c.train, TrainSchedule::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"veiws": 3}"#).is_err());
    }

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        let c = RunConfig {
            views: 1,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
