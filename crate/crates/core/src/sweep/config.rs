use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::nn::network::{score_extent, PATCH_SIDE, SCORE_STRIDE};
use crate::similarity::{Consensus, MeasureKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub plane_count: usize,
    pub patch_side: usize,
    /// Input tile side for the learned measures.
    pub tile_side: usize,
    pub score_stride: usize,
    pub box_filter_radius: usize,
    pub subpixel: bool,
    pub box_filter: bool,
    pub consensus: Consensus,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            plane_count: 256,
            patch_side: PATCH_SIDE,
            tile_side: 128,
            score_stride: SCORE_STRIDE,
            box_filter_radius: 2,
            subpixel: true,
            box_filter: true,
            consensus: Consensus::Mean,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self, measure: MeasureKind) -> Result<()> {
        ensure!(self.plane_count >= 1, InvalidArgument, "plane_count must be at least 1");
        ensure!(self.patch_side >= 1, InvalidArgument, "patch_side must be positive");
        ensure!(
            self.score_stride == SCORE_STRIDE,
            InvalidArgument,
            "score_stride is fixed at {SCORE_STRIDE} by the network, got {}",
            self.score_stride
        );
        ensure!(
            self.tile_side >= PATCH_SIDE && score_extent(self.tile_side).is_some(),
            InvalidArgument,
            "tile_side {} does not yield a score grid (needs 32 + 4k pixels)",
            self.tile_side
        );
        if measure.is_learned() {
            ensure!(
                self.patch_side == PATCH_SIDE,
                InvalidArgument,
                "learned measures use {PATCH_SIDE}-pixel patches, config has {}",
                self.patch_side
            );
        }
        Ok(())
    }

    /// Scores per tile side and the inset of the scored block inside the tile.
    pub fn tile_grid(&self) -> (usize, usize) {
        let g = score_extent(self.tile_side).unwrap_or(0);
        (g, (self.tile_side - g * self.score_stride) / 2)
    }
}
