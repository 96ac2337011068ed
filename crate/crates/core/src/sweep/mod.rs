//! Plane sweep: cost volume construction, box filtering and depth extraction.

mod build;
mod config;
mod volume;

pub use build::{build_cost_volume, tile_origins, window_centres, Measure, View, MIN_COVERAGE};
pub use config::SweepConfig;
pub use volume::{argmax_planes, box_filter_volume, extract_depth, parabola_offset, CostVolume, DepthMap};

use crate::error::Result;

/// Build, optionally box-filter, and extract the depth map in one call.
pub fn estimate_depth(
    reference: &View,
    partners: &[View],
    depths: &[f64],
    measure: &Measure,
    config: &SweepConfig,
) -> Result<(CostVolume, DepthMap)> {
    let mut vol = build_cost_volume(reference, partners, depths, measure, config)?;
    if config.box_filter {
        vol = box_filter_volume(&vol, config.box_filter_radius);
    }
    let depth = extract_depth(&vol, config.subpixel);
    Ok((vol, depth))
}
