//! Patch similarity measures, all normalized so that higher is better.

mod measures;
mod patch;

pub use measures::{
    learned_multi, learned_pairwise, pairwise_consensus, sad, zncc, Consensus, MeasureKind, ZNCC_MIN_VARIANCE,
};
pub(crate) use measures::zncc_from_moments;
pub use patch::Patch;
