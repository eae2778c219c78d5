//! Forward samplers under the plain measure and the k-spine measure.

pub mod draw;
pub mod plain;
pub mod qmeasure;
pub mod tilted;

pub use draw::{DiscreteTable, LawSampler};
pub use plain::{sample_gw, sample_gw_surviving, sample_p_spined, GwSampler, SurvivalSampler};
pub use qmeasure::{
    importance_sample_q, sample_q_tree, split_plan_distribution, ImportanceDraw, ImportanceSampler, QContext, QTreeSampler, SkeletonSplit,
    SpineSkeleton, SplitPlan,
};
pub use tilted::{tilted_offspring, TiltedLaw};

/// Caps protecting runs from runaway populations and hopeless rejection loops.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerLimits {
    /// Total individuals in one tree.
    pub population_cap: u64,
    /// Rejection attempts per accepted draw.
    pub attempt_cap: u64,
}

impl Default for SamplerLimits {
    fn default() -> Self {
        SamplerLimits { population_cap: 100_000_000, attempt_cap: 10_000_000 }
    }
}
