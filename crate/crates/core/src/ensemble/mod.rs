//! Bi-level ensemble parameters and reproducible data generation.

mod data;
mod params;
pub mod stream;

pub use data::{
    argmax, FeatureBlock, TestBatch, TestPoint, TrainingSet, UnfavoredBlocks, UnfavoredSpec,
    DEFAULT_BLOCK_SIZE,
};
pub use params::{floor_pow, BilevelParams, DerivedScaling, TrialConfig};

use crate::error::Result;

pub fn derive_scaling(params: &BilevelParams) -> Result<DerivedScaling> {
    params.derive()
}

pub fn generate_training(scaling: &DerivedScaling, seed: u64) -> TrainingSet {
    TrainingSet::generate(scaling, seed)
}

pub fn stream_unfavored_blocks(
    spec: &UnfavoredSpec,
    features: std::ops::Range<usize>,
) -> Result<UnfavoredBlocks<'_>> {
    spec.blocks(features)
}

pub fn sample_test_points(scaling: &DerivedScaling, seed: u64, count: usize) -> TestBatch {
    TestBatch::sample(scaling, seed, count)
}
