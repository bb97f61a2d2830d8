//! Embedding-space exploration engine for a digitized ethnographic collection.
//!
//! The numeric code is generic over [`scalar::Real`] (`f32` or `f64`). The
//! aliases below fix the scalar for callers that do not care: `f32` is what
//! stored artifacts use, `f64` is what training and the oracles use.

pub mod attribution;
pub mod catalog;
pub mod contrastive;
pub mod evaluation;
mod hash;
pub mod lenses;
pub mod projection;
pub mod scalar;
pub mod spatial;
pub mod synthetic;

pub type EmbeddingSetF32 = catalog::EmbeddingSet<f32>;
pub type EmbeddingSetF64 = catalog::EmbeddingSet<f64>;
pub type Projection2DF32 = projection::Projection2D<f32>;
pub type Projection2DF64 = projection::Projection2D<f64>;
pub type HeadModelF32 = contrastive::HeadModel<f32>;
pub type HeadModelF64 = contrastive::HeadModel<f64>;
pub type TrainOutcomeF64 = contrastive::TrainOutcome<f64>;
pub type TrainingDataF64 = contrastive::TrainingData<f64>;
pub type RebalancedDatasetF64 = contrastive::RebalancedDataset<f64>;
pub type KdTreeF32 = spatial::KdTree2D<f32>;
pub type KdTreeF64 = spatial::KdTree2D<f64>;
