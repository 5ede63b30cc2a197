//! Synthetic label-map image generation, contrastive and segmentation
//! losses with analytic gradients, sulcus mask post-processing and
//! segmentation metrics for 3D neuroimaging volumes.

pub mod error;
pub mod losses;
pub mod metrics;
pub mod num;
pub mod postproc;
pub mod rng;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
pub use num::Real;
pub use volume::{BinaryMask, IntensityVolume, LabelVolume, Volume, VoxelGrid};

pub type EmbeddingBatchF32 = losses::EmbeddingBatch<f32>;
pub type EmbeddingBatchF64 = losses::EmbeddingBatch<f64>;
pub type ProbabilityVolumeF32 = losses::ProbabilityVolume<f32>;
pub type ProbabilityVolumeF64 = losses::ProbabilityVolume<f64>;
