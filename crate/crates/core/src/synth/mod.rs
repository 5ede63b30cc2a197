//! Label-map driven image synthesis.
//!
//! A combined tissue + sulcus label map is spatially deformed, sulcus
//! labels are swapped for tissue labels, a Gaussian-mixture image is painted
//! from per-tissue priors and then blurred, bias-corrupted and normalised.
//! The deformed label map is returned with its sulcus labels intact.

mod config;
mod intensity;
pub mod phantom;
mod spatial;

use rayon::prelude::*;

pub use config::{
    AxisIntervals, GeneratorConfig, TissuePrior, TissuePriors, DEFAULT_GENERATOR_JSON, DEFAULT_PRIORS_JSON,
};
pub use intensity::{
    apply_bias_field, draw_tissue_params, gaussian_blur, gaussian_kernel, normalize_intensity, sample_bias_field,
    sample_intensities, substitute_sulci, substitute_sulci_with, TissueDraw,
};
pub use spatial::{
    deform_labels, elastic_from_control, rotation_matrix, sample_affine, sample_affine_params, sample_elastic,
    AffineParams, DeformationField,
};

use crate::error::Result;
use crate::rng::mix;
use crate::volume::{IntensityVolume, LabelVolume};

/// One synthetic image and the label map it was painted from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub image: IntensityVolume,
    pub labels: LabelVolume,
}

// sub-seed slots of a single sample
const AFFINE: u64 = 0;
const ELASTIC: u64 = 1;
const INTENSITY: u64 = 2;
const BLUR: u64 = 3;
const BIAS: u64 = 4;

/// Runs the full generator once. Output geometry equals input geometry.
pub fn generate_sample(
    labels: &LabelVolume,
    priors: &TissuePriors,
    config: &GeneratorConfig,
    seed: u64,
) -> Result<SyntheticSample> {
    config.validate()?;
    priors.validate()?;
    let affine = sample_affine(config, mix(seed, AFFINE));
    let field = sample_elastic(config, labels.grid(), mix(seed, ELASTIC))?;
    let deformed = deform_labels(labels, &affine, &field)?;
    let tissue = substitute_sulci_with(&deformed, config)?;
    let image = sample_intensities(&tissue, priors, mix(seed, INTENSITY))?;
    let image = gaussian_blur(&image, intensity::draw_blur_sigma(config, mix(seed, BLUR)));
    let image = apply_bias_field(&image, config, mix(seed, BIAS))?;
    let image = if config.normalize {
        normalize_intensity(&image)
    } else {
        image
    };
    Ok(SyntheticSample {
        image: image.check_finite()?,
        labels: deformed,
    })
}

/// Seed of view `index` of a batch generated from `seed`.
pub fn view_seed(seed: u64, index: usize) -> u64 {
    mix(seed, index as u64)
}

/// `n` independent samples; view `k` uses seed `mix(seed, k)`, so the
/// result does not depend on evaluation order or thread count.
pub fn generate_views(
    labels: &LabelVolume,
    priors: &TissuePriors,
    config: &GeneratorConfig,
    seed: u64,
    n: usize,
) -> Result<Vec<SyntheticSample>> {
    if n == 0 {
        return Err(crate::Error::InvalidConfig("view count must be >= 1".into()));
    }
    (0..n)
        .into_par_iter()
        .map(|k| generate_sample(labels, priors, config, view_seed(seed, k)))
        .collect()
}
