use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{GeneratorConfig, TissuePriors};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::rng::{mix, rng_from_seed, standard_normal};
use crate::volume::{upsample_control_grid, IntensityVolume, LabelVolume, Volume, Voxel};

/// Replaces sulcus labels by their tissue substitute.
///
/// A label is a sulcus if it is a key of `table` or falls in
/// `sulcus_labels`; every sulcus label present must have an entry.
pub fn substitute_sulci(
    labels: &LabelVolume,
    table: &BTreeMap<u16, u16>,
    sulcus_labels: Option<[u16; 2]>,
) -> Result<LabelVolume> {
    let mut lut: Vec<u16> = (0..=u16::MAX).collect();
    for (&from, &to) in table {
        lut[from as usize] = to;
    }
    if let Some([lo, hi]) = sulcus_labels {
        for l in labels.label_set() {
            if (lo..=hi).contains(&l) && !table.contains_key(&l) {
                return Err(Error::MissingSubstitution(l));
            }
        }
    }
    Ok(labels.map(|l| lut[l as usize]))
}

/// [`substitute_sulci`] driven by a generator config.
pub fn substitute_sulci_with(labels: &LabelVolume, config: &GeneratorConfig) -> Result<LabelVolume> {
    substitute_sulci(labels, &config.substitution_table, config.sulcus_labels)
}

/// Per-label Gaussian parameters drawn for one synthetic image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TissueDraw {
    pub label: u16,
    pub mean: f64,
    pub std: f64,
}

/// Draws `(mean, std)` for every prior, in ascending label order.
pub fn draw_tissue_params(priors: &TissuePriors, seed: u64) -> Vec<TissueDraw> {
    let mut rng = rng_from_seed(seed);
    let mut tissues: Vec<_> = priors.tissues.iter().collect();
    tissues.sort_by_key(|t| t.label);
    tissues
        .into_iter()
        .map(|t| TissueDraw {
            label: t.label,
            mean: t.mean_range.sample(&mut rng),
            std: t.std_range.sample(&mut rng),
        })
        .collect()
}

/// Paints a Gaussian-mixture image over a tissue label map.
///
/// Each label gets one `(mean, std)` per call; voxels are then drawn
/// i.i.d. from that Gaussian. Background stays at 0. Voxel noise comes from
/// one stream per z-slice so the result is independent of thread count.
pub fn sample_intensities(tissue_labels: &LabelVolume, priors: &TissuePriors, seed: u64) -> Result<IntensityVolume> {
    let params = draw_tissue_params(priors, mix(seed, 0));
    let mut table: Vec<Option<(f64, f64)>> = vec![None; u16::MAX as usize + 1];
    for d in &params {
        table[d.label as usize] = Some((d.mean, d.std));
    }
    for l in tissue_labels.label_set() {
        if l != 0 && table[l as usize].is_none() {
            return Err(Error::MissingPrior(l));
        }
    }
    let [nx, ny, _] = tissue_labels.shape();
    let slice = nx * ny;
    let src = tissue_labels.voxels();
    let mut out = vec![0.0f32; src.len()];
    out.par_chunks_mut(slice).enumerate().for_each(|(z, chunk)| {
        let mut rng = rng_from_seed(mix(seed, 1 + z as u64));
        for (o, &l) in chunk.iter_mut().zip(&src[z * slice..]) {
            if l == 0 {
                continue;
            }
            let (mean, std) = table[l as usize].expect("checked above");
            *o = (mean + std * standard_normal(&mut rng)) as f32;
        }
    });
    Ok(tissue_labels.with_data(out))
}

/// Normalised Gaussian kernel truncated at `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Mirror index with the edge sample repeated (`d c b a | a b c d | d c b a`).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn convolve_axis<T: Real>(data: &[T], shape: [usize; 3], axis: usize, kernel: &[f64]) -> Vec<T> {
    let radius = (kernel.len() / 2) as isize;
    let stride = [1, shape[0], shape[0] * shape[1]][axis];
    let n = shape[axis];
    let len = data.len();
    (0..len)
        .into_par_iter()
        .map(|i| {
            let pos = (i / stride) % n;
            let base = i - pos * stride;
            let mut acc = 0.0f64;
            for (k, w) in kernel.iter().enumerate() {
                let j = reflect(pos as isize + k as isize - radius, n);
                acc += w * data[base + j * stride].to_f64_lossy();
            }
            T::lit(acc)
        })
        .collect()
}

/// Separable Gaussian blur (sigma in voxels, reflect boundary).
pub fn gaussian_blur<T: Real + Voxel>(image: &Volume<T>, sigma: f64) -> Volume<T> {
    if !(sigma > 0.0) {
        return image.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let shape = image.shape();
    let mut data = image.voxels().to_vec();
    for axis in 0..3 {
        data = convolve_axis(&data, shape, axis, &kernel);
    }
    image.with_data(data)
}

/// Multiplies by `exp(f)` where `f` is a smooth random log-field:
/// i.i.d. `N(0, sigma_b)` on `bias_grid`, `sigma_b ~ U(bias_std_range)`,
/// trilinearly upsampled.
pub fn apply_bias_field<T: Real + Voxel>(image: &Volume<T>, config: &GeneratorConfig, seed: u64) -> Result<Volume<T>> {
    let field = sample_bias_field(config, image.shape(), seed)?;
    let out = image
        .voxels()
        .iter()
        .zip(&field)
        .map(|(&v, &f)| v * T::lit(f.exp()))
        .collect();
    Ok(image.with_data(out))
}

/// The log-domain bias field itself (before exponentiation).
pub fn sample_bias_field(config: &GeneratorConfig, shape: [usize; 3], seed: u64) -> Result<Vec<f64>> {
    let g = config.bias_grid;
    if g.iter().any(|&n| n < 2) {
        return Err(Error::InvalidConfig("bias_grid entries must be >= 2".into()));
    }
    let mut rng = rng_from_seed(seed);
    let sigma = config.bias_std_range.sample(&mut rng);
    let control: Vec<f64> = (0..g.iter().product::<usize>())
        .map(|_| sigma * standard_normal(&mut rng))
        .collect();
    Ok(upsample_control_grid(&control, g, shape))
}

/// Min-max rescale to `[0, 1]`; a constant image maps to zeros.
pub fn normalize_intensity<T: Real + Voxel>(image: &Volume<T>) -> Volume<T> {
    let v = image.voxels();
    let (lo, hi) = v.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    if v.is_empty() || !(hi > lo) {
        return image.map(|_| T::zero());
    }
    let range = hi - lo;
    image.map(move |x| (x - lo) / range)
}

/// Draws the blur width for one sample.
pub(crate) fn draw_blur_sigma(config: &GeneratorConfig, seed: u64) -> f64 {
    config.blur_sigma_range.sample(&mut rng_from_seed(seed))
}
