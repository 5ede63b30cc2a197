use rayon::prelude::*;

use super::interp::sample_trilinear;
use super::{Volume, Voxel, VoxelGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Trilinear,
    Nearest,
}

impl Interpolation {
    fn name(self) -> &'static str {
        match self {
            Interpolation::Trilinear => "trilinear",
            Interpolation::Nearest => "nearest",
        }
    }
}

/// Voxel types that can be resampled. Only real-valued types interpolate.
pub trait Resample: Voxel {
    fn trilinear(_data: &[Self], _shape: [usize; 3], _p: [f64; 3]) -> Option<Self> {
        None
    }
}

impl Resample for f32 {
    fn trilinear(data: &[Self], shape: [usize; 3], p: [f64; 3]) -> Option<Self> {
        Some(sample_trilinear(data, shape, p))
    }
}

impl Resample for f64 {
    fn trilinear(data: &[Self], shape: [usize; 3], p: [f64; 3]) -> Option<Self> {
        Some(sample_trilinear(data, shape, p))
    }
}

impl Resample for u16 {}
impl Resample for u32 {}
impl Resample for bool {}

/// Nearest voxel to a continuous position; `None` outside the voxel cells.
#[inline]
pub(crate) fn nearest_index(shape: [usize; 3], p: [f64; 3]) -> Option<[usize; 3]> {
    let mut out = [0; 3];
    for a in 0..3 {
        let c = p[a];
        let n = shape[a];
        if !(c >= -0.5 && c <= n as f64 - 0.5) {
            return None;
        }
        out[a] = ((c + 0.5).floor().max(0.0) as usize).min(n - 1);
    }
    Some(out)
}

/// Resamples onto `target_shape` while preserving the physical extent.
///
/// Target voxel `j` samples source position `(j + 0.5) * n_src / n_dst - 0.5`
/// so voxel cells of both grids tile the same box. Labels must use
/// [`Interpolation::Nearest`].
pub fn resample<T: Resample>(volume: &Volume<T>, target_shape: [usize; 3], mode: Interpolation) -> Result<Volume<T>> {
    let src = volume.grid();
    let src_shape = src.shape();
    if target_shape.contains(&0) {
        return Err(Error::InvalidGrid(format!(
            "target shape {target_shape:?} has a zero extent"
        )));
    }
    if mode == Interpolation::Trilinear && T::trilinear(&[], [0; 3], [0.0; 3]).is_none() {
        return Err(Error::ModeMismatch(mode.name()));
    }
    let scale: [f64; 3] = std::array::from_fn(|a| src_shape[a] as f64 / target_shape[a] as f64);
    let shift: [f64; 3] = std::array::from_fn(|a| 0.5 * scale[a] - 0.5);
    let grid: VoxelGrid = src.reindexed(target_shape, scale, shift)?;
    let data = volume.voxels();
    let n = grid.len();
    let voxels: Vec<T> = (0..n)
        .into_par_iter()
        .map(|i| {
            let c = grid.coords(i);
            let p: [f64; 3] = std::array::from_fn(|a| (c[a] as f64 + 0.5) * scale[a] - 0.5);
            match mode {
                Interpolation::Trilinear => T::trilinear(data, src_shape, p).unwrap_or_default(),
                Interpolation::Nearest => match nearest_index(src_shape, p) {
                    Some([x, y, z]) => volume.get(x, y, z),
                    None => T::default(),
                },
            }
        })
        .collect();
    Volume::new(grid, voxels)
}
