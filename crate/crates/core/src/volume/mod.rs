//! Volumetric containers, geometry, NIfTI I/O, cropping and resampling.

mod interp;
pub mod nifti;
mod resample;

use std::collections::BTreeSet;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

pub use interp::{sample_trilinear, upsample_control_grid};
pub(crate) use resample::nearest_index;
pub use resample::{resample, Interpolation, Resample};

/// Geometry of a 3D volume.
///
/// Voxels are stored x-fastest: linear index `x + nx * (y + ny * z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    shape: [usize; 3],
    spacing: [f64; 3],
    affine: [[f64; 4]; 4],
}

impl VoxelGrid {
    /// Axis-aligned grid with its origin at world (0, 0, 0).
    pub fn new(shape: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let mut affine = Matrix4::identity();
        for a in 0..3 {
            affine[(a, a)] = spacing[a];
        }
        Self::with_affine(shape, affine)
    }

    /// Unit-spacing grid, the usual choice for synthetic fixtures.
    pub fn isotropic(shape: [usize; 3]) -> Self {
        Self::new(shape, [1.0; 3]).expect("unit grid is valid")
    }

    /// Grid whose spacing is taken from the column norms of `affine`.
    pub fn with_affine(shape: [usize; 3], affine: Matrix4<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidGrid(format!("shape {shape:?} has a zero extent")));
        }
        if affine.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("affine has non-finite entries".into()));
        }
        let mut spacing = [0.0; 3];
        for (a, s) in spacing.iter_mut().enumerate() {
            *s = affine.fixed_view::<3, 1>(0, a).norm();
            if *s <= 0.0 {
                return Err(Error::InvalidGrid(format!("axis {a} has zero spacing")));
            }
        }
        let mut rows = [[0.0; 4]; 4];
        for (r, row) in rows.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = affine[(r, c)];
            }
        }
        Ok(Self {
            shape,
            spacing,
            affine: rows,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|r, c| self.affine[r][c])
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.shape[0] * (y + self.shape[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.shape[0];
        let ny = self.shape[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn contains(&self, p: [isize; 3]) -> bool {
        (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < self.shape[a])
    }

    /// World coordinates (mm) of a continuous voxel position.
    pub fn voxel_to_world(&self, p: [f64; 3]) -> [f64; 3] {
        let w = self.affine() * Vector4::new(p[0], p[1], p[2], 1.0);
        [w[0], w[1], w[2]]
    }

    /// Equality up to `tol` on every affine entry (spacing follows).
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.shape == other.shape
            && self
                .affine
                .iter()
                .flatten()
                .zip(other.affine.iter().flatten())
                .all(|(a, b)| (a - b).abs() <= tol)
    }

    /// Same grid with voxel index `v` of the result mapped to
    /// continuous index `scale * v + shift` of `self`.
    pub(crate) fn reindexed(&self, shape: [usize; 3], scale: [f64; 3], shift: [f64; 3]) -> Result<Self> {
        let mut m = Matrix4::identity();
        for a in 0..3 {
            m[(a, a)] = scale[a];
            m[(a, 3)] = shift[a];
        }
        Self::with_affine(shape, self.affine() * m)
    }

    /// `GridMismatch` unless both grids have the same shape.
    pub fn ensure_same(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::GridMismatch(format!(
                "{what}: shape {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

/// Voxel element type. `Default` is the background value.
pub trait Voxel: Copy + PartialEq + Default + Send + Sync + 'static {
    #[inline]
    fn is_background(&self) -> bool {
        *self == Self::default()
    }
}

impl Voxel for f32 {}
impl Voxel for f64 {}
impl Voxel for u16 {}
impl Voxel for u32 {}
impl Voxel for bool {}

/// Dense voxel array on a [`VoxelGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    grid: VoxelGrid,
    voxels: Vec<T>,
}

/// Scalar intensity image.
pub type IntensityVolume = Volume<f32>;
/// Integer label map; label 0 is background.
pub type LabelVolume = Volume<u16>;
/// Boolean mask.
pub type BinaryMask = Volume<bool>;

impl<T: Voxel> Volume<T> {
    pub fn new(grid: VoxelGrid, voxels: Vec<T>) -> Result<Self> {
        if voxels.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: voxels.len(),
            });
        }
        Ok(Self { grid, voxels })
    }

    pub fn filled(grid: VoxelGrid, value: T) -> Self {
        let voxels = vec![value; grid.len()];
        Self { grid, voxels }
    }

    pub fn zeros(grid: VoxelGrid) -> Self {
        Self::filled(grid, T::default())
    }

    pub fn from_fn(grid: VoxelGrid, mut f: impl FnMut([usize; 3]) -> T) -> Self {
        let voxels = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        Self { grid, voxels }
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn shape(&self) -> [usize; 3] {
        self.grid.shape
    }

    pub fn voxels(&self) -> &[T] {
        &self.voxels
    }

    pub fn voxels_mut(&mut self) -> &mut [T] {
        &mut self.voxels
    }

    pub fn into_voxels(self) -> Vec<T> {
        self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.voxels[self.grid.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.grid.index(x, y, z);
        self.voxels[i] = value;
    }

    /// Value at an integer position, background outside the grid.
    #[inline]
    pub fn get_or_background(&self, p: [isize; 3]) -> T {
        if self.grid.contains(p) {
            self.get(p[0] as usize, p[1] as usize, p[2] as usize)
        } else {
            T::default()
        }
    }

    pub fn count_foreground(&self) -> usize {
        self.voxels.iter().filter(|v| !v.is_background()).count()
    }

    /// Same grid, new contents.
    pub fn map<U: Voxel>(&self, f: impl Fn(T) -> U + Sync) -> Volume<U> {
        Volume {
            grid: self.grid.clone(),
            voxels: self.voxels.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Same grid with a replacement voxel buffer of equal length.
    pub fn with_data<U: Voxel>(&self, voxels: Vec<U>) -> Volume<U> {
        assert_eq!(voxels.len(), self.voxels.len(), "voxel buffer length");
        Volume {
            grid: self.grid.clone(),
            voxels,
        }
    }
}

impl<T: Real + Voxel> Volume<T> {
    pub fn all_finite(&self) -> bool {
        self.voxels.iter().all(|v| v.is_finite())
    }

    /// Rejects NaN/Inf intensities.
    pub fn check_finite(self) -> Result<Self> {
        if self.all_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite("intensity volume"))
        }
    }
}

impl LabelVolume {
    /// Sorted set of labels present, background included.
    pub fn label_set(&self) -> BTreeSet<u16> {
        let mut seen = vec![false; u16::MAX as usize + 1];
        for &v in &self.voxels {
            seen[v as usize] = true;
        }
        seen.iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(l, _)| l as u16)
            .collect()
    }
}

/// True exactly where the label belongs to `label_set`.
pub fn binarize(labels: &LabelVolume, label_set: &BTreeSet<u16>) -> BinaryMask {
    labels.map(|l| label_set.contains(&l))
}

/// Minimal bounding box of foreground voxels grown by `margin`, clamped to
/// the volume. Returns the cropped volume and the index offset of its
/// first voxel in the original.
pub fn crop_to_content<T: Voxel>(volume: &Volume<T>, margin: usize) -> Result<(Volume<T>, [usize; 3])> {
    let grid = volume.grid();
    let mut lo = grid.shape;
    let mut hi = [0usize; 3];
    let mut any = false;
    for (i, v) in volume.voxels.iter().enumerate() {
        if v.is_background() {
            continue;
        }
        any = true;
        let c = grid.coords(i);
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    if !any {
        return Err(Error::EmptyVolume);
    }
    let mut shape = [0; 3];
    for a in 0..3 {
        lo[a] = lo[a].saturating_sub(margin);
        hi[a] = (hi[a] + margin).min(grid.shape[a] - 1);
        shape[a] = hi[a] - lo[a] + 1;
    }
    let out_grid = grid.reindexed(shape, [1.0; 3], [lo[0] as f64, lo[1] as f64, lo[2] as f64])?;
    let mut voxels = Vec::with_capacity(out_grid.len());
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            let start = grid.index(lo[0], y, z);
            voxels.extend_from_slice(&volume.voxels[start..start + shape[0]]);
        }
    }
    Ok((Volume::new(out_grid, voxels)?, lo))
}
