use nalgebra::{Matrix3, Matrix4, Vector3};
use rayon::prelude::*;

use super::GeneratorConfig;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, standard_normal};
use crate::volume::{upsample_control_grid, LabelVolume, Volume, VoxelGrid};

/// Dense displacement field in voxel units.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    grid: VoxelGrid,
    displacement: Vec<[f32; 3]>,
}

impl DeformationField {
    pub fn zeros(grid: VoxelGrid) -> Self {
        let displacement = vec![[0.0; 3]; grid.len()];
        Self { grid, displacement }
    }

    pub fn new(grid: VoxelGrid, displacement: Vec<[f32; 3]>) -> Result<Self> {
        if displacement.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: displacement.len(),
            });
        }
        if displacement.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("deformation field"));
        }
        Ok(Self { grid, displacement })
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn displacement(&self) -> &[[f32; 3]] {
        &self.displacement
    }

    pub fn max_abs(&self) -> f32 {
        self.displacement.iter().flatten().fold(0.0f32, |m, v| m.max(v.abs()))
    }
}

/// Rotation about the x, y and z axes composed as `Rz * Ry * Rx`.
pub fn rotation_matrix(degrees: [f64; 3]) -> Matrix3<f64> {
    let [ax, ay, az] = degrees.map(f64::to_radians);
    let (sx, cx) = ax.sin_cos();
    let (sy, cy) = ay.sin_cos();
    let (sz, cz) = az.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

/// Parameters behind one draw of [`sample_affine`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub rotation_deg: [f64; 3],
    pub scaling: [f64; 3],
    /// (xy, xz, yz) off-diagonal shear coefficients.
    pub shear: [f64; 3],
    pub translation: [f64; 3],
}

impl AffineParams {
    /// `T * Rz * Ry * Rx * Shear * Scale` as a homogeneous matrix.
    pub fn matrix(&self) -> Matrix4<f64> {
        let [sxy, sxz, syz] = self.shear;
        let shear = Matrix3::new(1.0, sxy, sxz, 0.0, 1.0, syz, 0.0, 0.0, 1.0);
        let scale = Matrix3::from_diagonal(&Vector3::from(self.scaling));
        let linear = rotation_matrix(self.rotation_deg) * shear * scale;
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&linear);
        for a in 0..3 {
            m[(a, 3)] = self.translation[a];
        }
        m
    }
}

pub fn sample_affine_params(config: &GeneratorConfig, seed: u64) -> AffineParams {
    let mut rng = rng_from_seed(seed);
    let mut draw = |r: &super::AxisIntervals| -> [f64; 3] { std::array::from_fn(|a| r.0[a].sample(&mut rng)) };
    let rotation_deg = draw(&config.rotation_range);
    let scaling = draw(&config.scaling_range);
    let shear = draw(&config.shear_range);
    let translation = draw(&config.translation_range);
    AffineParams {
        rotation_deg,
        scaling,
        shear,
        translation,
    }
}

/// Random affine transform in voxel coordinates, deterministic in `seed`.
pub fn sample_affine(config: &GeneratorConfig, seed: u64) -> Matrix4<f64> {
    sample_affine_params(config, seed).matrix()
}

/// Random smooth displacement field: i.i.d. `N(0, sigma)` displacements on
/// the control grid, `sigma ~ U(elastic_std_range)`, trilinearly upsampled.
pub fn sample_elastic(config: &GeneratorConfig, grid: &VoxelGrid, seed: u64) -> Result<DeformationField> {
    let cg = config.elastic_grid;
    if cg.iter().any(|&g| g < 2) {
        return Err(Error::InvalidConfig("elastic_grid entries must be >= 2".into()));
    }
    let mut rng = rng_from_seed(seed);
    let sigma = config.elastic_std_range.sample(&mut rng);
    let n_ctrl: usize = cg.iter().product();
    let components: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..n_ctrl).map(|_| sigma * standard_normal(&mut rng)).collect())
        .collect();
    Ok(elastic_from_control(grid, cg, &components))
}

/// Displacement field interpolated from per-component control values.
pub fn elastic_from_control(grid: &VoxelGrid, control_shape: [usize; 3], components: &[Vec<f64>]) -> DeformationField {
    let up: Vec<Vec<f64>> = components
        .par_iter()
        .map(|c| upsample_control_grid(c, control_shape, grid.shape()))
        .collect();
    let displacement = (0..grid.len())
        .map(|i| [up[0][i] as f32, up[1][i] as f32, up[2][i] as f32])
        .collect();
    DeformationField {
        grid: grid.clone(),
        displacement,
    }
}

/// Backward-warps a label map with nearest-neighbour lookup.
///
/// Output voxel `p` reads the source at `c + A (p + u(p) - c)` where `c` is
/// the grid centre and `A` the affine. Reads outside the source are 0.
pub fn deform_labels(labels: &LabelVolume, affine: &Matrix4<f64>, field: &DeformationField) -> Result<LabelVolume> {
    labels.grid().ensure_same(field.grid(), "deformation field")?;
    let grid = labels.grid();
    let shape = grid.shape();
    let center: [f64; 3] = std::array::from_fn(|a| (shape[a] as f64 - 1.0) * 0.5);
    let lin = affine.fixed_view::<3, 3>(0, 0).into_owned();
    let t = Vector3::new(affine[(0, 3)], affine[(1, 3)], affine[(2, 3)]);
    let c = Vector3::from(center);
    let out: Vec<u16> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let [x, y, z] = grid.coords(i);
            let u = field.displacement[i];
            let q = Vector3::new(x as f64 + u[0] as f64, y as f64 + u[1] as f64, z as f64 + u[2] as f64);
            let s = lin * (q - c) + c + t;
            match crate::volume::nearest_index(shape, [s[0], s[1], s[2]]) {
                Some([sx, sy, sz]) => labels.get(sx, sy, sz),
                None => 0,
            }
        })
        .collect();
    Volume::new(grid.clone(), out)
}
