use crate::num::Real;

/// Trilinear sample of an x-fastest array at continuous voxel position `p`.
///
/// Positions outside the voxel cells (`< -0.5` or `> n - 0.5` on any axis)
/// read as zero; positions inside the outer half-voxel rim are clamped to
/// the edge sample.
pub fn sample_trilinear<T: Real>(data: &[T], shape: [usize; 3], p: [f64; 3]) -> T {
    let mut i0 = [0usize; 3];
    let mut i1 = [0usize; 3];
    let mut t = [T::zero(); 3];
    for a in 0..3 {
        let n = shape[a];
        let c = p[a];
        if !(c >= -0.5 && c <= n as f64 - 0.5) {
            return T::zero();
        }
        let c = c.clamp(0.0, (n - 1) as f64);
        let f = c.floor();
        i0[a] = f as usize;
        i1[a] = (i0[a] + 1).min(n - 1);
        t[a] = T::lit(c - f);
    }
    let nx = shape[0];
    let nxy = nx * shape[1];
    let at = |x: usize, y: usize, z: usize| data[x + nx * y + nxy * z];
    let one = T::one();
    let lerp = |a: T, b: T, w: T| a * (one - w) + b * w;
    let c00 = lerp(at(i0[0], i0[1], i0[2]), at(i1[0], i0[1], i0[2]), t[0]);
    let c10 = lerp(at(i0[0], i1[1], i0[2]), at(i1[0], i1[1], i0[2]), t[0]);
    let c01 = lerp(at(i0[0], i0[1], i1[2]), at(i1[0], i0[1], i1[2]), t[0]);
    let c11 = lerp(at(i0[0], i1[1], i1[2]), at(i1[0], i1[1], i1[2]), t[0]);
    let c0 = lerp(c00, c10, t[1]);
    let c1 = lerp(c01, c11, t[1]);
    lerp(c0, c1, t[2])
}

/// Upsamples a coarse control grid to `out_shape` by trilinear
/// interpolation. Control points sit at evenly spaced positions whose first
/// and last points coincide with the first and last voxel of each axis.
pub fn upsample_control_grid<T: Real>(control: &[T], control_shape: [usize; 3], out_shape: [usize; 3]) -> Vec<T> {
    debug_assert_eq!(control.len(), control_shape.iter().product::<usize>());
    let ratio: [f64; 3] = std::array::from_fn(|a| {
        if out_shape[a] > 1 {
            (control_shape[a] - 1) as f64 / (out_shape[a] - 1) as f64
        } else {
            0.0
        }
    });
    let n = out_shape.iter().product();
    let mut out = Vec::with_capacity(n);
    for z in 0..out_shape[2] {
        for y in 0..out_shape[1] {
            for x in 0..out_shape[0] {
                let p = [x as f64 * ratio[0], y as f64 * ratio[1], z as f64 * ratio[2]];
                out.push(sample_trilinear(control, control_shape, p));
            }
        }
    }
    out
}
