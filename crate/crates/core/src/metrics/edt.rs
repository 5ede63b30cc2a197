//! Exact squared Euclidean distance transform with anisotropic spacing
//! (lower envelope of parabolas, one pass per axis).

use rayon::prelude::*;

use crate::volume::BinaryMask;

/// Squared distance (mm^2) from every voxel centre to the nearest
/// foreground voxel centre of `mask`; `f64::INFINITY` if the mask is empty.
pub fn squared_distance_transform(mask: &BinaryMask, spacing: [f64; 3]) -> Vec<f64> {
    let shape = mask.shape();
    let mut d: Vec<f64> = mask
        .voxels()
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();
    for axis in 0..3 {
        d = transform_axis(&d, shape, axis, spacing[axis]);
    }
    d
}

fn transform_axis(src: &[f64], shape: [usize; 3], axis: usize, step: f64) -> Vec<f64> {
    let n = shape[axis];
    let stride = [1, shape[0], shape[0] * shape[1]][axis];
    // line starts: every index whose coordinate along `axis` is 0
    let starts: Vec<usize> = (0..src.len()).filter(|&i| (i / stride).is_multiple_of(n)).collect();
    let lines: Vec<(usize, Vec<f64>)> = starts
        .par_iter()
        .map(|&base| {
            let f: Vec<f64> = (0..n).map(|k| src[base + k * stride]).collect();
            (base, envelope_1d(&f, step))
        })
        .collect();
    let mut out = vec![0.0; src.len()];
    for (base, line) in lines {
        for (k, v) in line.into_iter().enumerate() {
            out[base + k * stride] = v;
        }
    }
    out
}

/// `out[p] = min_q f[q] + (step * (p - q))^2`.
fn envelope_1d(f: &[f64], step: f64) -> Vec<f64> {
    let n = f.len();
    let sites: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    if sites.is_empty() {
        return vec![f64::INFINITY; n];
    }
    let pos = |q: usize| step * q as f64;
    let key = |q: usize| f[q] + pos(q) * pos(q);
    // abscissa where parabolas at q and v (v < q) intersect
    let cross = |q: usize, v: usize| (key(q) - key(v)) / (2.0 * (pos(q) - pos(v)));
    let mut hull: Vec<usize> = Vec::with_capacity(sites.len());
    let mut bounds: Vec<f64> = Vec::with_capacity(sites.len() + 1);
    for &q in &sites {
        loop {
            match hull.last() {
                None => {
                    hull.push(q);
                    bounds.clear();
                    bounds.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&v) => {
                    let s = cross(q, v);
                    if s <= *bounds.last().unwrap() {
                        hull.pop();
                        bounds.pop();
                        if hull.is_empty() {
                            continue;
                        }
                    } else {
                        hull.push(q);
                        bounds.push(s);
                        break;
                    }
                }
            }
        }
    }
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for p in 0..n {
        let x = pos(p);
        while k + 1 < hull.len() && bounds[k + 1] < x {
            k += 1;
        }
        // evaluate neighbours on the envelope too so near-ties resolve to
        // the true minimum
        let eval = |q: usize| {
            let d = step * (p as f64 - q as f64);
            f[q] + d * d
        };
        let mut best = eval(hull[k]);
        if k + 1 < hull.len() {
            best = best.min(eval(hull[k + 1]));
        }
        if k > 0 {
            best = best.min(eval(hull[k - 1]));
        }
        out.push(best);
    }
    out
}
