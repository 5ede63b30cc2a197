//! Procedural toy brain used by the self-checks, tests and the CLI demo.
//!
//! Labels: 1 CSF, 2 GM, 3 WM, 100 left central sulcus, 101 right central
//! sulcus. The sulci are thin sheets cut into the grey-matter ribbon of
//! each hemisphere; a CSF gap separates the hemispheres.

use crate::volume::{LabelVolume, VoxelGrid};

pub const CSF: u16 = 1;
pub const GM: u16 = 2;
pub const WM: u16 = 3;
pub const LEFT_CS: u16 = 100;
pub const RIGHT_CS: u16 = 101;

pub const DEFAULT_SHAPE: [usize; 3] = [48, 56, 40];

/// Builds a phantom label map. `subject` perturbs sizes and sulcus
/// placement deterministically so different subjects differ.
pub fn phantom_labels(shape: [usize; 3], subject: u64) -> LabelVolume {
    let jitter = |k: u64| {
        let h = crate::rng::mix(subject, k);
        (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let c: [f64; 3] = std::array::from_fn(|a| (shape[a] as f64 - 1.0) / 2.0);
    let radii: [f64; 3] = std::array::from_fn(|a| shape[a] as f64 * (0.42 + 0.04 * jitter(a as u64)));
    let sulcus_y = c[1] + shape[1] as f64 * 0.08 * jitter(10);
    let wave = 1.5 + jitter(11);
    let depth = 0.55 + 0.1 * jitter(12);
    LabelVolume::from_fn(VoxelGrid::isotropic(shape), |[x, y, z]| {
        let p = [x as f64, y as f64, z as f64];
        let r = (0..3).map(|a| ((p[a] - c[a]) / radii[a]).powi(2)).sum::<f64>().sqrt();
        if r > 1.0 {
            return 0;
        }
        if (p[0] - c[0]).abs() < 1.0 {
            return CSF;
        }
        let scale = radii.iter().cloned().fold(f64::MAX, f64::min);
        let shell = (1.0 - r) * scale; // distance-ish to the outer surface
        let tissue = if shell < 1.5 {
            CSF
        } else if shell < 5.0 {
            GM
        } else {
            WM
        };
        // sulcus sheet: near a wavy plane in y, upper half of the brain,
        // reaching from the surface into the grey matter
        let plane = sulcus_y + wave * ((p[2] - c[2]) / 4.0).sin();
        let in_sheet = (p[1] - plane).abs() < 0.75 && p[2] > c[2] - radii[2] * 0.2;
        if in_sheet && shell >= 1.5 && shell < 5.0 + 3.0 * depth && tissue != CSF {
            return if p[0] < c[0] { LEFT_CS } else { RIGHT_CS };
        }
        tissue
    })
}
