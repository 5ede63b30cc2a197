//! Segmentation evaluation: Dice overlap, Hausdorff distance in mm,
//! voxel-count volume and exposed-face surface area, cohort summaries.

mod edt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::BinaryMask;

pub use edt::squared_distance_transform;

/// `2 |X ∩ Y| / (|X| + |Y|)`.
pub fn dice(x: &BinaryMask, y: &BinaryMask) -> Result<f64> {
    x.grid().ensure_same(y.grid(), "dice")?;
    let (mut nx, mut ny, mut both) = (0usize, 0usize, 0usize);
    for (&a, &b) in x.voxels().iter().zip(y.voxels()) {
        nx += a as usize;
        ny += b as usize;
        both += (a && b) as usize;
    }
    if nx + ny == 0 {
        return Err(Error::BothEmpty);
    }
    Ok(2.0 * both as f64 / (nx + ny) as f64)
}

/// Largest distance from a voxel of `from` to the nearest voxel of `to`
/// (squared, mm^2).
fn directed_sq(from: &BinaryMask, to_dt: &[f64]) -> f64 {
    from.voxels()
        .iter()
        .zip(to_dt)
        .filter(|(&f, _)| f)
        .fold(0.0f64, |m, (_, &d)| m.max(d))
}

/// Symmetric Hausdorff distance between the voxel-centre sets of two
/// masks, in world units given by `spacing`.
pub fn hausdorff(x: &BinaryMask, y: &BinaryMask, spacing: [f64; 3]) -> Result<f64> {
    x.grid().ensure_same(y.grid(), "hausdorff")?;
    if !x.voxels().contains(&true) {
        return Err(Error::EmptySet("first"));
    }
    if !y.voxels().contains(&true) {
        return Err(Error::EmptySet("second"));
    }
    let (dt_x, dt_y) = rayon::join(
        || squared_distance_transform(x, spacing),
        || squared_distance_transform(y, spacing),
    );
    let h = directed_sq(x, &dt_y).max(directed_sq(y, &dt_x));
    Ok(h.sqrt())
}

/// Foreground voxel count times the voxel volume (mm^3).
pub fn voxel_volume(mask: &BinaryMask, spacing: [f64; 3]) -> f64 {
    mask.count_foreground() as f64 * spacing[0] * spacing[1] * spacing[2]
}

/// Total area (mm^2) of foreground voxel faces that border background or
/// the edge of the volume.
pub fn voxel_surface_area(mask: &BinaryMask, spacing: [f64; 3]) -> f64 {
    let face = [
        spacing[1] * spacing[2],
        spacing[0] * spacing[2],
        spacing[0] * spacing[1],
    ];
    let grid = mask.grid();
    let mut exposed = [0usize; 3];
    for (i, &v) in mask.voxels().iter().enumerate() {
        if !v {
            continue;
        }
        let c = grid.coords(i);
        for (axis, count) in exposed.iter_mut().enumerate() {
            for step in [-1isize, 1] {
                let mut p = [c[0] as isize, c[1] as isize, c[2] as isize];
                p[axis] += step;
                if !mask.get_or_background(p) {
                    *count += 1;
                }
            }
        }
    }
    (0..3).map(|a| exposed[a] as f64 * face[a]).sum()
}

/// Metrics of one prediction / ground-truth pair. `None` marks a metric
/// that is undefined for the pair (empty masks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub id: String,
    pub dsc: Option<f64>,
    pub hd_mm: Option<f64>,
    pub pred_volume_mm3: f64,
    pub gt_volume_mm3: f64,
    pub pred_surface_mm2: f64,
    pub gt_surface_mm2: f64,
}

/// Evaluates one pair on the ground-truth grid spacing.
pub fn evaluate_pair(pred: &BinaryMask, gt: &BinaryMask, id: impl Into<String>) -> Result<PairReport> {
    pred.grid().ensure_same(gt.grid(), "evaluate_pair")?;
    let spacing = gt.grid().spacing();
    let dsc = match dice(pred, gt) {
        Ok(d) => Some(d),
        Err(Error::BothEmpty) => None,
        Err(e) => return Err(e),
    };
    let hd_mm = match hausdorff(pred, gt, spacing) {
        Ok(h) => Some(h),
        Err(Error::EmptySet(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(PairReport {
        id: id.into(),
        dsc,
        hd_mm,
        pred_volume_mm3: voxel_volume(pred, spacing),
        gt_volume_mm3: voxel_volume(gt, spacing),
        pred_surface_mm2: voxel_surface_area(pred, spacing),
        gt_surface_mm2: voxel_surface_area(gt, spacing),
    })
}

/// Per-pair results of a cohort, sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: Vec<PairReport>,
}

impl EvalReport {
    pub fn new(mut pairs: Vec<PairReport>) -> Self {
        pairs.sort_by(|a, b| a.id.cmp(&b.id));
        Self { pairs }
    }

    pub fn summary(&self) -> Result<CohortSummary> {
        aggregate(&self.pairs)
    }
}

/// Evaluates `(id, pred, gt)` triples in parallel.
pub fn evaluate_cohort(items: &[(String, BinaryMask, BinaryMask)]) -> Result<EvalReport> {
    use rayon::prelude::*;
    let pairs = items
        .par_iter()
        .map(|(id, pred, gt)| evaluate_pair(pred, gt, id.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::new(pairs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
    /// Entries excluded because the metric was undefined.
    pub flagged: usize,
}

impl MetricSummary {
    /// Summary of the defined values; `None` when every value is flagged.
    pub fn from_values(values: &[Option<f64>]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().flatten().copied().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Some(Self {
            mean,
            std: var.sqrt(),
            median,
            min: v[0],
            max: v[n - 1],
            count: n,
            flagged: values.len() - n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub dsc: MetricSummary,
    pub hd_mm: MetricSummary,
    pub pred_volume_mm3: MetricSummary,
    pub gt_volume_mm3: MetricSummary,
    pub pred_surface_mm2: MetricSummary,
    pub gt_surface_mm2: MetricSummary,
}

/// Per-metric summary statistics over a cohort; flagged entries are
/// excluded and counted.
pub fn aggregate(reports: &[PairReport]) -> Result<CohortSummary> {
    fn summary(
        reports: &[PairReport],
        name: &'static str,
        f: impl Fn(&PairReport) -> Option<f64>,
    ) -> Result<MetricSummary> {
        let values: Vec<Option<f64>> = reports.iter().map(f).collect();
        MetricSummary::from_values(&values).ok_or(Error::NoValidEntries(name))
    }
    Ok(CohortSummary {
        dsc: summary(reports, "dsc", |r| r.dsc)?,
        hd_mm: summary(reports, "hd_mm", |r| r.hd_mm)?,
        pred_volume_mm3: summary(reports, "pred_volume_mm3", |r| Some(r.pred_volume_mm3))?,
        gt_volume_mm3: summary(reports, "gt_volume_mm3", |r| Some(r.gt_volume_mm3))?,
        pred_surface_mm2: summary(reports, "pred_surface_mm2", |r| Some(r.pred_surface_mm2))?,
        gt_surface_mm2: summary(reports, "gt_surface_mm2", |r| Some(r.gt_surface_mm2))?,
    })
}
