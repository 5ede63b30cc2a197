//! Cohort evaluation of predicted masks against ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sulcikit::metrics::{evaluate_pair, CohortSummary, EvalReport, PairReport};
use sulcikit::volume::{binarize, nifti::read_nifti};
use sulcikit::{BinaryMask, LabelVolume};

use crate::failure::{at, Failure, EXIT_NO_PAIRS};
use crate::postprocess::split_nifti_name;

pub struct EvaluateOptions {
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    /// Labels forming the mask; any nonzero voxel when empty.
    pub labels: BTreeSet<u16>,
}

#[derive(Debug, Serialize)]
pub struct EvaluationDocument {
    pub pairs: Vec<PairReport>,
    /// `None` when some metric is undefined for every pair.
    pub summary: Option<CohortSummary>,
    pub unmatched_pred: Vec<String>,
    pub unmatched_gt: Vec<String>,
}

/// NIfTI files of a directory keyed by stem.
fn list_volumes(dir: &Path) -> Result<BTreeMap<String, PathBuf>, Failure> {
    let read = fs::read_dir(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in read {
        let path = entry
            .map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?
            .path();
        if !path.is_file() {
            continue;
        }
        if let Some((stem, _)) = split_nifti_name(&path) {
            if !stem.starts_with('.') {
                out.insert(stem, path);
            }
        }
    }
    Ok(out)
}

/// Pairs prediction and ground-truth stems. A prediction whose stem ends in
/// `_pp` also matches the ground truth without that suffix, unless the
/// exact stem is present too. Returns `(id, pred, gt)` plus unmatched stems.
pub fn pair_stems(
    pred: &BTreeMap<String, PathBuf>,
    gt: &BTreeMap<String, PathBuf>,
) -> (Vec<(String, PathBuf, PathBuf)>, Vec<String>, Vec<String>) {
    let mut pairs = Vec::new();
    let mut used_gt = BTreeSet::new();
    let mut unmatched_pred = Vec::new();
    for (stem, path) in pred {
        let target = if gt.contains_key(stem) {
            Some(stem.as_str())
        } else {
            stem.strip_suffix("_pp")
                .filter(|s| gt.contains_key(*s) && !pred.contains_key(*s))
        };
        match target {
            Some(id) if used_gt.insert(id.to_string()) => pairs.push((id.to_string(), path.clone(), gt[id].clone())),
            _ => unmatched_pred.push(stem.clone()),
        }
    }
    let unmatched_gt = gt.keys().filter(|k| !used_gt.contains(*k)).cloned().collect();
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
    (pairs, unmatched_pred, unmatched_gt)
}

fn load_mask(path: &Path, labels: &BTreeSet<u16>) -> Result<BinaryMask, Failure> {
    let volume: LabelVolume = read_nifti(path).map_err(at(path))?;
    Ok(if labels.is_empty() {
        volume.map(|v| v != 0)
    } else {
        binarize(&volume, labels)
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv(pairs: &[PairReport]) -> String {
    let mut s = String::from("id,dsc,hd_mm,pred_volume_mm3,gt_volume_mm3,pred_surface_mm2,gt_surface_mm2\n");
    for r in pairs {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            csv_field(&r.id),
            opt(r.dsc),
            opt(r.hd_mm),
            r.pred_volume_mm3,
            r.gt_volume_mm3,
            r.pred_surface_mm2,
            r.gt_surface_mm2
        ));
    }
    s
}

pub fn run(opts: &EvaluateOptions) -> Result<(), Failure> {
    let pred = list_volumes(&opts.pred)?;
    let gt = list_volumes(&opts.gt)?;
    let (pairs, unmatched_pred, unmatched_gt) = pair_stems(&pred, &gt);
    for s in &unmatched_pred {
        eprintln!("warning: prediction {s} has no ground truth");
    }
    for s in &unmatched_gt {
        eprintln!("warning: ground truth {s} has no prediction");
    }
    if pairs.is_empty() {
        return Err(Failure {
            code: EXIT_NO_PAIRS,
            message: "no prediction / ground-truth pairs matched".into(),
        });
    }
    let reports = pairs
        .par_iter()
        .map(|(id, p, g)| {
            let pm = load_mask(p, &opts.labels)?;
            let gm = load_mask(g, &opts.labels)?;
            evaluate_pair(&pm, &gm, id.clone()).map_err(|e| Failure::from(e).with_context(id))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let report = EvalReport::new(reports);
    let summary = match report.summary() {
        Ok(s) => Some(s),
        Err(e) => {
            eprintln!("warning: no cohort summary: {e}");
            None
        }
    };
    if let Some(s) = &summary {
        eprintln!(
            "evaluate: {} pair(s), mean dsc {:.4}, mean hd {:.3} mm",
            report.pairs.len(),
            s.dsc.mean,
            s.hd_mm.mean
        );
    }
    let doc = EvaluationDocument {
        pairs: report.pairs,
        summary,
        unmatched_pred,
        unmatched_gt,
    };
    let mut json = serde_json::to_string_pretty(&doc).expect("report serialises");
    json.push('\n');
    match &opts.out {
        Some(path) => fs::write(path, json).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?,
        None => print!("{json}"),
    }
    if let Some(path) = &opts.csv {
        fs::write(path, to_csv(&doc.pairs)).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
