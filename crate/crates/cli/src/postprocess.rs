//! Central-sulcus mask clean-up on NIfTI files.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use sulcikit::postproc::{postprocess_cs, PostprocConfig};
use sulcikit::volume::nifti::{read_raw, write_raw, NiftiData};
use sulcikit::BinaryMask;

use crate::failure::{at, Failure};

pub struct PostprocessOptions {
    pub inputs: Vec<PathBuf>,
    pub config: PostprocConfig,
    /// Labels forming the mask; any nonzero voxel when empty.
    pub labels: BTreeSet<u16>,
    pub out_dir: Option<PathBuf>,
}

/// Splits `name.nii.gz` / `name.nii` into `("name", ".nii.gz")`.
pub fn split_nifti_name(path: &Path) -> Option<(String, &'static str)> {
    let name = path.file_name()?.to_str()?;
    for ext in [".nii.gz", ".nii"] {
        if let Some(stem) = name.strip_suffix(ext) {
            return Some((stem.to_string(), ext));
        }
    }
    None
}

pub fn output_path(input: &Path, out_dir: Option<&Path>) -> Result<PathBuf, Failure> {
    let (stem, ext) = split_nifti_name(input)
        .ok_or_else(|| Failure::config(format!("{}: expected a .nii or .nii.gz file", input.display())))?;
    let dir = out_dir.unwrap_or_else(|| input.parent().unwrap_or(Path::new("")));
    Ok(dir.join(format!("{stem}_pp{ext}")))
}

/// Voxel membership of a value read from disk.
fn in_mask(value: f64, labels: &BTreeSet<u16>) -> bool {
    if labels.is_empty() {
        value != 0.0
    } else {
        value.fract() == 0.0 && value >= 0.0 && value <= u16::MAX as f64 && labels.contains(&(value as u16))
    }
}

/// Writes the post-processed copy of one file. Kept voxels retain their
/// original stored values and datatype.
pub fn process_file(input: &Path, opts: &PostprocessOptions) -> Result<PathBuf, Failure> {
    if !input.is_file() {
        return Err(Failure::io(format!("{}: file not found", input.display())));
    }
    let out = output_path(input, opts.out_dir.as_deref())?;
    let (header, grid, data) = read_raw(input).map_err(at(input))?;
    let scaling = header.scaling();
    let values: Vec<f64> = data
        .values_f64()
        .into_iter()
        .map(|v| scaling.map_or(v, |(s, i)| v * s + i))
        .collect();
    let mask = BinaryMask::new(grid.clone(), values.iter().map(|&v| in_mask(v, &opts.labels)).collect())?;
    let kept = postprocess_cs(&mask, &opts.config)?;
    let data = match scaling {
        None => data.masked(kept.voxels()),
        // the writer stores no scaling, so scaled inputs are written as their real values
        Some(_) => NiftiData::F32(
            values
                .iter()
                .zip(kept.voxels())
                .map(|(&v, &k)| if k { v as f32 } else { 0.0 })
                .collect(),
        ),
    };
    write_raw(&out, &grid, &data).map_err(at(&out))?;
    eprintln!(
        "postprocess: {} -> {} ({} of {} voxels kept)",
        input.display(),
        out.display(),
        kept.count_foreground(),
        mask.count_foreground()
    );
    Ok(out)
}

pub fn run(opts: &PostprocessOptions) -> Result<(), Failure> {
    opts.config.validate()?;
    if opts.inputs.is_empty() {
        return Err(Failure::config("no input files"));
    }
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    }
    for input in &opts.inputs {
        process_file(input, opts)?;
    }
    Ok(())
}
