//! Offline synthetic data generation for every subject of a manifest.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sulcikit::rng::mix;
use sulcikit::synth::{generate_sample, view_seed};
use sulcikit::volume::nifti::{read_nifti, write_nifti, NiftiVoxel};
use sulcikit::{LabelVolume, Volume};

use crate::failure::{at, Failure};
use crate::manifest::{DatasetManifest, GeneratedEntry, GeneratedManifest, ManifestEntry, RunConfig};

pub struct GenerateOptions {
    pub manifest: PathBuf,
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn image_name(id: &str, k: usize) -> String {
    format!("{id}_{k:03}_img.nii.gz")
}

pub fn labels_name(id: &str, k: usize) -> String {
    format!("{id}_{k:03}_seg.nii.gz")
}

/// Tissue map with every nonzero voxel of the sulcus map painted over it.
fn load_subject(entry: &ManifestEntry) -> Result<LabelVolume, Failure> {
    let labels: LabelVolume = read_nifti(&entry.label_map).map_err(at(&entry.label_map))?;
    let Some(tissue_path) = &entry.tissue_map else {
        return Ok(labels);
    };
    let mut tissue: LabelVolume = read_nifti(tissue_path).map_err(at(tissue_path))?;
    tissue
        .grid()
        .ensure_same(labels.grid(), "tissue map vs label map")
        .map_err(at(tissue_path))?;
    for (t, &l) in tissue.voxels_mut().iter_mut().zip(labels.voxels()) {
        if l != 0 {
            *t = l;
        }
    }
    Ok(tissue)
}

/// Writes through a hidden temporary name so an interrupted run never
/// leaves a truncated file under the final name.
fn write_atomic<T: NiftiVoxel>(volume: &Volume<T>, dir: &Path, name: &str) -> Result<(), Failure> {
    let tmp = dir.join(format!(".partial-{name}"));
    let dst = dir.join(name);
    write_nifti(volume, &tmp).map_err(at(&tmp))?;
    fs::rename(&tmp, &dst).map_err(|e| Failure::io(format!("{}: {e}", dst.display())))
}

struct SubjectJob<'a> {
    entry: &'a ManifestEntry,
    pending: Vec<GeneratedEntry>,
}

pub fn run(opts: &GenerateOptions) -> Result<(), Failure> {
    let mut config = RunConfig::load(&opts.config)?;
    if let Some(seed) = opts.seed {
        config.master_seed = seed;
    }
    let out = opts
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Failure::config("no output directory: pass --out or set output_dir in the config"))?;
    let manifest = DatasetManifest::load(&opts.manifest)?;
    fs::create_dir_all(&out).map_err(|e| Failure::io(format!("{}: {e}", out.display())))?;

    let digest = config.digest();
    let previous: BTreeSet<GeneratedEntry> = GeneratedManifest::load_existing(&out)
        .filter(|m| m.config_digest == digest && m.master_seed == config.master_seed)
        .map(|m| m.entries.into_iter().collect())
        .unwrap_or_default();

    let mut done = Vec::new();
    let mut jobs = Vec::new();
    for (s, entry) in manifest.sorted_entries().into_iter().enumerate() {
        let subject_seed = mix(config.master_seed, s as u64);
        let mut pending = Vec::new();
        for k in 0..config.samples_per_subject {
            let expected = GeneratedEntry {
                subject: entry.id.clone(),
                index: k,
                seed: view_seed(subject_seed, k),
                image: image_name(&entry.id, k),
                labels: labels_name(&entry.id, k),
            };
            let present = out.join(&expected.image).is_file() && out.join(&expected.labels).is_file();
            if present && previous.contains(&expected) {
                done.push(expected);
            } else {
                pending.push(expected);
            }
        }
        if !pending.is_empty() {
            jobs.push(SubjectJob { entry, pending });
        }
    }
    let skipped = done.len();

    let results: Vec<(Vec<GeneratedEntry>, Option<Failure>)> = jobs
        .par_iter()
        .map(|job| {
            let mut written = Vec::new();
            let labels = match load_subject(job.entry) {
                Ok(l) => l,
                Err(e) => return (written, Some(e)),
            };
            for item in &job.pending {
                let step = generate_sample(&labels, &config.priors, &config.generator, item.seed)
                    .map_err(Failure::from)
                    .and_then(|sample| {
                        write_atomic(&sample.image, &out, &item.image)?;
                        write_atomic(&sample.labels, &out, &item.labels)
                    });
                if let Err(e) = step {
                    return (written, Some(e));
                }
                written.push(item.clone());
            }
            (written, None)
        })
        .collect();

    let mut first_error = None;
    for (written, err) in results {
        done.extend(written);
        if first_error.is_none() {
            first_error = err;
        }
    }
    let generated = done.len() - skipped;
    done.sort();
    let manifest_out = GeneratedManifest {
        config_digest: digest,
        master_seed: config.master_seed,
        entries: done,
    };
    if GeneratedManifest::load_existing(&out).as_ref() != Some(&manifest_out) {
        manifest_out.write(&out)?;
    }
    eprintln!(
        "generate: {generated} new sample(s), {skipped} already present, output in {}",
        out.display()
    );
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
