//! Writes a small demo dataset built from the procedural phantom.

use std::fs;
use std::path::PathBuf;

use sulcikit::synth::phantom::phantom_labels;
use sulcikit::synth::{GeneratorConfig, TissuePriors, DEFAULT_GENERATOR_JSON};
use sulcikit::volume::nifti::write_nifti;

use crate::failure::{at, Failure};
use crate::manifest::{DatasetManifest, ManifestEntry, RunConfig};

pub struct PhantomOptions {
    pub out: PathBuf,
    pub subjects: usize,
    pub shape: [usize; 3],
    pub samples: usize,
}

/// Writes `sub-NN_labels.nii.gz` per subject plus `manifest.json` and
/// `config.json` ready for `generate`.
pub fn run(opts: &PhantomOptions) -> Result<(), Failure> {
    if opts.subjects == 0 || opts.samples == 0 || opts.shape.contains(&0) {
        return Err(Failure::config("subjects, samples and shape must be >= 1"));
    }
    fs::create_dir_all(&opts.out).map_err(|e| Failure::io(format!("{}: {e}", opts.out.display())))?;
    let mut entries = Vec::new();
    for s in 0..opts.subjects {
        let id = format!("sub-{s:02}");
        let name = format!("{id}_labels.nii.gz");
        let path = opts.out.join(&name);
        write_nifti(&phantom_labels(opts.shape, s as u64), &path).map_err(at(&path))?;
        entries.push(ManifestEntry {
            id,
            label_map: name.into(),
            tissue_map: None,
        });
    }
    let manifest = DatasetManifest { root: None, entries };
    let generator: GeneratorConfig = serde_json::from_str(DEFAULT_GENERATOR_JSON).expect("bundled config parses");
    let config = RunConfig {
        generator,
        priors: TissuePriors::t1w_default(),
        samples_per_subject: opts.samples,
        master_seed: 0,
        output_dir: None,
    };
    for (name, json) in [
        (
            "manifest.json",
            serde_json::to_string_pretty(&manifest).expect("manifest serialises"),
        ),
        (
            "config.json",
            serde_json::to_string_pretty(&config).expect("config serialises"),
        ),
    ] {
        let path = opts.out.join(name);
        fs::write(&path, json + "\n").map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    }
    eprintln!(
        "phantom: {} subject(s) written to {}",
        opts.subjects,
        opts.out.display()
    );
    Ok(())
}
