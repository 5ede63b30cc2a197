//! JSON inputs and outputs of the `generate` command.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sulcikit::synth::{GeneratorConfig, TissuePriors};

use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Label map with tissue and sulcus labels, or sulcus labels only when
    /// `tissue_map` is given.
    pub label_map: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tissue_map: Option<PathBuf>,
}

/// Subjects to generate from. Relative paths resolve against `root`,
/// which itself defaults to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Loads, resolves every path and checks ids are unique and files exist.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        let mut manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Failure::config(format!("{}: invalid manifest: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let root = match &manifest.root {
            Some(r) => base.join(r),
            None => base,
        };
        let mut ids = BTreeSet::new();
        for entry in &mut manifest.entries {
            if entry.id.is_empty() || entry.id.contains(['/', '\\']) {
                return Err(Failure::config(format!("invalid subject id {:?}", entry.id)));
            }
            if !ids.insert(entry.id.clone()) {
                return Err(Failure::config(format!("duplicate subject id {:?}", entry.id)));
            }
            entry.label_map = root.join(&entry.label_map);
            if let Some(t) = &mut entry.tissue_map {
                *t = root.join(&*t);
            }
            for p in std::iter::once(&entry.label_map).chain(entry.tissue_map.as_ref()) {
                if !p.is_file() {
                    return Err(Failure::io(format!("{}: file not found", p.display())));
                }
            }
        }
        manifest.root = Some(root);
        Ok(manifest)
    }

    /// Entries in id order; the position in this order is the subject index.
    pub fn sorted_entries(&self) -> Vec<&ManifestEntry> {
        let mut v: Vec<_> = self.entries.iter().collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }
}

fn default_samples() -> usize {
    100
}

/// Everything that determines the generated data besides the subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default = "TissuePriors::t1w_default")]
    pub priors: TissuePriors,
    #[serde(default = "default_samples")]
    pub samples_per_subject: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Failure::config(format!("{}: invalid config: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if self.samples_per_subject == 0 {
            return Err(Failure::config("samples_per_subject must be >= 1"));
        }
        self.generator.validate()?;
        self.priors.validate()?;
        Ok(())
    }

    /// Hash of the settings that shape every sample; outputs made under a
    /// different digest are regenerated.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(&(&self.generator, &self.priors)).expect("config serialises");
        Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GeneratedEntry {
    pub subject: String,
    pub index: usize,
    pub seed: u64,
    /// File names relative to the output directory.
    pub image: String,
    pub labels: String,
}

/// Written as `manifest.json` in the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedManifest {
    pub config_digest: String,
    pub master_seed: u64,
    pub entries: Vec<GeneratedEntry>,
}

pub const OUTPUT_MANIFEST: &str = "manifest.json";

impl GeneratedManifest {
    /// Previous manifest in `dir`, if any and readable.
    pub fn load_existing(dir: &Path) -> Option<Self> {
        let text = fs::read_to_string(dir.join(OUTPUT_MANIFEST)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn write(&self, dir: &Path) -> Result<(), Failure> {
        let path = dir.join(OUTPUT_MANIFEST);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
    }
}
