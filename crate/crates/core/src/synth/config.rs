use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Interval;

/// Intensity prior of one tissue label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissuePrior {
    pub label: u16,
    pub mean_range: Interval,
    pub std_range: Interval,
}

/// Per-label Gaussian intensity hyper-ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissuePriors {
    pub tissues: Vec<TissuePrior>,
}

impl TissuePriors {
    pub fn new(mut tissues: Vec<TissuePrior>) -> Result<Self> {
        tissues.sort_by_key(|t| t.label);
        let priors = Self { tissues };
        priors.validate()?;
        Ok(priors)
    }

    /// T1w-like defaults on a 0-255 scale: CSF (1), GM (2), WM (3).
    /// Placeholders for a user-supplied priors file.
    pub fn t1w_default() -> Self {
        serde_json::from_str(DEFAULT_PRIORS_JSON).expect("bundled priors parse")
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for t in &self.tissues {
            if t.label == 0 {
                return Err(Error::InvalidConfig("label 0 is background and takes no prior".into()));
            }
            if !seen.insert(t.label) {
                return Err(Error::InvalidConfig(format!(
                    "label {} has more than one prior",
                    t.label
                )));
            }
            if !t.mean_range.is_valid() || !t.std_range.is_valid() {
                return Err(Error::InvalidConfig(format!(
                    "label {}: range with low > high",
                    t.label
                )));
            }
            if t.std_range.low < 0.0 {
                return Err(Error::InvalidConfig(format!("label {}: negative std", t.label)));
            }
        }
        Ok(())
    }

    pub fn get(&self, label: u16) -> Option<&TissuePrior> {
        self.tissues.iter().find(|t| t.label == label)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut priors: Self = serde_json::from_str(&text)?;
        priors.tissues.sort_by_key(|t| t.label);
        priors.validate()?;
        Ok(priors)
    }
}

/// One interval per spatial axis. Deserializes from either a single
/// `[low, high]` pair (applied to all three axes) or three pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "AxisIntervalsRepr")]
pub struct AxisIntervals(pub [Interval; 3]);

#[derive(Deserialize)]
#[serde(untagged)]
enum AxisIntervalsRepr {
    Shared(Interval),
    PerAxis([Interval; 3]),
}

impl From<AxisIntervalsRepr> for AxisIntervals {
    fn from(r: AxisIntervalsRepr) -> Self {
        match r {
            AxisIntervalsRepr::Shared(i) => AxisIntervals([i; 3]),
            AxisIntervalsRepr::PerAxis(a) => AxisIntervals(a),
        }
    }
}

impl AxisIntervals {
    pub const fn uniform(low: f64, high: f64) -> Self {
        AxisIntervals([Interval::new(low, high); 3])
    }

    pub const fn fixed(values: [f64; 3]) -> Self {
        AxisIntervals([
            Interval::point(values[0]),
            Interval::point(values[1]),
            Interval::point(values[2]),
        ])
    }

    fn is_valid(&self) -> bool {
        self.0.iter().all(Interval::is_valid)
    }
}

/// Randomization ranges of the label-map image generator.
///
/// Units: rotation in degrees, translation and elastic/blur magnitudes in
/// voxels, bias std in log-intensity. Shear entries are the (xy, xz, yz)
/// off-diagonal coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub rotation_range: AxisIntervals,
    pub scaling_range: AxisIntervals,
    pub shear_range: AxisIntervals,
    pub translation_range: AxisIntervals,
    pub elastic_grid: [usize; 3],
    pub elastic_std_range: Interval,
    pub blur_sigma_range: Interval,
    pub bias_grid: [usize; 3],
    pub bias_std_range: Interval,
    /// Sulcus label -> tissue label used when painting intensities.
    pub substitution_table: BTreeMap<u16, u16>,
    /// Inclusive label range reserved for sulci in combined label maps.
    /// Labels inside it must appear in `substitution_table`.
    pub sulcus_labels: Option<[u16; 2]>,
    pub normalize: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            rotation_range: AxisIntervals::uniform(-15.0, 15.0),
            scaling_range: AxisIntervals::uniform(0.85, 1.15),
            shear_range: AxisIntervals::uniform(-0.012, 0.012),
            translation_range: AxisIntervals::uniform(-10.0, 10.0),
            elastic_grid: [10; 3],
            elastic_std_range: Interval::new(0.0, 3.0),
            blur_sigma_range: Interval::new(0.5, 1.5),
            bias_grid: [4; 3],
            bias_std_range: Interval::new(0.0, 0.5),
            substitution_table: BTreeMap::new(),
            sulcus_labels: None,
            normalize: true,
        }
    }
}

impl GeneratorConfig {
    /// Every random stage pinned at its identity value.
    pub fn identity() -> Self {
        Self {
            rotation_range: AxisIntervals::fixed([0.0; 3]),
            scaling_range: AxisIntervals::fixed([1.0; 3]),
            shear_range: AxisIntervals::fixed([0.0; 3]),
            translation_range: AxisIntervals::fixed([0.0; 3]),
            elastic_std_range: Interval::point(0.0),
            blur_sigma_range: Interval::point(0.0),
            bias_std_range: Interval::point(0.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        for (name, r) in [
            ("rotation_range", &self.rotation_range),
            ("scaling_range", &self.scaling_range),
            ("shear_range", &self.shear_range),
            ("translation_range", &self.translation_range),
        ] {
            if !r.is_valid() {
                return bad(&format!("{name} has low > high"));
            }
        }
        if self.scaling_range.0.iter().any(|i| i.low <= 0.0) {
            return bad("scaling_range must be positive");
        }
        for (name, r) in [
            ("elastic_std_range", &self.elastic_std_range),
            ("blur_sigma_range", &self.blur_sigma_range),
            ("bias_std_range", &self.bias_std_range),
        ] {
            if !r.is_valid() {
                return bad(&format!("{name} has low > high"));
            }
            if r.low < 0.0 {
                return bad(&format!("{name} must be non-negative"));
            }
        }
        if self.elastic_grid.iter().any(|&g| g < 2) {
            return bad("elastic_grid entries must be >= 2");
        }
        if self.bias_grid.iter().any(|&g| g < 2) {
            return bad("bias_grid entries must be >= 2");
        }
        if let Some([lo, hi]) = self.sulcus_labels {
            if lo > hi {
                return bad("sulcus_labels has low > high");
            }
        }
        Ok(())
    }

    pub fn is_sulcus(&self, label: u16) -> bool {
        self.substitution_table.contains_key(&label)
            || self.sulcus_labels.is_some_and(|[lo, hi]| (lo..=hi).contains(&label))
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub const DEFAULT_PRIORS_JSON: &str = include_str!("../../config/default_priors.json");
pub const DEFAULT_GENERATOR_JSON: &str = include_str!("../../config/default_generator.json");
