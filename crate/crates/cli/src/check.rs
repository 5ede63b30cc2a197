//! Self-check suite: every numeric kernel compared against an
//! independent oracle or a closed-form value.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use sulcikit::losses::{
    contrastive_loss, contrastive_loss_grad, finite_difference_check, optimize_embeddings_demo, random_batch,
    soft_dice_loss, tversky_loss, ContrastiveObjective, Differentiable, EmbeddingBatch, ProbabilityVolume, SegLoss,
    SegObjective,
};
use sulcikit::metrics::{dice, hausdorff};
use sulcikit::postproc::{connected_components, keep_two_largest, postprocess_cs, Connectivity, PostprocConfig};
use sulcikit::rng::mix;
use sulcikit::synth::phantom::phantom_labels;
use sulcikit::synth::{generate_sample, generate_views, view_seed, GeneratorConfig, TissuePrior, TissuePriors};
use sulcikit::volume::nifti::{read_raw, write_raw, NiftiData};
use sulcikit::{BinaryMask, LabelVolume, Volume, VoxelGrid};

/// Deliberate faults for exercising the failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Scales the analytic contrastive gradient by 1.001.
    Gradient,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub tolerance: f64,
    pub observed: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl CheckResult {
    fn within(name: &'static str, tolerance: f64, observed: f64) -> Self {
        Self {
            name,
            tolerance,
            observed,
            pass: observed <= tolerance,
            value: None,
        }
    }

    fn with_value(mut self, value: f64) -> Self {
        self.value = Some(value);
        self
    }
}

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub checks: Vec<CheckResult>,
    pub passed: usize,
    pub failed: usize,
}

type CheckFn = fn(Option<Fault>) -> CheckResult;

const CHECKS: &[(&str, CheckFn)] = &[
    ("nt_xent_fixture", nt_xent_fixture),
    ("degenerate_batch", degenerate_batch),
    ("contrastive_gradient", contrastive_gradient),
    ("dice_gradient", dice_gradient),
    ("tversky_gradient", tversky_gradient),
    ("tversky_dice_identity", tversky_dice_identity),
    ("contrastive_scale_invariance", contrastive_scale_invariance),
    ("contrastive_rotation_invariance", contrastive_rotation_invariance),
    ("ssl_descent_demo", ssl_descent_demo),
    ("connected_components_flood_fill", connected_components_flood_fill),
    ("postproc_three_blobs", postproc_three_blobs),
    ("postproc_idempotent", postproc_idempotent),
    ("hausdorff_brute_force", hausdorff_brute_force),
    ("hausdorff_fixture", hausdorff_fixture),
    ("dice_fixtures", dice_fixtures),
    ("generator_determinism", generator_determinism),
    ("generator_label_closure", generator_label_closure),
    ("generator_identity_painting", generator_identity_painting),
    ("nifti_round_trip", nifti_round_trip),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs every check whose name contains `filter`.
pub fn run_checks(filter: Option<&str>, fault: Option<Fault>) -> CheckReport {
    let checks: Vec<CheckResult> = CHECKS
        .iter()
        .filter(|(name, _)| filter.is_none_or(|f| name.contains(f)))
        .map(|(_, f)| f(fault))
        .collect();
    let passed = checks.iter().filter(|c| c.pass).count();
    let failed = checks.len() - passed;
    CheckReport { checks, passed, failed }
}

fn uniform(seed: u64, i: u64) -> f64 {
    (mix(seed, i) >> 11) as f64 / (1u64 << 53) as f64
}

fn random_mask(shape: [usize; 3], density: f64, seed: u64) -> BinaryMask {
    let grid = VoxelGrid::isotropic(shape);
    let voxels = (0..grid.len()).map(|i| uniform(seed, i as u64) < density).collect();
    BinaryMask::new(grid, voxels).expect("length matches grid")
}

/// Loss straight from the definition: no max-subtraction, no shared
/// similarity matrix.
fn nt_xent_reference(rows: &[Vec<f64>], tau: f64) -> f64 {
    let cos = |a: &[f64], b: &[f64]| {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        d / (na * nb)
    };
    let term = |i: usize, j: usize| {
        let num = (cos(&rows[i], &rows[j]) / tau).exp();
        let den: f64 = (0..rows.len())
            .filter(|&k| k != i)
            .map(|k| (cos(&rows[i], &rows[k]) / tau).exp())
            .sum();
        -(num / den).ln()
    };
    let n = rows.len() / 2;
    (0..n)
        .map(|k| term(2 * k, 2 * k + 1) + term(2 * k + 1, 2 * k))
        .sum::<f64>()
        / (2 * n) as f64
}

fn nt_xent_fixture(_: Option<Fault>) -> CheckResult {
    let rows = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]];
    let batch = EmbeddingBatch::from_rows(&rows).expect("valid fixture");
    let loss = contrastive_loss(&batch, 1.0).expect("valid fixture");
    CheckResult::within("nt_xent_fixture", 1e-9, (loss - nt_xent_reference(&rows, 1.0)).abs()).with_value(loss)
}

fn degenerate_batch(_: Option<Fault>) -> CheckResult {
    let batch = random_batch(1, 16, 7).expect("valid batch");
    let loss = contrastive_loss(&batch, 0.5).expect("valid batch");
    let grad = contrastive_loss_grad(&batch, 0.5).expect("valid batch");
    let worst = grad.iter().fold(loss.abs(), |m, g| m.max(g.abs()));
    CheckResult::within("degenerate_batch", 0.0, worst)
}

struct Faulty<'a>(&'a dyn Differentiable);

impl Differentiable for Faulty<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.0.value(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.0.gradient(x).into_iter().map(|g| g * 1.001).collect()
    }
}

fn contrastive_gradient(fault: Option<Fault>) -> CheckResult {
    let obj = ContrastiveObjective {
        dim: 16,
        temperature: 0.5,
    };
    let worst = (0..20u64)
        .map(|seed| {
            let batch = random_batch(4, 16, seed).expect("valid batch");
            match fault {
                Some(Fault::Gradient) => finite_difference_check(&Faulty(&obj), batch.as_slice(), 1e-4),
                None => finite_difference_check(&obj, batch.as_slice(), 1e-4),
            }
        })
        .fold(0.0, f64::max);
    CheckResult::within("contrastive_gradient", 1e-5, worst)
}

fn seg_gradient(name: &'static str, loss: SegLoss) -> CheckResult {
    let worst = (0..20u64)
        .map(|seed| {
            let n = 4 * 4 * 4;
            let p: Vec<f64> = (0..n).map(|i| 0.05 + 0.9 * uniform(seed, i)).collect();
            let target = (0..n).map(|i| uniform(seed ^ 0xA5A5, i) < 0.3).collect();
            finite_difference_check(&SegObjective { loss, target }, &p, 1e-4)
        })
        .fold(0.0, f64::max);
    CheckResult::within(name, 1e-5, worst)
}

fn dice_gradient(_: Option<Fault>) -> CheckResult {
    seg_gradient("dice_gradient", SegLoss::Dice { smooth: 1e-5 })
}

fn tversky_gradient(_: Option<Fault>) -> CheckResult {
    seg_gradient(
        "tversky_gradient",
        SegLoss::Tversky {
            alpha: 0.7,
            beta: 0.3,
            smooth: 1e-5,
        },
    )
}

fn tversky_dice_identity(_: Option<Fault>) -> CheckResult {
    let grid = VoxelGrid::isotropic([6, 6, 6]);
    let differing = (0..20u64)
        .filter(|&seed| {
            let p = Volume::new(grid.clone(), (0..grid.len() as u64).map(|i| uniform(seed, i)).collect())
                .expect("length matches");
            let p = ProbabilityVolume::new(p).expect("values in [0, 1)");
            let g = random_mask([6, 6, 6], 0.2, seed + 1000);
            let d: f64 = soft_dice_loss(&p, &g, 1e-5).expect("matching grids");
            let t: f64 = tversky_loss(&p, &g, 0.5, 0.5, 1e-5).expect("matching grids");
            d.to_bits() != t.to_bits()
        })
        .count();
    CheckResult::within("tversky_dice_identity", 0.0, differing as f64)
}

fn contrastive_scale_invariance(_: Option<Fault>) -> CheckResult {
    let batch = random_batch(4, 8, 21).expect("valid batch");
    let base = contrastive_loss(&batch, 0.5).expect("valid batch");
    let mut worst: f64 = 0.0;
    for row in 0..batch.rows() {
        let mut data = batch.as_slice().to_vec();
        data[row * 8..(row + 1) * 8].iter_mut().for_each(|x| *x *= 3.0);
        let scaled = EmbeddingBatch::new(data, 8).expect("valid batch");
        worst = worst.max((contrastive_loss(&scaled, 0.5).expect("valid batch") - base).abs());
    }
    CheckResult::within("contrastive_scale_invariance", 1e-6, worst)
}

/// Composition of plane rotations over every coordinate pair.
fn rotate_rows(data: &[f64], dim: usize, seed: u64) -> Vec<f64> {
    let mut out = data.to_vec();
    let mut k = 0;
    for a in 0..dim {
        for b in a + 1..dim {
            let theta = std::f64::consts::TAU * uniform(seed, k);
            k += 1;
            let (s, c) = theta.sin_cos();
            for row in out.chunks_mut(dim) {
                let (x, y) = (row[a], row[b]);
                row[a] = c * x - s * y;
                row[b] = s * x + c * y;
            }
        }
    }
    out
}

fn contrastive_rotation_invariance(_: Option<Fault>) -> CheckResult {
    let worst = (0..5u64)
        .map(|seed| {
            let batch = random_batch(4, 8, seed).expect("valid batch");
            let rotated = EmbeddingBatch::new(rotate_rows(batch.as_slice(), 8, seed), 8).expect("valid batch");
            let a = contrastive_loss(&batch, 0.5).expect("valid batch");
            let b = contrastive_loss(&rotated, 0.5).expect("valid batch");
            (a - b).abs()
        })
        .fold(0.0, f64::max);
    CheckResult::within("contrastive_rotation_invariance", 1e-6, worst)
}

fn ssl_descent_demo(_: Option<Fault>) -> CheckResult {
    let batch = random_batch(8, 16, 0).expect("valid batch");
    let t = optimize_embeddings_demo(&batch, 0.5, 200, 0.5).expect("valid demo");
    let (first, last) = (t[0], t[t.len() - 1]);
    let separated = last.mean_positive_similarity > last.mean_negative_similarity.unwrap_or(f64::INFINITY);
    let decrease = last.loss - first.loss;
    CheckResult {
        name: "ssl_descent_demo",
        tolerance: 0.0,
        observed: decrease,
        pass: decrease < 0.0 && separated,
        value: Some(last.loss),
    }
}

/// Breadth-first flood fill; component ids in scan order.
fn flood_fill(mask: &BinaryMask, connectivity: Connectivity) -> Vec<u32> {
    let max_l1 = match connectivity {
        Connectivity::Six => 1,
        Connectivity::Eighteen => 2,
        Connectivity::TwentySix => 3,
    };
    let [nx, ny, nz] = mask.shape();
    let mut labels = vec![0u32; mask.len()];
    let mut next = 0;
    for start in 0..mask.len() {
        if !mask.voxels()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let [x, y, z] = [i % nx, (i / nx) % ny, i / (nx * ny)];
            for dz in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx.abs() + dy.abs() + dz.abs() > max_l1 {
                            continue;
                        }
                        let (a, b, c) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                        if a < 0 || b < 0 || c < 0 || a >= nx as i64 || b >= ny as i64 || c >= nz as i64 {
                            continue;
                        }
                        let j = a as usize + nx * (b as usize + ny * c as usize);
                        if mask.voxels()[j] && labels[j] == 0 {
                            labels[j] = next;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
    }
    labels
}

/// True when both labelings induce the same partition of the voxels.
fn same_partition(a: &[u32], b: &[u32]) -> bool {
    let mut ab = BTreeMap::new();
    let mut ba = BTreeMap::new();
    a.iter()
        .zip(b)
        .all(|(&x, &y)| (x == 0) == (y == 0) && *ab.entry(x).or_insert(y) == y && *ba.entry(y).or_insert(x) == x)
}

fn connected_components_flood_fill(_: Option<Fault>) -> CheckResult {
    let mut mismatches = 0;
    for conn in Connectivity::ALL {
        for seed in 0..10u64 {
            let mask = random_mask([16, 16, 16], 0.3, seed);
            let cc = connected_components(&mask, conn);
            if !same_partition(cc.labels.voxels(), &flood_fill(&mask, conn)) {
                mismatches += 1;
            }
        }
    }
    CheckResult::within("connected_components_flood_fill", 0.0, mismatches as f64)
}

/// Blobs of 10, 5 and 1 voxels, far enough apart that one dilation step
/// keeps them separate.
pub fn three_blobs() -> BinaryMask {
    let mut m = BinaryMask::zeros(VoxelGrid::isotropic([20, 8, 8]));
    for x in 1..6 {
        for y in 1..3 {
            m.set(x, y, 1, true);
        }
    }
    for x in 9..14 {
        m.set(x, 4, 4, true);
    }
    m.set(18, 6, 6, true);
    m
}

fn postproc_three_blobs(_: Option<Fault>) -> CheckResult {
    let kept = keep_two_largest(&three_blobs(), &PostprocConfig::default()).expect("valid config");
    CheckResult::within(
        "postproc_three_blobs",
        0.0,
        (kept.count_foreground() as f64 - 15.0).abs(),
    )
    .with_value(kept.count_foreground() as f64)
}

fn postproc_idempotent(_: Option<Fault>) -> CheckResult {
    let config = PostprocConfig::default();
    let failures = (0..10u64)
        .filter(|&seed| {
            let mask = random_mask([16, 16, 16], 0.02, seed);
            let once = postprocess_cs(&mask, &config).expect("valid config");
            let twice = postprocess_cs(&once, &config).expect("valid config");
            let subset = once.voxels().iter().zip(mask.voxels()).all(|(&o, &m)| !o || m);
            once != twice || !subset
        })
        .count();
    CheckResult::within("postproc_idempotent", 0.0, failures as f64)
}

fn points(mask: &BinaryMask, spacing: [f64; 3]) -> Vec<[f64; 3]> {
    (0..mask.len())
        .filter(|&i| mask.voxels()[i])
        .map(|i| {
            let c = mask.grid().coords(i);
            [
                c[0] as f64 * spacing[0],
                c[1] as f64 * spacing[1],
                c[2] as f64 * spacing[2],
            ]
        })
        .collect()
}

fn brute_hausdorff(x: &BinaryMask, y: &BinaryMask, spacing: [f64; 3]) -> f64 {
    let (px, py) = (points(x, spacing), points(y, spacing));
    let directed = |a: &[[f64; 3]], b: &[[f64; 3]]| {
        a.iter()
            .map(|p| {
                b.iter()
                    .map(|q| {
                        let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
                        d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    directed(&px, &py).max(directed(&py, &px)).sqrt()
}

fn hausdorff_brute_force(_: Option<Fault>) -> CheckResult {
    let worst = (0..10u64)
        .map(|seed| {
            let x = random_mask([10, 10, 10], 0.05, 2 * seed);
            let y = random_mask([10, 10, 10], 0.05, 2 * seed + 1);
            let spacing = [1.0, 1.0, 2.0];
            (hausdorff(&x, &y, spacing).expect("nonempty masks") - brute_hausdorff(&x, &y, spacing)).abs()
        })
        .fold(0.0, f64::max);
    CheckResult::within("hausdorff_brute_force", 0.0, worst)
}

fn hausdorff_fixture(_: Option<Fault>) -> CheckResult {
    let mut x = BinaryMask::zeros(VoxelGrid::isotropic([5, 5, 1]));
    let mut y = x.clone();
    x.set(0, 0, 0, true);
    y.set(3, 4, 0, true);
    let h = hausdorff(&x, &y, [1.0; 3]).expect("nonempty masks");
    CheckResult::within("hausdorff_fixture", 0.0, (h - 5.0).abs()).with_value(h)
}

fn dice_fixtures(_: Option<Fault>) -> CheckResult {
    let line = |on: &[usize]| {
        let mut m = BinaryMask::zeros(VoxelGrid::isotropic([4, 1, 1]));
        on.iter().for_each(|&x| m.set(x, 0, 0, true));
        m
    };
    let (a, b, c) = (line(&[0, 1]), line(&[1, 2]), line(&[3]));
    let errors = [
        (dice(&a, &a).expect("nonempty") - 1.0).abs(),
        dice(&a, &c).expect("nonempty").abs(),
        (dice(&a, &b).expect("nonempty") - 0.5).abs(),
    ];
    CheckResult::within("dice_fixtures", 1e-12, errors.iter().cloned().fold(0.0, f64::max))
}

fn bundled_generator() -> GeneratorConfig {
    serde_json::from_str(sulcikit::synth::DEFAULT_GENERATOR_JSON).expect("bundled config parses")
}

fn generator_determinism(_: Option<Fault>) -> CheckResult {
    let labels = phantom_labels([24, 28, 20], 1);
    let (priors, config) = (TissuePriors::t1w_default(), bundled_generator());
    let views = generate_views(&labels, &priors, &config, 5, 3).expect("valid config");
    let differing = views
        .iter()
        .enumerate()
        .filter(|(k, v)| {
            let again = generate_sample(&labels, &priors, &config, view_seed(5, *k)).expect("valid config");
            again
                .image
                .voxels()
                .iter()
                .zip(v.image.voxels())
                .any(|(a, b)| a.to_bits() != b.to_bits())
                || again.labels != v.labels
        })
        .count();
    CheckResult::within("generator_determinism", 0.0, differing as f64)
}

fn generator_label_closure(_: Option<Fault>) -> CheckResult {
    let labels = phantom_labels([24, 28, 20], 2);
    let mut allowed = labels.label_set();
    allowed.insert(0);
    let views =
        generate_views(&labels, &TissuePriors::t1w_default(), &bundled_generator(), 9, 10).expect("valid config");
    let unseen: BTreeSet<u16> = views
        .iter()
        .flat_map(|v| v.labels.label_set())
        .filter(|l| !allowed.contains(l))
        .collect();
    let shape_changes = views.iter().filter(|v| v.image.grid() != labels.grid()).count();
    CheckResult::within("generator_label_closure", 0.0, (unseen.len() + shape_changes) as f64)
}

fn generator_identity_painting(_: Option<Fault>) -> CheckResult {
    let labels = LabelVolume::from_fn(VoxelGrid::isotropic([8, 8, 8]), |[x, y, z]| {
        ((x + 2 * y + z) % 4) as u16
    });
    let means = [0.0, 25.0, 95.0, 155.0];
    let priors = TissuePriors::new(
        (1..4u16)
            .map(|l| TissuePrior {
                label: l,
                mean_range: [means[l as usize]; 2].into(),
                std_range: [0.0, 0.0].into(),
            })
            .collect(),
    )
    .expect("valid priors");
    let mut config = GeneratorConfig::identity();
    config.normalize = false;
    let sample = generate_sample(&labels, &priors, &config, 3).expect("valid config");
    let wrong = sample
        .image
        .voxels()
        .iter()
        .zip(labels.voxels())
        .filter(|(&v, &l)| v as f64 != means[l as usize])
        .count()
        + usize::from(sample.labels != labels);
    CheckResult::within("generator_identity_painting", 0.0, wrong as f64)
}

fn nifti_round_trip(_: Option<Fault>) -> CheckResult {
    let dir = std::env::temp_dir().join(format!("sulcikit-check-{}", std::process::id()));
    let grid = VoxelGrid::new([5, 4, 3], [1.0, 1.5, 2.0]).expect("valid grid");
    let n = grid.len();
    let payloads = [
        NiftiData::U8((0..n).map(|i| (i * 7 % 256) as u8).collect()),
        NiftiData::I16((0..n).map(|i| i as i16 * 300 - 9000).collect()),
        NiftiData::F32((0..n).map(|i| (i as f32 * 0.37).sin() * 1e3).collect()),
    ];
    let mut failures = 0;
    if std::fs::create_dir_all(&dir).is_err() {
        return CheckResult::within("nifti_round_trip", 0.0, f64::INFINITY);
    }
    for (k, data) in payloads.iter().enumerate() {
        for ext in ["nii", "nii.gz"] {
            let path = dir.join(format!("v{k}.{ext}"));
            let ok = write_raw(&path, &grid, data)
                .and_then(|_| read_raw(&path))
                .map(|(_, g, d)| &d == data && g.approx_eq(&grid, 1e-6))
                .unwrap_or(false);
            failures += usize::from(!ok);
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    CheckResult::within("nifti_round_trip", 0.0, failures as f64)
}
