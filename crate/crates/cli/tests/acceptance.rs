//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one `pass` / `FAIL` line per criterion; exits nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use sha2::{Digest, Sha256};
use sulcikit::losses::{
    contrastive_loss, contrastive_loss_grad, finite_difference_check, optimize_embeddings_demo, seg_loss_grad,
    soft_dice_loss, tversky_loss, ContrastiveObjective, EmbeddingBatch, ProbabilityVolume, SegLoss, SegObjective,
};
use sulcikit::metrics::{dice, hausdorff};
use sulcikit::postproc::{connected_components, keep_two_largest, postprocess_cs, Connectivity, PostprocConfig};
use sulcikit::rng::{rng_from_seed, SeededRng};
use sulcikit::synth::phantom::phantom_labels;
use sulcikit::synth::{
    generate_sample, generate_views, view_seed, GeneratorConfig, TissuePrior, TissuePriors, DEFAULT_GENERATOR_JSON,
};
use sulcikit::volume::nifti::{read_raw, write_raw, NiftiData};
use sulcikit::{BinaryMask, LabelVolume, Volume, VoxelGrid};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_mask(rng: &mut SeededRng, shape: [usize; 3], density: f64) -> BinaryMask {
    let grid = VoxelGrid::isotropic(shape);
    let v = (0..grid.len()).map(|_| rng.random_bool(density)).collect();
    BinaryMask::new(grid, v).unwrap()
}

fn random_nonempty_mask(rng: &mut SeededRng, shape: [usize; 3], density: f64) -> BinaryMask {
    let mut m = random_mask(rng, shape, density);
    let i = rng.random_range(0..m.len());
    m.voxels_mut()[i] = true;
    m
}

fn random_rows(rng: &mut SeededRng, rows: usize, dim: usize) -> EmbeddingBatch<f64> {
    let data = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    EmbeddingBatch::new(data, dim).unwrap()
}

// ---------------------------------------------------------------- oracles

/// Total contrastive loss written out term by term: cosine similarity,
/// the per-pair negative log softmax over all other rows, then the mean of
/// both directions over all positive pairs.
fn brute_contrastive(rows: &[Vec<f64>], tau: f64) -> f64 {
    let norm = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sim = |i: usize, j: usize| {
        let d: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
        d / (norm(&rows[i]) * norm(&rows[j]))
    };
    let n2 = rows.len();
    let l = |i: usize, j: usize| {
        let den: f64 = (0..n2).filter(|&k| k != i).map(|k| (sim(i, k) / tau).exp()).sum();
        -((sim(i, j) / tau).exp() / den).ln()
    };
    let mut total = 0.0;
    for k in 0..n2 / 2 {
        total += l(2 * k, 2 * k + 1) + l(2 * k + 1, 2 * k);
    }
    total / n2 as f64
}

fn offsets(conn: Connectivity) -> Vec<[i64; 3]> {
    let limit = match conn {
        Connectivity::Six => 1,
        Connectivity::Eighteen => 2,
        Connectivity::TwentySix => 3,
    };
    let mut v = Vec::new();
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let l1 = dx.abs() + dy.abs() + dz.abs();
                if l1 > 0 && l1 <= limit {
                    v.push([dx, dy, dz]);
                }
            }
        }
    }
    v
}

/// Breadth-first flood fill: per-voxel component id, 0 for background.
fn flood_fill(mask: &BinaryMask, conn: Connectivity) -> Vec<usize> {
    let [nx, ny, nz] = mask.shape();
    let nb = offsets(conn);
    let mut id = vec![0usize; mask.len()];
    let mut next = 0;
    for s in 0..mask.len() {
        if !mask.voxels()[s] || id[s] != 0 {
            continue;
        }
        next += 1;
        id[s] = next;
        let mut q = VecDeque::from([s]);
        while let Some(i) = q.pop_front() {
            let p = [(i % nx) as i64, ((i / nx) % ny) as i64, (i / (nx * ny)) as i64];
            for d in &nb {
                let r = [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
                if r[0] < 0 || r[1] < 0 || r[2] < 0 || r[0] >= nx as i64 || r[1] >= ny as i64 || r[2] >= nz as i64 {
                    continue;
                }
                let j = r[0] as usize + nx * (r[1] as usize + ny * r[2] as usize);
                if mask.voxels()[j] && id[j] == 0 {
                    id[j] = next;
                    q.push_back(j);
                }
            }
        }
    }
    id
}

/// True when both labelings induce the same partition of the voxels.
fn same_partition(a: &[u32], b: &[usize]) -> bool {
    let mut ab = BTreeMap::new();
    let mut ba = BTreeMap::new();
    a.iter()
        .zip(b)
        .all(|(&x, &y)| (x == 0) == (y == 0) && *ab.entry(x).or_insert(y) == y && *ba.entry(y).or_insert(x) == x)
}

fn brute_hausdorff(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let pts = |m: &BinaryMask| -> Vec<[i64; 3]> {
        (0..m.len())
            .filter(|&i| m.voxels()[i])
            .map(|i| m.grid().coords(i).map(|c| c as i64))
            .collect()
    };
    let (pa, pb) = (pts(a), pts(b));
    let directed = |p: &[[i64; 3]], q: &[[i64; 3]]| {
        p.iter()
            .map(|x| {
                q.iter()
                    .map(|y| (0..3).map(|k| (x[k] - y[k]).pow(2)).sum::<i64>())
                    .min()
                    .unwrap()
            })
            .max()
            .unwrap()
    };
    (directed(&pa, &pb).max(directed(&pb, &pa)) as f64).sqrt()
}

// ---------------------------------------------------------------- criteria

fn nt_xent_fixture() -> Outcome {
    let rows = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]];
    let got = contrastive_loss(&EmbeddingBatch::from_rows(&rows).unwrap(), 1.0).unwrap();
    let brute = brute_contrastive(&rows, 1.0);
    let closed = (1.0 + 2.0 / std::f64::consts::E).ln();
    let err = (got - brute).abs().max((got - closed).abs());
    ensure(err < 1e-9, || {
        format!("loss {got}, brute force {brute}, ln(1+2/e) {closed}")
    })?;
    Ok(format!("loss {got:.12}, |err| {err:.1e}"))
}

fn degenerate_batch() -> Outcome {
    let mut rng = rng_from_seed(1);
    for dim in 1..=16 {
        for tau in [0.05, 0.5, 1.0, 4.0] {
            let b = random_rows(&mut rng, 2, dim);
            let l = contrastive_loss(&b, tau).unwrap();
            let g = contrastive_loss_grad(&b, tau).unwrap();
            ensure(l == 0.0 && g.iter().all(|&x| x == 0.0), || {
                format!("dim {dim} tau {tau}: loss {l}, grad {g:?}")
            })?;
        }
    }
    Ok("64 single-pair batches: loss 0, gradient 0".into())
}

fn gradient_checks() -> Outcome {
    let mut rng = rng_from_seed(2);
    let mut worst = [0.0f64; 3];
    for _ in 0..20 {
        let b = random_rows(&mut rng, 8, 16);
        let obj = ContrastiveObjective {
            dim: 16,
            temperature: 0.5,
        };
        worst[0] = worst[0].max(finite_difference_check(&obj, b.as_slice(), 1e-4));

        let n = 5 * 5 * 5;
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..0.98)).collect();
        let target: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let dice_obj = SegObjective {
            loss: SegLoss::Dice { smooth: 1e-5 },
            target: target.clone(),
        };
        worst[1] = worst[1].max(finite_difference_check(&dice_obj, &p, 1e-4));
        let tv = SegObjective {
            loss: SegLoss::Tversky {
                alpha: 0.7,
                beta: 0.3,
                smooth: 1e-5,
            },
            target,
        };
        worst[2] = worst[2].max(finite_difference_check(&tv, &p, 1e-4));
    }
    let detail = format!(
        "max rel err contrastive {:.2e}, dice {:.2e}, tversky {:.2e}",
        worst[0], worst[1], worst[2]
    );
    ensure(worst.iter().all(|&w| w < 1e-5), || detail.clone())?;
    Ok(detail)
}

fn tversky_dice_identity() -> Outcome {
    let mut rng = rng_from_seed(3);
    for k in 0..20 {
        let shape = [rng.random_range(1..9), rng.random_range(1..9), rng.random_range(1..9)];
        let grid = VoxelGrid::isotropic(shape);
        let probs: Vec<f64> = (0..grid.len())
            .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random() })
            .collect();
        let p = ProbabilityVolume::new(Volume::new(grid.clone(), probs).unwrap()).unwrap();
        let g = random_mask(&mut rng, shape, 0.3);
        let smooth = if k % 2 == 0 { 1e-5 } else { 1.0 };
        let d = soft_dice_loss(&p, &g, smooth).unwrap();
        let t = tversky_loss(&p, &g, 0.5, 0.5, smooth).unwrap();
        ensure(d.to_bits() == t.to_bits(), || {
            format!("input {k}: dice {d:e} vs tversky {t:e}")
        })?;
        let gd = seg_loss_grad(&SegLoss::Dice { smooth }, &p, &g).unwrap();
        let gt = seg_loss_grad(
            &SegLoss::Tversky {
                alpha: 0.5,
                beta: 0.5,
                smooth,
            },
            &p,
            &g,
        )
        .unwrap();
        ensure(gd.voxels() == gt.voxels(), || format!("input {k}: gradients differ"))?;
    }
    Ok("20 inputs bit-identical".into())
}

/// Product of three Householder reflections: a random orthogonal matrix.
fn random_orthogonal(rng: &mut SeededRng, d: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    for _ in 0..3 {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let vv: f64 = v.iter().map(|x| x * x).sum();
        for row in q.iter_mut() {
            let dot: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            row.iter_mut().zip(&v).for_each(|(a, b)| *a -= 2.0 * dot / vv * b);
        }
    }
    q
}

fn scale_rotation_invariance() -> Outcome {
    let mut rng = rng_from_seed(4);
    let (mut worst_scale, mut worst_rot) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let (pairs, dim) = (rng.random_range(2..7), rng.random_range(2..17));
        let b = random_rows(&mut rng, 2 * pairs, dim);
        let tau = rng.random_range(0.1..2.0);
        let base = contrastive_loss(&b, tau).unwrap();

        let scaled: Vec<Vec<f64>> = (0..b.rows())
            .map(|r| {
                let s = 10f64.powf(rng.random_range(-3.0..3.0));
                b.row(r).iter().map(|x| x * s).collect()
            })
            .collect();
        worst_scale = worst_scale
            .max((contrastive_loss(&EmbeddingBatch::from_rows(&scaled).unwrap(), tau).unwrap() - base).abs());

        let q = random_orthogonal(&mut rng, dim);
        let rotated: Vec<Vec<f64>> = (0..b.rows())
            .map(|r| {
                q.iter()
                    .map(|qr| qr.iter().zip(b.row(r)).map(|(a, x)| a * x).sum())
                    .collect()
            })
            .collect();
        worst_rot =
            worst_rot.max((contrastive_loss(&EmbeddingBatch::from_rows(&rotated).unwrap(), tau).unwrap() - base).abs());
    }
    let detail = format!("max |dL| scaling {worst_scale:.1e}, rotation {worst_rot:.1e}");
    ensure(worst_scale < 1e-6 && worst_rot < 1e-6, || detail.clone())?;
    Ok(detail)
}

fn ssl_descent_demo() -> Outcome {
    let mut rng = rng_from_seed(5);
    let init = random_rows(&mut rng, 16, 16);
    let t = optimize_embeddings_demo(&init, 0.5, 200, 0.5).unwrap();
    let (first, last) = (t[0], t[200]);
    let neg = last.mean_negative_similarity.unwrap();
    let detail = format!(
        "loss {:.4} -> {:.4}, final mean cosine positive {:.3} vs negative {:.3}",
        first.loss, last.loss, last.mean_positive_similarity, neg
    );
    ensure(
        t.len() == 201 && last.loss < first.loss && last.mean_positive_similarity > neg,
        || detail.clone(),
    )?;
    Ok(detail)
}

fn connected_components_oracle() -> Outcome {
    let mut rng = rng_from_seed(6);
    let mut components = 0;
    for k in 0..100 {
        let density = rng.random_range(0.02..0.5);
        let m = random_mask(&mut rng, [32, 32, 32], density);
        for conn in Connectivity::ALL {
            let cc = connected_components(&m, conn);
            let oracle = flood_fill(&m, conn);
            ensure(same_partition(cc.labels.voxels(), &oracle), || {
                format!("mask {k}, {conn:?}: partitions differ")
            })?;
            components += cc.count();
        }
    }
    Ok(format!("300 labelings agree ({components} components)"))
}

fn three_blobs() -> BinaryMask {
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

fn postprocessing() -> Outcome {
    let blobs = three_blobs();
    let kept = keep_two_largest(&blobs, &PostprocConfig::default()).unwrap();
    let expected: Vec<bool> = blobs
        .voxels()
        .iter()
        .enumerate()
        .map(|(i, &v)| v && blobs.grid().coords(i)[0] < 18)
        .collect();
    ensure(kept.count_foreground() == 15 && kept.voxels() == &expected[..], || {
        format!("three-blob fixture kept {} voxels", kept.count_foreground())
    })?;

    let mut rng = rng_from_seed(7);
    for k in 0..50 {
        let density = rng.random_range(0.002..0.05);
        let m = random_mask(&mut rng, [24, 24, 24], density);
        let mut configs = vec![PostprocConfig::default()];
        for conn in Connectivity::ALL {
            configs.push(PostprocConfig {
                dilation_radius: k % 3,
                connectivity: conn,
                keep: 1 + k % 3,
            });
        }
        for config in &configs {
            let once = postprocess_cs(&m, config).unwrap();
            ensure(once.voxels().iter().zip(m.voxels()).all(|(&o, &i)| !o || i), || {
                format!("mask {k}: output not a subset")
            })?;
            let twice = postprocess_cs(&once, config).unwrap();
            ensure(twice == once, || format!("mask {k}, {config:?}: not idempotent"))?;
        }
    }
    Ok("fixture keeps 15 voxels; 50 masks x 4 configs idempotent and subset".into())
}

fn hausdorff_criteria() -> Outcome {
    let mut rng = rng_from_seed(8);
    for k in 0..50 {
        let d = rng.random_range(0.005..0.1);
        let a = random_nonempty_mask(&mut rng, [16, 16, 16], d);
        let b = random_nonempty_mask(&mut rng, [16, 16, 16], d);
        let (got, brute) = (hausdorff(&a, &b, [1.0; 3]).unwrap(), brute_hausdorff(&a, &b));
        ensure(got == brute, || format!("pair {k}: {got} vs brute force {brute}"))?;
    }
    let mut a = BinaryMask::zeros(VoxelGrid::isotropic([8, 8, 8]));
    let mut b = a.clone();
    a.set(0, 0, 0, true);
    b.set(3, 4, 0, true);
    let fixture = hausdorff(&a, &b, [1.0; 3]).unwrap();
    ensure(fixture == 5.0, || format!("fixture gave {fixture}"))?;
    let mut slack = f64::INFINITY;
    for k in 0..50 {
        let m: Vec<BinaryMask> = (0..3)
            .map(|_| random_nonempty_mask(&mut rng, [16, 16, 16], 0.01))
            .collect();
        let s = [1.0, 1.5, 2.0];
        let (ab, bc, ac) = (
            hausdorff(&m[0], &m[1], s).unwrap(),
            hausdorff(&m[1], &m[2], s).unwrap(),
            hausdorff(&m[0], &m[2], s).unwrap(),
        );
        ensure(ac <= ab + bc + 1e-9, || format!("triple {k}: {ac} > {ab} + {bc}"))?;
        slack = slack.min(ab + bc - ac);
    }
    Ok(format!(
        "50 pairs exact, fixture 5.0, 50 triples (min slack {slack:.3})"
    ))
}

fn dice_fixtures() -> Outcome {
    let mut rng = rng_from_seed(9);
    let a = random_nonempty_mask(&mut rng, [10, 10, 10], 0.2);
    let identity = dice(&a, &a).unwrap();
    let not_a = BinaryMask::new(a.grid().clone(), a.voxels().iter().map(|v| !v).collect()).unwrap();
    let disjoint = dice(&a, &not_a).unwrap();
    let mut x = BinaryMask::zeros(VoxelGrid::isotropic([6, 1, 1]));
    let mut y = x.clone();
    (0..4).for_each(|i| x.set(i, 0, 0, true));
    (2..6).for_each(|i| y.set(i, 0, 0, true));
    let half = dice(&x, &y).unwrap();
    let detail = format!("identity {identity}, disjoint {disjoint}, half overlap {half}");
    ensure(
        (identity - 1.0).abs() < 1e-12 && disjoint.abs() < 1e-12 && (half - 0.5).abs() < 1e-12,
        || detail.clone(),
    )?;
    Ok(detail)
}

fn bundled_generator() -> GeneratorConfig {
    serde_json::from_str(DEFAULT_GENERATOR_JSON).unwrap()
}

fn bit_identical(a: &Volume<f32>, b: &Volume<f32>) -> bool {
    a.grid() == b.grid()
        && a.voxels()
            .iter()
            .zip(b.voxels())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

fn generator_determinism_closure() -> Outcome {
    let (priors, config) = (TissuePriors::t1w_default(), bundled_generator());
    let labels = phantom_labels([32, 36, 28], 3);

    let a = generate_sample(&labels, &priors, &config, 11).unwrap();
    let b = generate_sample(&labels, &priors, &config, 11).unwrap();
    ensure(bit_identical(&a.image, &b.image) && a.labels == b.labels, || {
        "repeat with same seed differs".into()
    })?;

    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let serial = pool(1).install(|| generate_views(&labels, &priors, &config, 11, 6).unwrap());
    let parallel = pool(8).install(|| generate_views(&labels, &priors, &config, 11, 6).unwrap());
    for (k, (s, p)) in serial.iter().zip(&parallel).enumerate() {
        let direct = generate_sample(&labels, &priors, &config, view_seed(11, k)).unwrap();
        ensure(bit_identical(&s.image, &p.image) && s.labels == p.labels, || {
            format!("view {k} depends on threads")
        })?;
        ensure(
            bit_identical(&s.image, &direct.image) && s.labels == direct.labels,
            || format!("view {k} differs from direct"),
        )?;
    }

    let mut allowed = labels.label_set();
    allowed.insert(0);
    let views = generate_views(&labels, &priors, &config, 12, 100).unwrap();
    let unseen: BTreeSet<u16> = views
        .iter()
        .flat_map(|v| v.labels.label_set())
        .filter(|l| !allowed.contains(l))
        .collect();
    ensure(unseen.is_empty(), || format!("unseen labels {unseen:?}"))?;

    let painted = LabelVolume::from_fn(VoxelGrid::isotropic([9, 8, 7]), |[x, y, z]| {
        ((x + 2 * y + 3 * z) % 4) as u16
    });
    let means = [0.0, 42.0, 97.5, 160.25];
    let flat = TissuePriors::new(
        (1..4u16)
            .map(|l| TissuePrior {
                label: l,
                mean_range: [means[l as usize]; 2].into(),
                std_range: [0.0; 2].into(),
            })
            .collect(),
    )
    .unwrap();
    let mut identity = GeneratorConfig::identity();
    identity.normalize = false;
    let s = generate_sample(&painted, &flat, &identity, 13).unwrap();
    let wrong = s
        .image
        .voxels()
        .iter()
        .zip(painted.voxels())
        .filter(|(&v, &l)| v as f64 != means[l as usize])
        .count();
    ensure(wrong == 0 && s.labels == painted, || {
        format!("identity painting: {wrong} voxels differ")
    })?;
    Ok("repeat and 1 vs 8 threads bit-identical; 100 views closed; identity painting exact".into())
}

fn geometry_preservation() -> Outcome {
    let (priors, config) = (TissuePriors::t1w_default(), bundled_generator());
    let source = phantom_labels([28, 32, 24], 5);
    let mut checked = 0;
    for spacing in [[1.0, 1.0, 1.0], [0.9, 1.1, 1.6], [2.0, 0.5, 1.25]] {
        let grid = VoxelGrid::new(source.shape(), spacing).unwrap();
        let labels = LabelVolume::new(grid.clone(), source.voxels().to_vec()).unwrap();
        for s in generate_views(&labels, &priors, &config, 21, 10).unwrap() {
            for g in [s.image.grid(), s.labels.grid()] {
                ensure(
                    g.shape() == grid.shape() && g.spacing() == grid.spacing() && g == &grid,
                    || {
                        format!(
                            "spacing {spacing:?}: got shape {:?} spacing {:?}",
                            g.shape(),
                            g.spacing()
                        )
                    },
                )?;
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} samples keep shape, spacing and affine"))
}

fn nifti_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let grid = VoxelGrid::new([7, 5, 3], [0.9, 1.3, 2.7]).unwrap();
    let n = grid.len();
    let fixtures = [
        ("uint8", NiftiData::U8((0..n).map(|i| (i * 37 % 256) as u8).collect())),
        ("int16", NiftiData::I16((0..n).map(|i| (i as i16 - 52) * 600).collect())),
        (
            "float32",
            NiftiData::F32(
                (0..n)
                    .map(|i| (i as f32 * 0.731).sin() * 1234.5 + f32::EPSILON)
                    .collect(),
            ),
        ),
    ];
    for (name, data) in &fixtures {
        for ext in ["nii", "nii.gz"] {
            let path = dir.path().join(format!("{name}.{ext}"));
            write_raw(&path, &grid, data).map_err(|e| e.to_string())?;
            let (_, g, back) = read_raw(&path).map_err(|e| e.to_string())?;
            let same = match (data, &back) {
                (NiftiData::F32(a), NiftiData::F32(b)) => {
                    a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()) && a.len() == b.len()
                }
                _ => &back == data,
            };
            ensure(same && g.approx_eq(&grid, 1e-6), || {
                format!("{name}.{ext} round trip differs")
            })?;
        }
    }
    Ok("uint8, int16, float32 x plain, gzip bit-identical".into())
}

// ---------------------------------------------------------------- CLI

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sulcikit"))
        .args(args)
        .env_remove("SULCIKIT_JOBS")
        .output()
        .expect("binary runs")
}

fn cli_ok(args: &[&str]) -> Result<std::process::Output, String> {
    let out = cli(args);
    ensure(out.status.code() == Some(0), || {
        format!(
            "{args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        )
    })?;
    Ok(out)
}

fn volume_digests(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(".nii.gz"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                Sha256::digest(std::fs::read(&p).unwrap()).to_vec(),
            )
        })
        .collect()
}

fn end_to_end_cli() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let s = |p: &Path| p.to_string_lossy().into_owned();
    let (data, run1, run2, pp) = (root.join("data"), root.join("run1"), root.join("run2"), root.join("pp"));

    cli_ok(&["phantom", "--out", &s(&data), "--subjects", "2", "--samples", "3"])?;
    let (manifest, config) = (s(&data.join("manifest.json")), s(&data.join("config.json")));
    for out in [&run1, &run2] {
        cli_ok(&[
            "generate",
            "--manifest",
            &manifest,
            "--config",
            &config,
            "--seed",
            "2024",
            "--out",
            &s(out),
        ])?;
    }
    let (d1, d2) = (volume_digests(&run1), volume_digests(&run2));
    ensure(d1.len() == 12, || {
        format!("expected 12 generated volumes, found {}", d1.len())
    })?;
    ensure(d1 == d2, || "two runs with the same seed differ".into())?;

    let segs: Vec<String> = d1
        .keys()
        .filter(|k| k.ends_with("_seg.nii.gz"))
        .map(|k| s(&run1.join(k)))
        .collect();
    let mut args = vec!["postprocess", "--labels", "100,101", "--out-dir"];
    let pp_s = s(&pp);
    args.push(&pp_s);
    args.push("--in");
    args.extend(segs.iter().map(String::as_str));
    cli_ok(&args)?;

    let report = root.join("report.json");
    cli_ok(&[
        "evaluate",
        "--pred",
        &pp_s,
        "--gt",
        &s(&run1),
        "--labels",
        "100,101",
        "--out",
        &s(&report),
    ])?;
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).map_err(|e| e.to_string())?)
        .map_err(|e| format!("report is not JSON: {e}"))?;
    let pairs = doc["pairs"].as_array().ok_or("report has no pairs array")?;
    ensure(pairs.len() == 6, || format!("expected 6 pairs, got {}", pairs.len()))?;
    for p in pairs {
        let d = p["dsc"].as_f64().ok_or_else(|| format!("pair without dsc: {p}"))?;
        let h = p["hd_mm"].as_f64().ok_or_else(|| format!("pair without hd_mm: {p}"))?;
        ensure((0.0..=1.0).contains(&d) && h >= 0.0 && h.is_finite(), || {
            format!("bad metrics in {p}")
        })?;
    }
    let mean = doc["summary"]["dsc"]["mean"]
        .as_f64()
        .ok_or("report has no DSC summary")?;
    Ok(format!(
        "12 volumes byte-identical across runs; 6 pairs evaluated, mean DSC {mean:.4}"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 14] = [
        ("nt-xent fixture", nt_xent_fixture),
        ("degenerate batch", degenerate_batch),
        ("gradient checks", gradient_checks),
        ("tversky-dice identity", tversky_dice_identity),
        ("scale/rotation invariance", scale_rotation_invariance),
        ("ssl descent demo", ssl_descent_demo),
        ("connected components", connected_components_oracle),
        ("post-processing", postprocessing),
        ("hausdorff", hausdorff_criteria),
        ("dice fixtures", dice_fixtures),
        ("generator determinism and closure", generator_determinism_closure),
        ("geometry preservation", geometry_preservation),
        ("nifti round-trip", nifti_round_trip),
        ("end-to-end cli", end_to_end_cli),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(criterion)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("pass  {name:<36} {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<36} {detail} ({secs:.1}s)");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
