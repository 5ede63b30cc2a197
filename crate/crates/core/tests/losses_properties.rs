use proptest::prelude::*;
use sulcikit::losses::{
    contrastive_loss, contrastive_loss_grad, finite_difference_check, nt_xent_pair, partner, seg_loss_grad,
    soft_dice_loss, tversky_loss, ContrastiveObjective, EmbeddingBatch, ProbabilityVolume, SegLoss, SegObjective,
};
use sulcikit::{BinaryMask, Volume, VoxelGrid};

/// Rows with every entry in [-2, 2] and norm bounded away from zero.
fn batch_strategy(max_pairs: usize, max_dim: usize) -> impl Strategy<Value = EmbeddingBatch<f64>> {
    (1..=max_pairs, 2..=max_dim).prop_flat_map(|(pairs, dim)| {
        prop::collection::vec(-2.0f64..2.0, 2 * pairs * dim).prop_filter_map("rows need nonzero norm", move |data| {
            let ok = data.chunks(dim).all(|r| r.iter().map(|x| x * x).sum::<f64>() > 1e-2);
            ok.then(|| EmbeddingBatch::new(data, dim).unwrap())
        })
    })
}

fn seg_strategy(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1..=max_len).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

fn volumes(p: &[f64], g: &[bool]) -> (ProbabilityVolume<f64>, BinaryMask) {
    let grid = VoxelGrid::isotropic([p.len(), 1, 1]);
    (
        ProbabilityVolume::new(Volume::new(grid.clone(), p.to_vec()).unwrap()).unwrap(),
        BinaryMask::new(grid, g.to_vec()).unwrap(),
    )
}

/// Direct evaluation of the pairwise term: plain exponentials, no
/// stabilisation, cosine computed from raw rows.
fn reference_pair(b: &EmbeddingBatch<f64>, i: usize, j: usize, tau: f64) -> f64 {
    let cos = |a: &[f64], c: &[f64]| {
        let d: f64 = a.iter().zip(c).map(|(x, y)| x * y).sum();
        d / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * c.iter().map(|x| x * x).sum::<f64>().sqrt())
    };
    let num = (cos(b.row(i), b.row(j)) / tau).exp();
    let den: f64 = (0..b.rows())
        .filter(|&k| k != i)
        .map(|k| (cos(b.row(i), b.row(k)) / tau).exp())
        .sum();
    -(num / den).ln()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_is_nonnegative_and_matches_direct_formula(b in batch_strategy(5, 6), tau in 0.2f64..2.0) {
        let l = contrastive_loss(&b, tau).unwrap();
        prop_assert!(l >= 0.0);
        let reference: f64 = (0..b.rows()).map(|i| reference_pair(&b, i, partner(i), tau)).sum::<f64>() / b.rows() as f64;
        prop_assert!((l - reference).abs() < 1e-12);
        for i in 0..b.rows() {
            prop_assert!(nt_xent_pair(&b, i, partner(i), tau).unwrap() >= 0.0);
        }
    }

    #[test]
    fn loss_ignores_row_scale(b in batch_strategy(4, 6), row in 0usize..8, scale in 0.01f64..100.0) {
        let row = row % b.rows();
        let dim = b.dim();
        let mut data = b.as_slice().to_vec();
        data[row * dim..(row + 1) * dim].iter_mut().for_each(|x| *x *= scale);
        let scaled = EmbeddingBatch::new(data, dim).unwrap();
        prop_assert!((contrastive_loss(&b, 0.5).unwrap() - contrastive_loss(&scaled, 0.5).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn loss_ignores_common_rotation(b in batch_strategy(4, 6), angle in 0.0f64..std::f64::consts::TAU, axes in (0usize..6, 0usize..6)) {
        let dim = b.dim();
        let (a, c) = (axes.0 % dim, axes.1 % dim);
        prop_assume!(a != c);
        let (s, co) = angle.sin_cos();
        let mut data = b.as_slice().to_vec();
        for r in data.chunks_mut(dim) {
            let (x, y) = (r[a], r[c]);
            r[a] = co * x - s * y;
            r[c] = s * x + co * y;
        }
        let rotated = EmbeddingBatch::new(data, dim).unwrap();
        prop_assert!((contrastive_loss(&b, 0.5).unwrap() - contrastive_loss(&rotated, 0.5).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn loss_ignores_pair_order(b in batch_strategy(5, 5), shift in 1usize..5) {
        let dim = b.dim();
        let pairs = b.pairs();
        let mut data = Vec::new();
        for k in 0..pairs {
            let src = (k + shift) % pairs;
            data.extend_from_slice(b.row(2 * src));
            data.extend_from_slice(b.row(2 * src + 1));
        }
        let permuted = EmbeddingBatch::new(data, dim).unwrap();
        prop_assert!((contrastive_loss(&b, 0.5).unwrap() - contrastive_loss(&permuted, 0.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn single_pair_is_flat(b in batch_strategy(1, 8), tau in 0.01f64..5.0) {
        prop_assert_eq!(contrastive_loss(&b, tau).unwrap(), 0.0);
        prop_assert!(contrastive_loss_grad(&b, tau).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn contrastive_gradient_matches_differences(b in batch_strategy(3, 5), tau in 0.3f64..1.5) {
        let obj = ContrastiveObjective { dim: b.dim(), temperature: tau };
        prop_assert!(finite_difference_check(&obj, b.as_slice(), 1e-4) < 1e-5);
    }

    #[test]
    fn tversky_at_half_is_dice_bitwise((p, g) in seg_strategy(64), smooth in 0.0f64..2.0) {
        prop_assume!(smooth > 0.0 || g.iter().any(|&x| x) || p.iter().any(|&x| x > 0.0));
        let (pv, gv) = volumes(&p, &g);
        let d = soft_dice_loss(&pv, &gv, smooth).unwrap();
        let t = tversky_loss(&pv, &gv, 0.5, 0.5, smooth).unwrap();
        prop_assert_eq!(d.to_bits(), t.to_bits());
        let gd = seg_loss_grad(&SegLoss::Dice { smooth }, &pv, &gv).unwrap();
        let gt = seg_loss_grad(&SegLoss::Tversky { alpha: 0.5, beta: 0.5, smooth }, &pv, &gv).unwrap();
        for (x, y) in gd.voxels().iter().zip(gt.voxels()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn seg_losses_stay_in_unit_interval((p, g) in seg_strategy(64), alpha in 0.0f64..1.0, beta in 0.0f64..1.0) {
        let (pv, gv) = volumes(&p, &g);
        let d = soft_dice_loss(&pv, &gv, 1e-5).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        let t = tversky_loss(&pv, &gv, alpha, beta, 1e-5).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&t), "tversky {t}");
    }

    #[test]
    fn seg_losses_ignore_joint_voxel_permutation((p, g) in seg_strategy(32), rot in 0usize..32) {
        let n = p.len();
        let rot = rot % n;
        let (p2, g2): (Vec<f64>, Vec<bool>) = (0..n).map(|i| (p[(i + rot) % n], g[(i + rot) % n])).unzip();
        let (a, ga) = volumes(&p, &g);
        let (b, gb) = volumes(&p2, &g2);
        let d1 = soft_dice_loss(&a, &ga, 1e-5).unwrap();
        let d2 = soft_dice_loss(&b, &gb, 1e-5).unwrap();
        prop_assert!((d1 - d2).abs() < 1e-12);
        let t1 = tversky_loss(&a, &ga, 0.7, 0.3, 1e-5).unwrap();
        let t2 = tversky_loss(&b, &gb, 0.7, 0.3, 1e-5).unwrap();
        prop_assert!((t1 - t2).abs() < 1e-12);
    }

    #[test]
    fn seg_gradients_match_differences(
        p in prop::collection::vec(0.05f64..0.95, 27),
        g in prop::collection::vec(any::<bool>(), 27),
        alpha in 0.1f64..0.9,
        beta in 0.1f64..0.9,
    ) {
        for loss in [SegLoss::Dice { smooth: 1.0 }, SegLoss::Tversky { alpha, beta, smooth: 1e-5 }] {
            let obj = SegObjective { loss, target: g.clone() };
            prop_assert!(finite_difference_check(&obj, &p, 1e-4) < 1e-5);
        }
    }
}

#[test]
fn dice_gradient_on_six_cube_volume() {
    // 6^3 random prediction against a random target, smooth 1
    let n = 216;
    let p: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 101) as f64 / 101.0).collect();
    let g: Vec<bool> = (0..n).map(|i| (i * 53 + 7) % 5 == 0).collect();
    let obj = SegObjective {
        loss: SegLoss::Dice { smooth: 1.0 },
        target: g,
    };
    assert!(finite_difference_check(&obj, &p, 1e-4) < 1e-5);
    assert!(finite_difference_check(&obj, &p, 1e-5) < 1e-5);
}

#[test]
fn single_precision_agrees_with_double() {
    let rows64 = [
        vec![0.3, -1.2, 0.8],
        vec![0.1, -1.0, 1.1],
        vec![-0.7, 0.4, 0.2],
        vec![-0.5, 0.9, 0.0],
    ];
    let rows32: Vec<Vec<f32>> = rows64.iter().map(|r| r.iter().map(|&x| x as f32).collect()).collect();
    let l64 = contrastive_loss(&EmbeddingBatch::from_rows(&rows64).unwrap(), 0.5).unwrap();
    let l32 = contrastive_loss(&EmbeddingBatch::from_rows(&rows32).unwrap(), 0.5f32).unwrap();
    assert!((l64 - l32 as f64).abs() < 1e-5);
}
