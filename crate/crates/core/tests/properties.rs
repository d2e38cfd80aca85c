mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use common::*;
use harmbench::distribution::{
    extract_foreground, to_histogram, EmpiricalDistribution, ForegroundPolicy,
};
use harmbench::metrics_anatomy::{anatomy_preservation, ApWeighting, LabelVolume};
use harmbench::metrics_reference::{paired_metrics, SsimParams};
use harmbench::metrics_wd::{nwd, wasserstein_1d, WdMethod};
use harmbench::stats::{mean_std, spearman, MetricSeries};
use harmbench::volume_io::{decode_volume, encode_volume, VoxelGrid};

fn dist(v: &[f64]) -> EmpiricalDistribution {
    EmpiricalDistribution::uniform(v.to_vec()).unwrap()
}

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1000.0f64..1000.0, 1..60)
}

fn volume(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 1.0f64..500.0], n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn w1_symmetric_bitwise(a in sample(), b in sample()) {
        prop_assert_eq!(wasserstein_1d(&dist(&a), &dist(&b)).to_bits(), wasserstein_1d(&dist(&b), &dist(&a)).to_bits());
    }

    #[test]
    fn w1_triangle(a in sample(), b in sample(), c in sample()) {
        let (a, b, c) = (dist(&a), dist(&b), dist(&c));
        let ac = wasserstein_1d(&a, &c);
        prop_assert!(ac <= wasserstein_1d(&a, &b) + wasserstein_1d(&b, &c) + 1e-9 * (1.0 + ac));
    }

    #[test]
    fn w1_translation_is_shift(a in sample(), s in -500.0f64..500.0) {
        let shifted: Vec<f64> = a.iter().map(|v| v + s).collect();
        let w = wasserstein_1d(&dist(&a), &dist(&shifted));
        prop_assert!((w - s.abs()).abs() <= 1e-9 * (1.0 + s.abs() + a.iter().fold(0.0f64, |m, v| m.max(v.abs()))));
    }

    #[test]
    fn w1_matches_matching(pairs in prop::collection::vec((0u8..10, 0u8..10), 1..7)) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        prop_assert!((wasserstein_1d(&dist(&a), &dist(&b)) - w1_matching(&a, &b)).abs() <= 1e-9);
    }

    #[test]
    fn w1_weighted_equals_repeated(a in prop::collection::vec((0u8..10, 1u8..4), 1..8), b in sample()) {
        let weighted = EmpiricalDistribution::weighted(a.iter().map(|&(v, w)| (v as f64, w as f64)).collect()).unwrap();
        let repeated: Vec<f64> = a.iter().flat_map(|&(v, w)| std::iter::repeat_n(v as f64, w as usize)).collect();
        let (x, y) = (wasserstein_1d(&weighted, &dist(&b)), wasserstein_1d(&dist(&repeated), &dist(&b)));
        prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x));
    }

    #[test]
    fn nwd_affine_invariant(i in sample(), t in sample(), p in sample(), c in 0.01f64..100.0, shift in -50.0f64..50.0) {
        let (di, dt, dp) = (dist(&i), dist(&t), dist(&p));
        let Ok(base) = nwd(&di, &dt, &dp, WdMethod::Exact) else { return Ok(()) };
        let f = |d: &EmpiricalDistribution| d.map_values(|v| c * v + shift).unwrap();
        let moved = nwd(&f(&di), &f(&dt), &f(&dp), WdMethod::Exact).unwrap();
        let tol = 1e-8 * (1.0 + base.nwd_ip.abs() + base.nwd_tp.abs());
        prop_assert!((base.nwd_ip - moved.nwd_ip).abs() <= tol && (base.nwd_tp - moved.nwd_tp).abs() <= tol);
    }

    #[test]
    fn extraction_ignores_voxel_order(v in volume(64), seed in any::<u64>()) {
        let mut shuffled = v.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let policy = ForegroundPolicy::Threshold(0.0);
        let a = extract_foreground(&VoxelGrid::new([4, 4, 4], [1.0; 3], v).unwrap(), &policy);
        let b = extract_foreground(&VoxelGrid::new([4, 4, 4], [1.0; 3], shuffled).unwrap(), &policy);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.values(), b.values()),
            (a, b) => prop_assert!(a.is_err() && b.is_err()),
        }
    }

    #[test]
    fn histogram_conserves_mass(a in sample(), bins in 1usize..300) {
        let d = dist(&a);
        let hi = if d.max() > d.min() { d.max() } else { d.min() + 1.0 };
        let h = to_histogram(&d, bins, (d.min(), hi)).unwrap();
        prop_assert!((h.counts().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert_eq!(h.counts().len(), bins);
    }

    #[test]
    fn ap_identity_and_relabel(labels in prop::collection::vec(0u32..5, 27), perm in Just([0u32, 7, 3, 9, 4]), sx in 0.2f64..3.0) {
        prop_assume!(labels.iter().any(|&l| l != 0));
        let seg = LabelVolume::new([3, 3, 3], [sx, 1.0, 2.0], labels.clone(), BTreeMap::new()).unwrap();
        let r = anatomy_preservation(&seg, &seg, ApWeighting::Unweighted).unwrap();
        prop_assert_eq!(r.mean_ap, 1.0);

        // Renumbering labels while keeping names changes nothing.
        let named = |labels: Vec<u32>, map: &dyn Fn(u32) -> u32, spacing: [f64; 3]| {
            let legend: BTreeMap<u32, String> = (1..5).map(|l| (map(l), format!("s{l}"))).collect();
            LabelVolume::new([3, 3, 3], spacing, labels.into_iter().map(|l| if l == 0 { 0 } else { map(l) }).collect(), legend).unwrap()
        };
        let mut pred = labels.clone();
        if let Some(k) = pred.iter().position(|&l| l != 0) {
            pred[k] = 0;
        }
        let base = anatomy_preservation(&named(labels.clone(), &|l| l, [1.0; 3]), &named(pred.clone(), &|l| l, [1.0; 3]), ApWeighting::Unweighted);
        let relabeled = anatomy_preservation(
            &named(labels.clone(), &|l| perm[l as usize], [1.0; 3]),
            &named(pred.clone(), &|l| perm[l as usize], [1.0; 3]),
            ApWeighting::Unweighted,
        );
        let spaced = anatomy_preservation(&named(labels, &|l| l, [sx, 1.0, 2.0]), &named(pred, &|l| l, [sx, 1.0, 2.0]), ApWeighting::Unweighted);
        match (base, relabeled, spaced) {
            (Ok(b), Ok(r), Ok(s)) => {
                prop_assert_eq!(&b.per_structure, &r.per_structure);
                for (k, v) in &b.per_structure {
                    prop_assert!((v - s.per_structure[k]).abs() <= 1e-12);
                }
            }
            (b, r, s) => prop_assert!(b.is_err() && r.is_err() && s.is_err()),
        }
    }

    #[test]
    fn reference_metrics_match_oracle(p in volume(343), g in volume(343)) {
        let policy = ForegroundPolicy::Threshold(0.0);
        let params = SsimParams::default();
        let grid = |v: &[f64]| VoxelGrid::new([7, 7, 7], [1.0; 3], v.to_vec()).unwrap();
        let Ok(row) = paired_metrics(&grid(&p), &grid(&g), &policy, &params) else { return Ok(()) };
        let Ok(back) = paired_metrics(&grid(&g), &grid(&p), &policy, &params) else { return Ok(()) };
        prop_assert!((row.ssim - back.ssim).abs() <= 1e-12);
        let o = reference_oracle(&p, &g, [7, 7, 7], 0.0, 7);
        prop_assert!((row.mae - o.mae).abs() <= 1e-9 && (row.mse - o.mse).abs() <= 1e-9);
        if o.ssim.is_finite() {
            prop_assert!((row.ssim - o.ssim).abs() <= 1e-6);
        }
    }

    #[test]
    fn spearman_invariants(pairs in prop::collection::vec((-50i32..50, -50i32..50), 3..30)) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let s = |v: &[f64]| MetricSeries::new("s", v.to_vec());
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        match (spearman(&s(&x), &s(&y)), spearman_oracle(&x, &y)) {
            (Ok(r), Some(o)) => {
                prop_assert!((r - o).abs() <= 1e-12);
                prop_assert_eq!(r, spearman(&s(&y), &s(&x)).unwrap());
                prop_assert!((spearman(&s(&x), &s(&neg)).unwrap() + r).abs() <= 1e-12);
                let cubed: Vec<f64> = x.iter().map(|v| v * v * v).collect();
                prop_assert_eq!(r, spearman(&s(&cubed), &s(&y)).unwrap());
            }
            (Err(_), None) => {}
            (r, o) => prop_assert!(false, "{:?} vs oracle {:?}", r, o),
        }
    }

    #[test]
    fn nifti_round_trip(v in prop::collection::vec(-1e4f64..1e4, 24), channels in 1usize..3) {
        let values: Vec<f64> = v.iter().cycle().take(24 * channels).map(|x| *x as f32 as f64).collect();
        let grid = VoxelGrid::with_channels([2, 3, 4], [0.5, 1.0, 2.5], channels, values).unwrap();
        let back = decode_volume(&encode_volume(&grid)).unwrap();
        prop_assert_eq!(back.values(), grid.values());
        prop_assert_eq!(back.dims(), grid.dims());
        prop_assert_eq!(back.spacing(), grid.spacing());
        prop_assert_eq!(back.channel_count(), channels);
    }

    #[test]
    fn nifti_byte_order_irrelevant(v in prop::collection::vec(-30000i32..30000, 12), slope in prop_oneof![Just(0.0f32), 0.25f32..4.0]) {
        let values: Vec<f64> = v.iter().map(|x| *x as f64).collect();
        for raw in [RawType::I16, RawType::I32, RawType::F32, RawType::F64] {
            let mut f = NiftiFixture::new(&[2, 2, 3], raw, values.clone());
            f.scl_slope = slope;
            f.scl_inter = 1.5;
            let le = decode_volume(&f.bytes()).unwrap();
            f.big_endian = true;
            let be = decode_volume(&f.bytes()).unwrap();
            prop_assert_eq!(le.values(), be.values());
            let want = f.expected();
            prop_assert_eq!(le.values(), want.as_slice());
        }
    }
}

#[test]
fn psnr_falls_as_noise_grows() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let gt: Vec<f64> = (0..1000).map(|k| 10.0 + (k % 50) as f64).collect();
    let noise: Vec<f64> = (0..1000)
        .map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng))
        .collect();
    let grid = |v: Vec<f64>| VoxelGrid::new([10, 10, 10], [1.0; 3], v).unwrap();
    let mut last = f64::INFINITY;
    for sigma in [0.1, 0.5, 1.0, 2.0, 4.0] {
        let pred: Vec<f64> = gt.iter().zip(&noise).map(|(g, n)| g + sigma * n).collect();
        let row = paired_metrics(
            &grid(pred),
            &grid(gt.clone()),
            &ForegroundPolicy::Threshold(0.0),
            &SsimParams::default(),
        )
        .unwrap();
        assert!(
            row.psnr_db < last,
            "sigma {sigma}: {} !< {last}",
            row.psnr_db
        );
        last = row.psnr_db;
    }
}

#[test]
fn mean_std_recovers_normal_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let normal = Normal::new(5.0, 2.0).unwrap();
    let values: Vec<f64> = (0..1000).map(|_| normal.sample(&mut rng)).collect();
    let (mean, std) = mean_std(&MetricSeries::new("x", values.clone())).unwrap();
    let two_pass_mean = values.iter().sum::<f64>() / 1000.0;
    let two_pass_std = (values
        .iter()
        .map(|v| (v - two_pass_mean).powi(2))
        .sum::<f64>()
        / 999.0)
        .sqrt();
    assert!((mean - two_pass_mean).abs() < 1e-12 && (std - two_pass_std).abs() < 1e-12);
    assert!(
        (mean - 5.0).abs() < 0.2 && (std - 2.0).abs() < 0.15,
        "{mean} {std}"
    );
}
