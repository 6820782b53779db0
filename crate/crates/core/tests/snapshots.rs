mod common;

use common::singular_values;
use proptest::prelude::*;
use sparsense_core::linalg::Matrix;
use sparsense_core::snapshots::{
    decode_raw_f64, encode_f64_le, gen_synthetic, parse_csv, Generator, NoiseSpec, RankRandomParams, SnapshotMatrix,
    SplitSpec, SplitStrategy, TravelingWaveParams, VortexParams, Wave,
};

fn snap(rows: &[&[f64]]) -> SnapshotMatrix {
    SnapshotMatrix::new(Matrix::from_rows(rows)).unwrap()
}

#[test]
fn csv_rows_are_state_entries() {
    let x = parse_csv("1,2\n3,4").unwrap();
    assert_eq!(x.values(), &Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
    assert!(parse_csv("").is_err());
    assert!(parse_csv("1,2\n3").is_err());
    let err = parse_csv("1,2\n3,nan").unwrap_err().to_string();
    assert!(err.contains("row 2") || err.contains("row 1"), "{err}");
}

#[test]
fn raw_decode_of_32_bytes() {
    let bytes = encode_f64_le(&[1.0, 3.0, 2.0, 4.0]);
    assert_eq!(bytes.len(), 32);
    let x = decode_raw_f64(&bytes, 2, 2).unwrap();
    assert_eq!(x.values(), &Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
    assert!(decode_raw_f64(&bytes[..24], 2, 2).is_err());
}

#[test]
fn mask_examples() {
    let x = snap(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
    let m = x.apply_valid_mask(&[true, false, true]).unwrap();
    assert_eq!(m.row_map(), Some(&[0, 2][..]));
    assert_eq!(m.values(), &Matrix::from_rows(&[&[1.0, 2.0], &[5.0, 6.0]]));
    let all = x.apply_valid_mask(&[true; 3]).unwrap();
    assert_eq!(all.values(), x.values());
    assert_eq!(all.row_map(), Some(&[0, 1, 2][..]));
    assert!(x.apply_valid_mask(&[false; 3]).is_err());
    assert!(x.apply_valid_mask(&[true; 2]).is_err());
}

#[test]
fn centering_examples() {
    let x = snap(&[&[1.0, 3.0], &[3.0, 1.0]]);
    let (c, mean) = x.mean_center();
    assert_eq!(mean, vec![2.0, 2.0]);
    assert_eq!(c.values(), &Matrix::from_rows(&[&[-1.0, 1.0], &[1.0, -1.0]]));

    let constant = snap(&[&[4.0, 4.0, 4.0], &[-1.5, -1.5, -1.5]]);
    let (c, mean) = constant.mean_center();
    assert_eq!(mean, vec![4.0, -1.5]);
    assert!(c.values().as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn noise_examples() {
    let x = SnapshotMatrix::new(Matrix::from_col_major(100, 100, (0..10_000).map(|k| (k as f64 * 0.01).sin()).collect()).unwrap())
        .unwrap();
    let off = x.add_noise(&NoiseSpec { psnr_db: f64::INFINITY, seed: 1 }).unwrap();
    assert_eq!(off.values(), x.values());
    let a = x.add_noise(&NoiseSpec { psnr_db: 30.0, seed: 1 }).unwrap();
    let b = x.add_noise(&NoiseSpec { psnr_db: 30.0, seed: 1 }).unwrap();
    assert_eq!(a.values(), b.values());
    let changed = a.values().as_slice().iter().zip(x.values().as_slice()).filter(|(p, q)| p != q).count();
    assert!(changed >= 9_900);
    assert!(x.add_noise(&NoiseSpec { psnr_db: -3.0, seed: 1 }).is_err());
}

#[test]
fn peak_ten_at_20_db_gives_unit_sigma() {
    let mut v = vec![0.0; 200_000];
    v[0] = 10.0;
    let x = SnapshotMatrix::new(Matrix::from_col_major(400, 500, v.clone()).unwrap()).unwrap();
    let y = x.add_noise(&NoiseSpec { psnr_db: 20.0, seed: 7 }).unwrap();
    let eps: Vec<f64> = y.values().as_slice().iter().zip(&v).map(|(a, b)| a - b).collect();
    let mean = eps.iter().sum::<f64>() / eps.len() as f64;
    let var = eps.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (eps.len() - 1) as f64;
    assert!((var.sqrt() - 1.0).abs() < 0.02, "sigma {}", var.sqrt());
}

#[test]
fn split_examples() {
    let x = SnapshotMatrix::new(Matrix::from_col_major(1, 5, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
    let leading = SplitSpec { train_count: 3, seed: 0, strategy: SplitStrategy::Leading };
    assert_eq!(x.split_indices(&leading).unwrap(), (vec![0, 1, 2], vec![3, 4]));

    let big = SnapshotMatrix::new(Matrix::zeros(1, 1400)).unwrap();
    let spec = SplitSpec { train_count: 1000, seed: 11, strategy: SplitStrategy::Random };
    let (train, test) = big.split_indices(&spec).unwrap();
    assert_eq!((train.len(), test.len()), (1000, 400));
    let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..1400).collect::<Vec<_>>());
    assert_eq!(big.split_indices(&spec).unwrap(), (train, test));

    for bad in [0, 1400] {
        assert!(big.split_indices(&SplitSpec { train_count: bad, ..spec }).is_err());
    }
}

#[test]
fn rank_r_random_has_exact_rank() {
    let g = Generator::RankRRandom(RankRandomParams { m: 40, snapshots: 12, rank: 3, amplitude: 2.0 });
    let x = gen_synthetic(&g, 5).unwrap();
    assert_eq!((x.dim(), x.len()), (40, 12));
    let sv = singular_values(x.values());
    // sqrt of a Gram eigenvalue near zero sits near sqrt(eps)·σ_1
    assert!(sv[3] < 1e-6 * sv[0], "{sv:?}");
    assert!(sv[2] > 0.1 * sv[0]);
    assert_eq!(gen_synthetic(&g, 5).unwrap(), x);
}

#[test]
fn single_traveling_wave_has_rank_two() {
    let g = Generator::TravelingWave(TravelingWaveParams {
        rows: 9,
        cols: 11,
        snapshots: 30,
        components: 1,
        amplitude: 1.0,
        waves: vec![Wave { amplitude: 1.0, k_row: 1.0, k_col: 2.0, omega: 1.0, phase: 0.2 }],
        dt: 0.07,
        envelope: None,
    });
    let x = gen_synthetic(&g, 0).unwrap();
    assert_eq!(x.grid_shape(), Some((9, 11)));
    assert_eq!((x.dim(), x.len()), (99, 30));
    let sv = singular_values(x.values());
    assert!(sv[1] > 1e-3 * sv[0]);
    assert!(sv[2] < 1e-6 * sv[0], "{sv:?}");
}

#[test]
fn vortex_street_honors_shape_and_is_low_rank() {
    let g = Generator::VortexLike(VortexParams {
        rows: 16,
        cols: 24,
        snapshots: 40,
        blobs: 3,
        amplitude: 1.0,
        width: 0.08,
        period: 20.0,
    });
    let x = gen_synthetic(&g, 3).unwrap();
    assert_eq!(x.grid_shape(), Some((16, 24)));
    assert_eq!((x.dim(), x.len()), (384, 40));
    let sv = singular_values(x.values());
    let total: f64 = sv.iter().map(|s| s * s).sum();
    let top: f64 = sv[..20].iter().map(|s| s * s).sum();
    assert!(top / total > 0.99);
}

proptest! {
    #[test]
    fn centering_is_idempotent(m in 1usize..8, n in 1usize..9, seed in any::<u64>()) {
        let g = Generator::RankRRandom(RankRandomParams { m: m.max(n), snapshots: n, rank: 1, amplitude: 3.0 });
        let x = gen_synthetic(&g, seed).unwrap();
        let (c, _) = x.mean_center();
        let (_, second) = c.mean_center();
        prop_assert!(second.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn centered_rows_sum_to_zero(values in prop::collection::vec(-50.0f64..50.0, 35)) {
        let x = SnapshotMatrix::new(Matrix::from_col_major(5, 7, values).unwrap()).unwrap();
        let (c, _) = x.mean_center();
        for i in 0..5 {
            let mut sum = 0.0;
            for j in (0..7).rev() {
                sum += c.values().get(i, j);
            }
            prop_assert!(sum.abs() < 1e-9);
        }
    }

    #[test]
    fn scatter_then_gather_round_trips(mask in prop::collection::vec(any::<bool>(), 1..30), fill in -5.0f64..5.0) {
        prop_assume!(mask.iter().any(|&b| b));
        let raw = Matrix::from_col_major(mask.len(), 1, (0..mask.len()).map(|i| i as f64).collect()).unwrap();
        let x = SnapshotMatrix::new(raw).unwrap().apply_valid_mask(&mask).unwrap();
        let compact: Vec<f64> = (0..x.dim()).map(|i| 100.0 + i as f64).collect();
        let spread = x.scatter(&compact, fill).unwrap();
        prop_assert_eq!(spread.len(), mask.len());
        for (i, &keep) in mask.iter().enumerate() {
            if !keep {
                prop_assert_eq!(spread[i], fill);
            }
        }
        prop_assert_eq!(x.gather(&spread).unwrap(), compact);
    }

    #[test]
    fn splits_partition_columns(n in 2usize..60, frac in 0.01f64..0.99, seed in any::<u64>(), leading in any::<bool>()) {
        let train_count = ((n as f64 * frac) as usize).clamp(1, n - 1);
        let x = SnapshotMatrix::new(Matrix::zeros(1, n)).unwrap();
        let strategy = if leading { SplitStrategy::Leading } else { SplitStrategy::Random };
        let (train, test) = x.split_indices(&SplitSpec { train_count, seed, strategy }).unwrap();
        prop_assert_eq!(train.len(), train_count);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}
