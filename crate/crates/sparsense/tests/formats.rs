use std::fs;

use sparsense::artifacts::{load_basis, load_checkpoint, load_sensors, save_basis, save_checkpoint, save_sensors, Checkpoint};
use sparsense::formats::{
    csv_text, load_dataset, load_matrix, read_pgm, save_dataset, sidecar_path, write_pgm, Layout, MatrixFormat, PgmScale,
    PGM_MARKER, PGM_MASKED,
};
use sparsense_core::linalg::Matrix;
use sparsense_core::lowrank::pod_basis_from_raw;
use sparsense_core::placement::{qr_pivots, SensorMethod, SensorSet};
use sparsense_core::sdn::{init_model, Architecture, Init};
use sparsense_core::snapshots::{encode_f64_le, SnapshotMatrix};

#[test]
fn csv_file_loads_rows_as_state_entries() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.csv");
    fs::write(&p, "1,2\n3,4").unwrap();
    let x = load_matrix(&p, MatrixFormat::Csv).unwrap();
    assert_eq!(x.values(), &Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let err = load_matrix(&empty, MatrixFormat::Csv).unwrap_err();
    assert_eq!(err.kind(), "parse");
}

#[test]
fn raw_file_needs_its_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.f64");
    fs::write(&p, encode_f64_le(&[1.0, 3.0, 2.0, 4.0])).unwrap();
    assert!(load_matrix(&p, MatrixFormat::RawF64).is_err());
    fs::write(sidecar_path(&p), r#"{"m": 2, "n": 2}"#).unwrap();
    let x = load_matrix(&p, MatrixFormat::RawF64).unwrap();
    assert_eq!(x.values(), &Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
    fs::write(sidecar_path(&p), r#"{"m": 2, "n": 2, "extra": 1}"#).unwrap();
    assert!(load_matrix(&p, MatrixFormat::RawF64).is_err());
}

#[test]
fn csv_text_round_trips_bit_for_bit() {
    let values = vec![0.1, -1e-300, 123456.789, f64::MIN_POSITIVE, 1.0 / 3.0, -0.0];
    let x = Matrix::from_col_major(3, 2, values).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.csv");
    fs::write(&p, csv_text(&x)).unwrap();
    let back = load_matrix(&p, MatrixFormat::Csv).unwrap();
    let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(back.values()), bits(&x));
}

#[test]
fn masked_gridded_dataset_round_trips() {
    let raw = Matrix::from_col_major(6, 2, (0..12).map(|v| v as f64).collect()).unwrap();
    let data = SnapshotMatrix::new(raw)
        .unwrap()
        .with_grid_shape(2, 3)
        .unwrap()
        .apply_valid_mask(&[true, false, true, true, false, true])
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (name, format) in [("d.f64", MatrixFormat::RawF64), ("d.csv", MatrixFormat::Csv)] {
        let p = dir.path().join(name);
        save_dataset(&data, &p, format).unwrap();
        let back = load_dataset(&p, format).unwrap();
        assert_eq!(back, data, "{name}");
    }
}

#[test]
fn pgm_marks_masked_cells_and_sensors() {
    let layout = Layout::new(Some((2, 3)), Some(vec![true, true, false, true, true, true]));
    let field = [0.0, 1.0, 2.0, 3.0, 4.0];
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.pgm");
    let scale = write_pgm(&p, &layout, &field, &[4]).unwrap();
    let (cols, rows, px) = read_pgm(&p).unwrap();
    assert_eq!((cols, rows), (3, 2));
    assert_eq!(px[2], PGM_MASKED);
    assert_eq!(px[5], PGM_MARKER);
    assert_eq!(&px[..2], &[0, 48]);
    assert_eq!(px[4], 143);
    let side: PgmScale = serde_json::from_slice(&fs::read(sidecar_path(&p)).unwrap()).unwrap();
    assert_eq!(side, scale);
    assert_eq!((side.min, side.max, side.levels), (0.0, 4.0, 191));

    assert!(write_pgm(&p, &layout, &field[..4], &[]).is_err());
    assert!(write_pgm(&p, &Layout::default(), &field, &[]).is_err());
}

#[test]
fn basis_sensors_and_checkpoint_round_trip() {
    let x = SnapshotMatrix::new(Matrix::from_col_major(12, 8, (0..96).map(|k| ((k * 7 % 13) as f64).sin()).collect()).unwrap())
        .unwrap()
        .with_grid_shape(3, 4)
        .unwrap();
    let basis = pod_basis_from_raw(&x, 3).unwrap();
    let layout = Layout::of(&x);
    let dir = tempfile::tempdir().unwrap();

    let bp = dir.path().join("b.pod");
    save_basis(&bp, &basis, &layout).unwrap();
    let (back, back_layout) = load_basis(&bp).unwrap();
    assert_eq!(back, basis);
    assert_eq!(back_layout, layout);

    let sensors = qr_pivots(&basis, 3).unwrap();
    let sp = dir.path().join("s.json");
    save_sensors(&sp, &sensors, &layout).unwrap();
    assert_eq!(load_sensors(&sp).unwrap(), sensors);

    let arch = Architecture::decoder(3, &[5, 4], 12);
    let mut model = init_model(&arch, Init::GlorotUniform, 3).unwrap();
    model.set_input_mask(vec![true, false, true]).unwrap();
    let ckpt = Checkpoint {
        model,
        train_mean: basis.train_mean().to_vec(),
        sensors: Some(sensors),
        config_fingerprint: 0xdead_beef,
    };
    let mp = dir.path().join("model.json");
    save_checkpoint(&mp, &ckpt).unwrap();
    assert!(dir.path().join("model.bin").exists());
    assert_eq!(load_checkpoint(&mp).unwrap(), ckpt);

    // a truncated parameter file is rejected rather than misread
    let bin = fs::read(dir.path().join("model.bin")).unwrap();
    fs::write(dir.path().join("model.bin"), &bin[..bin.len() - 8]).unwrap();
    assert_eq!(load_checkpoint(&mp).unwrap_err().kind(), "artifact");
}

#[test]
fn sensor_file_with_duplicate_indices_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.json");
    fs::write(&p, r#"{"indices": [1, 1], "m": 4, "method": "random", "seed": 3}"#).unwrap();
    assert!(load_sensors(&p).is_err());
    let ok = SensorSet::new(vec![1, 2], 4, SensorMethod::Random, Some(3)).unwrap();
    fs::write(&p, r#"{"indices": [1, 2], "m": 4, "method": "random", "seed": 3}"#).unwrap();
    assert_eq!(load_sensors(&p).unwrap(), ok);
}
