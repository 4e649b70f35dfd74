use fdisp_core::checkpoint::{decode, encode, load_checkpoint_for, save_checkpoint, CheckpointHeader};
use fdisp_core::config::{parse_config, Command, ExperimentConfig, Params};
use fdisp_core::table::{emit_csv, read_csv, Table};
use fdisp_core::{Error, GridSpec, RealField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

fn random_field(grid: GridSpec, seed: u64) -> RealField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len()).map(|_| rng.gen_range(-1e3..1e3)).collect();
    RealField::new(grid, values).unwrap()
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let grid = GridSpec::new_2d(64, 32, 20.0, 10.0).unwrap();
    let mut f = random_field(grid, 7);
    f.values_mut()[5] = f64::MIN_POSITIVE;
    f.values_mut()[6] = -0.0;
    let path = dir.path().join("u.ckpt");
    save_checkpoint(&f, 1.5, 2.25, &path).unwrap();
    let (h, g) = load_checkpoint_for(&path, &grid).unwrap();
    assert_eq!(h, CheckpointHeader { grid, alpha: 1.5, t: 2.25 });
    let bits = |u: &RealField| u.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&g), bits(&f));
    assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, h.to_line().len() + 1 + 8 * grid.len());
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 1);
}

#[test]
fn checkpoint_grid_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.ckpt");
    let small = GridSpec::square(128, 32.0).unwrap();
    save_checkpoint(&RealField::zeros(small), 1.0, 0.0, &path).unwrap();
    let big = GridSpec::square(256, 32.0).unwrap();
    let err = load_checkpoint_for(&path, &big).unwrap_err();
    assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let grid = GridSpec::square(16, 4.0).unwrap();
    let good = encode(&random_field(grid, 1), 1.0, 0.0);
    let cases: Vec<Vec<u8>> = vec![
        good[..good.len() - 1].to_vec(),
        [good.clone(), vec![0u8; 8]].concat(),
        good.iter().map(|&b| if b == b'=' { b':' } else { b }).collect(),
        [b"FDISP2".to_vec(), good[6..].to_vec()].concat(),
        b"FDISP1 dim=2 nx=16 ny=16 Lx=4 Ly=4 alpha=1 t=0 extra=1\n".to_vec(),
        b"FDISP1 dim=2 nx=16 ny=16 Lx=4 Ly=4 alpha=1\n".to_vec(),
        good.iter().copied().filter(|&b| b != b'\n').collect(),
    ];
    for (i, bytes) in cases.iter().enumerate() {
        let err = decode(bytes).unwrap_err();
        assert_eq!(err.exit_code(), 3, "case {i}: {err}");
    }
}

#[test]
fn hundred_thousand_rows_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut t = Table::new(&["s", "x0", "value"]);
    for i in 0..100_000 {
        let e: i32 = rng.gen_range(-300..300);
        t.push(vec![i as f64 * 0.05, rng.gen::<f64>(), rng.gen::<f64>() * 10f64.powi(e)]).unwrap();
    }
    let path = dir.path().join("big.csv");
    emit_csv(&t, &path).unwrap();
    let back = read_csv(&path).unwrap();
    assert_eq!(back, t);
}

#[test]
fn empty_series_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    assert!(matches!(emit_csv(&Table::new(&["s"]), &path), Err(Error::Precondition(_))));
    assert!(!path.exists());
}

#[test]
fn write_into_missing_directory_is_io_error() {
    let mut t = Table::new(&["a"]);
    t.push(vec![1.0]).unwrap();
    let err = emit_csv(&t, Path::new("/nonexistent-dir/x.csv")).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn shipped_instability_config_round_trips() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/instability.conf");
    let text = std::fs::read_to_string(path).unwrap();
    let cfg = parse_config(Command::Instability, &text).unwrap();
    assert_eq!(cfg.params.x0_list, vec![2.0, 4.0, 8.0]);
    assert_eq!(cfg.params.t_end, 20.0);
    assert_eq!(parse_config(Command::Instability, &cfg.to_text()).unwrap(), cfg);
}

#[test]
fn instability_constraints() {
    for (text, line) in [
        ("m_exponent = 1.5\n", 1),
        ("\nnu = 0.375\n", 2),
        ("x0_list = 2, -4\n", 1),
        ("A = 0\n", 1),
        ("alpha = 1.5\n", 1),
    ] {
        match parse_config(Command::Instability, text) {
            Err(Error::Config { line: l, .. }) => assert_eq!(l, line, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn header_round_trip(nx in 8usize..200, ny in 8usize..200, lx in 0.5f64..500.0, ly in 0.5f64..500.0,
                         alpha in 1.0f64..=2.0, t in 0.0f64..1e4, one_d in any::<bool>()) {
        let grid = if one_d {
            GridSpec::new_1d(2 * nx, lx)
        } else {
            GridSpec::new_2d(2 * nx, 2 * ny, lx, ly)
        }.unwrap();
        let h = CheckpointHeader { grid, alpha, t };
        prop_assert_eq!(CheckpointHeader::parse(&h.to_line()).unwrap(), h);
    }

    #[test]
    fn config_text_round_trip(alpha in 1.0f64..=2.0, dt in 1e-5f64..1e-1, t_end in 0.0f64..100.0,
                              seed in any::<u64>(), n in 8usize..300) {
        let mut cfg = ExperimentConfig::new(Command::Simulate);
        cfg.params = Params { alpha, dt, t_end, seed, grid: [2 * n, 2 * n], ..cfg.params };
        let back = parse_config(Command::Simulate, &cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn csv_values_round_trip(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let mut t = Table::new(&["v"]);
        t.push(vec![v]).unwrap();
        let back = Table::from_csv_bytes(&t.to_csv_bytes().unwrap()).unwrap();
        prop_assert_eq!(back.rows[0][0].to_bits(), v.to_bits());
    }
}
