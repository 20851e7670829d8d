use nalgebra::{DMatrix, DVector};
use neugap::data::{
    fit_standardizer, kmeans, load_table, make_task, split_by_location, synth_spatiotemporal, SplitSpec, SynthConfig,
    Table, TableSchema, SYNTH_TARGET,
};
use neugap::dataset::Dataset;
use proptest::prelude::*;

#[test]
fn synthetic_table_survives_csv_round_trip() {
    let out = synth_spatiotemporal(
        &SynthConfig {
            grid_size: 4,
            months: 5,
            ..SynthConfig::default()
        },
        3,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    out.table.write_csv(&path).unwrap();
    let back = load_table(&path, &TableSchema::with_location("lat", "lon")).unwrap();
    assert_eq!(back, out.table);
}

#[test]
fn missing_file_is_io_error() {
    let err = load_table(std::path::Path::new("/nonexistent/table.csv"), &TableSchema::default()).unwrap_err();
    assert!(matches!(err, neugap::Error::Io { .. }));
}

#[test]
fn held_out_synthetic_split_sizes() {
    let out = synth_spatiotemporal(&SynthConfig::default(), 0).unwrap();
    let split = split_by_location(&out.table, &SplitSpec::new(0.8, 0)).unwrap();
    let (ids, locations) = out.table.location_ids();
    assert_eq!(locations, 100);
    let test_locs: std::collections::BTreeSet<usize> = split.test.iter().map(|&r| ids[r]).collect();
    assert_eq!(test_locs.len(), 80);
    assert_eq!(split.train.len() + split.valid.len(), 20 * 28);
    let task = make_task(&out.table, SYNTH_TARGET).unwrap();
    assert_eq!(task.input_names, ["month", "lat", "lon"]);
}

fn grid(locations: usize, per: usize, seed: u64) -> Table {
    let n = locations * per;
    let rows = DMatrix::from_fn(n, 3, |r, c| match c {
        0 => ((r / per) % 7) as f64,
        1 => ((r / per) / 7) as f64,
        _ => ((r as u64 * 2654435761 + seed) % 1000) as f64,
    });
    Table::new(vec!["lat".into(), "lon".into(), "v".into()], rows)
        .unwrap()
        .with_location("lat", "lon")
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_a_leak_free_partition(locations in 2usize..40, per in 1usize..6, frac in 0.05f64..0.9, seed in 0u64..1000) {
        let t = grid(locations, per, seed);
        match split_by_location(&t, &SplitSpec::new(frac, seed)) {
            Ok(s) => {
                let mut all = [s.train.clone(), s.valid.clone(), s.test.clone()].concat();
                all.sort();
                prop_assert_eq!(all, (0..t.len()).collect::<Vec<_>>());
                let (ids, _) = t.location_ids();
                let test: std::collections::BTreeSet<usize> = s.test.iter().map(|&r| ids[r]).collect();
                prop_assert!(s.train.iter().chain(&s.valid).all(|r| !test.contains(&ids[*r])));
            }
            Err(e) => prop_assert!(matches!(e, neugap::Error::DegenerateSplit(_))),
        }
    }

    #[test]
    fn standardizer_round_trip(vals in prop::collection::vec(-1e3f64..1e3, 12..60)) {
        let n = vals.len() / 3;
        let x = DMatrix::from_row_slice(n, 3, &vals[..3 * n]);
        let y = DVector::from_fn(n, |i, _| vals[i] * 0.5 + 3.0);
        let data = Dataset::new(x.clone(), y.clone()).unwrap();
        let s = fit_standardizer(&data);
        let z = s.apply(&data).unwrap();
        prop_assert!((s.invert_x(&z.x) - &x).amax() <= 1e-10 * x.amax().max(1.0));
        prop_assert!((s.invert_y(&z.y) - &y).amax() <= 1e-10 * y.amax().max(1.0));
    }

    #[test]
    fn kmeans_returns_m_finite_centers(vals in prop::collection::vec(-10.0f64..10.0, 2..80), m in 1usize..12, seed in 0u64..50) {
        let n = vals.len() / 2;
        prop_assume!(n >= 1);
        let x = DMatrix::from_row_slice(n, 2, &vals[..2 * n]);
        let c = kmeans(&x, m, seed);
        prop_assert_eq!(c.shape(), (m, 2));
        prop_assert!(c.iter().all(|v| v.is_finite()));
        prop_assert_eq!(c.clone(), kmeans(&x, m, seed));
    }
}
