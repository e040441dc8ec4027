use rmi_core::ingest::{build_dataset, impute_zero_exposure, parse_hmd_table, ImputeOptions, RawTable, Sex, StudyWindow};
use std::path::Path;

fn table(name: &str) -> RawTable {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    parse_hmd_table(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fixture_tables_round_trip() {
    for name in ["SYNA.Deaths_1x1.txt", "SYNB.Exposures_1x1.txt", "DEUTNP.Deaths_1x1.txt"] {
        let t = table(name);
        assert_eq!(parse_hmd_table(&t.to_hmd_string()).unwrap(), t);
    }
}

#[test]
fn missing_cells_are_flagged_not_dropped() {
    let (d, e) = (table("SYNB.Deaths_1x1.txt"), table("SYNB.Exposures_1x1.txt"));
    let data = build_dataset(&d, &e, "SYNB", Sex::Female, StudyWindow::new(1980, 2019).unwrap()).unwrap();
    assert_eq!(data.len(), 40);
    let y1992 = data.iter().find(|s| s.year == 1992).unwrap();
    assert!(y1992.is_missing(86));
    assert_eq!(y1992.raw_rates()[1], None);
    assert!(!y1992.is_missing(85));
}

#[test]
fn zero_exposures_are_imputed_reproducibly() {
    let (d, e) = (table("SYNB.Deaths_1x1.txt"), table("SYNB.Exposures_1x1.txt"));
    let data = build_dataset(&d, &e, "SYNB", Sex::Male, StudyWindow::new(1980, 2019).unwrap()).unwrap();
    let y = data.iter().find(|s| s.year == 1990).unwrap();
    assert_eq!(y.exposure(108), 0.0);
    let a = impute_zero_exposure(y, 7, ImputeOptions::default());
    let b = impute_zero_exposure(y, 7, ImputeOptions::default());
    assert_eq!(a, b);
    for age in [107, 108, 109] {
        assert!(a.is_imputed(age));
        assert!(a.exposure(age) > 0.0 && a.exposure(age) <= 0.5);
    }
    assert!(!a.is_imputed(100));
    assert_eq!(a.exposure(100), y.exposure(100));
}

#[test]
fn window_outside_the_data_is_an_error() {
    let (d, e) = (table("SYNA.Deaths_1x1.txt"), table("SYNA.Exposures_1x1.txt"));
    assert!(build_dataset(&d, &e, "SYNA", Sex::Female, StudyWindow::new(1970, 2019).unwrap()).is_err());
}
