use kohnlab::model::{BasisSet, RadialProblem};
use kohnlab::scanner::{self, KGrid, ScanReport, ScanSpec, CSV_HEADER, SCHEMA_VERSION};
use kohnlab::verify::Suite;

fn spec() -> ScanSpec {
    ScanSpec {
        k_grid: KGrid {
            k_min: 0.2,
            k_max: 0.8,
            count: 4,
        },
        tau_count: 8,
        seed: 17,
        checks: vec![Suite::Theta],
    }
}

fn report() -> ScanReport {
    let problem = RadialProblem::square_well_default(0.5);
    let basis = BasisSet::default_family(4).unwrap();
    let s = spec();
    let rows = scanner::run_scan(&s, &problem, &basis).unwrap();
    ScanReport::new(&s, &problem, &basis, rows, Vec::new())
}

#[test]
fn reruns_are_byte_identical() {
    let a = report();
    let b = report();
    assert_eq!(a.to_json(), b.to_json());
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    scanner::write_csv(&a.rows, &mut ca).unwrap();
    scanner::write_csv(&b.rows, &mut cb).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn json_round_trips_with_schema_version() {
    let r = report();
    let json = r.to_json();
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(value["schema_version"], SCHEMA_VERSION);
    for key in ["spec", "problem", "basis", "summary", "rows"] {
        assert!(value.get(key).is_some(), "missing {key}");
    }
    assert_eq!(value["rows"].as_array().unwrap().len(), 4);
    let back: ScanReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
}

#[test]
fn csv_has_the_fixed_header_and_one_line_per_k() {
    let r = report();
    let mut out = Vec::new();
    scanner::write_csv(&r.rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(lines.count(), 4);

    let mut empty = Vec::new();
    scanner::write_csv(&[], &mut empty).unwrap();
    assert_eq!(String::from_utf8(empty).unwrap().trim_end(), CSV_HEADER.join(","));
}

#[test]
fn scan_rows_are_in_grid_order_and_filled() {
    let r = report();
    let ks: Vec<f64> = r.rows.iter().map(|row| row.k).collect();
    assert_eq!(ks, spec().k_grid.points());
    for row in &r.rows {
        assert!(row.error.is_empty(), "{row:?}");
        assert!(row.eta0.is_some() && row.re_eta_c.is_some());
        assert!(row.re_match_defect.unwrap() < 1e-10);
    }
    assert!(r.summary.failed_ks.is_empty());
}

#[test]
fn invalid_specs_are_rejected() {
    let mut s = spec();
    s.k_grid.k_min = -1.0;
    assert!(s.validate().is_err());
    let mut s = spec();
    s.tau_count = 1;
    assert!(s.validate().is_err());
    let err = serde_json::from_str::<ScanSpec>(r#"{"k_grid":{"k_min":0.1,"k_max":1,"count":3},"tau_count":4,"seed":1,"bogus":0}"#);
    assert!(err.is_err());
}
