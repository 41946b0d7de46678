use std::path::PathBuf;

use fsvol_core::data::{clean, compute_cidr, CleaningPolicy, RawIntradayTable};
use fsvol_core::estimate::{gamma_curves_from, procedure_a};
use fsvol_core::qv::realized_qv;

fn fixture() -> RawIntradayTable {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/cleaning_fixture.csv");
    RawIntradayTable::from_csv_path(&path).unwrap()
}

#[test]
fn cleaning_is_idempotent() {
    let policy = CleaningPolicy::default();
    let (once, _) = clean(&fixture(), &policy);
    let (twice, report) = clean(&once, &policy);
    assert_eq!(once, twice);
    assert!(report.is_empty(), "{report:#?}");
}

#[test]
fn cidr_panel_feeds_the_estimators() {
    let (cleaned, _) = clean(&fixture(), &CleaningPolicy::default());
    let panel = compute_cidr(&cleaned).unwrap();
    let ids = panel.ids().unwrap();
    assert!(ids.windows(2).all(|w| w[0] < w[1]));
    let qv = realized_qv(&panel);
    // forward-filled opens give zero early increments on some days
    let k0 = qv.first_positive_k().iter().map(|k| k.unwrap()).max().unwrap();
    assert!(k0 > 1 && k0 < panel.grid().m());
    let g = gamma_curves_from(&qv, 1, k0).unwrap();
    let a = procedure_a(&g).unwrap();
    assert!(a.phi[0].abs() < 1.0);
}

#[test]
fn stricter_policy_only_removes_more() {
    let loose = CleaningPolicy::default();
    let strict = CleaningPolicy { max_missing_rate: 0.0, min_trading_days: 255, ..CleaningPolicy::default() };
    let (a, _) = clean(&fixture(), &loose);
    let (b, _) = clean(&fixture(), &strict);
    assert!(b.n_days() < a.n_days());
    for sec in b.securities.keys() {
        assert!(a.securities.contains_key(sec));
    }
}
