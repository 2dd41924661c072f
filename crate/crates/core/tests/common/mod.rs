#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use pidp_core::ingest::{
    join_externals, parse_disclosure_csv, parse_externals_csv, NameNormalizer, WorkingSet,
};
use pidp_core::issues::IssueLog;
use pidp_core::maturity::ProcessPIVector;
use pidp_core::model::load_model;

pub fn data_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data"))
}

pub fn fixture_dir() -> PathBuf {
    data_dir().join("fixture")
}

/// Fixture disclosures joined with the fixture externals.
pub fn load_fixture() -> (WorkingSet, IssueLog) {
    let model = Arc::new(load_model(data_dir().join("model/cities2019.toml")).unwrap());
    let (ws, mut log) = parse_disclosure_csv(fixture_dir().join("disclosures.csv"), model).unwrap();
    let rows = parse_externals_csv(fixture_dir().join("externals.csv"), &mut log).unwrap();
    let ws = join_externals(ws, &rows, &NameNormalizer::new(), &mut log);
    (ws, log)
}

pub type BrazilRow = (u64, u8, [u8; 3], u8, u8, u8, u8, u8, u8, u8);

/// Published Brazil rows: id, dm, da, dp, dan, rb, rp, dep, mon, level.
pub const BRAZIL: [BrazilRow; 11] = [
    (31156, 1, [1, 1, 0], 0, 1, 0, 0, 1, 1, 1),
    (31176, 1, [1, 1, 1], 1, 4, 1, 0, 1, 1, 3),
    (31184, 1, [1, 0, 1], 1, 1, 1, 0, 1, 1, 2),
    (35848, 1, [1, 0, 0], 0, 2, 1, 0, 1, 1, 1),
    (35865, 1, [1, 0, 0], 0, 1, 1, 0, 1, 1, 1),
    (35872, 0, [1, 0, 0], 0, 2, 0, 0, 1, 1, 0),
    (35880, 1, [1, 0, 0], 1, 1, 0, 0, 1, 0, 2),
    (35897, 1, [1, 0, 0], 1, 2, 0, 0, 1, 1, 3),
    (36041, 1, [0, 0, 0], 1, 1, 0, 0, 1, 0, 0),
    (42120, 1, [1, 1, 0], 0, 1, 1, 0, 1, 1, 1),
    (42123, 1, [1, 0, 0], 1, 1, 1, 0, 1, 0, 2),
];

pub fn brazil_vector(r: &BrazilRow) -> ProcessPIVector {
    ProcessPIVector {
        sample_id: r.0,
        dm: r.1,
        da: r.2,
        dp: r.3,
        dan: r.4,
        rb: r.5,
        rp: r.6,
        dep: r.7,
        mon: r.8,
    }
}
