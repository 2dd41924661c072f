//! Inputs shared by the benchmarks.

use std::path::PathBuf;
use std::sync::Arc;

use pidp_core::ingest::{parse_disclosure_csv, WorkingSet};
use pidp_core::model::load_model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data"))
}

pub fn fixture() -> WorkingSet {
    let model =
        Arc::new(load_model(data_dir().join("model/cities2019.toml")).expect("fixture model"));
    parse_disclosure_csv(data_dir().join("fixture/disclosures.csv"), model)
        .expect("fixture disclosures")
        .0
}

/// `n` random bit pictures of `len` bits.
pub fn pictures(n: usize, len: usize, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..len).map(|_| rng.gen_bool(0.5)).collect())
        .collect()
}

/// `n` random labels below `k`.
pub fn labels(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0..k)).collect()
}
