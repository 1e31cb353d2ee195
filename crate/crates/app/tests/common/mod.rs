#![allow(dead_code)]

use std::path::Path;

use nftdisk::Store;
use nftdisk_core::synth::{generate, synthetic_address, SynthCollection, SynthSpec};
use nftdisk_core::{build_dataset, Address, CollectionDataset, TokenId, TransactionRecord, Wei};

pub const RING_SEED: u64 = 7;

pub fn ring_fixture() -> (SynthCollection, CollectionDataset) {
    let synth = generate(&SynthSpec::planted_ring(RING_SEED));
    let ds = build_dataset(synth.records.clone(), "ring").unwrap();
    (synth, ds)
}

/// A store under `dir` holding the planted-ring collection as `ring`.
pub fn ring_store(dir: &Path) -> Store {
    let store = Store::create(dir).unwrap();
    store.save(&ring_fixture().1, "synthetic").unwrap();
    store
}

pub fn addr(n: u32) -> Address {
    synthetic_address(0xaa, n)
}

pub fn rec(t: u64, token: u128, ether: &str, from: Address, to: Address) -> TransactionRecord {
    TransactionRecord::new(t, TokenId(token), Wei::from_ether_str(ether).unwrap(), from, to)
}

pub fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    let text = std::fs::read_to_string(path).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

pub fn assert_valid(validator: &jsonschema::Validator, value: &serde_json::Value) {
    let errors: Vec<String> = validator.iter_errors(value).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "schema violations: {errors:#?}");
}

/// Event window of the flow golden file.
pub const GOLDEN_FLOW_EVENTS: nftdisk_core::flowlayout::EventRange = nftdisk_core::flowlayout::EventRange { lo: 0, hi: 39 };

pub fn golden_disk_svg() -> String {
    let (_, ds) = ring_fixture();
    nftdisk::export::disk_svg(&ds, &nftdisk::SessionConfig::new("ring"), &nftdisk::svg::SvgStyle::default()).unwrap()
}

pub fn golden_flow_svg() -> String {
    let (_, ds) = ring_fixture();
    let session = nftdisk::SessionConfig::new("ring");
    nftdisk::export::flow_svg(&ds, &session, None, Some(GOLDEN_FLOW_EVENTS), &nftdisk::svg::SvgStyle::default())
        .unwrap()
}

/// Compares `actual` with `tests/golden/<name>`. With `UPDATE_GOLDEN=1` the
/// file is rewritten instead.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some_and(|v| v == "1") {
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        return Ok(());
    }
    let line = expected.lines().zip(actual.lines()).position(|(a, b)| a != b).unwrap_or(0) + 1;
    Err(format!("{name} differs from the golden file at line {line}; rerun with UPDATE_GOLDEN=1 if intended"))
}
