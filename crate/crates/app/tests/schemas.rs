mod common;

use common::{assert_valid, ring_fixture, schema};
use nftdisk::export::default_group;
use nftdisk_core::disklayout::build_disk_layout;
use nftdisk_core::flowlayout::{build_flow_detail, EventRange};
use nftdisk_core::synth::{random_log, RandomLogSpec, EPOCH_2022};
use nftdisk_core::{build_dataset, replay_holdings, AddressId, BackgroundMetric, DiskConfig};

#[test]
fn schemas_are_valid_draft_2020_12() {
    for name in ["disk_layout.schema.json", "flow_layout.schema.json"] {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
        let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert!(jsonschema::meta::is_valid(&value), "{name}");
    }
}

#[test]
fn ring_layouts_validate() {
    let (_, ds) = ring_fixture();
    let disk = schema("disk_layout.schema.json");
    let flow = schema("flow_layout.schema.json");
    for (min_tx, metric) in [(20, BackgroundMetric::AveragePrice), (0, BackgroundMetric::TradeVolume)] {
        let config = DiskConfig { min_tx, metric, ..DiskConfig::new(ds.time_extent()) };
        let layout = build_disk_layout(&ds, &config).unwrap();
        assert_valid(&disk, &serde_json::to_value(&layout).unwrap());
    }
    let group = default_group(&ds, &ds.time_extent(), 20).unwrap();
    let timeline = replay_holdings(&ds, &group, &ds.time_extent()).unwrap();
    let layout = build_flow_detail(&timeline, EventRange::full(&timeline).unwrap(), &group).unwrap();
    assert_valid(&flow, &serde_json::to_value(&layout).unwrap());
}

#[test]
fn random_layouts_validate() {
    let disk = schema("disk_layout.schema.json");
    let flow = schema("flow_layout.schema.json");
    for seed in 0..25u64 {
        let spec = RandomLogSpec { transactions: 300, addresses: 10, tokens: 12, start: EPOCH_2022, max_gap: 40_000, transfer_percent: 30 };
        let ds = build_dataset(random_log(seed, &spec), "random").unwrap();
        let config = DiskConfig { min_tx: seed as u32 % 5, ..DiskConfig::new(ds.time_extent()) };
        let layout = build_disk_layout(&ds, &config).unwrap();
        assert_valid(&disk, &serde_json::to_value(&layout).unwrap());

        let group: Vec<AddressId> = ds.addresses().iter().enumerate().filter(|(_, a)| !a.is_zero()).map(|(i, _)| AddressId(i as u32)).take(1 + seed as usize % 4).collect();
        let timeline = replay_holdings(&ds, &group, &ds.time_extent()).unwrap();
        if let Some(full) = EventRange::full(&timeline) {
            let lo = full.lo + (full.hi - full.lo) / 3;
            let layout = build_flow_detail(&timeline, EventRange { lo, hi: full.hi }, &group).unwrap();
            assert_valid(&flow, &serde_json::to_value(&layout).unwrap());
        }
    }
}

#[test]
fn schema_rejects_a_broken_layout() {
    let (_, ds) = ring_fixture();
    let layout = build_disk_layout(&ds, &DiskConfig::new(ds.time_extent())).unwrap();
    let mut value = serde_json::to_value(&layout).unwrap();
    value["arcs"][0]["span"] = serde_json::json!(4.0);
    assert!(!schema("disk_layout.schema.json").is_valid(&value));
}
