use std::collections::BTreeSet;

use nftdisk_core::synth::{generate, SynthSpec};
use nftdisk_core::{build_dataset, compute_pair_stats, detect_groups, filter_pairs, seriation::seriate, AddressId};

#[test]
fn planted_ring_is_recovered() {
    let synth = generate(&SynthSpec::planted_ring(2022));
    let ring = &synth.rings[0];
    let ds = build_dataset(synth.records.clone(), "ring").unwrap();
    let ring_ids: BTreeSet<AddressId> = ring.members.iter().map(|a| ds.address_id(a).unwrap()).collect();

    let stats = compute_pair_stats(&ds, &ds.time_extent());
    for p in stats.iter().filter(|p| ring_ids.contains(&p.a) && ring_ids.contains(&p.b)) {
        assert_eq!((p.tx_count, p.unique_tokens), (50, 2));
        assert!((p.suspicious_score - 0.96).abs() < 1e-12);
    }
    assert!(stats.iter().filter(|p| !ring_ids.contains(&p.a)).all(|p| p.suspicious_score == 0.0));

    for min_tx in [1, 20] {
        let filtered = filter_pairs(&stats, min_tx);
        let groups = detect_groups(&filtered.pairs);
        assert!(groups.contains(&ring_ids), "min_tx {min_tx}");
        let order = seriate(&filtered.pairs, &filtered.addresses);
        let mut positions: Vec<usize> = ring_ids.iter().map(|id| order.position(*id).unwrap()).collect();
        positions.sort_unstable();
        assert_eq!(positions[3] - positions[0], 3, "min_tx {min_tx}: {positions:?}");
    }
    assert_eq!(detect_groups(&filter_pairs(&stats, 20).pairs), vec![ring_ids]);
}

#[test]
fn generators_are_deterministic() {
    assert_eq!(generate(&SynthSpec::planted_ring(5)), generate(&SynthSpec::planted_ring(5)));
    assert_ne!(generate(&SynthSpec::planted_ring(5)).records, generate(&SynthSpec::planted_ring(6)).records);
    let perf = generate(&SynthSpec::performance(1));
    assert_eq!(perf.records.len(), 100_000);
    let addresses: BTreeSet<_> = perf.records.iter().flat_map(|r| [r.from_address, r.to_address]).collect();
    assert!(addresses.len() <= 5_001);
}
