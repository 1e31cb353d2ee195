mod common;

use nftdisk_core::analytics::HoldingsTimeline;
use nftdisk_core::flowlayout::{
    build_flow_detail, build_stacked_series, resolve_time_brush, Anchor, EventRange, FlowError,
    SegmentKind,
};
use nftdisk_core::{build_dataset, oracle, replay_holdings, AddressId, CollectionDataset, TimeRange, TokenId};
use proptest::prelude::*;

use common::{addr, log_spec, mint, random_dataset, rec, T0};

fn ids(ds: &CollectionDataset, n: &[u32]) -> Vec<AddressId> {
    n.iter().map(|i| ds.address_id(&addr(*i)).unwrap()).collect()
}

/// The scripted scenario behind `fixtures/lane_trace.json`.
fn scripted() -> (CollectionDataset, Vec<AddressId>, HoldingsTimeline) {
    let (a, b, c, x) = (addr(1), addr(2), addr(3), addr(9));
    let records = vec![
        mint(T0, 5, b),
        mint(T0 + 1, 3, b),
        mint(T0 + 2, 8, c),
        mint(T0 + 3, 7, x),
        mint(T0 + 10, 1, a),
        mint(T0 + 11, 2, b),
        rec(T0 + 12, 5, "1.5", b, a),
        rec(T0 + 13, 1, "0", a, c),
        rec(T0 + 14, 7, "0.2", x, b),
        rec(T0 + 15, 8, "2", c, b),
        rec(T0 + 16, 3, "0.7", b, x),
        rec(T0 + 17, 2, "0", b, c),
        rec(T0 + 18, 1, "3", c, a),
        rec(T0 + 19, 3, "0.9", x, a),
    ];
    let ds = build_dataset(records, "scripted").unwrap();
    let order = ids(&ds, &[1, 2, 3]);
    let timeline = replay_holdings(&ds, &order, &TimeRange::new(T0 + 10, T0 + 19).unwrap()).unwrap();
    (ds, order, timeline)
}

#[test]
fn scripted_scenario_matches_hand_trace() {
    let (ds, order, timeline) = scripted();
    assert_eq!(timeline.len(), 10);
    let layout = build_flow_detail(&timeline, EventRange { lo: 0, hi: 9 }, &order).unwrap();
    let fixture: serde_json::Value =
        serde_json::from_str(include_str!("fixtures/lane_trace.json")).unwrap();
    let expected: Vec<Vec<Vec<TokenId>>> = fixture["slots"]
        .as_array()
        .unwrap()
        .iter()
        .map(|slot| {
            slot.as_array()
                .unwrap()
                .iter()
                .map(|lanes| lanes.as_array().unwrap().iter().map(|t| TokenId(t.as_u64().unwrap() as u128)).collect())
                .collect()
        })
        .collect();
    assert_eq!(layout.ribbons.iter().map(|r| r.address).collect::<Vec<_>>(), order);
    assert_eq!(layout.lane_map, expected);

    let series = build_stacked_series(&timeline, &order).unwrap();
    oracle::check_flow(&ds, &timeline, &series, &layout).unwrap();

    let token3 = layout.paths.iter().find(|p| p.token_id == TokenId(3)).unwrap();
    let kinds: Vec<SegmentKind> = token3.segments.iter().map(|s| s.kind).collect();
    use SegmentKind::*;
    assert_eq!(kinds, vec![Hold, Hold, Hold, ExternalExit, ExternalEntry]);
    let exit = &token3.segments[3];
    assert_eq!((exit.from.slot, exit.from.lane, exit.to.anchor), (6, Some(1), Anchor::BottomBorder));
    let entry = &token3.segments[4];
    assert_eq!((entry.to.slot, entry.to.lane), (10, Some(2)));

    let token1 = layout.paths.iter().find(|p| p.token_id == TokenId(1)).unwrap();
    assert_eq!(token1.segments[0].kind, MintEntry);
    assert_eq!(token1.segments[0].from.anchor, Anchor::TopBorder);
    let hops: Vec<SegmentKind> = token1.segments.iter().map(|s| s.kind).filter(|k| *k != Hold).collect();
    assert_eq!(hops, vec![MintEntry, TransferHop, SaleHop]);
}

#[test]
fn back_and_forth_trading_zigzags() {
    let (a, b) = (addr(1), addr(2));
    let mut records = vec![mint(T0, 1, a)];
    for k in 0..5u64 {
        let (from, to) = if k % 2 == 0 { (a, b) } else { (b, a) };
        records.push(rec(T0 + 1 + k, 1, "1", from, to));
    }
    let ds = build_dataset(records, "zigzag").unwrap();
    let order = ids(&ds, &[1, 2]);
    let timeline = replay_holdings(&ds, &order, &TimeRange::new(T0 + 1, T0 + 5).unwrap()).unwrap();
    let layout = build_flow_detail(&timeline, EventRange::full(&timeline).unwrap(), &order).unwrap();
    assert_eq!(layout.paths.len(), 1);
    let segs = &layout.paths[0].segments;
    assert_eq!(segs.len(), 5);
    assert!(segs.iter().all(|s| s.kind == SegmentKind::SaleHop));
    let holders: Vec<AddressId> = segs.iter().map(|s| s.to.address.unwrap()).collect();
    assert_eq!(holders, vec![order[1], order[0], order[1], order[0], order[1]]);
    for r in &layout.ribbons {
        assert_eq!(r.max_height, 1);
    }
}

#[test]
fn untouched_mint_is_one_entry_and_one_flat_hold() {
    let (a, b, c) = (addr(1), addr(2), addr(3));
    let records = vec![
        mint(T0, 9, b),
        mint(T0 + 1, 1, a),
        rec(T0 + 2, 9, "1", b, c),
        rec(T0 + 3, 9, "1", c, b),
        rec(T0 + 4, 9, "0", b, c),
    ];
    let ds = build_dataset(records, "mint").unwrap();
    let order = ids(&ds, &[1, 2, 3]);
    let timeline = replay_holdings(&ds, &order, &TimeRange::new(T0 + 1, T0 + 4).unwrap()).unwrap();
    let layout = build_flow_detail(&timeline, EventRange::full(&timeline).unwrap(), &order).unwrap();
    let path = layout.paths.iter().find(|p| p.token_id == TokenId(1)).unwrap();
    let kinds: Vec<SegmentKind> = path.segments.iter().map(|s| s.kind).collect();
    assert_eq!(kinds, vec![SegmentKind::MintEntry, SegmentKind::Hold]);
    let hold = &path.segments[1];
    assert_eq!((hold.from.slot, hold.to.slot, hold.from.lane, hold.to.lane), (1, 4, Some(0), Some(0)));
}

#[test]
fn stacked_series_examples() {
    let a = addr(1);
    let ds = build_dataset(vec![mint(T0, 1, a), mint(T0 + 1, 2, a), mint(T0 + 2, 3, a)], "s").unwrap();
    let order = ids(&ds, &[1]);
    let timeline = replay_holdings(&ds, &order, &ds.time_extent()).unwrap();
    let series = build_stacked_series(&timeline, &order).unwrap();
    assert_eq!(series.heights, vec![vec![1, 2, 3]]);
    assert_eq!(series.totals, vec![1, 2, 3]);
    assert_eq!(
        build_stacked_series(&timeline, &[]).unwrap_err(),
        FlowError::AddressNotInOrder(order[0])
    );
}

#[test]
fn time_brush_examples() {
    let (ds, order, _) = scripted();
    let timeline = replay_holdings(&ds, &order, &ds.time_extent()).unwrap();
    let series = build_stacked_series(&timeline, &order).unwrap();
    let n = series.events.len();
    assert_eq!(resolve_time_brush(&series, -1.0, n as f64).unwrap(), EventRange { lo: 0, hi: n - 1 });
    assert_eq!(resolve_time_brush(&series, 3.0, 7.0).unwrap(), EventRange { lo: 3, hi: 7 });
    assert_eq!(resolve_time_brush(&series, 3.2, 3.8), Err(FlowError::EmptyBrush));
    assert!(matches!(resolve_time_brush(&series, 5.0, 4.0), Err(FlowError::InvalidBrush(_))));
}

#[test]
fn out_of_range_events_are_rejected() {
    let (_, order, timeline) = scripted();
    let err = build_flow_detail(&timeline, EventRange { lo: 3, hi: 10 }, &order).unwrap_err();
    assert_eq!(err, FlowError::EventRangeOutOfBounds { lo: 3, hi: 10, len: 10 });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_windows_satisfy_flow_invariants(
        seed in any::<u64>(),
        members in prop::collection::btree_set(0u32..8, 1..5),
        a in 0usize..1000,
        b in 0usize..1000,
        reverse in any::<bool>(),
    ) {
        let ds = random_dataset(seed, &log_spec(250, 8, 10));
        let mut group: Vec<AddressId> = members.into_iter().map(AddressId).filter(|id| id.index() < ds.addresses().len()).collect();
        prop_assume!(!group.is_empty());
        if reverse {
            group.reverse();
        }
        let ext = ds.time_extent();
        let timeline = replay_holdings(&ds, &group, &TimeRange::new(ext.start + ext.span() / 4, ext.end).unwrap()).unwrap();
        prop_assume!(!timeline.is_empty());
        let len = timeline.len();
        let (lo, hi) = ((a.min(b) * len) / 1000, (a.max(b) * len) / 1000);
        let range = EventRange { lo: lo.min(len - 1), hi: hi.min(len - 1) };
        let series = build_stacked_series(&timeline, &group).unwrap();
        prop_assert_eq!(&series.totals, &timeline.group_total().to_vec());
        for e in 0..len {
            let sum: u32 = series.heights.iter().map(|h| h[e]).sum();
            prop_assert_eq!(sum, series.totals[e]);
        }
        let layout = build_flow_detail(&timeline, range, &group).unwrap();
        prop_assert_eq!(oracle::check_flow(&ds, &timeline, &series, &layout), Ok(()));
    }
}
