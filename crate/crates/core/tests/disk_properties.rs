mod common;

use std::f64::consts::{PI, TAU};

use nftdisk_core::disklayout::{
    build_disk_layout, resolve_circular_brush, time_to_radius, CircularBrush, DiskError,
};
use nftdisk_core::{DiskConfig, TimeRange};
use proptest::prelude::*;

use common::{log_spec, random_dataset};

fn layout(seed: u64, min_tx: u32) -> nftdisk_core::DiskLayout {
    let ds = random_dataset(seed, &log_spec(400, 12, 10));
    let config = DiskConfig { min_tx, ..DiskConfig::new(ds.time_extent()) };
    build_disk_layout(&ds, &config).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn arcs_take_the_short_way(seed in any::<u64>(), min_tx in 0u32..4) {
        let l = layout(seed, min_tx);
        let angles = l.angle_map();
        for arc in &l.arcs {
            prop_assert!(arc.span <= PI + 1e-12);
            prop_assert!(arc.radius >= l.config.ring_inner && arc.radius <= l.config.ring_outer);
            let (a, b) = (angles.angle(arc.from).unwrap(), angles.angle(arc.to).unwrap());
            let ends = [arc.angle_start, arc.angle_end];
            let close = |x: f64, y: f64| ((x - y).rem_euclid(TAU)).min((y - x).rem_euclid(TAU)) < 1e-9;
            prop_assert!((close(ends[0], a) && close(ends[1], b)) || (close(ends[0], b) && close(ends[1], a)));
        }
    }

    #[test]
    fn apex_radius_inverts_to_score(seed in any::<u64>(), min_tx in 0u32..4) {
        let l = layout(seed, min_tx);
        let r = l.config.inner_circle;
        for p in &l.inner_paths {
            prop_assert!((1.0 - p.apex_radius / r - p.score).abs() <= 1e-9);
            let apex_norm = p.apex[0].hypot(p.apex[1]);
            prop_assert!((apex_norm - p.apex_radius).abs() <= 1e-9);
            // The quadratic curve passes through the apex at t = 1/2.
            let mid = [
                0.25 * p.start[0] + 0.5 * p.control[0] + 0.25 * p.end[0],
                0.25 * p.start[1] + 0.5 * p.control[1] + 0.25 * p.end[1],
            ];
            prop_assert!((mid[0] - p.apex[0]).abs() <= 1e-9 && (mid[1] - p.apex[1]).abs() <= 1e-9);
        }
    }

    #[test]
    fn brush_selects_exactly_the_covered_angles(seed in any::<u64>(), start in 0.0f64..TAU, sweep in 0.0f64..7.0, r_lo in 0.0f64..1.0, dr in 0.01f64..1.0) {
        let l = layout(seed, 1);
        prop_assume!(!l.nodes.is_empty());
        let brush = CircularBrush { angle_start: start, angle_end: start + sweep, r_lo, r_hi: r_lo + dr };
        let full = sweep >= TAU;
        match resolve_circular_brush(&l, &brush) {
            Ok(sel) => {
                for node in &l.nodes {
                    let offset = (node.angle - start).rem_euclid(TAU);
                    let inside = full || offset <= sweep + 1e-12 || TAU - offset <= 1e-12;
                    prop_assert_eq!(sel.addresses.contains(&node.index), inside);
                }
                let positions: Vec<usize> = sel.addresses.iter().map(|a| l.order.position(*a).unwrap()).collect();
                prop_assert!(positions.windows(2).all(|w| w[0] < w[1]));
                let range = l.config.time_range;
                prop_assert!(range.start <= sel.time_range.start && sel.time_range.end <= range.end);
                prop_assert!(sel.time_range.start <= sel.time_range.end);
                let lo = time_to_radius(sel.time_range.start, &l.config).unwrap();
                let hi = time_to_radius(sel.time_range.end, &l.config).unwrap();
                prop_assert!(lo <= r_lo.max(l.config.ring_inner) + 1e-9);
                prop_assert!(hi >= (r_lo + dr).min(l.config.ring_outer) - 1e-9);
            }
            Err(DiskError::EmptyBrush) => {
                let any_inside = l.nodes.iter().any(|n| {
                    let offset = (n.angle - start).rem_euclid(TAU);
                    full || offset <= sweep + 1e-12 || TAU - offset <= 1e-12
                });
                let band = r_lo.max(l.config.ring_inner) <= (r_lo + dr).min(l.config.ring_outer);
                prop_assert!(!any_inside || !band);
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn radius_is_monotone_in_time(a in 0u64..10_000, b in 0u64..10_000) {
        let config = DiskConfig::new(TimeRange::new(0, 10_000).unwrap());
        let (ra, rb) = (time_to_radius(a, &config).unwrap(), time_to_radius(b, &config).unwrap());
        prop_assert_eq!(a.cmp(&b), ra.partial_cmp(&rb).unwrap());
    }
}

#[test]
fn layout_is_deterministic() {
    let a = serde_json::to_string(&layout(11, 1)).unwrap();
    let b = serde_json::to_string(&layout(11, 1)).unwrap();
    assert_eq!(a, b);
}
