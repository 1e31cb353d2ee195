//! Slow reference implementations and invariant checkers for tests.
//!
//! Nothing here shares code with the engine beyond the data types. Each
//! function favours the most literal computation over speed.

use std::collections::{BTreeMap, BTreeSet};

use crate::analytics::{BackgroundMetric, HoldingsTimeline};
use crate::flowlayout::{Anchor, FlowLayout, LineStyle, SegmentKind, StackedSeries};
use crate::ingest::CollectionDataset;
use crate::seriation::{tie_tolerance, Dendrogram, DistanceMatrix, Merge};
use crate::types::{AddressId, TimeRange, TokenId, TxStatus};

/// `(M, N)` per unordered pair, recounted from scratch. Pairs touching the
/// zero address are skipped.
pub fn pair_counts(dataset: &CollectionDataset, range: &TimeRange) -> BTreeMap<(AddressId, AddressId), (u32, u32)> {
    let zero = dataset.zero_address_id();
    let mut rows: Vec<((AddressId, AddressId), TokenId)> = Vec::new();
    for tx in dataset.transactions() {
        if !range.contains(tx.timestamp) || Some(tx.from) == zero || Some(tx.to) == zero {
            continue;
        }
        let key = if tx.from < tx.to { (tx.from, tx.to) } else { (tx.to, tx.from) };
        rows.push((key, tx.token_id));
    }
    rows.sort();
    let mut out = BTreeMap::new();
    for (i, (key, token)) in rows.iter().enumerate() {
        let entry = out.entry(*key).or_insert((0u32, 0u32));
        entry.0 += 1;
        if i == 0 || rows[i - 1] != (*key, *token) {
            entry.1 += 1;
        }
    }
    out
}

/// Holder of every token after the first `upto` transactions: the receiver
/// of its last transaction.
pub fn holder_map(dataset: &CollectionDataset, upto: usize) -> BTreeMap<TokenId, AddressId> {
    let mut out = BTreeMap::new();
    for (token, indices) in dataset.token_index() {
        if let Some(&last) = indices.iter().filter(|&&i| i < upto).max() {
            out.insert(*token, dataset.transactions()[last].to);
        }
    }
    out
}

/// Tokens held by `address` after the first `upto` transactions, found by
/// scanning each token's history for its last transaction.
pub fn holdings_of(dataset: &CollectionDataset, address: AddressId, upto: usize) -> BTreeSet<TokenId> {
    let txs = dataset.transactions();
    let mut out = BTreeSet::new();
    let tokens: BTreeSet<TokenId> = txs.iter().map(|t| t.token_id).collect();
    for token in tokens {
        let last = txs[..upto].iter().rev().find(|t| t.token_id == token);
        if matches!(last, Some(t) if t.to == address) {
            out.insert(token);
        }
    }
    out
}

/// Checks a holdings replay against per-token last-holder scans and the
/// inflow/outflow bookkeeping. Returns the first violation.
pub fn check_conservation(dataset: &CollectionDataset, timeline: &HoldingsTimeline) -> Result<(), String> {
    let first = dataset.range_indices(&timeline.window()).start;
    let group: BTreeSet<AddressId> = timeline.addresses().iter().copied().collect();
    let initial = holder_map(dataset, first);
    let mut prev_total = initial.values().filter(|h| group.contains(h)).count() as u32;
    if prev_total != timeline.initial_total() {
        return Err(format!("initial total {} != oracle {}", timeline.initial_total(), prev_total));
    }
    for (e, ev) in timeline.events().iter().enumerate() {
        let holders = holder_map(dataset, ev.tx_index + 1);
        let oracle_total = holders.values().filter(|h| group.contains(h)).count() as u32;
        let total = timeline.group_total()[e];
        if total != oracle_total {
            return Err(format!("event {e}: group total {total} != oracle {oracle_total}"));
        }
        if i64::from(total) - i64::from(prev_total) != i64::from(ev.inflow) - i64::from(ev.outflow) {
            return Err(format!("event {e}: total moved {prev_total}->{total} with in {} out {}", ev.inflow, ev.outflow));
        }
        let prev_in = ev.previous_holder.is_some_and(|h| group.contains(&h));
        if prev_in && group.contains(&ev.to) && total != prev_total {
            return Err(format!("event {e}: intra-group move changed the total"));
        }
        for (pos, id) in timeline.addresses().iter().enumerate() {
            let oracle: BTreeSet<TokenId> =
                holders.iter().filter(|(_, h)| *h == id).map(|(t, _)| *t).collect();
            if timeline.holdings(e, pos) != &oracle {
                return Err(format!("event {e}: holdings of {id} differ from the last-holder scan"));
            }
        }
        prev_total = total;
    }
    Ok(())
}

/// Average linkage recomputed from the original distances at every step.
/// Ties within [`tie_tolerance`] go to the pair with the lexicographically
/// smallest minimum leaves.
pub fn naive_average_linkage(matrix: &DistanceMatrix) -> Dendrogram {
    let n = matrix.n();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::new();
    while clusters.len() > 1 {
        let mut cands = Vec::new();
        for x in 0..clusters.len() {
            for y in x + 1..clusters.len() {
                let (a, b) = (&clusters[x].1, &clusters[y].1);
                let sum: f64 = a.iter().flat_map(|&i| b.iter().map(move |&j| (i, j))).map(|(i, j)| matrix.get(i, j)).sum();
                let d = sum / (a.len() * b.len()) as f64;
                let key = (*a.iter().min().unwrap(), *b.iter().min().unwrap());
                cands.push((d, key.0.min(key.1), key.0.max(key.1), x, y));
            }
        }
        let best = cands.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let limit = best + tie_tolerance(best);
        let &(d, _, _, x, y) = cands
            .iter()
            .filter(|c| c.0 <= limit)
            .min_by_key(|c| (c.1, c.2))
            .expect("at least one candidate");
        let (cx, cy) = (clusters[x].clone(), clusters[y].clone());
        let (lo, hi) = if cx.1.iter().min() < cy.1.iter().min() { (cx, cy) } else { (cy, cx) };
        merges.push(Merge { left: lo.0, right: hi.0, height: d, size: lo.1.len() + hi.1.len() });
        let node = n + merges.len() - 1;
        let mut leaves = lo.1;
        leaves.extend(hi.1);
        clusters.retain(|c| c.0 != lo.0 && c.0 != hi.0);
        clusters.push((node, leaves));
    }
    Dendrogram::from_merges(n, merges)
}

/// Leaf sequence for one combination of internal-node flips. Bit `k` of
/// `flips` reverses the children of merge `k`.
pub fn flipped_order(tree: &Dendrogram, flips: u64) -> Vec<usize> {
    fn walk(tree: &Dendrogram, node: usize, flips: u64, out: &mut Vec<usize>) {
        match tree.children(node) {
            None => out.push(node),
            Some((l, r)) => {
                let (a, b) = if flips >> (node - tree.n_leaves()) & 1 == 1 { (r, l) } else { (l, r) };
                walk(tree, a, flips, out);
                walk(tree, b, flips, out);
            }
        }
    }
    let mut out = Vec::new();
    if let Some(root) = tree.root() {
        walk(tree, root, flips, &mut out);
    }
    out
}

/// Cheapest open-chain cost over all `2^(n-1)` flip combinations.
pub fn exhaustive_leaf_order(tree: &Dendrogram, matrix: &DistanceMatrix) -> (f64, Vec<usize>) {
    let internal = tree.merges().len();
    assert!(internal < 24, "exhaustive search is limited to small trees");
    let mut best = (f64::INFINITY, Vec::new());
    for flips in 0..(1u64 << internal) {
        let order = flipped_order(tree, flips);
        let cost: f64 = order.windows(2).map(|w| matrix.get(w[0], w[1])).sum();
        if cost < best.0 {
            best = (cost, order);
        }
    }
    best
}

/// Days since 1970-01-01 to (year, month), proleptic Gregorian.
fn civil_month(days: i64) -> (i64, u32) {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    let y = yoe + era * 400 + i64::from(m <= 2);
    (y, m)
}

/// `(year, month, value, sales)` per calendar month touching `range`.
pub fn month_bins(
    dataset: &CollectionDataset,
    metric: BackgroundMetric,
    range: &TimeRange,
) -> Vec<(i64, u32, u128, u64)> {
    let month_of = |t: u64| civil_month((t / 86_400) as i64);
    let (first, last) = (month_of(range.start), month_of(range.end));
    let mut months = vec![first];
    while *months.last().unwrap() != last {
        let (y, m) = *months.last().unwrap();
        months.push(if m == 12 { (y + 1, 1) } else { (y, m + 1) });
    }
    months
        .into_iter()
        .map(|(y, m)| {
            let prices: Vec<u128> = dataset
                .transactions()
                .iter()
                .filter(|t| range.contains(t.timestamp) && month_of(t.timestamp) == (y, m))
                .filter(|t| t.status == TxStatus::Sale)
                .map(|t| t.value.0)
                .collect();
            let sales = prices.len() as u64;
            let value = match metric {
                BackgroundMetric::TradeVolume => u128::from(sales),
                BackgroundMetric::AveragePrice if sales == 0 => 0,
                BackgroundMetric::AveragePrice => prices.iter().sum::<u128>() / u128::from(sales),
            };
            (y, m, value, sales)
        })
        .collect()
}

/// Transactions already applied at flow slot `slot`.
fn applied_at(timeline: &HoldingsTimeline, layout: &FlowLayout, slot: usize) -> usize {
    let e = layout.event_range.lo + slot;
    if e == 0 {
        // Before the first event: everything before its transaction.
        timeline.events()[0].tx_index
    } else {
        timeline.events()[e - 1].tx_index + 1
    }
}

/// Checks every flow-chart invariant: lane capacity, path continuity, hop
/// styles, borders, agreement with the stacked series, and lane contents
/// against a per-token last-holder scan.
pub fn check_flow(
    dataset: &CollectionDataset,
    timeline: &HoldingsTimeline,
    series: &StackedSeries,
    layout: &FlowLayout,
) -> Result<(), String> {
    let range = layout.event_range;
    let slots = range.len() + 1;
    if layout.lane_map.len() != slots || layout.slots.len() != slots {
        return Err(format!("expected {slots} slots"));
    }
    let ribbon_index: BTreeMap<AddressId, usize> =
        layout.ribbons.iter().enumerate().map(|(r, rb)| (rb.address, r)).collect();

    // Lane capacity and oracle holdings.
    for s in 0..slots {
        let upto = applied_at(timeline, layout, s);
        let holders = holder_map(dataset, upto);
        let mut seen = BTreeSet::new();
        for (r, ribbon) in layout.ribbons.iter().enumerate() {
            let lanes = &layout.lane_map[s][r];
            if ribbon.heights[s] as usize != lanes.len() {
                return Err(format!("slot {s}: ribbon {r} height {} != {} lanes", ribbon.heights[s], lanes.len()));
            }
            for t in lanes {
                if !seen.insert(*t) {
                    return Err(format!("slot {s}: token {t} occupies two lanes"));
                }
            }
            let expect: BTreeSet<TokenId> =
                holders.iter().filter(|(_, h)| **h == ribbon.address).map(|(t, _)| *t).collect();
            let got: BTreeSet<TokenId> = lanes.iter().copied().collect();
            if got != expect {
                return Err(format!("slot {s}: ribbon {} holds {got:?}, oracle says {expect:?}", ribbon.address));
            }
        }
        for id in timeline.addresses() {
            if !ribbon_index.contains_key(id) && holders.values().any(|h| h == id) {
                return Err(format!("slot {s}: {id} holds tokens but has no ribbon"));
            }
        }
    }

    // Stacked/flow agreement.
    for s in 1..slots {
        let e = range.lo + s - 1;
        let sum: u32 = layout.ribbons.iter().map(|r| r.heights[s]).sum();
        if sum != series.totals[e] {
            return Err(format!("event {e}: ribbons sum to {sum}, stack total {}", series.totals[e]));
        }
        for (a, id) in series.addresses.iter().enumerate() {
            let h = ribbon_index.get(id).map_or(0, |&r| layout.ribbons[r].heights[s]);
            if h != series.heights[a][e] {
                return Err(format!("event {e}: {id} ribbon {h} != stack {}", series.heights[a][e]));
            }
        }
    }

    let lane_token = |addr: Option<AddressId>, slot: usize, lane: Option<u32>| -> Option<TokenId> {
        let r = *ribbon_index.get(&addr?)?;
        layout.lane_map.get(slot)?.get(r)?.get(lane? as usize).copied()
    };
    for path in &layout.paths {
        let segs = &path.segments;
        if segs.is_empty() {
            return Err(format!("token {} has an empty path", path.token_id));
        }
        let first = &segs[0];
        let starts_ok = matches!(first.kind, SegmentKind::MintEntry | SegmentKind::ExternalEntry)
            || (first.from.slot == 0 && first.from.anchor == Anchor::Address);
        if !starts_ok {
            return Err(format!("token {}: path starts with {:?}", path.token_id, first.kind));
        }
        for (k, seg) in segs.iter().enumerate() {
            if seg.to.slot < seg.from.slot || seg.to.slot >= slots {
                return Err(format!("token {}: segment {k} runs backwards or off the chart", path.token_id));
            }
            for end in [seg.from, seg.to] {
                if end.anchor == Anchor::Address
                    && lane_token(end.address, end.slot, end.lane) != Some(path.token_id)
                {
                    return Err(format!("token {}: segment {k} endpoint {end:?} is not its lane", path.token_id));
                }
            }
            match seg.kind {
                SegmentKind::Hold => {
                    if seg.from.anchor != Anchor::Address || seg.from.address != seg.to.address {
                        return Err(format!("token {}: hold {k} changes address", path.token_id));
                    }
                }
                SegmentKind::SaleHop | SegmentKind::TransferHop => {
                    let tx = seg.tx_index.map(|i| dataset.transactions()[i]);
                    let status = tx.map(|t| t.status);
                    let want = if seg.kind == SegmentKind::SaleHop { TxStatus::Sale } else { TxStatus::Transfer };
                    if status != Some(want) || seg.status != status {
                        return Err(format!("token {}: hop {k} kind {:?} but status {status:?}", path.token_id, seg.kind));
                    }
                    if seg.from.anchor != Anchor::Address || seg.to.anchor != Anchor::Address {
                        return Err(format!("token {}: hop {k} touches a border", path.token_id));
                    }
                }
                SegmentKind::MintEntry if seg.from.anchor != Anchor::TopBorder => {
                    return Err(format!("token {}: mint entry {k} not from the top border", path.token_id));
                }
                SegmentKind::ExternalEntry if seg.from.anchor != Anchor::BottomBorder => {
                    return Err(format!("token {}: external entry {k} not from the bottom border", path.token_id));
                }
                SegmentKind::ExternalExit if seg.to.anchor != Anchor::BottomBorder => {
                    return Err(format!("token {}: exit {k} not to the bottom border", path.token_id));
                }
                _ => {}
            }
            if let (Some(to), Some(lane)) = (seg.to.address, seg.to.lane) {
                let height = layout.lane_map[seg.to.slot][ribbon_index[&to]].len() as u32;
                let from_above = match (seg.kind, seg.from.address) {
                    (SegmentKind::MintEntry, _) => Some(true),
                    (SegmentKind::ExternalEntry, _) => Some(false),
                    (SegmentKind::SaleHop | SegmentKind::TransferHop, Some(from)) => {
                        Some(ribbon_index[&from] < ribbon_index[&to])
                    }
                    _ => None,
                };
                let want = from_above.map(|above| if above { 0 } else { height - 1 });
                if want.is_some_and(|w| w != lane) {
                    return Err(format!("token {}: segment {k} entered lane {lane}, expected {want:?}", path.token_id));
                }
            }
            if seg.kind != SegmentKind::Hold {
                let tx = seg.tx_index.map(|i| dataset.transactions()[i]);
                let Some(tx) = tx else {
                    return Err(format!("token {}: hop {k} without a transaction", path.token_id));
                };
                let want = if tx.status == TxStatus::Sale { LineStyle::Solid } else { LineStyle::Dotted };
                if seg.style != want || tx.token_id != path.token_id {
                    return Err(format!("token {}: hop {k} style or token mismatch", path.token_id));
                }
            }
            if let Some(next) = segs.get(k + 1) {
                let reentry = seg.kind == SegmentKind::ExternalExit
                    && matches!(next.kind, SegmentKind::MintEntry | SegmentKind::ExternalEntry);
                if !reentry && seg.to != next.from {
                    return Err(format!("token {}: segments {k} and {} do not meet", path.token_id, k + 1));
                }
            }
        }
    }

    // Every slot a token spends in a ribbon is covered by its path, and every
    // exit from the group reaches the bottom border.
    let by_token: BTreeMap<TokenId, &crate::flowlayout::TokenPath> =
        layout.paths.iter().map(|p| (p.token_id, p)).collect();
    for s in 0..slots {
        for (r, lanes) in layout.lane_map[s].iter().enumerate() {
            for t in lanes {
                let covered = by_token.get(t).is_some_and(|p| {
                    p.segments.iter().any(|g| {
                        g.to.anchor == Anchor::Address
                            && g.to.address == Some(layout.ribbons[r].address)
                            && (g.from.slot..=g.to.slot).contains(&s)
                            && (g.kind == SegmentKind::Hold || g.to.slot == s)
                    })
                });
                if !covered && s > 0 {
                    return Err(format!("slot {s}: token {t} in ribbon {r} has no segment"));
                }
            }
        }
    }
    for (k, ev) in timeline.events()[range.lo..=range.hi].iter().enumerate() {
        let left_group = ev.previous_holder.is_some_and(|h| ribbon_index.contains_key(&h))
            && !timeline.addresses().contains(&ev.to);
        if left_group {
            let exits = by_token.get(&ev.token_id).is_some_and(|p| {
                p.segments.iter().any(|g| {
                    g.kind == SegmentKind::ExternalExit && g.tx_index == Some(ev.tx_index) && g.to.slot == k + 1
                })
            });
            if !exits {
                return Err(format!("event {}: token {} left the group without an exit", range.lo + k, ev.token_id));
            }
        }
    }
    Ok(())
}
