//! Pair statistics, address filtering, holdings replay and market metrics.
//!
//! The suspicious score of an address pair is `S = 1 - N / M`, where `M` is
//! the number of transactions between the two addresses (either direction)
//! and `N` the number of distinct tokens those transactions moved. A pair
//! that keeps passing the same few tokens back and forth scores close to 1.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use chrono::{DateTime, Datelike, NaiveDate};
use petgraph::unionfind::UnionFind;
use serde::Serialize;
use thiserror::Error;

use crate::ingest::CollectionDataset;
use crate::types::{AddressId, Origin, TimeRange, TokenId, TxStatus, Wei};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("the selected group contains no addresses")]
    GroupEmpty,
}

/// Aggregate over all transactions between one unordered address pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairStats {
    /// Smaller address index of the pair.
    pub a: AddressId,
    pub b: AddressId,
    /// `M`: transactions between `a` and `b` in either direction.
    pub tx_count: u32,
    /// `N`: distinct tokens moved by those transactions.
    pub unique_tokens: u32,
    /// `S = 1 - N/M`.
    pub suspicious_score: f64,
}

impl PairStats {
    pub fn new(a: AddressId, b: AddressId, tx_count: u32, unique_tokens: u32) -> Self {
        assert!(
            1 <= unique_tokens && unique_tokens <= tx_count,
            "pair needs 1 <= N <= M (N={unique_tokens}, M={tx_count})"
        );
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        PairStats {
            a,
            b,
            tx_count,
            unique_tokens,
            suspicious_score: suspicious_score(tx_count, unique_tokens),
        }
    }

    pub fn contains(&self, id: AddressId) -> bool {
        self.a == id || self.b == id
    }
}

/// `1 - N/M`, evaluated as `(M - N) / M` so the zero case is exact.
pub fn suspicious_score(tx_count: u32, unique_tokens: u32) -> f64 {
    f64::from(tx_count - unique_tokens) / f64::from(tx_count)
}

fn canonical_pair(x: AddressId, y: AddressId) -> (AddressId, AddressId) {
    if x <= y {
        (x, y)
    } else {
        (y, x)
    }
}

/// Pair statistics for every unordered pair with at least one transaction in
/// `range`, sorted by `(a, b)`. Pairs involving the zero (mint) address are
/// left out.
pub fn compute_pair_stats(dataset: &CollectionDataset, range: &TimeRange) -> Vec<PairStats> {
    let zero = dataset.zero_address_id();
    let mut acc: HashMap<(AddressId, AddressId), (u32, HashSet<TokenId>)> = HashMap::new();
    for tx in &dataset.transactions()[dataset.range_indices(range)] {
        if Some(tx.from) == zero || Some(tx.to) == zero {
            continue;
        }
        let entry = acc.entry(canonical_pair(tx.from, tx.to)).or_default();
        entry.0 += 1;
        entry.1.insert(tx.token_id);
    }
    let mut stats: Vec<PairStats> = acc
        .into_iter()
        .map(|((a, b), (m, tokens))| PairStats::new(a, b, m, tokens.len() as u32))
        .collect();
    stats.sort_by_key(|p| (p.a, p.b));
    stats
}

/// Pairs that survived the address filter and the addresses they touch.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FilteredPairs {
    pub pairs: Vec<PairStats>,
    pub addresses: BTreeSet<AddressId>,
}

/// Keeps pairs with strictly more than `min_tx` transactions.
pub fn filter_pairs(stats: &[PairStats], min_tx: u32) -> FilteredPairs {
    let pairs: Vec<PairStats> = stats.iter().filter(|p| p.tx_count > min_tx).copied().collect();
    let addresses = pairs.iter().flat_map(|p| [p.a, p.b]).collect();
    FilteredPairs { pairs, addresses }
}

/// Connected components of the filtered pair graph, heaviest first.
///
/// Components are ordered by descending total transaction count, then by
/// their smallest address index.
pub fn detect_groups(pairs: &[PairStats]) -> Vec<BTreeSet<AddressId>> {
    let nodes: BTreeSet<AddressId> = pairs.iter().flat_map(|p| [p.a, p.b]).collect();
    let dense: HashMap<AddressId, usize> = nodes.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let nodes: Vec<AddressId> = nodes.into_iter().collect();
    let mut uf = UnionFind::<usize>::new(nodes.len());
    for p in pairs {
        uf.union(dense[&p.a], dense[&p.b]);
    }
    let mut components: BTreeMap<usize, (BTreeSet<AddressId>, u64)> = BTreeMap::new();
    for (i, id) in nodes.iter().enumerate() {
        components.entry(uf.find(i)).or_default().0.insert(*id);
    }
    for p in pairs {
        components.get_mut(&uf.find(dense[&p.a])).expect("component").1 += u64::from(p.tx_count);
    }
    let mut out: Vec<(BTreeSet<AddressId>, u64)> = components.into_values().collect();
    out.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.first().cmp(&y.0.first())));
    out.into_iter().map(|(set, _)| set).collect()
}

/// How a holdings event moved a token relative to the group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    /// Token moved between two group members.
    Internal,
    /// Token entered the group from outside (including mints).
    Inflow,
    /// Token left the group.
    Outflow,
    /// Group member involved but group holdings untouched (e.g. it passed on
    /// a token it was never recorded as holding to an outsider).
    Passthrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HoldingsEvent {
    /// Position of the transaction in the dataset.
    pub tx_index: usize,
    pub timestamp: u64,
    pub token_id: TokenId,
    pub status: TxStatus,
    pub origin: Origin,
    pub from: AddressId,
    pub to: AddressId,
    /// Holder of the token just before this event, per replay.
    pub previous_holder: Option<AddressId>,
    pub kind: FlowKind,
    pub inflow: u32,
    pub outflow: u32,
}

/// Replay of the tokens held by a group of addresses over a time window.
#[derive(Debug, Clone)]
pub struct HoldingsTimeline {
    addresses: Vec<AddressId>,
    window: TimeRange,
    initial: Vec<Arc<BTreeSet<TokenId>>>,
    events: Vec<HoldingsEvent>,
    holdings: Vec<Vec<Arc<BTreeSet<TokenId>>>>,
    group_total: Vec<u32>,
}

impl HoldingsTimeline {
    /// Group members in the order they were given (duplicates removed).
    pub fn addresses(&self) -> &[AddressId] {
        &self.addresses
    }

    pub fn window(&self) -> TimeRange {
        self.window
    }

    pub fn position(&self, id: AddressId) -> Option<usize> {
        self.addresses.iter().position(|a| *a == id)
    }

    pub fn events(&self) -> &[HoldingsEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Tokens held by the member at `pos` when the window opens.
    pub fn initial_holdings(&self, pos: usize) -> &BTreeSet<TokenId> {
        &self.initial[pos]
    }

    pub fn initial_total(&self) -> u32 {
        self.initial.iter().map(|s| s.len() as u32).sum()
    }

    /// Tokens held by the member at `pos` right after event `event`.
    pub fn holdings(&self, event: usize, pos: usize) -> &BTreeSet<TokenId> {
        &self.holdings[event][pos]
    }

    /// Holdings before event `event`, i.e. after `event - 1`, or the
    /// initial holdings for `event == 0`.
    pub fn holdings_before(&self, event: usize, pos: usize) -> &BTreeSet<TokenId> {
        if event == 0 {
            self.initial_holdings(pos)
        } else {
            self.holdings(event - 1, pos)
        }
    }

    pub fn group_total(&self) -> &[u32] {
        &self.group_total
    }
}

/// Replays token ownership for `group` over `window`.
///
/// A token is held by the receiver of its most recent transaction. Initial
/// holdings come from replaying the whole log before `window.start`. Events
/// are the in-window transactions that touch a group member or move a token
/// the group currently holds.
pub fn replay_holdings(
    dataset: &CollectionDataset,
    group: &[AddressId],
    window: &TimeRange,
) -> Result<HoldingsTimeline, AnalyticsError> {
    let mut addresses: Vec<AddressId> = Vec::with_capacity(group.len());
    for id in group {
        if !addresses.contains(id) {
            addresses.push(*id);
        }
    }
    if addresses.is_empty() {
        return Err(AnalyticsError::GroupEmpty);
    }
    let member: HashMap<AddressId, usize> =
        addresses.iter().enumerate().map(|(i, a)| (*a, i)).collect();

    let range = dataset.range_indices(window);
    let txs = dataset.transactions();
    let mut holder: HashMap<TokenId, AddressId> = HashMap::new();
    for tx in &txs[..range.start] {
        holder.insert(tx.token_id, tx.to);
    }
    let mut sets: Vec<BTreeSet<TokenId>> = vec![BTreeSet::new(); addresses.len()];
    for (token, h) in &holder {
        if let Some(&pos) = member.get(h) {
            sets[pos].insert(*token);
        }
    }
    let mut current: Vec<Arc<BTreeSet<TokenId>>> = sets.into_iter().map(Arc::new).collect();
    let initial = current.clone();
    let mut total: u32 = current.iter().map(|s| s.len() as u32).sum();

    let mut events = Vec::new();
    let mut holdings = Vec::new();
    let mut group_total = Vec::new();
    for tx_index in range {
        let tx = &txs[tx_index];
        let previous_holder = holder.insert(tx.token_id, tx.to);
        let prev_pos = previous_holder.and_then(|h| member.get(&h).copied());
        let to_pos = member.get(&tx.to).copied();
        let from_in = member.contains_key(&tx.from);
        if prev_pos.is_none() && to_pos.is_none() && !from_in {
            continue;
        }
        if let Some(p) = prev_pos {
            Arc::make_mut(&mut current[p]).remove(&tx.token_id);
        }
        if let Some(p) = to_pos {
            Arc::make_mut(&mut current[p]).insert(tx.token_id);
        }
        let (kind, inflow, outflow) = match (prev_pos.is_some(), to_pos.is_some()) {
            (true, true) => (FlowKind::Internal, 0, 0),
            (false, true) => (FlowKind::Inflow, 1, 0),
            (true, false) => (FlowKind::Outflow, 0, 1),
            (false, false) => (FlowKind::Passthrough, 0, 0),
        };
        total = total + inflow - outflow;
        events.push(HoldingsEvent {
            tx_index,
            timestamp: tx.timestamp,
            token_id: tx.token_id,
            status: tx.status,
            origin: tx.origin,
            from: tx.from,
            to: tx.to,
            previous_holder,
            kind,
            inflow,
            outflow,
        });
        holdings.push(current.clone());
        group_total.push(total);
    }
    Ok(HoldingsTimeline {
        addresses,
        window: *window,
        initial,
        events,
        holdings,
        group_total,
    })
}

/// Maximal run of events over which the group's total holdings stay fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConstantSpan {
    /// First event of the run.
    pub start: usize,
    /// Last event of the run (inclusive).
    pub end: usize,
    /// Number of transactions in the run.
    pub tx_count: usize,
    /// The constant group total.
    pub total: u32,
}

/// Maximal event runs with constant group total and at least `min_events`
/// events. Values of `min_events` below 2 are treated as 2.
pub fn detect_constant_spans(timeline: &HoldingsTimeline, min_events: usize) -> Vec<ConstantSpan> {
    constant_runs(timeline.group_total(), min_events)
}

pub(crate) fn constant_runs(totals: &[u32], min_events: usize) -> Vec<ConstantSpan> {
    let min_events = min_events.max(2);
    let mut spans = Vec::new();
    let mut start = 0;
    while start < totals.len() {
        let mut end = start;
        while end + 1 < totals.len() && totals[end + 1] == totals[start] {
            end += 1;
        }
        let len = end - start + 1;
        if len >= min_events {
            spans.push(ConstantSpan { start, end, tx_count: len, total: totals[start] });
        }
        start = end + 1;
    }
    spans
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMetric {
    #[default]
    AveragePrice,
    TradeVolume,
}

impl std::str::FromStr for BackgroundMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "average_price" | "price" | "avg_price" => Ok(BackgroundMetric::AveragePrice),
            "trade_volume" | "volume" => Ok(BackgroundMetric::TradeVolume),
            other => Err(format!("unknown metric {other:?} (expected average_price or trade_volume)")),
        }
    }
}

/// One UTC calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MonthBin {
    /// First second of the month.
    pub start: u64,
    /// First second of the following month (exclusive).
    pub end: u64,
    /// Mean sale price in wei for `AveragePrice`, number of sales for
    /// `TradeVolume`. Zero for months without sales.
    pub value: u128,
    pub sales: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BackgroundSeries {
    pub metric: BackgroundMetric,
    pub range: TimeRange,
    pub bins: Vec<MonthBin>,
    /// Largest bin value in the range.
    pub normalization: u128,
}

impl BackgroundSeries {
    /// `value / normalization`, or 0 when every bin is empty.
    pub fn intensity(&self, bin: &MonthBin) -> f64 {
        if self.normalization == 0 {
            0.0
        } else {
            bin.value as f64 / self.normalization as f64
        }
    }
}

fn month_start(ts: u64) -> u64 {
    let dt = DateTime::from_timestamp(ts as i64, 0).expect("timestamp in chrono range");
    let d = NaiveDate::from_ymd_opt(dt.year(), dt.month(), 1).expect("valid month start");
    d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp() as u64
}

fn next_month_start(start: u64) -> u64 {
    let dt = DateTime::from_timestamp(start as i64, 0).expect("timestamp in chrono range");
    let (y, m) = if dt.month() == 12 { (dt.year() + 1, 1) } else { (dt.year(), dt.month() + 1) };
    let d = NaiveDate::from_ymd_opt(y, m, 1).expect("valid month start");
    d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp() as u64
}

/// Monthly average sale price or sale count over `range`. Only sales inside
/// `range` count; zero-value transfers are ignored by both metrics.
pub fn compute_background_bins(
    dataset: &CollectionDataset,
    metric: BackgroundMetric,
    range: &TimeRange,
) -> BackgroundSeries {
    let mut bins = Vec::new();
    let mut start = month_start(range.start);
    while start <= range.end {
        let end = next_month_start(start);
        bins.push(MonthBin { start, end, value: 0, sales: 0 });
        start = end;
    }
    let mut sums = vec![0u128; bins.len()];
    let mut bin = 0;
    for tx in &dataset.transactions()[dataset.range_indices(range)] {
        if tx.status != TxStatus::Sale {
            continue;
        }
        while tx.timestamp >= bins[bin].end {
            bin += 1;
        }
        bins[bin].sales += 1;
        sums[bin] += tx.value.0;
    }
    for (b, sum) in bins.iter_mut().zip(sums) {
        b.value = match metric {
            BackgroundMetric::AveragePrice if b.sales > 0 => sum / u128::from(b.sales),
            BackgroundMetric::AveragePrice => 0,
            BackgroundMetric::TradeVolume => u128::from(b.sales),
        };
    }
    let normalization = bins.iter().map(|b| b.value).max().unwrap_or(0);
    BackgroundSeries { metric, range: *range, bins, normalization }
}

/// Mean price of a bin as wei, for display.
pub fn bin_price(bin: &MonthBin) -> Wei {
    Wei(bin.value)
}
