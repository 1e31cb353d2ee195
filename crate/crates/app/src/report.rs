//! Headless summary of the suspicious activity in a collection.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nftdisk_core::{
    compute_pair_stats, detect_constant_spans, detect_groups, filter_pairs, replay_holdings,
    Address, AddressId, CollectionDataset, PairStats, TimeRange, TokenId, TxStatus, Wei,
};
use serde::Serialize;

use crate::session::SessionConfig;

/// Constant-holdings runs shorter than this are left out of reports.
pub const DEFAULT_MIN_SPAN_EVENTS: usize = 5;
pub const DEFAULT_TOP: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedPair {
    pub rank: usize,
    pub a: Address,
    pub b: Address,
    pub tx_count: u32,
    pub unique_tokens: u32,
    pub suspicious_score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpanReport {
    pub first_event: usize,
    pub last_event: usize,
    pub start: u64,
    pub end: u64,
    pub tx_count: usize,
    pub holdings: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupReport {
    pub addresses: Vec<Address>,
    /// Transactions along the group's filtered pairs.
    pub tx_count: u64,
    pub constant_spans: Vec<SpanReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportSummary {
    pub transactions: usize,
    pub tokens: usize,
    /// Distinct non-mint addresses active in the range.
    pub addresses: usize,
    pub sale_volume_ether: String,
    /// Pairs above the address filter.
    pub filtered_pairs: usize,
    /// Filtered pairs with a positive score.
    pub suspicious_pairs: usize,
    pub suspicious_addresses: usize,
    pub suspicious_transactions: usize,
    pub suspicious_tokens: usize,
    pub groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDocument {
    pub collection_id: String,
    pub time_range: TimeRange,
    pub min_tx: u32,
    pub pairs: Vec<RankedPair>,
    pub groups: Vec<GroupReport>,
    pub summary: ReportSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportOptions {
    pub top: usize,
    pub min_span_events: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { top: DEFAULT_TOP, min_span_events: DEFAULT_MIN_SPAN_EVENTS }
    }
}

/// Orders pairs by score, then transaction count, both descending, then by
/// address index.
pub fn rank_pairs(pairs: &[PairStats]) -> Vec<PairStats> {
    let mut ranked = pairs.to_vec();
    ranked.sort_by(|x, y| {
        y.suspicious_score
            .total_cmp(&x.suspicious_score)
            .then(y.tx_count.cmp(&x.tx_count))
            .then((x.a, x.b).cmp(&(y.a, y.b)))
    });
    ranked
}

pub fn generate_report(
    dataset: &CollectionDataset,
    session: &SessionConfig,
    options: &ReportOptions,
) -> ReportDocument {
    let range = session.range_for(dataset);
    let txs = &dataset.transactions()[dataset.range_indices(&range)];
    let stats = compute_pair_stats(dataset, &range);
    let filtered = filter_pairs(&stats, session.min_tx);

    let pairs = rank_pairs(&filtered.pairs)
        .into_iter()
        .take(options.top)
        .enumerate()
        .map(|(i, p)| RankedPair {
            rank: i + 1,
            a: dataset.address(p.a),
            b: dataset.address(p.b),
            tx_count: p.tx_count,
            unique_tokens: p.unique_tokens,
            suspicious_score: p.suspicious_score,
        })
        .collect();

    let groups: Vec<GroupReport> = detect_groups(&filtered.pairs)
        .into_iter()
        .map(|members| {
            let ids: Vec<AddressId> = members.iter().copied().collect();
            let tx_count = filtered
                .pairs
                .iter()
                .filter(|p| members.contains(&p.a))
                .map(|p| u64::from(p.tx_count))
                .sum();
            let timeline = replay_holdings(dataset, &ids, &range).expect("groups are non-empty");
            let constant_spans = detect_constant_spans(&timeline, options.min_span_events)
                .into_iter()
                .map(|s| SpanReport {
                    first_event: s.start,
                    last_event: s.end,
                    start: timeline.events()[s.start].timestamp,
                    end: timeline.events()[s.end].timestamp,
                    tx_count: s.tx_count,
                    holdings: s.total,
                })
                .collect();
            GroupReport { addresses: ids.iter().map(|id| dataset.address(*id)).collect(), tx_count, constant_spans }
        })
        .collect();

    let suspicious: Vec<&PairStats> = filtered.pairs.iter().filter(|p| p.suspicious_score > 0.0).collect();
    let suspicious_ids: BTreeSet<AddressId> = suspicious.iter().flat_map(|p| [p.a, p.b]).collect();
    let suspicious_keys: BTreeSet<(AddressId, AddressId)> = suspicious.iter().map(|p| (p.a, p.b)).collect();
    let in_suspicious_pair = |from: AddressId, to: AddressId| suspicious_keys.contains(&(from.min(to), from.max(to)));
    let suspicious_txs: Vec<_> = txs.iter().filter(|t| in_suspicious_pair(t.from, t.to)).collect();

    let zero = dataset.zero_address_id();
    let addresses: BTreeSet<AddressId> =
        txs.iter().flat_map(|t| [t.from, t.to]).filter(|a| Some(*a) != zero).collect();
    let volume: u128 = txs.iter().filter(|t| t.status == TxStatus::Sale).map(|t| t.value.0).sum();

    ReportDocument {
        collection_id: dataset.collection_id().to_string(),
        time_range: range,
        min_tx: session.min_tx,
        pairs,
        summary: ReportSummary {
            transactions: txs.len(),
            tokens: txs.iter().map(|t| t.token_id).collect::<BTreeSet<TokenId>>().len(),
            addresses: addresses.len(),
            sale_volume_ether: Wei(volume).to_ether_string(),
            filtered_pairs: filtered.pairs.len(),
            suspicious_pairs: suspicious.len(),
            suspicious_addresses: suspicious_ids.len(),
            suspicious_transactions: suspicious_txs.len(),
            suspicious_tokens: suspicious_txs.iter().map(|t| t.token_id).collect::<BTreeSet<_>>().len(),
            groups: groups.len(),
        },
        groups,
    }
}

fn utc(ts: u64) -> String {
    chrono::DateTime::from_timestamp(ts as i64, 0)
        .map(|d| d.format("%Y-%m-%d %H:%M:%S").to_string())
        .unwrap_or_else(|| ts.to_string())
}

/// Plain-text rendering for terminals.
pub fn render_text(doc: &ReportDocument) -> String {
    let mut out = String::new();
    let s = &doc.summary;
    let _ = writeln!(out, "collection {}", doc.collection_id);
    let _ = writeln!(out, "range      {} .. {} UTC", utc(doc.time_range.start), utc(doc.time_range.end));
    let _ = writeln!(out, "min_tx     {}", doc.min_tx);
    let _ = writeln!(
        out,
        "activity   {} transactions, {} tokens, {} addresses, {} ETH in sales",
        s.transactions, s.tokens, s.addresses, s.sale_volume_ether
    );
    let _ = writeln!(
        out,
        "suspicious {} of {} filtered pairs, {} addresses, {} transactions, {} tokens, {} groups",
        s.suspicious_pairs, s.filtered_pairs, s.suspicious_addresses, s.suspicious_transactions, s.suspicious_tokens, s.groups
    );
    let _ = writeln!(out);
    if doc.pairs.is_empty() {
        let _ = writeln!(out, "no pairs above the address filter");
    } else {
        let _ = writeln!(out, "{:>4}  {:>6}  {:>6}  {:>6}  {:<42}  {:<42}", "rank", "score", "M", "N", "address a", "address b");
        for p in &doc.pairs {
            let _ = writeln!(
                out,
                "{:>4}  {:>6.3}  {:>6}  {:>6}  {:<42}  {:<42}",
                p.rank, p.suspicious_score, p.tx_count, p.unique_tokens, p.a.to_hex(), p.b.to_hex()
            );
        }
    }
    for (i, g) in doc.groups.iter().enumerate() {
        let _ = writeln!(out);
        let _ = writeln!(out, "group {} ({} addresses, {} transactions)", i + 1, g.addresses.len(), g.tx_count);
        for a in &g.addresses {
            let _ = writeln!(out, "  {a}");
        }
        for span in &g.constant_spans {
            let _ = writeln!(
                out,
                "  holdings constant at {} over {} transactions, {} .. {}",
                span.holdings,
                span.tx_count,
                utc(span.start),
                utc(span.end)
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_breaks_ties_by_count_then_index() {
        let pairs = vec![
            PairStats::new(AddressId(0), AddressId(1), 10, 5),
            PairStats::new(AddressId(2), AddressId(3), 20, 10),
            PairStats::new(AddressId(1), AddressId(2), 20, 10),
            PairStats::new(AddressId(4), AddressId(5), 50, 2),
        ];
        let ranked: Vec<(u32, u32)> = rank_pairs(&pairs).iter().map(|p| (p.a.0, p.b.0)).collect();
        assert_eq!(ranked, vec![(4, 5), (1, 2), (2, 3), (0, 1)]);
    }
}
