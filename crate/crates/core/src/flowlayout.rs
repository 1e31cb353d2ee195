//! Group-level stacked series and the per-address, per-token flow chart.
//!
//! The x axis of both charts is the event sequence, not wall-clock time.
//! In the detail chart every group member gets a horizontal ribbon whose
//! height is the number of tokens it holds, and every token is routed as a
//! path through integer lanes of those ribbons. A token arriving at an
//! address is inserted on the side its sender's ribbon lies on: the top lane
//! when the sender is stacked above, the bottom lane when below. Mints enter
//! from the top border, purchases from outside the group from the bottom
//! border, and tokens leaving the group exit through the bottom border.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::analytics::HoldingsTimeline;
use crate::types::{AddressId, Origin, TokenId, TxStatus};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowError {
    #[error("group member {0} is missing from the stacking order")]
    AddressNotInOrder(AddressId),
    #[error("event range {lo}..={hi} is outside a timeline of {len} events")]
    EventRangeOutOfBounds { lo: usize, hi: usize, len: usize },
    #[error("invalid brush: {0}")]
    InvalidBrush(String),
    #[error("the brush does not cover any event")]
    EmptyBrush,
}

/// Inclusive range of timeline event indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct EventRange {
    pub lo: usize,
    pub hi: usize,
}

impl EventRange {
    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The whole timeline, if it has any events.
    pub fn full(timeline: &HoldingsTimeline) -> Option<EventRange> {
        (!timeline.is_empty()).then(|| EventRange { lo: 0, hi: timeline.len() - 1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventPoint {
    /// Uniform x position: the event's index in the timeline.
    pub x: usize,
    pub tx_index: usize,
    pub timestamp: u64,
    pub token_id: TokenId,
    pub status: TxStatus,
}

/// Holdings per group member after every event, stacked in disk order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackedSeries {
    /// Stacking order, first entry on top.
    pub addresses: Vec<AddressId>,
    pub events: Vec<EventPoint>,
    /// Holdings when the window opens, per address.
    pub initial: Vec<u32>,
    /// `heights[a][e]`: tokens held by `addresses[a]` after event `e`.
    pub heights: Vec<Vec<u32>>,
    /// Group total after each event.
    pub totals: Vec<u32>,
}

/// Restricts `order` to the timeline's members, preserving order.
fn stacking_order(
    timeline: &HoldingsTimeline,
    order: &[AddressId],
) -> Result<Vec<(AddressId, usize)>, FlowError> {
    for id in timeline.addresses() {
        if !order.contains(id) {
            return Err(FlowError::AddressNotInOrder(*id));
        }
    }
    let mut out = Vec::with_capacity(timeline.addresses().len());
    for id in order {
        if let Some(pos) = timeline.position(*id) {
            if !out.iter().any(|(a, _)| a == id) {
                out.push((*id, pos));
            }
        }
    }
    Ok(out)
}

pub fn build_stacked_series(
    timeline: &HoldingsTimeline,
    order: &[AddressId],
) -> Result<StackedSeries, FlowError> {
    let stack = stacking_order(timeline, order)?;
    let events = timeline
        .events()
        .iter()
        .enumerate()
        .map(|(x, e)| EventPoint {
            x,
            tx_index: e.tx_index,
            timestamp: e.timestamp,
            token_id: e.token_id,
            status: e.status,
        })
        .collect();
    let heights = stack
        .iter()
        .map(|&(_, pos)| (0..timeline.len()).map(|e| timeline.holdings(e, pos).len() as u32).collect())
        .collect();
    Ok(StackedSeries {
        addresses: stack.iter().map(|(a, _)| *a).collect(),
        events,
        initial: stack.iter().map(|&(_, pos)| timeline.initial_holdings(pos).len() as u32).collect(),
        heights,
        totals: timeline.group_total().to_vec(),
    })
}

/// Events whose x position lies within `[x_lo, x_hi]`.
pub fn resolve_time_brush(series: &StackedSeries, x_lo: f64, x_hi: f64) -> Result<EventRange, FlowError> {
    if !(x_lo.is_finite() && x_hi.is_finite()) || x_lo > x_hi {
        return Err(FlowError::InvalidBrush(format!("need finite x_lo <= x_hi, got {x_lo}..{x_hi}")));
    }
    let len = series.events.len();
    if len == 0 || x_hi < 0.0 {
        return Err(FlowError::EmptyBrush);
    }
    let lo = x_lo.max(0.0).ceil() as usize;
    let hi = (x_hi.floor() as usize).min(len - 1);
    if lo > hi {
        return Err(FlowError::EmptyBrush);
    }
    Ok(EventRange { lo, hi })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Hold,
    SaleHop,
    TransferHop,
    MintEntry,
    ExternalEntry,
    ExternalExit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Address,
    TopBorder,
    BottomBorder,
}

/// A point in the chart: a lane of an address ribbon, or a border, at a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Endpoint {
    pub anchor: Anchor,
    pub slot: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub address: Option<AddressId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lane: Option<u32>,
}

impl Endpoint {
    fn lane_of(address: AddressId, slot: usize, lane: usize) -> Self {
        Endpoint { anchor: Anchor::Address, slot, address: Some(address), lane: Some(lane as u32) }
    }

    fn border(anchor: Anchor, slot: usize) -> Self {
        Endpoint { anchor, slot, address: None, lane: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LineStyle {
    #[serde(rename = "solid")]
    Solid,
    #[serde(rename = "dotted")]
    Dotted,
}

/// Gradient fill between the colour keys of the two ends. `None` stands for
/// a border.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Fill {
    pub from: Option<u32>,
    pub to: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PathSegment {
    pub kind: SegmentKind,
    pub from: Endpoint,
    pub to: Endpoint,
    /// Sales draw solid, transfers dotted. Holds draw solid.
    pub style: LineStyle,
    /// Transaction behind a hop; absent for holds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<TxStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx_index: Option<usize>,
    pub fill: Fill,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenPath {
    pub token_id: TokenId,
    pub segments: Vec<PathSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ribbon {
    pub address: AddressId,
    /// Categorical colour key; the ribbon's stacking position.
    pub color_key: u32,
    /// Vertical slot, top to bottom.
    pub y_slot: usize,
    /// Largest height over the range, for sizing the slot.
    pub max_height: u32,
    /// Lane count per slot.
    pub heights: Vec<u32>,
}

/// Column of the detail chart. Slot 0 is the state before the first event
/// of the range, slot `k` the state after the range's `k`-th event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Slot {
    pub slot: usize,
    /// Timeline event whose outcome this slot shows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx_index: Option<usize>,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowLayout {
    pub event_range: EventRange,
    pub slots: Vec<Slot>,
    pub ribbons: Vec<Ribbon>,
    pub paths: Vec<TokenPath>,
    /// `lane_map[slot][ribbon]`: tokens in lane order, top to bottom.
    pub lane_map: Vec<Vec<Vec<TokenId>>>,
}

/// Where a token arrives from, for the insertion-side rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneSource {
    /// A ribbon at this stacking index.
    Ribbon(usize),
    /// The top border (a mint).
    Top,
    /// The bottom border (an address outside the group).
    Bottom,
}

/// Lane occupancy per ribbon, top lane first.
pub type LaneMap = Vec<Vec<TokenId>>;

/// Applies one ownership change to `lanes`.
///
/// The token leaves its current lane (if any), letting the lanes below it
/// move up. If `receiver` is a ribbon, the token then enters its top lane
/// when the source lies above the receiver (or is the top border) and its
/// bottom lane otherwise. Returns the lane it left and the lane it entered.
pub fn assign_lanes(
    lanes: &mut LaneMap,
    token: TokenId,
    source: LaneSource,
    receiver: Option<usize>,
) -> (Option<usize>, Option<usize>) {
    let left = match source {
        LaneSource::Ribbon(r) => lanes[r].iter().position(|t| *t == token).inspect(|&lane| {
            lanes[r].remove(lane);
        }),
        _ => None,
    };
    let entered = receiver.map(|to| {
        let from_above = match source {
            LaneSource::Ribbon(r) => r < to,
            LaneSource::Top => true,
            LaneSource::Bottom => false,
        };
        if from_above {
            lanes[to].insert(0, token);
            0
        } else {
            lanes[to].push(token);
            lanes[to].len() - 1
        }
    });
    (left, entered)
}

/// Routes every token the group touches within `range` through the ribbons.
pub fn build_flow_detail(
    timeline: &HoldingsTimeline,
    range: EventRange,
    order: &[AddressId],
) -> Result<FlowLayout, FlowError> {
    if range.lo > range.hi || range.hi >= timeline.len() {
        return Err(FlowError::EventRangeOutOfBounds { lo: range.lo, hi: range.hi, len: timeline.len() });
    }
    let stack = stacking_order(timeline, order)?;
    let events = &timeline.events()[range.lo..=range.hi];

    // Members that hold something or transact during the range.
    let active: Vec<(AddressId, usize)> = stack
        .iter()
        .copied()
        .filter(|&(id, pos)| {
            let involved = events
                .iter()
                .any(|e| e.from == id || e.to == id || e.previous_holder == Some(id));
            let holds = !timeline.holdings_before(range.lo, pos).is_empty()
                || (range.lo..=range.hi).any(|e| !timeline.holdings(e, pos).is_empty());
            involved || holds
        })
        .collect();
    let ribbon_of = |id: AddressId| active.iter().position(|(a, _)| *a == id);

    let mut lanes: LaneMap = active
        .iter()
        .map(|&(_, pos)| timeline.holdings_before(range.lo, pos).iter().copied().collect())
        .collect();
    let mut lane_map = vec![lanes.clone()];
    let mut paths: BTreeMap<TokenId, Vec<PathSegment>> = BTreeMap::new();
    for ribbon in &lanes {
        for token in ribbon {
            paths.entry(*token).or_default();
        }
    }
    let window_open = if range.lo == 0 {
        timeline.window().start
    } else {
        timeline.events()[range.lo - 1].timestamp
    };
    let mut slots = vec![Slot {
        slot: 0,
        event: range.lo.checked_sub(1),
        tx_index: range.lo.checked_sub(1).map(|e| timeline.events()[e].tx_index),
        timestamp: window_open,
    }];

    for (k, ev) in events.iter().enumerate() {
        let (before, after) = (k, k + 1);
        let previous = lanes.clone();
        let token = ev.token_id;
        let held_by = ev
            .previous_holder
            .and_then(ribbon_of)
            .filter(|&r| previous[r].contains(&token));
        let source = match held_by {
            Some(r) => LaneSource::Ribbon(r),
            None if ev.origin == Origin::Mint => LaneSource::Top,
            None => LaneSource::Bottom,
        };
        let receiver = ribbon_of(ev.to);
        let (left, entered) = assign_lanes(&mut lanes, token, source, receiver);

        for (r, ribbon) in lanes.iter().enumerate() {
            let id = active[r].0;
            for (lane, t) in ribbon.iter().enumerate() {
                if *t == token {
                    continue;
                }
                let old = previous[r].iter().position(|x| x == t).expect("held tokens stay put");
                extend_hold(paths.entry(*t).or_default(), id, r as u32, before, old, after, lane);
            }
        }

        let from = match (source, left) {
            (LaneSource::Ribbon(r), Some(lane)) => Endpoint::lane_of(active[r].0, before, lane),
            (LaneSource::Top, _) => Endpoint::border(Anchor::TopBorder, before),
            _ => Endpoint::border(Anchor::BottomBorder, before),
        };
        let to = match (receiver, entered) {
            (Some(r), Some(lane)) => Endpoint::lane_of(active[r].0, after, lane),
            _ => Endpoint::border(Anchor::BottomBorder, after),
        };
        let kind = match (source, receiver) {
            (LaneSource::Ribbon(_), Some(_)) if ev.status == TxStatus::Sale => Some(SegmentKind::SaleHop),
            (LaneSource::Ribbon(_), Some(_)) => Some(SegmentKind::TransferHop),
            (LaneSource::Ribbon(_), None) => Some(SegmentKind::ExternalExit),
            (LaneSource::Top, Some(_)) => Some(SegmentKind::MintEntry),
            (LaneSource::Bottom, Some(_)) => Some(SegmentKind::ExternalEntry),
            (_, None) => None,
        };
        if let Some(kind) = kind {
            let key = |src: LaneSource| match src {
                LaneSource::Ribbon(r) => Some(r as u32),
                _ => None,
            };
            paths.entry(token).or_default().push(PathSegment {
                kind,
                from,
                to,
                style: match ev.status {
                    TxStatus::Sale => LineStyle::Solid,
                    TxStatus::Transfer => LineStyle::Dotted,
                },
                status: Some(ev.status),
                tx_index: Some(ev.tx_index),
                fill: Fill { from: key(source), to: receiver.map(|r| r as u32) },
            });
        }

        lane_map.push(lanes.clone());
        slots.push(Slot {
            slot: after,
            event: Some(range.lo + k),
            tx_index: Some(ev.tx_index),
            timestamp: ev.timestamp,
        });
    }

    let ribbons = active
        .iter()
        .enumerate()
        .map(|(r, (id, _))| {
            let heights: Vec<u32> = lane_map.iter().map(|s| s[r].len() as u32).collect();
            Ribbon {
                address: *id,
                color_key: r as u32,
                y_slot: r,
                max_height: heights.iter().copied().max().unwrap_or(0),
                heights,
            }
        })
        .collect();
    Ok(FlowLayout {
        event_range: range,
        slots,
        ribbons,
        paths: paths
            .into_iter()
            .map(|(token_id, segments)| TokenPath { token_id, segments })
            .collect(),
        lane_map,
    })
}

/// Adds a hold step, merging it into the previous hold when both stay in
/// one lane.
fn extend_hold(
    segments: &mut Vec<PathSegment>,
    address: AddressId,
    key: u32,
    before: usize,
    old_lane: usize,
    after: usize,
    new_lane: usize,
) {
    let start = Endpoint::lane_of(address, before, old_lane);
    if let Some(last) = segments.last_mut() {
        let flat = last.from.lane == last.to.lane;
        if last.kind == SegmentKind::Hold && flat && last.to == start && old_lane == new_lane {
            last.to.slot = after;
            return;
        }
    }
    segments.push(PathSegment {
        kind: SegmentKind::Hold,
        from: start,
        to: Endpoint::lane_of(address, after, new_lane),
        style: LineStyle::Solid,
        status: None,
        tx_index: None,
        fill: Fill { from: Some(key), to: Some(key) },
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(n: u128) -> TokenId {
        TokenId(n)
    }

    #[test]
    fn sender_below_enters_bottom_lane() {
        // Ribbon 0 (A) is above ribbon 1 (B); B sends to A.
        let mut lanes: LaneMap = vec![vec![t(1), t(2)], vec![t(9)]];
        let (left, entered) = assign_lanes(&mut lanes, t(9), LaneSource::Ribbon(1), Some(0));
        assert_eq!((left, entered), (Some(0), Some(2)));
        assert_eq!(lanes, vec![vec![t(1), t(2), t(9)], vec![]]);
    }

    #[test]
    fn sender_above_enters_top_lane() {
        let mut lanes: LaneMap = vec![vec![t(5)], vec![t(1), t(2)]];
        assign_lanes(&mut lanes, t(5), LaneSource::Ribbon(0), Some(1));
        assert_eq!(lanes[1], vec![t(5), t(1), t(2)]);
    }

    #[test]
    fn mint_enters_top_and_pushes_down() {
        let mut lanes: LaneMap = vec![vec![t(1), t(2)]];
        let (_, entered) = assign_lanes(&mut lanes, t(3), LaneSource::Top, Some(0));
        assert_eq!(entered, Some(0));
        assert_eq!(lanes[0], vec![t(3), t(1), t(2)]);
    }

    #[test]
    fn external_entry_goes_to_bottom_and_exit_compacts() {
        let mut lanes: LaneMap = vec![vec![t(1), t(2), t(3)]];
        assign_lanes(&mut lanes, t(4), LaneSource::Bottom, Some(0));
        assert_eq!(lanes[0], vec![t(1), t(2), t(3), t(4)]);
        let (left, entered) = assign_lanes(&mut lanes, t(2), LaneSource::Ribbon(0), None);
        assert_eq!((left, entered), (Some(1), None));
        assert_eq!(lanes[0], vec![t(1), t(3), t(4)]);
    }
}
