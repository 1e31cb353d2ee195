//! Geometry of the radial overview.
//!
//! Addresses sit at evenly spaced angles around a ring, in seriated order.
//! Time runs outward: the inner edge of the ring is the start of the
//! selected range and the outer edge its end. Every transaction between two
//! retained addresses becomes an arc at its time radius spanning the shorter
//! way round. Inside the ring, each suspicious pair gets a curve whose
//! closest approach to the centre encodes its score.
//!
//! All lengths are normalised so the outer edge of the ring is at most 1.
//! Angles are radians in `[0, 2π)`, increasing counter-clockwise.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    compute_background_bins, compute_pair_stats, filter_pairs, BackgroundMetric, BackgroundSeries,
    PairStats,
};
use crate::ingest::CollectionDataset;
use crate::seriation::{seriate, AddressOrder};
use crate::types::{Address, AddressId, TimeRange, TxStatus};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiskError {
    #[error("invalid disk configuration: {0}")]
    InvalidConfig(String),
    #[error("timestamp {t} lies outside the configured range {start}..={end}")]
    OutOfRange { t: u64, start: u64, end: u64 },
    #[error("invalid brush: {0}")]
    InvalidBrush(String),
    #[error("the brush does not cover any address")]
    EmptyBrush,
}

pub const DEFAULT_MIN_TX: u32 = 20;
pub const DEFAULT_RING_INNER: f64 = 0.3;
pub const DEFAULT_RING_OUTER: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskConfig {
    pub time_range: TimeRange,
    /// Radius of the ring's inner edge (start of the time range).
    pub ring_inner: f64,
    /// Radius of the ring's outer edge (end of the time range).
    pub ring_outer: f64,
    /// Radius of the score circle. Score 0 lies on its rim, score 1 at the centre.
    pub inner_circle: f64,
    pub metric: BackgroundMetric,
    /// Pairs need strictly more transactions than this to be shown.
    pub min_tx: u32,
}

impl DiskConfig {
    pub fn new(time_range: TimeRange) -> Self {
        DiskConfig {
            time_range,
            ring_inner: DEFAULT_RING_INNER,
            ring_outer: DEFAULT_RING_OUTER,
            inner_circle: DEFAULT_RING_INNER,
            metric: BackgroundMetric::AveragePrice,
            min_tx: DEFAULT_MIN_TX,
        }
    }

    pub fn validate(&self) -> Result<(), DiskError> {
        let (r, r_in, r_out) = (self.inner_circle, self.ring_inner, self.ring_outer);
        if !(r.is_finite() && r_in.is_finite() && r_out.is_finite()) {
            return Err(DiskError::InvalidConfig("radii must be finite".into()));
        }
        if !(0.0 < r && r <= r_in && r_in < r_out && r_out <= 1.0) {
            return Err(DiskError::InvalidConfig(format!(
                "need 0 < inner_circle ({r}) <= ring_inner ({r_in}) < ring_outer ({r_out}) <= 1"
            )));
        }
        if self.time_range.start > self.time_range.end {
            return Err(DiskError::InvalidConfig("time range start is after end".into()));
        }
        Ok(())
    }
}

/// Linear map from `[start, end]` onto `[ring_inner, ring_outer]`. A zero
/// length range maps onto the inner edge.
pub fn time_to_radius(t: u64, config: &DiskConfig) -> Result<f64, DiskError> {
    let range = config.time_range;
    if !range.contains(t) {
        return Err(DiskError::OutOfRange { t, start: range.start, end: range.end });
    }
    if range.span() == 0 {
        return Ok(config.ring_inner);
    }
    let frac = (t - range.start) as f64 / range.span() as f64;
    Ok(config.ring_inner + frac * (config.ring_outer - config.ring_inner))
}

/// Inverse of [`time_to_radius`] for radii clamped to the ring. `round_up`
/// picks the ceiling instead of the floor second.
pub fn radius_to_time(r: f64, config: &DiskConfig, round_up: bool) -> u64 {
    let range = config.time_range;
    let r = r.clamp(config.ring_inner, config.ring_outer);
    let frac = (r - config.ring_inner) / (config.ring_outer - config.ring_inner);
    let t = range.start as f64 + frac * range.span() as f64;
    let t = if round_up { t.ceil() } else { t.floor() };
    (t.max(range.start as f64) as u64).min(range.end)
}

/// Position and angle of every address on the circle.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleMap {
    n: usize,
    positions: HashMap<AddressId, usize>,
}

impl AngleMap {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn position(&self, id: AddressId) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    pub fn angle(&self, id: AddressId) -> Option<f64> {
        self.position(id).map(|p| self.angle_at(p))
    }

    pub fn angle_at(&self, position: usize) -> f64 {
        TAU * position as f64 / self.n as f64
    }

    /// Start position and angular span of the shorter way from `p` to `q`.
    /// A half-turn tie starts from the lower position.
    fn short_way(&self, p: usize, q: usize) -> (usize, f64) {
        let n = self.n;
        let forward = (q + n - p) % n;
        let backward = n - forward;
        let (start, steps) = match (2 * forward).cmp(&n) {
            std::cmp::Ordering::Less => (p, forward),
            std::cmp::Ordering::Greater => (q, backward),
            std::cmp::Ordering::Equal => (p.min(q), forward),
        };
        (start, TAU * steps as f64 / n as f64)
    }
}

/// Address at order position `k` sits at angle `2πk/n`.
pub fn address_angles(order: &AddressOrder) -> AngleMap {
    AngleMap {
        n: order.len(),
        positions: order.addresses.iter().enumerate().map(|(i, a)| (*a, i)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiskNode {
    pub index: AddressId,
    pub address: Address,
    pub position: usize,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArcGlyph {
    pub tx_index: usize,
    pub timestamp: u64,
    pub radius: f64,
    /// The arc runs counter-clockwise from `angle_start` to `angle_end`.
    pub angle_start: f64,
    pub angle_end: f64,
    /// Angular extent, at most π.
    pub span: f64,
    pub style: TxStatus,
    pub from: AddressId,
    pub to: AddressId,
}

/// One arc per in-range transaction whose two parties are both placed.
/// Arcs come out in log order, so later transactions draw on top.
pub fn make_arcs(
    dataset: &CollectionDataset,
    angles: &AngleMap,
    config: &DiskConfig,
) -> Result<Vec<ArcGlyph>, DiskError> {
    let mut arcs = Vec::new();
    let range = dataset.range_indices(&config.time_range);
    for (tx_index, tx) in dataset.transactions()[range.clone()].iter().enumerate() {
        let (Some(p), Some(q)) = (angles.position(tx.from), angles.position(tx.to)) else {
            continue;
        };
        let (start, span) = angles.short_way(p, q);
        let angle_start = angles.angle_at(start);
        arcs.push(ArcGlyph {
            tx_index: range.start + tx_index,
            timestamp: tx.timestamp,
            radius: time_to_radius(tx.timestamp, config)?,
            angle_start,
            angle_end: (angle_start + span) % TAU,
            span,
            style: tx.status,
            from: tx.from,
            to: tx.to,
        });
    }
    Ok(arcs)
}

/// Radial segment between an address's first and last in-range transaction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lifeline {
    pub address: AddressId,
    pub angle: f64,
    pub first_timestamp: u64,
    pub last_timestamp: u64,
    pub r_first: f64,
    pub r_last: f64,
}

pub fn make_lifelines(
    dataset: &CollectionDataset,
    order: &AddressOrder,
    angles: &AngleMap,
    config: &DiskConfig,
) -> Result<Vec<Lifeline>, DiskError> {
    let mut extent: Vec<Option<(u64, u64)>> = vec![None; angles.len()];
    for tx in &dataset.transactions()[dataset.range_indices(&config.time_range)] {
        for id in [tx.from, tx.to] {
            if let Some(p) = angles.position(id) {
                let e = extent[p].get_or_insert((tx.timestamp, tx.timestamp));
                e.1 = tx.timestamp;
            }
        }
    }
    let mut out = Vec::with_capacity(order.len());
    for (p, id) in order.addresses.iter().enumerate() {
        let Some((first, last)) = extent[p] else { continue };
        out.push(Lifeline {
            address: *id,
            angle: angles.angle_at(p),
            first_timestamp: first,
            last_timestamp: last,
            r_first: time_to_radius(first, config)?,
            r_last: time_to_radius(last, config)?,
        });
    }
    Ok(out)
}

/// Annulus shaded by one month of the background metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackgroundBand {
    pub start: u64,
    pub end: u64,
    pub r_lo: f64,
    pub r_hi: f64,
    /// `value / max value`, in `[0, 1]`.
    pub intensity: f64,
}

pub fn make_background(
    series: &BackgroundSeries,
    config: &DiskConfig,
) -> Result<Vec<BackgroundBand>, DiskError> {
    let range = config.time_range;
    series
        .bins
        .iter()
        .map(|bin| {
            let start = bin.start.max(range.start);
            let end = bin.end.min(range.end);
            Ok(BackgroundBand {
                start: bin.start,
                end: bin.end,
                r_lo: time_to_radius(start, config)?,
                r_hi: time_to_radius(end.max(start), config)?,
                intensity: series.intensity(bin),
            })
        })
        .collect()
}

/// Quadratic curve between two rim points of the score circle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerPath {
    pub a: AddressId,
    pub b: AddressId,
    pub score: f64,
    pub tx_count: u32,
    pub unique_tokens: u32,
    pub angle_a: f64,
    pub angle_b: f64,
    /// Distance from the centre of the curve's midpoint: `R·(1 − S)`.
    pub apex_radius: f64,
    pub start: [f64; 2],
    pub control: [f64; 2],
    pub end: [f64; 2],
    pub apex: [f64; 2],
}

fn polar(r: f64, angle: f64) -> [f64; 2] {
    [r * angle.cos(), r * angle.sin()]
}

/// One curve per pair with a non-zero score. The control point lies on the
/// bisector of the shorter angular span, placed so that the curve's
/// parametric midpoint `¼P0 + ½C + ¼P1` lands at radius `R·(1 − S)`.
pub fn make_inner_paths(pairs: &[PairStats], angles: &AngleMap, radius: f64) -> Vec<InnerPath> {
    let mut out = Vec::new();
    for pair in pairs {
        if pair.suspicious_score <= 0.0 {
            continue;
        }
        let (Some(pa), Some(pb)) = (angles.position(pair.a), angles.position(pair.b)) else {
            continue;
        };
        let (start, span) = angles.short_way(pa, pb);
        let bisector = angles.angle_at(start) + span / 2.0;
        let apex_radius = radius * (1.0 - pair.suspicious_score);
        let (angle_a, angle_b) = (angles.angle_at(pa), angles.angle_at(pb));
        let p0 = polar(radius, angle_a);
        let p1 = polar(radius, angle_b);
        let apex = polar(apex_radius, bisector);
        let control = [
            2.0 * apex[0] - 0.5 * (p0[0] + p1[0]),
            2.0 * apex[1] - 0.5 * (p0[1] + p1[1]),
        ];
        out.push(InnerPath {
            a: pair.a,
            b: pair.b,
            score: pair.suspicious_score,
            tx_count: pair.tx_count,
            unique_tokens: pair.unique_tokens,
            angle_a,
            angle_b,
            apex_radius,
            start: p0,
            control,
            end: p1,
            apex,
        });
    }
    out
}

/// Complete radial overview.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiskLayout {
    pub collection_id: String,
    pub config: DiskConfig,
    pub order: AddressOrder,
    pub nodes: Vec<DiskNode>,
    pub pairs: Vec<PairStats>,
    pub arcs: Vec<ArcGlyph>,
    pub lifelines: Vec<Lifeline>,
    pub background: Vec<BackgroundBand>,
    pub inner_paths: Vec<InnerPath>,
}

impl DiskLayout {
    pub fn angle_map(&self) -> AngleMap {
        address_angles(&self.order)
    }
}

/// Runs pair stats, filtering, seriation and all geometry for `config`.
pub fn build_disk_layout(
    dataset: &CollectionDataset,
    config: &DiskConfig,
) -> Result<DiskLayout, DiskError> {
    config.validate()?;
    let stats = compute_pair_stats(dataset, &config.time_range);
    let filtered = filter_pairs(&stats, config.min_tx);
    let order = seriate(&filtered.pairs, &filtered.addresses);
    let angles = address_angles(&order);
    let nodes = order
        .addresses
        .iter()
        .enumerate()
        .map(|(position, id)| DiskNode {
            index: *id,
            address: dataset.address(*id),
            position,
            angle: angles.angle_at(position),
        })
        .collect();
    let arcs = make_arcs(dataset, &angles, config)?;
    let lifelines = make_lifelines(dataset, &order, &angles, config)?;
    let series = compute_background_bins(dataset, config.metric, &config.time_range);
    let background = make_background(&series, config)?;
    let inner_paths = make_inner_paths(&filtered.pairs, &angles, config.inner_circle);
    Ok(DiskLayout {
        collection_id: dataset.collection_id().to_string(),
        config: *config,
        order,
        nodes,
        pairs: filtered.pairs,
        arcs,
        lifelines,
        background,
        inner_paths,
    })
}

/// Arc-shaped brush: an angular sweep counter-clockwise from `angle_start`
/// to `angle_end` and a radial band `[r_lo, r_hi]`. A sweep of `2π` or more
/// covers the full circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularBrush {
    pub angle_start: f64,
    pub angle_end: f64,
    pub r_lo: f64,
    pub r_hi: f64,
}

impl CircularBrush {
    fn sweep(&self) -> f64 {
        let raw = self.angle_end - self.angle_start;
        if raw >= TAU {
            TAU
        } else {
            raw.rem_euclid(TAU)
        }
    }

    /// Whether `angle` lies in the brush's directed angular interval.
    pub fn covers_angle(&self, angle: f64) -> bool {
        let offset = (angle - self.angle_start).rem_euclid(TAU);
        offset <= self.sweep() + 1e-12 || TAU - offset <= 1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    /// Selected addresses in disk order.
    pub addresses: Vec<AddressId>,
    pub hex: Vec<Address>,
    pub time_range: TimeRange,
}

/// Addresses under the brush's angular sweep and the time range under its
/// radial band.
pub fn resolve_circular_brush(
    layout: &DiskLayout,
    brush: &CircularBrush,
) -> Result<Selection, DiskError> {
    let vals = [brush.angle_start, brush.angle_end, brush.r_lo, brush.r_hi];
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(DiskError::InvalidBrush("brush values must be finite".into()));
    }
    if !(0.0 <= brush.r_lo && brush.r_lo <= brush.r_hi) {
        return Err(DiskError::InvalidBrush(format!(
            "need 0 <= r_lo ({}) <= r_hi ({})",
            brush.r_lo, brush.r_hi
        )));
    }
    // A click without drag covers no area.
    if brush.r_lo == brush.r_hi {
        return Err(DiskError::EmptyBrush);
    }
    let config = &layout.config;
    let r_a = brush.r_lo.max(config.ring_inner);
    let r_b = brush.r_hi.min(config.ring_outer);
    if r_a > r_b {
        return Err(DiskError::EmptyBrush);
    }
    let chosen: Vec<&DiskNode> = layout.nodes.iter().filter(|n| brush.covers_angle(n.angle)).collect();
    if chosen.is_empty() {
        return Err(DiskError::EmptyBrush);
    }
    Ok(Selection {
        addresses: chosen.iter().map(|n| n.index).collect(),
        hex: chosen.iter().map(|n| n.address).collect(),
        time_range: TimeRange {
            start: radius_to_time(r_a, config, false),
            end: radius_to_time(r_b, config, true),
        },
    })
}

/// Addresses of a layout as a set, for filtering.
pub fn placed_addresses(layout: &DiskLayout) -> BTreeSet<AddressId> {
    layout.order.addresses.iter().copied().collect()
}
