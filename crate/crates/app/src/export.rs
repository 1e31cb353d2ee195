//! End-to-end SVG export: dataset plus view settings in, document bytes out.

use nftdisk_core::disklayout::build_disk_layout;
use nftdisk_core::flowlayout::{build_flow_detail, build_stacked_series, EventRange, FlowError};
use nftdisk_core::seriation::seriate;
use nftdisk_core::{
    compute_pair_stats, detect_groups, filter_pairs, replay_holdings, AddressId, CollectionDataset, TimeRange,
};
use thiserror::Error;

use crate::session::SessionConfig;
use crate::svg::{render_disk_svg, render_flow_svg, SvgStyle};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Disk(#[from] nftdisk_core::disklayout::DiskError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Analytics(#[from] nftdisk_core::analytics::AnalyticsError),
    #[error("no colluding group passes the filter; pass addresses explicitly")]
    NoGroup,
}

pub fn disk_svg(dataset: &CollectionDataset, session: &SessionConfig, style: &SvgStyle) -> Result<String, ExportError> {
    let layout = build_disk_layout(dataset, &session.disk_config(dataset))?;
    Ok(render_disk_svg(&layout, style))
}

/// The largest colluding group under the session filter, in seriated order.
pub fn default_group(dataset: &CollectionDataset, range: &TimeRange, min_tx: u32) -> Option<Vec<AddressId>> {
    let filtered = filter_pairs(&compute_pair_stats(dataset, range), min_tx);
    let group = detect_groups(&filtered.pairs).into_iter().next()?;
    let pairs: Vec<_> = filtered.pairs.into_iter().filter(|p| group.contains(&p.a)).collect();
    Some(seriate(&pairs, &group).addresses)
}

/// Renders the group view over the session range and the detail view over
/// `events` (all events when `None`). `group` gives the stacking order;
/// `None` picks [`default_group`].
pub fn flow_svg(
    dataset: &CollectionDataset,
    session: &SessionConfig,
    group: Option<Vec<AddressId>>,
    events: Option<EventRange>,
    style: &SvgStyle,
) -> Result<String, ExportError> {
    let range = session.range_for(dataset);
    let group = match group {
        Some(g) => g,
        None => default_group(dataset, &range, session.min_tx).ok_or(ExportError::NoGroup)?,
    };
    let timeline = replay_holdings(dataset, &group, &range)?;
    let series = build_stacked_series(&timeline, &group)?;
    let events = match events {
        Some(e) => e,
        None => EventRange::full(&timeline).ok_or(FlowError::EmptyBrush)?,
    };
    let layout = build_flow_detail(&timeline, events, &group)?;
    Ok(render_flow_svg(&series, &layout, style))
}
