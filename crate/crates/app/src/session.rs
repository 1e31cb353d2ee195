use chrono::{DateTime, NaiveDate};
use nftdisk_core::disklayout::DEFAULT_MIN_TX;
use nftdisk_core::flowlayout::EventRange;
use nftdisk_core::{Address, BackgroundMetric, CollectionDataset, DiskConfig, TimeRange};
use serde::{Deserialize, Serialize};

/// Toolbar state of one analysis view. The server keeps none of it; clients
/// send it with every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub collection_id: String,
    /// `None` means the dataset's full extent.
    #[serde(default)]
    pub time_range: Option<TimeRange>,
    #[serde(default)]
    pub metric: BackgroundMetric,
    #[serde(default = "default_min_tx")]
    pub min_tx: u32,
    #[serde(default)]
    pub selection: Option<SelectionState>,
    #[serde(default)]
    pub event_range: Option<EventRange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionState {
    pub addresses: Vec<Address>,
    pub time_range: TimeRange,
}

fn default_min_tx() -> u32 {
    DEFAULT_MIN_TX
}

impl SessionConfig {
    pub fn new(collection_id: impl Into<String>) -> Self {
        SessionConfig {
            collection_id: collection_id.into(),
            time_range: None,
            metric: BackgroundMetric::default(),
            min_tx: DEFAULT_MIN_TX,
            selection: None,
            event_range: None,
        }
    }

    pub fn range_for(&self, dataset: &CollectionDataset) -> TimeRange {
        self.time_range.unwrap_or_else(|| dataset.time_extent())
    }

    pub fn disk_config(&self, dataset: &CollectionDataset) -> DiskConfig {
        DiskConfig {
            metric: self.metric,
            min_tx: self.min_tx,
            ..DiskConfig::new(self.range_for(dataset))
        }
    }
}

/// Parses Unix seconds, an RFC 3339 timestamp or a `YYYY-MM-DD` date (UTC
/// midnight).
pub fn parse_time(raw: &str) -> Result<u64, String> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<u64>() {
        return Ok(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return u64::try_from(dt.timestamp()).map_err(|_| format!("{raw:?} is before 1970"));
    }
    if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        let ts = d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp();
        return u64::try_from(ts).map_err(|_| format!("{raw:?} is before 1970"));
    }
    Err(format!("cannot parse {raw:?} as a time (expected Unix seconds, RFC 3339 or YYYY-MM-DD)"))
}

/// Combines optional bounds with the dataset extent.
pub fn resolve_range(
    dataset: &CollectionDataset,
    from: Option<u64>,
    to: Option<u64>,
) -> Result<TimeRange, String> {
    let extent = dataset.time_extent();
    let range = TimeRange::new(from.unwrap_or(extent.start), to.unwrap_or(extent.end));
    range.map_err(|e| e.to_string())
}
