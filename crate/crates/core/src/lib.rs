//! Analytics and layout engine for spotting wash trading in NFT collections.
//!
//! The pipeline is a chain of pure functions over an immutable
//! [`CollectionDataset`]:
//!
//! 1. [`ingest`] parses exported transaction logs and indexes them.
//! 2. [`analytics`] computes per-pair suspicious scores, filters pairs by
//!    transaction count, replays group holdings and bins market metrics.
//! 3. [`seriation`] orders the surviving addresses so that heavily trading
//!    pairs sit next to each other.
//! 4. [`disklayout`] and [`flowlayout`] turn the results into renderer
//!    agnostic geometry.

pub mod analytics;
pub mod disklayout;
pub mod flowlayout;
pub mod ingest;
pub mod seriation;
pub mod synth;
pub mod types;

#[cfg(feature = "oracles")]
pub mod oracle;

pub use analytics::{
    compute_background_bins, compute_pair_stats, detect_constant_spans, detect_groups,
    filter_pairs, replay_holdings, BackgroundMetric, BackgroundSeries, ConstantSpan,
    FilteredPairs, HoldingsTimeline, PairStats,
};
pub use disklayout::{DiskConfig, DiskLayout, Selection};
pub use flowlayout::{FlowLayout, StackedSeries};
pub use ingest::{build_dataset, parse_transactions, CollectionDataset, InputFormat, ParseMode};
pub use seriation::{AddressOrder, Dendrogram, DistanceMatrix};
pub use types::{Address, AddressId, Origin, TimeRange, TokenId, TransactionRecord, TxStatus, Wei};
