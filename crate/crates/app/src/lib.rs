//! Operational shell around `nftdisk-core`: persistent dataset store,
//! explorer fetch client, reports, SVG export and the HTTP API.

pub mod export;
pub mod fetch;
pub mod report;
pub mod server;
pub mod session;
pub mod store;
pub mod svg;

pub use report::{generate_report, ReportDocument};
pub use session::SessionConfig;
pub use store::Store;
