use std::fs;
use std::io::Write;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nftdisk::export::{disk_svg, flow_svg};
use nftdisk::fetch::{fetch_transactions, FetchConfig, DEFAULT_PAGE_SIZE};
use nftdisk::report::{render_text, ReportOptions, DEFAULT_TOP};
use nftdisk::server::{serve, ServerConfig, DEFAULT_PORT};
use nftdisk::session::{parse_time, resolve_range, SessionConfig};
use nftdisk::svg::SvgStyle;
use nftdisk::{generate_report, Store};
use nftdisk_core::flowlayout::EventRange;
use nftdisk_core::synth::{generate, SynthSpec};
use nftdisk_core::{
    build_dataset, parse_transactions, Address, AddressId, BackgroundMetric, CollectionDataset, InputFormat,
    ParseMode,
};

#[derive(Parser)]
#[command(name = "nftdisk", version, about = "NFT wash-trading analytics")]
struct Cli {
    /// Dataset store directory.
    #[arg(long, global = true, env = "NFTDISK_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a CSV or JSON export and store it as a collection.
    Ingest {
        file: PathBuf,
        #[arg(long)]
        collection: String,
        /// Defaults to the file extension.
        #[arg(long)]
        format: Option<InputFormat>,
        /// Abort on the first bad row instead of skipping it.
        #[arg(long)]
        strict: bool,
    },
    /// Download token transfer events for a contract into a canonical CSV.
    Fetch {
        contract: String,
        #[arg(long)]
        base_url: String,
        /// Defaults to `<contract>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PAGE_SIZE)]
        page_size: u32,
        #[arg(long, env = "NFTDISK_EXPLORER_KEY", hide_env_values = true)]
        api_key: Option<String>,
    },
    /// Ranked suspicious pairs, colluding groups and constant-holdings spans.
    Report {
        id: String,
        #[command(flatten)]
        view: ViewArgs,
        #[arg(long, default_value_t = DEFAULT_TOP)]
        top: usize,
        #[arg(long)]
        json: bool,
    },
    /// Render the disk or flow view as SVG.
    ExportSvg {
        id: String,
        #[arg(long)]
        view: View,
        #[command(flatten)]
        settings: ViewArgs,
        /// Comma-separated group addresses for the flow view, in stacking
        /// order. Defaults to the largest colluding group.
        #[arg(long, value_delimiter = ',')]
        addresses: Vec<Address>,
        #[arg(long)]
        event_lo: Option<usize>,
        #[arg(long)]
        event_hi: Option<usize>,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the JSON API.
    Serve {
        #[arg(long, env = "NFTDISK_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: Ipv4Addr,
    },
    /// Store a synthetic collection with planted collusion rings.
    Synth {
        id: String,
        #[arg(long, value_enum, default_value = "planted-ring")]
        preset: Preset,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct ViewArgs {
    /// Unix seconds, RFC 3339 or YYYY-MM-DD.
    #[arg(long)]
    from: Option<String>,
    #[arg(long)]
    to: Option<String>,
    #[arg(long)]
    min_tx: Option<u32>,
    #[arg(long)]
    metric: Option<BackgroundMetric>,
}

#[derive(Clone, Copy, ValueEnum)]
enum View {
    Disk,
    Flow,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    PlantedRing,
    Performance,
}

impl ViewArgs {
    fn session(&self, dataset: &CollectionDataset) -> Result<SessionConfig> {
        let time = |v: &Option<String>| v.as_deref().map(parse_time).transpose().map_err(anyhow::Error::msg);
        let mut session = SessionConfig::new(dataset.collection_id());
        session.time_range =
            Some(resolve_range(dataset, time(&self.from)?, time(&self.to)?).map_err(anyhow::Error::msg)?);
        if let Some(m) = self.min_tx {
            session.min_tx = m;
        }
        if let Some(m) = self.metric {
            session.metric = m;
        }
        Ok(session)
    }
}

fn format_for(path: &Path) -> InputFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("json") => InputFormat::Json,
        _ => InputFormat::Csv,
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { file, collection, format, strict } => {
            let bytes = fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
            let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
            let parsed = parse_transactions(&bytes, format.unwrap_or_else(|| format_for(&file)), mode)?;
            for e in &parsed.errors {
                eprintln!("skipped {e}");
            }
            let dataset = build_dataset(parsed.records, &collection)?;
            let store = Store::create(&cli.data_dir)?;
            let meta = store.save(&dataset, &file.display().to_string())?;
            println!(
                "ingested {} transactions ({} addresses, {} tokens, {} rows skipped) into {}",
                meta.transactions,
                meta.addresses,
                meta.tokens,
                parsed.errors.len(),
                meta.id
            );
        }
        Command::Fetch { contract, base_url, out, page_size, api_key } => {
            let out = out.unwrap_or_else(|| PathBuf::from(format!("{contract}.csv")));
            let mut cfg = FetchConfig::new(base_url, contract, &out);
            cfg.api_key = api_key;
            cfg.page_size = page_size;
            let summary = fetch_transactions(&cfg)?;
            if let Some(page) = summary.resumed_from_page {
                eprintln!("resumed from page {page}");
            }
            println!("wrote {} rows from {} pages to {}", summary.rows, summary.pages, out.display());
        }
        Command::Report { id, view, top, json } => {
            let dataset = Store::open(&cli.data_dir)?.load(&id)?;
            let session = view.session(&dataset)?;
            let doc = generate_report(&dataset, &session, &ReportOptions { top, ..ReportOptions::default() });
            if json {
                println!("{}", serde_json::to_string_pretty(&doc)?);
            } else {
                print!("{}", render_text(&doc));
            }
        }
        Command::ExportSvg { id, view, settings, addresses, event_lo, event_hi, out } => {
            let dataset = Store::open(&cli.data_dir)?.load(&id)?;
            let session = settings.session(&dataset)?;
            let style = SvgStyle::default();
            let svg = match view {
                View::Disk => disk_svg(&dataset, &session, &style)?,
                View::Flow => {
                    let group = if addresses.is_empty() {
                        None
                    } else {
                        let ids = addresses
                            .iter()
                            .map(|a| dataset.address_id(a).with_context(|| format!("address {a} not in {id}")))
                            .collect::<Result<Vec<AddressId>>>()?;
                        Some(ids)
                    };
                    let events = match (event_lo, event_hi) {
                        (None, None) => None,
                        (Some(lo), Some(hi)) => Some(EventRange { lo, hi }),
                        _ => bail!("--event-lo and --event-hi must be given together"),
                    };
                    flow_svg(&dataset, &session, group, events, &style)?
                }
            };
            emit(out.as_deref(), &svg)?;
        }
        Command::Serve { port, host } => {
            let config = ServerConfig { data_dir: cli.data_dir, host, port };
            tokio::runtime::Runtime::new()?.block_on(serve(config))?;
        }
        Command::Synth { id, preset, seed } => {
            let spec = match preset {
                Preset::PlantedRing => SynthSpec::planted_ring(seed),
                Preset::Performance => SynthSpec::performance(seed),
            };
            let dataset = build_dataset(generate(&spec).records, &id)?;
            let meta = Store::create(&cli.data_dir)?.save(&dataset, "synthetic")?;
            println!("stored {} synthetic transactions as {}", meta.transactions, meta.id);
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
