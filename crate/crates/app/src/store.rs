//! On-disk dataset cache.
//!
//! Each collection lives in `<root>/<id>/` as `dataset.bin`, a columnar
//! little-endian encoding of the indexed transactions, and `meta.json`.
//! Writers hold `<root>/<id>.lock` (created exclusively) and publish files
//! by renaming them into place, so readers never see partial writes.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use nftdisk_core::ingest::Transaction;
use nftdisk_core::{Address, AddressId, CollectionDataset, Origin, TokenId, TxStatus, Wei};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAGIC: &[u8; 8] = b"NFTDSK01";
const DATASET_FILE: &str = "dataset.bin";
const META_FILE: &str = "meta.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("data directory {0} does not exist")]
    DataDirMissing(PathBuf),
    #[error("invalid collection id {0:?} (use letters, digits, '-', '_' or '.')")]
    InvalidId(String),
    #[error("collection {0} not found")]
    NotFound(String),
    #[error("collection {0} is locked by another writer")]
    Locked(String),
    #[error("corrupt dataset file for {id}: {reason}")]
    Corrupt { id: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionMeta {
    pub id: String,
    pub transactions: usize,
    pub addresses: usize,
    pub tokens: usize,
    pub first_timestamp: u64,
    pub last_timestamp: u64,
    /// Where the data was ingested from.
    pub source: String,
}

impl CollectionMeta {
    pub fn describe(dataset: &CollectionDataset, source: &str) -> Self {
        let extent = dataset.time_extent();
        CollectionMeta {
            id: dataset.collection_id().to_string(),
            transactions: dataset.len(),
            addresses: dataset.addresses().len(),
            tokens: dataset.token_index().len(),
            first_timestamp: extent.start,
            last_timestamp: extent.end,
            source: source.to_string(),
        }
    }
}

pub fn validate_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.to_string()))
    }
}

/// Exclusive write access to one collection. Released on drop.
#[derive(Debug)]
pub struct CollectionLock {
    path: PathBuf,
}

impl Drop for CollectionLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Opens an existing data directory.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(StoreError::DataDirMissing(root));
        }
        Ok(Store { root })
    }

    /// Opens a data directory, creating it if needed.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn dataset_path(&self, id: &str) -> PathBuf {
        self.dir(id).join(DATASET_FILE)
    }

    pub fn lock(&self, id: &str) -> Result<CollectionLock, StoreError> {
        validate_id(id)?;
        let path = self.root.join(format!("{id}.lock"));
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(CollectionLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(StoreError::Locked(id.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    /// Metadata of every stored collection, sorted by id.
    pub fn list(&self) -> Result<Vec<CollectionMeta>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            let meta_path = entry.path().join(META_FILE);
            if !entry.file_type()?.is_dir() || !meta_path.is_file() {
                continue;
            }
            let text = fs::read_to_string(&meta_path)?;
            match serde_json::from_str::<CollectionMeta>(&text) {
                Ok(meta) => out.push(meta),
                Err(e) => log::warn!("skipping {}: {e}", meta_path.display()),
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    pub fn meta(&self, id: &str) -> Result<CollectionMeta, StoreError> {
        validate_id(id)?;
        let path = self.dir(id).join(META_FILE);
        let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StoreError::NotFound(id.to_string()),
            _ => e.into(),
        })?;
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt { id: id.to_string(), reason: e.to_string() })
    }

    pub fn load(&self, id: &str) -> Result<CollectionDataset, StoreError> {
        validate_id(id)?;
        let bytes = fs::read(self.dataset_path(id)).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StoreError::NotFound(id.to_string()),
            _ => e.into(),
        })?;
        decode(id, &bytes)
    }

    /// Writes `dataset` under its collection id, replacing any previous
    /// version. Takes the collection lock for the duration of the write.
    pub fn save(&self, dataset: &CollectionDataset, source: &str) -> Result<CollectionMeta, StoreError> {
        let id = dataset.collection_id();
        let _lock = self.lock(id)?;
        let dir = self.dir(id);
        fs::create_dir_all(&dir)?;
        let meta = CollectionMeta::describe(dataset, source);
        write_atomic(&dir.join(DATASET_FILE), &encode(dataset))?;
        let json = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
        write_atomic(&dir.join(META_FILE), &json)?;
        Ok(meta)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn encode(dataset: &CollectionDataset) -> Vec<u8> {
    let txs = dataset.transactions();
    let id = dataset.collection_id().as_bytes();
    let mut out = Vec::with_capacity(32 + id.len() + dataset.addresses().len() * 20 + txs.len() * 48);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(id.len() as u32).to_le_bytes());
    out.extend_from_slice(id);
    out.extend_from_slice(&(dataset.addresses().len() as u64).to_le_bytes());
    out.extend_from_slice(&(txs.len() as u64).to_le_bytes());
    for a in dataset.addresses() {
        out.extend_from_slice(&a.0);
    }
    txs.iter().for_each(|t| out.extend_from_slice(&t.timestamp.to_le_bytes()));
    txs.iter().for_each(|t| out.extend_from_slice(&t.token_id.0.to_le_bytes()));
    txs.iter().for_each(|t| out.extend_from_slice(&t.value.0.to_le_bytes()));
    txs.iter().for_each(|t| out.extend_from_slice(&t.from.0.to_le_bytes()));
    txs.iter().for_each(|t| out.extend_from_slice(&t.to.0.to_le_bytes()));
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.at.checked_add(n)?;
        let s = self.bytes.get(self.at..end)?;
        self.at = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

pub fn decode(id: &str, bytes: &[u8]) -> Result<CollectionDataset, StoreError> {
    let corrupt = |reason: &str| StoreError::Corrupt { id: id.to_string(), reason: reason.to_string() };
    let mut r = Reader { bytes, at: 0 };
    if r.take(8) != Some(MAGIC.as_slice()) {
        return Err(corrupt("bad magic"));
    }
    let id_len = r.u32().ok_or_else(|| corrupt("truncated header"))? as usize;
    let stored_id = r.take(id_len).and_then(|b| std::str::from_utf8(b).ok()).ok_or_else(|| corrupt("bad id"))?;
    let n_addr = r.u64().ok_or_else(|| corrupt("truncated header"))? as usize;
    let n_tx = r.u64().ok_or_else(|| corrupt("truncated header"))? as usize;
    let expected = n_addr.checked_mul(20).zip(n_tx.checked_mul(48)).and_then(|(a, t)| a.checked_add(t));
    if expected != Some(bytes.len() - r.at) {
        return Err(corrupt("length does not match header"));
    }
    let addresses: Vec<Address> = r
        .take(n_addr * 20)
        .expect("length checked")
        .chunks_exact(20)
        .map(|c| Address(c.try_into().expect("20 bytes")))
        .collect();
    fn column<'a>(r: &mut Reader<'a>, len: usize) -> &'a [u8] {
        r.take(len).expect("length checked")
    }
    let ts: Vec<u64> = column(&mut r, n_tx * 8).chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
    let tokens: Vec<u128> = column(&mut r, n_tx * 16).chunks_exact(16).map(|c| u128::from_le_bytes(c.try_into().unwrap())).collect();
    let values: Vec<u128> = column(&mut r, n_tx * 16).chunks_exact(16).map(|c| u128::from_le_bytes(c.try_into().unwrap())).collect();
    let from: Vec<u32> = column(&mut r, n_tx * 4).chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    let to: Vec<u32> = column(&mut r, n_tx * 4).chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    if from.iter().chain(&to).any(|&i| i as usize >= n_addr) {
        return Err(corrupt("address index out of range"));
    }
    let transactions = (0..n_tx)
        .map(|i| Transaction {
            timestamp: ts[i],
            token_id: TokenId(tokens[i]),
            value: Wei(values[i]),
            status: TxStatus::from_value(Wei(values[i])),
            from: AddressId(from[i]),
            to: AddressId(to[i]),
            origin: Origin::from_sender(&addresses[from[i] as usize]),
        })
        .collect();
    CollectionDataset::from_indexed(stored_id, addresses, transactions).map_err(|e| corrupt(&e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nftdisk_core::synth::{random_log, RandomLogSpec};

    fn dataset() -> CollectionDataset {
        let spec = RandomLogSpec { transactions: 300, addresses: 20, tokens: 30, start: 1_650_000_000, max_gap: 60, transfer_percent: 30 };
        nftdisk_core::build_dataset(random_log(3, &spec), "demo").unwrap()
    }

    #[test]
    fn encoding_round_trips() {
        let ds = dataset();
        assert_eq!(decode("demo", &encode(&ds)).unwrap(), ds);
    }

    #[test]
    fn truncated_files_are_rejected() {
        let bytes = encode(&dataset());
        assert!(matches!(decode("demo", &bytes[..bytes.len() - 1]), Err(StoreError::Corrupt { .. })));
        assert!(matches!(decode("demo", b"NOTADISK"), Err(StoreError::Corrupt { .. })));
    }

    #[test]
    fn save_list_load_and_lock() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(store.list().unwrap().is_empty());
        let ds = dataset();
        let meta = store.save(&ds, "unit").unwrap();
        assert_eq!(store.list().unwrap(), vec![meta.clone()]);
        assert_eq!(store.load("demo").unwrap(), ds);
        let held = store.lock("demo").unwrap();
        assert!(matches!(store.save(&ds, "again"), Err(StoreError::Locked(_))));
        drop(held);
        store.save(&ds, "again").unwrap();
        assert!(matches!(store.load("missing"), Err(StoreError::NotFound(_))));
        assert!(matches!(store.load("../etc"), Err(StoreError::InvalidId(_))));
        assert!(matches!(Store::open(dir.path().join("nope")), Err(StoreError::DataDirMissing(_))));
    }
}
