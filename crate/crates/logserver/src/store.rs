//! Persistence: tree metadata in redb, payloads in a content-addressed
//! blob directory.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use redb::{Database, Durability, ReadableTable, TableDefinition};
use swt_core::Digest;

use crate::LogError;

pub(crate) const LEAVES: TableDefinition<u64, &[u8]> = TableDefinition::new("leaves");
pub(crate) const ENTRIES: TableDefinition<u64, &[u8]> = TableDefinition::new("entries");
pub(crate) const PROMISES: TableDefinition<u64, &[u8]> = TableDefinition::new("promises");
pub(crate) const STRS: TableDefinition<u64, &[u8]> = TableDefinition::new("strs");
pub(crate) const WITHDRAWN: TableDefinition<u64, &[u8]> = TableDefinition::new("withdrawn");
pub(crate) const WITNESS: TableDefinition<u64, &[u8]> = TableDefinition::new("witness");

fn db_err(e: impl std::fmt::Display) -> LogError {
    LogError::Storage(e.to_string())
}

/// One entry's worth of metadata rows.
pub(crate) struct EntryRows<'a> {
    pub index: u64,
    pub leaf: Digest,
    pub entry_json: &'a [u8],
    pub promise_json: &'a [u8],
}

pub(crate) struct MetaStore {
    db: Database,
    path: PathBuf,
}

impl MetaStore {
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let db = Database::create(path).map_err(db_err)?;
        let txn = db.begin_write().map_err(db_err)?;
        {
            for def in [LEAVES, ENTRIES, PROMISES, STRS, WITHDRAWN, WITNESS] {
                txn.open_table(def).map_err(db_err)?;
            }
        }
        txn.commit().map_err(db_err)?;
        Ok(MetaStore { db, path: path.to_path_buf() })
    }

    pub fn file_size(&self) -> u64 {
        fs::metadata(&self.path).map_or(0, |m| m.len())
    }

    /// Bytes in pages the database has allocated. Unlike the file, which
    /// redb grows by doubling regions, this tracks the data.
    pub fn allocated_bytes(&self) -> Result<u64, LogError> {
        let txn = self.db.begin_write().map_err(db_err)?;
        let stats = txn.stats().map_err(db_err)?;
        let bytes = stats.allocated_pages() * stats.page_size() as u64;
        txn.abort().map_err(db_err)?;
        Ok(bytes)
    }

    pub fn append_entries(&self, rows: &[EntryRows<'_>], durable: bool) -> Result<(), LogError> {
        let mut txn = self.db.begin_write().map_err(db_err)?;
        if !durable {
            txn.set_durability(Durability::Eventual);
        }
        {
            let mut leaves = txn.open_table(LEAVES).map_err(db_err)?;
            let mut entries = txn.open_table(ENTRIES).map_err(db_err)?;
            let mut promises = txn.open_table(PROMISES).map_err(db_err)?;
            for r in rows {
                leaves.insert(r.index, r.leaf.as_bytes().as_slice()).map_err(db_err)?;
                entries.insert(r.index, r.entry_json).map_err(db_err)?;
                promises.insert(r.index, r.promise_json).map_err(db_err)?;
            }
        }
        txn.commit().map_err(db_err)
    }

    pub fn put(&self, table: TableDefinition<u64, &[u8]>, key: u64, value: &[u8]) -> Result<(), LogError> {
        let txn = self.db.begin_write().map_err(db_err)?;
        {
            let mut t = txn.open_table(table).map_err(db_err)?;
            t.insert(key, value).map_err(db_err)?;
        }
        txn.commit().map_err(db_err)
    }

    /// All rows of a table in key order.
    pub fn scan(&self, table: TableDefinition<u64, &[u8]>) -> Result<Vec<(u64, Vec<u8>)>, LogError> {
        let txn = self.db.begin_read().map_err(db_err)?;
        let t = txn.open_table(table).map_err(db_err)?;
        let mut out = Vec::new();
        for row in t.iter().map_err(db_err)? {
            let (k, v) = row.map_err(db_err)?;
            out.push((k.value(), v.value().to_vec()));
        }
        Ok(out)
    }
}

/// Content-addressed payload storage.
pub enum BlobStore {
    Dir(PathBuf),
    Memory(Mutex<HashMap<Digest, Vec<u8>>>),
}

impl BlobStore {
    pub fn dir(path: &Path) -> Result<Self, LogError> {
        fs::create_dir_all(path).map_err(db_err)?;
        Ok(BlobStore::Dir(path.to_path_buf()))
    }

    pub fn memory() -> Self {
        BlobStore::Memory(Mutex::new(HashMap::new()))
    }

    fn blob_path(dir: &Path, digest: &Digest) -> PathBuf {
        let hex = digest.to_hex();
        dir.join(&hex[..2]).join(&hex[2..])
    }

    pub fn put(&self, digest: &Digest, bytes: &[u8]) -> Result<(), LogError> {
        match self {
            BlobStore::Dir(dir) => {
                let path = Self::blob_path(dir, digest);
                if path.exists() {
                    return Ok(());
                }
                fs::create_dir_all(path.parent().expect("blob path has parent")).map_err(db_err)?;
                let tmp = path.with_extension("tmp");
                let mut f = fs::File::create(&tmp).map_err(db_err)?;
                f.write_all(bytes).map_err(db_err)?;
                f.sync_all().map_err(db_err)?;
                fs::rename(&tmp, &path).map_err(db_err)
            }
            BlobStore::Memory(map) => {
                map.lock().unwrap().entry(*digest).or_insert_with(|| bytes.to_vec());
                Ok(())
            }
        }
    }

    pub fn get(&self, digest: &Digest) -> Result<Option<Vec<u8>>, LogError> {
        match self {
            BlobStore::Dir(dir) => match fs::read(Self::blob_path(dir, digest)) {
                Ok(b) => Ok(Some(b)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(db_err(e)),
            },
            BlobStore::Memory(map) => Ok(map.lock().unwrap().get(digest).cloned()),
        }
    }

    pub fn remove(&self, digest: &Digest) -> Result<(), LogError> {
        match self {
            BlobStore::Dir(dir) => match fs::remove_file(Self::blob_path(dir, digest)) {
                Ok(()) => Ok(()),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
                Err(e) => Err(db_err(e)),
            },
            BlobStore::Memory(map) => {
                map.lock().unwrap().remove(digest);
                Ok(())
            }
        }
    }

    /// Sum of stored payload sizes.
    pub fn total_bytes(&self) -> u64 {
        match self {
            BlobStore::Dir(dir) => {
                let mut total = 0;
                for shard in fs::read_dir(dir).into_iter().flatten().flatten() {
                    for blob in fs::read_dir(shard.path()).into_iter().flatten().flatten() {
                        if blob.path().extension().is_none() {
                            total += blob.metadata().map_or(0, |m| m.len());
                        }
                    }
                }
                total
            }
            BlobStore::Memory(map) => map.lock().unwrap().values().map(|v| v.len() as u64).sum(),
        }
    }
}
