//! Content-addressed on-disk cache for universal data.
//!
//! A cache directory holds `manifest.json` and one file per entry, named by
//! the SHA-256 of the entry's canonical parameters. The manifest records each
//! file's checksum and format version; a checksum mismatch moves the file to
//! `quarantine/` and the caller recomputes. Tables are expanded bracket by
//! bracket with periodic checkpoints, so an interrupted expansion resumes
//! from the longest cached prefix.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::genfunc::{
    decode_table, encode_table, CoefficientTable, Expander, TableParams, FORMAT_VERSION,
};

/// Environment variable overriding the cache directory.
pub const CACHE_DIR_ENV: &str = "MBDOS_CACHE_DIR";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const QUARANTINE_DIR: &str = "quarantine";
pub const MANIFEST_VERSION: u32 = 1;
/// Version of JSON payloads (sector flows, transfer matrices).
pub const JSON_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryKind {
    SectorFlow,
    Tmatrix,
    CoeffTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub kind: EntryKind,
    pub params: serde_json::Value,
    pub file: String,
    /// SHA-256 of the file, hex.
    pub checksum: String,
    pub version: u32,
    pub size: u64,
    /// Seconds since the Unix epoch.
    pub created: u64,
    pub last_used: u64,
    /// Names of runs that keep this entry alive through garbage collection.
    #[serde(default)]
    pub pins: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub version: u32,
    pub entries: BTreeMap<String, ManifestEntry>,
}

impl Default for CacheManifest {
    fn default() -> Self {
        CacheManifest {
            version: MANIFEST_VERSION,
            entries: BTreeMap::new(),
        }
    }
}

/// Instrumentation counters for one [`Cache`] handle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    /// Generating-function brackets multiplied by this handle.
    pub brackets_computed: u64,
    /// Brackets skipped by resuming from a cached prefix.
    pub brackets_resumed: u64,
    pub quarantined: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeepPolicy {
    /// Remove unpinned entries unused for longer than this many seconds.
    pub max_age_secs: Option<u64>,
    /// Remove least recently used unpinned entries until the cache is at
    /// most this large.
    pub max_total_bytes: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GcReport {
    pub removed: Vec<String>,
    pub quarantined: Vec<String>,
    pub kept: usize,
    pub bytes_kept: u64,
}

pub fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Key of a JSON-valued entry.
pub fn json_key(kind: EntryKind, params: &serde_json::Value) -> String {
    sha256_hex(format!("{kind:?}/v{JSON_VERSION}/{params}").as_bytes())
}

pub struct Cache {
    dir: PathBuf,
    manifest: CacheManifest,
    stats: CacheStats,
    pin: Option<String>,
}

impl Cache {
    /// Opens (creating if needed) the cache in `dir`. A manifest written by
    /// another format version is rejected.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let path = dir.join(MANIFEST_FILE);
        let manifest = if path.exists() {
            let m: CacheManifest = serde_json::from_slice(&fs::read(&path)?)?;
            if m.version != MANIFEST_VERSION {
                return Err(Error::Version {
                    found: m.version,
                    expected: MANIFEST_VERSION,
                });
            }
            m
        } else {
            CacheManifest::default()
        };
        Ok(Cache {
            dir,
            manifest,
            stats: CacheStats::default(),
            pin: None,
        })
    }

    /// The directory named by `MBDOS_CACHE_DIR` if set, else `fallback`.
    pub fn resolve_dir(fallback: Option<&Path>) -> Option<PathBuf> {
        std::env::var_os(CACHE_DIR_ENV)
            .map(PathBuf::from)
            .or_else(|| fallback.map(Path::to_path_buf))
    }

    /// Entries stored or used through this handle are pinned by `run`.
    pub fn pin_as(&mut self, run: impl Into<String>) {
        self.pin = Some(run.into());
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &CacheManifest {
        &self.manifest
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    fn save_manifest(&self) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(&self.manifest)?;
        write_atomic(&self.dir.join(MANIFEST_FILE), &bytes)
    }

    fn touch(&mut self, key: &str) {
        let pin = self.pin.clone();
        if let Some(e) = self.manifest.entries.get_mut(key) {
            e.last_used = now_secs().max(e.last_used);
            if let Some(p) = pin {
                e.pins.insert(p);
            }
        }
    }

    fn quarantine(&mut self, key: &str) -> Result<()> {
        if let Some(e) = self.manifest.entries.remove(key) {
            let qdir = self.dir.join(QUARANTINE_DIR);
            fs::create_dir_all(&qdir)?;
            let src = self.dir.join(&e.file);
            if src.exists() {
                fs::rename(&src, qdir.join(&e.file))?;
            }
            self.stats.quarantined += 1;
            self.save_manifest()?;
        }
        Ok(())
    }

    /// Reads and verifies an entry's payload. Checksum or version failures
    /// quarantine the entry and are returned as errors.
    fn read_verified(&mut self, key: &str) -> Result<Option<Vec<u8>>> {
        let Some(entry) = self.manifest.entries.get(key).cloned() else {
            return Ok(None);
        };
        let expected_version = match entry.kind {
            EntryKind::CoeffTable => FORMAT_VERSION,
            _ => JSON_VERSION,
        };
        if entry.version != expected_version {
            return Err(Error::Version {
                found: entry.version,
                expected: expected_version,
            });
        }
        let bytes = match fs::read(self.dir.join(&entry.file)) {
            Ok(b) => b,
            Err(_) => {
                self.quarantine(key)?;
                return Err(Error::Checksum(format!(
                    "cache entry {key} is missing its file"
                )));
            }
        };
        if sha256_hex(&bytes) != entry.checksum {
            self.quarantine(key)?;
            return Err(Error::Checksum(format!(
                "cache entry {key} ({})",
                entry.file
            )));
        }
        Ok(Some(bytes))
    }

    fn store(
        &mut self,
        key: String,
        kind: EntryKind,
        params: serde_json::Value,
        bytes: &[u8],
        version: u32,
    ) -> Result<()> {
        let ext = match kind {
            EntryKind::CoeffTable => "tab",
            _ => "json",
        };
        let file = format!("{key}.{ext}");
        write_atomic(&self.dir.join(&file), bytes)?;
        let now = now_secs();
        let mut pins = self
            .manifest
            .entries
            .get(&key)
            .map(|e| e.pins.clone())
            .unwrap_or_default();
        if let Some(p) = &self.pin {
            pins.insert(p.clone());
        }
        self.manifest.entries.insert(
            key,
            ManifestEntry {
                kind,
                params,
                file,
                checksum: sha256_hex(bytes),
                version,
                size: bytes.len() as u64,
                created: now,
                last_used: now,
                pins,
            },
        );
        self.save_manifest()
    }

    fn remove(&mut self, key: &str) -> Result<()> {
        if let Some(e) = self.manifest.entries.remove(key) {
            let _ = fs::remove_file(self.dir.join(e.file));
        }
        Ok(())
    }

    /// A cached table with exactly these parameters.
    pub fn load_table(&mut self, params: &TableParams) -> Result<Option<CoefficientTable>> {
        let key = params.content_hash();
        match self.read_verified(&key)? {
            Some(bytes) => {
                let table = decode_table(&bytes)?;
                if table.params() != params {
                    self.quarantine(&key)?;
                    return Err(Error::Checksum(format!(
                        "cache entry {key} holds other parameters"
                    )));
                }
                self.touch(&key);
                self.save_manifest()?;
                Ok(Some(table))
            }
            None => Ok(None),
        }
    }

    pub fn store_table(&mut self, table: &CoefficientTable) -> Result<String> {
        let key = table.params().content_hash();
        let params = serde_json::to_value(table.params())?;
        self.store(
            key.clone(),
            EntryKind::CoeffTable,
            params,
            &encode_table(table),
            FORMAT_VERSION,
        )?;
        Ok(key)
    }

    /// Like [`Cache::load_table`], but a corrupt entry counts as a miss
    /// after being quarantined.
    fn load_table_or_quarantine(
        &mut self,
        params: &TableParams,
    ) -> Result<Option<CoefficientTable>> {
        match self.load_table(params) {
            Err(Error::Checksum(_)) | Err(Error::Format(_)) => Ok(None),
            other => other,
        }
    }

    /// The complete table for `(L, N_max, R, S)`, loaded if cached, else
    /// expanded from the longest cached prefix. Every `checkpoint_every`
    /// brackets the partial product is cached; checkpoints are dropped once
    /// the full table is stored.
    pub fn table(
        &mut self,
        l: u32,
        n_max: u32,
        cap: u32,
        sectors: &[u32],
        checkpoint_every: Option<u32>,
    ) -> Result<CoefficientTable> {
        let full = TableParams::new(l, n_max, cap, sectors, 0..l)?;
        if let Some(t) = self.load_table_or_quarantine(&full)? {
            self.stats.hits += 1;
            return Ok(t);
        }
        self.stats.misses += 1;
        let mut prefixes: Vec<TableParams> = (1..l)
            .rev()
            .map(|j| TableParams::new(l, n_max, cap, sectors, 0..j))
            .collect::<Result<_>>()?;
        prefixes.retain(|p| self.manifest.entries.contains_key(&p.content_hash()));
        let mut expander = None;
        for p in &prefixes {
            if let Some(t) = self.load_table_or_quarantine(p)? {
                self.stats.brackets_resumed += p.level_end as u64;
                expander = Some(Expander::resume(&t)?);
                break;
            }
        }
        let mut expander = match expander {
            Some(e) => e,
            None => Expander::new(l, n_max, cap, sectors, 0)?,
        };
        while !expander.is_done() {
            expander.step()?;
            self.stats.brackets_computed += 1;
            if let Some(every) = checkpoint_every.filter(|&e| e > 0) {
                let at = expander.next_level();
                if at % every == 0 && at < l {
                    self.store_table(&expander.snapshot())?;
                }
            }
        }
        let table = expander.finish();
        self.store_table(&table)?;
        for p in &prefixes_of(l, n_max, cap, sectors)? {
            let key = p.content_hash();
            if self
                .manifest
                .entries
                .get(&key)
                .is_some_and(|e| e.pins.is_empty())
            {
                self.remove(&key)?;
            }
        }
        self.save_manifest()?;
        Ok(table)
    }

    /// A JSON payload by kind and parameters, computed and stored on a miss.
    pub fn json(
        &mut self,
        kind: EntryKind,
        params: serde_json::Value,
        compute: impl FnOnce() -> Result<serde_json::Value>,
    ) -> Result<serde_json::Value> {
        let key = json_key(kind, &params);
        match self.read_verified(&key) {
            Ok(Some(bytes)) => {
                if let Ok(v) = serde_json::from_slice(&bytes) {
                    self.stats.hits += 1;
                    self.touch(&key);
                    self.save_manifest()?;
                    return Ok(v);
                }
                self.quarantine(&key)?;
            }
            Ok(None) | Err(Error::Checksum(_)) => {}
            Err(e) => return Err(e),
        }
        self.stats.misses += 1;
        let value = compute()?;
        let bytes = serde_json::to_vec_pretty(&value)?;
        self.store(key, kind, params, &bytes, JSON_VERSION)?;
        Ok(value)
    }

    /// Checks every entry's checksum; corrupt entries are quarantined and
    /// their keys returned.
    pub fn verify(&mut self) -> Result<Vec<String>> {
        let keys: Vec<String> = self.manifest.entries.keys().cloned().collect();
        let mut bad = Vec::new();
        for key in keys {
            match self.read_verified(&key) {
                Ok(_) => {}
                Err(Error::Checksum(_)) => bad.push(key),
                Err(e) => return Err(e),
            }
        }
        Ok(bad)
    }

    pub fn gc(&mut self, policy: &KeepPolicy) -> Result<GcReport> {
        self.gc_at(policy, now_secs())
    }

    /// Garbage collection with an explicit clock. Pinned entries are never
    /// removed; collecting twice with the same policy and clock is a no-op
    /// the second time.
    pub fn gc_at(&mut self, policy: &KeepPolicy, now: u64) -> Result<GcReport> {
        let quarantined = self.verify()?;
        let mut removed = Vec::new();
        if let Some(age) = policy.max_age_secs {
            let stale: Vec<String> = self
                .manifest
                .entries
                .iter()
                .filter(|(_, e)| e.pins.is_empty() && now.saturating_sub(e.last_used) > age)
                .map(|(k, _)| k.clone())
                .collect();
            for k in stale {
                self.remove(&k)?;
                removed.push(k);
            }
        }
        if let Some(limit) = policy.max_total_bytes {
            let mut total: u64 = self.manifest.entries.values().map(|e| e.size).sum();
            let mut lru: Vec<(u64, String, u64)> = self
                .manifest
                .entries
                .iter()
                .filter(|(_, e)| e.pins.is_empty())
                .map(|(k, e)| (e.last_used, k.clone(), e.size))
                .collect();
            lru.sort();
            for (_, k, size) in lru {
                if total <= limit {
                    break;
                }
                self.remove(&k)?;
                total -= size;
                removed.push(k);
            }
        }
        self.save_manifest()?;
        Ok(GcReport {
            removed,
            quarantined,
            kept: self.manifest.entries.len(),
            bytes_kept: self.manifest.entries.values().map(|e| e.size).sum(),
        })
    }
}

fn prefixes_of(l: u32, n_max: u32, cap: u32, sectors: &[u32]) -> Result<Vec<TableParams>> {
    (1..l)
        .map(|j| TableParams::new(l, n_max, cap, sectors, 0..j))
        .collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
