//! On-disk trajectory stores.
//!
//! ```text
//! <run>/manifest        TOML: format version, config echo, block hashes
//! <run>/snap_<k>.bin    snapshot k, little-endian f64, [particle][component]
//! <run>/incr_<k>.bin    Wiener increments of step k, [particle][axis]
//! <run>/copy_<k>.bin    independent ensemble at snapshot k
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::integrator::{SimulationConfig, TrajectoryStore};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub file: String,
    pub values: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub format_version: u32,
    pub created_at: String,
    pub snapshot_steps: Vec<usize>,
    pub times: Vec<f64>,
    pub snapshots: Vec<BlockEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub increments: Vec<BlockEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub copies: Vec<BlockEntry>,
    pub config: SimulationConfig,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn encode(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn decode(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Tracks files written so far and removes them unless committed.
struct Transaction {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Transaction {
    fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        let result = fs::write(&path, bytes);
        self.written.push(path.clone());
        result.map_err(|e| Error::io(path, e))
    }
}

impl Drop for Transaction {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn check_shapes(store: &TrajectoryStore) -> Result<()> {
    let n = store.particles();
    if n == 0 || store.snapshots.iter().any(|s| s.is_empty()) {
        return Err(Error::Format("refusing to save a snapshot with N = 0 particles".into()));
    }
    if store.snapshots.is_empty() {
        return Err(Error::Format("refusing to save a store without snapshots".into()));
    }
    if store.snapshots.len() != store.times.len() || store.times.len() != store.snapshot_steps.len() {
        return Err(Error::Format("snapshot, time and step lists differ in length".into()));
    }
    if store.times.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Format("snapshot times are not strictly increasing".into()));
    }
    let w = store.width();
    let bad = |blocks: &[Vec<f64>], len: usize| blocks.iter().position(|b| b.len() != len);
    if let Some(k) = bad(&store.snapshots, n * w) {
        return Err(Error::Format(format!("snapshot {k} does not hold N x 2d values")));
    }
    if let Some(c) = &store.copy_snapshots {
        if c.len() != store.snapshots.len() || bad(c, n * w).is_some() {
            return Err(Error::Format("copy ensemble does not match the snapshot layout".into()));
        }
    }
    if let Some(incs) = &store.increments {
        if incs.len() != store.config.steps || bad(incs, n * store.d()).is_some() {
            return Err(Error::Format("increments are not steps x N x d".into()));
        }
    }
    Ok(())
}

/// Writes `store` under `dir`. Re-saving over an existing store keeps its
/// creation timestamp.
pub fn save_store(store: &TrajectoryStore, dir: impl AsRef<Path>) -> Result<StoreManifest> {
    let dir = dir.as_ref();
    let created_at = read_manifest(dir)
        .ok()
        .map(|m| m.created_at)
        .unwrap_or_else(now_rfc3339);
    save_store_at(store, dir, &created_at)
}

/// [`save_store`] with an explicit creation timestamp.
pub fn save_store_at(store: &TrajectoryStore, dir: impl AsRef<Path>, created_at: &str) -> Result<StoreManifest> {
    let dir = dir.as_ref();
    check_shapes(store)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tx = Transaction {
        written: Vec::new(),
        committed: false,
    };
    let mut write_blocks = |prefix: &str, blocks: &[Vec<f64>]| -> Result<Vec<BlockEntry>> {
        blocks
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let file = format!("{prefix}_{k}.bin");
                let bytes = encode(b);
                let entry = BlockEntry {
                    file: file.clone(),
                    values: b.len(),
                    sha256: sha256_hex(&bytes),
                };
                tx.write(dir.join(file), &bytes)?;
                Ok(entry)
            })
            .collect()
    };
    let snapshots = write_blocks("snap", &store.snapshots)?;
    let increments = match &store.increments {
        Some(i) => write_blocks("incr", i)?,
        None => Vec::new(),
    };
    let copies = match &store.copy_snapshots {
        Some(c) => write_blocks("copy", c)?,
        None => Vec::new(),
    };
    let manifest = StoreManifest {
        format_version: FORMAT_VERSION,
        created_at: created_at.to_string(),
        snapshot_steps: store.snapshot_steps.clone(),
        times: store.times.clone(),
        snapshots,
        increments,
        copies,
        config: store.config.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format(format!("cannot encode manifest: {e}")))?;
    tx.write(dir.join(MANIFEST), text.as_bytes())?;
    tx.committed = true;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<StoreManifest> {
    let path = dir.as_ref().join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    #[derive(Deserialize)]
    struct Version {
        format_version: u32,
    }
    let v: Version =
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {}", path.display(), e.message())))?;
    if v.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported store format version {} (this build reads version {FORMAT_VERSION})",
            v.format_version
        )));
    }
    toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {}", path.display(), e.message())))
}

fn load_block(dir: &Path, entry: &BlockEntry) -> Result<Vec<f64>> {
    let path = dir.join(&entry.file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() != entry.values * 8 {
        return Err(Error::Format(format!(
            "block {} is truncated or oversized: {} bytes, expected {}",
            entry.file,
            bytes.len(),
            entry.values * 8
        )));
    }
    if sha256_hex(&bytes) != entry.sha256 {
        return Err(Error::Format(format!("block {} fails its hash check", entry.file)));
    }
    Ok(decode(&bytes))
}

pub fn load_store(dir: impl AsRef<Path>) -> Result<TrajectoryStore> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    let blocks = |entries: &[BlockEntry]| entries.iter().map(|e| load_block(dir, e)).collect::<Result<Vec<_>>>();
    let snapshots = blocks(&m.snapshots)?;
    let increments = if m.increments.is_empty() {
        None
    } else {
        Some(blocks(&m.increments)?)
    };
    let copy_snapshots = if m.copies.is_empty() {
        None
    } else {
        Some(blocks(&m.copies)?)
    };
    let store = TrajectoryStore {
        config: m.config,
        snapshot_steps: m.snapshot_steps,
        times: m.times,
        snapshots,
        increments,
        copy_snapshots,
    };
    check_shapes(&store)?;
    Ok(store)
}
