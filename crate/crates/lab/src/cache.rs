//! On-disk cache of orthonormal bases keyed by the content hash of the
//! section space and Gram options, with least-recently-used eviction.

use std::fs;
use std::path::{Path, PathBuf};

use equilab::l2::{basis_key, decode_basis, encode_basis, GramSpec, OrthoBasis, SectionSpace};
use equilab::LabError;
use sha2::{Digest, Sha256};

use crate::error::CliError;

const MANIFEST: &str = "manifest.tsv";
const EXT: &str = "bin";

/// Cache location: `LAB_CACHE_DIR`, else `.lab-cache` in the working directory.
pub fn default_dir() -> PathBuf {
    std::env::var_os("LAB_CACHE_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".lab-cache"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    key: String,
    bytes: u64,
    last_used: u64,
}

/// What happened when a basis was requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheEvent {
    Hit,
    Miss,
    /// The stored payload failed its checksum or decoding and was replaced.
    Repaired,
    Disabled,
}

#[derive(Debug)]
pub struct Cache {
    dir: Option<PathBuf>,
}

fn io(e: std::io::Error, path: &Path) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read_manifest(dir: &Path) -> Result<Vec<Entry>, CliError> {
    let path = dir.join(MANIFEST);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(e, &path)),
    };
    Ok(text
        .lines()
        .filter_map(|l| {
            let mut f = l.split('\t');
            Some(Entry { key: f.next()?.to_string(), bytes: f.next()?.parse().ok()?, last_used: f.next()?.parse().ok()? })
        })
        .collect())
}

fn write_manifest(dir: &Path, entries: &[Entry]) -> Result<(), CliError> {
    let text: String = entries.iter().map(|e| format!("{}\t{}\t{}\n", e.key, e.bytes, e.last_used)).collect();
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| io(e, &path))
}

/// Payload followed by its SHA-256 digest.
fn seal(payload: Vec<u8>) -> Vec<u8> {
    let digest = Sha256::digest(&payload);
    let mut out = payload;
    out.extend_from_slice(&digest);
    out
}

fn unseal(bytes: &[u8]) -> Result<&[u8], LabError> {
    if bytes.len() < 32 {
        return Err(LabError::CacheCorrupt("file shorter than its checksum".into()));
    }
    let (payload, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(payload).as_slice() != digest {
        return Err(LabError::CacheCorrupt("checksum mismatch".into()));
    }
    Ok(payload)
}

impl Cache {
    pub fn open(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| io(e, &dir))?;
        Ok(Cache { dir: Some(dir) })
    }

    pub fn disabled() -> Self {
        Cache { dir: None }
    }

    fn touch(dir: &Path, key: &str, bytes: u64) -> Result<(), CliError> {
        let mut entries = read_manifest(dir)?;
        let clock = entries.iter().map(|e| e.last_used).max().unwrap_or(0) + 1;
        match entries.iter_mut().find(|e| e.key == key) {
            Some(e) => {
                e.bytes = bytes;
                e.last_used = clock;
            }
            None => entries.push(Entry { key: key.to_string(), bytes, last_used: clock }),
        }
        write_manifest(dir, &entries)
    }

    /// Loads the basis of `space` or computes and stores it.
    pub fn basis(&self, space: &SectionSpace, spec: &GramSpec) -> Result<(OrthoBasis, CacheEvent), CliError> {
        let Some(dir) = &self.dir else {
            return Ok((OrthoBasis::compute(space, spec)?, CacheEvent::Disabled));
        };
        let key = basis_key(space, spec);
        let path = dir.join(format!("{key}.{EXT}"));
        let mut event = CacheEvent::Miss;
        if let Ok(bytes) = fs::read(&path) {
            let loaded = unseal(&bytes).and_then(|payload| decode_basis(space, spec, payload));
            match loaded {
                Ok(b) => {
                    Cache::touch(dir, &key, bytes.len() as u64)?;
                    return Ok((b, CacheEvent::Hit));
                }
                Err(LabError::CacheCorrupt(_)) | Err(LabError::InvalidInput(_)) => event = CacheEvent::Repaired,
                Err(e) => return Err(e.into()),
            }
        }
        let basis = OrthoBasis::compute(space, spec)?;
        let bytes = seal(encode_basis(&basis));
        fs::write(&path, &bytes).map_err(|e| io(e, &path))?;
        Cache::touch(dir, &key, bytes.len() as u64)?;
        Ok((basis, event))
    }
}

/// Outcome of a garbage-collection pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GcReport {
    pub evicted: Vec<String>,
    pub freed_bytes: u64,
    pub remaining_bytes: u64,
}

/// Evicts least-recently-used entries until the cache fits in `max_bytes`.
/// Files missing from the manifest count as oldest.
pub fn cache_gc(dir: &Path, max_bytes: u64) -> Result<GcReport, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Io(format!("{}: cache directory does not exist", dir.display())));
    }
    let mut entries = read_manifest(dir)?;
    let listing = fs::read_dir(dir).map_err(|e| io(e, dir))?;
    let mut on_disk = Vec::new();
    for item in listing {
        let item = item.map_err(|e| io(e, dir))?;
        let path = item.path();
        if path.extension().and_then(|e| e.to_str()) != Some(EXT) {
            continue;
        }
        let key = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let bytes = item.metadata().map_err(|e| io(e, &path))?.len();
        on_disk.push((key, bytes));
    }
    entries.retain(|e| on_disk.iter().any(|(k, _)| *k == e.key));
    for (key, bytes) in &on_disk {
        match entries.iter_mut().find(|e| e.key == *key) {
            Some(e) => e.bytes = *bytes,
            None => entries.push(Entry { key: key.clone(), bytes: *bytes, last_used: 0 }),
        }
    }
    entries.sort_by(|a, b| a.last_used.cmp(&b.last_used).then_with(|| a.key.cmp(&b.key)));
    let mut total: u64 = entries.iter().map(|e| e.bytes).sum();
    let mut evicted = Vec::new();
    let mut freed = 0;
    while total > max_bytes && !entries.is_empty() {
        let e = entries.remove(0);
        let path = dir.join(format!("{}.{EXT}", e.key));
        fs::remove_file(&path).map_err(|err| io(err, &path))?;
        total -= e.bytes;
        freed += e.bytes;
        evicted.push(e.key);
    }
    write_manifest(dir, &entries)?;
    Ok(GcReport { evicted, freed_bytes: freed, remaining_bytes: total })
}
