//! On-disk cache of eigenpairs keyed by a digest of everything that produced them.
//!
//! Large payloads use a little-endian binary container:
//! magic, format version, key, `count`, `dim`, `count_negative`, degeneracy gap,
//! eigenvalues, residuals, eigenvectors as (re, im) pairs, then a SHA-256 of all preceding bytes.
//! Small payloads are written as JSON carrying the same header fields.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

use crate::eigensolve::SpectralData;
use crate::error::{Error, Result};
use crate::operators::C64;

pub const CACHE_DIR_ENV: &str = "ORBMAG_CACHE_DIR";
pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"ORBMAGSP";
const JSON_TAG: &str = "orbmag-spectral";
/// Payloads with at most this many vector entries go to JSON.
const JSON_LIMIT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey([u8; 32]);

impl CacheKey {
    pub fn of(inputs: &impl Serialize) -> Result<Self> {
        let mut hasher = Sha256::new();
        hasher.update(MAGIC);
        hasher.update(FORMAT_VERSION.to_le_bytes());
        hasher.update(serde_json::to_vec(inputs)?);
        Ok(Self(hasher.finalize().into()))
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
}

#[derive(Debug, Clone)]
pub struct SpectralCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct JsonPayload {
    format: String,
    version: u32,
    key: String,
    count: usize,
    dim: usize,
    count_negative: usize,
    degeneracy_gap: f64,
    eigenvalues: Vec<f64>,
    residuals: Vec<f64>,
    eigenvectors: Vec<Vec<[f64; 2]>>,
}

impl SpectralCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// The directory named by the environment variable, else `fallback`.
    pub fn from_env(fallback: &Path) -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::new(dir),
            _ => Self::new(fallback),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.spec", key.hex()))
    }

    /// `None` when absent; unreadable or corrupted entries are logged and treated as absent.
    pub fn load(&self, key: &CacheKey) -> Option<SpectralData> {
        let path = self.path(key);
        let bytes = fs::read(&path).ok()?;
        match decode(&bytes, key) {
            Ok(data) => Some(data),
            Err(e) => {
                log::warn!("ignoring corrupted cache entry {}: {e}", path.display());
                None
            }
        }
    }

    /// Writes to a temporary file and renames it into place.
    pub fn store(&self, key: &CacheKey, data: &SpectralData) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path(key);
        let tmp = self.dir.join(format!(".{}.{}.tmp", key.hex(), std::process::id()));
        fs::write(&tmp, encode(data, key)?)?;
        fs::rename(&tmp, &path).map_err(|e| {
            let _ = fs::remove_file(&tmp);
            Error::Io(e)
        })
    }

    pub fn get_or_compute(
        &self,
        inputs: &impl Serialize,
        compute: impl FnOnce() -> Result<SpectralData>,
    ) -> Result<(SpectralData, CacheStatus)> {
        let key = CacheKey::of(inputs)?;
        if let Some(data) = self.load(&key) {
            log::info!("cache hit {}", key.hex());
            return Ok((data, CacheStatus::Hit));
        }
        log::info!("cache miss {}", key.hex());
        let data = compute()?;
        if let Err(e) = self.store(&key, &data) {
            log::warn!("could not write cache entry {}: {e}", key.hex());
        }
        Ok((data, CacheStatus::Miss))
    }
}

fn encode(data: &SpectralData, key: &CacheKey) -> Result<Vec<u8>> {
    let count = data.len();
    let dim = data.dimension();
    if count * dim <= JSON_LIMIT {
        let payload = JsonPayload {
            format: JSON_TAG.into(),
            version: FORMAT_VERSION,
            key: key.hex(),
            count,
            dim,
            count_negative: data.count_negative,
            degeneracy_gap: data.degeneracy_gap,
            eigenvalues: data.eigenvalues.clone(),
            residuals: data.residuals.clone(),
            eigenvectors: data.eigenvectors.iter().map(|v| v.iter().map(|z| [z.re, z.im]).collect()).collect(),
        };
        return Ok(serde_json::to_vec(&payload)?);
    }
    let mut out = Vec::with_capacity(8 * (6 + 2 * count + 2 * count * dim) + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&key.0);
    for n in [count, dim, data.count_negative] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    out.extend_from_slice(&data.degeneracy_gap.to_le_bytes());
    for v in data.eigenvalues.iter().chain(&data.residuals) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for z in data.eigenvectors.iter().flatten() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    let checksum: [u8; 32] = Sha256::digest(&out).into();
    out.extend_from_slice(&checksum);
    Ok(out)
}

/// Reason an entry could not be read back.
type Decoded<T> = std::result::Result<T, String>;

fn corrupt(reason: &str) -> String {
    reason.to_string()
}

fn decode(bytes: &[u8], key: &CacheKey) -> Decoded<SpectralData> {
    if bytes.starts_with(MAGIC) {
        decode_binary(bytes, key)
    } else {
        decode_json(bytes, key)
    }
}

fn decode_json(bytes: &[u8], key: &CacheKey) -> Decoded<SpectralData> {
    let p: JsonPayload = serde_json::from_slice(bytes).map_err(|e| corrupt(&e.to_string()))?;
    if p.format != JSON_TAG || p.version != FORMAT_VERSION || p.key != key.hex() {
        return Err(corrupt("header mismatch"));
    }
    if p.eigenvalues.len() != p.count
        || p.residuals.len() != p.count
        || p.eigenvectors.len() != p.count
        || p.eigenvectors.iter().any(|v| v.len() != p.dim)
    {
        return Err(corrupt("payload size mismatch"));
    }
    let vectors = p
        .eigenvectors
        .into_iter()
        .map(|v| v.into_iter().map(|[re, im]| C64::new(re, im)).collect())
        .collect();
    Ok(assemble(p.eigenvalues, vectors, p.residuals, p.count_negative, p.degeneracy_gap))
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Decoded<&[u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated"))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u64(&mut self) -> Decoded<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn f64(&mut self) -> Decoded<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }
}

fn decode_binary(bytes: &[u8], key: &CacheKey) -> Decoded<SpectralData> {
    if bytes.len() < MAGIC.len() + 4 + 32 + 32 {
        return Err(corrupt("truncated"));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader { bytes: body, at: MAGIC.len() };
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("four bytes"));
    if version != FORMAT_VERSION {
        return Err(corrupt(&format!("format version {version}")));
    }
    if r.take(32)? != key.0 {
        return Err(corrupt("key mismatch"));
    }
    let count = r.u64()? as usize;
    let dim = r.u64()? as usize;
    let count_negative = r.u64()? as usize;
    let degeneracy_gap = r.f64()?;
    let expected = count.checked_mul(dim).and_then(|n| n.checked_mul(16)).and_then(|n| n.checked_add(16 * count));
    if expected != Some(body.len() - r.at) {
        return Err(corrupt("payload size mismatch"));
    }
    let eigenvalues = (0..count).map(|_| r.f64()).collect::<Decoded<Vec<_>>>()?;
    let residuals = (0..count).map(|_| r.f64()).collect::<Decoded<Vec<_>>>()?;
    let mut vectors = Vec::with_capacity(count);
    for _ in 0..count {
        let v = (0..dim).map(|_| Ok(C64::new(r.f64()?, r.f64()?))).collect::<Decoded<Vec<_>>>()?;
        vectors.push(v);
    }
    Ok(assemble(eigenvalues, vectors, residuals, count_negative, degeneracy_gap))
}

fn assemble(
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<C64>>,
    residuals: Vec<f64>,
    count_negative: usize,
    degeneracy_gap: f64,
) -> SpectralData {
    SpectralData {
        eigenvalues,
        eigenvectors,
        residuals,
        count_negative,
        degeneracy_gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(count: usize, dim: usize) -> SpectralData {
        let vectors = (0..count)
            .map(|i| (0..dim).map(|j| C64::new(i as f64 + 0.25 * j as f64, -(j as f64))).collect())
            .collect();
        SpectralData::new(
            (0..count).map(|i| -3.0 + i as f64).collect(),
            vectors,
            vec![1e-12; count],
            1e-9,
            1e-6,
        )
    }

    #[test]
    fn round_trips_both_containers() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SpectralCache::new(dir.path());
        for (count, dim) in [(2, 8), (3, 400)] {
            let data = sample(count, dim);
            let key = CacheKey::of(&(count, dim)).unwrap();
            cache.store(&key, &data).unwrap();
            assert_eq!(cache.load(&key).unwrap(), data);
        }
    }

    #[test]
    fn corrupted_entry_is_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SpectralCache::new(dir.path());
        let data = sample(3, 400);
        let (_, status) = cache.get_or_compute(&"inputs", || Ok(data.clone())).unwrap();
        assert_eq!(status, CacheStatus::Miss);
        let (_, status) = cache.get_or_compute(&"inputs", || unreachable!()).unwrap();
        assert_eq!(status, CacheStatus::Hit);

        let key = CacheKey::of(&"inputs").unwrap();
        let path = cache.path(&key);
        let mut bytes = fs::read(&path).unwrap();
        let middle = bytes.len() / 2;
        bytes[middle] ^= 0xff;
        fs::write(&path, bytes).unwrap();
        assert!(cache.load(&key).is_none());
        let (again, status) = cache.get_or_compute(&"inputs", || Ok(data.clone())).unwrap();
        assert_eq!((again, status), (data, CacheStatus::Miss));
    }

    #[test]
    fn keys_follow_inputs() {
        assert_eq!(CacheKey::of(&(1, 2.0)).unwrap(), CacheKey::of(&(1, 2.0)).unwrap());
        assert_ne!(CacheKey::of(&(1, 2.0)).unwrap(), CacheKey::of(&(1, 2.5)).unwrap());
    }
}
