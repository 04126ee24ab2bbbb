//! Binary feature cache.
//!
//! Layout: magic `ABRF1`, a header line `model_name,feature_dim,count\n`,
//! then per record a `u32` little-endian byte length, the UTF-8 `sample_id`
//! and `feature_dim` little-endian `f64`s. A trailing little-endian `u64`
//! (first eight bytes of the SHA-256 of everything before it) closes the file.

use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{FeatureError, FeatureVector, ModelManifest};

pub const CACHE_MAGIC: &[u8; 5] = b"ABRF1";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub model_name: String,
    pub feature_dim: usize,
    pub vectors: Vec<FeatureVector>,
}

fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn encode(model_name: &str, feature_dim: usize, vectors: &[FeatureVector]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(64 + vectors.len() * (16 + feature_dim * 8));
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(format!("{model_name},{feature_dim},{}\n", vectors.len()).as_bytes());
    for v in vectors {
        let id = v.sample_id.as_bytes();
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id);
        for x in &v.values {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let sum = checksum(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    buf
}

/// Writes atomically (temporary file, then rename) and returns the checksum.
///
/// Panics if a vector's length differs from `feature_dim` or its model name
/// from `model_name`; callers build vectors from one model handle.
pub fn write_cache(
    path: &Path,
    model_name: &str,
    feature_dim: usize,
    vectors: &[FeatureVector],
) -> Result<u64, FeatureError> {
    for v in vectors {
        assert_eq!(v.values.len(), feature_dim, "vector length must equal feature_dim");
        assert_eq!(v.model_name, model_name, "vector from a different model");
    }
    let bytes = encode(model_name, feature_dim, vectors);
    let sum = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().expect("8 bytes"));

    let io = |source| FeatureError::Io { path: path.to_path_buf(), source };
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(&bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(io)?;
    Ok(sum)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }
}

pub fn read_cache(path: &Path) -> Result<FeatureCache, FeatureError> {
    let bytes = std::fs::read(path).map_err(|source| FeatureError::Io { path: path.to_path_buf(), source })?;
    let format_err = |message: &str| FeatureError::CacheFormat {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    if bytes.len() < CACHE_MAGIC.len() || &bytes[..CACHE_MAGIC.len()] != CACHE_MAGIC {
        return Err(format_err("missing ABRF1 magic"));
    }
    if bytes.len() < CACHE_MAGIC.len() + 8 {
        return Err(FeatureError::CacheChecksum { path: path.to_path_buf() });
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(trailer.try_into().expect("8 bytes"));
    if stored != checksum(body) {
        return Err(FeatureError::CacheChecksum { path: path.to_path_buf() });
    }

    let mut cur = Cursor { buf: body, pos: CACHE_MAGIC.len() };
    let newline = body[cur.pos..]
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err("missing header line"))?;
    let header = std::str::from_utf8(cur.take(newline).expect("in bounds"))
        .map_err(|_| format_err("header is not UTF-8"))?;
    cur.take(1);
    let fields: Vec<&str> = header.split(',').collect();
    let [model_name, dim, count] = fields[..] else {
        return Err(format_err("header must be model_name,feature_dim,count"));
    };
    let feature_dim: usize = dim.parse().map_err(|_| format_err("bad feature_dim"))?;
    let count: usize = count.parse().map_err(|_| format_err("bad count"))?;

    let truncated = || format_err("truncated record");
    let mut vectors = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = u32::from_le_bytes(cur.take(4).ok_or_else(truncated)?.try_into().expect("4 bytes"));
        let id = cur.take(len as usize).ok_or_else(truncated)?;
        let sample_id = String::from_utf8(id.to_vec()).map_err(|_| format_err("sample_id is not UTF-8"))?;
        let raw = cur.take(feature_dim.checked_mul(8).ok_or_else(truncated)?).ok_or_else(truncated)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        vectors.push(FeatureVector { sample_id, model_name: model_name.to_string(), values });
    }
    if cur.pos != body.len() {
        return Err(format_err("trailing bytes after records"));
    }
    Ok(FeatureCache { model_name: model_name.to_string(), feature_dim, vectors })
}

/// Reads a cache and checks it was written for `manifest`'s model and dimension.
pub fn read_cache_for(path: &Path, manifest: &ModelManifest) -> Result<FeatureCache, FeatureError> {
    let cache = read_cache(path)?;
    if cache.model_name != manifest.model_name || cache.feature_dim != manifest.feature_dim {
        return Err(FeatureError::CacheMismatch {
            path: path.to_path_buf(),
            expected: format!("{}/{}", manifest.model_name, manifest.feature_dim),
            found: format!("{}/{}", cache.model_name, cache.feature_dim),
        });
    }
    Ok(cache)
}
