//! Binary shard container and its JSON-lines metadata sidecar.
//!
//! ```text
//! offset  size        field
//! 0       8           magic "SAEACT01"
//! 8       4           version (u32 LE)
//! 12      4           dim (u32 LE)
//! 16      8           count (u64 LE)
//! 24      count*dim*4 row-major float32 LE payload
//! ```
//!
//! The same container holds SAE parameter matrices and removal bases; token
//! shards additionally carry `<shard>.meta.jsonl`, one [`TokenMeta`] per row.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SAEACT01";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenRole {
    Image,
    Prompt,
    Content,
    Special,
}

impl std::str::FromStr for TokenRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(TokenRole::Image),
            "prompt" => Ok(TokenRole::Prompt),
            "content" => Ok(TokenRole::Content),
            "special" => Ok(TokenRole::Special),
            other => Err(Error::config(format!("unknown token role `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenMeta {
    pub sample_id: u64,
    pub modality: Modality,
    pub token_role: TokenRole,
    /// Position within the sample.
    pub token_index: u32,
}

/// Token activations plus aligned per-token metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationShard {
    dim: usize,
    vectors: Vec<f32>,
    meta: Vec<TokenMeta>,
}

impl ActivationShard {
    /// Builds a shard from row-major `vectors` and checks every invariant.
    pub fn new(dim: usize, vectors: Vec<f32>, meta: Vec<TokenMeta>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("shard dimension must be positive".into()));
        }
        if meta.is_empty() {
            return Err(Error::Format("empty shards are rejected".into()));
        }
        if vectors.len() != meta.len() * dim {
            return Err(Error::Consistency(format!(
                "{} metadata records for {} values at dim {dim}",
                meta.len(),
                vectors.len()
            )));
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { param: format!("shard row {}", pos / dim) });
        }
        check_token_indices(&meta)?;
        Ok(Self { dim, vectors, meta })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.meta.len()
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn meta(&self) -> &[TokenMeta] {
        &self.meta
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.vectors.chunks_exact(self.dim)
    }

    /// Row indices grouped by sample, in order of first appearance.
    pub fn samples(&self) -> Vec<(u64, Vec<usize>)> {
        let mut order: Vec<(u64, Vec<usize>)> = Vec::new();
        let mut slot: HashMap<u64, usize> = HashMap::new();
        for (i, m) in self.meta.iter().enumerate() {
            let s = *slot.entry(m.sample_id).or_insert_with(|| {
                order.push((m.sample_id, Vec::new()));
                order.len() - 1
            });
            order[s].1.push(i);
        }
        order
    }
}

fn check_token_indices(meta: &[TokenMeta]) -> Result<()> {
    let mut next: HashMap<u64, (u32, Modality)> = HashMap::new();
    for (row, m) in meta.iter().enumerate() {
        let entry = next.entry(m.sample_id).or_insert((0, m.modality));
        if m.token_index != entry.0 {
            return Err(Error::Consistency(format!(
                "row {row}: sample {} expected token_index {}, found {}",
                m.sample_id, entry.0, m.token_index
            )));
        }
        if m.modality != entry.1 {
            return Err(Error::Consistency(format!("row {row}: sample {} mixes modalities", m.sample_id)));
        }
        entry.0 += 1;
    }
    Ok(())
}

/// Header fields of a container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u32,
    pub dim: usize,
    pub count: usize,
}

pub fn write_header<W: Write>(mut w: W, dim: usize, count: usize) -> Result<()> {
    let dim32 = u32::try_from(dim).map_err(|_| Error::Format(format!("dim {dim} exceeds u32")))?;
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(dim32)?;
    w.write_u64::<LittleEndian>(count as u64)?;
    Ok(())
}

pub fn read_header<R: Read>(mut r: R) -> Result<Header> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated("header"))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = r.read_u32::<LittleEndian>().map_err(truncated("header"))?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = r.read_u32::<LittleEndian>().map_err(truncated("header"))? as usize;
    let count = r.read_u64::<LittleEndian>().map_err(truncated("header"))?;
    if dim == 0 {
        return Err(Error::Format("zero dimension".into()));
    }
    let count = usize::try_from(count).map_err(|_| Error::Format("count overflows".into()))?;
    Ok(Header { version, dim, count })
}

fn truncated(what: &'static str) -> impl Fn(io::Error) -> Error {
    move |e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::Corruption(format!("truncated {what}"))
        } else {
            Error::Io(e)
        }
    }
}

/// Writes a bare matrix container. Returns the number of bytes written.
pub fn write_matrix<W: Write>(mut w: W, dim: usize, data: &[f32]) -> Result<u64> {
    if dim == 0 {
        return Err(Error::Format("zero dimension".into()));
    }
    if data.len() % dim != 0 {
        return Err(Error::shape(format!("{} values do not tile dim {dim}", data.len())));
    }
    let count = data.len() / dim;
    write_header(&mut w, dim, count)?;
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok((HEADER_LEN + buf.len()) as u64)
}

/// Reads a bare matrix container, returning `(header, row-major data)`.
pub fn read_matrix<R: Read>(mut r: R) -> Result<(Header, Vec<f32>)> {
    let header = read_header(&mut r)?;
    let n = header.count.checked_mul(header.dim).ok_or_else(|| Error::Format("payload size overflows".into()))?;
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes).map_err(truncated("payload"))?;
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok((header, data))
}

/// Writes the container to `data` and the metadata sidecar to `meta`.
/// Returns the total number of bytes emitted across both sinks.
pub fn write_shard<W: Write, M: Write>(shard: &ActivationShard, data: W, mut meta: M) -> Result<u64> {
    if shard.dim == 0 {
        return Err(Error::Format("zero dimension".into()));
    }
    if shard.count() == 0 {
        return Err(Error::Format("empty shards are rejected".into()));
    }
    let mut written = write_matrix(data, shard.dim, &shard.vectors)?;
    for m in &shard.meta {
        let mut line = serde_json::to_vec(m)?;
        line.push(b'\n');
        meta.write_all(&line)?;
        written += line.len() as u64;
    }
    meta.flush()?;
    Ok(written)
}

pub fn read_shard<R: Read, M: BufRead>(data: R, meta: M) -> Result<ActivationShard> {
    let (header, vectors) = read_matrix(data)?;
    if header.count == 0 {
        return Err(Error::Format("empty shards are rejected".into()));
    }
    let records = read_sidecar(meta)?;
    if records.len() != header.count {
        return Err(Error::Consistency(format!(
            "sidecar lists {} records for {} vectors",
            records.len(),
            header.count
        )));
    }
    ActivationShard::new(header.dim, vectors, records).map_err(|e| match e {
        Error::NonFinite { param } => Error::Corruption(format!("non-finite value in {param}")),
        other => other,
    })
}

fn read_sidecar<M: BufRead>(meta: M) -> Result<Vec<TokenMeta>> {
    let mut out = Vec::new();
    for (lineno, line) in meta.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m: TokenMeta =
            serde_json::from_str(&line).map_err(|e| Error::Format(format!("sidecar line {}: {e}", lineno + 1)))?;
        out.push(m);
    }
    Ok(out)
}

/// `<shard>.meta.jsonl`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.jsonl");
    PathBuf::from(s)
}

pub fn save_shard(shard: &ActivationShard, path: &Path) -> Result<u64> {
    let data = BufWriter::new(File::create(path)?);
    let meta = BufWriter::new(File::create(sidecar_path(path))?);
    write_shard(shard, data, meta)
}

pub fn load_shard(path: &Path) -> Result<ActivationShard> {
    let data = BufReader::new(File::open(path)?);
    let meta = BufReader::new(File::open(sidecar_path(path))?);
    read_shard(data, meta)
}

pub fn save_matrix(path: &Path, dim: usize, data: &[f32]) -> Result<u64> {
    write_matrix(BufWriter::new(File::create(path)?), dim, data)
}

pub fn load_matrix(path: &Path) -> Result<(Header, Vec<f32>)> {
    read_matrix(BufReader::new(File::open(path)?))
}

/// Streams rows out of a container one at a time.
pub struct RowReader<R> {
    inner: R,
    header: Header,
    remaining: usize,
    buf: Vec<u8>,
}

impl<R: Read> RowReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let header = read_header(&mut inner)?;
        Ok(Self { inner, header, remaining: header.count, buf: vec![0u8; header.dim * 4] })
    }

    pub fn header(&self) -> Header {
        self.header
    }
}

impl<R: Read> Iterator for RowReader<R> {
    type Item = Result<Vec<f32>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        if let Err(e) = self.inner.read_exact(&mut self.buf) {
            self.remaining = 0;
            return Some(Err(truncated("payload")(e)));
        }
        Some(Ok(self.buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (0, Some(self.remaining))
    }
}
