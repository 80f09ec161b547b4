//! ATPE binary embedding store.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "ATPE"
//! version    u16      1
//! dim        u32
//! count      u64
//! record*    modality u8 (0 audio, 1 text)
//!            id_len u16, id bytes (UTF-8)
//!            label_len u16, label bytes (UTF-8, 0 = no label)
//!            dim x f32
//! ```

use std::fs;
use std::path::Path;

use crate::embedding::{Embedding, EmbeddingSet, Modality};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"ATPE";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 + 8;

pub fn encode_store<T: Scalar>(set: &EmbeddingSet<T>) -> Result<Vec<u8>> {
    let dim = u32::try_from(set.dim())
        .map_err(|_| Error::InvalidSet(format!("dimension {} exceeds u32", set.dim())))?;
    let mut out = Vec::with_capacity(HEADER_LEN + set.len() * (5 + 4 * set.dim() + 16));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&(set.len() as u64).to_le_bytes());
    for rec in set {
        out.push(rec.modality.to_byte());
        put_str(&mut out, &rec.id)?;
        put_str(&mut out, rec.label.as_deref().unwrap_or(""))?;
        for x in rec.vector() {
            out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::InvalidSet(format!("string of {} bytes exceeds u16 length", s.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated {what}: need {n} bytes, {} left", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u16(what)? as usize;
        let at = self.pos;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|e| Error::format((at + e.utf8_error().valid_up_to()) as u64, format!("{what} is not UTF-8")))
    }
}

pub fn decode_store<T: Scalar>(buf: &[u8]) -> Result<EmbeddingSet<T>> {
    let mut cur = Cursor { buf, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"ATPE\""));
    }
    let version = cur.u16("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let dim = cur.u32("dim")? as usize;
    if dim == 0 {
        return Err(Error::format(6, "dimension must be positive"));
    }
    let count = cur.u64("record count")?;
    // Every record needs at least 5 bytes plus its vector.
    let min_record = 5u64 + 4 * dim as u64;
    if count.saturating_mul(min_record) > (buf.len() - HEADER_LEN) as u64 {
        return Err(Error::format(
            10,
            format!("record count {count} does not fit in {} remaining bytes", buf.len() - HEADER_LEN),
        ));
    }
    let mut records = Vec::with_capacity(count as usize);
    let mut ids = std::collections::HashSet::with_capacity(count as usize);
    for i in 0..count {
        let rec_at = cur.pos as u64;
        let modality = cur.u8("modality")?;
        let modality = Modality::from_byte(modality)
            .ok_or_else(|| Error::format(rec_at, format!("record {i}: invalid modality byte {modality}")))?;
        let id_at = cur.pos as u64;
        let id = cur.string("id")?;
        if id.is_empty() {
            return Err(Error::format(id_at, format!("record {i}: empty id")));
        }
        if !ids.insert(id.clone()) {
            return Err(Error::format(id_at, format!("record {i}: duplicate id `{id}`")));
        }
        let label = cur.string("label")?;
        let label = (!label.is_empty()).then_some(label);
        let vec_at = cur.pos as u64;
        let raw = cur.take(4 * dim, "vector")?;
        let vector: Vec<T> = raw
            .chunks_exact(4)
            .map(|c| T::from_f64_lossy(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        let emb = Embedding::new(id, modality, label, vector)
            .map_err(|e| Error::format(vec_at, format!("record {i}: {e}")))?;
        records.push(emb);
    }
    if cur.pos != buf.len() {
        return Err(Error::format(
            cur.pos as u64,
            format!("{} trailing bytes after {count} records", buf.len() - cur.pos),
        ));
    }
    EmbeddingSet::new(dim, records)
}

pub fn save_store<T: Scalar>(set: &EmbeddingSet<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_store(set)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_store<T: Scalar>(path: impl AsRef<Path>) -> Result<EmbeddingSet<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_store(&bytes)
}
