//! Packed little-endian record format.
//!
//! ```text
//! "MAGE" | version u16 | dimension u32 | count u64
//! per record: id_len u32 | id utf-8 | lang [u8; 3] | label u8 | dimension × f32
//! ```
//!
//! Language tags shorter than three bytes are NUL-padded.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::record::{Dataset, EmbeddingRecord};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MAGE";
pub const VERSION: u16 = 1;
const LANG_BYTES: usize = 3;

pub fn write_binary(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let bytes = encode_binary(dataset)?;
    out.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn encode_binary(dataset: &Dataset) -> Result<Vec<u8>> {
    let dim = dataset.dimension().unwrap_or(0);
    let mut buf = Vec::with_capacity(18 + dataset.len() * (dim * 4 + 16));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    for r in dataset.records() {
        let lang = r.language.as_bytes();
        if lang.len() > LANG_BYTES || lang.contains(&0) {
            return Err(Error::Validation(format!(
                "record {}: language tag {:?} does not fit in {LANG_BYTES} bytes",
                r.id, r.language
            )));
        }
        buf.extend_from_slice(&(r.id.len() as u32).to_le_bytes());
        buf.extend_from_slice(r.id.as_bytes());
        let mut tag = [0u8; LANG_BYTES];
        tag[..lang.len()].copy_from_slice(lang);
        buf.extend_from_slice(&tag);
        buf.push(r.label as u8);
        for &v in &r.vector {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn read_binary(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_binary(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Schema(format!(
                "binary record file truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

pub fn decode_binary(bytes: &[u8]) -> Result<Dataset> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Schema("missing MAGE header".into()));
    }
    let version = u16::from_le_bytes(cur.array()?);
    if version != VERSION {
        return Err(Error::Schema(format!("unsupported binary version {version}")));
    }
    let dim = u32::from_le_bytes(cur.array()?) as usize;
    let count = u64::from_le_bytes(cur.array()?);
    let mut dataset = Dataset::new();
    for i in 0..count {
        let id_len = u32::from_le_bytes(cur.array()?) as usize;
        let id = std::str::from_utf8(cur.take(id_len)?)
            .map_err(|e| Error::Schema(format!("record {i}: id is not utf-8: {e}")))?
            .to_string();
        let tag: [u8; LANG_BYTES] = cur.array()?;
        let end = tag.iter().position(|&b| b == 0).unwrap_or(LANG_BYTES);
        let language = std::str::from_utf8(&tag[..end])
            .map_err(|e| Error::Schema(format!("record {id}: language tag is not utf-8: {e}")))?
            .to_string();
        let label = cur.take(1)?[0] as usize;
        let mut vector = Vec::with_capacity(dim);
        for _ in 0..dim {
            vector.push(f64::from(f32::from_le_bytes(cur.array()?)));
        }
        dataset.push(EmbeddingRecord {
            id,
            language,
            label,
            vector,
        })?;
    }
    if cur.pos != bytes.len() {
        return Err(Error::Schema(format!(
            "{} trailing bytes after {count} records",
            bytes.len() - cur.pos
        )));
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        Dataset::from_records(vec![
            EmbeddingRecord {
                id: "kin-1".into(),
                language: "kin".into(),
                label: 2,
                vector: vec![0.25, -1.5, 3.0],
            },
            EmbeddingRecord {
                id: "x".into(),
                language: "sw".into(),
                label: 0,
                vector: vec![0.0, 1e-3, -7.125],
            },
        ])
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact_for_f32_values() {
        let d = sample();
        assert_eq!(
            decode_binary(&encode_binary(&d).unwrap()).unwrap().records()[0],
            d.records()[0]
        );
        let back = decode_binary(&encode_binary(&d).unwrap()).unwrap();
        assert_eq!(back.records()[1].language, "sw");
        assert!((back.records()[1].vector[1] - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn rejects_long_language_tags_and_truncation() {
        let mut records = sample().records().to_vec();
        records[0].language = "kinyarwanda".into();
        assert!(encode_binary(&Dataset::from_records(records).unwrap()).is_err());
        let bytes = encode_binary(&sample()).unwrap();
        assert!(matches!(
            decode_binary(&bytes[..bytes.len() - 1]),
            Err(Error::Schema(_))
        ));
        assert!(decode_binary(b"NOPE").is_err());
    }

    #[test]
    fn empty_dataset_round_trips() {
        let back = decode_binary(&encode_binary(&Dataset::new()).unwrap()).unwrap();
        assert!(back.is_empty());
    }
}
