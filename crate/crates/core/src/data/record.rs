use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;

pub const CLASS_NAMES: [&str; 3] = ["negative", "neutral", "positive"];
pub const NUM_CLASSES: usize = CLASS_NAMES.len();
pub const DEFAULT_DIMENSION: usize = 768;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub language: String,
    pub label: usize,
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn validate(&self) -> Result<()> {
        if self.label >= NUM_CLASSES {
            return Err(Error::Validation(format!(
                "record {}: label {} outside 0..{}",
                self.id, self.label, NUM_CLASSES
            )));
        }
        if let Some(i) = self.vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "record {}: component {i} is not finite",
                self.id
            )));
        }
        Ok(())
    }
}

/// Maps a sentiment name to its class index, case-insensitively.
pub fn encode_label(text: &str) -> Result<usize> {
    let lowered = text.trim().to_lowercase();
    CLASS_NAMES
        .iter()
        .position(|&c| c == lowered)
        .ok_or_else(|| Error::Validation(format!("unknown label {text:?}; expected one of {CLASS_NAMES:?}")))
}

/// An ordered collection of records sharing one vector dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dimension: Option<usize>,
    records: Vec<EmbeddingRecord>,
    class_names: Vec<String>,
}

impl Default for Dataset {
    fn default() -> Self {
        Dataset {
            dimension: None,
            records: Vec::new(),
            class_names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Dataset {
    pub fn new() -> Self {
        Dataset::default()
    }

    pub fn from_records(records: Vec<EmbeddingRecord>) -> Result<Self> {
        let mut d = Dataset::new();
        for r in records {
            d.push(r)?;
        }
        Ok(d)
    }

    /// Appends a record; the first record fixes the dimension.
    pub fn push(&mut self, record: EmbeddingRecord) -> Result<()> {
        record.validate()?;
        match self.dimension {
            None => self.dimension = Some(record.vector.len()),
            Some(d) if d != record.vector.len() => {
                return Err(Error::Schema(format!(
                    "record {} has dimension {}, dataset has {d}",
                    record.id,
                    record.vector.len()
                )))
            }
            Some(_) => {}
        }
        self.records.push(record);
        Ok(())
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    /// Vectors as an `n × dimension` matrix.
    pub fn vectors(&self) -> Matrix {
        let rows: Vec<&[f64]> = self.records.iter().map(|r| r.vector.as_slice()).collect();
        let mut m = Matrix::from_rows(&rows).expect("records share one dimension");
        if rows.is_empty() {
            m = Matrix::zeros(0, self.dimension.unwrap_or(0));
        }
        m
    }

    /// New dataset holding the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            dimension: self.dimension,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            class_names: self.class_names.clone(),
        }
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for r in &self.records {
            counts[r.label] += 1;
        }
        counts
    }

    /// Class counts per language tag, sorted by tag.
    pub fn language_class_counts(&self) -> BTreeMap<String, [usize; NUM_CLASSES]> {
        let mut out: BTreeMap<String, [usize; NUM_CLASSES]> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.language.clone()).or_default()[r.label] += 1;
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    lang: String,
    label: i64,
    vec: Vec<f32>,
}

/// Parses one canonical JSON record line. Vectors are read as 32-bit floats
/// and widened.
pub fn parse_record_line(line: &str, line_no: usize) -> Result<EmbeddingRecord> {
    let parsed: RecordLine = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    if !(0..NUM_CLASSES as i64).contains(&parsed.label) {
        return Err(Error::Validation(format!(
            "record {} (line {line_no}): label {} outside 0..{NUM_CLASSES}",
            parsed.id, parsed.label
        )));
    }
    let record = EmbeddingRecord {
        id: parsed.id,
        language: parsed.lang,
        label: parsed.label as usize,
        vector: parsed.vec.into_iter().map(f64::from).collect(),
    };
    record.validate()?;
    Ok(record)
}

/// True for a leading `{"meta": {...}}` or `{"metadata": {...}}` line
/// describing how the file was produced (for example the pooling strategy
/// used for extraction).
fn is_metadata_line(line: &str) -> bool {
    matches!(
        serde_json::from_str::<serde_json::Value>(line),
        Ok(serde_json::Value::Object(ref m)) if (m.contains_key("meta") || m.contains_key("metadata")) && !m.contains_key("vec")
    )
}

/// Reads the canonical line-delimited JSON format. Blank lines are skipped,
/// and an optional metadata object may precede the first record.
pub fn read_records(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records_from(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_records_from(reader: impl BufRead) -> Result<Dataset> {
    let mut dataset = Dataset::new();
    let mut seen_content = false;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        if !seen_content {
            seen_content = true;
            if is_metadata_line(&line) {
                continue;
            }
        }
        let record = parse_record_line(&line, line_no)?;
        dataset.push(record).map_err(|e| e.context(format!("line {line_no}")))?;
    }
    Ok(dataset)
}

pub fn write_records(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_records_to(dataset, &mut out).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_records_to(dataset: &Dataset, out: &mut impl Write) -> Result<()> {
    for r in dataset.records() {
        let line = RecordLine {
            id: r.id.clone(),
            lang: r.language.clone(),
            label: r.label as i64,
            vec: r.vector.iter().map(|&v| v as f32).collect(),
        };
        serde_json::to_writer(&mut *out, &line).map_err(|e| Error::Validation(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

/// Reads either format, choosing by the binary magic header.
pub fn load_records(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut head = [0u8; 4];
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let n = file.read(&mut head).map_err(|e| Error::io(path, e))?;
    if n == 4 && &head == super::binary::MAGIC {
        super::binary::read_binary(path)
    } else {
        read_records(path)
    }
}
