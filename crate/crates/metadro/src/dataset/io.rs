//! Store file formats: CSV, JSONL, and a little-endian binary container.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

use super::{EmbeddingRecord, EmbeddingStore};

const STORE_MAGIC: &[u8; 4] = b"MSHF";
const STORE_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreFormat {
    Csv,
    Jsonl,
    Binary,
}

impl std::str::FromStr for StoreFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(StoreFormat::Csv),
            "jsonl" => Ok(StoreFormat::Jsonl),
            "bin" | "binary" => Ok(StoreFormat::Binary),
            other => Err(Error::Validation(format!("unknown store format '{}'", other))),
        }
    }
}

impl StoreFormat {
    /// Infer a format from a file extension; binary when unknown.
    pub fn from_path(path: &Path) -> StoreFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => StoreFormat::Csv,
            Some("jsonl") => StoreFormat::Jsonl,
            _ => StoreFormat::Binary,
        }
    }
}

pub fn load_store(path: &Path, format: StoreFormat) -> Result<EmbeddingStore> {
    let records = match format {
        StoreFormat::Csv => read_csv(path)?,
        StoreFormat::Jsonl => read_jsonl(path)?,
        StoreFormat::Binary => read_binary(path)?,
    };
    EmbeddingStore::from_records(records)
}

pub fn write_store(store: &EmbeddingStore, path: &Path, format: StoreFormat) -> Result<()> {
    match format {
        StoreFormat::Csv => write_csv(store, path),
        StoreFormat::Jsonl => write_jsonl(store, path),
        StoreFormat::Binary => write_binary(store, path),
    }
}

// ---- CSV: header id,patient_id,label,group,v0,...,v{d-1} ----

fn read_csv(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Ingest(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| Error::Ingest(e.to_string()))?.clone();
    if headers.len() < 5 || &headers[0] != "id" || &headers[1] != "patient_id" || &headers[2] != "label" || &headers[3] != "group" {
        return Err(Error::Ingest(format!(
            "csv header must start with id,patient_id,label,group,v0,..., got {:?}",
            headers
        )));
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Ingest(e.to_string()))?;
        let id = row[0].to_string();
        let vector: Vec<f64> = row
            .iter()
            .skip(4)
            .map(|v| v.parse::<f64>().map_err(|e| Error::Ingest(format!("record '{}': {}", id, e))))
            .collect::<Result<_>>()?;
        records.push(EmbeddingRecord {
            id,
            patient_id: if row[1].is_empty() { None } else { Some(row[1].to_string()) },
            label: row[2].to_string(),
            group: row[3].to_string(),
            vector: Tensor::vector(vector),
        });
    }
    Ok(records)
}

fn write_csv(store: &EmbeddingStore, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::Ingest(e.to_string()))?;
    let mut header = vec!["id".to_string(), "patient_id".into(), "label".into(), "group".into()];
    header.extend((0..store.dim()).map(|i| format!("v{}", i)));
    wtr.write_record(&header).map_err(|e| Error::Ingest(e.to_string()))?;
    for r in store.records() {
        let mut row = vec![
            r.id.clone(),
            r.patient_id.clone().unwrap_or_default(),
            r.label.clone(),
            r.group.clone(),
        ];
        row.extend(r.vector.data().iter().map(|v| format!("{}", v)));
        wtr.write_record(&row).map_err(|e| Error::Ingest(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

// ---- JSONL ----

#[derive(serde::Serialize, serde::Deserialize)]
struct JsonlRecord {
    id: String,
    patient_id: Option<String>,
    label: String,
    group: String,
    vector: Vec<f64>,
}

fn read_jsonl(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let file = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (n, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let j: JsonlRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Ingest(format!("line {}: {}", n + 1, e)))?;
        records.push(EmbeddingRecord {
            id: j.id,
            patient_id: j.patient_id,
            label: j.label,
            group: j.group,
            vector: Tensor::vector(j.vector),
        });
    }
    Ok(records)
}

fn write_jsonl(store: &EmbeddingStore, path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    for r in store.records() {
        let j = JsonlRecord {
            id: r.id.clone(),
            patient_id: r.patient_id.clone(),
            label: r.label.clone(),
            group: r.group.clone(),
            vector: r.vector.data().to_vec(),
        };
        serde_json::to_writer(&mut file, &j).map_err(|e| Error::Ingest(e.to_string()))?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

// ---- Binary: magic MSHF, version, u32 count, u32 dim, records ----
// Per record: length-prefixed UTF-8 strings id, patient_id (empty = none),
// label, group, then dim little-endian f64 values.

pub(crate) fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub(crate) fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut buf = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Ingest(e.to_string()))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, data: &[f64]) -> Result<()> {
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

fn write_binary(store: &EmbeddingStore, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(STORE_MAGIC)?;
    w.write_all(&[STORE_VERSION])?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    w.write_all(&(store.dim() as u32).to_le_bytes())?;
    for r in store.records() {
        write_str(&mut w, &r.id)?;
        write_str(&mut w, r.patient_id.as_deref().unwrap_or(""))?;
        write_str(&mut w, &r.label)?;
        write_str(&mut w, &r.group)?;
        write_f64s(&mut w, r.vector.data())?;
    }
    w.flush()?;
    Ok(())
}

fn read_binary(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != STORE_MAGIC {
        return Err(Error::Ingest(format!("bad magic {:?}, expected MSHF", magic)));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != STORE_VERSION {
        return Err(Error::Ingest(format!("unsupported store version {}", version[0])));
    }
    let count = read_u32(&mut r)? as usize;
    let dim = read_u32(&mut r)? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let id = read_str(&mut r)?;
        let patient = read_str(&mut r)?;
        let label = read_str(&mut r)?;
        let group = read_str(&mut r)?;
        let vector = read_f64s(&mut r, dim)?;
        records.push(EmbeddingRecord {
            id,
            patient_id: if patient.is_empty() { None } else { Some(patient) },
            label,
            group,
            vector: Tensor::vector(vector),
        });
    }
    Ok(records)
}
