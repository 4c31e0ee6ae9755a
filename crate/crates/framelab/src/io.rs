//! Corpus files (CSV, JSON Lines) and the JSON Lines stores used by a session.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use framelab_core::corpus::{ColumnMapping, CorpusBuilder, CorpusError, LoadReport, Provenance};
use framelab_core::Corpus;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Csv,
    Jsonl,
}

impl FileFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(FileFormat::Csv),
            "jsonl" | "ndjson" => Some(FileFormat::Jsonl),
            _ => None,
        }
    }
}

/// Decodes `bytes` as UTF-8, reporting the 1-based line of the first bad byte.
pub fn decode_utf8(bytes: &[u8]) -> Result<&str, CorpusError> {
    std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        CorpusError::NotUtf8 { line }
    })
}

pub fn load_corpus(path: &Path, format: FileFormat, mapping: &ColumnMapping) -> Result<LoadReport, CorpusError> {
    let bytes = fs::read(path).map_err(|e| CorpusError::FileUnreadable(format!("{}: {e}", path.display())))?;
    let text = decode_utf8(&bytes)?;
    let provenance = Provenance { source: path.display().to_string(), loaded_at: now_rfc3339() };
    match format {
        FileFormat::Csv => parse_csv(text, mapping, provenance),
        FileFormat::Jsonl => parse_jsonl(text, mapping, provenance),
    }
}

pub fn parse_csv(text: &str, mapping: &ColumnMapping, provenance: Provenance) -> Result<LoadReport, CorpusError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CorpusError::Malformed { line: 1, message: e.to_string() })?
        .iter()
        .map(String::from)
        .collect();
    mapping.check_header(&header)?;
    let index: BTreeMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let mut builder = CorpusBuilder::new(mapping.clone());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CorpusError::Malformed {
            line: e.position().map_or(row + 2, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        builder.push_row(row + 1, |col| index.get(col).and_then(|&i| record.get(i)))?;
    }
    builder.finish(provenance)
}

pub fn parse_jsonl(text: &str, mapping: &ColumnMapping, provenance: Provenance) -> Result<LoadReport, CorpusError> {
    let mut rows: Vec<BTreeMap<String, String>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| CorpusError::Malformed { line: i + 1, message };
        let obj: serde_json::Map<String, Value> = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let mut fields = BTreeMap::new();
        for (k, v) in obj {
            let s = match v {
                Value::String(s) => s,
                Value::Null => continue,
                Value::Number(n) => n.to_string(),
                Value::Bool(b) => u8::from(b).to_string(),
                other => return Err(malformed(format!("field `{k}` must be a scalar, got {other}"))),
            };
            fields.insert(k, s);
        }
        rows.push(fields);
    }
    // the header of a JSON Lines file is the union of keys over all rows
    let header: BTreeSet<&str> = rows.iter().flat_map(|r| r.keys().map(String::as_str)).collect();
    mapping.check_header(&header.into_iter().collect::<Vec<_>>())?;
    let mut builder = CorpusBuilder::new(mapping.clone());
    for (i, fields) in rows.iter().enumerate() {
        builder.push_row(i + 1, |col| fields.get(col).map(String::as_str))?;
    }
    builder.finish(provenance)
}

/// Writes `corpus` through `mapping`, one row per article in corpus order.
pub fn export_corpus<W: Write>(corpus: &Corpus, mapping: &ColumnMapping, format: FileFormat, out: W) -> anyhow::Result<()> {
    match format {
        FileFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let header: Vec<&str> = mapping.declared().into_iter().map(|(_, p)| p).collect();
            w.write_record(&header)?;
            for a in corpus.articles() {
                w.write_record(mapping.row_for(a).iter().map(|(_, v)| v))?;
            }
            w.flush()?;
        }
        FileFormat::Jsonl => {
            let mut out = out;
            for a in corpus.articles() {
                let obj: serde_json::Map<String, Value> =
                    mapping.row_for(a).into_iter().map(|(k, v)| (k, Value::String(v))).collect();
                writeln!(out, "{}", Value::Object(obj))?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| anyhow::anyhow!("{}:{}: {e}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

/// Appends records and fsyncs before returning.
pub fn append_jsonl<T: Serialize>(path: &Path, records: &[T]) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&buf)?;
    f.sync_data()?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    write_atomic(path, &buf)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let bytes = fs::read(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

/// Write to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_data()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
