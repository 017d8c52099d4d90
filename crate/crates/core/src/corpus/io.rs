//! Corpus JSONL: one [`Document`] per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::Value;

use super::{CorpusError, Document, UnitMode};

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>, CorpusError> {
    read_corpus_from(File::open(path)?)
}

/// Parses JSONL, validating every labeled document. Blank lines are skipped.
/// A missing `unit_mode` follows the language tag and a missing `case` reads
/// as human, so bare `{"id", "lang", "text"}` lines are accepted.
pub fn read_corpus_from(reader: impl Read) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_error = |e: serde_json::Error| CorpusError::Parse {
            line: i + 1,
            message: e.to_string(),
        };
        let mut value: Value = serde_json::from_str(&line).map_err(parse_error)?;
        if let Value::Object(obj) = &mut value {
            if !obj.contains_key("unit_mode") {
                let lang = obj.get("lang").and_then(Value::as_str).unwrap_or("");
                let mode = UnitMode::for_language(lang).as_str();
                obj.insert("unit_mode".into(), Value::String(mode.into()));
            }
            obj.entry("case")
                .or_insert_with(|| Value::String("human".into()));
        }
        let doc: Document = serde_json::from_value(value).map_err(parse_error)?;
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_corpus(path: impl AsRef<Path>, docs: &[Document]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_corpus_to(&mut w, docs)?;
    w.flush()?;
    Ok(())
}

pub fn write_corpus_to(mut w: impl Write, docs: &[Document]) -> Result<(), CorpusError> {
    for d in docs {
        serde_json::to_writer(&mut w, d).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
