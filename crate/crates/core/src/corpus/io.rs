use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use serde_json::Value;

use super::{AuthorTable, CorpusError, Document, DocumentSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

/// A rejected input record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

const REQUIRED: [&str; 4] = ["doc_id", "author_id", "timestamp", "text"];

/// Parses an ISO-8601 timestamp. Values without an offset are taken as UTC;
/// a bare date means midnight UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in [
        "%Y-%m-%d %H:%M:%S%.f%:z",
        "%Y-%m-%d %H:%M:%S%.f%z",
        "%a %b %d %H:%M:%S %z %Y",
    ] {
        if let Ok(t) = DateTime::parse_from_str(s, fmt) {
            return Some(t.with_timezone(&Utc));
        }
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| t.and_utc())
}

fn build_document(line: usize, mut field: impl FnMut(&str) -> Option<String>) -> Result<Document, RecordError> {
    let mut values: Vec<String> = Vec::with_capacity(4);
    let mut missing = Vec::new();
    for name in REQUIRED {
        match field(name) {
            Some(v) if name == "text" || !v.trim().is_empty() => values.push(v),
            _ => {
                missing.push(name);
                values.push(String::new());
            }
        }
    }
    if !missing.is_empty() {
        return Err(RecordError {
            line,
            message: format!("missing required field(s): {}", missing.join(", ")),
        });
    }
    let timestamp = parse_timestamp(&values[2]).ok_or_else(|| RecordError {
        line,
        message: format!("unparsable timestamp {:?}", values[2]),
    })?;
    let mut it = values.into_iter();
    let doc_id = it.next().unwrap_or_default();
    let author_id = it.next().unwrap_or_default();
    let text = it.nth(1).unwrap_or_default();
    Ok(Document::new(doc_id.trim(), author_id.trim(), timestamp, text))
}

fn json_field(obj: &serde_json::Map<String, Value>, name: &str) -> Option<String> {
    match obj.get(name)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Reads a corpus from any reader. Every malformed record is reported with
/// its 1-based line number.
pub fn read_corpus<R: Read>(reader: R, format: CorpusFormat) -> Result<DocumentSet, CorpusError> {
    let mut docs = Vec::new();
    let mut errors = Vec::new();
    match format {
        CorpusFormat::Jsonl => {
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let line_no = i + 1;
                let line = line.map_err(|source| CorpusError::Io {
                    path: "<corpus>".into(),
                    source,
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed = match serde_json::from_str::<Value>(&line) {
                    Ok(Value::Object(obj)) => build_document(line_no, |k| json_field(&obj, k)),
                    Ok(_) => Err(RecordError {
                        line: line_no,
                        message: "record is not a JSON object".into(),
                    }),
                    Err(e) => Err(RecordError {
                        line: line_no,
                        message: format!("invalid JSON: {e}"),
                    }),
                };
                match parsed {
                    Ok(d) => docs.push(d),
                    Err(e) => errors.push(e),
                }
            }
        }
        CorpusFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
            let headers = rdr.headers()?.clone();
            let col = |name: &str| headers.iter().position(|h| h.trim() == name);
            let cols: Vec<Option<usize>> = REQUIRED.iter().map(|n| col(n)).collect();
            for rec in rdr.records() {
                let rec = rec?;
                let line_no = rec.position().map_or(0, |p| p.line() as usize);
                let parsed = build_document(line_no, |name| {
                    let k = REQUIRED.iter().position(|r| *r == name)?;
                    cols[k].and_then(|c| rec.get(c)).map(str::to_owned)
                });
                match parsed {
                    Ok(d) => docs.push(d),
                    Err(e) => errors.push(e),
                }
            }
        }
    }
    if !errors.is_empty() {
        return Err(CorpusError::Records(errors));
    }
    DocumentSet::new(docs)
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<DocumentSet, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut set = read_corpus(file, format)?;
    set.provenance.push(format!("load_corpus({})", path.display()));
    Ok(set)
}

/// Reads an authors CSV: header row, `author_id` first, attribute columns after.
pub fn read_authors<R: Read>(reader: R) -> Result<AuthorTable, CorpusError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let first = headers.get(0).unwrap_or("").trim().trim_start_matches('\u{feff}');
    if first != "author_id" {
        return Err(CorpusError::MissingAuthorColumn(first.to_owned()));
    }
    if headers.len() < 2 {
        return Err(CorpusError::NoAttributes);
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let mut table = AuthorTable::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or("").trim();
        let attrs = names
            .iter()
            .zip(rec.iter().skip(1))
            .map(|(k, v)| (k.clone(), v.to_owned()));
        table.insert(id, attrs)?;
    }
    Ok(table)
}

pub fn load_authors(path: impl AsRef<Path>) -> Result<AuthorTable, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_authors(file)
}

/// Writes one JSON object per document with the four corpus keys.
pub fn write_jsonl<W: Write>(docs: &DocumentSet, mut w: W) -> std::io::Result<()> {
    for d in docs {
        let rec = serde_json::json!({
            "doc_id": d.doc_id,
            "author_id": d.author_id,
            "timestamp": d.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            "text": d.text,
        });
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes `author_id` plus every attribute seen, sorted by name.
pub fn write_authors<W: Write>(table: &AuthorTable, w: W) -> Result<(), CorpusError> {
    let names: BTreeSet<&str> = table
        .iter()
        .flat_map(|(_, attrs)| attrs.keys().map(String::as_str))
        .collect();
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(std::iter::once("author_id").chain(names.iter().copied()))?;
    for (id, attrs) in table.iter() {
        let row = std::iter::once(id).chain(names.iter().map(|n| attrs.get(*n).map_or("", String::as_str)));
        wtr.write_record(row)?;
    }
    wtr.flush().map_err(|source| CorpusError::Io {
        path: "<authors>".into(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_single_record() {
        let src = r#"{"doc_id":"d1","author_id":"a1","timestamp":"2020-03-01T12:00:00Z","text":"Kids!"}"#;
        let set = read_corpus(src.as_bytes(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.docs()[0].author_id, "a1");
    }

    #[test]
    fn jsonl_missing_field_reports_line() {
        let src = r#"{"doc_id":"d1","timestamp":"2020-03-01","text":"x"}"#;
        match read_corpus(src.as_bytes(), CorpusFormat::Jsonl) {
            Err(CorpusError::Records(errs)) => {
                assert_eq!(errs.len(), 1);
                assert_eq!(errs[0].line, 1);
                assert!(errs[0].message.contains("author_id"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_timestamp_rejected() {
        let src = "{\"doc_id\":\"d1\",\"author_id\":\"a\",\"timestamp\":\"2020-01-01\",\"text\":\"\"}\n\
                   {\"doc_id\":\"d2\",\"author_id\":\"a\",\"timestamp\":\"last tuesday\",\"text\":\"\"}";
        match read_corpus(src.as_bytes(), CorpusFormat::Jsonl) {
            Err(CorpusError::Records(errs)) => assert_eq!(errs[0].line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_empty_set() {
        assert!(read_corpus("".as_bytes(), CorpusFormat::Jsonl).unwrap().is_empty());
        let csv = "doc_id,author_id,timestamp,text\n";
        assert!(read_corpus(csv.as_bytes(), CorpusFormat::Csv).unwrap().is_empty());
    }

    #[test]
    fn csv_corpus() {
        let csv = "doc_id,author_id,timestamp,text\n1,a,2020-01-02 10:00:00,\"hello, kids\"\n2,,2020-01-02,x\n";
        match read_corpus(csv.as_bytes(), CorpusFormat::Csv) {
            Err(CorpusError::Records(errs)) => {
                assert_eq!(errs[0].line, 3);
                assert!(errs[0].message.contains("author_id"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn timestamps() {
        let utc = parse_timestamp("2020-03-31T23:59:59").unwrap();
        assert_eq!(utc.to_rfc3339(), "2020-03-31T23:59:59+00:00");
        let tw = parse_timestamp("Wed Oct 10 20:19:24 +0000 2018").unwrap();
        assert_eq!(tw.to_rfc3339(), "2018-10-10T20:19:24+00:00");
        assert!(parse_timestamp("2020-13-01").is_none());
    }

    #[test]
    fn writers_round_trip() {
        let src = "{\"doc_id\":\"d1\",\"author_id\":\"a\",\"timestamp\":\"2020-01-02T03:04:05Z\",\"text\":\"hi \\\"there\\\"\"}\n";
        let set = read_corpus(src.as_bytes(), CorpusFormat::Jsonl).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&set, &mut buf).unwrap();
        assert_eq!(
            read_corpus(buf.as_slice(), CorpusFormat::Jsonl).unwrap().docs(),
            set.docs()
        );

        let t = read_authors("author_id,party,state\na1,dem,\na2,rep,ny\n".as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_authors(&t, &mut buf).unwrap();
        assert_eq!(read_authors(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn authors_table() {
        let t = read_authors("author_id,party\na1,dem\na2,REP\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("a2", "party"), Some("rep"));

        match read_authors("author_id,party\na1,dem\na1,rep\n".as_bytes()) {
            Err(CorpusError::DuplicateAuthor(id)) => assert_eq!(id, "a1"),
            other => panic!("unexpected {other:?}"),
        }

        let t = read_authors("author_id,party,state\na1,,fl\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("a1", "party"), None);
        assert_eq!(t.get("a1", "state"), Some("fl"));

        assert!(matches!(
            read_authors("author_id\na1\n".as_bytes()),
            Err(CorpusError::NoAttributes)
        ));
    }
}
