use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// One raw record: text, author list and publication date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub authors: Vec<String>,
    pub date: NaiveDate,
}

/// Field names of the JSON-lines input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub id: String,
    pub text: String,
    pub authors: String,
    pub date: String,
    /// Records dated before this are skipped.
    pub date_from: Option<NaiveDate>,
    /// Records dated on or after this are skipped.
    pub date_to: Option<NaiveDate>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            id: "id".into(),
            text: "abstract".into(),
            authors: "authors".into(),
            date: "update_date".into(),
            date_from: None,
            date_to: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub documents: Vec<Document>,
    pub skipped: usize,
    pub warnings: Vec<String>,
}

/// Trim, casefold and collapse internal whitespace.
pub fn normalize_author(name: &str) -> String {
    name.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Accepts `YYYY-MM-DD`, optionally followed by a time part (`T...` or ` ...`).
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    let head = s.get(..10).unwrap_or(s);
    NaiveDate::parse_from_str(head, "%Y-%m-%d").ok()
}

pub fn ingest(path: &Path, schema: &Schema) -> Result<IngestReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(BufReader::new(file), schema).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        e => e,
    })
}

/// Parses JSON-lines records. Malformed records are skipped and counted; only
/// read failures are fatal.
pub fn read_records<R: BufRead>(reader: R, schema: &Schema) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    let mut seen = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line, schema) {
            Ok(doc) => {
                if !seen.insert(doc.id.clone()) {
                    skip(&mut report, lineno, &format!("duplicate id `{}`", doc.id));
                } else {
                    report.documents.push(doc);
                }
            }
            Err(why) => skip(&mut report, lineno, &why),
        }
    }
    Ok(report)
}

fn skip(report: &mut IngestReport, lineno: usize, why: &str) {
    let msg = format!("line {}: {why}; record skipped", lineno + 1);
    warn!("{msg}");
    report.warnings.push(msg);
    report.skipped += 1;
}

fn parse_record(line: &str, schema: &Schema) -> std::result::Result<Document, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed json ({e})"))?;
    let obj = value.as_object().ok_or("record is not an object")?;
    let field = |name: &str| obj.get(name).ok_or_else(|| format!("missing field `{name}`"));

    let id = match field(&schema.id)? {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return Err(format!("field `{}` is not a string", schema.id)),
    };
    let text = field(&schema.text)?
        .as_str()
        .ok_or_else(|| format!("field `{}` is not a string", schema.text))?
        .to_string();
    let authors = parse_authors(field(&schema.authors)?)?;
    if authors.is_empty() {
        return Err("empty author list".into());
    }
    let raw_date = field(&schema.date)?
        .as_str()
        .ok_or_else(|| format!("field `{}` is not a string", schema.date))?;
    let date = parse_date(raw_date).ok_or_else(|| format!("unparseable date `{raw_date}`"))?;
    if schema.date_from.is_some_and(|from| date < from) || schema.date_to.is_some_and(|to| date >= to) {
        return Err(format!("date {date} outside the configured range"));
    }
    Ok(Document {
        id,
        text,
        authors,
        date,
    })
}

/// Authors come either as a JSON array of names or as one string separated by
/// commas and/or " and ".
fn parse_authors(v: &Value) -> std::result::Result<Vec<String>, String> {
    let raw: Vec<String> = match v {
        Value::Array(items) => items
            .iter()
            .map(|x| x.as_str().map(str::to_string).ok_or("author entry is not a string"))
            .collect::<std::result::Result<_, _>>()?,
        Value::String(s) => s
            .split(',')
            .flat_map(|part| part.split(" and "))
            .map(str::to_string)
            .collect(),
        _ => return Err("authors field is neither a list nor a string".into()),
    };
    Ok(raw
        .into_iter()
        .map(|a| a.trim().to_string())
        .filter(|a| !a.is_empty())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> IngestReport {
        read_records(s.as_bytes(), &Schema::default()).unwrap()
    }

    #[test]
    fn three_valid_records() {
        let input = r#"{"id":"a","abstract":"x y","authors":["A"],"update_date":"2020-01-02"}
{"id":"b","abstract":"x y","authors":["A","B"],"update_date":"2020-02-02"}
{"id":3,"abstract":"x y","authors":"C, D and E","update_date":"2020-03-02T10:00:00"}
"#;
        let r = read(input);
        assert_eq!(r.documents.len(), 3);
        assert_eq!(r.skipped, 0);
        assert_eq!(r.documents[2].id, "3");
        assert_eq!(r.documents[2].authors, vec!["C", "D", "E"]);
    }

    #[test]
    fn empty_author_list_is_skipped() {
        let input = r#"{"id":"a","abstract":"x","authors":[],"update_date":"2020-01-02"}
{"id":"b","abstract":"x","authors":["A"],"update_date":"2020-01-02"}"#;
        let r = read(input);
        assert_eq!(r.documents.len(), 1);
        assert_eq!(r.skipped, 1);
    }

    #[test]
    fn malformed_records_are_counted() {
        let input = r#"not json
{"id":"a","authors":["A"],"update_date":"2020-01-02"}
{"id":"b","abstract":"x","authors":["A"],"update_date":"someday"}
{"id":"c","abstract":"x","authors":["A"],"update_date":"2020-01-02"}
{"id":"c","abstract":"x","authors":["A"],"update_date":"2020-01-02"}"#;
        let r = read(input);
        assert_eq!(r.documents.len(), 1);
        assert_eq!(r.skipped, 4);
        assert_eq!(r.warnings.len(), 4);
    }

    #[test]
    fn date_range_filter() {
        let schema = Schema {
            date_from: NaiveDate::from_ymd_opt(2020, 2, 1),
            ..Schema::default()
        };
        let input = r#"{"id":"a","abstract":"x","authors":["A"],"update_date":"2020-01-02"}
{"id":"b","abstract":"x","authors":["A"],"update_date":"2020-02-02"}"#;
        let r = read_records(input.as_bytes(), &schema).unwrap();
        assert_eq!(r.documents.len(), 1);
        assert_eq!(r.skipped, 1);
    }

    #[test]
    fn missing_file_is_fatal() {
        let err = ingest(Path::new("/nonexistent/corpus.jsonl"), &Schema::default()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn author_normalization() {
        assert_eq!(normalize_author("  Jane   Q.\tDoe "), "jane q. doe");
        assert_eq!(normalize_author("JANE DOE"), normalize_author("jane doe"));
    }
}
