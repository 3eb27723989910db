//! Shared records and their line-delimited JSON file formats.
//!
//! * triplet file: `{"op", "anchor", "positives", "negatives"}`
//! * corpus file: `{"doc_id", "title", "text", "attributes"}`
//! * query file: `{"query_id", "text", "template", "relevant_doc_ids"}`

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::{parse_query, Atom, BooleanQuery, Template};

pub type DocId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Op {
    And,
    Or,
    Not,
}

impl Op {
    pub const ALL: [Op; 3] = [Op::And, Op::Or, Op::Not];
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::And => "AND",
            Op::Or => "OR",
            Op::Not => "NOT",
        })
    }
}

/// One training sample: an anchor (gold) sentence with positive and
/// negative sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletSample {
    pub op: Op,
    pub anchor: String,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
}

impl TripletSample {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.positives.is_empty() || self.negatives.is_empty() {
            return Err("positives and negatives must be non-empty".into());
        }
        let pos: HashSet<&str> = self.positives.iter().map(String::as_str).collect();
        if self.negatives.iter().any(|n| pos.contains(n.as_str())) {
            return Err("positives and negatives overlap".into());
        }
        if pos.contains(self.anchor.as_str()) || self.negatives.contains(&self.anchor) {
            return Err("anchor repeated among positives or negatives".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: DocId,
    pub title: String,
    pub text: String,
    pub attributes: BTreeSet<Atom>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgedQuery {
    pub query_id: u32,
    pub query: BooleanQuery,
    pub text: String,
    pub relevant: BTreeSet<DocId>,
}

impl JudgedQuery {
    pub fn template(&self) -> Template {
        self.query.template()
    }
}

#[derive(Serialize, Deserialize)]
struct DocumentRecord {
    doc_id: DocId,
    title: String,
    text: String,
    attributes: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct QueryRecord {
    query_id: u32,
    text: String,
    template: Template,
    relevant_doc_ids: Vec<DocId>,
}

fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        let line = serde_json::to_string(&rec).expect("records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), line, message: message.into() }
}

pub fn write_triplets(path: &Path, samples: &[TripletSample]) -> Result<()> {
    write_jsonl(path, samples)
}

pub fn read_triplets(path: &Path) -> Result<Vec<TripletSample>> {
    read_jsonl::<TripletSample>(path)?
        .into_iter()
        .map(|(line, s)| {
            s.validate().map_err(|m| format_err(path, line, m))?;
            Ok(s)
        })
        .collect()
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    write_jsonl(
        path,
        docs.iter().map(|d| DocumentRecord {
            doc_id: d.doc_id,
            title: d.title.clone(),
            text: d.text.clone(),
            attributes: d.attributes.iter().map(|a| a.to_string()).collect(),
        }),
    )
}

/// Reads a corpus file; doc ids must be dense `0..N` in file order.
pub fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (line, rec) in read_jsonl::<DocumentRecord>(path)? {
        if rec.doc_id as usize != docs.len() {
            return Err(format_err(
                path,
                line,
                format!("expected doc_id {}, found {}", docs.len(), rec.doc_id),
            ));
        }
        let attributes = rec
            .attributes
            .iter()
            .map(|a| Atom::new(a))
            .collect::<Result<BTreeSet<_>>>()
            .map_err(|e| format_err(path, line, e.to_string()))?;
        docs.push(Document { doc_id: rec.doc_id, title: rec.title, text: rec.text, attributes });
    }
    Ok(docs)
}

pub fn write_queries(path: &Path, queries: &[JudgedQuery]) -> Result<()> {
    write_jsonl(
        path,
        queries.iter().map(|q| QueryRecord {
            query_id: q.query_id,
            text: q.text.clone(),
            template: q.template(),
            relevant_doc_ids: q.relevant.iter().copied().collect(),
        }),
    )
}

pub fn read_queries(path: &Path) -> Result<Vec<JudgedQuery>> {
    read_jsonl::<QueryRecord>(path)?
        .into_iter()
        .map(|(line, rec)| {
            let query = parse_query(&rec.text).map_err(|e| format_err(path, line, e.to_string()))?;
            if query.template() != rec.template {
                return Err(format_err(
                    path,
                    line,
                    format!("text parses as {:?} but template says {:?}", query.template(), rec.template),
                ));
            }
            Ok(JudgedQuery {
                query_id: rec.query_id,
                query,
                text: rec.text,
                relevant: rec.relevant_doc_ids.into_iter().collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplet_validation() {
        let mut s = TripletSample {
            op: Op::Or,
            anchor: "a or b".into(),
            positives: vec!["a".into(), "b".into()],
            negatives: vec!["c".into()],
        };
        assert!(s.validate().is_ok());
        s.negatives.push("a".into());
        assert!(s.validate().is_err());
        s.negatives = vec!["a or b".into()];
        assert!(s.validate().is_err());
        s.negatives.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn op_serializes_uppercase() {
        assert_eq!(serde_json::to_string(&Op::Not).unwrap(), "\"NOT\"");
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let docs = vec![
            Document {
                doc_id: 0,
                title: "Alpha".into(),
                text: "alpha is one of the war films".into(),
                attributes: [Atom::new("war films").unwrap()].into(),
            },
            Document {
                doc_id: 1,
                title: "Beta".into(),
                text: "beta".into(),
                attributes: [Atom::new("comedy films").unwrap()].into(),
            },
        ];
        let cpath = dir.path().join("corpus.jsonl");
        write_corpus(&cpath, &docs).unwrap();
        assert_eq!(read_corpus(&cpath).unwrap(), docs);

        let q = JudgedQuery {
            query_id: 3,
            query: parse_query("war films not comedy films").unwrap(),
            text: "war films not comedy films".into(),
            relevant: [0].into(),
        };
        let qpath = dir.path().join("queries.jsonl");
        write_queries(&qpath, std::slice::from_ref(&q)).unwrap();
        let line = std::fs::read_to_string(&qpath).unwrap();
        assert!(line.contains("\"template\":\"A not B\""));
        assert!(line.contains("\"relevant_doc_ids\":[0]"));
        assert_eq!(read_queries(&qpath).unwrap(), vec![q]);
    }

    #[test]
    fn corpus_ids_must_be_dense() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        std::fs::write(&p, r#"{"doc_id":1,"title":"t","text":"x","attributes":["a"]}"#).unwrap();
        assert!(matches!(read_corpus(&p), Err(Error::Format { line: 1, .. })));
    }
}
