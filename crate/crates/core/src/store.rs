//! Precomputed embedding sets.
//!
//! One file per model and language. Line 1 is a header object, every following
//! line is one record:
//!
//! ```text
//! {"format_version":1,"model_id":"xlmr-sbert","language":"de","dim":768,"pooling":"sentence","count":2}
//! {"id":"kill#0","text":"Soll ich töten?","vector":[0.0123, ...]}
//! ```
//!
//! The whole file is validated at load. Non-finite components written as the
//! bare tokens `NaN`, `Infinity` or `-Infinity` are reported as non-finite
//! rather than as syntax errors.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Sentence,
    MeanToken,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub format_version: u32,
    pub model_id: String,
    pub language: String,
    pub dim: usize,
    pub pooling: Pooling,
    pub count: usize,
}

impl EmbeddingManifest {
    pub fn new(
        model_id: impl Into<String>,
        language: impl Into<String>,
        dim: usize,
        pooling: Pooling,
    ) -> Self {
        EmbeddingManifest {
            format_version: FORMAT_VERSION,
            model_id: model_id.into(),
            language: language.into(),
            dim,
            pooling,
            count: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::validation(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.dim == 0 {
            return Err(Error::validation("manifest dim must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub text: String,
    pub vector: Vec<f64>,
}

/// Validated, immutable set of embeddings keyed by statement id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    manifest: EmbeddingManifest,
    records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    vector: Vec<Option<f64>>,
}

impl EmbeddingSet {
    /// Build a set from in-memory records. `manifest.count` is overwritten with
    /// the number of records. Line numbers in errors refer to the position the
    /// record would occupy in a serialized file.
    pub fn new(mut manifest: EmbeddingManifest, records: Vec<EmbeddingRecord>) -> Result<Self> {
        manifest.count = records.len();
        manifest.validate()?;
        let mut builder = Builder::new(manifest);
        for (i, rec) in records.into_iter().enumerate() {
            let vector = rec.vector.into_iter().map(Some).collect();
            builder.push(i + 2, rec.id, rec.text, vector)?;
        }
        builder.finish()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&bytes).map_err(|e| e.in_file(path))
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut builder: Option<Builder> = None;
        for (i, raw_line) in bytes.split(|&b| b == b'\n').enumerate() {
            let line_no = i + 1;
            let line = std::str::from_utf8(raw_line).map_err(|e| Error::Parse {
                line: line_no,
                message: format!("invalid UTF-8: {e}"),
            })?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            match builder.as_mut() {
                None => {
                    let manifest: EmbeddingManifest =
                        serde_json::from_str(line).map_err(|e| Error::Parse {
                            line: line_no,
                            message: format!("invalid header: {e}"),
                        })?;
                    manifest.validate().map_err(|e| Error::Parse {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                    builder = Some(Builder::new(manifest));
                }
                Some(b) => {
                    let cleaned = null_out_non_finite(line);
                    let rec: RawRecord =
                        serde_json::from_str(&cleaned).map_err(|e| Error::Parse {
                            line: line_no,
                            message: format!("invalid record: {e}"),
                        })?;
                    b.push(line_no, rec.id, rec.text, rec.vector)?;
                }
            }
        }
        match builder {
            Some(b) => b.finish(),
            None => Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            }),
        }
    }

    pub fn manifest(&self) -> &EmbeddingManifest {
        &self.manifest
    }

    pub fn dim(&self) -> usize {
        self.manifest.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in file order.
    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn lookup(&self, id: &str) -> Result<&[f64]> {
        self.get(id)
            .map(|r| r.vector.as_slice())
            .ok_or_else(|| Error::NotFound {
                what: "embedding",
                ids: vec![id.to_string()],
            })
    }

    /// Serialize in the load format. Floats use the shortest representation that
    /// parses back to the same value.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        serde_json::to_writer(&mut w, &self.manifest)?;
        w.write_all(b"\n")?;
        for rec in &self.records {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

struct Builder {
    manifest: EmbeddingManifest,
    records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
}

impl Builder {
    fn new(manifest: EmbeddingManifest) -> Self {
        Builder {
            manifest,
            records: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn push(
        &mut self,
        line: usize,
        id: String,
        text: String,
        vector: Vec<Option<f64>>,
    ) -> Result<()> {
        if vector.len() != self.manifest.dim {
            return Err(Error::DimMismatch {
                id,
                line,
                expected: self.manifest.dim,
                actual: vector.len(),
            });
        }
        let mut values = Vec::with_capacity(vector.len());
        for (index, v) in vector.into_iter().enumerate() {
            match v {
                Some(x) if x.is_finite() => values.push(x),
                _ => return Err(Error::NonFinite { id, line, index }),
            }
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId {
                id,
                line: Some(line),
            });
        }
        self.index.insert(id.clone(), self.records.len());
        self.records.push(EmbeddingRecord {
            id,
            text,
            vector: values,
        });
        Ok(())
    }

    fn finish(self) -> Result<EmbeddingSet> {
        if self.manifest.count != self.records.len() {
            return Err(Error::validation(format!(
                "header declares {} records, file contains {}",
                self.manifest.count,
                self.records.len()
            )));
        }
        Ok(EmbeddingSet {
            manifest: self.manifest,
            records: self.records,
            index: self.index,
        })
    }
}

/// Replace bare `NaN`, `Infinity` and `-Infinity` tokens outside string
/// literals with `null`.
fn null_out_non_finite(line: &str) -> std::borrow::Cow<'_, str> {
    if !line.contains("NaN") && !line.contains("Infinity") {
        return line.into();
    }
    let mut out = String::with_capacity(line.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut rest = line;
    while let Some(c) = rest.chars().next() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
        } else if c == '"' {
            in_string = true;
        } else {
            let token = ["-Infinity", "+Infinity", "Infinity", "NaN", "-NaN"]
                .into_iter()
                .find(|t| rest.starts_with(t));
            if let Some(t) = token {
                out.push_str("null");
                rest = &rest[t.len()..];
                continue;
            }
        }
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out.into()
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = r#"{"format_version":1,"model_id":"m","language":"en","dim":4,"pooling":"sentence","count":2}"#;

    fn file(lines: &[&str]) -> Vec<u8> {
        let mut s = lines.join("\n");
        s.push('\n');
        s.into_bytes()
    }

    #[test]
    fn loads_minimal_file() {
        let set = EmbeddingSet::parse(&file(&[
            HEADER,
            r#"{"id":"v1","text":"a","vector":[1,0,0,0]}"#,
            r#"{"id":"v2","text":"b","vector":[0,1,0,0.5]}"#,
        ]))
        .unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.lookup("v1").unwrap(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(set.manifest().pooling, Pooling::Sentence);
    }

    #[test]
    fn lookup_absent_is_not_found() {
        let set = EmbeddingSet::parse(&file(&[
            &HEADER.replace("\"count\":2", "\"count\":1"),
            r#"{"id":"v1","text":"a","vector":[1,0,0,0]}"#,
        ]))
        .unwrap();
        let err = set.lookup("absent").unwrap_err();
        assert_eq!(err.code(), "not_found");
        assert!(err.to_string().contains("absent"));
    }

    #[test]
    fn dim_mismatch_names_record() {
        let err = EmbeddingSet::parse(&file(&[
            HEADER,
            r#"{"id":"v1","text":"a","vector":[1,0,0,0]}"#,
            r#"{"id":"short","text":"b","vector":[0,1,0]}"#,
        ]))
        .unwrap_err();
        match err {
            Error::DimMismatch {
                id,
                line,
                expected,
                actual,
            } => {
                assert_eq!((id.as_str(), line, expected, actual), ("short", 3, 4, 3));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = EmbeddingSet::parse(&file(&[
            &HEADER.replace("\"count\":2", "\"count\":3"),
            r#"{"id":"v1","text":"a","vector":[1,0,0,0]}"#,
            r#"{"id":"v2","text":"b","vector":[0,1,0,0]}"#,
            r#"{"id":"v1","text":"c","vector":[0,0,1,0]}"#,
        ]))
        .unwrap_err();
        assert_eq!(err.code(), "duplicate_id");
    }

    #[test]
    fn nan_token_is_non_finite_not_syntax() {
        let err = EmbeddingSet::parse(&file(&[
            HEADER,
            r#"{"id":"v1","text":"NaN in text is fine","vector":[1,0,0,0]}"#,
            r#"{"id":"v2","text":"b","vector":[0,NaN,0,0]}"#,
        ]))
        .unwrap_err();
        match err {
            Error::NonFinite { id, index, .. } => assert_eq!((id.as_str(), index), ("v2", 1)),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = EmbeddingSet::parse(&file(&[
            HEADER,
            r#"{"id":"v1","text":"a","vector":[1,0,0,0]}"#,
            r#"{"id":"v2","text":"b","vector":[0,1,0,0"#,
        ]))
        .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn count_mismatch_and_bad_header() {
        let err = EmbeddingSet::parse(&file(&[
            HEADER,
            r#"{"id":"v1","text":"a","vector":[1,0,0,0]}"#,
        ]))
        .unwrap_err();
        assert_eq!(err.code(), "validation");

        let err = EmbeddingSet::parse(&file(&[&HEADER.replace("sentence", "cls")])).unwrap_err();
        assert_eq!(err.code(), "parse");
        let err =
            EmbeddingSet::parse(&file(&[&HEADER.replace("\"dim\":4", "\"dim\":0")])).unwrap_err();
        assert_eq!(err.code(), "parse");
        assert_eq!(EmbeddingSet::parse(b"").unwrap_err().code(), "parse");
    }

    #[test]
    fn sanitizer_leaves_strings_alone() {
        let s = r#"{"id":"a\"NaN","text":"Infinity","vector":[-Infinity,1,NaN]}"#;
        assert_eq!(
            null_out_non_finite(s),
            r#"{"id":"a\"NaN","text":"Infinity","vector":[null,1,null]}"#
        );
    }
}
