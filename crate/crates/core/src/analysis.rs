//! Correlation and cross-column variance analysis over score tables.
//!
//! A [`ScoreTable`] has one row per statement or verb and one column per
//! `model_id/language` pair. Rows are always aligned by id, never by position.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::direction::Polarity;
use crate::error::{csv_error, Error, Result};
use crate::report::fmt_full;
use crate::stats::{self, FiveNumberSummary};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ColumnKey {
    pub model_id: String,
    pub language: String,
}

impl ColumnKey {
    /// Split a `model_id/language` label at its last slash.
    pub fn parse(label: &str) -> Result<Self> {
        match label.rsplit_once('/') {
            Some((m, l)) if !m.is_empty() && !l.is_empty() => Ok(ColumnKey {
                model_id: m.to_string(),
                language: l.to_string(),
            }),
            _ => Err(Error::validation(format!(
                "column label {label:?} is not of the form model_id/language"
            ))),
        }
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.model_id, self.language)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    row_ids: Vec<String>,
    columns: Vec<String>,
    /// Row-major cells.
    cells: Vec<Vec<f64>>,
    polarity: BTreeMap<String, Polarity>,
}

impl ScoreTable {
    pub fn new(row_ids: Vec<String>, columns: Vec<String>, cells: Vec<Vec<f64>>) -> Result<Self> {
        if row_ids.len() != cells.len() {
            return Err(Error::LengthMismatch {
                left: row_ids.len(),
                right: cells.len(),
            });
        }
        let mut seen = HashSet::new();
        for id in &row_ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId {
                    id: id.clone(),
                    line: None,
                });
            }
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c) {
                return Err(Error::validation(format!("duplicate column {c:?}")));
            }
        }
        for (id, row) in row_ids.iter().zip(&cells) {
            if row.len() != columns.len() {
                return Err(Error::validation(format!(
                    "row {id:?} has {} cells, table has {} columns",
                    row.len(),
                    columns.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!(
                    "row {id:?} has a non-finite cell"
                )));
            }
        }
        Ok(ScoreTable {
            row_ids,
            columns,
            cells,
            polarity: BTreeMap::new(),
        })
    }

    /// Inner-join named columns on row id. Rows come out sorted by id.
    pub fn from_columns(columns: Vec<(String, BTreeMap<String, f64>)>) -> Result<Self> {
        let Some((_, first)) = columns.first() else {
            return Err(Error::InsufficientData("no columns given".into()));
        };
        let shared: Vec<String> = first
            .keys()
            .filter(|id| columns.iter().all(|(_, c)| c.contains_key(*id)))
            .cloned()
            .collect();
        let cells = shared
            .iter()
            .map(|id| columns.iter().map(|(_, c)| c[id]).collect())
            .collect();
        let labels = columns.into_iter().map(|(l, _)| l).collect();
        ScoreTable::new(shared, labels, cells)
    }

    pub fn with_polarity(mut self, polarity: BTreeMap<String, Polarity>) -> Self {
        self.polarity = polarity;
        self
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.row_ids
            .iter()
            .map(String::as_str)
            .zip(self.cells.iter().map(Vec::as_slice))
    }

    pub fn polarity(&self, row_id: &str) -> Option<Polarity> {
        self.polarity.get(row_id).copied()
    }

    pub fn column_index(&self, label: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::NotFound {
                what: "column",
                ids: vec![label.to_string()],
            })
    }

    pub fn column(&self, label: &str) -> Result<Vec<f64>> {
        let j = self.column_index(label)?;
        Ok(self.cells.iter().map(|r| r[j]).collect())
    }

    /// Parse the CSV form: `row_id,<model>/<lang>,...`. An optional `polarity`
    /// column is read into row polarities.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers().map_err(csv_error)?.clone();
        if headers.get(0).map(str::trim) != Some("row_id") {
            return Err(Error::Parse {
                line: 1,
                message: "first column must be row_id".into(),
            });
        }
        let mut score_cols = Vec::new();
        let mut polarity_col = None;
        for (j, h) in headers.iter().enumerate().skip(1) {
            if h == "polarity" {
                polarity_col = Some(j);
            } else {
                ColumnKey::parse(h).map_err(|e| Error::Parse {
                    line: 1,
                    message: e.to_string(),
                })?;
                score_cols.push(j);
            }
        }
        let mut row_ids = Vec::new();
        let mut cells = Vec::new();
        let mut polarity = BTreeMap::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(csv_error)?;
            let id = rec.get(0).unwrap_or_default().to_string();
            let row = score_cols
                .iter()
                .map(|&j| {
                    let raw = rec.get(j).unwrap_or_default().trim();
                    raw.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!(
                            "cell {:?} in column {} is not a number",
                            raw, &headers[j]
                        ),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(j) = polarity_col {
                let p: Polarity =
                    rec.get(j)
                        .unwrap_or_default()
                        .parse()
                        .map_err(|e: Error| Error::Parse {
                            line,
                            message: e.to_string(),
                        })?;
                polarity.insert(id.clone(), p);
            }
            row_ids.push(id);
            cells.push(row);
        }
        let columns = score_cols.iter().map(|&j| headers[j].to_string()).collect();
        Ok(ScoreTable::new(row_ids, columns, cells)?.with_polarity(polarity))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text).map_err(|e| e.in_file(path))
    }

    /// Full-precision CSV, so the table can be read back losslessly.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let has_polarity = !self.polarity.is_empty();
        let mut header = vec!["row_id".to_string()];
        header.extend(self.columns.iter().cloned());
        if has_polarity {
            header.push("polarity".into());
        }
        w.write_record(&header).expect("in-memory write");
        for (id, row) in self.rows() {
            let mut rec = vec![id.to_string()];
            rec.extend(row.iter().map(|&x| fmt_full(x)));
            if has_polarity {
                rec.push(
                    self.polarity(id)
                        .map(Polarity::as_str)
                        .unwrap_or("")
                        .to_string(),
                );
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Read a `row_id,value` reference file.
pub fn load_reference(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_reference(&text).map_err(|e| e.in_file(path))
}

pub fn parse_reference(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(csv_error)?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let raw = rec.get(1).unwrap_or_default().trim();
        let v: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::Parse {
                line,
                message: format!("value {raw:?} is not a finite number"),
            })?;
        if out.insert(id.clone(), v).is_some() {
            return Err(Error::DuplicateId {
                id,
                line: Some(line),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceCorrelation {
    pub column: String,
    pub r: f64,
    pub n_shared: usize,
}

/// Pearson r between one table column and a reference keyed by row id, over
/// the rows present in both.
pub fn correlation_with_reference(
    table: &ScoreTable,
    column: &str,
    reference: &BTreeMap<String, f64>,
) -> Result<ReferenceCorrelation> {
    let j = table.column_index(column)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = table
        .rows()
        .filter_map(|(id, row)| reference.get(id).map(|&r| (row[j], r)))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "column {column:?} shares {} rows with the reference, need 2",
            xs.len()
        )));
    }
    Ok(ReferenceCorrelation {
        column: column.to_string(),
        r: stats::pearson(&xs, &ys)?,
        n_shared: xs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiagonalSemantics {
    /// Plain matrix; diagonal is each column with itself.
    SelfCorrelation,
    /// Composite layout: below the diagonal `lower` model pairs, above it
    /// `upper` model pairs, on it `lower` vs `upper` in the same language.
    CrossModel { lower: String, upper: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub diagonal: DiagonalSemantics,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }
}

/// Pairwise Pearson matrix over `columns` (all columns when `None`).
pub fn correlation_matrix(
    table: &ScoreTable,
    columns: Option<&[String]>,
) -> Result<CorrelationMatrix> {
    let labels: Vec<String> = columns
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| table.columns().to_vec());
    if labels.len() < 2 {
        return Err(Error::InsufficientData(
            "correlation matrix needs at least 2 columns".into(),
        ));
    }
    let data: Vec<Vec<f64>> = labels
        .iter()
        .map(|l| table.column(l))
        .collect::<Result<_>>()?;
    let k = labels.len();
    let mut values = vec![vec![0.0; k]; k];
    for i in 0..k {
        values[i][i] = 1.0;
        for j in (i + 1)..k {
            let r = stats::pearson(&data[i], &data[j])?;
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        labels,
        values,
        diagonal: DiagonalSemantics::SelfCorrelation,
    })
}

/// Composite matrix over languages shared by two model families. Entry
/// `[i][j]` is `lower` model correlation for i > j, `upper` for i < j and the
/// cross-model same-language correlation for i = j. Labels are languages.
pub fn composite_matrix(table: &ScoreTable, lower: &str, upper: &str) -> Result<CorrelationMatrix> {
    let keys: Vec<ColumnKey> = table
        .columns()
        .iter()
        .map(|c| ColumnKey::parse(c))
        .collect::<Result<_>>()?;
    let langs_of = |model: &str| -> BTreeSet<String> {
        keys.iter()
            .filter(|k| k.model_id == model)
            .map(|k| k.language.clone())
            .collect()
    };
    let upper_langs = langs_of(upper);
    // language order follows the lower model's column order
    let mut languages: Vec<String> = Vec::new();
    for k in keys.iter().filter(|k| k.model_id == lower) {
        if upper_langs.contains(&k.language) && !languages.contains(&k.language) {
            languages.push(k.language.clone());
        }
    }
    if languages.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "models {lower:?} and {upper:?} share fewer than 2 languages"
        )));
    }
    let col = |model: &str, lang: &str| table.column(&format!("{model}/{lang}"));
    let k = languages.len();
    let mut values = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let (a, b) = match i.cmp(&j) {
                std::cmp::Ordering::Greater => {
                    (col(lower, &languages[i])?, col(lower, &languages[j])?)
                }
                std::cmp::Ordering::Less => {
                    (col(upper, &languages[i])?, col(upper, &languages[j])?)
                }
                std::cmp::Ordering::Equal => {
                    (col(lower, &languages[i])?, col(upper, &languages[i])?)
                }
            };
            values[i][j] = stats::pearson(&a, &b)?;
        }
    }
    Ok(CorrelationMatrix {
        labels: languages,
        values,
        diagonal: DiagonalSemantics::CrossModel {
            lower: lower.to_string(),
            upper: upper.to_string(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowVariance {
    pub row_id: String,
    pub mean: f64,
    pub variance: f64,
    pub group: Polarity,
    /// Mean was exactly zero; assigned to the positive group.
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub count: usize,
    pub variance: Option<FiveNumberSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub rows: Vec<RowVariance>,
    pub positive: GroupSummary,
    pub negative: GroupSummary,
    pub ties: usize,
}

/// Per-row sample variance across columns, grouped by the sign of the row's
/// cross-column mean.
pub fn variance_analysis(table: &ScoreTable) -> Result<VarianceReport> {
    if table.columns().len() < 2 {
        return Err(Error::InsufficientData(
            "variance analysis needs at least 2 columns".into(),
        ));
    }
    let rows: Vec<RowVariance> = table
        .rows()
        .map(|(id, row)| {
            let mean = stats::mean(row);
            Ok(RowVariance {
                row_id: id.to_string(),
                mean,
                variance: stats::sample_variance(row)?,
                group: if mean < 0.0 {
                    Polarity::Negative
                } else {
                    Polarity::Positive
                },
                tie: mean == 0.0,
            })
        })
        .collect::<Result<_>>()?;
    let summary = |group: Polarity| {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.group == group)
            .map(|r| r.variance)
            .collect();
        GroupSummary {
            count: v.len(),
            variance: FiveNumberSummary::of(&v),
        }
    };
    Ok(VarianceReport {
        positive: summary(Polarity::Positive),
        negative: summary(Polarity::Negative),
        ties: rows.iter().filter(|r| r.tie).count(),
        rows,
    })
}
