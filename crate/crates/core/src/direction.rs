//! Moral direction induction and scoring.
//!
//! Induction verbs are slotted into question templates, the template
//! embeddings are averaged per verb, and the first principal component of the
//! verb vectors becomes the direction. The direction is oriented so that
//! positive verbs project higher than negative ones, and scaled so the
//! induction verbs span [-1, 1].

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{csv_error, Error, Result};
use crate::pca;
use crate::store::{EmbeddingManifest, EmbeddingSet};

pub const PLACEHOLDER: &str = "[verb]";
pub const MODEL_FORMAT_VERSION: u32 = 1;

const UNIT_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplateSet {
    pub language: String,
    pub templates: Vec<String>,
}

impl PromptTemplateSet {
    pub fn new(language: impl Into<String>, templates: Vec<String>) -> Result<Self> {
        let set = PromptTemplateSet {
            language: language.into(),
            templates,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(Error::validation("template set is empty"));
        }
        for (i, t) in self.templates.iter().enumerate() {
            let n = t.matches(PLACEHOLDER).count();
            if n != 1 {
                return Err(Error::validation(format!(
                    "template {i} ({t:?}) must contain {PLACEHOLDER} exactly once, found {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: PromptTemplateSet = serde_json::from_str(&text)
            .map_err(|e| Error::Parse {
                line: e.line(),
                message: e.to_string(),
            })
            .map_err(|e| e.in_file(path))?;
        set.validate().map_err(|e| e.in_file(path))?;
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }
}

impl std::str::FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "+" => Ok(Polarity::Positive),
            "negative" | "neg" | "-" => Ok(Polarity::Negative),
            other => Err(Error::validation(format!("unknown polarity {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InductionVerb {
    pub verb_id: String,
    pub surface: String,
    pub polarity: Polarity,
}

/// Read a verb list: CSV with header `verb_id,surface,polarity`.
pub fn load_verbs(path: impl AsRef<Path>) -> Result<Vec<InductionVerb>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(e).in_file(path))?;
    let mut verbs = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, row) in reader.deserialize::<BTreeMap<String, String>>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| csv_error(e).in_file(path))?;
        let field = |name: &str| {
            row.get(name).cloned().ok_or_else(|| {
                Error::Parse {
                    line,
                    message: format!("missing column {name}"),
                }
                .in_file(path)
            })
        };
        let verb_id = field("verb_id")?;
        let surface = field("surface")?;
        let polarity = field("polarity")?.parse().map_err(|e: Error| {
            Error::Parse {
                line,
                message: e.to_string(),
            }
            .in_file(path)
        })?;
        if !seen.insert(verb_id.clone()) {
            return Err(Error::DuplicateId {
                id: verb_id,
                line: Some(line),
            }
            .in_file(path));
        }
        verbs.push(InductionVerb {
            verb_id,
            surface,
            polarity,
        });
    }
    Ok(verbs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub verb_id: String,
    pub template_index: usize,
    pub text: String,
}

impl Prompt {
    /// Embedding id of a templated prompt: `<verb_id>#<template_index>`.
    pub fn id(&self) -> String {
        prompt_id(&self.verb_id, self.template_index)
    }
}

pub fn prompt_id(verb_id: &str, template_index: usize) -> String {
    format!("{verb_id}#{template_index}")
}

/// Insert every verb into every template, verb-major.
pub fn expand_templates(
    verbs: &[InductionVerb],
    templates: &PromptTemplateSet,
) -> Result<Vec<Prompt>> {
    templates.validate()?;
    let mut prompts = Vec::with_capacity(verbs.len() * templates.len());
    for verb in verbs {
        for (i, t) in templates.templates.iter().enumerate() {
            prompts.push(Prompt {
                verb_id: verb.verb_id.clone(),
                template_index: i,
                text: t.replacen(PLACEHOLDER, &verb.surface, 1),
            });
        }
    }
    Ok(prompts)
}

/// Componentwise mean of the verb's template prompt embeddings.
pub fn aggregate_verb_embedding(
    set: &EmbeddingSet,
    verb_id: &str,
    template_count: usize,
) -> Result<Vec<f64>> {
    if template_count == 0 {
        return Err(Error::validation("template_count must be at least 1"));
    }
    let ids: Vec<String> = (0..template_count).map(|i| prompt_id(verb_id, i)).collect();
    let missing: Vec<String> = ids.iter().filter(|id| !set.contains(id)).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::NotFound {
            what: "prompt embedding",
            ids: missing,
        });
    }
    let mut mean = vec![0.0; set.dim()];
    for id in &ids {
        for (m, x) in mean.iter_mut().zip(set.lookup(id)?) {
            *m += x;
        }
    }
    let n = template_count as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationRule {
    /// Positive-verb mean projection ≥ negative-verb mean projection.
    PolarityMeans,
    /// Polarity means coincided; first non-negligible component made positive.
    FirstNonzeroComponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    pub rule: OrientationRule,
    /// Mean raw projection of positive verbs, after orientation.
    pub positive_mean: f64,
    /// Mean raw projection of negative verbs, after orientation.
    pub negative_mean: f64,
    /// Whether the PCA direction was negated.
    pub flipped: bool,
    pub warning: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub raw: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredStatement {
    pub id: String,
    pub text: String,
    pub raw: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoralDirectionModel {
    format_version: u32,
    manifest: EmbeddingManifest,
    mean: Vec<f64>,
    direction: Vec<f64>,
    normalizer: f64,
    explained_variance_ratio: f64,
    orientation: Orientation,
}

impl MoralDirectionModel {
    pub fn manifest(&self) -> &EmbeddingManifest {
        &self.manifest
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn explained_variance_ratio(&self) -> f64 {
        self.explained_variance_ratio
    }

    pub fn orientation(&self) -> &Orientation {
        &self.orientation
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    /// Centered projection onto the direction, and that projection divided by
    /// the normalizer. Scores are not clamped.
    pub fn score(&self, embedding: &[f64]) -> Result<Projection> {
        if embedding.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: embedding.len(),
            });
        }
        let raw = project(embedding, &self.mean, &self.direction);
        Ok(Projection {
            raw,
            score: raw / self.normalizer,
        })
    }

    pub fn score_statement(
        &self,
        id: &str,
        text: &str,
        embedding: &[f64],
    ) -> Result<ScoredStatement> {
        let p = self.score(embedding)?;
        Ok(ScoredStatement {
            id: id.to_string(),
            text: text.to_string(),
            raw: p.raw,
            score: p.score,
        })
    }

    /// Score the listed ids (or every record, in file order) from `set`.
    pub fn score_batch(
        &self,
        set: &EmbeddingSet,
        ids: Option<&[String]>,
    ) -> Result<Vec<ScoredStatement>> {
        if set.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: set.dim(),
            });
        }
        let records: Vec<_> = match ids {
            None => set.records().iter().collect(),
            Some(ids) => {
                let missing: Vec<String> =
                    ids.iter().filter(|id| !set.contains(id)).cloned().collect();
                if !missing.is_empty() {
                    return Err(Error::NotFound {
                        what: "embedding",
                        ids: missing,
                    });
                }
                ids.iter().filter_map(|id| set.get(id)).collect()
            }
        };
        records
            .into_iter()
            .map(|r| self.score_statement(&r.id, &r.text, &r.vector))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::validation(format!(
                "unsupported model format_version {}",
                self.format_version
            )));
        }
        if self.mean.len() != self.direction.len() || self.direction.is_empty() {
            return Err(Error::validation(
                "model mean and direction must have equal, non-zero length",
            ));
        }
        if self.manifest.dim != self.direction.len() {
            return Err(Error::DimensionMismatch {
                expected: self.manifest.dim,
                actual: self.direction.len(),
            });
        }
        if self
            .mean
            .iter()
            .chain(&self.direction)
            .any(|x| !x.is_finite())
        {
            return Err(Error::validation("model vectors contain non-finite values"));
        }
        let norm = self.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::validation(format!("direction norm {norm} is not 1")));
        }
        if !self.normalizer.is_finite() || self.normalizer <= 0.0 {
            return Err(Error::validation("normalizer must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.explained_variance_ratio) {
            return Err(Error::validation("explained_variance_ratio outside [0, 1]"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: MoralDirectionModel = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| e.in_file(path))
    }
}

fn project(embedding: &[f64], mean: &[f64], direction: &[f64]) -> f64 {
    embedding
        .iter()
        .zip(mean)
        .zip(direction)
        .map(|((x, m), d)| (x - m) * d)
        .sum()
}

fn mean_of(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Induce a model from per-verb vectors. Rows enter the PCA in verb-id order.
pub fn induce(
    verb_vectors: &BTreeMap<String, Vec<f64>>,
    polarities: &BTreeMap<String, Polarity>,
    manifest: &EmbeddingManifest,
) -> Result<MoralDirectionModel> {
    if verb_vectors.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "induction needs at least 2 verbs, got {}",
            verb_vectors.len()
        )));
    }
    let unlabeled: Vec<String> = verb_vectors
        .keys()
        .filter(|id| !polarities.contains_key(*id))
        .cloned()
        .collect();
    if !unlabeled.is_empty() {
        return Err(Error::NotFound {
            what: "polarity for verb",
            ids: unlabeled,
        });
    }
    let labels: Vec<Polarity> = verb_vectors.keys().map(|id| polarities[id]).collect();
    if !labels.contains(&Polarity::Positive) || !labels.contains(&Polarity::Negative) {
        return Err(Error::validation(
            "induction needs both positive and negative verbs",
        ));
    }

    let rows: Vec<Vec<f64>> = verb_vectors.values().cloned().collect();
    let pc = pca::first_component(&rows)?;
    let mut direction = pc.component;

    let split_means = |direction: &[f64]| {
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (row, label) in rows.iter().zip(&labels) {
            let raw = project(row, &pc.mean, direction);
            match label {
                Polarity::Positive => pos.push(raw),
                Polarity::Negative => neg.push(raw),
            }
        }
        (mean_of(&pos), mean_of(&neg))
    };

    let (pos, neg) = split_means(&direction);
    let scale = 1f64.max(pos.abs()).max(neg.abs());
    let (rule, flipped, warning) = if (pos - neg).abs() <= 1e-12 * scale {
        // PCA output is already sign-canonical under this rule
        let flipped = pca::canonicalize_sign(&mut direction);
        (OrientationRule::FirstNonzeroComponent, flipped, true)
    } else if pos < neg {
        direction.iter_mut().for_each(|x| *x = -*x);
        (OrientationRule::PolarityMeans, true, false)
    } else {
        (OrientationRule::PolarityMeans, false, false)
    };
    let (positive_mean, negative_mean) = split_means(&direction);

    let normalizer = rows
        .iter()
        .map(|r| project(r, &pc.mean, &direction).abs())
        .fold(0.0, f64::max);
    if normalizer.is_nan() || normalizer <= 0.0 {
        return Err(Error::Degenerate(
            "all induction verbs project to zero".into(),
        ));
    }

    let mut manifest = manifest.clone();
    manifest.dim = direction.len();
    let model = MoralDirectionModel {
        format_version: MODEL_FORMAT_VERSION,
        manifest,
        mean: pc.mean,
        direction,
        normalizer,
        explained_variance_ratio: pc.explained_variance_ratio,
        orientation: Orientation {
            rule,
            positive_mean,
            negative_mean,
            flipped,
            warning,
        },
    };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerbScore {
    pub verb_id: String,
    pub surface: String,
    pub polarity: Polarity,
    pub raw: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Induction {
    pub model: MoralDirectionModel,
    /// Scores of the induction verbs in input order.
    pub verb_scores: Vec<VerbScore>,
}

/// Aggregate template embeddings per verb, induce, and score the verbs.
pub fn induce_from_set(
    set: &EmbeddingSet,
    verbs: &[InductionVerb],
    templates: &PromptTemplateSet,
) -> Result<Induction> {
    templates.validate()?;
    let mut seen = BTreeSet::new();
    for v in verbs {
        if !seen.insert(v.verb_id.as_str()) {
            return Err(Error::DuplicateId {
                id: v.verb_id.clone(),
                line: None,
            });
        }
    }

    let mut missing = Vec::new();
    let mut vectors = BTreeMap::new();
    for v in verbs {
        match aggregate_verb_embedding(set, &v.verb_id, templates.len()) {
            Ok(vec) => {
                vectors.insert(v.verb_id.clone(), vec);
            }
            Err(Error::NotFound { ids, .. }) => missing.extend(ids),
            Err(e) => return Err(e),
        }
    }
    if !missing.is_empty() {
        return Err(Error::NotFound {
            what: "prompt embedding",
            ids: missing,
        });
    }

    let polarities = verbs
        .iter()
        .map(|v| (v.verb_id.clone(), v.polarity))
        .collect();
    let model = induce(&vectors, &polarities, set.manifest())?;
    let verb_scores = verbs
        .iter()
        .map(|v| {
            let p = model.score(&vectors[&v.verb_id])?;
            Ok(VerbScore {
                verb_id: v.verb_id.clone(),
                surface: v.surface.clone(),
                polarity: v.polarity,
                raw: p.raw,
                score: p.score,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Induction { model, verb_scores })
}
