//! Moral Foundations Questionnaire scoring.
//!
//! Each statement is scored with a [`MoralDirectionModel`], multiplied by its
//! ±1 reverse-coding multiplier, and mean-pooled within its aspect. Catch
//! questions are kept out of the aspects and checked against thresholds.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::direction::MoralDirectionModel;
use crate::error::{csv_error, Error, Result};
use crate::stats;
use crate::store::EmbeddingSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspect {
    Care,
    Fairness,
    Loyalty,
    Authority,
    Purity,
    Catch,
}

impl Aspect {
    pub const FOUNDATIONS: [Aspect; 5] = [
        Aspect::Care,
        Aspect::Fairness,
        Aspect::Loyalty,
        Aspect::Authority,
        Aspect::Purity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Aspect::Care => "care",
            Aspect::Fairness => "fairness",
            Aspect::Loyalty => "loyalty",
            Aspect::Authority => "authority",
            Aspect::Purity => "purity",
            Aspect::Catch => "catch",
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aspect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "care" | "harm" | "care/harm" => Ok(Aspect::Care),
            "fairness" | "reciprocity" | "fairness/reciprocity" => Ok(Aspect::Fairness),
            "loyalty" | "ingroup" | "ingroup/loyalty" => Ok(Aspect::Loyalty),
            "authority" | "respect" | "authority/respect" => Ok(Aspect::Authority),
            "purity" | "sanctity" | "purity/sanctity" => Ok(Aspect::Purity),
            "catch" => Ok(Aspect::Catch),
            other => Err(Error::validation(format!("unknown aspect {other:?}"))),
        }
    }
}

/// What a catch question is expected to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatchKind {
    /// Morally neutral statement, expected near 0.
    Neutral,
    /// Trivially good statement, expected near the top of the scale.
    Polar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MfqQuestion {
    pub question_id: String,
    pub aspect: Aspect,
    pub text: BTreeMap<String, String>,
    pub multiplier: i8,
    pub rephrased: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub catch_kind: Option<CatchKind>,
    /// Wording and multiplier before rephrasing, kept for reference only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub original: Option<OriginalWording>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginalWording {
    pub text: String,
    pub multiplier: i8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuestionnaireSpec {
    pub version: String,
    pub questions: Vec<MfqQuestion>,
}

#[derive(Deserialize)]
struct RawSpec {
    version: String,
    questions: Vec<RawQuestion>,
}

#[derive(Deserialize)]
struct RawQuestion {
    id: String,
    aspect: String,
    multiplier: serde_json::Value,
    #[serde(default)]
    rephrased: bool,
    text: BTreeMap<String, String>,
    #[serde(default)]
    catch_kind: Option<CatchKind>,
    #[serde(default)]
    original: Option<OriginalWording>,
}

impl QuestionnaireSpec {
    pub fn new(version: impl Into<String>, questions: Vec<MfqQuestion>) -> Result<Self> {
        let spec = QuestionnaireSpec {
            version: version.into(),
            questions,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for q in &self.questions {
            if !seen.insert(q.question_id.as_str()) {
                return Err(Error::DuplicateId {
                    id: q.question_id.clone(),
                    line: None,
                });
            }
            if q.multiplier != 1 && q.multiplier != -1 {
                return Err(Error::validation(format!(
                    "question {:?}: multiplier must be -1 or +1, got {}",
                    q.question_id, q.multiplier
                )));
            }
            if q.aspect == Aspect::Catch && q.catch_kind.is_none() {
                return Err(Error::validation(format!(
                    "catch question {:?} needs a catch_kind (neutral or polar)",
                    q.question_id
                )));
            }
        }
        if self.questions.iter().all(|q| q.aspect == Aspect::Catch) {
            return Err(Error::validation(
                "questionnaire has no scored (non-catch) questions",
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSpec = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        let questions =
            raw.questions
                .into_iter()
                .map(|q| {
                    let aspect: Aspect = q.aspect.parse().map_err(|e: Error| {
                        Error::validation(format!("question {:?}: {e}", q.id))
                    })?;
                    let multiplier = q
                        .multiplier
                        .as_i64()
                        .filter(|m| *m == 1 || *m == -1)
                        .ok_or_else(|| {
                            Error::validation(format!(
                                "question {:?}: multiplier must be -1 or +1, got {}",
                                q.id, q.multiplier
                            ))
                        })?;
                    Ok(MfqQuestion {
                        question_id: q.id,
                        aspect,
                        text: q.text,
                        multiplier: multiplier as i8,
                        rephrased: q.rephrased,
                        catch_kind: q.catch_kind,
                        original: q.original,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
        QuestionnaireSpec::new(raw.version, questions)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| e.in_file(path))
    }

    pub fn get(&self, question_id: &str) -> Option<&MfqQuestion> {
        self.questions.iter().find(|q| q.question_id == question_id)
    }

    /// `(question_id, text)` for every question in `language`, in spec order.
    pub fn statements(&self, language: &str) -> Result<Vec<(String, String)>> {
        let missing: Vec<String> = self
            .questions
            .iter()
            .filter(|q| !q.text.contains_key(language))
            .map(|q| q.question_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::NotFound {
                what: "question text",
                ids: missing,
            });
        }
        Ok(self
            .questions
            .iter()
            .map(|q| (q.question_id.clone(), q.text[language].clone()))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CatchThresholds {
    /// A neutral catch question is flagged when |score| exceeds this.
    pub neutral_max_abs: f64,
    /// A polar catch question is flagged when its score is below this.
    pub polar_min: f64,
}

impl Default for CatchThresholds {
    fn default() -> Self {
        CatchThresholds {
            neutral_max_abs: 0.15,
            polar_min: 0.25,
        }
    }
}

impl CatchThresholds {
    pub fn verdict(&self, kind: CatchKind, score: f64) -> Verdict {
        let flagged = match kind {
            CatchKind::Neutral => score.abs() > self.neutral_max_abs,
            CatchKind::Polar => score < self.polar_min,
        };
        if flagged {
            Verdict::Flag
        } else {
            Verdict::Pass
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionScore {
    pub question_id: String,
    pub aspect: Aspect,
    /// Model score before the multiplier.
    pub score: f64,
    pub multiplier: i8,
    pub signed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AspectResult {
    pub aspect: Aspect,
    pub signed_scores: BTreeMap<String, f64>,
    pub aspect_score: f64,
    pub n_questions: usize,
}

impl AspectResult {
    fn from_scores(aspect: Aspect, signed_scores: BTreeMap<String, f64>) -> Self {
        // Summing in id order keeps the result independent of spec order.
        let values: Vec<f64> = signed_scores.values().copied().collect();
        AspectResult {
            aspect,
            aspect_score: stats::mean(&values),
            n_questions: values.len(),
            signed_scores,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatchEntry {
    pub question_id: String,
    pub kind: CatchKind,
    pub score: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatchReport {
    pub thresholds: CatchThresholds,
    pub entries: Vec<CatchEntry>,
}

impl CatchReport {
    pub fn flagged(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.verdict == Verdict::Flag)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionnaireResult {
    pub model_id: String,
    pub language: String,
    /// Per-question scores in spec order.
    pub questions: Vec<QuestionScore>,
    /// One entry per aspect present in the spec, in canonical order.
    pub aspects: Vec<AspectResult>,
    pub catch: CatchReport,
}

/// Score every question of `spec` in `language`. Embedding ids equal question ids.
pub fn score_questionnaire(
    model: &MoralDirectionModel,
    set: &EmbeddingSet,
    spec: &QuestionnaireSpec,
    language: &str,
    thresholds: CatchThresholds,
) -> Result<QuestionnaireResult> {
    spec.statements(language)?;
    let missing: Vec<String> = spec
        .questions
        .iter()
        .filter(|q| !set.contains(&q.question_id))
        .map(|q| q.question_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::NotFound {
            what: "question embedding",
            ids: missing,
        });
    }

    let mut questions = Vec::with_capacity(spec.questions.len());
    let mut by_aspect: BTreeMap<Aspect, BTreeMap<String, f64>> = BTreeMap::new();
    let mut catch_entries = Vec::new();
    for q in &spec.questions {
        let score = model.score(set.lookup(&q.question_id)?)?.score;
        let signed = f64::from(q.multiplier) * score;
        match (q.aspect, q.catch_kind) {
            (Aspect::Catch, Some(kind)) => catch_entries.push(CatchEntry {
                question_id: q.question_id.clone(),
                kind,
                score: signed,
                verdict: thresholds.verdict(kind, signed),
            }),
            (Aspect::Catch, None) => unreachable!("validated spec"),
            (aspect, _) => {
                by_aspect
                    .entry(aspect)
                    .or_default()
                    .insert(q.question_id.clone(), signed);
            }
        }
        questions.push(QuestionScore {
            question_id: q.question_id.clone(),
            aspect: q.aspect,
            score,
            multiplier: q.multiplier,
            signed,
        });
    }

    let aspects = by_aspect
        .into_iter()
        .map(|(aspect, scores)| AspectResult::from_scores(aspect, scores))
        .collect();
    Ok(QuestionnaireResult {
        model_id: model.manifest().model_id.clone(),
        language: language.to_string(),
        questions,
        aspects,
        catch: CatchReport {
            thresholds,
            entries: catch_entries,
        },
    })
}

/// Human aspect means per study population, read from a CSV with header
/// `aspect,<population>,...`.
pub fn load_reference_table(
    path: impl AsRef<Path>,
) -> Result<Vec<(String, BTreeMap<Aspect, f64>)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_reference_table(&text).map_err(|e| e.in_file(path))
}

pub fn parse_reference_table(text: &str) -> Result<Vec<(String, BTreeMap<Aspect, f64>)>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.get(0).map(str::trim) != Some("aspect") || headers.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "header must be aspect,<population>,...".into(),
        });
    }
    let mut tables: Vec<(String, BTreeMap<Aspect, f64>)> = headers
        .iter()
        .skip(1)
        .map(|h| (h.to_string(), BTreeMap::new()))
        .collect();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(csv_error)?;
        let aspect: Aspect =
            rec.get(0)
                .unwrap_or_default()
                .parse()
                .map_err(|e: Error| Error::Parse {
                    line,
                    message: e.to_string(),
                })?;
        for (j, (_, table)) in tables.iter_mut().enumerate() {
            let raw = rec.get(j + 1).unwrap_or_default().trim();
            if raw.is_empty() {
                continue;
            }
            let v: f64 = raw
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("value {raw:?} is not a finite number"),
                })?;
            table.insert(aspect, v);
        }
    }
    Ok(tables)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AspectComparison {
    pub aspect: Aspect,
    pub model: f64,
    pub human: f64,
    /// model − human
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<AspectComparison>,
    /// Pearson r over the shared aspects; `None` when fewer than two are shared
    /// or either side is constant.
    pub correlation: Option<f64>,
}

pub fn compare_to_reference(
    results: &[AspectResult],
    reference: &BTreeMap<Aspect, f64>,
) -> Result<ComparisonReport> {
    let rows: Vec<AspectComparison> = results
        .iter()
        .filter_map(|r| {
            reference.get(&r.aspect).map(|&human| AspectComparison {
                aspect: r.aspect,
                model: r.aspect_score,
                human,
                difference: r.aspect_score - human,
            })
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::InsufficientData(
            "no aspects shared with the reference".into(),
        ));
    }
    let model: Vec<f64> = rows.iter().map(|r| r.model).collect();
    let human: Vec<f64> = rows.iter().map(|r| r.human).collect();
    let correlation = stats::pearson(&model, &human).ok();
    Ok(ComparisonReport { rows, correlation })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_json(extra: &str) -> String {
        format!(
            r#"{{"version":"t","questions":[
                {{"id":"c1","aspect":"care","multiplier":1,"text":{{"en":"Someone suffered."}}}},
                {{"id":"f1","aspect":"fairness","multiplier":-1,"rephrased":true,"text":{{"en":"x"}}}},
                {{"id":"l1","aspect":"loyalty","multiplier":1,"text":{{"en":"x"}}}},
                {{"id":"a1","aspect":"authority","multiplier":1,"text":{{"en":"x"}}}},
                {{"id":"p1","aspect":"purity","multiplier":1,"text":{{"en":"x"}}}}{extra}
            ]}}"#
        )
    }

    #[test]
    fn loads_valid_spec() {
        let spec = QuestionnaireSpec::from_json(&spec_json("")).unwrap();
        assert_eq!(spec.questions.len(), 5);
        assert_eq!(spec.get("f1").unwrap().multiplier, -1);
        assert!(spec.get("f1").unwrap().rephrased);
    }

    #[test]
    fn rejects_bad_multiplier_aspect_and_duplicates() {
        let zero = spec_json("").replace(
            r#""id":"c1","aspect":"care","multiplier":1"#,
            r#""id":"c1","aspect":"care","multiplier":0"#,
        );
        assert_eq!(
            QuestionnaireSpec::from_json(&zero).unwrap_err().code(),
            "validation"
        );
        let half = spec_json("").replace(r#""multiplier":-1"#, r#""multiplier":-0.5"#);
        assert_eq!(
            QuestionnaireSpec::from_json(&half).unwrap_err().code(),
            "validation"
        );

        let unknown = spec_json("").replace(r#""aspect":"purity""#, r#""aspect":"liberty""#);
        let err = QuestionnaireSpec::from_json(&unknown).unwrap_err();
        assert!(err.to_string().contains("liberty"));

        let dup = spec_json(r#",{"id":"c1","aspect":"care","multiplier":1,"text":{"en":"y"}}"#);
        assert_eq!(
            QuestionnaireSpec::from_json(&dup).unwrap_err().code(),
            "duplicate_id"
        );

        let no_purity = spec_json("").replace(r#""aspect":"purity""#, r#""aspect":"care""#);
        assert!(QuestionnaireSpec::from_json(&no_purity).is_ok());
        let only_catch = r#"{"version":"t","questions":[{"id":"k","aspect":"catch","catch_kind":"polar","multiplier":1,"text":{"en":"y"}}]}"#;
        assert_eq!(
            QuestionnaireSpec::from_json(only_catch).unwrap_err().code(),
            "validation"
        );

        let catch_without_kind =
            spec_json(r#",{"id":"k","aspect":"catch","multiplier":1,"text":{"en":"y"}}"#);
        assert_eq!(
            QuestionnaireSpec::from_json(&catch_without_kind)
                .unwrap_err()
                .code(),
            "validation"
        );
    }

    #[test]
    fn missing_language_text_is_reported() {
        let spec = QuestionnaireSpec::from_json(&spec_json("")).unwrap();
        match spec.statements("de").unwrap_err() {
            Error::NotFound { ids, .. } => assert_eq!(ids.len(), 5),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn aspect_mean_is_plain_average() {
        let scores = BTreeMap::from([
            ("a".to_string(), 0.2),
            ("b".to_string(), 0.4),
            ("c".to_string(), 0.6),
        ]);
        let r = AspectResult::from_scores(Aspect::Care, scores);
        assert!((r.aspect_score - 0.4).abs() < 1e-15);
        assert_eq!(r.n_questions, 3);
    }

    #[test]
    fn catch_verdicts() {
        let t = CatchThresholds::default();
        assert_eq!(t.verdict(CatchKind::Polar, -0.55), Verdict::Flag);
        assert_eq!(t.verdict(CatchKind::Polar, 0.8), Verdict::Pass);
        assert_eq!(t.verdict(CatchKind::Neutral, 0.05), Verdict::Pass);
        assert_eq!(t.verdict(CatchKind::Neutral, -0.3), Verdict::Flag);
    }

    #[test]
    fn comparison() {
        let results: Vec<AspectResult> = Aspect::FOUNDATIONS
            .iter()
            .zip([0.1, 0.2, 0.3, 0.4, 0.5])
            .map(|(&a, v)| AspectResult::from_scores(a, BTreeMap::from([("q".to_string(), v)])))
            .collect();
        let same: BTreeMap<Aspect, f64> =
            results.iter().map(|r| (r.aspect, r.aspect_score)).collect();
        let rep = compare_to_reference(&results, &same).unwrap();
        assert!(rep.rows.iter().all(|r| r.difference == 0.0));
        assert!((rep.correlation.unwrap() - 1.0).abs() < 1e-15);

        let reversed: BTreeMap<Aspect, f64> = Aspect::FOUNDATIONS
            .iter()
            .copied()
            .zip([0.5, 0.4, 0.3, 0.2, 0.1])
            .collect();
        let rep = compare_to_reference(&results, &reversed).unwrap();
        assert!((rep.correlation.unwrap() + 1.0).abs() < 1e-12);

        let single = BTreeMap::from([(Aspect::Care, 3.0)]);
        assert_eq!(
            compare_to_reference(&results, &single).unwrap().correlation,
            None
        );
        assert!(compare_to_reference(&results, &BTreeMap::new()).is_err());
    }

    #[test]
    fn reference_table_parsing() {
        let tables = parse_reference_table("aspect,DE,US\ncare,3.4,3.6\npurity,2.1,\n").unwrap();
        assert_eq!(tables.len(), 2);
        assert_eq!(tables[0].1[&Aspect::Purity], 2.1);
        assert!(!tables[1].1.contains_key(&Aspect::Purity));
        assert!(parse_reference_table("aspect,DE\nliberty,1\n").is_err());
    }
}
