//! Command-line front end. Every subcommand reads files, runs one stage, and
//! writes its reports into `--out` in a single all-or-nothing step.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, ScoreTable};
use crate::direction::{self, MoralDirectionModel, Polarity, PromptTemplateSet};
use crate::divergence::{self, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::questionnaire::{self, CatchThresholds, QuestionnaireSpec};
use crate::report::{csv_document, fmt_opt, fmt_sig6 as f6, json_document, OutputBatch};
use crate::store::{EmbeddingManifest, EmbeddingSet, Pooling};
use crate::synthetic;

#[derive(Debug, Parser)]
#[command(
    name = "moraldir",
    version,
    about = "Moral-direction probing of sentence embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expand verbs × templates into an `id<TAB>text` statement list for embedding.
    Prompts(PromptsArgs),
    /// Write a questionnaire's statements in one language as `id<TAB>text`.
    Statements(StatementsArgs),
    /// Induce a moral direction from templated verb embeddings.
    Induce(InduceArgs),
    /// Score every (or selected) statement of an embedding set.
    Score(ScoreArgs),
    /// Score a questionnaire and pool per aspect.
    Mfq(MfqArgs),
    /// Score parallel sentence pairs under two models and rank divergences.
    Diverge(DivergeArgs),
    /// Join score sheets into a score table.
    Assemble(AssembleArgs),
    /// Correlation matrices and reference correlations over score tables.
    Correlate(CorrelateArgs),
    /// Cross-column variance per row, grouped by mean sign.
    Variance(VarianceArgs),
    /// Write a seeded synthetic fixture set.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PromptsArgs {
    #[arg(long)]
    pub verbs: PathBuf,
    #[arg(long)]
    pub templates: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatementsArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub language: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InduceArgs {
    #[arg(long)]
    pub verbs: PathBuf,
    #[arg(long)]
    pub templates: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// File with one statement id per line; defaults to every record.
    #[arg(long)]
    pub ids: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MfqArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Human aspect means: CSV `aspect,<population>,...`.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = CatchThresholds::default().neutral_max_abs)]
    pub catch_neutral_max: f64,
    #[arg(long, default_value_t = CatchThresholds::default().polar_min)]
    pub catch_polar_min: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DivergeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub model_b: PathBuf,
    #[arg(long)]
    pub embeddings_b: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub top_k: usize,
    #[arg(long)]
    pub min_quality: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AssembleArgs {
    /// Score sheets written by `induce` or `score` (the `.json` sidecars).
    #[arg(long = "scores", required = true)]
    pub scores: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Score table CSV; repeat to join several tables on row id.
    #[arg(long = "table", required = true)]
    pub tables: Vec<PathBuf>,
    /// Reference CSV `row_id,value` (e.g. user-study means).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Composite layout `LOWER:UPPER` by model id.
    #[arg(long)]
    pub composite: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VarianceArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let (out, batch) = match cli.command {
        Command::Prompts(a) => (a.out.clone(), prompts(&a)?),
        Command::Statements(a) => (a.out.clone(), statements(&a)?),
        Command::Induce(a) => (a.out.clone(), induce(&a)?),
        Command::Score(a) => (a.out.clone(), score(&a)?),
        Command::Mfq(a) => (a.out.clone(), mfq(&a)?),
        Command::Diverge(a) => (a.out.clone(), diverge(&a)?),
        Command::Assemble(a) => (a.out.clone(), assemble(&a)?),
        Command::Correlate(a) => (a.out.clone(), correlate(&a)?),
        Command::Variance(a) => (a.out.clone(), variance(&a)?),
        Command::Synth(a) => (a.out.clone(), synth(&a)?),
    };
    batch.commit(&out)
}

/// Scores of one model on one language, as written by `induce` and `score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSheet {
    pub model_id: String,
    pub language: String,
    pub statements: Vec<SheetEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheetEntry {
    pub id: String,
    pub text: String,
    pub raw: f64,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarity: Option<Polarity>,
}

impl ScoreSheet {
    fn to_csv(&self) -> String {
        let with_polarity = self.statements.iter().any(|s| s.polarity.is_some());
        let mut header = vec!["model_id", "language", "id", "text"];
        if with_polarity {
            header.push("polarity");
        }
        header.extend(["raw", "score"]);
        csv_document(
            &header,
            self.statements.iter().map(|s| {
                let mut row = vec![
                    self.model_id.clone(),
                    self.language.clone(),
                    s.id.clone(),
                    s.text.clone(),
                ];
                if with_polarity {
                    row.push(s.polarity.map(Polarity::as_str).unwrap_or("").to_string());
                }
                row.extend([f6(s.raw), f6(s.score)]);
                row
            }),
        )
    }
}

fn tsv_statements(rows: impl IntoIterator<Item = (String, String)>) -> Result<String> {
    let mut out = String::new();
    for (id, text) in rows {
        if [&id, &text].iter().any(|s| s.contains(['\t', '\n', '\r'])) {
            return Err(Error::validation(format!(
                "statement {id:?} contains a tab or line break"
            )));
        }
        out.push_str(&id);
        out.push('\t');
        out.push_str(&text);
        out.push('\n');
    }
    Ok(out)
}

fn prompts(a: &PromptsArgs) -> Result<OutputBatch> {
    let verbs = direction::load_verbs(&a.verbs)?;
    let templates = PromptTemplateSet::load(&a.templates)?;
    let prompts = direction::expand_templates(&verbs, &templates)?;
    let mut batch = OutputBatch::new();
    batch.add(
        "prompts.tsv",
        tsv_statements(prompts.into_iter().map(|p| (p.id(), p.text)))?,
    );
    Ok(batch)
}

fn statements(a: &StatementsArgs) -> Result<OutputBatch> {
    let spec = QuestionnaireSpec::load(&a.spec)?;
    let rows = spec
        .statements(&a.language)
        .map_err(|e| e.in_file(&a.spec))?;
    let mut batch = OutputBatch::new();
    batch.add("statements.tsv", tsv_statements(rows)?);
    Ok(batch)
}

#[derive(Serialize)]
struct InductionReport<'a> {
    model_id: &'a str,
    language: &'a str,
    n_verbs: usize,
    n_templates: usize,
    explained_variance_ratio: f64,
    normalizer: f64,
    orientation: &'a direction::Orientation,
    verb_scores: &'a [direction::VerbScore],
}

fn induce(a: &InduceArgs) -> Result<OutputBatch> {
    let verbs = direction::load_verbs(&a.verbs)?;
    let templates = PromptTemplateSet::load(&a.templates)?;
    let set = EmbeddingSet::load(&a.embeddings)?;
    let induction = direction::induce_from_set(&set, &verbs, &templates)
        .map_err(|e| e.in_file(&a.embeddings))?;
    let model = &induction.model;
    let m = model.manifest();

    let report = InductionReport {
        model_id: &m.model_id,
        language: &m.language,
        n_verbs: verbs.len(),
        n_templates: templates.len(),
        explained_variance_ratio: model.explained_variance_ratio(),
        normalizer: model.normalizer(),
        orientation: model.orientation(),
        verb_scores: &induction.verb_scores,
    };
    let sheet = ScoreSheet {
        model_id: m.model_id.clone(),
        language: m.language.clone(),
        statements: induction
            .verb_scores
            .iter()
            .map(|v| SheetEntry {
                id: v.verb_id.clone(),
                text: v.surface.clone(),
                raw: v.raw,
                score: v.score,
                polarity: Some(v.polarity),
            })
            .collect(),
    };

    let mut batch = OutputBatch::new();
    batch.add("model.json", model.to_json());
    batch.add("induction_report.json", json_document(&report));
    batch.add("induction_scores.csv", sheet.to_csv());
    batch.add("induction_scores.json", json_document(&sheet));
    Ok(batch)
}

fn read_ids(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn score(a: &ScoreArgs) -> Result<OutputBatch> {
    let model = MoralDirectionModel::load(&a.model)?;
    let set = EmbeddingSet::load(&a.embeddings)?;
    let ids = a.ids.as_deref().map(read_ids).transpose()?;
    let scored = model
        .score_batch(&set, ids.as_deref())
        .map_err(|e| e.in_file(&a.embeddings))?;
    let sheet = ScoreSheet {
        model_id: set.manifest().model_id.clone(),
        language: set.manifest().language.clone(),
        statements: scored
            .into_iter()
            .map(|s| SheetEntry {
                id: s.id,
                text: s.text,
                raw: s.raw,
                score: s.score,
                polarity: None,
            })
            .collect(),
    };
    let mut batch = OutputBatch::new();
    batch.add("scores.csv", sheet.to_csv());
    batch.add("scores.json", json_document(&sheet));
    Ok(batch)
}

#[derive(Serialize)]
struct MfqOutput<'a> {
    result: &'a questionnaire::QuestionnaireResult,
    comparisons: Vec<(String, questionnaire::ComparisonReport)>,
}

fn mfq(a: &MfqArgs) -> Result<OutputBatch> {
    let model = MoralDirectionModel::load(&a.model)?;
    let spec = QuestionnaireSpec::load(&a.spec)?;
    let set = EmbeddingSet::load(&a.embeddings)?;
    let thresholds = CatchThresholds {
        neutral_max_abs: a.catch_neutral_max,
        polar_min: a.catch_polar_min,
    };
    let language = set.manifest().language.clone();
    let result = questionnaire::score_questionnaire(&model, &set, &spec, &language, thresholds)
        .map_err(|e| e.in_file(&a.embeddings))?;

    let comparisons = match &a.reference {
        None => Vec::new(),
        Some(path) => questionnaire::load_reference_table(path)?
            .into_iter()
            .map(|(population, reference)| {
                questionnaire::compare_to_reference(&result.aspects, &reference)
                    .map(|c| (population, c))
                    .map_err(|e| e.in_file(path))
            })
            .collect::<Result<_>>()?,
    };

    let mut batch = OutputBatch::new();
    batch.add(
        "aspects.csv",
        csv_document(
            &[
                "model_id",
                "language",
                "aspect",
                "aspect_score",
                "n_questions",
            ],
            result.aspects.iter().map(|r| {
                vec![
                    result.model_id.clone(),
                    result.language.clone(),
                    r.aspect.to_string(),
                    f6(r.aspect_score),
                    r.n_questions.to_string(),
                ]
            }),
        ),
    );
    batch.add(
        "questions.csv",
        csv_document(
            &["question_id", "raw", "multiplier", "signed"],
            result.questions.iter().map(|q| {
                vec![
                    q.question_id.clone(),
                    f6(q.score),
                    format!("{:+}", q.multiplier),
                    f6(q.signed),
                ]
            }),
        ),
    );
    batch.add("catch_report.json", json_document(&result.catch));
    if !comparisons.is_empty() {
        batch.add(
            "comparison.csv",
            csv_document(
                &["reference", "aspect", "model", "human", "difference"],
                comparisons.iter().flat_map(|(population, c)| {
                    c.rows.iter().map(move |r| {
                        vec![
                            population.clone(),
                            r.aspect.to_string(),
                            f6(r.model),
                            f6(r.human),
                            f6(r.difference),
                        ]
                    })
                }),
            ),
        );
    }
    batch.add(
        "mfq.json",
        json_document(&MfqOutput {
            result: &result,
            comparisons,
        }),
    );
    Ok(batch)
}

#[derive(Serialize)]
struct DivergenceSummary<'a> {
    model_a: &'a str,
    language_a: &'a str,
    model_b: &'a str,
    language_b: &'a str,
    top_k: usize,
    min_quality: Option<f64>,
    counts: &'a divergence::PairCounts,
    distribution: &'a divergence::DeltaDistribution,
    correlation: &'a Option<divergence::DeltaQualityCorrelation>,
}

fn diverge(a: &DivergeArgs) -> Result<OutputBatch> {
    let model_a = MoralDirectionModel::load(&a.model)?;
    let set_a = EmbeddingSet::load(&a.embeddings)?;
    let model_b = MoralDirectionModel::load(&a.model_b)?;
    let set_b = EmbeddingSet::load(&a.embeddings_b)?;
    let pairs = divergence::load_pairs(&a.pairs)?;
    let scored = divergence::score_pairs(&model_a, &set_a, &model_b, &set_b, &pairs)
        .map_err(|e| e.in_file(&a.pairs))?;
    let report = divergence::divergence_report(&scored, a.top_k, a.min_quality, a.bins)?;

    let summary = DivergenceSummary {
        model_a: &set_a.manifest().model_id,
        language_a: &set_a.manifest().language,
        model_b: &set_b.manifest().model_id,
        language_b: &set_b.manifest().language,
        top_k: report.top_k,
        min_quality: report.min_quality,
        counts: &report.counts,
        distribution: &report.distribution,
        correlation: &report.correlation,
    };
    let mut batch = OutputBatch::new();
    batch.add(
        "ranked_pairs.csv",
        csv_document(
            &[
                "pair_id", "text_a", "text_b", "score_a", "score_b", "delta", "quality",
            ],
            report.ranked.iter().map(|p| {
                vec![
                    p.pair_id.clone(),
                    p.text_a.clone(),
                    p.text_b.clone(),
                    f6(p.score_a),
                    f6(p.score_b),
                    f6(p.delta),
                    fmt_opt(p.quality),
                ]
            }),
        ),
    );
    batch.add("ranked_pairs.json", json_document(&report.ranked));
    batch.add("divergence_summary.json", json_document(&summary));
    Ok(batch)
}

fn assemble(a: &AssembleArgs) -> Result<OutputBatch> {
    let mut columns = Vec::new();
    let mut polarity = BTreeMap::new();
    for path in &a.scores {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let sheet: ScoreSheet = serde_json::from_str(&text)
            .map_err(|e| Error::Parse {
                line: e.line(),
                message: e.to_string(),
            })
            .map_err(|e| e.in_file(path))?;
        let label = format!("{}/{}", sheet.model_id, sheet.language);
        let mut column = BTreeMap::new();
        for s in sheet.statements {
            if let Some(p) = s.polarity {
                polarity.entry(s.id.clone()).or_insert(p);
            }
            if column.insert(s.id.clone(), s.score).is_some() {
                return Err(Error::DuplicateId {
                    id: s.id,
                    line: None,
                }
                .in_file(path));
            }
        }
        columns.push((label, column));
    }
    let table = ScoreTable::from_columns(columns)?;
    let polarity = polarity
        .into_iter()
        .filter(|(id, _)| table.row_ids().contains(id))
        .collect();
    let mut batch = OutputBatch::new();
    batch.add("score_table.csv", table.with_polarity(polarity).to_csv());
    Ok(batch)
}

fn matrix_csv(m: &analysis::CorrelationMatrix) -> String {
    let mut header = vec![""];
    header.extend(m.labels.iter().map(String::as_str));
    csv_document(
        &header,
        m.labels.iter().zip(&m.values).map(|(label, row)| {
            std::iter::once(label.clone())
                .chain(row.iter().map(|&r| f6(r)))
                .collect::<Vec<_>>()
        }),
    )
}

#[derive(Serialize)]
struct CorrelationOutput {
    matrix: analysis::CorrelationMatrix,
    composite: Option<analysis::CorrelationMatrix>,
    reference: Vec<analysis::ReferenceCorrelation>,
}

fn load_joined_tables(paths: &[PathBuf]) -> Result<ScoreTable> {
    let tables: Vec<ScoreTable> = paths.iter().map(ScoreTable::load).collect::<Result<_>>()?;
    if tables.len() == 1 {
        return Ok(tables.into_iter().next().expect("one table"));
    }
    let mut polarity = BTreeMap::new();
    let mut columns = Vec::new();
    for t in &tables {
        for id in t.row_ids() {
            if let Some(p) = t.polarity(id) {
                polarity.entry(id.clone()).or_insert(p);
            }
        }
        for label in t.columns() {
            let values = t.column(label)?;
            columns.push((
                label.clone(),
                t.row_ids().iter().cloned().zip(values).collect(),
            ));
        }
    }
    Ok(ScoreTable::from_columns(columns)?.with_polarity(polarity))
}

fn correlate(a: &CorrelateArgs) -> Result<OutputBatch> {
    let table = load_joined_tables(&a.tables)?;
    let matrix = analysis::correlation_matrix(&table, None)?;
    let composite = a
        .composite
        .as_deref()
        .map(|spec| {
            let (lower, upper) = spec.split_once(':').ok_or_else(|| {
                Error::validation(format!("--composite expects LOWER:UPPER, got {spec:?}"))
            })?;
            analysis::composite_matrix(&table, lower, upper)
        })
        .transpose()?;
    let reference = match &a.reference {
        None => Vec::new(),
        Some(path) => {
            let reference = analysis::load_reference(path)?;
            table
                .columns()
                .iter()
                .map(|c| {
                    analysis::correlation_with_reference(&table, c, &reference)
                        .map_err(|e| e.in_file(path))
                })
                .collect::<Result<_>>()?
        }
    };

    let mut batch = OutputBatch::new();
    batch.add("correlation_matrix.csv", matrix_csv(&matrix));
    if let Some(c) = &composite {
        batch.add("composite_matrix.csv", matrix_csv(c));
    }
    if !reference.is_empty() {
        batch.add(
            "reference_correlations.csv",
            csv_document(
                &["column", "r", "n_shared"],
                reference
                    .iter()
                    .map(|r| vec![r.column.clone(), f6(r.r), r.n_shared.to_string()]),
            ),
        );
    }
    batch.add(
        "correlation.json",
        json_document(&CorrelationOutput {
            matrix,
            composite,
            reference,
        }),
    );
    Ok(batch)
}

fn variance(a: &VarianceArgs) -> Result<OutputBatch> {
    let table = ScoreTable::load(&a.table)?;
    let report = analysis::variance_analysis(&table).map_err(|e| e.in_file(&a.table))?;
    let mut batch = OutputBatch::new();
    batch.add(
        "variance.csv",
        csv_document(
            &["row_id", "mean", "variance", "group"],
            report.rows.iter().map(|r| {
                vec![
                    r.row_id.clone(),
                    f6(r.mean),
                    f6(r.variance),
                    r.group.as_str().to_string(),
                ]
            }),
        ),
    );
    batch.add("variance_summary.json", json_document(&report));
    Ok(batch)
}

fn synth(a: &SynthArgs) -> Result<OutputBatch> {
    let fixture = synthetic::PolarityFixture::default();
    let spec = synthetic::shipped_questionnaire();
    let mut rng = synthetic::rng(a.seed);

    let mut records_a = fixture.prompt_records(&mut rng, "en");
    let mut records_b = fixture.prompt_records(&mut rng, "de");
    let verbs = fixture.verbs();
    let templates = fixture.template_set("en");

    let manifest_a = EmbeddingManifest::new("synthetic-a", "en", fixture.dim, Pooling::Sentence);
    let manifest_b = EmbeddingManifest::new("synthetic-b", "de", fixture.dim, Pooling::Sentence);
    let model_a = direction::induce_from_set(
        &EmbeddingSet::new(manifest_a.clone(), records_a.clone())?,
        &verbs,
        &templates,
    )?
    .model;
    let model_b = direction::induce_from_set(
        &EmbeddingSet::new(manifest_b.clone(), records_b.clone())?,
        &verbs,
        &templates,
    )?
    .model;

    records_a.extend(synthetic::questionnaire_records(
        &mut rng,
        &spec,
        "en",
        fixture.dim,
        fixture.noise,
    )?);
    let corpus = synthetic::DivergenceCorpus {
        pairs: 200,
        ..Default::default()
    }
    .build(&mut rng, &model_a, &model_b, fixture.noise);
    records_a.extend(corpus.records_a);
    records_b.extend(corpus.records_b);

    let set_a = EmbeddingSet::new(manifest_a, records_a)?;
    let set_b = EmbeddingSet::new(manifest_b, records_b)?;

    let verbs_csv = csv_document(
        &["verb_id", "surface", "polarity"],
        verbs.iter().map(|v| {
            vec![
                v.verb_id.clone(),
                v.surface.clone(),
                v.polarity.as_str().to_string(),
            ]
        }),
    );
    let mut pairs = String::new();
    for p in &corpus.pairs {
        pairs.push_str(&serde_json::to_string(p).expect("pair serializes"));
        pairs.push('\n');
    }
    use rand::Rng;
    let user_study = csv_document(
        &["row_id", "value"],
        verbs.iter().map(|v| {
            let sign = if v.polarity == Polarity::Positive {
                1.0
            } else {
                -1.0
            };
            let value: f64 = sign * rng.random_range(0.4..1.0);
            vec![v.verb_id.clone(), crate::report::fmt_full(value)]
        }),
    );
    let mfq_reference =
        "aspect,synthetic\ncare,0.5\nfairness,0.45\nloyalty,0.3\nauthority,0.35\npurity,0.2\n";

    let mut batch = OutputBatch::new();
    batch.add("verbs.csv", verbs_csv);
    batch.add("templates.json", json_document(&templates));
    batch.add("questionnaire.json", synthetic::MFQ30_EN);
    batch.add("embeddings_a.jsonl", set_a.to_bytes());
    batch.add("embeddings_b.jsonl", set_b.to_bytes());
    batch.add("pairs.jsonl", pairs);
    batch.add("user_study.csv", user_study);
    batch.add("mfq_reference.csv", mfq_reference);
    Ok(batch)
}
