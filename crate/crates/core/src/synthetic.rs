//! Seeded synthetic fixtures.
//!
//! The moral axis is the first coordinate: positive verbs sit near `+2·e₁`,
//! negative verbs near `−2·e₁`, and every other coordinate carries Gaussian
//! noise. Statements with a target score `t` are placed at `2t·e₁` plus the
//! same orthogonal noise, so an induced model scores them close to `t`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::direction::{
    expand_templates, InductionVerb, MoralDirectionModel, Polarity, PromptTemplateSet,
};
use crate::divergence::ParallelPair;
use crate::error::Result;
use crate::questionnaire::{Aspect, CatchKind, QuestionnaireSpec};
use crate::store::{EmbeddingManifest, EmbeddingRecord, EmbeddingSet, Pooling};

/// The shipped simplified English MFQ statements.
pub const MFQ30_EN: &str = include_str!("../data/mfq30_en.json");
/// The two example templates.
pub const TEMPLATES_EN: &str = include_str!("../data/templates_en.json");

pub fn shipped_questionnaire() -> QuestionnaireSpec {
    QuestionnaireSpec::from_json(MFQ30_EN).expect("shipped questionnaire is valid")
}

#[derive(Debug, Clone)]
pub struct PolarityFixture {
    pub positives: usize,
    pub negatives: usize,
    pub templates: usize,
    pub dim: usize,
    /// Distance of the verb clusters from the origin along e₁.
    pub separation: f64,
    /// Standard deviation of the noise on coordinates 2..dim.
    pub noise: f64,
}

impl Default for PolarityFixture {
    fn default() -> Self {
        PolarityFixture {
            positives: 5,
            negatives: 5,
            templates: 3,
            dim: 8,
            separation: 2.0,
            noise: 0.1,
        }
    }
}

pub struct Fixture {
    pub verbs: Vec<InductionVerb>,
    pub templates: PromptTemplateSet,
    /// Prompt embeddings keyed `<verb_id>#<template_index>`.
    pub set: EmbeddingSet,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn orthogonal_noise(rng: &mut ChaCha8Rng, dim: usize, sigma: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mut v = vec![0.0; dim];
    for x in v.iter_mut().skip(1) {
        *x = normal.sample(rng);
    }
    v
}

/// Vector whose first coordinate is `axis` plus orthogonal noise.
pub fn on_axis(rng: &mut ChaCha8Rng, dim: usize, axis: f64, sigma: f64) -> Vec<f64> {
    let mut v = orthogonal_noise(rng, dim, sigma);
    v[0] = axis;
    v
}

impl PolarityFixture {
    pub fn verbs(&self) -> Vec<InductionVerb> {
        let pos = (0..self.positives).map(|i| (format!("good{i}"), Polarity::Positive));
        let neg = (0..self.negatives).map(|i| (format!("bad{i}"), Polarity::Negative));
        pos.chain(neg)
            .map(|(id, polarity)| InductionVerb {
                surface: id.clone(),
                verb_id: id,
                polarity,
            })
            .collect()
    }

    pub fn template_set(&self, language: &str) -> PromptTemplateSet {
        let templates = (0..self.templates)
            .map(|i| format!("Template {i}: should I [verb]?"))
            .collect();
        PromptTemplateSet::new(language, templates).expect("fixture templates are valid")
    }

    /// Prompt-embedding records for every verb × template.
    pub fn prompt_records(&self, rng: &mut ChaCha8Rng, language: &str) -> Vec<EmbeddingRecord> {
        let verbs = self.verbs();
        let prompts =
            expand_templates(&verbs, &self.template_set(language)).expect("valid templates");
        let polarity: BTreeMap<&str, Polarity> = verbs
            .iter()
            .map(|v| (v.verb_id.as_str(), v.polarity))
            .collect();
        prompts
            .iter()
            .map(|p| {
                let axis = match polarity[p.verb_id.as_str()] {
                    Polarity::Positive => self.separation,
                    Polarity::Negative => -self.separation,
                };
                EmbeddingRecord {
                    id: p.id(),
                    text: p.text.clone(),
                    vector: on_axis(rng, self.dim, axis, self.noise),
                }
            })
            .collect()
    }

    pub fn build(&self, seed: u64, model_id: &str, language: &str) -> Fixture {
        let mut rng = rng(seed);
        let records = self.prompt_records(&mut rng, language);
        let manifest = EmbeddingManifest::new(model_id, language, self.dim, Pooling::Sentence);
        Fixture {
            verbs: self.verbs(),
            templates: self.template_set(language),
            set: EmbeddingSet::new(manifest, records).expect("fixture records are valid"),
        }
    }
}

/// Target score for a questionnaire item: reverse-coded items get negative
/// raw scores so that their signed scores come out positive.
fn questionnaire_target(
    rng: &mut ChaCha8Rng,
    aspect: Aspect,
    multiplier: i8,
    catch: Option<CatchKind>,
) -> f64 {
    match (aspect, catch) {
        (Aspect::Catch, Some(CatchKind::Neutral)) => rng.random_range(-0.05..0.05),
        (Aspect::Catch, _) => rng.random_range(0.6..0.9),
        _ => f64::from(multiplier) * rng.random_range(0.1..0.8),
    }
}

/// Records for every question of `spec` in `language`.
pub fn questionnaire_records(
    rng: &mut ChaCha8Rng,
    spec: &QuestionnaireSpec,
    language: &str,
    dim: usize,
    noise: f64,
) -> Result<Vec<EmbeddingRecord>> {
    let statements = spec.statements(language)?;
    Ok(spec
        .questions
        .iter()
        .zip(statements)
        .map(|(q, (id, text))| {
            let t = questionnaire_target(rng, q.aspect, q.multiplier, q.catch_kind);
            EmbeddingRecord {
                id,
                text,
                vector: on_axis(rng, dim, 2.0 * t, noise),
            }
        })
        .collect())
}

/// Place `vector` so that `model` scores it exactly `target` up to rounding,
/// keeping `noise` orthogonal to the direction.
pub fn with_score(model: &MoralDirectionModel, target: f64, noise: &[f64]) -> Vec<f64> {
    let d = model.direction();
    let along: f64 = noise.iter().zip(d).map(|(n, d)| n * d).sum();
    model
        .mean()
        .iter()
        .zip(d)
        .zip(noise)
        .map(|((m, d), n)| m + target * model.normalizer() * d + (n - along * d))
        .collect()
}

#[derive(Debug, Clone)]
pub struct DivergenceCorpus {
    pub pairs: usize,
    /// Pairs below this quality carry an inflated positive delta.
    pub low_quality_below: f64,
    /// Size of the inflation for low-quality pairs.
    pub inflation: f64,
    /// Per-side score noise.
    pub side_noise: f64,
}

impl Default for DivergenceCorpus {
    fn default() -> Self {
        DivergenceCorpus {
            pairs: 1000,
            low_quality_below: 0.3,
            inflation: 0.8,
            side_noise: 0.05,
        }
    }
}

pub struct CorpusSides {
    pub pairs: Vec<ParallelPair>,
    pub records_a: Vec<EmbeddingRecord>,
    pub records_b: Vec<EmbeddingRecord>,
}

impl DivergenceCorpus {
    /// Sentence pairs scored near a shared base score. Quality is uniform on
    /// [0, 1); pairs below `low_quality_below` get side A pushed up by roughly
    /// `inflation`, and every pair gets a mild `0.05·(1 − q)` push so the
    /// delta/quality correlation stays non-positive after filtering.
    pub fn build(
        &self,
        rng: &mut ChaCha8Rng,
        model_a: &MoralDirectionModel,
        model_b: &MoralDirectionModel,
        noise: f64,
    ) -> CorpusSides {
        let side = Normal::new(0.0, self.side_noise).expect("valid sigma");
        let spread = Normal::new(0.0, self.inflation / 2.0).expect("valid sigma");
        let mut pairs = Vec::with_capacity(self.pairs);
        let mut records_a = Vec::with_capacity(self.pairs);
        let mut records_b = Vec::with_capacity(self.pairs);
        for i in 0..self.pairs {
            let base: f64 = rng.random_range(-0.8..0.8);
            let quality: f64 = rng.random();
            let mut target_a = base + side.sample(rng) + 0.05 * (1.0 - quality);
            let target_b = base + side.sample(rng);
            if quality < self.low_quality_below {
                target_a += self.inflation + spread.sample(rng).abs();
            }
            let id = format!("s{i:05}");
            let noise_a = on_axis(rng, model_a.dim(), 0.0, noise);
            let noise_b = on_axis(rng, model_b.dim(), 0.0, noise);
            records_a.push(EmbeddingRecord {
                id: id.clone(),
                text: format!("sentence {i} (a)"),
                vector: with_score(model_a, target_a, &noise_a),
            });
            records_b.push(EmbeddingRecord {
                id: id.clone(),
                text: format!("sentence {i} (b)"),
                vector: with_score(model_b, target_b, &noise_b),
            });
            pairs.push(ParallelPair {
                pair_id: format!("p{i:05}"),
                lang_a: model_a.manifest().language.clone(),
                text_a: format!("sentence {i} (a)"),
                embed_id_a: id.clone(),
                lang_b: model_b.manifest().language.clone(),
                text_b: format!("sentence {i} (b)"),
                embed_id_b: id,
                quality: Some(quality),
            });
        }
        CorpusSides {
            pairs,
            records_a,
            records_b,
        }
    }
}
