//! Independent oracles and fixture helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use moraldir::cli::{self, Cli};
use moraldir::direction::{self, MoralDirectionModel};
use moraldir::{EmbeddingManifest, Polarity, Pooling};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| random_vec(rng, d)).collect()
}

/// Sample covariance, accumulated entry by entry.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut c = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            c[i][j] = rows
                .iter()
                .map(|r| (r[i] - mean[i]) * (r[j] - mean[j]))
                .sum::<f64>()
                / (n - 1) as f64;
        }
    }
    c
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
/// eigenvalues and the eigenvectors as columns of the second result.
#[allow(clippy::needless_range_loop)]
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Dominant eigenvector of the sample covariance and the eigenvalue gap to
/// the runner-up (relative to the largest).
pub fn dominant_eigenvector(rows: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let (vals, vecs) = jacobi_eigen(&covariance(rows));
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
    let top = order[0];
    let gap = if vals.len() > 1 {
        (vals[top] - vals[order[1]]) / vals[top]
    } else {
        1.0
    };
    (vecs.iter().map(|row| row[top]).collect(), gap)
}

/// Flip `b` to point the same way as `a`, then return the largest
/// componentwise difference.
pub fn max_diff_up_to_sign(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let s = if dot < 0.0 { -1.0 } else { 1.0 };
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - s * y).abs())
        .fold(0.0, f64::max)
}

/// Textbook single-pass Pearson formula.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

pub fn sample_variance_oracle(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Model on a 2-D space whose direction is exactly e₁, mean exactly 0 and
/// normalizer exactly 1, so a vector `[s, 0]` scores exactly `s`.
pub fn unit_axis_model(model_id: &str, language: &str) -> MoralDirectionModel {
    let vectors: BTreeMap<String, Vec<f64>> = [
        ("bad".to_string(), vec![-1.0, 0.0]),
        ("good".to_string(), vec![1.0, 0.0]),
    ]
    .into();
    let polarity: BTreeMap<String, Polarity> = [
        ("bad".to_string(), Polarity::Negative),
        ("good".to_string(), Polarity::Positive),
    ]
    .into();
    let manifest = EmbeddingManifest::new(model_id, language, 2, Pooling::Sentence);
    let model = direction::induce(&vectors, &polarity, &manifest).unwrap();
    assert_eq!(model.mean(), &[0.0, 0.0]);
    assert_eq!(model.direction(), &[1.0, 0.0]);
    assert_eq!(model.normalizer(), 1.0);
    model
}

/// Run the CLI in-process.
pub fn run_cli<I, S>(args: I) -> moraldir::Result<Vec<PathBuf>>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = std::iter::once("moraldir".into())
        .chain(args.into_iter().map(Into::into))
        .collect();
    cli::run(Cli::try_parse_from(argv).expect("valid arguments"))
}

pub fn p(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

/// Every file under `dir` with its bytes, keyed by name.
pub fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corruption {
    DimChange,
    NonFinite,
    DuplicateId,
}

impl Corruption {
    pub const ALL: [Corruption; 3] = [
        Corruption::DimChange,
        Corruption::NonFinite,
        Corruption::DuplicateId,
    ];

    pub fn expected_code(self) -> &'static str {
        match self {
            Corruption::DimChange => "dim_mismatch",
            Corruption::NonFinite => "non_finite",
            Corruption::DuplicateId => "duplicate_id",
        }
    }
}

/// Damage record `target` of a serialized embedding file. `pick` selects the
/// component, the non-finite token, or the id donor. Needs at least two records.
pub fn corrupt(file: &[u8], kind: Corruption, target: usize, pick: usize) -> Vec<u8> {
    let text = std::str::from_utf8(file).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let n_records = lines.len() - 1;
    assert!(n_records >= 2 && target < n_records);
    let mut rec: serde_json::Value = serde_json::from_str(&lines[target + 1]).unwrap();
    let vector = rec["vector"].as_array_mut().unwrap();
    let line = match kind {
        Corruption::DimChange => {
            if pick.is_multiple_of(2) || vector.len() == 1 {
                vector.push(serde_json::json!(0.25));
            } else {
                vector.pop();
            }
            rec.to_string()
        }
        Corruption::NonFinite => {
            let i = pick % vector.len();
            vector[i] = serde_json::json!("__BAD__");
            let token = ["NaN", "Infinity", "-Infinity"][pick % 3];
            rec.to_string().replace("\"__BAD__\"", token)
        }
        Corruption::DuplicateId => {
            let donor = (target + 1 + pick % (n_records - 1)) % n_records;
            let other: serde_json::Value = serde_json::from_str(&lines[donor + 1]).unwrap();
            rec["id"] = other["id"].clone();
            rec.to_string()
        }
    };
    lines[target + 1] = line;
    let mut out = lines.join("\n");
    out.push('\n');
    out.into_bytes()
}

/// Six questions over care, fairness and loyalty with mixed multipliers, and
/// the exact raw score each question's embedding carries under
/// [`unit_axis_model`].
pub const SIX_QUESTIONS: [(&str, &str, i8, f64); 6] = [
    ("q1", "care", 1, 0.5),
    ("q2", "care", -1, -0.25),
    ("q3", "fairness", 1, 0.75),
    ("q4", "fairness", 1, -0.125),
    ("q5", "loyalty", -1, 0.375),
    ("q6", "loyalty", 1, 0.0625),
];

pub fn questionnaire_json(questions: &[(&str, &str, i8, f64)]) -> String {
    let items: Vec<serde_json::Value> = questions
        .iter()
        .map(|(id, aspect, m, _)| {
            serde_json::json!({
                "id": id,
                "aspect": aspect,
                "multiplier": m,
                "rephrased": false,
                "text": {"en": format!("statement {id}")},
            })
        })
        .collect();
    serde_json::json!({"version": "test", "questions": items}).to_string()
}

/// Embeddings `[raw, 0]` for each question under [`unit_axis_model`].
pub fn questionnaire_set(questions: &[(&str, &str, i8, f64)]) -> moraldir::EmbeddingSet {
    let records = questions
        .iter()
        .map(|(id, _, _, raw)| moraldir::EmbeddingRecord {
            id: id.to_string(),
            text: format!("statement {id}"),
            vector: vec![*raw, 0.0],
        })
        .collect();
    moraldir::EmbeddingSet::new(
        EmbeddingManifest::new("axis", "en", 2, Pooling::Sentence),
        records,
    )
    .unwrap()
}

pub struct Corpus {
    pub model_a: MoralDirectionModel,
    pub set_a: moraldir::EmbeddingSet,
    pub model_b: MoralDirectionModel,
    pub set_b: moraldir::EmbeddingSet,
    pub pairs: Vec<moraldir::divergence::ParallelPair>,
}

/// Two induced models and a parallel corpus whose low-quality pairs carry
/// inflated deltas.
pub fn divergence_corpus(seed: u64, pairs: usize) -> Corpus {
    use moraldir::synthetic::{DivergenceCorpus, PolarityFixture};
    let fixture = PolarityFixture::default();
    let fa = fixture.build(seed, "model-a", "en");
    let fb = fixture.build(seed + 1, "model-b", "de");
    let model_a = direction::induce_from_set(&fa.set, &fa.verbs, &fa.templates)
        .unwrap()
        .model;
    let model_b = direction::induce_from_set(&fb.set, &fb.verbs, &fb.templates)
        .unwrap()
        .model;
    let mut rng = rng(seed + 2);
    let sides = DivergenceCorpus {
        pairs,
        ..Default::default()
    }
    .build(&mut rng, &model_a, &model_b, fixture.noise);
    let set_a = moraldir::EmbeddingSet::new(model_a.manifest().clone(), sides.records_a).unwrap();
    let set_b = moraldir::EmbeddingSet::new(model_b.manifest().clone(), sides.records_b).unwrap();
    Corpus {
        model_a,
        set_a,
        model_b,
        set_b,
        pairs: sides.pairs,
    }
}

/// The same pairs with sides A and B exchanged.
pub fn swap_sides(
    pairs: &[moraldir::divergence::ParallelPair],
) -> Vec<moraldir::divergence::ParallelPair> {
    pairs
        .iter()
        .map(|p| moraldir::divergence::ParallelPair {
            pair_id: p.pair_id.clone(),
            lang_a: p.lang_b.clone(),
            text_a: p.text_b.clone(),
            embed_id_a: p.embed_id_b.clone(),
            lang_b: p.lang_a.clone(),
            text_b: p.text_a.clone(),
            embed_id_b: p.embed_id_a.clone(),
            quality: p.quality,
        })
        .collect()
}
