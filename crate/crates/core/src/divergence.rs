//! Parallel-corpus divergence analysis.
//!
//! Both sides of each sentence pair are scored under their own model; the
//! signed delta `score_a - score_b` is ranked by magnitude, summarized, and
//! correlated with an externally computed translation-quality score.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::direction::MoralDirectionModel;
use crate::error::{Error, Result};
use crate::stats::{self, Histogram, Moments};
use crate::store::EmbeddingSet;

pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub pair_id: String,
    pub lang_a: String,
    pub text_a: String,
    pub embed_id_a: String,
    pub lang_b: String,
    pub text_b: String,
    pub embed_id_b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
}

/// Read newline-delimited pair records.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<ParallelPair>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text).map_err(|e| e.in_file(path))
}

pub fn parse_pairs(text: &str) -> Result<Vec<ParallelPair>> {
    let mut pairs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let pair: ParallelPair = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(pair.pair_id.clone()) {
            return Err(Error::DuplicateId {
                id: pair.pair_id,
                line: Some(line_no),
            });
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredPair {
    pub pair_id: String,
    pub text_a: String,
    pub text_b: String,
    pub score_a: f64,
    pub score_b: f64,
    pub delta: f64,
    pub abs_delta: f64,
    pub quality: Option<f64>,
}

/// Score both sides of every pair. Output order follows input order.
pub fn score_pairs(
    model_a: &MoralDirectionModel,
    set_a: &EmbeddingSet,
    model_b: &MoralDirectionModel,
    set_b: &EmbeddingSet,
    pairs: &[ParallelPair],
) -> Result<Vec<ScoredPair>> {
    let unresolved: Vec<String> = pairs
        .iter()
        .filter(|p| !set_a.contains(&p.embed_id_a) || !set_b.contains(&p.embed_id_b))
        .map(|p| p.pair_id.clone())
        .collect();
    if !unresolved.is_empty() {
        return Err(Error::NotFound {
            what: "embeddings for pair",
            ids: unresolved,
        });
    }
    pairs
        .iter()
        .map(|p| {
            if let Some(q) = p.quality.filter(|q| !q.is_finite()) {
                return Err(Error::validation(format!(
                    "pair {:?} has non-finite quality {q}",
                    p.pair_id
                )));
            }
            let score_a = model_a.score(set_a.lookup(&p.embed_id_a)?)?.score;
            let score_b = model_b.score(set_b.lookup(&p.embed_id_b)?)?.score;
            let delta = score_a - score_b;
            Ok(ScoredPair {
                pair_id: p.pair_id.clone(),
                text_a: p.text_a.clone(),
                text_b: p.text_b.clone(),
                score_a,
                score_b,
                delta,
                abs_delta: delta.abs(),
                quality: p.quality,
            })
        })
        .collect()
}

/// Pairs passing the quality threshold. Without a threshold every pair passes;
/// with one, pairs lacking a quality score are dropped.
pub fn filter_by_quality(scored: &[ScoredPair], min_quality: Option<f64>) -> Vec<&ScoredPair> {
    scored
        .iter()
        .filter(|p| match (min_quality, p.quality) {
            (None, _) => true,
            (Some(min), Some(q)) => q >= min,
            (Some(_), None) => false,
        })
        .collect()
}

fn by_divergence(a: &ScoredPair, b: &ScoredPair) -> Ordering {
    b.abs_delta
        .total_cmp(&a.abs_delta)
        .then_with(|| a.pair_id.cmp(&b.pair_id))
}

/// Top `k` pairs by |delta| (descending, ties by pair id) after filtering.
pub fn rank_divergent(
    scored: &[ScoredPair],
    k: usize,
    min_quality: Option<f64>,
) -> Vec<ScoredPair> {
    let mut kept: Vec<ScoredPair> = filter_by_quality(scored, min_quality)
        .into_iter()
        .cloned()
        .collect();
    kept.sort_by(by_divergence);
    kept.truncate(k);
    kept
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaQualityCorrelation {
    pub r_all: f64,
    /// `None` without a threshold, or when fewer than two pairs (or a constant
    /// side) survive it.
    pub r_filtered: Option<f64>,
    pub n_all: usize,
    pub n_filtered: Option<usize>,
}

/// Pearson r between signed delta and quality, over all quality-bearing pairs
/// and over those at or above `min_quality`.
pub fn delta_quality_correlation(
    scored: &[ScoredPair],
    min_quality: Option<f64>,
) -> Result<DeltaQualityCorrelation> {
    let with_quality: Vec<(f64, f64)> = scored
        .iter()
        .filter_map(|p| p.quality.map(|q| (p.delta, q)))
        .collect();
    if with_quality.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} pairs carry a quality score, need 2",
            with_quality.len()
        )));
    }
    let (d, q): (Vec<f64>, Vec<f64>) = with_quality.iter().copied().unzip();
    let r_all = stats::pearson(&d, &q)?;

    let (r_filtered, n_filtered) = match min_quality {
        None => (None, None),
        Some(min) => {
            let (d, q): (Vec<f64>, Vec<f64>) = with_quality
                .iter()
                .copied()
                .filter(|&(_, q)| q >= min)
                .unzip();
            (stats::pearson(&d, &q).ok(), Some(d.len()))
        }
    };
    Ok(DeltaQualityCorrelation {
        r_all,
        r_filtered,
        n_all: d.len(),
        n_filtered,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaDistribution {
    #[serde(flatten)]
    pub moments: Moments,
    pub histogram: Histogram,
}

pub fn delta_distribution(scored: &[ScoredPair], bins: usize) -> Result<DeltaDistribution> {
    if scored.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "delta distribution needs at least 2 pairs, got {}",
            scored.len()
        )));
    }
    let deltas: Vec<f64> = scored.iter().map(|p| p.delta).collect();
    Ok(DeltaDistribution {
        moments: stats::moments(&deltas)?,
        histogram: stats::histogram(&deltas, bins)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCounts {
    pub total: usize,
    pub filtered_out: usize,
    pub missing_quality: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub ranked: Vec<ScoredPair>,
    pub distribution: DeltaDistribution,
    /// `None` when fewer than two pairs carry quality scores.
    pub correlation: Option<DeltaQualityCorrelation>,
    pub min_quality: Option<f64>,
    pub top_k: usize,
    pub counts: PairCounts,
}

pub fn divergence_report(
    scored: &[ScoredPair],
    top_k: usize,
    min_quality: Option<f64>,
    bins: usize,
) -> Result<DivergenceReport> {
    let correlation = match delta_quality_correlation(scored, min_quality) {
        Ok(c) => Some(c),
        Err(Error::InsufficientData(_) | Error::ZeroVariance(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(DivergenceReport {
        ranked: rank_divergent(scored, top_k, min_quality),
        distribution: delta_distribution(scored, bins)?,
        correlation,
        min_quality,
        top_k,
        counts: PairCounts {
            total: scored.len(),
            filtered_out: scored.len() - filter_by_quality(scored, min_quality).len(),
            missing_quality: scored.iter().filter(|p| p.quality.is_none()).count(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(id: &str, delta: f64, quality: Option<f64>) -> ScoredPair {
        ScoredPair {
            pair_id: id.into(),
            text_a: String::new(),
            text_b: String::new(),
            score_a: delta,
            score_b: 0.0,
            delta,
            abs_delta: delta.abs(),
            quality,
        }
    }

    #[test]
    fn pure_gift_example_delta() {
        // "Pures Gift." vs "Pure poison."
        let (a, b) = (0.65_f64, -0.69_f64);
        assert!(((a - b) - 1.34).abs() < 1e-12);
    }

    #[test]
    fn ranks_by_magnitude_then_id() {
        let s = vec![
            pair("a", 0.1, None),
            pair("b", -0.9, None),
            pair("c", 0.5, None),
            pair("d", 0.5, None),
        ];
        let top = rank_divergent(&s, 2, None);
        assert_eq!(
            top.iter().map(|p| p.pair_id.as_str()).collect::<Vec<_>>(),
            ["b", "c"]
        );
        let all = rank_divergent(&s, 10, None);
        assert_eq!(
            all.iter().map(|p| p.pair_id.as_str()).collect::<Vec<_>>(),
            ["b", "c", "d", "a"]
        );
        assert!(rank_divergent(&s, 0, None).is_empty());
    }

    #[test]
    fn threshold_drops_unscored_pairs() {
        let s = vec![
            pair("a", 1.0, Some(0.9)),
            pair("b", 2.0, None),
            pair("c", 3.0, Some(0.1)),
        ];
        assert_eq!(filter_by_quality(&s, None).len(), 3);
        let kept = rank_divergent(&s, 10, Some(0.5));
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].pair_id, "a");
    }

    #[test]
    fn correlation_errors() {
        let s = vec![pair("a", 1.0, Some(0.5)), pair("b", 2.0, None)];
        assert_eq!(
            delta_quality_correlation(&s, None).unwrap_err().code(),
            "insufficient_data"
        );
        let flat = vec![
            pair("a", 1.0, Some(0.5)),
            pair("b", 2.0, Some(0.5)),
            pair("c", 0.0, Some(0.5)),
        ];
        assert_eq!(
            delta_quality_correlation(&flat, None).unwrap_err().code(),
            "zero_variance"
        );
    }

    #[test]
    fn distribution_examples() {
        let d = delta_distribution(&[pair("a", -1.0, None), pair("b", 1.0, None)], DEFAULT_BINS)
            .unwrap();
        assert_eq!(d.moments.mean, 0.0);
        assert!((d.moments.std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(d.histogram.counts.len(), DEFAULT_BINS);

        let flat: Vec<ScoredPair> = (0..5).map(|i| pair(&i.to_string(), 0.3, None)).collect();
        let d = delta_distribution(&flat, 10).unwrap();
        assert_eq!(d.moments.std, 0.0);
        assert_eq!(
            (d.moments.skewness, d.moments.excess_kurtosis),
            (None, None)
        );

        assert!(delta_distribution(&flat[..1], 10).is_err());
    }

    #[test]
    fn pair_file_parsing() {
        let text = concat!(
            r#"{"pair_id":"p1","lang_a":"de","text_a":"Pures Gift.","embed_id_a":"s1","lang_b":"en","text_b":"Pure poison.","embed_id_b":"s1","quality":-0.2}"#,
            "\n\n",
            r#"{"pair_id":"p2","lang_a":"de","text_a":"x","embed_id_a":"s2","lang_b":"en","text_b":"y","embed_id_b":"s2"}"#,
            "\n"
        );
        let pairs = parse_pairs(text).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].quality, Some(-0.2));
        assert_eq!(pairs[1].quality, None);

        let dup = format!(
            "{}\n{}",
            text.lines().next().unwrap(),
            text.lines().next().unwrap()
        );
        assert_eq!(parse_pairs(&dup).unwrap_err().code(), "duplicate_id");
        match parse_pairs("{\"pair_id\":1}\n").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            e => panic!("{e:?}"),
        }
    }
}
