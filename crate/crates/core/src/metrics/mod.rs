//! Scoring functions for next-step prediction, full generation and retrieval.
//!
//! Everything here is pure. Function names compare case-sensitively,
//! argument names case-insensitively.

mod bleu;
mod edit;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{PseudoCall, PseudoProgram};
use crate::embedding::{cosine, Embedder};

pub use bleu::{bleu_tokens, sentence_bleu};
pub use edit::{levenshtein, levenshtein_normalized, AlignStep, Alignment, EditOp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("prediction has {pred} entries but gold has {gold}")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("callee mismatch: predicted `{pred}`, gold `{gold}`")]
    CalleeMismatch { pred: String, gold: String },
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("zero-norm embedding for `{0}`")]
    ZeroNorm(String),
    #[error("embedder failed: {0}")]
    Embedder(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
}

impl PrecisionRecall {
    pub const fn new(precision: f64, recall: f64) -> Self {
        Self { precision, recall }
    }
}

pub type RetrievalScore = PrecisionRecall;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextStepScore {
    pub function_accuracy: f64,
    pub arg_name_precision: Option<f64>,
    pub arg_name_recall: Option<f64>,
    pub arg_value_bleu: Option<f64>,
    pub arg_value_embedscore: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationScore {
    pub function_precision: f64,
    pub function_recall: f64,
    /// Can exceed 1 when the prediction is much longer than gold.
    pub levenshtein_normalized: f64,
    pub arg_name_precision: Option<f64>,
    pub arg_name_recall: Option<f64>,
    pub arg_value_bleu: Option<f64>,
    pub arg_value_embedscore: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Precision and recall from an intersection size and the two side sizes.
///
/// Both sides empty gives (1, 1); an empty prediction gives precision 1;
/// an empty gold gives recall 1.
pub fn pr_from_counts(hits: usize, pred: usize, gold: usize) -> PrecisionRecall {
    let precision = if pred == 0 { 1.0 } else { hits as f64 / pred as f64 };
    let recall = if gold == 0 { 1.0 } else { hits as f64 / gold as f64 };
    PrecisionRecall::new(precision, recall)
}

/// Fraction of positions whose predicted name equals the gold name.
///
/// `None` in the prediction marks an unparseable answer and never matches.
pub fn function_accuracy(pred: &[Option<&str>], gold: &[&str]) -> Result<f64, MetricError> {
    if pred.len() != gold.len() {
        return Err(MetricError::LengthMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricError::Empty("gold sequence"));
    }
    let correct = pred
        .iter()
        .zip(gold)
        .filter(|(p, g)| p.is_some_and(|p| p == **g))
        .count();
    Ok(correct as f64 / gold.len() as f64)
}

fn lowercase_arg_names(call: &PseudoCall) -> BTreeSet<String> {
    call.args.iter().map(|a| a.name.to_lowercase()).collect()
}

/// Argument-name precision/recall for a correctly predicted call.
pub fn argument_name_pr(pred: &PseudoCall, gold: &PseudoCall) -> Result<PrecisionRecall, MetricError> {
    if pred.callee != gold.callee {
        return Err(MetricError::CalleeMismatch {
            pred: pred.callee.clone(),
            gold: gold.callee.clone(),
        });
    }
    let p = lowercase_arg_names(pred);
    let g = lowercase_arg_names(gold);
    Ok(pr_from_counts(p.intersection(&g).count(), p.len(), g.len()))
}

/// Value pairs `(pred text, gold text)` for arguments present in both calls.
pub fn argument_value_pairs(pred: &PseudoCall, gold: &PseudoCall) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    for g in &gold.args {
        if let Some(p) = pred
            .args
            .iter()
            .find(|p| p.name.to_lowercase() == g.name.to_lowercase())
        {
            pairs.push((p.value.as_text(), g.value.as_text()));
        }
    }
    pairs
}

/// Mean sentence BLEU over value pairs, `None` for no pairs.
pub fn argument_value_bleu(pairs: &[(String, String)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let total: f64 = pairs.iter().map(|(p, g)| sentence_bleu(p, g)).sum();
    Some(total / pairs.len() as f64)
}

/// Mean cosine similarity between embedded value pairs, `None` for no pairs.
pub fn argument_value_embedscore(
    pairs: &[(String, String)],
    embedder: &dyn Embedder,
) -> Result<Option<f64>, MetricError> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let texts: Vec<String> = pairs.iter().flat_map(|(p, g)| [p.clone(), g.clone()]).collect();
    let vectors = embedder
        .embed(&texts)
        .map_err(|e| MetricError::Embedder(e.to_string()))?;
    if vectors.len() != texts.len() {
        return Err(MetricError::Embedder(format!(
            "expected {} vectors, got {}",
            texts.len(),
            vectors.len()
        )));
    }
    let mut total = 0.0;
    for (i, pair) in vectors.chunks(2).enumerate() {
        let cos = cosine(&pair[0], &pair[1]).ok_or_else(|| {
            let (p, g) = &pairs[i];
            let bad = if pair[0].iter().all(|x| *x == 0.0) { p } else { g };
            MetricError::ZeroNorm(bad.clone())
        })?;
        total += cos;
    }
    Ok(Some(total / pairs.len() as f64))
}

fn name_counts<'a>(names: impl Iterator<Item = &'a str>) -> HashMap<&'a str, usize> {
    let mut counts = HashMap::new();
    for n in names {
        *counts.entry(n).or_insert(0) += 1;
    }
    counts
}

/// Precision/recall over callee multisets.
pub fn multiset_function_pr(pred: &PseudoProgram, gold: &PseudoProgram) -> PrecisionRecall {
    let p = name_counts(pred.calls.iter().map(|c| c.callee.as_str()));
    let g = name_counts(gold.calls.iter().map(|c| c.callee.as_str()));
    let hits: usize = p
        .iter()
        .map(|(name, n)| (*n).min(g.get(name).copied().unwrap_or(0)))
        .sum();
    pr_from_counts(hits, pred.len(), gold.len())
}

/// A call pair sitting on a `Match` step of the optimal alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct CallMatch {
    pub pred_index: usize,
    pub gold_index: usize,
    pub value_pairs: Vec<(String, String)>,
}

/// Aligns two programs by callee name and pairs arguments of matched calls.
pub fn generation_argument_pairs(pred: &PseudoProgram, gold: &PseudoProgram) -> Vec<CallMatch> {
    let (_, alignment) = levenshtein(&pred.callee_names(), &gold.callee_names());
    alignment
        .steps
        .iter()
        .filter(|s| s.op == EditOp::Match)
        .filter_map(|s| Some((s.pred?, s.gold?)))
        .map(|(pi, gi)| CallMatch {
            pred_index: pi,
            gold_index: gi,
            value_pairs: argument_value_pairs(&pred.calls[pi], &gold.calls[gi]),
        })
        .collect()
}

/// Set precision/recall of selected function names.
pub fn retrieval_pr(selected: &BTreeSet<String>, gold: &BTreeSet<String>) -> RetrievalScore {
    pr_from_counts(selected.intersection(gold).count(), selected.len(), gold.len())
}

/// Mean and sample standard deviation (n - 1); std is 0 for one value.
pub fn aggregate(values: &[f64]) -> Result<MeanStd, MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty("value list"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() == 1 {
        0.0
    } else {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    };
    Ok(MeanStd { mean, std })
}

/// Mean of the present values, `None` if there are none.
pub fn mean_present(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.into_iter().flatten().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::embedding::EmbedError;
    use proptest::prelude::*;

    fn prog(src: &str) -> PseudoProgram {
        parse_program(src).unwrap()
    }

    fn names(src: &str) -> Vec<String> {
        src.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn accuracy_examples() {
        let g = ["Mix", "Spin", "Dry"];
        let same: Vec<Option<&str>> = g.iter().map(|s| Some(*s)).collect();
        assert_eq!(function_accuracy(&same, &g).unwrap(), 1.0);
        let pred = [Some("Mix"), Some("Dry"), Some("Dry")];
        assert!((function_accuracy(&pred, &["Mix", "Spin", "Dry"]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let pred = [Some("A"), Some("B"), None, Some("D")];
        assert_eq!(function_accuracy(&pred, &["W", "X", "Y", "Z"]).unwrap(), 0.0);
        assert_eq!(
            function_accuracy(&[Some("A")], &["A", "B"]),
            Err(MetricError::LengthMismatch { pred: 1, gold: 2 })
        );
        // case-sensitive
        assert_eq!(function_accuracy(&[Some("mix")], &["Mix"]).unwrap(), 0.0);
    }

    #[test]
    fn argument_name_examples() {
        let a = prog("Mix(volume=\"1 mL\", time=\"1 min\")").calls.remove(0);
        let b = prog("Mix(Volume=\"1 mL\", temperature=\"4 C\")").calls.remove(0);
        assert_eq!(argument_name_pr(&a, &b).unwrap(), PrecisionRecall::new(0.5, 0.5));
        assert_eq!(argument_name_pr(&a, &a).unwrap(), PrecisionRecall::new(1.0, 1.0));
        let empty = prog("Mix()").calls.remove(0);
        let one = prog("Mix(volume=\"1 mL\")").calls.remove(0);
        assert_eq!(argument_name_pr(&empty, &one).unwrap(), PrecisionRecall::new(1.0, 0.0));
        assert_eq!(argument_name_pr(&one, &empty).unwrap(), PrecisionRecall::new(0.0, 1.0));
        assert_eq!(
            argument_name_pr(&empty, &empty).unwrap(),
            PrecisionRecall::new(1.0, 1.0)
        );
        let other = prog("Spin(volume=\"1 mL\")").calls.remove(0);
        assert!(matches!(
            argument_name_pr(&one, &other),
            Err(MetricError::CalleeMismatch { .. })
        ));
    }

    #[test]
    fn bleu_means_and_absence() {
        assert_eq!(argument_value_bleu(&[]), None);
        let pairs = vec![("500 uL".to_string(), "500 uL".to_string())];
        assert_eq!(argument_value_bleu(&pairs), Some(1.0));
    }

    struct Basis(usize);

    impl Embedder for Basis {
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
            Ok(texts
                .iter()
                .map(|t| {
                    let mut v = vec![0.0; self.0];
                    v[t.len() % self.0] = 1.0;
                    v
                })
                .collect())
        }
    }

    #[test]
    fn embedscore_examples() {
        let e = Basis(8);
        let same = vec![("abc".to_string(), "abc".to_string())];
        assert_eq!(argument_value_embedscore(&same, &e).unwrap(), Some(1.0));
        let orth = vec![("a".to_string(), "ab".to_string())];
        assert_eq!(argument_value_embedscore(&orth, &e).unwrap(), Some(0.0));
        let mixed = vec![
            ("abc".to_string(), "xyz".to_string()),
            ("a".to_string(), "ab".to_string()),
        ];
        assert_eq!(argument_value_embedscore(&mixed, &e).unwrap(), Some(0.5));
        assert_eq!(argument_value_embedscore(&[], &e).unwrap(), None);
    }

    struct Zero;

    impl Embedder for Zero {
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
            Ok(texts.iter().map(|_| vec![0.0; 3]).collect())
        }
    }

    #[test]
    fn embedscore_rejects_zero_vectors() {
        let pairs = vec![("a".to_string(), "b".to_string())];
        assert_eq!(
            argument_value_embedscore(&pairs, &Zero),
            Err(MetricError::ZeroNorm("a".into()))
        );
    }

    #[test]
    fn multiset_examples() {
        let pred = prog("Mix(a=1)\nMix(a=1)\nSpin(a=1)");
        let gold = prog("Mix(a=1)\nSpin(a=1)");
        let pr = multiset_function_pr(&pred, &gold);
        assert!((pr.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(pr.recall, 1.0);
        let shuffled = prog("Spin(a=1)\nMix(a=1)");
        assert_eq!(multiset_function_pr(&shuffled, &gold), PrecisionRecall::new(1.0, 1.0));
        let disjoint = prog("Dry(a=1)");
        assert_eq!(multiset_function_pr(&disjoint, &gold), PrecisionRecall::new(0.0, 0.0));
    }

    #[test]
    fn generation_pairs_follow_alignment() {
        let pred = prog("Mix(v=\"1 mL\")\nSpin(t=\"1 min\")");
        let gold = prog("Spin(t=\"2 min\")");
        let matches = generation_argument_pairs(&pred, &gold);
        assert_eq!(
            matches,
            vec![CallMatch {
                pred_index: 1,
                gold_index: 0,
                value_pairs: vec![("1 min".into(), "2 min".into())],
            }]
        );
        let same = generation_argument_pairs(&pred, &pred);
        assert_eq!(same.len(), 2);
        assert!(same.iter().all(|m| m.value_pairs.len() == 1));
        assert!(generation_argument_pairs(&prog("Dry(t=1)"), &gold).is_empty());
    }

    #[test]
    fn retrieval_examples() {
        let set = |s: &str| -> BTreeSet<String> { names(s).into_iter().collect() };
        assert_eq!(
            retrieval_pr(&set("Mix Spin"), &set("Mix Dry")),
            PrecisionRecall::new(0.5, 0.5)
        );
        assert_eq!(retrieval_pr(&set("Mix"), &set("Mix")), PrecisionRecall::new(1.0, 1.0));
        assert_eq!(retrieval_pr(&set(""), &set("Mix")), PrecisionRecall::new(1.0, 0.0));
    }

    #[test]
    fn aggregate_examples() {
        let two = aggregate(&[2.0, 4.0]).unwrap();
        assert_eq!(two.mean, 3.0);
        assert!((two.std - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(aggregate(&[5.0]).unwrap(), MeanStd { mean: 5.0, std: 0.0 });
        assert_eq!(aggregate(&[1.0, 1.0, 1.0]).unwrap(), MeanStd { mean: 1.0, std: 0.0 });
        let runs = aggregate(&[0.6, 0.8]).unwrap();
        assert!((runs.mean - 0.7).abs() < 1e-12);
        assert!((runs.std - 0.141_421_356_237_309_5).abs() < 1e-12);
        assert!(aggregate(&[]).is_err());
    }

    fn program_from(names: &[u8]) -> PseudoProgram {
        let src: Vec<String> = names.iter().map(|n| format!("F{n}(a=1)")).collect();
        prog(&src.join("\n"))
    }

    proptest! {
        #[test]
        fn multiset_pr_bounds_and_permutation(
            a in prop::collection::vec(0u8..4, 0..8),
            b in prop::collection::vec(0u8..4, 0..8),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let pa = program_from(&a);
            let pb = program_from(&b);
            let pr = multiset_function_pr(&pa, &pb);
            prop_assert!((0.0..=1.0).contains(&pr.precision));
            prop_assert!((0.0..=1.0).contains(&pr.recall));

            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut a2 = a.clone();
            a2.shuffle(&mut rng);
            prop_assert_eq!(multiset_function_pr(&program_from(&a2), &pb), pr);

            let mut sa = a.clone();
            sa.sort();
            let mut sb = b.clone();
            sb.sort();
            let perfect = pr.precision == 1.0 && pr.recall == 1.0;
            prop_assert_eq!(perfect, sa == sb);
        }
    }
}
