//! Sentence-level BLEU for short argument values.
//!
//! Tokens are lowercase word runs and single punctuation marks. N-gram
//! orders run from 1 to `min(4, candidate length)` with uniform weights; a
//! zero match count is floored at 1e-9 before taking logs.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

const MAX_ORDER: usize = 4;
const EPSILON: f64 = 1e-9;

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+|[^\w\s]").unwrap())
}

pub fn bleu_tokens(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    token_re().find_iter(&lower).map(|m| m.as_str().to_string()).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// BLEU of `candidate` against a single `reference`.
pub fn sentence_bleu(candidate: &str, reference: &str) -> f64 {
    let cand = bleu_tokens(candidate);
    let refr = bleu_tokens(reference);
    if cand.is_empty() {
        return if refr.is_empty() { 1.0 } else { 0.0 };
    }
    let orders = cand.len().min(MAX_ORDER);
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let c = ngram_counts(&cand, n);
        let r = ngram_counts(&refr, n);
        let matched: usize = c
            .iter()
            .map(|(gram, count)| (*count).min(r.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = (cand.len() - n + 1) as f64;
        let numerator = if matched == 0 { EPSILON } else { matched as f64 };
        log_sum += (numerator / total).ln();
    }
    let c_len = cand.len() as f64;
    let r_len = refr.len() as f64;
    let brevity = if c_len < r_len {
        (1.0 - r_len / c_len).exp()
    } else {
        1.0
    };
    brevity * (log_sum / orders as f64).exp()
}
