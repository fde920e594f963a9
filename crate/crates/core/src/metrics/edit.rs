//! Unit-cost edit distance over call-name sequences, with one optimal path.

use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOp {
    Match,
    Substitute,
    /// Insert a gold element missing from the prediction.
    Insert,
    /// Drop a predicted element absent from gold.
    Delete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignStep {
    pub op: EditOp,
    pub pred: Option<usize>,
    pub gold: Option<usize>,
}

/// Steps that turn the predicted sequence into the gold one.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub steps: Vec<AlignStep>,
}

impl Alignment {
    /// Number of non-match steps.
    pub fn cost(&self) -> usize {
        self.steps.iter().filter(|s| s.op != EditOp::Match).count()
    }

    /// Applies the steps to `pred`, reading inserted and substituted
    /// elements from `gold`. Returns `None` if an index is out of range.
    pub fn replay<T: Clone>(&self, pred: &[T], gold: &[T]) -> Option<Vec<T>> {
        let mut out = Vec::new();
        for step in &self.steps {
            match step.op {
                EditOp::Match => out.push(pred.get(step.pred?)?.clone()),
                EditOp::Substitute | EditOp::Insert => out.push(gold.get(step.gold?)?.clone()),
                EditOp::Delete => {
                    pred.get(step.pred?)?;
                }
            }
        }
        Some(out)
    }
}

/// Edit distance and an optimal alignment.
///
/// Among equal-cost paths the backtrace prefers match, then substitute,
/// then delete, then insert, walking from the end of both sequences.
pub fn levenshtein<T: PartialEq>(pred: &[T], gold: &[T]) -> (usize, Alignment) {
    let (n, m) = (pred.len(), gold.len());
    let width = m + 1;
    let mut dist = vec![0usize; (n + 1) * width];
    let at = |i: usize, j: usize| i * width + j;
    for i in 0..=n {
        dist[at(i, 0)] = i;
    }
    for j in 0..=m {
        dist[at(0, j)] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = dist[at(i - 1, j - 1)] + usize::from(pred[i - 1] != gold[j - 1]);
            let up = dist[at(i - 1, j)] + 1;
            let left = dist[at(i, j - 1)] + 1;
            dist[at(i, j)] = diag.min(up).min(left);
        }
    }

    let mut steps = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dist[at(i, j)];
        if i > 0 && j > 0 {
            let same = pred[i - 1] == gold[j - 1];
            let diag = dist[at(i - 1, j - 1)];
            if same && diag == here {
                steps.push(AlignStep {
                    op: EditOp::Match,
                    pred: Some(i - 1),
                    gold: Some(j - 1),
                });
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && diag + 1 == here {
                steps.push(AlignStep {
                    op: EditOp::Substitute,
                    pred: Some(i - 1),
                    gold: Some(j - 1),
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dist[at(i - 1, j)] + 1 == here {
            steps.push(AlignStep {
                op: EditOp::Delete,
                pred: Some(i - 1),
                gold: None,
            });
            i -= 1;
        } else {
            steps.push(AlignStep {
                op: EditOp::Insert,
                pred: None,
                gold: Some(j - 1),
            });
            j -= 1;
        }
    }
    steps.reverse();
    (dist[at(n, m)], Alignment { steps })
}

/// Edit distance divided by the gold length.
pub fn levenshtein_normalized<T: PartialEq>(pred: &[T], gold: &[T]) -> Result<f64, MetricError> {
    if gold.is_empty() {
        return Err(MetricError::Empty("gold sequence"));
    }
    let (d, _) = levenshtein(pred, gold);
    Ok(d as f64 / gold.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Plain exponential recursion over all three edits.
    fn oracle(a: &[u8], b: &[u8]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ar)), Some((y, br))) => {
                let sub = oracle(ar, br) + usize::from(x != y);
                let del = oracle(ar, b) + 1;
                let ins = oracle(a, br) + 1;
                sub.min(del).min(ins)
            }
        }
    }

    #[test]
    fn examples() {
        let s = |v: &[&'static str]| v.to_vec();
        assert_eq!(levenshtein(&s(&["Mix", "Spin"]), &s(&["Mix", "Spin"])).0, 0);
        assert_eq!(levenshtein(&s(&["Mix", "Spin", "Dry"]), &s(&["Mix", "Dry"])).0, 1);
        assert_eq!(levenshtein(&s(&[]), &s(&["A", "B"])).0, 2);
        assert_eq!(
            levenshtein_normalized(&s(&["Mix", "Spin", "Dry"]), &s(&["Mix", "Dry"])).unwrap(),
            0.5
        );
        assert_eq!(levenshtein_normalized(&s(&["A"]), &s(&["A"])).unwrap(), 0.0);
        assert!(levenshtein_normalized(&s(&["A"]), &s(&[])).is_err());
        // prediction much longer than gold
        assert_eq!(
            levenshtein_normalized(&s(&["A", "B", "C", "D"]), &s(&["A"])).unwrap(),
            3.0
        );
    }

    #[test]
    fn tie_break_prefers_substitution_then_delete() {
        let (d, align) = levenshtein(&["A", "B"], &["C"]);
        assert_eq!(d, 2);
        let ops: Vec<EditOp> = align.steps.iter().map(|s| s.op).collect();
        assert_eq!(ops, vec![EditOp::Delete, EditOp::Substitute]);
        let (_, align) = levenshtein(&["A"], &["B", "C"]);
        let ops: Vec<EditOp> = align.steps.iter().map(|s| s.op).collect();
        assert_eq!(ops, vec![EditOp::Insert, EditOp::Substitute]);
    }

    #[test]
    fn agrees_with_oracle_on_small_sequences() {
        let mut seqs: Vec<Vec<u8>> = vec![vec![]];
        for len in 1..=3 {
            let mut next = Vec::new();
            for s in seqs.iter().filter(|s| s.len() == len - 1) {
                for sym in 0..3u8 {
                    let mut t = s.clone();
                    t.push(sym);
                    next.push(t);
                }
            }
            seqs.extend(next);
        }
        for a in &seqs {
            for b in &seqs {
                let (d, align) = levenshtein(a, b);
                assert_eq!(d, oracle(a, b), "{a:?} {b:?}");
                assert_eq!(align.cost(), d);
                assert_eq!(align.replay(a, b).unwrap(), *b);
            }
        }
    }

    proptest! {
        #[test]
        fn is_a_metric(
            a in prop::collection::vec(0u8..3, 0..7),
            b in prop::collection::vec(0u8..3, 0..7),
            c in prop::collection::vec(0u8..3, 0..7),
        ) {
            let d = |x: &[u8], y: &[u8]| levenshtein(x, y).0;
            prop_assert_eq!(d(&a, &a), 0);
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        }

        #[test]
        fn alignment_replays_to_gold(
            a in prop::collection::vec(0u8..4, 0..10),
            b in prop::collection::vec(0u8..4, 0..10),
        ) {
            let (d, align) = levenshtein(&a, &b);
            prop_assert_eq!(align.cost(), d);
            prop_assert_eq!(align.replay(&a, &b).unwrap(), b);
        }
    }
}
