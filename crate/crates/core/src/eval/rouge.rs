//! ROUGE-L F1 over lowercase word tokens.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeL {
    pub lcs: usize,
    pub pred_len: usize,
    pub ref_len: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Lowercases and splits on whitespace and at punctuation boundaries.
/// Each punctuation character becomes its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if ch.is_alphanumeric() || ch == '_' {
            current.extend(ch.to_lowercase());
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(ch.to_lowercase().collect());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Longest common subsequence length, single rolling row.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { above.max(row[j]) };
            diag = above;
        }
    }
    row[b.len()]
}

/// ROUGE-L on pre-tokenized input. F1 is evaluated as `2L / (|pred| + |ref|)`,
/// which equals `2PR / (P + R)` without intermediate rounding.
pub fn rouge_l_tokens<T: PartialEq>(pred: &[T], reference: &[T]) -> RougeL {
    let lcs = lcs_len(pred, reference);
    let (m, n) = (pred.len(), reference.len());
    if m == 0 || n == 0 || lcs == 0 {
        return RougeL { lcs, pred_len: m, ref_len: n, precision: 0.0, recall: 0.0, f1: 0.0 };
    }
    RougeL {
        lcs,
        pred_len: m,
        ref_len: n,
        precision: lcs as f64 / m as f64,
        recall: lcs as f64 / n as f64,
        f1: (2 * lcs) as f64 / (m + n) as f64,
    }
}

pub fn rouge_l(pred: &str, reference: &str) -> RougeL {
    rouge_l_tokens(&tokenize(pred), &tokenize(reference))
}

pub fn rouge_l_f1(pred: &str, reference: &str) -> f64 {
    rouge_l(pred, reference).f1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(tokenize("Role: button, Name: Go!"), vec!["role", ":", "button", ",", "name", ":", "go", "!"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn worked_examples() {
        assert_eq!(rouge_l_f1("the search button", "the search button"), 1.0);
        assert_eq!(rouge_l_f1("alpha beta", "gamma delta"), 0.0);
        let r = rouge_l("click the search button", "the search button");
        assert_eq!((r.lcs, r.precision, r.recall), (3, 0.75, 1.0));
        assert!((r.f1 - 6.0 / 7.0).abs() < 1e-12);
        assert_eq!(rouge_l_f1("", "x"), 0.0);
        assert_eq!(rouge_l_f1("x", ""), 0.0);
    }

    proptest! {
        #[test]
        fn bounded_and_symmetric(a in "[a-c ]{0,24}", b in "[a-c ]{0,24}") {
            let f = rouge_l_f1(&a, &b);
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert_eq!(f, rouge_l_f1(&b, &a));
            if !tokenize(&a).is_empty() {
                prop_assert_eq!(rouge_l_f1(&a, &a), 1.0);
            }
        }
    }
}
