//! Corpus-level BLEU over whitespace tokens.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPair {
    pub hypothesis: Vec<String>,
    pub reference: Vec<String>,
}

impl EvalPair {
    pub fn new(hypothesis: Vec<String>, reference: Vec<String>) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::input("reference must be non-empty"));
        }
        Ok(EvalPair { hypothesis, reference })
    }

    pub fn from_text(hypothesis: &str, reference: &str) -> Result<Self> {
        Self::new(tokenize(hypothesis), tokenize(reference))
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum Smoothing {
    #[default]
    None,
    /// Add one to matches and totals for orders >= 2.
    AddOne,
}

impl fmt::Display for Smoothing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Smoothing::None => "none",
            Smoothing::AddOne => "add1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BleuConfig {
    pub max_order: usize,
    pub smoothing: Smoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_order: 4,
            smoothing: Smoothing::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuScore {
    /// Score on a 0-100 scale.
    pub score: f64,
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

pub fn corpus_bleu(pairs: &[EvalPair], config: BleuConfig) -> Result<BleuScore> {
    if pairs.is_empty() {
        return Err(Error::input("BLEU needs at least one sentence pair"));
    }
    if config.max_order == 0 {
        return Err(Error::input("max n-gram order must be at least 1"));
    }
    let orders = config.max_order;
    let mut matches = vec![0u64; orders];
    let mut totals = vec![0u64; orders];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;

    for pair in pairs {
        hyp_len += pair.hypothesis.len();
        ref_len += pair.reference.len();
        for n in 1..=orders {
            let hyp = ngram_counts(&pair.hypothesis, n);
            let reference = ngram_counts(&pair.reference, n);
            for (gram, count) in &hyp {
                let clip = reference.get(gram).copied().unwrap_or(0);
                matches[n - 1] += (*count).min(clip) as u64;
            }
            totals[n - 1] += pair.hypothesis.len().saturating_sub(n - 1) as u64;
        }
    }

    let precisions: Vec<f64> = (0..orders)
        .map(|i| {
            let (m, t) = match config.smoothing {
                Smoothing::AddOne if i > 0 => (matches[i] + 1, totals[i] + 1),
                _ => (matches[i], totals[i]),
            };
            if t == 0 {
                0.0
            } else {
                m as f64 / t as f64
            }
        })
        .collect();

    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).min(0.0).exp()
    };

    let score = if precisions.contains(&0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / orders as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };

    Ok(BleuScore {
        score,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bleu(pairs: &[(&str, &str)]) -> f64 {
        let pairs: Vec<EvalPair> = pairs.iter().map(|(h, r)| EvalPair::from_text(h, r).unwrap()).collect();
        corpus_bleu(&pairs, BleuConfig::default()).unwrap().score
    }

    #[test]
    fn identity_is_100() {
        assert_eq!(bleu(&[("a b c d e", "a b c d e"), ("x y z w", "x y z w")]), 100.0);
    }

    #[test]
    fn short_hypothesis_example() {
        let s = bleu(&[("a b c d", "a b c d e")]);
        // precisions all 1, BP = exp(1 - 5/4)
        let expected = 100.0 * (1.0f64 - 5.0 / 4.0).exp();
        assert!((s - expected).abs() < 1e-9);
        assert!((s - 77.88).abs() < 0.01);
    }

    #[test]
    fn disjoint_vocab_is_zero() {
        assert_eq!(bleu(&[("x x x x", "a b c d")]), 0.0);
    }

    #[test]
    fn clipping_limits_repeats() {
        let pairs = [EvalPair::from_text("a a a a", "a b c d").unwrap()];
        let s = corpus_bleu(
            &pairs,
            BleuConfig {
                max_order: 1,
                smoothing: Smoothing::None,
            },
        )
        .unwrap();
        assert_eq!(s.precisions, vec![0.25]);
    }

    #[test]
    fn smoothing_rescues_short_sentences() {
        let pairs = [EvalPair::from_text("a b x d", "a b c d").unwrap()];
        assert_eq!(corpus_bleu(&pairs, BleuConfig::default()).unwrap().score, 0.0);
        let smoothed = corpus_bleu(
            &pairs,
            BleuConfig {
                max_order: 4,
                smoothing: Smoothing::AddOne,
            },
        )
        .unwrap();
        assert!(smoothed.score > 0.0);
    }

    #[test]
    fn errors() {
        assert!(corpus_bleu(&[], BleuConfig::default()).is_err());
        assert!(EvalPair::from_text("a", "").is_err());
        let pairs = [EvalPair::from_text("a", "a").unwrap()];
        assert!(corpus_bleu(
            &pairs,
            BleuConfig {
                max_order: 0,
                smoothing: Smoothing::None
            }
        )
        .is_err());
        assert_eq!(
            corpus_bleu(&[EvalPair::from_text("", "a").unwrap()], BleuConfig::default())
                .unwrap()
                .score,
            0.0
        );
    }

    fn sentence() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]), 4..12)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn permutation_invariant(pairs in prop::collection::vec((sentence(), sentence()), 1..6), seed in any::<u64>()) {
            let pairs: Vec<EvalPair> = pairs.into_iter().map(|(h, r)| EvalPair::new(h, r).unwrap()).collect();
            let mut shuffled = pairs.clone();
            let n = shuffled.len();
            shuffled.rotate_left((seed as usize) % n);
            shuffled.reverse();
            let a = corpus_bleu(&pairs, BleuConfig::default()).unwrap().score;
            let b = corpus_bleu(&shuffled, BleuConfig::default()).unwrap().score;
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn identity_always_100(r in sentence()) {
            let pair = EvalPair::new(r.clone(), r).unwrap();
            prop_assert!((corpus_bleu(&[pair], BleuConfig::default()).unwrap().score - 100.0).abs() < 1e-9);
        }

        #[test]
        fn corrupting_a_token_never_helps(r in sentence(), h in sentence(), pos in any::<prop::sample::Index>()) {
            let mut h = h;
            let i = pos.index(h.len());
            let before = corpus_bleu(&[EvalPair::new(h.clone(), r.clone()).unwrap()], BleuConfig::default()).unwrap().score;
            if h[i] == r.get(i).cloned().unwrap_or_default() || r.contains(&h[i]) {
                h[i] = "<oov>".to_string();
                let after = corpus_bleu(&[EvalPair::new(h, r).unwrap()], BleuConfig::default()).unwrap().score;
                prop_assert!(after <= before + 1e-9);
            }
        }
    }
}
