use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::split_words;

pub const MAX_ORDER: usize = 4;

/// Corpus BLEU-4 together with its components and per-sentence diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    pub corpus: f64,
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hypothesis_length: usize,
    pub reference_length: usize,
    /// Add-one smoothed sentence scores, diagnostic only.
    pub sentences: Vec<f64>,
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.iter().map(|t| t.as_ref()).collect()).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped matches and hypothesis n-gram totals for orders 1..=4.
fn stats<T: AsRef<str>>(hyp: &[T], reference: &[T]) -> [(usize, usize); MAX_ORDER] {
    let mut out = [(0, 0); MAX_ORDER];
    for (i, o) in out.iter_mut().enumerate() {
        let n = i + 1;
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        let matched = h.iter().map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0))).sum();
        *o = (matched, hyp.len().saturating_sub(n - 1));
    }
    out
}

fn brevity_penalty(c: usize, r: usize) -> f64 {
    if c >= r {
        1.0
    } else if c == 0 {
        0.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

/// Add-one smoothing on orders whose clipped match count is zero.
pub fn sentence_bleu4<T: AsRef<str>>(hyp: &[T], reference: &[T]) -> f64 {
    let s = stats(hyp, reference);
    let bp = brevity_penalty(hyp.len(), reference.len());
    if bp == 0.0 {
        return 0.0;
    }
    let log_mean: f64 = s
        .iter()
        .map(|&(m, c)| {
            let p = if m == 0 {
                1.0 / (c as f64 + 1.0)
            } else {
                m as f64 / c as f64
            };
            p.ln() / MAX_ORDER as f64
        })
        .sum();
    bp * log_mean.exp()
}

/// Unsmoothed corpus BLEU-4 over tokenised pairs (one reference each).
/// A precision that is zero or undefined makes the score zero.
pub fn bleu4<T: AsRef<str>>(hypotheses: &[Vec<T>], references: &[Vec<T>]) -> Result<BleuScore> {
    if hypotheses.is_empty() {
        return Err(Error::invalid("BLEU needs at least one hypothesis"));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::invalid(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut totals = [(0usize, 0usize); MAX_ORDER];
    let (mut c, mut r) = (0, 0);
    let mut sentences = Vec::with_capacity(hypotheses.len());
    for (h, rf) in hypotheses.iter().zip(references) {
        for (t, s) in totals.iter_mut().zip(stats(h, rf)) {
            t.0 += s.0;
            t.1 += s.1;
        }
        c += h.len();
        r += rf.len();
        sentences.push(sentence_bleu4(h, rf));
    }
    let precisions = totals.map(|(m, n)| if n == 0 { 0.0 } else { m as f64 / n as f64 });
    let bp = brevity_penalty(c, r);
    let corpus = if precisions.contains(&0.0) {
        0.0
    } else {
        bp * (precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64).exp()
    };
    Ok(BleuScore {
        corpus,
        precisions,
        brevity_penalty: bp,
        hypothesis_length: c,
        reference_length: r,
        sentences,
    })
}

/// [`bleu4`] on raw strings, tokenised the same way as the vocabulary.
pub fn bleu4_text(hypotheses: &[String], references: &[String]) -> Result<BleuScore> {
    let h: Vec<Vec<String>> = hypotheses.iter().map(|s| split_words(s)).collect();
    let r: Vec<Vec<String>> = references.iter().map(|s| split_words(s)).collect();
    bleu4(&h, &r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        split_words(s)
    }

    #[test]
    fn identical_corpus_scores_one() {
        let c = vec![
            toks("stop because of red light"),
            toks("turn left at the upcoming intersection"),
        ];
        let s = bleu4(&c, &c).unwrap();
        assert_eq!(s.corpus, 1.0);
        assert!(s.sentences.iter().all(|v| (*v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn repeated_word_case() {
        let h = vec![toks("the the the the the the")];
        let r = vec![toks("the cat sat on the mat")];
        let s = bleu4(&h, &r).unwrap();
        assert_eq!(s.precisions, [2.0 / 6.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.corpus, 0.0);
        let want = (2.0f64 / 6.0 * (1.0 / 6.0) * (1.0 / 5.0) * (1.0 / 4.0)).powf(0.25);
        assert!((s.sentences[0] - want).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(bleu4(&[toks("a")], &[]).is_err());
        assert!(bleu4::<String>(&[], &[]).is_err());
    }
}
