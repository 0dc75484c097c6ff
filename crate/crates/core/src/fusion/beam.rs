use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::encoders::ModelConfig;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::preprocess::{BOS, EOS};

use super::decoder::DecoderScorer;
use super::FusedFeature;

/// Anything that can score the next token given a prefix.
pub trait StepScorer {
    fn vocab_size(&self) -> usize;
    /// Log-probabilities of every token following `prefix` (which starts with BOS).
    fn log_probs(&self, prefix: &[u32]) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BeamConfig {
    pub beams: usize,
    /// Maximum hypothesis length including BOS (and EOS when emitted).
    pub max_len: usize,
    pub bos: u32,
    pub eos: u32,
}

impl BeamConfig {
    pub fn new(beams: usize, max_len: usize) -> Self {
        Self {
            beams,
            max_len,
            bos: BOS,
            eos: EOS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamHypothesis {
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    pub finished: bool,
}

impl BeamHypothesis {
    /// Tokens between BOS and the optional trailing EOS.
    pub fn content(&self, eos: u32) -> &[u32] {
        let body = &self.tokens[1..];
        match body.last() {
            Some(&t) if t == eos => &body[..body.len() - 1],
            _ => body,
        }
    }
}

/// Best-first order: higher log-probability, then shorter, then
/// lexicographically smaller tokens.
fn rank(a: &BeamHypothesis, b: &BeamHypothesis) -> Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then(a.tokens.len().cmp(&b.tokens.len()))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamOutput {
    pub best: BeamHypothesis,
    /// Every hypothesis that finished before the search stopped, best first.
    pub finished: Vec<BeamHypothesis>,
}

fn validate(scorer: &impl StepScorer, cfg: &BeamConfig) -> Result<()> {
    if cfg.beams < 1 {
        return Err(Error::invalid("beam count must be at least 1"));
    }
    if cfg.max_len < 2 {
        return Err(Error::invalid("max_len must leave room for BOS and one token"));
    }
    if (cfg.eos as usize) >= scorer.vocab_size() {
        return Err(Error::invalid("EOS outside vocabulary"));
    }
    Ok(())
}

/// Standard beam search without length normalisation.
pub fn beam_search_with(scorer: &impl StepScorer, cfg: &BeamConfig) -> Result<BeamOutput> {
    validate(scorer, cfg)?;
    let mut live = vec![BeamHypothesis {
        tokens: vec![cfg.bos],
        log_prob: 0.0,
        finished: false,
    }];
    let mut finished: Vec<BeamHypothesis> = Vec::new();
    while !live.is_empty() {
        let mut candidates = Vec::with_capacity(live.len() * scorer.vocab_size());
        for h in &live {
            let lp = scorer.log_probs(&h.tokens);
            for (tok, l) in lp.iter().enumerate() {
                let mut tokens = h.tokens.clone();
                tokens.push(tok as u32);
                candidates.push(BeamHypothesis {
                    tokens,
                    log_prob: h.log_prob + l,
                    finished: false,
                });
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(cfg.beams);
        live.clear();
        for mut c in candidates {
            if *c.tokens.last().expect("non-empty") == cfg.eos || c.tokens.len() >= cfg.max_len {
                c.finished = true;
                finished.push(c);
            } else {
                live.push(c);
            }
        }
        finished.sort_by(rank);
        // scores never increase, so no live hypothesis can overtake the best finished one
        if let Some(best) = finished.first() {
            if live.iter().all(|h| h.log_prob <= best.log_prob) {
                break;
            }
        }
    }
    let best = finished.first().cloned().expect("max_len bounds the search");
    Ok(BeamOutput { best, finished })
}

/// Argmax decoding, ties to the lowest token id.
pub fn greedy_decode(scorer: &impl StepScorer, cfg: &BeamConfig) -> Result<BeamHypothesis> {
    validate(scorer, cfg)?;
    let mut h = BeamHypothesis {
        tokens: vec![cfg.bos],
        log_prob: 0.0,
        finished: false,
    };
    loop {
        let lp = scorer.log_probs(&h.tokens);
        let tok = crate::nn::argmax(&lp);
        h.tokens.push(tok as u32);
        h.log_prob += lp[tok];
        if tok as u32 == cfg.eos || h.tokens.len() >= cfg.max_len {
            h.finished = true;
            return Ok(h);
        }
    }
}

/// Enumerates every complete hypothesis; exponential, for verification only.
pub fn exhaustive_search(scorer: &impl StepScorer, cfg: &BeamConfig) -> Result<BeamHypothesis> {
    validate(scorer, cfg)?;
    let mut best: Option<BeamHypothesis> = None;
    let mut stack = vec![BeamHypothesis {
        tokens: vec![cfg.bos],
        log_prob: 0.0,
        finished: false,
    }];
    while let Some(h) = stack.pop() {
        let lp = scorer.log_probs(&h.tokens);
        for (tok, l) in lp.iter().enumerate() {
            let mut tokens = h.tokens.clone();
            tokens.push(tok as u32);
            let done = tok as u32 == cfg.eos || tokens.len() >= cfg.max_len;
            let c = BeamHypothesis {
                tokens,
                log_prob: h.log_prob + l,
                finished: done,
            };
            if !done {
                stack.push(c);
            } else if best.as_ref().is_none_or(|b| rank(&c, b) == Ordering::Less) {
                best = Some(c);
            }
        }
    }
    Ok(best.expect("at least one complete hypothesis"))
}

/// Decodes an explanation for `f` with the model's decoder.
pub fn beam_search(f: &FusedFeature, params: &ParamStore, cfg: &ModelConfig, beams: usize) -> Result<BeamOutput> {
    let scorer = DecoderScorer::new(f, params, cfg);
    beam_search_with(&scorer, &BeamConfig::new(beams, cfg.max_len))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Per-step distributions fixed by prefix length.
    struct Table(Vec<Vec<f64>>);

    impl StepScorer for Table {
        fn vocab_size(&self) -> usize {
            self.0[0].len()
        }
        fn log_probs(&self, prefix: &[u32]) -> Vec<f64> {
            self.0[(prefix.len() - 1).min(self.0.len() - 1)]
                .iter()
                .map(|p| p.ln())
                .collect()
        }
    }

    #[test]
    fn certain_eos_gives_empty_sequence() {
        let t = Table(vec![vec![0.0, 0.0, 1.0, 0.0]]);
        let out = beam_search_with(&t, &BeamConfig::new(5, 10)).unwrap();
        assert_eq!(out.best.tokens, vec![BOS, EOS]);
        assert_eq!(out.best.content(EOS), &[] as &[u32]);
        assert_eq!(out.best.log_prob, 0.0);
    }

    #[test]
    fn zero_beams_rejected() {
        let t = Table(vec![vec![0.25; 4]]);
        assert!(beam_search_with(&t, &BeamConfig::new(0, 3)).is_err());
    }

    #[test]
    fn beam_beats_greedy_when_greedy_is_myopic() {
        // step 1 favours token 3 slightly, but token 0 leads to a certain EOS
        struct Trap;
        impl StepScorer for Trap {
            fn vocab_size(&self) -> usize {
                4
            }
            fn log_probs(&self, prefix: &[u32]) -> Vec<f64> {
                let p = match prefix {
                    [_] => vec![0.45, 0.0, 0.05, 0.5],
                    [_, 0] => vec![0.0, 0.0, 1.0, 0.0],
                    _ => vec![0.25; 4],
                };
                p.iter().map(|v: &f64| v.ln()).collect()
            }
        }
        let cfg = BeamConfig::new(2, 4);
        let greedy = greedy_decode(&Trap, &cfg).unwrap();
        let beam = beam_search_with(&Trap, &cfg).unwrap();
        assert_eq!(greedy.tokens[1], 3);
        assert_eq!(beam.best.tokens, vec![BOS, 0, EOS]);
        assert_eq!(beam.best, exhaustive_search(&Trap, &cfg).unwrap());
    }

    #[test]
    fn length_never_exceeds_max() {
        let t = Table(vec![vec![0.4, 0.3, 0.0, 0.3]]);
        let out = beam_search_with(&t, &BeamConfig::new(3, 5)).unwrap();
        for h in &out.finished {
            assert!(h.tokens.len() <= 5);
        }
        assert_eq!(out.best.tokens.len(), 5);
    }
}
