//! External language models for shallow fusion.

use alloc::vec;
use alloc::vec::Vec;

pub trait LanguageModel {
    /// `ln P(token | prefix)`.
    fn score(&self, prefix: &[u32], token: u32) -> f64;
}

/// Every token equally likely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformLm {
    vocab: usize,
}

impl UniformLm {
    pub fn new(vocab: usize) -> Self {
        assert!(vocab > 0, "empty vocabulary");
        Self { vocab }
    }
}

impl LanguageModel for UniformLm {
    fn score(&self, _prefix: &[u32], _token: u32) -> f64 {
        -libm::log(self.vocab as f64)
    }
}

/// Add-one smoothed bigram counts. The first token of a sentence is
/// conditioned on a start context.
#[derive(Debug, Clone, PartialEq)]
pub struct CountBigramLm {
    vocab: usize,
    /// `(vocab + 1) × vocab`; the last row is the start context.
    counts: Vec<u32>,
    context_totals: Vec<u64>,
}

impl CountBigramLm {
    pub fn new(vocab: usize) -> Self {
        assert!(vocab > 0, "empty vocabulary");
        Self {
            vocab,
            counts: vec![0; (vocab + 1) * vocab],
            context_totals: vec![0; vocab + 1],
        }
    }

    /// Tokens outside the vocabulary are skipped and break the bigram chain.
    pub fn from_sentences<S: AsRef<[u32]>>(vocab: usize, sentences: &[S]) -> Self {
        let mut lm = Self::new(vocab);
        for s in sentences {
            lm.add_sentence(s.as_ref());
        }
        lm
    }

    pub fn add_sentence(&mut self, tokens: &[u32]) {
        let mut prev = self.vocab;
        for &t in tokens {
            let t = t as usize;
            if t >= self.vocab {
                prev = self.vocab;
                continue;
            }
            self.counts[prev * self.vocab + t] += 1;
            self.context_totals[prev] += 1;
            prev = t;
        }
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn count(&self, prev: Option<u32>, token: u32) -> u32 {
        let row = prev.map_or(self.vocab, |p| p as usize);
        self.counts[row * self.vocab + token as usize]
    }
}

impl LanguageModel for CountBigramLm {
    fn score(&self, prefix: &[u32], token: u32) -> f64 {
        let row = match prefix.last() {
            Some(&p) if (p as usize) < self.vocab => p as usize,
            _ => self.vocab,
        };
        let c = if (token as usize) < self.vocab {
            self.counts[row * self.vocab + token as usize]
        } else {
            0
        };
        libm::log((f64::from(c) + 1.0) / (self.context_totals[row] as f64 + self.vocab as f64))
    }
}
