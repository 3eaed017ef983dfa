//! End-to-end recognition: stream features through the encoder, then
//! search the transducer lattice.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use streamformer_core::stream::StreamSession;
use streamformer_core::transducer::{
    beam_decode, greedy_decode, BeamConfig, CountBigramLm, Fusion,
};
use streamformer_core::Matrix;

use crate::error::{Error, Result};
use crate::model::Model;

/// Id-to-text table. Without one, tokens print as `<id>`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenTable {
    pieces: Vec<String>,
    index: HashMap<String, u32>,
}

impl TokenTable {
    /// One piece per line; line `i` names id `i`.
    pub fn parse(text: &str) -> Self {
        let pieces: Vec<String> = text.lines().map(|l| l.trim().to_owned()).collect();
        let index = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i as u32))
            .collect();
        Self { pieces, index }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ctx = path.display().to_string();
        Ok(Self::parse(
            &fs::read_to_string(path).map_err(|e| Error::io(ctx, e))?,
        ))
    }

    pub fn text(&self, tokens: &[u32]) -> String {
        tokens
            .iter()
            .map(|&t| {
                self.pieces
                    .get(t as usize)
                    .cloned()
                    .unwrap_or_else(|| format!("<{t}>"))
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Looks a word up in the table, falling back to `<id>` or a bare id.
    pub fn id(&self, word: &str) -> Option<u32> {
        if let Some(&id) = self.index.get(word) {
            return Some(id);
        }
        let bare = word
            .strip_prefix('<')
            .and_then(|w| w.strip_suffix('>'))
            .unwrap_or(word);
        bare.parse().ok()
    }
}

/// Trains a bigram LM on whitespace-tokenized text, one sentence per line.
/// Words the table cannot map are skipped.
pub fn train_bigram(text: &str, vocab: usize, table: &TokenTable) -> CountBigramLm {
    let mut lm = CountBigramLm::new(vocab);
    for line in text.lines() {
        let ids: Vec<u32> = line
            .split_whitespace()
            .map(|w| {
                table
                    .id(w)
                    .filter(|&id| (id as usize) < vocab)
                    .unwrap_or(u32::MAX)
            })
            .collect();
        if !ids.is_empty() {
            lm.add_sentence(&ids);
        }
    }
    lm
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NBestEntry {
    pub tokens: Vec<u32>,
    pub text: String,
    pub score: f64,
    pub acoustic: f64,
    pub lm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Utterance {
    pub id: String,
    pub tokens: Vec<u32>,
    pub text: String,
    pub score: f64,
    pub n_best: Vec<NBestEntry>,
}

#[derive(Clone, Copy)]
pub enum Search<'a> {
    Greedy,
    Beam {
        width: usize,
        fusion: Option<Fusion<'a>>,
    },
}

/// Runs the streaming encoder over a whole utterance.
pub fn encode(model: &Model, features: &Matrix) -> Result<Matrix> {
    let mut session = StreamSession::new(&model.encoder);
    let head = session.push_features(features)?;
    let tail = session.finalize()?;
    Ok(Matrix::vstack(&[&head, &tail])?)
}

pub fn recognize(
    model: &Model,
    id: &str,
    features: &Matrix,
    search: Search<'_>,
    max_symbols_per_frame: usize,
    table: &TokenTable,
) -> Result<Utterance> {
    let frames = encode(model, features)?;
    let n_best: Vec<NBestEntry> = match search {
        Search::Greedy => {
            let d = greedy_decode(&model.transducer, &frames, max_symbols_per_frame)?;
            vec![NBestEntry {
                text: table.text(&d.tokens),
                tokens: d.tokens,
                score: d.score,
                acoustic: d.score,
                lm: 0.0,
            }]
        }
        Search::Beam { width, fusion } => {
            let cfg = BeamConfig {
                beam: width,
                max_symbols_per_frame,
                fusion,
            };
            beam_decode(&model.transducer, &frames, &cfg)?
                .into_iter()
                .map(|h| NBestEntry {
                    text: table.text(&h.tokens),
                    tokens: h.tokens,
                    score: h.score,
                    acoustic: h.acoustic,
                    lm: h.lm,
                })
                .collect()
        }
    };
    let best = n_best[0].clone();
    Ok(Utterance {
        id: id.to_owned(),
        tokens: best.tokens,
        text: best.text,
        score: best.score,
        n_best,
    })
}
