//! Greedy and prefix-merged beam search.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

use super::lm::LanguageModel;
use super::loss::log_add_exp;

pub const DEFAULT_MAX_SYMBOLS_PER_FRAME: usize = 8;

/// Anything that scores output symbols given an encoder frame and a label
/// history. Blank is always `vocab_size()`.
pub trait JointModel {
    type State: Clone;

    /// Number of non-blank tokens.
    fn vocab_size(&self) -> usize;

    fn blank(&self) -> u32 {
        self.vocab_size() as u32
    }

    /// Maps raw encoder rows to whatever `log_probs` consumes.
    fn prepare(&self, frames: &Matrix) -> Result<Matrix> {
        Ok(frames.clone())
    }

    fn initial_state(&self) -> Self::State;

    fn advance(&self, state: &Self::State, token: u32) -> Result<Self::State>;

    /// Log-distribution over `vocab_size() + 1` classes.
    fn log_probs(&self, frame: &[f32], state: &Self::State) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub tokens: Vec<u32>,
    /// Sum of the log-probabilities of every chosen symbol, blanks included.
    pub score: f64,
}

/// Lowest id wins ties, so blank (the highest id) only wins outright.
fn argmax(lp: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in lp.iter().enumerate().skip(1) {
        if x > lp[best] {
            best = k;
        }
    }
    best
}

/// Greedy search that can be fed encoder frames as they arrive.
pub struct StreamingGreedy<'m, M: JointModel> {
    model: &'m M,
    max_symbols: usize,
    state: M::State,
    tokens: Vec<u32>,
    score: f64,
}

impl<'m, M: JointModel> StreamingGreedy<'m, M> {
    pub fn new(model: &'m M, max_symbols: usize) -> Result<Self> {
        if max_symbols == 0 {
            return Err(Error::Config("max_symbols_per_frame must be >= 1".into()));
        }
        Ok(Self {
            model,
            max_symbols,
            state: model.initial_state(),
            tokens: Vec::new(),
            score: 0.0,
        })
    }

    /// Decodes raw encoder rows and returns the tokens they produced.
    pub fn push(&mut self, encoder_out: &Matrix) -> Result<Vec<u32>> {
        let frames = self.model.prepare(encoder_out)?;
        let start = self.tokens.len();
        let blank = self.model.blank() as usize;
        for frame in frames.iter_rows() {
            for _ in 0..self.max_symbols {
                let lp = self.model.log_probs(frame, &self.state)?;
                let k = argmax(&lp);
                self.score += lp[k];
                if k == blank {
                    break;
                }
                self.state = self.model.advance(&self.state, k as u32)?;
                self.tokens.push(k as u32);
            }
        }
        Ok(self.tokens[start..].to_vec())
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn finish(self) -> Decoded {
        Decoded {
            tokens: self.tokens,
            score: self.score,
        }
    }
}

pub fn greedy_decode<M: JointModel>(
    model: &M,
    encoder_out: &Matrix,
    max_symbols_per_frame: usize,
) -> Result<Decoded> {
    let mut g = StreamingGreedy::new(model, max_symbols_per_frame)?;
    g.push(encoder_out)?;
    Ok(g.finish())
}

#[derive(Clone, Copy)]
pub struct Fusion<'a> {
    pub lm: &'a dyn LanguageModel,
    pub weight: f64,
}

#[derive(Clone, Copy)]
pub struct BeamConfig<'a> {
    pub beam: usize,
    pub max_symbols_per_frame: usize,
    pub fusion: Option<Fusion<'a>>,
}

impl Default for BeamConfig<'_> {
    fn default() -> Self {
        Self {
            beam: 4,
            max_symbols_per_frame: DEFAULT_MAX_SYMBOLS_PER_FRAME,
            fusion: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis<S> {
    pub tokens: Vec<u32>,
    /// Log-probability under the transducer, summed over merged alignments.
    pub acoustic: f64,
    /// Sum of LM log-probabilities of the emitted tokens (unweighted).
    pub lm: f64,
    /// `acoustic + weight · lm`.
    pub score: f64,
    pub state: S,
}

struct Candidate {
    parent: usize,
    token: Option<u32>,
    acoustic: f64,
    lm: f64,
    score: f64,
}

fn merge_into<S>(set: &mut Vec<Hypothesis<S>>, hyp: Hypothesis<S>, weight: f64) {
    if let Some(existing) = set.iter_mut().find(|h| h.tokens == hyp.tokens) {
        existing.acoustic = log_add_exp(existing.acoustic, hyp.acoustic);
        existing.score = existing.acoustic + weight * existing.lm;
    } else {
        set.push(hyp);
    }
}

/// Sorts best-first, keeping insertion order among equal scores.
fn rank<S>(set: &mut [Hypothesis<S>]) {
    set.sort_by(|a, b| b.score.total_cmp(&a.score));
}

/// Frame-synchronous beam search. Within a frame each surviving hypothesis
/// either ends the frame with a blank or emits another token; identical
/// token sequences are merged by adding their acoustic probabilities.
/// Returns the final beam best-first.
pub fn beam_decode<M: JointModel>(
    model: &M,
    encoder_out: &Matrix,
    cfg: &BeamConfig<'_>,
) -> Result<Vec<Hypothesis<M::State>>> {
    if cfg.beam == 0 {
        return Err(Error::Config("beam must be >= 1".into()));
    }
    if cfg.max_symbols_per_frame == 0 {
        return Err(Error::Config("max_symbols_per_frame must be >= 1".into()));
    }
    let weight = match cfg.fusion {
        Some(f) if !(f.weight >= 0.0 && f.weight.is_finite()) => {
            return Err(Error::Config(
                "fusion weight must be finite and >= 0".into(),
            ));
        }
        Some(f) => f.weight,
        None => 0.0,
    };
    let frames = model.prepare(encoder_out)?;
    let vocab = model.vocab_size();
    let blank = model.blank() as usize;

    let mut beam = alloc::vec![Hypothesis {
        tokens: Vec::new(),
        acoustic: 0.0,
        lm: 0.0,
        score: 0.0,
        state: model.initial_state(),
    }];

    for frame in frames.iter_rows() {
        let mut ended: Vec<Hypothesis<M::State>> = Vec::new();
        let mut active = core::mem::take(&mut beam);
        for _ in 0..cfg.max_symbols_per_frame {
            if active.is_empty() {
                break;
            }
            let mut cands = Vec::with_capacity(active.len() * (vocab + 1));
            for (parent, h) in active.iter().enumerate() {
                let lp = model.log_probs(frame, &h.state)?;
                for (k, &p) in lp.iter().enumerate().take(vocab) {
                    let lm = match cfg.fusion {
                        Some(f) => h.lm + f.lm.score(&h.tokens, k as u32),
                        None => h.lm,
                    };
                    let acoustic = h.acoustic + p;
                    cands.push(Candidate {
                        parent,
                        token: Some(k as u32),
                        acoustic,
                        lm,
                        score: acoustic + weight * lm,
                    });
                }
                let acoustic = h.acoustic + lp[blank];
                cands.push(Candidate {
                    parent,
                    token: None,
                    acoustic,
                    lm: h.lm,
                    score: acoustic + weight * h.lm,
                });
            }
            cands.sort_by(|a, b| b.score.total_cmp(&a.score));
            cands.truncate(cfg.beam);

            let mut next = Vec::new();
            for c in cands {
                let parent = &active[c.parent];
                match c.token {
                    None => merge_into(
                        &mut ended,
                        Hypothesis {
                            tokens: parent.tokens.clone(),
                            acoustic: c.acoustic,
                            lm: c.lm,
                            score: c.score,
                            state: parent.state.clone(),
                        },
                        weight,
                    ),
                    Some(tok) => {
                        let mut tokens = parent.tokens.clone();
                        tokens.push(tok);
                        next.push(Hypothesis {
                            tokens,
                            acoustic: c.acoustic,
                            lm: c.lm,
                            score: c.score,
                            state: model.advance(&parent.state, tok)?,
                        });
                    }
                }
            }
            active = next;
        }
        // Hypotheses still emitting at the cap end the frame without a blank.
        for h in active {
            merge_into(&mut ended, h, weight);
        }
        rank(&mut ended);
        ended.truncate(cfg.beam);
        beam = ended;
    }
    rank(&mut beam);
    Ok(beam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transducer::lm::{CountBigramLm, UniformLm};
    use alloc::vec;

    /// Table-driven model: the distribution depends on the frame index
    /// (stored in column 0 of each row) and the number of emitted tokens.
    pub(crate) struct TableModel {
        pub vocab: usize,
        /// `[frame][emitted] -> log-distribution`, the last entry repeats.
        pub table: Vec<Vec<Vec<f64>>>,
    }

    impl JointModel for TableModel {
        type State = Vec<u32>;

        fn vocab_size(&self) -> usize {
            self.vocab
        }

        fn initial_state(&self) -> Vec<u32> {
            Vec::new()
        }

        fn advance(&self, state: &Vec<u32>, token: u32) -> Result<Vec<u32>> {
            let mut s = state.clone();
            s.push(token);
            Ok(s)
        }

        fn log_probs(&self, frame: &[f32], state: &Vec<u32>) -> Result<Vec<f64>> {
            let row = &self.table[frame[0] as usize];
            Ok(row[state.len().min(row.len() - 1)].clone())
        }
    }

    fn frames(n: usize) -> Matrix {
        Matrix::new(n, 1, (0..n).map(|i| i as f32).collect()).unwrap()
    }

    fn dist(p: &[f64]) -> Vec<f64> {
        p.iter().map(|x| x.ln()).collect()
    }

    #[test]
    fn blank_dominant_gives_nothing() {
        let m = TableModel {
            vocab: 3,
            table: vec![vec![dist(&[0.1, 0.1, 0.1, 0.7])]; 5],
        };
        let d = greedy_decode(&m, &frames(5), 8).unwrap();
        assert!(d.tokens.is_empty());
        assert!((d.score - 5.0 * 0.7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn token_then_blank_each_frame() {
        // emit 2 once per frame, then blank
        let m = TableModel {
            vocab: 3,
            table: (0..4)
                .map(|t| {
                    (0..=4)
                        .map(|u| {
                            if u == t {
                                dist(&[0.1, 0.1, 0.6, 0.2])
                            } else {
                                dist(&[0.1, 0.1, 0.1, 0.7])
                            }
                        })
                        .collect()
                })
                .collect(),
        };
        assert_eq!(greedy_decode(&m, &frames(4), 8).unwrap().tokens, vec![2; 4]);
    }

    #[test]
    fn per_frame_cap_bounds_emissions() {
        let m = TableModel {
            vocab: 3,
            table: vec![vec![dist(&[0.7, 0.1, 0.1, 0.1])]; 3],
        };
        assert_eq!(greedy_decode(&m, &frames(3), 2).unwrap().tokens, vec![0; 6]);
        assert_eq!(greedy_decode(&m, &frames(3), 8).unwrap().tokens.len(), 24);
        assert!(greedy_decode(&m, &frames(3), 0).is_err());
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let m = TableModel {
            vocab: 2,
            table: vec![vec![dist(&[0.4, 0.4, 0.2]), dist(&[0.3, 0.3, 0.4])]],
        };
        assert_eq!(greedy_decode(&m, &frames(1), 8).unwrap().tokens, vec![0]);
    }

    fn random_table(seed: u64, t: usize, vocab: usize) -> TableModel {
        let mut rng = crate::rng::SeededRng::new(seed);
        TableModel {
            vocab,
            table: (0..t)
                .map(|_| {
                    (0..6)
                        .map(|_| {
                            let logits: Vec<f32> =
                                (0..=vocab).map(|_| rng.uniform(-2.0, 2.0)).collect();
                            crate::tensor::log_softmax(&logits)
                        })
                        .collect()
                })
                .collect(),
        }
    }

    #[test]
    fn streaming_greedy_matches_batch() {
        let m = random_table(1, 9, 4);
        let all = frames(9);
        let batch = greedy_decode(&m, &all, 3).unwrap();
        let mut s = StreamingGreedy::new(&m, 3).unwrap();
        for t in 0..9 {
            s.push(&all.slice_rows(t..t + 1)).unwrap();
        }
        assert_eq!(s.finish(), batch);
    }

    #[test]
    fn width_one_beam_is_greedy() {
        for seed in 0..20 {
            let m = random_table(seed, 6, 3);
            let g = greedy_decode(&m, &frames(6), 4).unwrap();
            let cfg = BeamConfig {
                beam: 1,
                max_symbols_per_frame: 4,
                fusion: None,
            };
            let b = beam_decode(&m, &frames(6), &cfg).unwrap();
            assert_eq!(b.len(), 1);
            assert_eq!(b[0].tokens, g.tokens);
            assert_eq!(b[0].score, g.score);
        }
    }

    #[test]
    fn zero_weight_fusion_keeps_scores() {
        let lm = CountBigramLm::from_sentences(3, &[vec![0, 1, 2], vec![2, 2]]);
        for seed in 0..5 {
            let m = random_table(seed + 50, 5, 3);
            let plain = beam_decode(
                &m,
                &frames(5),
                &BeamConfig {
                    beam: 3,
                    ..Default::default()
                },
            )
            .unwrap();
            let fused = beam_decode(
                &m,
                &frames(5),
                &BeamConfig {
                    beam: 3,
                    fusion: Some(Fusion {
                        lm: &lm,
                        weight: 0.0,
                    }),
                    ..Default::default()
                },
            )
            .unwrap();
            let a: Vec<_> = plain.iter().map(|h| (h.tokens.clone(), h.score)).collect();
            let b: Vec<_> = fused.iter().map(|h| (h.tokens.clone(), h.score)).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn fused_score_is_acoustic_plus_weighted_lm() {
        let lm = CountBigramLm::from_sentences(3, &[vec![0, 1], vec![1, 2, 0]]);
        let m = random_table(7, 6, 3);
        let hyps = beam_decode(
            &m,
            &frames(6),
            &BeamConfig {
                beam: 4,
                fusion: Some(Fusion {
                    lm: &lm,
                    weight: 0.25,
                }),
                ..Default::default()
            },
        )
        .unwrap();
        for h in &hyps {
            let lm_sum: f64 = (0..h.tokens.len())
                .map(|i| lm.score(&h.tokens[..i], h.tokens[i]))
                .sum();
            assert!((h.lm - lm_sum).abs() < 1e-12);
            assert!((h.score - (h.acoustic + 0.25 * lm_sum)).abs() < 1e-12);
        }
    }

    #[test]
    fn exhaustive_beam_dominates_narrow_beams() {
        // vocab 2, 3 frames, at most 2 symbols per frame: fewer than 128
        // prefixes, so width 1000 never prunes.
        let lm = CountBigramLm::from_sentences(2, &[vec![0, 1, 1]]);
        for seed in 0..10 {
            let m = random_table(seed + 100, 3, 2);
            for fusion in [
                None,
                Some(Fusion {
                    lm: &lm,
                    weight: 0.5,
                }),
            ] {
                let run = |beam| {
                    let cfg = BeamConfig {
                        beam,
                        max_symbols_per_frame: 2,
                        fusion,
                    };
                    beam_decode(&m, &frames(3), &cfg).unwrap()[0].score
                };
                let full = run(1000);
                for w in 1..=6 {
                    assert!(run(w) <= full + 1e-12, "seed {seed} beam {w}");
                }
            }
        }
    }

    #[test]
    fn biased_lm_flips_near_tie() {
        // a=0, b=1, c=2 on one frame; "a c" edges out "a b" acoustically.
        let m = TableModel {
            vocab: 3,
            table: vec![vec![
                dist(&[0.9, 0.04, 0.04, 0.02]),
                dist(&[0.02, 0.47, 0.49, 0.02]),
                dist(&[0.1, 0.1, 0.1, 0.7]),
            ]],
        };
        let lm = CountBigramLm::from_sentences(3, &[vec![0, 1], vec![0, 1], vec![0, 1]]);
        let run = |fusion: Option<Fusion<'_>>| {
            let cfg = BeamConfig {
                beam: 4,
                max_symbols_per_frame: 3,
                fusion,
            };
            beam_decode(&m, &frames(1), &cfg).unwrap()[0].tokens.clone()
        };
        assert_eq!(run(None), vec![0, 2]);
        assert_eq!(
            run(Some(Fusion {
                lm: &lm,
                weight: 0.0
            })),
            vec![0, 2]
        );
        assert_eq!(
            run(Some(Fusion {
                lm: &lm,
                weight: 1.0
            })),
            vec![0, 1]
        );
    }

    #[test]
    fn uniform_lm_shifts_all_equal_length_hypotheses_equally() {
        let lm = UniformLm::new(3);
        let m = random_table(9, 4, 3);
        let hyps = beam_decode(
            &m,
            &frames(4),
            &BeamConfig {
                beam: 3,
                fusion: Some(Fusion {
                    lm: &lm,
                    weight: 1.0,
                }),
                ..Default::default()
            },
        )
        .unwrap();
        for h in hyps {
            assert!((h.lm + h.tokens.len() as f64 * 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_beam_configs_rejected() {
        let m = random_table(1, 2, 2);
        let bad = BeamConfig {
            beam: 0,
            ..Default::default()
        };
        assert!(beam_decode(&m, &frames(2), &bad).is_err());
        let lm = UniformLm::new(2);
        let neg = BeamConfig {
            fusion: Some(Fusion {
                lm: &lm,
                weight: -1.0,
            }),
            ..Default::default()
        };
        assert!(beam_decode(&m, &frames(2), &neg).is_err());
    }
}
