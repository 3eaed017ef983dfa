//! Alignment-lattice loss with forward-backward gradients.
//!
//! Node `(t, u)` holds the output distribution after `t` frames of blanks
//! and `u` emitted targets. A blank moves to `(t + 1, u)`, the next target
//! moves to `(t, u + 1)`, and every alignment ends with a blank from
//! `(T - 1, U)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

use super::decode::JointModel;

/// `ln(e^a + e^b)` that treats `-inf` as an exact zero.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + libm::log1p(libm::exp(lo - hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnntLattice {
    frames: usize,
    target_len: usize,
    classes: usize,
    blank: u32,
    log_probs: Vec<f64>,
}

impl RnntLattice {
    /// `log_probs` is laid out `[t][u][k]` with `frames × (target_len + 1) ×
    /// classes` entries.
    pub fn new(
        frames: usize,
        target_len: usize,
        classes: usize,
        blank: u32,
        log_probs: Vec<f64>,
    ) -> Result<Self> {
        if frames == 0 {
            return Err(Error::EmptyInput("lattice needs at least one frame"));
        }
        if classes < 2 || blank as usize >= classes {
            return Err(Error::Config(
                "lattice needs a blank plus at least one token".into(),
            ));
        }
        let want = frames * (target_len + 1) * classes;
        if log_probs.len() != want {
            return Err(Error::Shape {
                op: "rnnt_lattice",
                left: (frames * (target_len + 1), classes),
                right: (log_probs.len(), 1),
            });
        }
        Ok(Self {
            frames,
            target_len,
            classes,
            blank,
            log_probs,
        })
    }

    /// Builds the lattice from raw logits by normalizing each node.
    pub fn from_logits(
        frames: usize,
        target_len: usize,
        classes: usize,
        blank: u32,
        logits: &[f32],
    ) -> Result<Self> {
        if classes == 0 || !logits.len().is_multiple_of(classes) {
            return Err(Error::Config(
                "logit count is not a multiple of classes".into(),
            ));
        }
        let mut log_probs = Vec::with_capacity(logits.len());
        for node in logits.chunks_exact(classes) {
            log_probs.extend(crate::tensor::log_softmax(node));
        }
        Self::new(frames, target_len, classes, blank, log_probs)
    }

    /// Evaluates the joint model at every node for the given target.
    pub fn from_model<M: JointModel>(
        model: &M,
        encoder_out: &Matrix,
        target: &[u32],
    ) -> Result<Self> {
        let frames = model.prepare(encoder_out)?;
        let classes = model.vocab_size() + 1;
        let mut states = Vec::with_capacity(target.len() + 1);
        states.push(model.initial_state());
        for &tok in target {
            let next = model.advance(states.last().expect("nonempty"), tok)?;
            states.push(next);
        }
        let mut log_probs = Vec::with_capacity(frames.rows() * states.len() * classes);
        for t in 0..frames.rows() {
            for state in &states {
                log_probs.extend(model.log_probs(frames.row(t), state)?);
            }
        }
        Self::new(
            frames.rows(),
            target.len(),
            classes,
            model.blank(),
            log_probs,
        )
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn target_len(&self) -> usize {
        self.target_len
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn blank(&self) -> u32 {
        self.blank
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_probs_mut(&mut self) -> &mut [f64] {
        &mut self.log_probs
    }

    pub fn index(&self, t: usize, u: usize, k: usize) -> usize {
        (t * (self.target_len + 1) + u) * self.classes + k
    }

    pub fn log_prob(&self, t: usize, u: usize, k: usize) -> f64 {
        self.log_probs[self.index(t, u, k)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnntLoss {
    /// `-ln P(target | input)`.
    pub loss: f64,
    /// d loss / d log_probs, same layout as the lattice.
    pub grad: Vec<f64>,
    /// Forward log-probabilities, `frames × (target_len + 1)`.
    pub alpha: Vec<f64>,
    /// Backward log-probabilities, `frames × (target_len + 1)`.
    pub beta: Vec<f64>,
}

pub fn rnnt_loss(lattice: &RnntLattice, target: &[u32]) -> Result<RnntLoss> {
    if target.len() != lattice.target_len {
        return Err(Error::Config(
            "target length does not match the lattice".into(),
        ));
    }
    for &id in target {
        if id == lattice.blank || id as usize >= lattice.classes {
            return Err(Error::InvalidToken {
                id,
                limit: lattice.classes as u32,
            });
        }
    }
    let (t_len, width) = (lattice.frames, lattice.target_len + 1);
    let u_max = lattice.target_len;
    let blank = lattice.blank as usize;
    let at = |t: usize, u: usize| t * width + u;
    let emit = |t: usize, u: usize| lattice.log_prob(t, u, target[u] as usize);
    let skip = |t: usize, u: usize| lattice.log_prob(t, u, blank);

    let mut alpha = vec![f64::NEG_INFINITY; t_len * width];
    for t in 0..t_len {
        for u in 0..width {
            alpha[at(t, u)] = if t == 0 && u == 0 {
                0.0
            } else {
                let from_blank = if t > 0 {
                    alpha[at(t - 1, u)] + skip(t - 1, u)
                } else {
                    f64::NEG_INFINITY
                };
                let from_emit = if u > 0 {
                    alpha[at(t, u - 1)] + emit(t, u - 1)
                } else {
                    f64::NEG_INFINITY
                };
                log_add_exp(from_blank, from_emit)
            };
        }
    }

    let mut beta = vec![f64::NEG_INFINITY; t_len * width];
    for t in (0..t_len).rev() {
        for u in (0..width).rev() {
            beta[at(t, u)] = if t == t_len - 1 && u == u_max {
                skip(t, u)
            } else {
                let via_blank = if t + 1 < t_len {
                    beta[at(t + 1, u)] + skip(t, u)
                } else {
                    f64::NEG_INFINITY
                };
                let via_emit = if u < u_max {
                    beta[at(t, u + 1)] + emit(t, u)
                } else {
                    f64::NEG_INFINITY
                };
                log_add_exp(via_blank, via_emit)
            };
        }
    }

    let log_total = alpha[at(t_len - 1, u_max)] + skip(t_len - 1, u_max);
    let mut grad = vec![0.0; lattice.log_probs.len()];
    if log_total.is_finite() {
        for t in 0..t_len {
            for u in 0..width {
                let a = alpha[at(t, u)];
                if a == f64::NEG_INFINITY {
                    continue;
                }
                let after_blank = if t + 1 < t_len {
                    beta[at(t + 1, u)]
                } else if u == u_max {
                    0.0
                } else {
                    f64::NEG_INFINITY
                };
                grad[lattice.index(t, u, blank)] =
                    -libm::exp(a + skip(t, u) + after_blank - log_total);
                if u < u_max {
                    grad[lattice.index(t, u, target[u] as usize)] =
                        -libm::exp(a + emit(t, u) + beta[at(t, u + 1)] - log_total);
                }
            }
        }
    }

    Ok(RnntLoss {
        loss: -log_total,
        grad,
        alpha,
        beta,
    })
}
