//! Neural transducer: LSTM predictor, additive tanh joiner, alignment-lattice
//! loss and greedy/beam decoding with shallow LM fusion.

mod decode;
mod lm;
mod loss;

pub use decode::{
    beam_decode, greedy_decode, BeamConfig, Decoded, Fusion, Hypothesis, JointModel,
    StreamingGreedy, DEFAULT_MAX_SYMBOLS_PER_FRAME,
};
pub use lm::{CountBigramLm, LanguageModel, UniformLm};
pub use loss::{log_add_exp, rnnt_loss, RnntLattice, RnntLoss};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::{impl_params, Init, Params, INIT_SCALE};
use crate::rng::SeededRng;
use crate::tensor::{dot, log_softmax, sigmoid, Matrix};

/// Default shallow-fusion weight.
pub const DEFAULT_LM_WEIGHT: f64 = 0.25;

/// Target vocabulary. Ids `0..size` are real tokens and `size` is blank.
/// Blank is never fed back to the predictor, so embedding row `size` holds
/// the start symbol instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocab {
    pub size: usize,
}

impl Vocab {
    pub fn blank(&self) -> u32 {
        self.size as u32
    }

    /// Embedding row of the start symbol.
    pub fn sos_row(&self) -> usize {
        self.size
    }

    /// Joiner output classes: tokens plus blank.
    pub fn classes(&self) -> usize {
        self.size + 1
    }

    pub fn check_token(&self, id: u32) -> Result<()> {
        if (id as usize) < self.size {
            Ok(())
        } else {
            Err(Error::InvalidToken {
                id,
                limit: self.size as u32,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransducerConfig {
    pub vocab: Vocab,
    pub embed_dim: usize,
    pub hidden: usize,
    pub joint_dim: usize,
    /// Width of the encoder frames fed to the joiner.
    pub encoder_dim: usize,
}

impl TransducerConfig {
    /// 1024 sentence pieces, 256-d embeddings, one 320-unit LSTM, 640-d
    /// joint space.
    pub fn standard(encoder_dim: usize) -> Self {
        Self {
            vocab: Vocab { size: 1024 },
            embed_dim: 256,
            hidden: 320,
            joint_dim: 640,
            encoder_dim,
        }
    }
}

/// Single-layer LSTM predictor. Gate rows are ordered input, forget, cell,
/// output.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorWeights {
    /// (vocab + start) × embed.
    pub embedding: Matrix,
    pub w_ih: Matrix,
    pub w_hh: Matrix,
    pub bias: Matrix,
    pub proj: Matrix,
    pub proj_bias: Matrix,
}

impl_params!(PredictorWeights {
    embedding,
    w_ih,
    w_hh,
    bias,
    proj,
    proj_bias,
});

impl PredictorWeights {
    pub fn init(cfg: &TransducerConfig, init: &mut Init<'_>) -> Self {
        let h = cfg.hidden;
        Self {
            embedding: init.weight(cfg.vocab.size + 1, cfg.embed_dim),
            w_ih: init.weight(4 * h, cfg.embed_dim),
            w_hh: init.weight(4 * h, h),
            bias: init.bias(4 * h),
            proj: init.weight(cfg.joint_dim, h),
            proj_bias: init.bias(cfg.joint_dim),
        }
    }
}

/// Recurrent state after some prefix, with its projected output.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorState {
    pub h: Vec<f32>,
    pub c: Vec<f32>,
    /// Projected output (joint dim) for the last consumed symbol.
    pub g: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinerWeights {
    pub enc_proj: Matrix,
    pub enc_bias: Matrix,
    pub out: Matrix,
    pub out_bias: Matrix,
}

impl_params!(JoinerWeights {
    enc_proj,
    enc_bias,
    out,
    out_bias,
});

impl JoinerWeights {
    pub fn init(cfg: &TransducerConfig, init: &mut Init<'_>) -> Self {
        Self {
            enc_proj: init.weight(cfg.joint_dim, cfg.encoder_dim),
            enc_bias: init.bias(cfg.joint_dim),
            out: init.weight(cfg.vocab.classes(), cfg.joint_dim),
            out_bias: init.bias(cfg.vocab.classes()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransducerWeights {
    pub predictor: PredictorWeights,
    pub joiner: JoinerWeights,
}

impl_params!(TransducerWeights { predictor, joiner });

/// Predictor and joiner together.
#[derive(Debug, Clone, PartialEq)]
pub struct Transducer {
    config: TransducerConfig,
    weights: TransducerWeights,
}

impl Transducer {
    pub fn init(config: TransducerConfig, init: &mut Init<'_>) -> Self {
        Self {
            weights: TransducerWeights {
                predictor: PredictorWeights::init(&config, init),
                joiner: JoinerWeights::init(&config, init),
            },
            config,
        }
    }

    pub fn random(config: TransducerConfig, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        Self::init(
            config,
            &mut Init::Uniform {
                rng: &mut rng,
                scale: INIT_SCALE,
            },
        )
    }

    pub fn new(config: TransducerConfig, weights: TransducerWeights) -> Result<Self> {
        let template = Self::init(config, &mut Init::Zeros);
        crate::encoder::check_same_layout(&template.weights, &weights)?;
        Ok(Self { config, weights })
    }

    pub fn config(&self) -> &TransducerConfig {
        &self.config
    }

    pub fn weights(&self) -> &TransducerWeights {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut TransducerWeights {
        &mut self.weights
    }

    pub fn param_count(&self) -> usize {
        self.weights.param_count()
    }

    fn lstm_step(&self, state: &PredictorState, row: usize) -> PredictorState {
        let p = &self.weights.predictor;
        let hidden = self.config.hidden;
        let x = p.embedding.row(row);
        let mut gates = vec![0.0f64; 4 * hidden];
        for (j, gate) in gates.iter_mut().enumerate() {
            *gate = dot(x, p.w_ih.row(j))
                + dot(&state.h, p.w_hh.row(j))
                + f64::from(p.bias.as_slice()[j]);
        }
        let mut h = vec![0.0f32; hidden];
        let mut c = vec![0.0f32; hidden];
        for k in 0..hidden {
            let i = sigmoid(gates[k] as f32);
            let f = sigmoid(gates[hidden + k] as f32);
            let g = libm::tanh(gates[2 * hidden + k]) as f32;
            let o = sigmoid(gates[3 * hidden + k] as f32);
            c[k] = f * state.c[k] + i * g;
            h[k] = o * libm::tanhf(c[k]);
        }
        let g = (0..self.config.joint_dim)
            .map(|j| (dot(&h, p.proj.row(j)) + f64::from(p.proj_bias.as_slice()[j])) as f32)
            .collect();
        PredictorState { h, c, g }
    }

    /// State after the start symbol only.
    pub fn initial_state(&self) -> PredictorState {
        let zero = PredictorState {
            h: vec![0.0; self.config.hidden],
            c: vec![0.0; self.config.hidden],
            g: vec![0.0; self.config.joint_dim],
        };
        self.lstm_step(&zero, self.config.vocab.sos_row())
    }

    /// Advances the predictor by one emitted token.
    pub fn predictor_step(&self, state: &PredictorState, token: u32) -> Result<PredictorState> {
        self.config.vocab.check_token(token)?;
        Ok(self.lstm_step(state, token as usize))
    }

    /// Runs the predictor over a whole prefix from the start symbol.
    pub fn predictor_forward(&self, prefix: &[u32]) -> Result<PredictorState> {
        let mut state = self.initial_state();
        for &t in prefix {
            state = self.predictor_step(&state, t)?;
        }
        Ok(state)
    }

    /// Encoder rows mapped into the joint space.
    pub fn project_encoder(&self, frames: &Matrix) -> Result<Matrix> {
        let j = &self.weights.joiner;
        crate::tensor::linear(frames, &j.enc_proj, Some(j.enc_bias.as_slice()))
    }

    /// `log_softmax(W_out · tanh(f + g) + b)` for an already projected
    /// encoder frame `f` and predictor output `g`.
    pub fn join(&self, f: &[f32], g: &[f32]) -> Result<Vec<f64>> {
        let dim = self.config.joint_dim;
        if f.len() != dim || g.len() != dim {
            return Err(Error::Shape {
                op: "join",
                left: (1, f.len()),
                right: (1, g.len()),
            });
        }
        let hidden: Vec<f32> = f
            .iter()
            .zip(g)
            .map(|(&a, &b)| libm::tanh(f64::from(a) + f64::from(b)) as f32)
            .collect();
        let j = &self.weights.joiner;
        let logits: Vec<f32> = (0..self.config.vocab.classes())
            .map(|k| (dot(&hidden, j.out.row(k)) + f64::from(j.out_bias.as_slice()[k])) as f32)
            .collect();
        Ok(log_softmax(&logits))
    }
}

impl JointModel for Transducer {
    type State = PredictorState;

    fn vocab_size(&self) -> usize {
        self.config.vocab.size
    }

    fn prepare(&self, frames: &Matrix) -> Result<Matrix> {
        self.project_encoder(frames)
    }

    fn initial_state(&self) -> PredictorState {
        Transducer::initial_state(self)
    }

    fn advance(&self, state: &PredictorState, token: u32) -> Result<PredictorState> {
        self.predictor_step(state, token)
    }

    fn log_probs(&self, frame: &[f32], state: &PredictorState) -> Result<Vec<f64>> {
        self.join(frame, &state.g)
    }
}
