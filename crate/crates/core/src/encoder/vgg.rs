//! VGG-style subsampling front-end.
//!
//! Two stages, each made of two 3×3 convolutions (time × frequency, ReLU)
//! followed by a 2×2 max-pool, so time and frequency both shrink by 4 with
//! ceil semantics. The pooled map is flattened channel-major and linearly
//! projected to the model dimension.
//!
//! [`FrontEnd`] runs the same computation one raw frame at a time. Every
//! output depends on a fixed window of inputs and is computed by the same
//! kernel in both paths, so the streaming and whole-sequence results are
//! bit-identical.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::{impl_params, Init};
use crate::tensor::{linear, Matrix};

/// Raw frames beyond the last raw frame of an encoder frame's pooling window
/// that the front-end needs before that encoder frame is final.
///
/// Encoder frame `e` covers raw frames `4e..4e+3` and reads up to raw frame
/// `4e + 9`: one frame per convolution at the raw rate, then one half-rate
/// frame (two raw frames) per convolution in the second stage.
pub const RAW_LOOKAHEAD_FRAMES: usize = 6;

/// Encoder frames produced from `raw_frames` input frames.
pub fn subsampled_len(raw_frames: usize) -> usize {
    raw_frames.div_ceil(2).div_ceil(2)
}

/// Front-end parameters. Convolution kernels are stored as
/// (out_channels × in_channels·9) with taps ordered `[in][dt][df]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VggWeights {
    pub conv1: Matrix,
    pub conv1_bias: Matrix,
    pub conv2: Matrix,
    pub conv2_bias: Matrix,
    pub conv3: Matrix,
    pub conv3_bias: Matrix,
    pub conv4: Matrix,
    pub conv4_bias: Matrix,
    pub proj: Matrix,
    pub proj_bias: Matrix,
}

impl_params!(VggWeights {
    conv1,
    conv1_bias,
    conv2,
    conv2_bias,
    conv3,
    conv3_bias,
    conv4,
    conv4_bias,
    proj,
    proj_bias,
});

/// Geometry of the front-end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VggShape {
    pub bins: usize,
    pub channels: [usize; 2],
    pub dim: usize,
}

impl VggShape {
    fn freq(&self, stage: usize) -> usize {
        match stage {
            0 => self.bins,
            1 => self.bins.div_ceil(2),
            _ => self.bins.div_ceil(2).div_ceil(2),
        }
    }

    /// Width of the flattened map fed to the projection.
    pub fn flat_dim(&self) -> usize {
        self.channels[1] * self.freq(2)
    }

    /// (in_channels, out_channels, frequency bins) of each convolution.
    fn convs(&self) -> [(usize, usize, usize); 4] {
        let [c1, c2] = self.channels;
        [
            (1, c1, self.freq(0)),
            (c1, c1, self.freq(0)),
            (c1, c2, self.freq(1)),
            (c2, c2, self.freq(1)),
        ]
    }
}

impl VggWeights {
    pub fn init(shape: VggShape, init: &mut Init<'_>) -> Self {
        let [a, b, c, d] = shape.convs();
        let mut conv = |(i, o, _): (usize, usize, usize)| (init.weight(o, i * 9), init.bias(o));
        let (conv1, conv1_bias) = conv(a);
        let (conv2, conv2_bias) = conv(b);
        let (conv3, conv3_bias) = conv(c);
        let (conv4, conv4_bias) = conv(d);
        Self {
            conv1,
            conv1_bias,
            conv2,
            conv2_bias,
            conv3,
            conv3_bias,
            conv4,
            conv4_bias,
            proj: init.weight(shape.dim, shape.flat_dim()),
            proj_bias: init.bias(shape.dim),
        }
    }

    fn conv(&self, idx: usize) -> (&Matrix, &[f32]) {
        match idx {
            0 => (&self.conv1, self.conv1_bias.as_slice()),
            1 => (&self.conv2, self.conv2_bias.as_slice()),
            2 => (&self.conv3, self.conv3_bias.as_slice()),
            _ => (&self.conv4, self.conv4_bias.as_slice()),
        }
    }

    pub fn check(&self, shape: VggShape) -> Result<()> {
        for (idx, (i, o, _)) in shape.convs().into_iter().enumerate() {
            let (w, b) = self.conv(idx);
            if w.shape() != (o, i * 9) || b.len() != o {
                return Err(Error::Shape {
                    op: "vgg conv",
                    left: w.shape(),
                    right: (o, i * 9),
                });
            }
        }
        if self.proj.shape() != (shape.dim, shape.flat_dim()) || self.proj_bias.len() != shape.dim {
            return Err(Error::Shape {
                op: "vgg projection",
                left: self.proj.shape(),
                right: (shape.dim, shape.flat_dim()),
            });
        }
        Ok(())
    }
}

/// One time step of a 3×3 convolution + ReLU. Frames are channel-major
/// `[channel][freq]`; missing neighbours read as zeros.
fn conv3x3(
    w: &Matrix,
    bias: &[f32],
    in_ch: usize,
    freq: usize,
    window: [Option<&[f32]>; 3],
) -> Vec<f32> {
    let out_ch = w.rows();
    let mut out = vec![0.0f32; out_ch * freq];
    for o in 0..out_ch {
        let taps = w.row(o);
        for f in 0..freq {
            let mut acc = f64::from(bias[o]);
            for i in 0..in_ch {
                for (dt, frame) in window.iter().enumerate() {
                    let Some(frame) = frame else { continue };
                    let plane = &frame[i * freq..(i + 1) * freq];
                    for df in 0..3 {
                        let ff = f as isize + df as isize - 1;
                        if ff < 0 || ff >= freq as isize {
                            continue;
                        }
                        acc += f64::from(taps[i * 9 + dt * 3 + df]) * f64::from(plane[ff as usize]);
                    }
                }
            }
            out[o * freq + f] = (acc as f32).max(0.0);
        }
    }
    out
}

/// 2×2 max-pool of one or two time steps; odd frequency tails pool alone.
fn pool2x2(channels: usize, freq: usize, a: &[f32], b: Option<&[f32]>) -> Vec<f32> {
    let out_freq = freq.div_ceil(2);
    let mut out = vec![0.0f32; channels * out_freq];
    for c in 0..channels {
        for g in 0..out_freq {
            let mut m = f32::NEG_INFINITY;
            for f in [2 * g, 2 * g + 1] {
                if f >= freq {
                    continue;
                }
                m = m.max(a[c * freq + f]);
                if let Some(b) = b {
                    m = m.max(b[c * freq + f]);
                }
            }
            out[c * out_freq + g] = m;
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum StageKind {
    Conv {
        idx: usize,
        in_ch: usize,
        freq: usize,
    },
    Pool {
        channels: usize,
        freq: usize,
    },
}

/// One incremental layer: buffers the few inputs it still needs and emits
/// each output as soon as it can no longer change.
#[derive(Debug, Clone)]
struct Stage {
    kind: StageKind,
    buf: VecDeque<Vec<f32>>,
    base: usize,
    received: usize,
    emitted: usize,
}

impl Stage {
    fn new(kind: StageKind) -> Self {
        Self {
            kind,
            buf: VecDeque::new(),
            base: 0,
            received: 0,
            emitted: 0,
        }
    }

    fn get(&self, idx: usize) -> Option<&[f32]> {
        if idx < self.base || idx >= self.received {
            return None;
        }
        self.buf.get(idx - self.base).map(Vec::as_slice)
    }

    fn compute(&self, weights: &VggWeights, t: usize) -> Vec<f32> {
        match self.kind {
            StageKind::Conv { idx, in_ch, freq } => {
                let (w, b) = weights.conv(idx);
                let prev = t.checked_sub(1).and_then(|p| self.get(p));
                let cur = self.get(t);
                let next = self.get(t + 1);
                conv3x3(w, b, in_ch, freq, [prev, cur, next])
            }
            StageKind::Pool { channels, freq } => {
                let a = self.get(2 * t).expect("first pooled frame is buffered");
                pool2x2(channels, freq, a, self.get(2 * t + 1))
            }
        }
    }

    /// Index of the last input output `t` reads when the stream continues.
    fn last_input(&self, t: usize) -> usize {
        match self.kind {
            StageKind::Conv { .. } => t + 1,
            StageKind::Pool { .. } => 2 * t + 1,
        }
    }

    fn first_input(&self, t: usize) -> usize {
        match self.kind {
            StageKind::Conv { .. } => t.saturating_sub(1),
            StageKind::Pool { .. } => 2 * t,
        }
    }

    fn trim(&mut self) {
        let keep_from = self.first_input(self.emitted);
        while self.base < keep_from && !self.buf.is_empty() {
            self.buf.pop_front();
            self.base += 1;
        }
    }

    fn push(&mut self, weights: &VggWeights, frame: Vec<f32>) -> Vec<Vec<f32>> {
        self.buf.push_back(frame);
        self.received += 1;
        let mut out = Vec::new();
        while self.last_input(self.emitted) < self.received {
            out.push(self.compute(weights, self.emitted));
            self.emitted += 1;
        }
        self.trim();
        out
    }

    /// Emits the outputs that were waiting for more input.
    fn finish(&mut self, weights: &VggWeights) -> Vec<Vec<f32>> {
        let total = match self.kind {
            StageKind::Conv { .. } => self.received,
            StageKind::Pool { .. } => self.received.div_ceil(2),
        };
        let mut out = Vec::new();
        while self.emitted < total {
            out.push(self.compute(weights, self.emitted));
            self.emitted += 1;
        }
        self.trim();
        out
    }
}

fn stage_kinds(shape: VggShape) -> [StageKind; 6] {
    let [c1, c2] = shape.channels;
    let (f0, f1) = (shape.freq(0), shape.freq(1));
    [
        StageKind::Conv {
            idx: 0,
            in_ch: 1,
            freq: f0,
        },
        StageKind::Conv {
            idx: 1,
            in_ch: c1,
            freq: f0,
        },
        StageKind::Pool {
            channels: c1,
            freq: f0,
        },
        StageKind::Conv {
            idx: 2,
            in_ch: c1,
            freq: f1,
        },
        StageKind::Conv {
            idx: 3,
            in_ch: c2,
            freq: f1,
        },
        StageKind::Pool {
            channels: c2,
            freq: f1,
        },
    ]
}

fn project(weights: &VggWeights, flat: &[f32]) -> Vec<f32> {
    linear(
        &Matrix::row_vector(flat),
        &weights.proj,
        Some(weights.proj_bias.as_slice()),
    )
    .expect("projection shape checked at construction")
    .into_vec()
}

/// Whole-utterance front-end: (T × bins) features to (ceil(ceil(T/2)/2) × dim).
pub fn vgg_subsample(features: &Matrix, weights: &VggWeights, shape: VggShape) -> Result<Matrix> {
    if features.cols() != shape.bins {
        return Err(Error::Shape {
            op: "vgg_subsample",
            left: features.shape(),
            right: (0, shape.bins),
        });
    }
    if features.rows() == 0 {
        return Err(Error::EmptyInput("vgg_subsample"));
    }
    let mut frames: Vec<Vec<f32>> = features.iter_rows().map(<[f32]>::to_vec).collect();
    for kind in stage_kinds(shape) {
        let t_out = match kind {
            StageKind::Conv { .. } => frames.len(),
            StageKind::Pool { .. } => frames.len().div_ceil(2),
        };
        let at = |i: usize| frames.get(i).map(Vec::as_slice);
        frames = (0..t_out)
            .map(|t| match kind {
                StageKind::Conv { idx, in_ch, freq } => {
                    let (w, b) = weights.conv(idx);
                    let prev = t.checked_sub(1).and_then(at);
                    conv3x3(w, b, in_ch, freq, [prev, at(t), at(t + 1)])
                }
                StageKind::Pool { channels, freq } => {
                    pool2x2(channels, freq, &frames[2 * t], at(2 * t + 1))
                }
            })
            .collect();
    }
    let mut out = Matrix::zeros(0, shape.dim);
    for flat in &frames {
        out.push_row(&project(weights, flat))?;
    }
    Ok(out)
}

/// Incremental front-end for one stream.
#[derive(Debug, Clone)]
pub struct FrontEnd {
    shape: VggShape,
    stages: Vec<Stage>,
    finished: bool,
}

impl FrontEnd {
    pub fn new(shape: VggShape) -> Self {
        Self {
            shape,
            stages: stage_kinds(shape).into_iter().map(Stage::new).collect(),
            finished: false,
        }
    }

    /// Feeds one raw frame; returns the encoder frames that became final.
    pub fn push(&mut self, weights: &VggWeights, frame: &[f32]) -> Result<Vec<Vec<f32>>> {
        if self.finished {
            return Err(Error::State("front-end already finished"));
        }
        if frame.len() != self.shape.bins {
            return Err(Error::Shape {
                op: "FrontEnd::push",
                left: (1, frame.len()),
                right: (1, self.shape.bins),
            });
        }
        let mut pending = vec![frame.to_vec()];
        for stage in &mut self.stages {
            let mut next = Vec::new();
            for item in pending {
                next.extend(stage.push(weights, item));
            }
            pending = next;
        }
        Ok(pending.iter().map(|flat| project(weights, flat)).collect())
    }

    /// Flushes the tail with zero padding past the last frame.
    pub fn finish(&mut self, weights: &VggWeights) -> Result<Vec<Vec<f32>>> {
        if self.finished {
            return Err(Error::State("front-end already finished"));
        }
        self.finished = true;
        let mut pending: Vec<Vec<f32>> = Vec::new();
        for stage in &mut self.stages {
            let mut next = Vec::new();
            for item in pending {
                next.extend(stage.push(weights, item));
            }
            next.extend(stage.finish(weights));
            pending = next;
        }
        Ok(pending.iter().map(|flat| project(weights, flat)).collect())
    }

    pub fn raw_frames_seen(&self) -> usize {
        self.stages[0].received
    }
}
