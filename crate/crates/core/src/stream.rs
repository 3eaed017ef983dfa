//! Block-wise streaming: cuts encoder frames into segments with left, center
//! and right context, runs them through the encoder and emits center rows.

use alloc::vec::Vec;

use crate::attention::{MemoryBank, SegmentInput};
use crate::encoder::{Encoder, FrontEnd};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Segment geometry in encoder frames, plus what is needed to convert the
/// right context into milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmenterConfig {
    pub left: usize,
    pub center: usize,
    pub right: usize,
    /// Raw frames per encoder frame.
    pub subsample_factor: usize,
    pub frame_shift_ms: f64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            left: 16,
            center: 32,
            right: 8,
            subsample_factor: 4,
            frame_shift_ms: 10.0,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.center == 0 {
            return Err(Error::Config("segment center must be >= 1".into()));
        }
        if self.subsample_factor == 0 || self.frame_shift_ms.is_nan() || self.frame_shift_ms <= 0.0
        {
            return Err(Error::Config(
                "subsample factor and frame shift must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Rows of a segment with full left and right context.
    pub fn full_segment_len(&self) -> usize {
        self.left + self.center + self.right
    }
}

/// Algorithmic latency of the right context, in milliseconds.
pub fn lookahead_ms(cfg: &SegmenterConfig) -> f64 {
    cfg.right as f64 * cfg.subsample_factor as f64 * cfg.frame_shift_ms
}

/// Key rows attention sees for the `n`-th segment (1-based) when it has
/// full left context: memory slots plus the segment's own rows.
pub fn steady_state_key_rows(cfg: &SegmenterConfig, n: usize, memory_cap: Option<usize>) -> usize {
    let memory = n.saturating_sub(1);
    let memory = memory_cap.map_or(memory, |cap| memory.min(cap));
    memory + cfg.full_segment_len()
}

/// What was processed for one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentStats {
    /// 1-based segment number.
    pub index: usize,
    /// Absolute encoder-frame index of the first center row.
    pub center_start: usize,
    pub left: usize,
    pub center: usize,
    pub right: usize,
    /// Memory slots per layer before this segment.
    pub memory_slots: usize,
    /// Key/value rows seen by every attention layer.
    pub key_rows: usize,
}

impl SegmentStats {
    /// Absolute index one past the last right-context frame.
    pub fn context_end(&self) -> usize {
        self.center_start + self.center + self.right
    }
}

/// Segmenter and encoder state for one utterance, fed with encoder frames.
#[derive(Debug, Clone)]
pub struct SegmentStream<'a> {
    encoder: &'a Encoder,
    /// Buffered encoder frames starting at absolute index `base`.
    buffer: Matrix,
    base: usize,
    received: usize,
    next_center: usize,
    banks: Vec<MemoryBank>,
    stats: Vec<SegmentStats>,
    finalized: bool,
}

impl<'a> SegmentStream<'a> {
    pub fn new(encoder: &'a Encoder) -> Self {
        Self {
            encoder,
            buffer: Matrix::zeros(0, encoder.config().dim),
            base: 0,
            received: 0,
            next_center: 0,
            banks: encoder.new_banks(),
            stats: Vec::new(),
            finalized: false,
        }
    }

    fn cfg(&self) -> SegmenterConfig {
        self.encoder.config().segmenter
    }

    /// Appends encoder frames and returns the center outputs of every
    /// segment whose right context is now complete.
    pub fn push_frames(&mut self, frames: &Matrix) -> Result<Matrix> {
        if self.finalized {
            return Err(Error::State("push after finalize"));
        }
        if frames.cols() != self.buffer.cols() && frames.rows() > 0 {
            return Err(Error::Shape {
                op: "push_frames",
                left: frames.shape(),
                right: (0, self.buffer.cols()),
            });
        }
        for row in frames.iter_rows() {
            self.buffer.push_row(row)?;
            self.received += 1;
        }
        let cfg = self.cfg();
        let mut out = Matrix::zeros(0, self.buffer.cols());
        while self.next_center + cfg.center + cfg.right <= self.received {
            let y = self.run_segment(cfg.center, cfg.right)?;
            out = Matrix::vstack(&[&out, &y])?;
        }
        Ok(out)
    }

    /// Flushes the remaining frames. Leftover frames are cut into segments of
    /// at most `center` rows, each with whatever right context remains.
    pub fn finalize(&mut self) -> Result<Matrix> {
        if self.finalized {
            return Err(Error::State("already finalized"));
        }
        self.finalized = true;
        let cfg = self.cfg();
        let mut out = Matrix::zeros(0, self.buffer.cols());
        while self.next_center < self.received {
            let center = cfg.center.min(self.received - self.next_center);
            let right = cfg.right.min(self.received - self.next_center - center);
            let y = self.run_segment(center, right)?;
            out = Matrix::vstack(&[&out, &y])?;
        }
        Ok(out)
    }

    fn run_segment(&mut self, center: usize, right: usize) -> Result<Matrix> {
        let cfg = self.cfg();
        let start = self.next_center;
        let left_start = start.saturating_sub(cfg.left);
        let rows = self
            .buffer
            .slice_rows(left_start - self.base..start + center + right - self.base);
        let seg = SegmentInput::from_stacked(rows, start - left_start, center, right)?;
        let memory_slots = self.banks.first().map_or(0, MemoryBank::len);
        let y = self.encoder.forward_segment(&seg, &mut self.banks)?;
        self.stats.push(SegmentStats {
            index: self.stats.len() + 1,
            center_start: start,
            left: start - left_start,
            center,
            right,
            memory_slots,
            key_rows: memory_slots + seg.total_len(),
        });
        self.next_center += center;
        self.trim();
        Ok(y)
    }

    fn trim(&mut self) {
        let keep_from = self.next_center.saturating_sub(self.cfg().left);
        if keep_from > self.base {
            self.buffer = self
                .buffer
                .slice_rows(keep_from - self.base..self.buffer.rows());
            self.base = keep_from;
        }
    }

    pub fn banks(&self) -> &[MemoryBank] {
        &self.banks
    }

    pub fn stats(&self) -> &[SegmentStats] {
        &self.stats
    }

    pub fn segments_emitted(&self) -> usize {
        self.stats.len()
    }

    pub fn frames_received(&self) -> usize {
        self.received
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }
}

/// One streaming utterance from raw 80-bin feature frames to encoder center
/// outputs. Pushes and finalize must be serialized by the caller; distinct
/// sessions over the same encoder are independent.
#[derive(Debug, Clone)]
pub struct StreamSession<'a> {
    front_end: FrontEnd,
    segments: SegmentStream<'a>,
}

impl<'a> StreamSession<'a> {
    pub fn new(encoder: &'a Encoder) -> Self {
        Self {
            front_end: encoder.front_end(),
            segments: SegmentStream::new(encoder),
        }
    }

    pub fn push_features(&mut self, chunk: &Matrix) -> Result<Matrix> {
        if self.segments.is_finalized() {
            return Err(Error::State("push after finalize"));
        }
        let encoder = self.segments.encoder;
        let bins = encoder.config().feature_bins;
        if chunk.cols() != bins {
            return Err(Error::Shape {
                op: "push_features",
                left: chunk.shape(),
                right: (0, bins),
            });
        }
        let mut frames = Matrix::zeros(0, encoder.config().dim);
        for row in chunk.iter_rows() {
            for f in self.front_end.push(&encoder.weights().front_end, row)? {
                frames.push_row(&f)?;
            }
        }
        self.segments.push_frames(&frames)
    }

    pub fn finalize(&mut self) -> Result<Matrix> {
        if self.segments.is_finalized() {
            return Err(Error::State("already finalized"));
        }
        let encoder = self.segments.encoder;
        let mut frames = Matrix::zeros(0, encoder.config().dim);
        for f in self.front_end.finish(&encoder.weights().front_end)? {
            frames.push_row(&f)?;
        }
        let head = self.segments.push_frames(&frames)?;
        let tail = self.segments.finalize()?;
        Matrix::vstack(&[&head, &tail])
    }

    pub fn segments(&self) -> &SegmentStream<'a> {
        &self.segments
    }

    pub fn raw_frames_seen(&self) -> usize {
        self.front_end.raw_frames_seen()
    }
}
