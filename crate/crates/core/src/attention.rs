//! Multi-head attention over one segment with an augmented memory bank and
//! weak-attention suppression.
//!
//! For segment `n` the query rows are `[left; center; right; summary]` where
//! the summary row is the mean of the center rows. Keys and values are
//! `[memory; left; center; right]`. The attention output of the summary row
//! becomes the next memory slot.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::{impl_params, Init, INIT_SCALE};
use crate::rng::SeededRng;
use crate::tensor::{dot, linear, mean_pool_rows, softmax_in_place, Matrix};

/// Largest frame distance with its own position bucket; farther pairs are
/// clipped to `±MAX_RELATIVE_DISTANCE`.
pub const MAX_RELATIVE_DISTANCE: isize = 16;
/// Bucket shared by every pair that involves a memory slot or the summary
/// query.
pub const MEMORY_BUCKET: usize = 2 * MAX_RELATIVE_DISTANCE as usize + 1;
pub const NUM_POSITION_BUCKETS: usize = MEMORY_BUCKET + 1;

/// One segment's rows, split into left context, center and right context.
///
/// Rows are stored stacked (`left | center | right`) since every layer works
/// on them together.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentInput {
    rows: Matrix,
    left: usize,
    center: usize,
    right: usize,
}

impl SegmentInput {
    pub fn new(left: &Matrix, center: &Matrix, right: &Matrix) -> Result<Self> {
        let rows = Matrix::vstack(&[left, center, right])?;
        Self::from_stacked(rows, left.rows(), center.rows(), right.rows())
    }

    pub fn from_stacked(rows: Matrix, left: usize, center: usize, right: usize) -> Result<Self> {
        if center == 0 {
            return Err(Error::EmptyInput("segment center"));
        }
        if rows.rows() != left + center + right {
            return Err(Error::Shape {
                op: "SegmentInput::from_stacked",
                left: rows.shape(),
                right: (left + center + right, rows.cols()),
            });
        }
        Ok(Self {
            rows,
            left,
            center,
            right,
        })
    }

    pub fn stacked(&self) -> &Matrix {
        &self.rows
    }

    pub fn into_stacked(self) -> Matrix {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn left_len(&self) -> usize {
        self.left
    }

    pub fn center_len(&self) -> usize {
        self.center
    }

    pub fn right_len(&self) -> usize {
        self.right
    }

    pub fn total_len(&self) -> usize {
        self.left + self.center + self.right
    }

    pub fn left(&self) -> Matrix {
        self.rows.slice_rows(0..self.left)
    }

    pub fn center(&self) -> Matrix {
        self.rows.slice_rows(self.left..self.left + self.center)
    }

    pub fn right(&self) -> Matrix {
        self.rows
            .slice_rows(self.left + self.center..self.total_len())
    }

    /// Same layout with different row contents.
    pub fn with_rows(&self, rows: Matrix) -> Result<Self> {
        Self::from_stacked(rows, self.left, self.center, self.right)
    }
}

/// Per-layer memory of segment summaries. Oldest slots are evicted first
/// once `cap` is reached.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemoryBank {
    slots: Vec<Vec<f32>>,
    cap: Option<usize>,
}

impl MemoryBank {
    pub fn new(cap: Option<usize>) -> Self {
        Self {
            slots: Vec::new(),
            cap,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn cap(&self) -> Option<usize> {
        self.cap
    }

    pub fn slots(&self) -> &[Vec<f32>] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut [Vec<f32>] {
        &mut self.slots
    }

    pub fn push(&mut self, slot: Vec<f32>) {
        self.slots.push(slot);
        if let Some(cap) = self.cap {
            while self.slots.len() > cap {
                self.slots.remove(0);
            }
        }
    }

    /// Slots as a (len × dim) matrix.
    pub fn to_matrix(&self, dim: usize) -> Result<Matrix> {
        let mut m = Matrix::zeros(0, dim);
        for s in &self.slots {
            m.push_row(s)?;
        }
        Ok(m)
    }
}

/// Weak-attention suppression settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuppressionConfig {
    pub gamma: f32,
    pub enabled: bool,
}

impl SuppressionConfig {
    pub const DEFAULT_GAMMA: f32 = 0.5;

    pub fn new(gamma: f32) -> Result<Self> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::Config(alloc::format!(
                "suppression gamma must be finite and >= 0, got {gamma}"
            )));
        }
        Ok(Self {
            gamma,
            enabled: true,
        })
    }

    pub fn disabled() -> Self {
        Self {
            gamma: Self::DEFAULT_GAMMA,
            enabled: false,
        }
    }
}

impl Default for SuppressionConfig {
    fn default() -> Self {
        Self {
            gamma: Self::DEFAULT_GAMMA,
            enabled: true,
        }
    }
}

/// What a query or key row stands for, used to pick its position bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Memory,
    Frame(usize),
    Summary,
}

/// Position bucket for a (query, key) pair.
pub fn position_bucket(query: RowKind, key: RowKind) -> usize {
    match (query, key) {
        (RowKind::Frame(i), RowKind::Frame(j)) => {
            let rel =
                (j as isize - i as isize).clamp(-MAX_RELATIVE_DISTANCE, MAX_RELATIVE_DISTANCE);
            (rel + MAX_RELATIVE_DISTANCE) as usize
        }
        _ => MEMORY_BUCKET,
    }
}

/// Projections of one attention layer. Weight matrices are (out × in).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub heads: usize,
    pub wq: Matrix,
    pub bq: Matrix,
    pub wk: Matrix,
    pub bk: Matrix,
    pub wv: Matrix,
    pub bv: Matrix,
    pub wout: Matrix,
    pub bout: Matrix,
    /// heads × `NUM_POSITION_BUCKETS` learned logit offsets.
    pub position_bias: Matrix,
}

impl AttentionWeights {
    pub fn init(dim: usize, heads: usize, init: &mut Init<'_>) -> Result<Self> {
        check_heads(dim, heads)?;
        Ok(Self {
            heads,
            wq: init.weight(dim, dim),
            bq: init.bias(dim),
            wk: init.weight(dim, dim),
            bk: init.bias(dim),
            wv: init.weight(dim, dim),
            bv: init.bias(dim),
            wout: init.weight(dim, dim),
            bout: init.bias(dim),
            position_bias: init.weight(heads, NUM_POSITION_BUCKETS),
        })
    }

    /// Seeded uniform initialization.
    pub fn random(dim: usize, heads: usize, rng: &mut SeededRng) -> Result<Self> {
        Self::init(
            dim,
            heads,
            &mut Init::Uniform {
                rng,
                scale: INIT_SCALE,
            },
        )
    }

    /// Identity projections, zero biases and zero position bias.
    pub fn identity(dim: usize, heads: usize) -> Result<Self> {
        check_heads(dim, heads)?;
        Ok(Self {
            heads,
            wq: Matrix::identity(dim),
            bq: Matrix::zeros(1, dim),
            wk: Matrix::identity(dim),
            bk: Matrix::zeros(1, dim),
            wv: Matrix::identity(dim),
            bv: Matrix::zeros(1, dim),
            wout: Matrix::identity(dim),
            bout: Matrix::zeros(1, dim),
            position_bias: Matrix::zeros(heads, NUM_POSITION_BUCKETS),
        })
    }

    pub fn dim(&self) -> usize {
        self.wq.cols()
    }

    pub fn head_dim(&self) -> usize {
        self.dim() / self.heads
    }
}

impl_params!(AttentionWeights {
    wq,
    bq,
    wk,
    bk,
    wv,
    bv,
    wout,
    bout,
    position_bias,
});

fn check_heads(dim: usize, heads: usize) -> Result<()> {
    if heads == 0 || !dim.is_multiple_of(heads) {
        return Err(Error::Config(alloc::format!(
            "model dim {dim} is not divisible by {heads} heads"
        )));
    }
    Ok(())
}

/// Projected query rows `[left; center; right; summary]`.
pub fn build_query(seg: &SegmentInput, w: &AttentionWeights) -> Result<Matrix> {
    let summary = mean_pool_rows(&seg.center())?;
    let rows = Matrix::vstack(&[seg.stacked(), &Matrix::row_vector(&summary)])?;
    linear(&rows, &w.wq, Some(w.bq.as_slice()))
}

/// Projected key and value rows `[memory; left; center; right]`.
pub fn build_key_value(
    seg: &SegmentInput,
    mem: &MemoryBank,
    w: &AttentionWeights,
) -> Result<(Matrix, Matrix)> {
    let memory = mem.to_matrix(seg.dim())?;
    let rows = Matrix::vstack(&[&memory, seg.stacked()])?;
    let k = linear(&rows, &w.wk, Some(w.bk.as_slice()))?;
    let v = linear(&rows, &w.wv, Some(w.bv.as_slice()))?;
    Ok((k, v))
}

/// Row kinds of a segment's query: frames then the summary.
pub fn query_kinds(seg_len: usize) -> Vec<RowKind> {
    (0..seg_len)
        .map(RowKind::Frame)
        .chain(core::iter::once(RowKind::Summary))
        .collect()
}

/// Row kinds of a segment's keys: memory slots then frames.
pub fn key_kinds(memory_len: usize, seg_len: usize) -> Vec<RowKind> {
    core::iter::repeat_n(RowKind::Memory, memory_len)
        .chain((0..seg_len).map(RowKind::Frame))
        .collect()
}

/// Result of [`attend`].
#[derive(Debug, Clone)]
pub struct Attention {
    /// Output rows after the output projection, one per query row.
    pub output: Matrix,
    /// Post-suppression probabilities, one (queries × keys) matrix per head.
    pub probs: Vec<Matrix>,
}

/// Multi-head scaled dot-product attention with position bias and optional
/// weak-attention suppression.
pub fn attend(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    query_kinds: &[RowKind],
    key_kinds: &[RowKind],
    w: &AttentionWeights,
    sup: SuppressionConfig,
) -> Result<Attention> {
    let dim = w.dim();
    if q.cols() != dim || k.cols() != dim || v.cols() != dim || k.rows() != v.rows() {
        return Err(Error::Shape {
            op: "attend",
            left: q.shape(),
            right: k.shape(),
        });
    }
    if query_kinds.len() != q.rows() || key_kinds.len() != k.rows() {
        return Err(Error::Shape {
            op: "attend positions",
            left: (query_kinds.len(), key_kinds.len()),
            right: (q.rows(), k.rows()),
        });
    }
    let head_dim = w.head_dim();
    let scale = 1.0 / libm::sqrt(head_dim as f64);
    let mut context = Matrix::zeros(q.rows(), dim);
    let mut probs = Vec::with_capacity(w.heads);
    for h in 0..w.heads {
        let cols = h * head_dim..(h + 1) * head_dim;
        let bias = w.position_bias.row(h);
        let mut p = Matrix::zeros(q.rows(), k.rows());
        for i in 0..q.rows() {
            let qi = &q.row(i)[cols.clone()];
            let row = p.row_mut(i);
            for (j, logit) in row.iter_mut().enumerate() {
                let b = bias[position_bucket(query_kinds[i], key_kinds[j])];
                *logit = (dot(qi, &k.row(j)[cols.clone()]) * scale + f64::from(b)) as f32;
            }
            let ok = softmax_in_place(row);
            assert!(ok, "attention logits are finite");
            if sup.enabled {
                suppress_in_place(row, sup.gamma);
            }
            let ctx = &mut context.row_mut(i)[cols.clone()];
            weighted_sum_into(row, v, cols.clone(), ctx);
        }
        probs.push(p);
    }
    let output = linear(&context, &w.wout, Some(w.bout.as_slice()))?;
    Ok(Attention { output, probs })
}

/// `out = sum_j weights[j] * v[j][cols]`, accumulated in `f64` in row order.
fn weighted_sum_into(weights: &[f32], v: &Matrix, cols: core::ops::Range<usize>, out: &mut [f32]) {
    let mut acc = vec![0.0f64; cols.len()];
    for (j, &p) in weights.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let p = f64::from(p);
        for (a, &x) in acc.iter_mut().zip(&v.row(j)[cols.clone()]) {
            *a += p * f64::from(x);
        }
    }
    for (o, a) in out.iter_mut().zip(acc) {
        *o = a as f32;
    }
}

/// Threshold `mean - gamma * std` of a probability row (population std).
pub fn suppression_threshold(p: &[f32], gamma: f32) -> f64 {
    let n = p.len() as f64;
    let mean = p.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
    let var = p
        .iter()
        .map(|&x| {
            let d = f64::from(x) - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    mean - f64::from(gamma) * libm::sqrt(var)
}

/// Zeroes every probability below the threshold and renormalizes the rest.
/// Returns the number of surviving entries.
pub fn suppress_in_place(p: &mut [f32], gamma: f32) -> usize {
    if p.is_empty() {
        return 0;
    }
    let theta = suppression_threshold(p, gamma);
    let mut kept = 0.0f64;
    let mut survivors = 0;
    for x in p.iter_mut() {
        if f64::from(*x) >= theta {
            kept += f64::from(*x);
            survivors += 1;
        } else {
            *x = 0.0;
        }
    }
    debug_assert!(survivors > 0, "the largest entry is never below the mean");
    for x in p.iter_mut() {
        if *x != 0.0 {
            *x = (f64::from(*x) / kept) as f32;
        }
    }
    survivors
}

/// Weak-attention suppression of one probability row.
pub fn weak_attention_suppress(p: &[f32], gamma: f32) -> Vec<f32> {
    let mut out = p.to_vec();
    suppress_in_place(&mut out, gamma);
    out
}

/// Builds the next memory slot from the summary query's per-head
/// probabilities over the value rows, then appends it to `mem`.
///
/// The slot is the concatenation of the per-head weighted value sums passed
/// through the output projection, i.e. the attention output of the summary
/// row.
pub fn update_memory(
    mem: &mut MemoryBank,
    summary_probs: &[&[f32]],
    v: &Matrix,
    w: &AttentionWeights,
) -> Result<Vec<f32>> {
    if summary_probs.len() != w.heads {
        return Err(Error::Shape {
            op: "update_memory",
            left: (summary_probs.len(), 0),
            right: (w.heads, 0),
        });
    }
    let head_dim = w.head_dim();
    let mut context = vec![0.0f32; w.dim()];
    for (h, probs) in summary_probs.iter().enumerate() {
        if probs.len() != v.rows() {
            return Err(Error::Shape {
                op: "update_memory",
                left: (1, probs.len()),
                right: v.shape(),
            });
        }
        let cols = h * head_dim..(h + 1) * head_dim;
        weighted_sum_into(probs, v, cols.clone(), &mut context[cols]);
    }
    let slot = linear(
        &Matrix::row_vector(&context),
        &w.wout,
        Some(w.bout.as_slice()),
    )?
    .into_vec();
    mem.push(slot.clone());
    Ok(slot)
}

/// One attention layer over a segment: returns the output rows (same layout
/// as the input) and advances `mem` by one slot.
pub fn augmem_layer_forward(
    seg: &SegmentInput,
    mem: &mut MemoryBank,
    w: &AttentionWeights,
    sup: SuppressionConfig,
) -> Result<SegmentInput> {
    let n = seg.total_len();
    let q = build_query(seg, w)?;
    let (k, v) = build_key_value(seg, mem, w)?;
    let attn = attend(
        &q,
        &k,
        &v,
        &query_kinds(n),
        &key_kinds(mem.len(), n),
        w,
        sup,
    )?;
    let summary_row: Vec<&[f32]> = attn.probs.iter().map(|p| p.row(n)).collect();
    update_memory(mem, &summary_row, &v, w)?;
    seg.with_rows(attn.output.slice_rows(0..n))
}
