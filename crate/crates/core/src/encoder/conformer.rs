//! Conformer block: half-step feed-forward, augmented-memory attention,
//! convolution module, half-step feed-forward, post layer norm.

use crate::attention::{
    augmem_layer_forward, AttentionWeights, MemoryBank, SegmentInput, SuppressionConfig,
};
use crate::error::{Error, Result};
use crate::params::{impl_params, Init};
use crate::tensor::{depthwise_conv1d_padded, glu, layer_norm, linear, swish, Matrix};

pub const NORM_EPS: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Norm {
    pub gain: Matrix,
    pub offset: Matrix,
}

impl_params!(Norm { gain, offset });

impl Norm {
    pub fn init(dim: usize, init: &mut Init<'_>) -> Self {
        Self {
            gain: init.norm_gain(dim),
            offset: init.norm_offset(dim),
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        layer_norm(x, self.gain.as_slice(), self.offset.as_slice(), NORM_EPS)
    }
}

/// Pre-norm feed-forward module: `linear(d→e·d) → swish → linear(e·d→d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub norm: Norm,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl_params!(FeedForward {
    norm,
    w1,
    b1,
    w2,
    b2
});

impl FeedForward {
    pub fn init(dim: usize, expansion: usize, init: &mut Init<'_>) -> Self {
        let hidden = dim * expansion;
        Self {
            norm: Norm::init(dim, init),
            w1: init.weight(hidden, dim),
            b1: init.bias(hidden),
            w2: init.weight(dim, hidden),
            b2: init.bias(dim),
        }
    }

    /// The residual branch alone.
    pub fn branch(&self, x: &Matrix) -> Result<Matrix> {
        let h = linear(&self.norm.apply(x)?, &self.w1, Some(self.b1.as_slice()))?;
        linear(&swish(&h), &self.w2, Some(self.b2.as_slice()))
    }

    /// `x + ½ · branch(x)`.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        x.add_scaled(&self.branch(x)?, 0.5)
    }
}

/// Convolution module. The depthwise convolution is padded so the output
/// keeps the input length; with an even kernel the extra tap looks ahead.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvModule {
    pub norm: Norm,
    pub pointwise1: Matrix,
    pub pointwise1_bias: Matrix,
    /// channels × kernel width
    pub depthwise: Matrix,
    pub depthwise_bias: Matrix,
    pub inner_norm: Norm,
    pub pointwise2: Matrix,
    pub pointwise2_bias: Matrix,
}

impl_params!(ConvModule {
    norm,
    pointwise1,
    pointwise1_bias,
    depthwise,
    depthwise_bias,
    inner_norm,
    pointwise2,
    pointwise2_bias,
});

impl ConvModule {
    pub fn init(dim: usize, kernel: usize, init: &mut Init<'_>) -> Self {
        Self {
            norm: Norm::init(dim, init),
            pointwise1: init.weight(2 * dim, dim),
            pointwise1_bias: init.bias(2 * dim),
            depthwise: init.weight(dim, kernel),
            depthwise_bias: init.bias(dim),
            inner_norm: Norm::init(dim, init),
            pointwise2: init.weight(dim, dim),
            pointwise2_bias: init.bias(dim),
        }
    }

    pub fn kernel_width(&self) -> usize {
        self.depthwise.cols()
    }

    pub fn branch(&self, x: &Matrix) -> Result<Matrix> {
        let h = linear(
            &self.norm.apply(x)?,
            &self.pointwise1,
            Some(self.pointwise1_bias.as_slice()),
        )?;
        let h = glu(&h)?;
        let left_pad = (self.kernel_width() - 1) / 2;
        let mut h = depthwise_conv1d_padded(&h, &self.depthwise, left_pad)?;
        let bias = self.depthwise_bias.as_slice();
        for r in 0..h.rows() {
            for (v, b) in h.row_mut(r).iter_mut().zip(bias) {
                *v += b;
            }
        }
        let h = swish(&self.inner_norm.apply(&h)?);
        linear(&h, &self.pointwise2, Some(self.pointwise2_bias.as_slice()))
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        x.add(&self.branch(x)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformerBlock {
    pub ffn1: FeedForward,
    pub attn_norm: Norm,
    pub attn: AttentionWeights,
    /// Absent in the transformer variant.
    pub conv: Option<ConvModule>,
    pub ffn2: FeedForward,
    pub final_norm: Norm,
}

impl_params!(ConformerBlock {
    ffn1,
    attn_norm,
    attn,
    conv,
    ffn2,
    final_norm,
});

impl ConformerBlock {
    pub fn init(
        dim: usize,
        heads: usize,
        expansion: usize,
        conv_kernel: Option<usize>,
        init: &mut Init<'_>,
    ) -> Result<Self> {
        Ok(Self {
            ffn1: FeedForward::init(dim, expansion, init),
            attn_norm: Norm::init(dim, init),
            attn: AttentionWeights::init(dim, heads, init)?,
            conv: conv_kernel.map(|k| ConvModule::init(dim, k, init)),
            ffn2: FeedForward::init(dim, expansion, init),
            final_norm: Norm::init(dim, init),
        })
    }
}

/// One block over one segment. The convolution only sees this segment's
/// rows; memory slots take part in attention only.
pub fn conformer_block(
    seg: &SegmentInput,
    mem: &mut MemoryBank,
    block: &ConformerBlock,
    sup: SuppressionConfig,
) -> Result<SegmentInput> {
    if seg.dim() != block.attn.dim() {
        return Err(Error::Shape {
            op: "conformer_block",
            left: seg.stacked().shape(),
            right: block.attn.wq.shape(),
        });
    }
    let x = block.ffn1.forward(seg.stacked())?;
    let normed = seg.with_rows(block.attn_norm.apply(&x)?)?;
    let attended = augmem_layer_forward(&normed, mem, &block.attn, sup)?;
    let x = x.add(attended.stacked())?;
    let x = match &block.conv {
        Some(conv) => conv.forward(&x)?,
        None => x,
    };
    let x = block.ffn2.forward(&x)?;
    seg.with_rows(block.final_norm.apply(&x)?)
}
