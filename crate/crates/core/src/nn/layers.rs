//! Dense layers, MLPs, layer norm, multi-head self-attention and the
//! set encoder built from them.

use crate::error::{Error, Result};
use crate::nn::params::{Init, ParamId, ParameterStore};
use crate::nn::tape::{Tape, Var};

const LN_EPS: f64 = 1e-5;

/// y = x·W + b.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(store: &mut ParameterStore, name: &str, inputs: usize, outputs: usize) -> Self {
        Self::with_init(store, name, inputs, outputs, Init::Glorot)
    }

    /// A layer whose weights start at zero (used for output heads).
    pub fn zeroed(store: &mut ParameterStore, name: &str, inputs: usize, outputs: usize) -> Self {
        Self::with_init(store, name, inputs, outputs, Init::Constant(0.0))
    }

    pub fn with_init(
        store: &mut ParameterStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        init: Init,
    ) -> Self {
        Linear {
            weight: store.add(format!("{name}.weight"), inputs, outputs, init),
            bias: store.add(format!("{name}.bias"), 1, outputs, Init::Constant(0.0)),
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let xw = tape.matmul(x, w)?;
        tape.add_row(xw, b)
    }
}

/// Stack of linear layers with ReLU between them (none after the last).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `widths` lists input, hidden..., output sizes. With `zero_last`, the
    /// final layer starts at zero.
    pub fn new(store: &mut ParameterStore, name: &str, widths: &[usize], zero_last: bool) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let lname = format!("{name}.{i}");
                if zero_last && i == n - 1 {
                    Linear::zeroed(store, &lname, widths[i], widths[i + 1])
                } else {
                    Linear::new(store, &lname, widths[i], widths[i + 1])
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, store, h)?;
            if i + 1 < self.layers.len() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

/// Layer normalization with learned gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParameterStore, name: &str, width: usize) -> Self {
        LayerNorm {
            gain: store.add(format!("{name}.gain"), 1, width, Init::Constant(1.0)),
            bias: store.add(format!("{name}.bias"), 1, width, Init::Constant(0.0)),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gain);
        let b = tape.param(store, self.bias);
        let n = tape.layer_norm(x, LN_EPS);
        let s = tape.mul_row(n, g)?;
        tape.add_row(s, b)
    }
}

/// Multi-head full self-attention without positional information, so
/// permuting input rows permutes output rows.
///
/// The key projection has no bias: it would add the same amount to every
/// score in a softmax row and so could never change the output.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: ParamId,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub width: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParameterStore, name: &str, width: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !width.is_multiple_of(heads) {
            return Err(Error::InvalidArgument(format!(
                "model width {width} is not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            query: Linear::new(store, &format!("{name}.query"), width, width),
            key: store.add(format!("{name}.key.weight"), width, width, Init::Glorot),
            value: Linear::new(store, &format!("{name}.value"), width, width),
            output: Linear::new(store, &format!("{name}.output"), width, width),
            heads,
            width,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var> {
        let (n, width) = tape.shape(x);
        if width != self.width {
            return Err(Error::Shape(format!(
                "attention expects width {}, got {width}",
                self.width
            )));
        }
        if n == 0 {
            return Ok(x);
        }
        let q = self.query.forward(tape, store, x)?;
        let key = tape.param(store, self.key);
        let k = tape.matmul(x, key)?;
        let v = self.value.forward(tape, store, x)?;
        let dh = width / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let qh = tape.slice_cols(q, lo, hi)?;
            let kh = tape.slice_cols(k, lo, hi)?;
            let vh = tape.slice_cols(v, lo, hi)?;
            let scores = tape.matmul_t(qh, kh)?;
            let scores = tape.scale(scores, scale);
            let attn = tape.softmax_rows(scores);
            outs.push(tape.matmul(attn, vh)?);
        }
        let cat = tape.concat_cols(&outs)?;
        self.output.forward(tape, store, cat)
    }
}

/// Pre-norm transformer encoder block.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub norm1: LayerNorm,
    pub attention: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub feed_forward: Mlp,
}

impl EncoderBlock {
    pub fn new(store: &mut ParameterStore, name: &str, width: usize, heads: usize) -> Result<Self> {
        Ok(EncoderBlock {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), width),
            attention: MultiHeadAttention::new(store, &format!("{name}.attn"), width, heads)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), width),
            feed_forward: Mlp::new(
                store,
                &format!("{name}.ff"),
                &[width, 2 * width, width],
                false,
            ),
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var> {
        let a = self.norm1.forward(tape, store, x)?;
        let a = self.attention.forward(tape, store, a)?;
        let h = tape.add(x, a)?;
        let f = self.norm2.forward(tape, store, h)?;
        let f = self.feed_forward.forward(tape, store, f)?;
        tape.add(h, f)
    }
}

/// Stack of encoder blocks over a set of tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct SetEncoder {
    pub blocks: Vec<EncoderBlock>,
    pub width: usize,
}

impl SetEncoder {
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        width: usize,
        heads: usize,
        depth: usize,
    ) -> Result<Self> {
        let blocks = (0..depth)
            .map(|i| EncoderBlock::new(store, &format!("{name}.{i}"), width, heads))
            .collect::<Result<_>>()?;
        Ok(SetEncoder { blocks, width })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var> {
        let mut h = x;
        for b in &self.blocks {
            h = b.forward(tape, store, h)?;
        }
        Ok(h)
    }
}

/// Transformer-style sinusoidal code of a non-negative integer:
/// entry 2i is sin(k / 10000^(2i/width)), entry 2i+1 the matching cosine.
pub fn sinusoidal_embed(k: usize, width: usize) -> Result<Vec<f64>> {
    if !width.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "sinusoidal embedding width must be even, got {width}"
        )));
    }
    let mut out = vec![0.0; width];
    for i in 0..width / 2 {
        let freq = 10000f64.powf(-((2 * i) as f64) / width as f64);
        let arg = k as f64 * freq;
        out[2 * i] = arg.sin();
        out[2 * i + 1] = arg.cos();
    }
    Ok(out)
}
