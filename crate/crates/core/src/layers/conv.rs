use rand::Rng;

use super::params::{constant, he_normal, Bound, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

/// `j` convolution kernels of width `k` over a `d`-wide sentence matrix.
/// Stored as one `(k·d) × j` matrix so a window row times the matrix yields
/// all kernel responses at once.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvChannel {
    pub width: usize,
    pub kernels: usize,
    pub kernel: ParamId,
    pub bias: ParamId,
}

impl ConvChannel {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        dim: usize,
        kernels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if width == 0 || kernels == 0 || dim == 0 {
            return Err(Error::Config(format!(
                "conv channel `{name}` needs positive width, kernel count and input dim"
            )));
        }
        let kernel = store.add(format!("{name}.kernel"), he_normal(width * dim, kernels, rng));
        let bias = store.add(format!("{name}.bias"), constant(1, kernels, 0.0));
        Ok(Self {
            width,
            kernels,
            kernel,
            bias,
        })
    }

    /// Number of windows over a sequence of `len` tokens.
    pub fn output_len(&self, len: usize) -> Option<usize> {
        (len >= self.width).then(|| len - self.width + 1)
    }
}

/// `relu(w_i · c + b)` for every window `w_i` of `width` consecutive rows.
/// Output is `(s − k + 1) × j`.
pub fn conv_channel(g: &mut Graph<'_>, x: Var, ch: &ConvChannel, p: &Bound) -> Result<Var> {
    let windows = g.unfold(x, ch.width)?;
    let pre = g.matmul(windows, p[ch.kernel])?;
    let pre = g.add_bias(pre, p[ch.bias])?;
    Ok(g.relu(pre))
}

/// 1 for every window that touches no masked position, else 0.
pub fn window_mask(masked: &[bool], width: usize) -> Vec<bool> {
    if masked.len() < width {
        return Vec::new();
    }
    (0..=masked.len() - width)
        .map(|i| !masked[i..i + width].iter().any(|&m| m))
        .collect()
}

/// Convolution whose windows touching any masked (padding) position output
/// exactly zero. `masked[i]` is true for padding.
pub fn masked_conv(
    g: &mut Graph<'_>,
    x: Var,
    masked: &[bool],
    ch: &ConvChannel,
    p: &Bound,
) -> Result<Var> {
    let s = g.value(x).rows();
    if masked.len() != s {
        return Err(Error::MaskLength {
            mask: masked.len(),
            len: s,
        });
    }
    let out = conv_channel(g, x, ch, p)?;
    let keep = window_mask(masked, ch.width);
    if keep.iter().all(|&k| k) {
        return Ok(out);
    }
    let factors = keep
        .iter()
        .flat_map(|&k| std::iter::repeat_n(if k { 1.0 } else { 0.0 }, ch.kernels))
        .collect();
    g.mul_const(out, factors)
}
