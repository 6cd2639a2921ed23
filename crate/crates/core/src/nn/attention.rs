//! Multi-head self-attention, forward only (teacher encoder component).

use crate::error::{Error, Result};
use crate::mat::{dense_forward_into, Real};

#[derive(Debug, Clone, Copy)]
pub struct AttentionDims {
    pub model: usize,
    pub heads: usize,
}

impl AttentionDims {
    pub fn head_dim(&self) -> Result<usize> {
        if self.heads == 0 || self.model % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "model dim {} not divisible by {} heads",
                self.model, self.heads
            )));
        }
        Ok(self.model / self.heads)
    }
}

/// Scratch buffers reused across calls.
#[derive(Debug, Default, Clone)]
pub struct AttentionScratch<F> {
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    mixed: Vec<F>,
    scores: Vec<F>,
}

/// y = out_proj(concat_heads(softmax(Q K^T / sqrt(dh)) V)); no positional
/// encoding, so permuting input rows permutes output rows identically.
///
/// Parameter slices: wq/wk/wv/wo are [d, d] row-major, biases [d].
#[allow(clippy::too_many_arguments)]
pub fn multi_head_attention_forward<F: Real>(
    tokens: &[F],
    n: usize,
    dims: &AttentionDims,
    wq: &[F],
    bq: &[F],
    wk: &[F],
    bk: &[F],
    wv: &[F],
    bv: &[F],
    wo: &[F],
    bo: &[F],
    scratch: &mut AttentionScratch<F>,
    y: &mut [F],
) -> Result<()> {
    let d = dims.model;
    let dh = dims.head_dim()?;
    debug_assert_eq!(tokens.len(), n * d);
    debug_assert_eq!(y.len(), n * d);
    scratch.q.clear();
    scratch.q.resize(n * d, F::zero());
    scratch.k.clear();
    scratch.k.resize(n * d, F::zero());
    scratch.v.clear();
    scratch.v.resize(n * d, F::zero());
    scratch.mixed.clear();
    scratch.mixed.resize(n * d, F::zero());
    scratch.scores.clear();
    scratch.scores.resize(n * n, F::zero());

    dense_forward_into(tokens, n, d, wq, bq, d, &mut scratch.q);
    dense_forward_into(tokens, n, d, wk, bk, d, &mut scratch.k);
    dense_forward_into(tokens, n, d, wv, bv, d, &mut scratch.v);

    let scale = F::one() / F::from_f64((dh as f64).sqrt());
    for head in 0..dims.heads {
        let off = head * dh;
        // scores[i][j] = q_i . k_j * scale over this head's slice
        for i in 0..n {
            let qi = &scratch.q[i * d + off..i * d + off + dh];
            for j in 0..n {
                let kj = &scratch.k[j * d + off..j * d + off + dh];
                let mut s = F::zero();
                for t in 0..dh {
                    s = s + qi[t] * kj[t];
                }
                scratch.scores[i * n + j] = s * scale;
            }
        }
        // softmax rows, then mix values
        for i in 0..n {
            let row = &mut scratch.scores[i * n..(i + 1) * n];
            let mut mx = F::neg_infinity();
            for v in row.iter() {
                if *v > mx {
                    mx = *v;
                }
            }
            let mut sum = F::zero();
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                sum = sum + *v;
            }
            let inv = F::one() / sum;
            for v in row.iter_mut() {
                *v = *v * inv;
            }
            let out = &mut scratch.mixed[i * d + off..i * d + off + dh];
            out.iter_mut().for_each(|v| *v = F::zero());
            for j in 0..n {
                let w = scratch.scores[i * n + j];
                let vj = &scratch.v[j * d + off..j * d + off + dh];
                for t in 0..dh {
                    out[t] = out[t] + w * vj[t];
                }
            }
        }
    }
    dense_forward_into(&scratch.mixed, n, d, wo, bo, d, y);
    Ok(())
}
