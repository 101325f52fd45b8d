//! Building blocks of the collaborative transformer, each with a cached
//! forward pass and an exact backward pass. Parameter structs double as
//! gradient accumulators.

use serde::{Deserialize, Serialize};

use super::ops::{
    apply_mask, gelu, gelu_grad, layer_norm, layer_norm_backward, masked_softmax_rows,
    softmax_rows_backward, LnCache,
};
use super::tensor::{acc_matmul, acc_matmul_tn, matmul, matmul_nt, matmul_tn, Mat};

/// `softmax(q kᵀ / sqrt(d)) c` restricted to unmasked keys. Returns the
/// output and the attention weights.
pub fn scaled_attention(q: &Mat, k: &Mat, c: &Mat, key_mask: Option<&[bool]>) -> (Mat, Mat) {
    let scale = 1.0 / (q.cols as f64).sqrt();
    let mut scores = matmul_nt(q, k);
    scores.scale(scale);
    let p = masked_softmax_rows(&scores, key_mask);
    (matmul(&p, c), p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNormParams {
    pub gain: Mat,
    pub bias: Mat,
}

impl LayerNormParams {
    pub fn new(n: usize) -> Self {
        let mut gain = Mat::zeros(1, n);
        gain.fill(1.0);
        LayerNormParams {
            gain,
            bias: Mat::zeros(1, n),
        }
    }

    pub fn forward(&self, x: &Mat) -> (Mat, LnCache) {
        layer_norm(x, self.gain.row(0), self.bias.row(0))
    }

    pub fn backward(&self, dy: &Mat, cache: &LnCache, g: &mut Self) -> Mat {
        layer_norm_backward(
            dy,
            cache,
            self.gain.row(0),
            g.gain.row_mut(0),
            g.bias.row_mut(0),
        )
    }
}

/// Projections of multi-head attention: queries, keys, contexts, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub wq: Mat,
    pub wk: Mat,
    pub wc: Mat,
    pub wo: Mat,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    xq: Mat,
    xkv: Mat,
    q: Mat,
    k: Mat,
    c: Mat,
    /// Per-head attention weights, `n_q × n_k`.
    pub probs: Vec<Mat>,
    concat: Mat,
}

impl AttentionParams {
    /// Queries from `xq`, keys and contexts from `xkv`.
    pub fn forward(&self, xq: &Mat, xkv: &Mat, key_mask: Option<&[bool]>, heads: usize) -> (Mat, AttentionCache) {
        let q = matmul(xq, &self.wq);
        let k = matmul(xkv, &self.wk);
        let c = matmul(xkv, &self.wc);
        let dh = q.cols / heads;
        let mut concat = Mat::zeros(xq.rows, q.cols);
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (o, p) = scaled_attention(
                &q.cols_slice(h * dh, dh),
                &k.cols_slice(h * dh, dh),
                &c.cols_slice(h * dh, dh),
                key_mask,
            );
            concat.set_cols(h * dh, &o, false);
            probs.push(p);
        }
        let out = matmul(&concat, &self.wo);
        let cache = AttentionCache {
            xq: xq.clone(),
            xkv: xkv.clone(),
            q,
            k,
            c,
            probs,
            concat,
        };
        (out, cache)
    }

    /// Returns `(d xq, d xkv)`.
    pub fn backward(&self, dout: &Mat, cache: &AttentionCache, g: &mut Self) -> (Mat, Mat) {
        acc_matmul_tn(&mut g.wo, &cache.concat, dout);
        let dconcat = matmul_nt(dout, &self.wo);
        let heads = cache.probs.len();
        let dh = cache.q.cols / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Mat::zeros(cache.q.rows, cache.q.cols);
        let mut dk = Mat::zeros(cache.k.rows, cache.k.cols);
        let mut dc = Mat::zeros(cache.c.rows, cache.c.cols);
        for (h, p) in cache.probs.iter().enumerate() {
            let doh = dconcat.cols_slice(h * dh, dh);
            let qh = cache.q.cols_slice(h * dh, dh);
            let kh = cache.k.cols_slice(h * dh, dh);
            let ch = cache.c.cols_slice(h * dh, dh);
            let dp = matmul_nt(&doh, &ch);
            dc.set_cols(h * dh, &matmul_tn(p, &doh), true);
            let mut ds = softmax_rows_backward(p, &dp);
            ds.scale(scale);
            dq.set_cols(h * dh, &matmul(&ds, &kh), true);
            dk.set_cols(h * dh, &matmul_tn(&ds, &qh), true);
        }
        acc_matmul_tn(&mut g.wq, &cache.xq, &dq);
        acc_matmul_tn(&mut g.wk, &cache.xkv, &dk);
        acc_matmul_tn(&mut g.wc, &cache.xkv, &dc);
        let dxq = matmul_nt(&dq, &self.wq);
        let mut dxkv = matmul_nt(&dk, &self.wk);
        dxkv.add_assign(&matmul_nt(&dc, &self.wc));
        (dxq, dxkv)
    }
}

/// Position-wise two-layer MLP with GELU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardParams {
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
}

#[derive(Debug, Clone)]
pub struct FeedForwardCache {
    x: Mat,
    pre: Mat,
    act: Mat,
}

impl FeedForwardParams {
    pub fn forward(&self, x: &Mat) -> (Mat, FeedForwardCache) {
        let mut pre = matmul(x, &self.w1);
        pre.add_row_vector(self.b1.row(0));
        let act = Mat::from_vec(pre.rows, pre.cols, pre.data.iter().map(|&v| gelu(v)).collect());
        let mut out = matmul(&act, &self.w2);
        out.add_row_vector(self.b2.row(0));
        (
            out,
            FeedForwardCache {
                x: x.clone(),
                pre,
                act,
            },
        )
    }

    pub fn backward(&self, dout: &Mat, cache: &FeedForwardCache, g: &mut Self) -> Mat {
        acc_matmul_tn(&mut g.w2, &cache.act, dout);
        dout.acc_column_sums(g.b2.row_mut(0));
        let mut dpre = matmul_nt(dout, &self.w2);
        for (d, &p) in dpre.data.iter_mut().zip(&cache.pre.data) {
            *d *= gelu_grad(p);
        }
        acc_matmul_tn(&mut g.w1, &cache.x, &dpre);
        dpre.acc_column_sums(g.b1.row_mut(0));
        matmul_nt(&dpre, &self.w1)
    }
}

/// Modality adaptation: every node re-weights all nodes through a shared
/// lift into `2k` dimensions and one learned query row per node, then a
/// residual connection and layer norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationParams {
    /// `k × 2k`
    pub high: Mat,
    /// `N × 2k`, one row per node.
    pub low: Mat,
    pub norm: LayerNormParams,
}

#[derive(Debug, Clone)]
pub struct AdaptationCache {
    x: Mat,
    high: Mat,
    /// Node weights, `N × N`.
    pub weights: Mat,
    ln: LnCache,
}

impl AdaptationParams {
    pub fn forward(&self, x: &Mat, mask: Option<&[bool]>) -> (Mat, AdaptationCache) {
        let high = matmul(x, &self.high);
        let scores = matmul_nt(&high, &self.low);
        let weights = masked_softmax_rows(&scores, mask);
        let mut resid = matmul(&weights, x);
        resid.add_assign(x);
        let (out, ln) = self.norm.forward(&resid);
        (
            out,
            AdaptationCache {
                x: x.clone(),
                high,
                weights,
                ln,
            },
        )
    }

    pub fn backward(&self, dout: &Mat, cache: &AdaptationCache, g: &mut Self) -> Mat {
        let dresid = self.norm.backward(dout, &cache.ln, &mut g.norm);
        let mut dx = dresid.clone();
        acc_matmul_tn(&mut dx, &cache.weights, &dresid);
        let dweights = matmul_nt(&dresid, &cache.x);
        let dscores = softmax_rows_backward(&cache.weights, &dweights);
        let dhigh = matmul(&dscores, &self.low);
        acc_matmul_tn(&mut g.low, &dscores, &cache.high);
        acc_matmul_tn(&mut g.high, &cache.x, &dhigh);
        dx.add_assign(&matmul_nt(&dhigh, &self.high));
        dx
    }
}

/// Pools one modality to a single vector (adaptation of size one) and
/// projects it into the shared latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancingParams {
    /// `k × 2k`
    pub high: Mat,
    /// `1 × 2k`
    pub node: Mat,
    /// `k × latent`
    pub proj: Mat,
    pub proj_bias: Mat,
}

#[derive(Debug, Clone)]
pub struct BalancingCache {
    x: Mat,
    high: Option<Mat>,
    /// Pooling weights, `1 × N`.
    pub alpha: Mat,
    pooled: Mat,
}

impl BalancingParams {
    /// With `attend == false` the pooling weights are uniform over
    /// unmasked nodes.
    pub fn forward(&self, x: &Mat, mask: Option<&[bool]>, attend: bool) -> (Mat, BalancingCache) {
        let (alpha, high) = if attend {
            let high = matmul(x, &self.high);
            let scores = matmul_nt(&self.node, &high);
            (masked_softmax_rows(&scores, mask), Some(high))
        } else {
            (masked_softmax_rows(&Mat::zeros(1, x.rows), mask), None)
        };
        let pooled = matmul(&alpha, x);
        let mut out = matmul(&pooled, &self.proj);
        out.add_row_vector(self.proj_bias.row(0));
        (
            out,
            BalancingCache {
                x: x.clone(),
                high,
                alpha,
                pooled,
            },
        )
    }

    pub fn backward(&self, dout: &Mat, cache: &BalancingCache, g: &mut Self) -> Mat {
        acc_matmul_tn(&mut g.proj, &cache.pooled, dout);
        dout.acc_column_sums(g.proj_bias.row_mut(0));
        let dpooled = matmul_nt(dout, &self.proj);
        let mut dx = matmul_tn(&cache.alpha, &dpooled);
        if let Some(high) = &cache.high {
            let dalpha = matmul_nt(&dpooled, &cache.x);
            let dscores = softmax_rows_backward(&cache.alpha, &dalpha);
            let dhigh = matmul_tn(&dscores, &self.node);
            acc_matmul(&mut g.node, &dscores, high);
            acc_matmul_tn(&mut g.high, &cache.x, &dhigh);
            dx.add_assign(&matmul_nt(&dhigh, &self.high));
        }
        dx
    }
}

/// One modality encoder: impressed attention, MLP and adaptation, each
/// followed by a residual connection and layer norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub attn: AttentionParams,
    pub norm1: LayerNormParams,
    pub ffn: FeedForwardParams,
    pub norm2: LayerNormParams,
    pub adapt: AdaptationParams,
}

/// Switches shared by every encoder layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderOptions {
    pub heads: usize,
    pub impressed: bool,
    pub adapt: bool,
}

/// Dropout multipliers for the attention and MLP outputs.
#[derive(Debug, Clone, Default)]
pub struct DropoutMasks {
    pub attn: Option<Vec<f64>>,
    pub ffn: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    pub attn: AttentionCache,
    ln1: LnCache,
    ffn: FeedForwardCache,
    ln2: LnCache,
    pub adapt: Option<AdaptationCache>,
    drop: DropoutMasks,
    impressed: bool,
}

impl EncoderParams {
    pub fn forward(
        &self,
        own: &Mat,
        other: &Mat,
        own_mask: Option<&[bool]>,
        other_mask: Option<&[bool]>,
        opts: EncoderOptions,
        drop: DropoutMasks,
    ) -> (Mat, EncoderCache) {
        let (kv, kv_mask) = if opts.impressed {
            (other, other_mask)
        } else {
            (own, own_mask)
        };
        let (mut a, attn) = self.attn.forward(own, kv, kv_mask, opts.heads);
        apply_mask(&mut a, drop.attn.as_ref());
        a.add_assign(own);
        let (x1, ln1) = self.norm1.forward(&a);
        let (mut f, ffn) = self.ffn.forward(&x1);
        apply_mask(&mut f, drop.ffn.as_ref());
        f.add_assign(&x1);
        let (x2, ln2) = self.norm2.forward(&f);
        let (out, adapt) = if opts.adapt {
            let (o, c) = self.adapt.forward(&x2, own_mask);
            (o, Some(c))
        } else {
            (x2, None)
        };
        (
            out,
            EncoderCache {
                attn,
                ln1,
                ffn,
                ln2,
                adapt,
                drop,
                impressed: opts.impressed,
            },
        )
    }

    /// Returns `(d own, d other)`.
    pub fn backward(&self, dout: &Mat, cache: &EncoderCache, g: &mut Self) -> (Mat, Mat) {
        let dx2 = match &cache.adapt {
            Some(c) => self.adapt.backward(dout, c, &mut g.adapt),
            None => dout.clone(),
        };
        let mut dr2 = self.norm2.backward(&dx2, &cache.ln2, &mut g.norm2);
        let mut dx1 = dr2.clone();
        apply_mask(&mut dr2, cache.drop.ffn.as_ref());
        dx1.add_assign(&self.ffn.backward(&dr2, &cache.ffn, &mut g.ffn));
        let mut dr1 = self.norm1.backward(&dx1, &cache.ln1, &mut g.norm1);
        let mut down = dr1.clone();
        apply_mask(&mut dr1, cache.drop.attn.as_ref());
        let (dq, dkv) = self.attn.backward(&dr1, &cache.attn, &mut g.attn);
        down.add_assign(&dq);
        if cache.impressed {
            (down, dkv)
        } else {
            down.add_assign(&dkv);
            let zeros = Mat::zeros(0, 0);
            (down, zeros)
        }
    }
}
