//! Row-wise nonlinearities with their backward passes.

use rand::Rng;

use super::tensor::Mat;

pub const LN_EPS: f64 = 1e-5;

/// Row softmax over the columns where `key_mask` is true. Masked columns get
/// weight 0; a row with no unmasked column is all zeros.
pub fn masked_softmax_rows(scores: &Mat, key_mask: Option<&[bool]>) -> Mat {
    if let Some(m) = key_mask {
        assert_eq!(m.len(), scores.cols, "key mask width");
    }
    let keep = |j: usize| key_mask.is_none_or(|m| m[j]);
    let mut out = Mat::zeros(scores.rows, scores.cols);
    for r in 0..scores.rows {
        let s = scores.row(r);
        let max = s
            .iter()
            .enumerate()
            .filter(|(j, _)| keep(*j))
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let o = out.row_mut(r);
        let mut sum = 0.0;
        for (j, (ov, &sv)) in o.iter_mut().zip(s).enumerate() {
            if keep(j) {
                *ov = (sv - max).exp();
                sum += *ov;
            }
        }
        o.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Gradient w.r.t. the scores given the softmax output `p` and `dp`.
pub fn softmax_rows_backward(p: &Mat, dp: &Mat) -> Mat {
    let mut ds = Mat::zeros(p.rows, p.cols);
    for r in 0..p.rows {
        let pr = p.row(r);
        let dr = dp.row(r);
        let inner: f64 = pr.iter().zip(dr).map(|(a, b)| a * b).sum();
        for (o, (pv, dv)) in ds.row_mut(r).iter_mut().zip(pr.iter().zip(dr)) {
            *o = pv * (dv - inner);
        }
    }
    ds
}

#[derive(Debug, Clone)]
pub struct LnCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

/// Row-wise layer norm with gain and bias.
pub fn layer_norm(x: &Mat, gain: &[f64], bias: &[f64]) -> (Mat, LnCache) {
    let n = x.cols as f64;
    let mut xhat = Mat::zeros(x.rows, x.cols);
    let mut y = Mat::zeros(x.rows, x.cols);
    let mut inv_std = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(is);
        for (c, &v) in row.iter().enumerate() {
            let h = (v - mean) * is;
            xhat[(r, c)] = h;
            y[(r, c)] = h * gain[c] + bias[c];
        }
    }
    (y, LnCache { xhat, inv_std })
}

/// Returns `dx`; accumulates into `dgain` and `dbias`.
pub fn layer_norm_backward(
    dy: &Mat,
    cache: &LnCache,
    gain: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Mat {
    let n = dy.cols as f64;
    let mut dx = Mat::zeros(dy.rows, dy.cols);
    let mut dxhat = vec![0.0; dy.cols];
    for r in 0..dy.rows {
        let xh = cache.xhat.row(r);
        let d = dy.row(r);
        for c in 0..dy.cols {
            dgain[c] += d[c] * xh[c];
            dbias[c] += d[c];
            dxhat[c] = d[c] * gain[c];
        }
        let mean_d = dxhat.iter().sum::<f64>() / n;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
        let is = cache.inv_std[r];
        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = is * (dxhat[c] - mean_d - xh[c] * mean_dx);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Inverted-dropout multipliers (`0` or `1/(1-p)`), or `None` when inactive.
pub fn dropout_mask<R: Rng>(rng: &mut R, len: usize, p: f64) -> Option<Vec<f64>> {
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect(),
    )
}

pub fn apply_mask(x: &mut Mat, mask: Option<&Vec<f64>>) {
    if let Some(m) = mask {
        for (v, k) in x.data.iter_mut().zip(m) {
            *v *= k;
        }
    }
}

/// Softmax probabilities of one logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Cross-entropy of one row and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let p = softmax(logits);
    let loss = -p[target].max(f64::MIN_POSITIVE).ln();
    let mut g = p;
    g[target] -= 1.0;
    (loss, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_softmax_rows_sum_to_one() {
        let s = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 5.0]);
        let p = masked_softmax_rows(&s, Some(&[true, false, true]));
        for r in 0..2 {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(p[(r, 1)], 0.0);
        }
        let none = masked_softmax_rows(&s, Some(&[false, false, false]));
        assert!(none.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_is_scale_invariant() {
        let x = Mat::from_vec(1, 4, vec![1.0, -2.0, 3.5, 0.25]);
        let mut x2 = x.clone();
        x2.scale(2.0);
        let g = [1.0; 4];
        let b = [0.0; 4];
        let (y1, _) = layer_norm(&x, &g, &b);
        let (y2, _) = layer_norm(&x2, &g, &b);
        for (a, c) in y1.data.iter().zip(&y2.data) {
            assert!((a - c).abs() < 1e-5);
        }
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn uniform_two_class_loss_is_ln2() {
        let (l, g) = cross_entropy(&[0.3, 0.3], 1);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g[0] - 0.5).abs() < 1e-12 && (g[1] + 0.5).abs() < 1e-12);
    }
}
