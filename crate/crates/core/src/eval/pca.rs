use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::model::tensor::{dot, Mat};

pub const POWER_TOLERANCE: f64 = 1e-9;
const MAX_ITERATIONS: usize = 200_000;

#[derive(Debug, Clone, Serialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit principal directions, largest variance first.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    /// `n × components`
    #[serde(skip)]
    pub projection: Mat,
}

/// Sample covariance (denominator `n - 1`) and column means.
pub fn covariance(x: &Mat) -> (Mat, Vec<f64>) {
    let (n, d) = x.shape();
    let mut mean = vec![0.0; d];
    x.acc_column_sums(&mut mean);
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = Mat::zeros(d, d);
    for r in 0..n {
        let c: Vec<f64> = x.row(r).iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..d {
            let ci = c[i];
            if ci == 0.0 {
                continue;
            }
            for (o, cj) in cov.row_mut(i)[i..].iter_mut().zip(&c[i..]) {
                *o += ci * cj;
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov.row_mut(i)[j] = v;
            cov.row_mut(j)[i] = v;
        }
    }
    (cov, mean)
}

fn mat_vec(a: &Mat, v: &[f64]) -> Vec<f64> {
    (0..a.rows).map(|r| dot(a.row(r), v)).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Leading eigenpair of a symmetric positive semi-definite matrix.
fn power_iteration(a: &Mat, seed: u64) -> (f64, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..a.rows).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);
    for _ in 0..MAX_ITERATIONS {
        let mut w = mat_vec(a, &v);
        if normalize(&mut w) == 0.0 {
            return (0.0, v);
        }
        let delta = w.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        v = w;
        if delta < POWER_TOLERANCE {
            break;
        }
    }
    let lambda = dot(&v, &mat_vec(a, &v));
    (lambda, v)
}

/// Top `k` principal components by power iteration with deflation.
/// Returns `None` for fewer than two samples.
pub fn pca(x: &Mat, k: usize) -> Option<Pca> {
    if x.rows < 2 || x.cols == 0 {
        return None;
    }
    let k = k.min(x.cols);
    let (mut cov, mean) = covariance(x);
    let trace: f64 = (0..cov.rows).map(|i| cov[(i, i)]).sum();
    let mut components = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for c in 0..k {
        let (lambda, v) = power_iteration(&cov, c as u64);
        for i in 0..cov.rows {
            for j in 0..cov.cols {
                cov.row_mut(i)[j] -= lambda * v[i] * v[j];
            }
        }
        eigenvalues.push(lambda);
        components.push(v);
    }
    let explained_ratio = eigenvalues
        .iter()
        .map(|l| if trace > 0.0 { l / trace } else { 0.0 })
        .collect();
    let mut projection = Mat::zeros(x.rows, k);
    for r in 0..x.rows {
        let c: Vec<f64> = x.row(r).iter().zip(&mean).map(|(v, m)| v - m).collect();
        for (j, comp) in components.iter().enumerate() {
            projection.row_mut(r)[j] = dot(&c, comp);
        }
    }
    Some(Pca {
        mean,
        components,
        eigenvalues,
        explained_ratio,
        projection,
    })
}
