//! Central finite-difference verification of the analytic gradients.

use super::network::Model;
use crate::modality::Batch;
use crate::par::Exec;

/// Per-tensor comparison of analytic and numerical gradients.
#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    /// `‖analytic − numeric‖ / max(‖analytic‖ + ‖numeric‖, 1e-12)`
    pub relative_error: f64,
    pub max_abs_diff: f64,
}

/// Compare the gradient of the dropout-free mean loss against central
/// differences with step `h` for every entry of every tensor.
pub fn check_gradients(model: &Model, batch: &Batch, h: f64, exec: Exec) -> Vec<TensorCheck> {
    let (_, analytic) = model
        .loss_and_grad(batch, None, exec)
        .expect("finite gradient");
    let names: Vec<(String, usize)> = model
        .params
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.len()))
        .collect();
    let grads: Vec<Vec<f64>> = analytic.named().into_iter().map(|(_, t)| t.data.clone()).collect();
    names
        .iter()
        .enumerate()
        .map(|(ti, (name, len))| {
            let numeric = exec.map_range(*len, |j| {
                let mut m = model.clone();
                let orig = m.params.tensors_mut()[ti].data[j];
                m.params.tensors_mut()[ti].data[j] = orig + h;
                let plus = m.loss(batch, Exec::Sequential);
                m.params.tensors_mut()[ti].data[j] = orig - h;
                let minus = m.loss(batch, Exec::Sequential);
                (plus - minus) / (2.0 * h)
            });
            let a = &grads[ti];
            let diff: f64 = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nn: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
            let max_abs_diff = a
                .iter()
                .zip(&numeric)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            TensorCheck {
                name: name.clone(),
                relative_error: diff / (na + nn).max(1e-12),
                max_abs_diff,
            }
        })
        .collect()
}
