//! Minimal neural-network core: dense and strided valid convolutions,
//! ReLU/sigmoid activations, BCE and softmax helpers, Adam, checkpoints.

mod adam;
pub mod checkpoint;
mod loss;
mod network;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use loss::{bce_loss, entropy, log_softmax, sigmoid, softmax, BCE_EPS};
pub use network::{Activation, Architecture, Cache, LayerParams, LayerSpec, ParamSet};
pub use tensor::Tensor;

/// Central-difference gradient of `loss` with respect to every parameter.
/// Test-support oracle; independent of [`ParamSet::backward`].
pub fn finite_difference_gradient(params: &ParamSet, step: f64, mut loss: impl FnMut(&ParamSet) -> f64) -> Vec<f64> {
    let base = params.flat();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut theta = base.clone();
    for k in 0..base.len() {
        theta[k] = base[k] + step;
        probe.set_flat(&theta).expect("same length");
        let up = loss(&probe);
        theta[k] = base[k] - step;
        probe.set_flat(&theta).expect("same length");
        let down = loss(&probe);
        theta[k] = base[k];
        out.push((up - down) / (2.0 * step));
    }
    out
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over paired gradient entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
