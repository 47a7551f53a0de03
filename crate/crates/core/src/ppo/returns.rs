use crate::env::Trajectory;
use crate::error::{Error, Result};

/// Discounted returns (bootstrapped on truncation) and GAE(λ) advantages.
pub fn compute_returns_advantages(traj: &Trajectory, gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let tail = if traj.terminated { 0.0 } else { traj.bootstrap_value };
    let n = traj.len();
    let mut returns = vec![0.0; n];
    let mut adv = vec![0.0; n];
    let mut ret = tail;
    let mut gae = 0.0;
    let mut next_value = tail;
    for t in (0..n).rev() {
        let s = &traj.steps[t];
        ret = s.reward + gamma * ret;
        returns[t] = ret;
        let delta = s.reward + gamma * next_value - s.value;
        gae = delta + gamma * lambda * gae;
        adv[t] = gae;
        next_value = s.value;
    }
    Ok((returns, adv))
}

/// Shifts and scales to zero mean and unit (population) std.
pub fn normalize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    values.iter_mut().for_each(|v| *v = (*v - mean) / std);
}
