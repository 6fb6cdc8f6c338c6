//! Clipped surrogate, combined loss and gradient clipping.

/// `min(ρA, clip(ρ, 1-ε, 1+ε)A)` with `ρ = exp(new - old)`.
pub fn clipped_surrogate(log_prob_new: f64, log_prob_old: f64, advantage: f64, clip_range: f64) -> f64 {
    let ratio = (log_prob_new - log_prob_old).exp();
    let clipped = ratio.clamp(1.0 - clip_range, 1.0 + clip_range);
    (ratio * advantage).min(clipped * advantage)
}

/// Derivative of [`clipped_surrogate`] with respect to `log_prob_new`:
/// `ρA` where the unclipped term is the minimum, zero where the clipped
/// term is.
pub fn clipped_surrogate_grad(log_prob_new: f64, log_prob_old: f64, advantage: f64, clip_range: f64) -> f64 {
    let ratio = (log_prob_new - log_prob_old).exp();
    let clipped = ratio.clamp(1.0 - clip_range, 1.0 + clip_range);
    if ratio * advantage <= clipped * advantage {
        ratio * advantage
    } else {
        0.0
    }
}

/// Loss minimized by the update:
/// `-mean(L) + vf_coef · MSE(V, R) - entropy_coef · entropy`.
pub fn total_loss(
    surrogates: &[f64],
    value_pred: &[f64],
    returns: &[f64],
    entropy: f64,
    vf_coef: f64,
    entropy_coef: f64,
) -> f64 {
    let n = surrogates.len().max(1) as f64;
    let surrogate = surrogates.iter().sum::<f64>() / n;
    let mse = value_pred
        .iter()
        .zip(returns)
        .map(|(v, r)| (v - r).powi(2))
        .sum::<f64>()
        / value_pred.len().max(1) as f64;
    -surrogate + vf_coef * mse - entropy_coef * entropy
}

pub fn global_norm(grads: &[&[f64]]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients together so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

/// Centers `adv` and scales it to unit sample standard deviation. A
/// constant batch is only centered.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len();
    if n == 0 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n as f64;
    adv.iter_mut().for_each(|a| *a -= mean);
    if n < 2 {
        return;
    }
    let std = (adv.iter().map(|a| a * a).sum::<f64>() / (n - 1) as f64).sqrt();
    if std > 0.0 {
        adv.iter_mut().for_each(|a| *a /= std);
    }
}

/// Fraction of successes in a window of finished episodes.
pub fn success_rate(window: &[bool]) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    window.iter().filter(|&&s| s).count() as f64 / window.len() as f64
}
