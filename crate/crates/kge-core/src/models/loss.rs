//! Training losses over positive/negative score batches.
//!
//! Both losses normalize so that the learning rate decouples from batch
//! size and negative count: positives are averaged over their count and
//! negatives (or positive-negative pairs) over theirs, then summed.

use crate::error::{Error, Result};

/// log(1 + exp(x)) without overflow.
#[inline]
pub fn softplus(x: f32) -> f32 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid, stable on both tails.
#[inline]
pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic loss: mean_pos log(1+exp(-f)) + mean_neg log(1+exp(f)).
///
/// Returns the loss and the gradients w.r.t. each positive and negative
/// score.
pub fn logistic_loss(pos: &[f32], neg: &[f32]) -> Result<(f32, Vec<f32>, Vec<f32>)> {
    if pos.iter().chain(neg).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("logistic_loss scores"));
    }
    let np = pos.len().max(1) as f32;
    let nn = neg.len().max(1) as f32;
    let mut loss = 0.0f64;
    let mut dpos = Vec::with_capacity(pos.len());
    for &f in pos {
        loss += (softplus(-f) / np) as f64;
        dpos.push(-sigmoid(-f) / np);
    }
    let mut dneg = Vec::with_capacity(neg.len());
    for &f in neg {
        loss += (softplus(f) / nn) as f64;
        dneg.push(sigmoid(f) / nn);
    }
    Ok((loss as f32, dpos, dneg))
}

/// Pairwise ranking loss: mean over pairs of max(0, γ - f_pos + f_neg),
/// each positive paired with its own k negatives (`neg` is positive-major,
/// length pos.len()·k). Subgradient is 0 at the kink.
pub fn ranking_loss(
    pos: &[f32],
    neg: &[f32],
    gamma: f32,
) -> Result<(f32, Vec<f32>, Vec<f32>)> {
    if pos.is_empty() {
        return Err(Error::ShapeMismatch("ranking_loss: no positives".into()));
    }
    if neg.len() % pos.len() != 0 {
        return Err(Error::ShapeMismatch(format!(
            "ranking_loss: {} negatives not divisible by {} positives",
            neg.len(),
            pos.len()
        )));
    }
    if pos.iter().chain(neg).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("ranking_loss scores"));
    }
    let k = neg.len() / pos.len();
    let n_pairs = neg.len().max(1) as f32;
    let mut loss = 0.0f64;
    let mut dpos = vec![0.0f32; pos.len()];
    let mut dneg = vec![0.0f32; neg.len()];
    for (i, &fp) in pos.iter().enumerate() {
        for j in 0..k {
            let fn_ = neg[i * k + j];
            let h = gamma - fp + fn_;
            if h > 0.0 {
                loss += (h / n_pairs) as f64;
                dpos[i] -= 1.0 / n_pairs;
                dneg[i * k + j] += 1.0 / n_pairs;
            }
        }
    }
    Ok((loss as f32, dpos, dneg))
}
