//! Sampled-softmax next-item loss through the best-matching interest.

use crate::error::{Error, Result};
use crate::gradcore::dense::{dot, log_sum_exp};
use crate::gradcore::DenseMatrix;

/// Index of the interest with the largest dot product to `target`; ties go
/// to the lowest index.
pub fn select_interest(interests: &DenseMatrix, target: &[f64]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for k in 0..interests.rows() {
        let s = dot(interests.row(k), target);
        if s > best_score {
            best = k;
            best_score = s;
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct RecGrad {
    pub selected: usize,
    /// Gradient for the selected interest row only.
    pub d_selected: Vec<f64>,
    pub d_target: Vec<f64>,
    /// `S x d`
    pub d_negatives: DenseMatrix,
}

/// `-log( exp(ẑ·y) / (exp(ẑ·y) + Σ exp(ẑ·y' + shift)) )` where `ẑ` is the
/// interest selected for `y`. `negative_shift` is 0 without logQ correction.
pub fn loss_rec(
    interests: &DenseMatrix,
    target: &[f64],
    negatives: &DenseMatrix,
    negative_shift: f64,
) -> Result<f64> {
    rec_with_grad(interests, target, negatives, negative_shift, None).map(|(l, _)| l)
}

/// Like [`loss_rec`] but with gradients. `selected` overrides the argmax.
pub fn rec_with_grad(
    interests: &DenseMatrix,
    target: &[f64],
    negatives: &DenseMatrix,
    negative_shift: f64,
    selected: Option<usize>,
) -> Result<(f64, RecGrad)> {
    if negatives.rows() == 0 {
        return Err(Error::Invalid("sampled softmax needs at least one negative".into()));
    }
    let d = interests.cols();
    if target.len() != d || negatives.cols() != d {
        return Err(Error::shape(
            "loss_rec",
            interests.shape_str(),
            format!("target {}, negatives {}", target.len(), negatives.shape_str()),
        ));
    }
    let k = selected.unwrap_or_else(|| select_interest(interests, target));
    if k >= interests.rows() {
        return Err(Error::shape("loss_rec selection", k, interests.rows()));
    }
    let z = interests.row(k);
    let mut logits = Vec::with_capacity(negatives.rows() + 1);
    logits.push(dot(z, target));
    logits.extend(negatives.iter_rows().map(|y| dot(z, y) + negative_shift));
    let lse = log_sum_exp(&logits);
    let loss = lse - logits[0];

    let p0 = (logits[0] - lse).exp();
    let mut d_selected: Vec<f64> = target.iter().map(|y| (p0 - 1.0) * y).collect();
    let d_target: Vec<f64> = z.iter().map(|v| (p0 - 1.0) * v).collect();
    let mut d_negatives = DenseMatrix::zeros(negatives.rows(), d);
    for (s, y) in negatives.iter_rows().enumerate() {
        let p = (logits[s + 1] - lse).exp();
        for (g, &v) in d_selected.iter_mut().zip(y) {
            *g += p * v;
        }
        for (g, &v) in d_negatives.row_mut(s).iter_mut().zip(z) {
            *g = p * v;
        }
    }
    Ok((
        loss,
        RecGrad {
            selected: k,
            d_selected,
            d_target,
            d_negatives,
        },
    ))
}
