//! InfoNCE between each interest and its representative items.
//!
//! All vectors are L2-normalized first. For interest `k` and each positive
//! position `i` the term is
//!
//! ```text
//! -log( exp(z̄_k·x̄_i/τ) / (exp(z̄_k·x̄_i/τ) + Σ_n exp(z̄_k·n̄/τ)) )
//! ```
//!
//! with negatives `n` drawn from the in-sequence non-representative items,
//! every other interest, and the sampled out-of-sequence items.

use super::ContrastSets;
use crate::error::{Error, Result};
use crate::gradcore::dense::{dot, l2_norm, log_sum_exp};
use crate::gradcore::DenseMatrix;

/// Gradients with respect to the raw (unnormalized) inputs.
#[derive(Clone, Debug)]
pub struct RecontrastGrad {
    pub d_interests: DenseMatrix,
    pub d_items: DenseMatrix,
    pub d_sampled: Vec<DenseMatrix>,
}

struct Normalized {
    unit: DenseMatrix,
    norms: Vec<f64>,
}

fn normalize(m: &DenseMatrix, rows: impl Iterator<Item = usize>, what: impl Fn(usize) -> String) -> Result<Normalized> {
    let mut unit = DenseMatrix::zeros(m.rows(), m.cols());
    let mut norms = vec![0.0; m.rows()];
    for r in rows {
        let n = l2_norm(m.row(r));
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm(what(r)));
        }
        norms[r] = n;
        for (u, v) in unit.row_mut(r).iter_mut().zip(m.row(r)) {
            *u = v / n;
        }
    }
    Ok(Normalized { unit, norms })
}

/// Gradient through `u = v/‖v‖`: `(g - (g·u) u) / ‖v‖`, added into `out`.
fn unnormalize_into(g: &[f64], u: &[f64], norm: f64, out: &mut [f64]) {
    let gu = dot(g, u);
    for ((o, &gi), &ui) in out.iter_mut().zip(g).zip(u) {
        *o += (gi - gu * ui) / norm;
    }
}

pub fn loss_recontrast(
    interests: &DenseMatrix,
    items: &DenseMatrix,
    sets: &ContrastSets,
    sampled: &[DenseMatrix],
    tau: f64,
) -> Result<f64> {
    compute(interests, items, sets, sampled, tau, false).map(|(l, _)| l)
}

pub fn recontrast_with_grad(
    interests: &DenseMatrix,
    items: &DenseMatrix,
    sets: &ContrastSets,
    sampled: &[DenseMatrix],
    tau: f64,
) -> Result<(f64, RecontrastGrad)> {
    compute(interests, items, sets, sampled, tau, true).map(|(l, g)| (l, g.expect("requested")))
}

fn compute(
    interests: &DenseMatrix,
    items: &DenseMatrix,
    sets: &ContrastSets,
    sampled: &[DenseMatrix],
    tau: f64,
    want_grad: bool,
) -> Result<(f64, Option<RecontrastGrad>)> {
    let n_z = interests.rows();
    if !(tau > 0.0) {
        return Err(Error::Invalid(format!("temperature must be positive, got {tau}")));
    }
    if sets.positives.len() != n_z || sets.in_seq_negatives.len() != n_z {
        return Err(Error::shape("recontrast sets", n_z, sets.positives.len()));
    }
    if sampled.len() != n_z && !(sampled.is_empty() && sets.out_of_seq.iter().all(Vec::is_empty)) {
        return Err(Error::shape("recontrast sampled", n_z, sampled.len()));
    }
    if items.cols() != interests.cols() {
        return Err(Error::shape("recontrast", interests.shape_str(), items.shape_str()));
    }

    let active: Vec<usize> = (0..n_z).filter(|&k| !sets.positives[k].is_empty()).collect();
    let grad_shell = || RecontrastGrad {
        d_interests: DenseMatrix::zeros(n_z, interests.cols()),
        d_items: DenseMatrix::zeros(items.rows(), items.cols()),
        d_sampled: sampled.iter().map(|s| DenseMatrix::zeros(s.rows(), s.cols())).collect(),
    };
    if active.is_empty() {
        return Ok((0.0, want_grad.then(grad_shell)));
    }

    let z = normalize(interests, 0..n_z, |k| format!("interest {k}"))?;
    let mut used_positions: Vec<usize> = active
        .iter()
        .flat_map(|&k| sets.positives[k].iter().chain(&sets.in_seq_negatives[k]).copied())
        .collect();
    used_positions.sort_unstable();
    used_positions.dedup();
    if let Some(&bad) = used_positions.iter().find(|&&p| p >= items.rows()) {
        return Err(Error::shape("recontrast position", items.shape_str(), bad));
    }
    let x = normalize(items, used_positions.iter().copied(), |j| {
        format!("sequence item at position {j}")
    })?;
    let mut s_norm = Vec::with_capacity(sampled.len());
    for (k, s) in sampled.iter().enumerate() {
        if active.contains(&k) {
            s_norm.push(Some(normalize(s, 0..s.rows(), |r| {
                format!("sampled negative {r} of interest {k}")
            })?));
        } else {
            s_norm.push(None);
        }
    }

    // Gradients in normalized space.
    let mut gz = DenseMatrix::zeros(n_z, interests.cols());
    let mut gx = DenseMatrix::zeros(items.rows(), items.cols());
    let mut gs: Vec<DenseMatrix> = sampled.iter().map(|s| DenseMatrix::zeros(s.rows(), s.cols())).collect();

    let mut total = 0.0;
    let inv_tau = 1.0 / tau;
    for &k in &active {
        let zk = z.unit.row(k);
        let neg_seq = &sets.in_seq_negatives[k];
        let others: Vec<usize> = (0..n_z).filter(|&o| o != k).collect();
        let samp = s_norm.get(k).and_then(|s| s.as_ref());
        let n_samp = samp.map_or(0, |s| s.unit.rows());

        let mut neg_logits = Vec::with_capacity(neg_seq.len() + others.len() + n_samp);
        neg_logits.extend(neg_seq.iter().map(|&j| dot(zk, x.unit.row(j)) * inv_tau));
        neg_logits.extend(others.iter().map(|&o| dot(zk, z.unit.row(o)) * inv_tau));
        if let Some(s) = samp {
            neg_logits.extend((0..n_samp).map(|r| dot(zk, s.unit.row(r)) * inv_tau));
        }

        let mut neg_weight = vec![0.0; neg_logits.len()];
        let mut logits = Vec::with_capacity(neg_logits.len() + 1);
        for &i in &sets.positives[k] {
            let pos = dot(zk, x.unit.row(i)) * inv_tau;
            logits.clear();
            logits.push(pos);
            logits.extend_from_slice(&neg_logits);
            let lse = log_sum_exp(&logits);
            total += lse - pos;
            if want_grad {
                // d/d pos = p0 - 1
                let dpos = (pos - lse).exp() - 1.0;
                let coef = dpos * inv_tau;
                for (g, &v) in gz.row_mut(k).iter_mut().zip(x.unit.row(i)) {
                    *g += coef * v;
                }
                for (g, &v) in gx.row_mut(i).iter_mut().zip(zk) {
                    *g += coef * v;
                }
                for (w, &l) in neg_weight.iter_mut().zip(&neg_logits) {
                    *w += (l - lse).exp();
                }
            }
        }

        if want_grad {
            let mut idx = 0;
            let push = |w: f64, other: &[f64], g_other: &mut [f64], gz_row: &mut [f64]| {
                let c = w * inv_tau;
                for (g, &v) in gz_row.iter_mut().zip(other) {
                    *g += c * v;
                }
                for (g, &v) in g_other.iter_mut().zip(zk) {
                    *g += c * v;
                }
            };
            let mut gz_k = vec![0.0; interests.cols()];
            for &j in neg_seq {
                push(neg_weight[idx], x.unit.row(j), gx.row_mut(j), &mut gz_k);
                idx += 1;
            }
            let mut gz_others: Vec<(usize, Vec<f64>)> = Vec::with_capacity(others.len());
            for &o in &others {
                let mut g_o = vec![0.0; interests.cols()];
                push(neg_weight[idx], z.unit.row(o), &mut g_o, &mut gz_k);
                gz_others.push((o, g_o));
                idx += 1;
            }
            if let Some(s) = samp {
                for r in 0..n_samp {
                    push(neg_weight[idx], s.unit.row(r), gs[k].row_mut(r), &mut gz_k);
                    idx += 1;
                }
            }
            for (g, v) in gz.row_mut(k).iter_mut().zip(&gz_k) {
                *g += v;
            }
            for (o, g_o) in gz_others {
                for (g, v) in gz.row_mut(o).iter_mut().zip(&g_o) {
                    *g += v;
                }
            }
        }
    }

    if !want_grad {
        return Ok((total, None));
    }

    let mut out = grad_shell();
    for k in 0..n_z {
        unnormalize_into(gz.row(k), z.unit.row(k), z.norms[k], out.d_interests.row_mut(k));
    }
    for &j in &used_positions {
        unnormalize_into(gx.row(j), x.unit.row(j), x.norms[j], out.d_items.row_mut(j));
    }
    for (k, s) in s_norm.iter().enumerate() {
        if let Some(s) = s {
            for r in 0..s.unit.rows() {
                unnormalize_into(gs[k].row(r), s.unit.row(r), s.norms[r], out.d_sampled[k].row_mut(r));
            }
        }
    }
    Ok((total, Some(out)))
}
