//! Attention decoder that rebuilds each interest's representative items.
//!
//! ```text
//! C_k        = reshape(W4 z_k)            N_x units of width d_b
//! β[k,i,j]   = softmax_i( w̄_j · tanh(W3 c_{k,i}) )
//! x̂[k,j]     = Σ_i β[k,i,j] · W5 c_{k,i}
//! loss       = Σ_k Σ_{j ∈ P_k} ‖x̂[k,j] - x_j‖²
//! ```
//!
//! The softmax runs over all `N_x` units of `C_k`; masking applies only to
//! the reconstructed positions `j`, which come from the positive sets.
//! The targets `x_j` are constants: gradient reaches the items only through
//! the interests, never by moving a target toward its reconstruction.

use super::ContrastSets;
use crate::error::{Error, Result};
use crate::gradcore::dense::{dot, softmax_in_place};
use crate::gradcore::DenseMatrix;
use crate::model::{HyperParams, ModelParams};

struct Decoded {
    units: DenseMatrix,
    gates: DenseMatrix,
    outputs: DenseMatrix,
}

fn decode(z: &[f64], params: &ModelParams, n_x: usize, d_b: usize) -> Decoded {
    let mut flat = vec![0.0; n_x * d_b];
    params.recon_w4.matvec_into(z, &mut flat);
    let units = DenseMatrix::from_vec(n_x, d_b, flat).expect("n_x * d_b");
    let mut gates = DenseMatrix::zeros(n_x, d_b);
    let mut outputs = DenseMatrix::zeros(n_x, params.recon_w5.rows());
    for i in 0..n_x {
        let g = gates.row_mut(i);
        params.recon_w3.matvec_into(units.row(i), g);
        g.iter_mut().for_each(|v| *v = v.tanh());
        params.recon_w5.matvec_into(units.row(i), outputs.row_mut(i));
    }
    Decoded {
        units,
        gates,
        outputs,
    }
}

fn check(interests: &DenseMatrix, items: &DenseMatrix, sets: &ContrastSets, params: &ModelParams, hp: &HyperParams) -> Result<()> {
    params.check_shapes(hp)?;
    if interests.rows() != hp.n_z || interests.cols() != hp.d {
        return Err(Error::shape("reconstruct interests", interests.shape_str(), format!("{}x{}", hp.n_z, hp.d)));
    }
    if items.rows() != hp.n_x || items.cols() != hp.d {
        return Err(Error::shape("reconstruct items", items.shape_str(), format!("{}x{}", hp.n_x, hp.d)));
    }
    if sets.positives.len() != hp.n_z {
        return Err(Error::shape("reconstruct sets", sets.positives.len(), hp.n_z));
    }
    if let Some(&j) = sets.positives.iter().flatten().find(|&&j| j >= hp.n_x) {
        return Err(Error::shape("reconstruct position", j, hp.n_x));
    }
    Ok(())
}

pub fn loss_reconstruct(
    interests: &DenseMatrix,
    items: &DenseMatrix,
    sets: &ContrastSets,
    params: &ModelParams,
    hp: &HyperParams,
) -> Result<f64> {
    check(interests, items, sets, params, hp)?;
    let mut total = 0.0;
    let mut beta = vec![0.0; hp.n_x];
    let mut recon = vec![0.0; hp.d];
    for k in 0..hp.n_z {
        if sets.positives[k].is_empty() {
            continue;
        }
        let dec = decode(interests.row(k), params, hp.n_x, hp.d_b);
        for &j in &sets.positives[k] {
            let q = params.position_query.row(j);
            for (b, i) in beta.iter_mut().zip(0..hp.n_x) {
                *b = dot(q, dec.gates.row(i));
            }
            softmax_in_place(&mut beta);
            recon.fill(0.0);
            for (i, &b) in beta.iter().enumerate() {
                for (r, &u) in recon.iter_mut().zip(dec.outputs.row(i)) {
                    *r += b * u;
                }
            }
            total += recon.iter().zip(items.row(j)).map(|(r, x)| (r - x) * (r - x)).sum::<f64>();
        }
    }
    Ok(total)
}

/// Loss plus gradients. Parameter gradients scaled by `coef` are added into
/// `grads`; the returned `d_interests` is scaled by `coef` too. `items` get
/// no gradient.
pub fn reconstruct_with_grad(
    interests: &DenseMatrix,
    items: &DenseMatrix,
    sets: &ContrastSets,
    params: &ModelParams,
    hp: &HyperParams,
    coef: f64,
    grads: &mut ModelParams,
) -> Result<(f64, DenseMatrix)> {
    check(interests, items, sets, params, hp)?;
    let (n_x, d_b, d) = (hp.n_x, hp.d_b, hp.d);
    let mut d_interests = DenseMatrix::zeros(hp.n_z, d);
    let mut total = 0.0;

    let mut beta = vec![0.0; n_x];
    let mut recon = vec![0.0; d];
    let mut d_beta = vec![0.0; n_x];
    let mut pre = vec![0.0; d_b];
    for k in 0..hp.n_z {
        if sets.positives[k].is_empty() {
            continue;
        }
        let dec = decode(interests.row(k), params, n_x, d_b);
        let mut d_gates = DenseMatrix::zeros(n_x, d_b);
        let mut d_outputs = DenseMatrix::zeros(n_x, d);
        for &j in &sets.positives[k] {
            let q = params.position_query.row(j);
            for (b, i) in beta.iter_mut().zip(0..n_x) {
                *b = dot(q, dec.gates.row(i));
            }
            softmax_in_place(&mut beta);
            recon.fill(0.0);
            for (i, &b) in beta.iter().enumerate() {
                for (r, &u) in recon.iter_mut().zip(dec.outputs.row(i)) {
                    *r += b * u;
                }
            }
            let target = items.row(j);
            let diff: Vec<f64> = recon.iter().zip(target).map(|(r, x)| r - x).collect();
            total += dot(&diff, &diff);

            let d_recon: Vec<f64> = diff.iter().map(|v| 2.0 * coef * v).collect();
            for i in 0..n_x {
                d_beta[i] = dot(dec.outputs.row(i), &d_recon);
                for (du, &g) in d_outputs.row_mut(i).iter_mut().zip(&d_recon) {
                    *du += beta[i] * g;
                }
            }
            let mean: f64 = beta.iter().zip(&d_beta).map(|(b, g)| b * g).sum();
            let gq = grads.position_query.row_mut(j);
            for i in 0..n_x {
                let de = beta[i] * (d_beta[i] - mean);
                if de == 0.0 {
                    continue;
                }
                for (g, &h) in gq.iter_mut().zip(dec.gates.row(i)) {
                    *g += de * h;
                }
                for (dg, &qv) in d_gates.row_mut(i).iter_mut().zip(q) {
                    *dg += de * qv;
                }
            }
        }

        let mut d_units = DenseMatrix::zeros(n_x, d_b);
        for i in 0..n_x {
            for ((p, &dg), &g) in pre.iter_mut().zip(d_gates.row(i)).zip(dec.gates.row(i)) {
                *p = dg * (1.0 - g * g);
            }
            grads.recon_w3.add_outer(&pre, dec.units.row(i));
            params.recon_w3.matvec_t_acc(&pre, d_units.row_mut(i));
            grads.recon_w5.add_outer(d_outputs.row(i), dec.units.row(i));
            params.recon_w5.matvec_t_acc(d_outputs.row(i), d_units.row_mut(i));
        }
        grads.recon_w4.add_outer(d_units.data(), interests.row(k));
        params.recon_w4.matvec_t_acc(d_units.data(), d_interests.row_mut(k));
    }
    Ok((total, d_interests))
}
