//! Cross-entropy between the forward attention and the serving-time
//! dot-product correlation.
//!
//! For each interest `k` the correlations `ã[k,i] = z_k · x_i` over valid
//! positions are softmax-normalized into `q[k,·]`, and the loss is
//! `Σ_k Σ_i -a[k,i] log q[k,i]`. The attention map is the target and gets no
//! gradient.

use crate::error::{Error, Result};
use crate::gradcore::dense::{dot, log_sum_exp};
use crate::gradcore::DenseMatrix;

#[derive(Clone, Debug)]
pub struct ReattendGrad {
    pub d_interests: DenseMatrix,
    pub d_items: DenseMatrix,
}

fn check(attention: &DenseMatrix, interests: &DenseMatrix, items: &DenseMatrix, mask: &[bool]) -> Result<()> {
    if attention.rows() != interests.rows() || attention.cols() != items.rows() || mask.len() != items.rows() {
        return Err(Error::shape(
            "reattend",
            format!("attention {}", attention.shape_str()),
            format!("interests {}, items {}, mask {}", interests.shape_str(), items.shape_str(), mask.len()),
        ));
    }
    if interests.cols() != items.cols() {
        return Err(Error::shape("reattend", interests.shape_str(), items.shape_str()));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptySequence);
    }
    Ok(())
}

pub fn loss_reattend(
    attention: &DenseMatrix,
    interests: &DenseMatrix,
    items: &DenseMatrix,
    mask: &[bool],
) -> Result<f64> {
    compute(attention, interests, items, mask, false).map(|(l, _)| l)
}

pub fn reattend_with_grad(
    attention: &DenseMatrix,
    interests: &DenseMatrix,
    items: &DenseMatrix,
    mask: &[bool],
) -> Result<(f64, ReattendGrad)> {
    compute(attention, interests, items, mask, true).map(|(l, g)| (l, g.expect("requested")))
}

fn compute(
    attention: &DenseMatrix,
    interests: &DenseMatrix,
    items: &DenseMatrix,
    mask: &[bool],
    want_grad: bool,
) -> Result<(f64, Option<ReattendGrad>)> {
    check(attention, interests, items, mask)?;
    let valid: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let mut grad = want_grad.then(|| ReattendGrad {
        d_interests: DenseMatrix::zeros(interests.rows(), interests.cols()),
        d_items: DenseMatrix::zeros(items.rows(), items.cols()),
    });

    let mut total = 0.0;
    let mut corr = vec![0.0; valid.len()];
    for k in 0..interests.rows() {
        let z = interests.row(k);
        for (c, &i) in corr.iter_mut().zip(&valid) {
            *c = dot(z, items.row(i));
        }
        let lse = log_sum_exp(&corr);
        let a = attention.row(k);
        let a_sum: f64 = valid.iter().map(|&i| a[i]).sum();
        for (c, &i) in corr.iter().zip(&valid) {
            total -= a[i] * (c - lse);
        }
        if let Some(g) = grad.as_mut() {
            for (c, &i) in corr.iter().zip(&valid) {
                // d/dã_i = Σa · q_i - a_i
                let dc = a_sum * (c - lse).exp() - a[i];
                if dc == 0.0 {
                    continue;
                }
                for (gz, &x) in g.d_interests.row_mut(k).iter_mut().zip(items.row(i)) {
                    *gz += dc * x;
                }
                for (gx, &zv) in g.d_items.row_mut(i).iter_mut().zip(z) {
                    *gx += dc * zv;
                }
            }
        }
    }
    Ok((total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::{check_gradient, Coords, FnObjective};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_hot_target_against_uniform() {
        // z·x equal for both items, so the softmax is [0.5, 0.5].
        let a = DenseMatrix::from_rows(&[&[1.0, 0.0]]);
        let z = DenseMatrix::from_rows(&[&[1.0, 1.0]]);
        let x = DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let l = loss_reattend(&a, &z, &x, &[true, true]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn matching_target_gives_entropy() {
        let z = DenseMatrix::from_rows(&[&[0.4, -1.0]]);
        let x = DenseMatrix::from_rows(&[&[1.0, 0.5], &[0.2, -0.3], &[2.0, 1.0]]);
        let mut q: Vec<f64> = (0..3).map(|i| dot(z.row(0), x.row(i))).collect();
        crate::gradcore::dense::softmax_in_place(&mut q);
        let a = DenseMatrix::from_rows(&[&q]);
        let h: f64 = -q.iter().map(|p| p * p.ln()).sum::<f64>();
        let l = loss_reattend(&a, &z, &x, &[true; 3]).unwrap();
        assert!((l - h).abs() < 1e-12);
    }

    #[test]
    fn uniform_uniform_is_log_len() {
        let a = DenseMatrix::from_rows(&[&[0.25; 4], &[0.25; 4]]);
        let z = DenseMatrix::from_rows(&[&[0.0, 0.0], &[0.0, 0.0]]);
        let x = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0], &[7.0, 8.0]]);
        let l = loss_reattend(&a, &z, &x, &[true; 4]).unwrap();
        assert!((l - 2.0 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn padding_is_ignored() {
        let a = DenseMatrix::from_rows(&[&[0.5, 0.5, 0.0]]);
        let z = DenseMatrix::from_rows(&[&[1.0, 1.0]]);
        let x = DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[9.0, 9.0]]);
        let l = loss_reattend(&a, &z, &x, &[true, true, false]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n_z, n_x, d) = (3, 5, 4);
        let mask = [true, true, true, false, true];
        let mut a = DenseMatrix::zeros(n_z, n_x);
        for k in 0..n_z {
            let mut row: Vec<f64> = (0..n_x).map(|_| rng.random_range(-1.0..1.0)).collect();
            crate::gradcore::dense::masked_softmax_in_place(&mut row, &mask);
            a.row_mut(k).copy_from_slice(&row);
        }
        let flat: Vec<f64> = (0..(n_z + n_x) * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let split = |v: &Vec<f64>| {
            (
                DenseMatrix::from_vec(n_z, d, v[..n_z * d].to_vec()).unwrap(),
                DenseMatrix::from_vec(n_x, d, v[n_z * d..].to_vec()).unwrap(),
            )
        };
        let obj = FnObjective::new(
            |v: &Vec<f64>| {
                let (z, x) = split(v);
                loss_reattend(&a, &z, &x, &mask)
            },
            |v: &Vec<f64>| {
                let (z, x) = split(v);
                let (_, g) = reattend_with_grad(&a, &z, &x, &mask)?;
                let mut out = g.d_interests.into_vec();
                out.extend(g.d_items.into_vec());
                Ok(out)
            },
        );
        assert!(check_gradient(&obj, &flat, 1e-4, Coords::All).unwrap() < 1e-7);
    }
}
