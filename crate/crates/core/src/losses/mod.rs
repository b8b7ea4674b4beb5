//! Training objectives: the next-item loss and the three backward flows.
//!
//! The per-example objective runs one extractor forward pass, evaluates all
//! four losses on it, and (optionally) backpropagates their weighted sum
//! `L_rec + λ_cl·L_cl + λ_att·L_att + λ_ct·L_ct` in a single reverse sweep.
//! Batches are reduced as the mean over examples.

pub mod reattend;
pub mod rec;
pub mod reconstruct;
pub mod recontrast;

use rayon::prelude::*;

pub use reattend::{loss_reattend, reattend_with_grad, ReattendGrad};
pub use rec::{loss_rec, rec_with_grad, select_interest, RecGrad};
pub use reconstruct::{loss_reconstruct, reconstruct_with_grad};
pub use recontrast::{loss_recontrast, recontrast_with_grad, RecontrastGrad};

use crate::error::{Error, Result};
use crate::gradcore::DenseMatrix;
use crate::model::{embed, extract_with_cache, extractor_backward, BehaviorSequence, GammaC, HyperParams, ModelParams};

/// Per-interest partition of the sequence plus sampled outside items.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContrastSets {
    /// Positions whose attention exceeds the threshold.
    pub positives: Vec<Vec<usize>>,
    /// Remaining valid positions.
    pub in_seq_negatives: Vec<Vec<usize>>,
    /// Item ids sampled from outside the sequence.
    pub out_of_seq: Vec<Vec<usize>>,
}

impl ContrastSets {
    pub fn empty(n_z: usize) -> Self {
        Self {
            positives: vec![Vec::new(); n_z],
            in_seq_negatives: vec![Vec::new(); n_z],
            out_of_seq: vec![Vec::new(); n_z],
        }
    }
}

/// Splits valid positions by `a[k,j] > γ`. Out-of-sequence sets are left empty.
pub fn select_positives(attention: &DenseMatrix, gamma: GammaC, mask: &[bool]) -> ContrastSets {
    let valid_len = mask.iter().filter(|&&m| m).count();
    let g = gamma.resolve(valid_len);
    let n_z = attention.rows();
    let mut sets = ContrastSets::empty(n_z);
    for k in 0..n_z {
        for (j, &m) in mask.iter().enumerate() {
            if !m {
                continue;
            }
            if attention[(k, j)] > g {
                sets.positives[k].push(j);
            } else {
                sets.in_seq_negatives[k].push(j);
            }
        }
    }
    sets
}

/// The four loss scalars of one example or the batch mean.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValues {
    pub rec: f64,
    pub cl: f64,
    pub att: f64,
    pub ct: f64,
}

impl LossValues {
    pub fn total(&self, hp: &HyperParams) -> f64 {
        self.rec + hp.lambda_cl * self.cl + hp.lambda_att * self.att + hp.lambda_ct * self.ct
    }

    fn add(&mut self, o: &LossValues) {
        self.rec += o.rec;
        self.cl += o.cl;
        self.att += o.att;
        self.ct += o.ct;
    }

    fn scale(&mut self, s: f64) {
        self.rec *= s;
        self.cl *= s;
        self.att *= s;
        self.ct *= s;
    }
}

/// Loss scalars, their weighted total, and the gradient of the total.
#[derive(Clone, Debug)]
pub struct LossBundle {
    pub rec: f64,
    pub cl: f64,
    pub att: f64,
    pub ct: f64,
    pub total: f64,
    pub grads: ModelParams,
}

impl LossBundle {
    pub fn values(&self) -> LossValues {
        LossValues {
            rec: self.rec,
            cl: self.cl,
            att: self.att,
            ct: self.ct,
        }
    }
}

/// Packs loss values and the already-weighted gradient of the total.
pub fn combine(values: LossValues, grads: ModelParams, hp: &HyperParams) -> LossBundle {
    LossBundle {
        rec: values.rec,
        cl: values.cl,
        att: values.att,
        ct: values.ct,
        total: values.total(hp),
        grads,
    }
}

/// Random draws consumed by one training example.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExampleSamples {
    /// Sampled-softmax negatives for the next-item loss.
    pub rec_negatives: Vec<usize>,
    /// Per interest, items from outside the sequence used as contrastive negatives.
    pub seq_negatives: Vec<Vec<usize>>,
}

/// Non-differentiable choices made on the forward pass, plus the values the
/// backward pass treats as constants (the Re-attend target and the
/// reconstruction targets).
#[derive(Clone, Debug, PartialEq)]
pub struct Selections {
    pub sets: ContrastSets,
    pub selected_interest: usize,
    /// `N_z x N_x` attention used as the Re-attend target.
    pub attention: DenseMatrix,
    /// `N_x x d` embedded sequence used as the reconstruction target.
    pub items: DenseMatrix,
}

#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub seq: &'a BehaviorSequence,
    pub target: usize,
    pub samples: &'a ExampleSamples,
}

fn gather(table: &DenseMatrix, ids: &[usize]) -> Result<DenseMatrix> {
    let mut out = DenseMatrix::zeros(ids.len(), table.cols());
    for (r, &id) in ids.iter().enumerate() {
        if id >= table.rows() {
            return Err(Error::ItemOutOfRange { id, vocab: table.rows() });
        }
        out.row_mut(r).copy_from_slice(table.row(id));
    }
    Ok(out)
}

fn scatter_add(table: &mut DenseMatrix, ids: &[usize], rows: &DenseMatrix, coef: f64) {
    for (r, &id) in ids.iter().enumerate() {
        for (t, &g) in table.row_mut(id).iter_mut().zip(rows.row(r)) {
            *t += coef * g;
        }
    }
}

/// Evaluates all four losses on one example. When `grads` is given, the
/// gradient of the weighted total is added into it. `frozen` replays the
/// positive sets, interest selection and stop-gradient targets of an earlier
/// pass, which turns the objective into a smooth function whose exact
/// gradient is the one computed here.
pub fn example_objective(
    params: &ModelParams,
    hp: &HyperParams,
    ex: Example<'_>,
    frozen: Option<&Selections>,
    grads: Option<&mut ModelParams>,
) -> Result<(LossValues, Selections)> {
    let vocab = params.vocab();
    if ex.target >= vocab {
        return Err(Error::ItemOutOfRange { id: ex.target, vocab });
    }
    let x = embed(ex.seq, params)?;
    let mask = ex.seq.mask();
    let (set, cache) = extract_with_cache(&x, &mask, params, hp)?;

    let mut sets = match frozen {
        Some(f) => f.sets.clone(),
        None => select_positives(&set.attention, hp.gamma_c, &mask),
    };
    sets.out_of_seq = if ex.samples.seq_negatives.is_empty() {
        vec![Vec::new(); hp.n_z]
    } else {
        ex.samples.seq_negatives.clone()
    };
    if sets.out_of_seq.len() != hp.n_z {
        return Err(Error::shape("sequence negatives", sets.out_of_seq.len(), hp.n_z));
    }
    let sampled: Vec<DenseMatrix> = sets
        .out_of_seq
        .iter()
        .map(|ids| gather(&params.item_emb, ids))
        .collect::<Result<_>>()?;

    let target = params.item_emb.row(ex.target);
    let negatives = gather(&params.item_emb, &ex.samples.rec_negatives)?;
    let shift = if hp.logq_correction {
        (vocab as f64 / ex.samples.rec_negatives.len().max(1) as f64).ln()
    } else {
        0.0
    };
    let (rec, rec_grad) = rec_with_grad(
        &set.interests,
        target,
        &negatives,
        shift,
        frozen.map(|f| f.selected_interest),
    )?;

    let selections = Selections {
        sets: ContrastSets {
            out_of_seq: Vec::new(),
            ..sets.clone()
        },
        selected_interest: rec_grad.selected,
        attention: set.attention.clone(),
        items: x.clone(),
    };
    let att_target = frozen.map_or(&set.attention, |f| &f.attention);
    let ct_target = frozen.map_or(&x, |f| &f.items);

    let Some(grads) = grads else {
        let values = LossValues {
            rec,
            cl: loss_recontrast(&set.interests, &x, &sets, &sampled, hp.tau)?,
            att: loss_reattend(att_target, &set.interests, &x, &mask)?,
            ct: loss_reconstruct(&set.interests, ct_target, &sets, params, hp)?,
        };
        return Ok((values, selections));
    };

    let mut d_interests = DenseMatrix::zeros(hp.n_z, hp.d);
    let mut d_x = DenseMatrix::zeros(hp.n_x, hp.d);

    for (g, &v) in d_interests.row_mut(rec_grad.selected).iter_mut().zip(&rec_grad.d_selected) {
        *g += v;
    }
    for (g, &v) in grads.item_emb.row_mut(ex.target).iter_mut().zip(&rec_grad.d_target) {
        *g += v;
    }
    scatter_add(&mut grads.item_emb, &ex.samples.rec_negatives, &rec_grad.d_negatives, 1.0);

    let cl = if hp.lambda_cl > 0.0 {
        let (l, g) = recontrast_with_grad(&set.interests, &x, &sets, &sampled, hp.tau)?;
        d_interests.axpy(hp.lambda_cl, &g.d_interests)?;
        d_x.axpy(hp.lambda_cl, &g.d_items)?;
        for (ids, ds) in sets.out_of_seq.iter().zip(&g.d_sampled) {
            scatter_add(&mut grads.item_emb, ids, ds, hp.lambda_cl);
        }
        l
    } else {
        loss_recontrast(&set.interests, &x, &sets, &sampled, hp.tau)?
    };

    let att = if hp.lambda_att > 0.0 {
        let (l, g) = reattend_with_grad(att_target, &set.interests, &x, &mask)?;
        d_interests.axpy(hp.lambda_att, &g.d_interests)?;
        d_x.axpy(hp.lambda_att, &g.d_items)?;
        l
    } else {
        loss_reattend(att_target, &set.interests, &x, &mask)?
    };

    let ct = if hp.lambda_ct > 0.0 {
        let (l, dz) = reconstruct_with_grad(&set.interests, ct_target, &sets, params, hp, hp.lambda_ct, grads)?;
        d_interests.axpy(1.0, &dz)?;
        l
    } else {
        loss_reconstruct(&set.interests, ct_target, &sets, params, hp)?
    };

    extractor_backward(&x, &mask, params, &set, &cache, &d_interests, grads, &mut d_x);
    for (i, &id) in ex.seq.items().iter().enumerate() {
        for (g, &v) in grads.item_emb.row_mut(id).iter_mut().zip(d_x.row(i)) {
            *g += v;
        }
    }

    Ok((LossValues { rec, cl, att, ct }, selections))
}

/// Examples per gradient shard. Shards are reduced in order, so the result
/// does not depend on the thread count.
const SHARD: usize = 16;

/// Mean losses and mean gradient over `batch`.
pub fn batch_objective(params: &ModelParams, hp: &HyperParams, batch: &[Example<'_>]) -> Result<LossBundle> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let shards: Vec<(LossValues, ModelParams)> = batch
        .par_chunks(SHARD)
        .map(|chunk| {
            let mut grads = params.zeros_like();
            let mut values = LossValues::default();
            for ex in chunk {
                let (v, _) = example_objective(params, hp, *ex, None, Some(&mut grads))?;
                values.add(&v);
            }
            Ok((values, grads))
        })
        .collect::<Result<_>>()?;

    let mut iter = shards.into_iter();
    let (mut values, mut grads) = iter.next().expect("non-empty batch");
    for (v, g) in iter {
        values.add(&v);
        grads.axpy(1.0, &g)?;
    }
    let inv = 1.0 / batch.len() as f64;
    values.scale(inv);
    grads.scale(inv);
    Ok(combine(values, grads, hp))
}

/// Mean losses over `batch` without gradients.
pub fn batch_values(params: &ModelParams, hp: &HyperParams, batch: &[Example<'_>]) -> Result<LossValues> {
    let mut values = LossValues::default();
    for ex in batch {
        values.add(&example_objective(params, hp, *ex, None, None)?.0);
    }
    values.scale(1.0 / batch.len().max(1) as f64);
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_attention_with_adaptive_threshold_has_no_positives() {
        let a = DenseMatrix::from_rows(&[&[0.25; 4]]);
        let sets = select_positives(&a, GammaC::Adaptive, &[true; 4]);
        assert!(sets.positives[0].is_empty());
        assert_eq!(sets.in_seq_negatives[0], vec![0, 1, 2, 3]);
    }

    #[test]
    fn threshold_one_third() {
        let a = DenseMatrix::from_rows(&[&[0.7, 0.2, 0.1]]);
        let sets = select_positives(&a, GammaC::Fixed(1.0 / 3.0), &[true; 3]);
        assert_eq!(sets.positives[0], vec![0]);
        assert_eq!(sets.in_seq_negatives[0], vec![1, 2]);
    }

    #[test]
    fn low_threshold_makes_everything_positive() {
        let a = DenseMatrix::from_rows(&[&[0.4, 0.3, 0.2, 0.1]]);
        let sets = select_positives(&a, GammaC::Fixed(1.0 / 32.0), &[true; 4]);
        assert_eq!(sets.positives[0].len(), 4);
        assert!(sets.in_seq_negatives[0].is_empty());
    }

    #[test]
    fn adaptive_threshold_uses_valid_length() {
        let a = DenseMatrix::from_rows(&[&[0.6, 0.4, 0.0, 0.0]]);
        let sets = select_positives(&a, GammaC::Adaptive, &[true, true, false, false]);
        assert_eq!(sets.positives[0], vec![0]);
        assert_eq!(sets.in_seq_negatives[0], vec![1]);
    }

    #[test]
    fn combine_weights() {
        let v = LossValues {
            rec: 1.5,
            cl: 2.0,
            att: 3.0,
            ct: 4.0,
        };
        let hp0 = HyperParams {
            lambda_cl: 0.0,
            lambda_att: 0.0,
            lambda_ct: 0.0,
            ..HyperParams::default()
        };
        assert_eq!(v.total(&hp0), 1.5);
        let hp1 = HyperParams { lambda_cl: 1.0, ..hp0.clone() };
        assert_eq!(v.total(&hp1), 3.5);
        for lam in [0.01, 0.1, 1.0, 10.0] {
            let hp = HyperParams {
                lambda_cl: lam,
                lambda_att: lam,
                lambda_ct: lam,
                ..HyperParams::default()
            };
            hp.validate().unwrap();
            let b = combine(v, ModelParams::zeros(1, &HyperParams { d: 1, d_h: 1, d_b: 1, n_z: 1, n_x: 1, ..hp.clone() }), &hp);
            assert!((b.total - (1.5 + lam * 9.0)).abs() < 1e-12);
        }
    }
}
