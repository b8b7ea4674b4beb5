//! Mini-batch Adam training with negative sampling and early stopping.

use std::collections::HashSet;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::HeldOutUser;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::losses::{batch_objective, Example, ExampleSamples, LossValues};
use crate::model::{checkpoint, BehaviorSequence, HyperParams, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 0.003,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 1e-5,
            clip_norm: Some(5.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
    pub config: OptimConfig,
}

impl OptimState {
    pub fn new(params: &ModelParams, config: OptimConfig) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            config,
        }
    }
}

/// One Adam update with bias correction. Weight decay is decoupled and
/// applied first: `p -= lr * wd * p`.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut OptimState) -> Result<()> {
    if let Some((key, i)) = grads.first_non_finite() {
        let cols = grads.tensor(key).cols();
        return Err(Error::NonFinite(format!(
            "gradient of {}[{}, {}]",
            key.name(),
            i / cols,
            i % cols
        )));
    }
    for ((key, p), (_, g)) in params.tensors().into_iter().zip(grads.tensors()) {
        if p.shape() != g.shape() {
            return Err(Error::shape(key.name(), p.shape_str(), g.shape_str()));
        }
    }
    let c = state.config;
    state.step += 1;
    let bc1 = 1.0 - c.beta1.powi(state.step as i32);
    let bc2 = 1.0 - c.beta2.powi(state.step as i32);
    let decay = 1.0 - c.lr * c.weight_decay;
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut());
    for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
        let it = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut());
        for (((p, &g), m), v) in it {
            *p *= decay;
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            *p -= c.lr * (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
        }
    }
    Ok(())
}

/// Rescales `grads` so its global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Validate every this many epochs; 0 disables validation.
    pub eval_every: usize,
    /// Validations without improvement before stopping.
    pub patience: usize,
    pub checkpoint_path: Option<PathBuf>,
    pub optim: OptimConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            seed: 0,
            eval_every: 1,
            patience: 5,
            checkpoint_path: None,
            optim: OptimConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Invalid("epochs and batch_size must be at least 1".into()));
        }
        let o = &self.optim;
        if !(o.lr > 0.0) || !(o.weight_decay >= 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return Err(Error::Invalid("invalid optimizer settings".into()));
        }
        Ok(())
    }
}

/// A sequence prefix and the item that followed it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainExample {
    pub seq: BehaviorSequence,
    pub target: usize,
}

/// Sliding prefixes: for each `t >= 1`, `(items[..t]` truncated to the last
/// `max_len`, `items[t])`. Returns the examples and the number of
/// sequences skipped for being shorter than 2.
pub fn build_examples(sequences: &[&[usize]], max_len: usize) -> (Vec<TrainExample>, usize) {
    let mut out = Vec::new();
    let mut skipped = 0;
    for (user, seq) in sequences.iter().enumerate() {
        if seq.len() < 2 {
            skipped += 1;
            continue;
        }
        for t in 1..seq.len() {
            out.push(TrainExample {
                seq: BehaviorSequence::new(user, &seq[..t], max_len),
                target: seq[t],
            });
        }
    }
    (out, skipped)
}

/// Draws sampled-softmax negatives (never the target) and, per interest,
/// out-of-sequence items for the contrastive loss.
pub fn sample_for<R: Rng>(ex: &TrainExample, vocab: usize, hp: &HyperParams, rng: &mut R) -> ExampleSamples {
    let s_neg = hp.s_neg.min(vocab.saturating_sub(1));
    let rec_negatives = (0..s_neg)
        .map(|_| loop {
            let i = rng.random_range(0..vocab);
            if i != ex.target {
                break i;
            }
        })
        .collect();

    let in_seq: HashSet<usize> = ex.seq.items().iter().copied().collect();
    let outside = vocab - in_seq.len().min(vocab);
    let per_interest = if outside == 0 {
        0
    } else {
        hp.s_seq_neg.unwrap_or(ex.seq.len())
    };
    let seq_negatives = if hp.lambda_cl > 0.0 {
        (0..hp.n_z)
            .map(|_| {
                (0..per_interest)
                    .map(|_| loop {
                        let i = rng.random_range(0..vocab);
                        if !in_seq.contains(&i) {
                            break i;
                        }
                    })
                    .collect()
            })
            .collect()
    } else {
        Vec::new()
    };
    ExampleSamples {
        rec_negatives,
        seq_negatives,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Example-weighted mean of each loss over the epoch.
    pub losses: LossValues,
    pub seconds: f64,
}

impl EpochStats {
    /// `epoch L_rec L_cl L_att L_ct seconds`
    pub fn log_line(&self) -> String {
        let l = &self.losses;
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.3}",
            self.epoch, l.rec, l.cl, l.att, l.ct, self.seconds
        )
    }
}

pub const LOG_HEADER: &str = "epoch\tl_rec\tl_cl\tl_att\tl_ct\tseconds";

/// One shuffled pass over `examples`. All randomness comes from `rng`.
pub fn train_epoch<R: Rng>(
    examples: &[TrainExample],
    params: &mut ModelParams,
    hp: &HyperParams,
    config: &TrainConfig,
    state: &mut OptimState,
    rng: &mut R,
) -> Result<LossValues> {
    if examples.is_empty() {
        return Err(Error::Invalid("no training examples".into()));
    }
    let vocab = params.vocab();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);

    let mut sum = LossValues::default();
    for chunk in order.chunks(config.batch_size) {
        let samples: Vec<ExampleSamples> = chunk.iter().map(|&i| sample_for(&examples[i], vocab, hp, rng)).collect();
        let batch: Vec<Example<'_>> = chunk
            .iter()
            .zip(&samples)
            .map(|(&i, s)| Example {
                seq: &examples[i].seq,
                target: examples[i].target,
                samples: s,
            })
            .collect();
        let mut bundle = batch_objective(params, hp, &batch)?;
        if let Some(max) = config.optim.clip_norm {
            clip_global_norm(&mut bundle.grads, max);
        }
        adam_step(params, &bundle.grads, state)?;
        let w = chunk.len() as f64;
        sum.rec += w * bundle.rec;
        sum.cl += w * bundle.cl;
        sum.att += w * bundle.att;
        sum.ct += w * bundle.ct;
    }
    let n = examples.len() as f64;
    Ok(LossValues {
        rec: sum.rec / n,
        cl: sum.cl / n,
        att: sum.att / n,
        ct: sum.ct / n,
    })
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// The best validated parameters, or the final ones without validation.
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    /// `(epoch, Recall@20)` for each validation.
    pub validation: Vec<(usize, f64)>,
    pub best_epoch: usize,
    pub skipped_sequences: usize,
}

/// Initializes from `config.seed`, trains, and keeps the snapshot with the
/// best validation Recall@20. The epoch log goes to `log`.
pub fn fit(
    train_sequences: &[&[usize]],
    vocab: usize,
    valid: &[HeldOutUser],
    hp: &HyperParams,
    config: &TrainConfig,
    log: &mut dyn Write,
) -> Result<FitResult> {
    hp.validate()?;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(vocab, hp, &mut rng)?;
    let (examples, skipped_sequences) = build_examples(train_sequences, hp.n_x);
    let mut state = OptimState::new(&params, config.optim);

    let io = |e| Error::Io {
        path: "<training log>".into(),
        source: e,
    };
    writeln!(log, "{LOG_HEADER}").map_err(io)?;

    let mut history = Vec::new();
    let mut validation = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let losses = train_epoch(&examples, &mut params, hp, config, &mut state, &mut rng)?;
        let stats = EpochStats {
            epoch,
            losses,
            seconds: start.elapsed().as_secs_f64(),
        };
        writeln!(log, "{}", stats.log_line()).map_err(io)?;
        history.push(stats);

        if config.eval_every == 0 || valid.is_empty() || epoch % config.eval_every != 0 {
            continue;
        }
        let recall = evaluate(&params, hp, valid, &[20], false)?.recall(20);
        validation.push((epoch, recall));
        if best.as_ref().is_none_or(|(r, _, _)| recall > *r) {
            best = Some((recall, epoch, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                break;
            }
        }
    }

    let last_epoch = history.len();
    let (params, best_epoch) = match best {
        Some((_, e, p)) => (p, e),
        None => (params, last_epoch),
    };
    if let Some(path) = &config.checkpoint_path {
        checkpoint::save(path, &params)?;
    }
    Ok(FitResult {
        params,
        history,
        validation,
        best_epoch,
        skipped_sequences,
    })
}
