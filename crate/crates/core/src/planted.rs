//! End-to-end run on planted synthetic data: generate, split, train,
//! evaluate and diagnose. Used by the examples and the acceptance suite.

use crate::data::{generate_synthetic, split, SplitConfig, SplitTag, SyntheticSpec};
use crate::diagnostics::{diagnose, DiagnosticsConfig, DiagnosticsReport};
use crate::error::Result;
use crate::eval::{evaluate, EvalReport};
use crate::model::{HyperParams, ModelParams};
use crate::trainer::{fit, TrainConfig};

/// Desk-scale model for the planted set, with the backward-flow weights
/// picked on it (coefficients from the 0.01..10 grid, softer temperature,
/// more sampled contrast negatives than the sequence length).
pub fn planted_hyper_params() -> HyperParams {
    HyperParams {
        d: 32,
        d_h: 64,
        d_b: 16,
        n_z: 2,
        n_x: 20,
        s_neg: 64,
        tau: 0.2,
        lambda_cl: 1.0,
        lambda_att: 0.1,
        lambda_ct: 1.0,
        s_seq_neg: Some(30),
        ..HyperParams::default()
    }
}

/// A fixed 30 epochs, no validation passes.
pub fn planted_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 30,
        eval_every: 0,
        seed,
        ..TrainConfig::default()
    }
}

/// The same model with every backward flow switched off.
pub fn without_backward_flows(hp: &HyperParams) -> HyperParams {
    HyperParams {
        lambda_cl: 0.0,
        lambda_att: 0.0,
        lambda_ct: 0.0,
        ..hp.clone()
    }
}

#[derive(Clone, Debug)]
pub struct PlantedOutcome {
    pub params: ModelParams,
    pub test: EvalReport,
    pub diagnostics: DiagnosticsReport,
    /// Mean next-item loss of the first and last epoch.
    pub first_rec: f64,
    pub last_rec: f64,
    pub best_epoch: usize,
}

/// Generates `spec`, splits and trains with `train.seed`, then reports
/// metrics on held-out users. With validation passes on, the validation
/// users pick the epoch and only test users are scored; with them off, no
/// held-out user influences training and both groups are scored.
pub fn run_planted(spec: &SyntheticSpec, hp: &HyperParams, train: &TrainConfig) -> Result<PlantedOutcome> {
    let data = generate_synthetic(spec)?;
    let split = split(&data.log, &SplitConfig::default(), train.seed)?;
    let valid = split.held_out(SplitTag::Valid);
    let mut test = split.held_out(SplitTag::Test);
    if train.eval_every == 0 {
        test.extend(valid.iter().cloned());
    }
    let result = fit(&split.train_sequences(), data.log.num_items(), &valid, hp, train, &mut std::io::sink())?;
    let report = evaluate(&result.params, hp, &test, &[20, 50], false)?;
    let diag_cfg = DiagnosticsConfig {
        seed: train.seed,
        ..DiagnosticsConfig::default()
    };
    let (diagnostics, _) = diagnose(&result.params, hp, &test, &diag_cfg)?;
    Ok(PlantedOutcome {
        test: report,
        diagnostics,
        first_rec: result.history.first().map_or(f64::NAN, |s| s.losses.rec),
        last_rec: result.history.last().map_or(f64::NAN, |s| s.losses.rec),
        best_epoch: result.best_epoch,
        params: result.params,
    })
}

/// Median of a non-empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
