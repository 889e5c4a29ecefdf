//! Minibatch training and held-out evaluation.
//!
//! Training shuffles the row index every epoch and walks it in batches; the
//! final short batch is kept. Evaluation reports two scale-free errors over
//! a held-out set, each normalizing per-column residuals by the spread of
//! that set's derivative targets:
//!
//! ```text
//!     nmae = mean_rows sum_j |res_j| / sigma_j
//!     nmse = mean_rows sum_j (res_j / sigma_j)^2
//! ```
//!
//! Summing (not averaging) over columns makes "predict the column mean"
//! score exactly `n` in nmse, a useful reference plateau for untrained
//! models.

use crate::adam::Adam;
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::model::{IdentModel, Workspace};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Seed for the per-epoch shuffle stream.
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults for a dataset with `rows` samples: batches of up to 256.
    pub fn for_rows(epochs: u64, rows: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size: rows.clamp(1, 256),
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub steps: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Optimize the model in place. Returns step statistics; fails on
/// non-finite loss or gradient without silently continuing.
pub fn train(model: &mut IdentModel, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.epochs == 0 {
        return Err(Error::invalid("training needs at least one epoch"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::invalid("learning rate must be positive and finite"));
    }
    if data.n != model.n || data.m != model.m {
        return Err(Error::invalid("dataset dimensions do not match model"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.rows).collect();
    let mut ws = model.workspace();
    let mut grad = vec![0.0; model.param_count()];
    let mut opt = Adam::new(model.param_count(), cfg.lr).with_betas(cfg.beta1, cfg.beta2, cfg.eps);

    let mut initial_loss = f64::NAN;
    let mut final_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let loss = model.loss_and_grad(data, batch, &mut ws, &mut grad)?;
            if epoch == 0 && initial_loss.is_nan() {
                initial_loss = loss;
            }
            final_loss = loss;
            opt.step(&mut model.theta, &grad);
        }
    }
    if model.theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NumericalFailure("parameters became non-finite".into()));
    }
    Ok(TrainOutcome { steps: opt.steps_taken(), initial_loss, final_loss })
}

fn check_metric_args(pred: &[f64], truth: &[f64], cols: usize, sigma: &[f64]) -> Result<usize> {
    if cols == 0 || sigma.len() != cols {
        return Err(Error::invalid("sigma length must equal the column count"));
    }
    if pred.len() != truth.len() || !pred.len().is_multiple_of(cols) || pred.is_empty() {
        return Err(Error::invalid("prediction and target shapes do not match"));
    }
    if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::invalid("sigma entries must be positive and finite"));
    }
    Ok(pred.len() / cols)
}

/// Normalized mean absolute error over row-major `rows x cols` arrays.
pub fn nmae(pred: &[f64], truth: &[f64], cols: usize, sigma: &[f64]) -> Result<f64> {
    let rows = check_metric_args(pred, truth, cols, sigma)?;
    let mut acc = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            acc += (pred[r * cols + c] - truth[r * cols + c]).abs() / sigma[c];
        }
    }
    Ok(acc / rows as f64)
}

/// Normalized mean squared error over row-major `rows x cols` arrays.
pub fn nmse(pred: &[f64], truth: &[f64], cols: usize, sigma: &[f64]) -> Result<f64> {
    let rows = check_metric_args(pred, truth, cols, sigma)?;
    let mut acc = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let z = (pred[r * cols + c] - truth[r * cols + c]) / sigma[c];
            acc += z * z;
        }
    }
    Ok(acc / rows as f64)
}

/// Held-out scores plus the logged resource triple for one trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub nmae: f64,
    pub nmse: f64,
    /// Scalar parameter count.
    pub param_count: usize,
    /// Training compute: parameters times epochs times training rows.
    pub compute: f64,
}

/// Score a model on a held-out set. `epochs` and `trajectories` are the
/// training settings, used only for the compute figure
/// `p * epochs * trajectories * 1000`.
pub fn evaluate(
    model: &IdentModel,
    val: &Dataset,
    epochs: u64,
    trajectories: f64,
) -> Result<EvalReport> {
    if val.n != model.n || val.m != model.m {
        return Err(Error::invalid("validation dimensions do not match model"));
    }
    let mut ws: Workspace = model.workspace();
    let mut pred = vec![0.0; val.rows * val.n];
    let mut y = vec![0.0; val.m];
    for r in 0..val.rows {
        let at = r * val.n;
        model.predict_into(
            val.state_row(r),
            val.input_row(r),
            &mut ws,
            &mut pred[at..at + val.n],
            &mut y,
        );
    }
    let nmae_v = nmae(&pred, &val.derivs, val.n, &val.sigma)?;
    let nmse_v = nmse(&pred, &val.derivs, val.n, &val.sigma)?;
    if !(nmae_v.is_finite() && nmse_v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite validation metrics".into()));
    }
    let p = model.param_count();
    Ok(EvalReport {
        nmae: nmae_v,
        nmse: nmse_v,
        param_count: p,
        compute: p as f64 * epochs as f64 * trajectories * 1000.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::build_dataset;
    use crate::dynamics::PhSystem;
    use crate::model::{Arch, IdentModel, NormStats};
    use crate::seed::SeedTree;
    use crate::signal::SignalParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn metric_hand_examples() {
        // One row, two columns: residuals (1, 2), sigma (1, 2).
        let pred = [1.0, 2.0];
        let truth = [0.0, 0.0];
        let sigma = [1.0, 2.0];
        assert_eq!(nmae(&pred, &truth, 2, &sigma).unwrap(), 2.0);
        assert_eq!(nmse(&pred, &truth, 2, &sigma).unwrap(), 2.0);
        // Two rows averaging to 1.0: residual rows (2, 0).
        let pred = [2.0, 0.0];
        let truth = [0.0, 0.0];
        let sigma = [2.0];
        assert_eq!(nmae(&pred, &truth, 1, &sigma).unwrap(), 0.5);
        assert_eq!(nmse(&pred, &truth, 1, &sigma).unwrap(), 0.5);
    }

    #[test]
    fn metrics_are_scale_invariant() {
        let pred: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let truth: Vec<f64> = (0..30).map(|i| (i as f64 * 0.11).cos()).collect();
        let sigma = [0.7, 1.3, 0.2];
        let a = nmae(&pred, &truth, 3, &sigma).unwrap();
        let s = 17.0;
        let pred_s: Vec<f64> = pred.iter().map(|v| v * s).collect();
        let truth_s: Vec<f64> = truth.iter().map(|v| v * s).collect();
        let sigma_s: Vec<f64> = sigma.iter().map(|v| v * s).collect();
        let b = nmae(&pred_s, &truth_s, 3, &sigma_s).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs());
        let c = nmse(&pred, &truth, 3, &sigma).unwrap();
        let d = nmse(&pred_s, &truth_s, 3, &sigma_s).unwrap();
        assert!((c - d).abs() < 1e-12 * c.abs());
    }

    #[test]
    fn predicting_column_means_scores_nmse_equal_to_cols() {
        // With sigma taken from the same rows, the constant-mean predictor
        // has nmse exactly the column count.
        let ds = build_dataset(
            &PhSystem::ball(),
            0.1,
            10.0,
            0.01,
            &SignalParams::default(),
            &SeedTree::from_seed(0),
        )
        .unwrap();
        let mut mean = vec![0.0; ds.n];
        for r in 0..ds.rows {
            for j in 0..ds.n {
                mean[j] += ds.derivs[r * ds.n + j];
            }
        }
        for v in &mut mean {
            *v /= ds.rows as f64;
        }
        let pred: Vec<f64> = (0..ds.rows).flat_map(|_| mean.clone()).collect();
        let score = nmse(&pred, &ds.derivs, ds.n, &ds.sigma).unwrap();
        assert!((score - ds.n as f64).abs() < 1e-12, "{score}");
    }

    #[test]
    fn metric_preconditions() {
        assert!(nmae(&[1.0], &[1.0, 2.0], 1, &[1.0]).is_err());
        assert!(nmae(&[1.0], &[1.0], 1, &[0.0]).is_err());
        assert!(nmae(&[1.0], &[1.0], 2, &[1.0, 1.0]).is_err());
        assert!(nmse(&[], &[], 1, &[1.0]).is_err());
    }

    #[test]
    fn training_reduces_held_out_error() {
        let sys = PhSystem::ball();
        let sig = SignalParams::default();
        let train_ds =
            build_dataset(&sys, 2.0, 10.0, 0.01, &sig, &SeedTree::from_seed(1)).unwrap();
        let val_ds = build_dataset(&sys, 1.0, 10.0, 0.01, &sig, &SeedTree::from_seed(99)).unwrap();
        let norm = NormStats::from_dataset(&train_ds);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = IdentModel::build(Arch::Unstructured, 3, 1, 8, 2, norm, &mut rng).unwrap();
        let before = evaluate(&model, &val_ds, 1, 2.0).unwrap();
        let cfg = TrainConfig::for_rows(30, train_ds.rows, 7);
        let out = train(&mut model, &train_ds, &cfg).unwrap();
        let after = evaluate(&model, &val_ds, 30, 2.0).unwrap();
        assert_eq!(out.steps, 30 * 8); // 2000 rows in batches of 256 -> 8/epoch
        assert!(out.final_loss < out.initial_loss);
        assert!(
            after.nmae < 0.5 * before.nmae,
            "training barely helped: {} -> {}",
            before.nmae,
            after.nmae
        );
    }

    #[test]
    fn step_count_keeps_short_final_batch() {
        let sys = PhSystem::ball();
        let ds = build_dataset(
            &sys,
            0.01,
            10.0,
            0.01,
            &SignalParams::default(),
            &SeedTree::from_seed(2),
        )
        .unwrap();
        assert_eq!(ds.rows, 10);
        let norm = NormStats::from_dataset(&ds);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model = IdentModel::build(Arch::InputAffine, 3, 1, 2, 1, norm, &mut rng).unwrap();
        let cfg = TrainConfig { batch_size: 4, ..TrainConfig::for_rows(3, ds.rows, 0) };
        let out = train(&mut model, &ds, &cfg).unwrap();
        // ceil(10/4) = 3 steps per epoch.
        assert_eq!(out.steps, 9);
    }

    #[test]
    fn training_is_deterministic() {
        let sys = PhSystem::motor();
        let ds = build_dataset(
            &sys,
            0.5,
            10.0,
            0.01,
            &SignalParams::default(),
            &SeedTree::from_seed(3),
        )
        .unwrap();
        let norm = NormStats::from_dataset(&ds);
        let make = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut model =
                IdentModel::build(Arch::PortHamiltonian, 3, 2, 4, 2, norm.clone(), &mut rng)
                    .unwrap();
            train(&mut model, &ds, &TrainConfig::for_rows(5, ds.rows, 11)).unwrap();
            model.theta
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn invalid_training_configs_are_rejected() {
        let ds = build_dataset(
            &PhSystem::ball(),
            0.01,
            10.0,
            0.01,
            &SignalParams::default(),
            &SeedTree::from_seed(4),
        )
        .unwrap();
        let norm = NormStats::from_dataset(&ds);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = IdentModel::build(Arch::Unstructured, 3, 1, 2, 1, norm, &mut rng).unwrap();
        assert!(train(&mut model, &ds, &TrainConfig::for_rows(0, 10, 0)).is_err());
        let cfg = TrainConfig { batch_size: 0, ..TrainConfig::for_rows(1, 10, 0) };
        assert!(train(&mut model, &ds, &cfg).is_err());
        let cfg = TrainConfig { lr: f64::NAN, ..TrainConfig::for_rows(1, 10, 0) };
        assert!(train(&mut model, &ds, &cfg).is_err());
    }

    #[test]
    fn compute_formula_is_verbatim() {
        let ds = build_dataset(
            &PhSystem::ball(),
            0.05,
            10.0,
            0.01,
            &SignalParams::default(),
            &SeedTree::from_seed(5),
        )
        .unwrap();
        let norm = NormStats::from_dataset(&ds);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = IdentModel::build(Arch::Unstructured, 3, 1, 2, 1, norm, &mut rng).unwrap();
        let report = evaluate(&model, &ds, 4, 2.0).unwrap();
        let p = model.param_count() as f64;
        assert_eq!(report.compute, p * 4.0 * 2.0 * 1000.0);
    }
}
