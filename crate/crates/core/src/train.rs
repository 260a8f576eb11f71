//! Mini-batch Adam training on force labels.
//!
//! Per-sample gradients inside a batch are evaluated on the current rayon
//! pool and always reduced in sample order, so results do not depend on the
//! number of threads.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dataset::{sim_rng, DatasetSplit, SampleRecord};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::net::{NetType, ParamSet, WeightSet};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.005,
            batch_size: 128,
            epochs: 300,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParams("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidParams("batch_size and epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidParams("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::InvalidParams("adam_eps must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// MSE of the initial weights over the training set.
    pub initial_train_mse: f64,
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub optimizer_steps: usize,
    pub final_weights_digest: String,
    pub wall_clock: Duration,
}

impl TrainReport {
    pub fn final_train_mse(&self) -> f64 {
        *self.train_mse.last().expect("at least one epoch")
    }

    pub fn final_val_mse(&self) -> f64 {
        *self.val_mse.last().expect("at least one epoch")
    }

    pub fn min_train_mse(&self) -> f64 {
        self.train_mse.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_val_mse(&self) -> f64 {
        self.val_mse.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `epoch,train_mse,val_mse`, epochs counted from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,val_mse\n");
        for (i, (t, v)) in self.train_mse.iter().zip(&self.val_mse).enumerate() {
            let _ = writeln!(out, "{},{:e},{:e}", i + 1, t, v);
        }
        out
    }
}

/// Mean over all scalar force components of the squared error.
pub fn mse_loss(predictions: &[Vec2], labels: &[Vec2]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("mse_loss needs at least one sample"));
    }
    let sum: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(p, l)| (*p - *l).norm_sq())
        .sum();
    Ok(sum / (2 * predictions.len()) as f64)
}

/// First and second moment estimates with the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<P> {
    pub m: P,
    pub v: P,
    pub t: usize,
}

impl<P: ParamSet> AdamState<P> {
    pub fn new(like: &P) -> Self {
        AdamState {
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update; advances `state.t` first.
pub fn adam_step<P: ParamSet>(
    weights: &mut P,
    grads: &P,
    state: &mut AdamState<P>,
    config: &TrainConfig,
) -> Result<()> {
    for (name, g) in grads.tensors() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { name });
        }
    }
    state.t += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let g_all = grads.tensors();
    let mut m_all = state.m.tensors_mut();
    let mut v_all = state.v.tensors_mut();
    for (((_, w), (_, g)), ((_, m), (_, v))) in weights
        .tensors_mut()
        .into_iter()
        .zip(g_all)
        .zip(m_all.iter_mut().zip(v_all.iter_mut()))
    {
        for i in 0..w.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            w[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
        }
    }
    Ok(())
}

fn tag_sample(err: Error, record: &SampleRecord) -> Error {
    match err {
        Error::ExponentOverflow { sample, exponent } => Error::ExponentOverflow {
            sample: format!("traj {} t={} ({sample})", record.traj_id, record.t),
            exponent,
        },
        other => other,
    }
}

/// Mean per-sample gradient of `0.5 |f - label|^2` over `batch`, plus the
/// batch MSE.
pub fn batch_gradient(weights: &WeightSet, batch: &[&SampleRecord]) -> Result<(WeightSet, f64)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let per_sample: Vec<(Vec2, WeightSet)> = batch
        .par_iter()
        .map(|r| {
            weights
                .backward(&r.input, r.label)
                .map(|(f, g)| (f - r.label, g))
                .map_err(|e| tag_sample(e, r))
        })
        .collect::<Result<_>>()?;
    let mut grad = weights.zeros_like();
    let mut sq = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (residual, g) in &per_sample {
        grad.add_scaled(g, scale);
        sq += residual.norm_sq();
    }
    Ok((grad, sq / (2 * batch.len()) as f64))
}

pub fn predict_all(weights: &WeightSet, records: &[SampleRecord]) -> Result<Vec<Vec2>> {
    records
        .par_iter()
        .map(|r| weights.forward(&r.input).map_err(|e| tag_sample(e, r)))
        .collect()
}

/// MSE of `weights` over `records`, reduced in record order.
pub fn evaluate_mse(weights: &WeightSet, records: &[SampleRecord]) -> Result<f64> {
    let preds = predict_all(weights, records)?;
    let labels: Vec<Vec2> = records.iter().map(|r| r.label).collect();
    mse_loss(&preds, &labels)
}

/// Initialises and trains `net` on `dataset.train`, scoring `dataset.val`
/// after every epoch.
pub fn train(net: NetType, dataset: &DatasetSplit, config: &TrainConfig) -> Result<(WeightSet, TrainReport)> {
    config.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if dataset.val.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    match dataset.net_type() {
        Some(t) if t == net => {}
        Some(t) => {
            return Err(Error::InvalidParams(format!(
                "dataset holds {} samples, cannot train {}",
                t.as_str(),
                net.as_str()
            )))
        }
        None => return Err(Error::Empty("dataset")),
    }
    let n = dataset.window_len().expect("non-empty dataset");
    let mut weights = WeightSet::init(net, n, &mut sim_rng(config.seed, 0));
    let (weights_out, report) = train_from(&mut weights, dataset, config)?;
    Ok((weights_out, report))
}

/// Continues training from the given weights.
pub fn train_from(
    weights: &mut WeightSet,
    dataset: &DatasetSplit,
    config: &TrainConfig,
) -> Result<(WeightSet, TrainReport)> {
    config.validate()?;
    let started = Instant::now();
    let mut shuffle_rng = sim_rng(config.seed, 1);
    let mut adam = AdamState::new(&*weights);
    let initial = evaluate_mse(weights, &dataset.train)?;
    let mut train_mse = Vec::with_capacity(config.epochs);
    let mut val_mse = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&SampleRecord> = chunk.iter().map(|&i| &dataset.train[i]).collect();
            let (grad, _) = batch_gradient(weights, &batch)?;
            adam_step(weights, &grad, &mut adam, config)?;
        }
        let tr = evaluate_mse(weights, &dataset.train)?;
        let va = evaluate_mse(weights, &dataset.val)?;
        if !tr.is_finite() || tr > 10.0 * initial {
            return Err(Error::Diverged {
                epoch,
                mse: tr,
                initial,
            });
        }
        if epoch == 1 || epoch % 10 == 0 || epoch == config.epochs {
            info!("epoch {epoch}: train MSE {tr:.6e}, val MSE {va:.6e}");
        }
        train_mse.push(tr);
        val_mse.push(va);
    }
    let report = TrainReport {
        initial_train_mse: initial,
        train_mse,
        val_mse,
        optimizer_steps: adam.t,
        final_weights_digest: weights.digest(),
        wall_clock: started.elapsed(),
    };
    Ok((weights.clone(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Net1Weights, WINDOW_LEN};

    #[test]
    fn mse_examples() {
        let a = [Vec2::new(1.0, 2.0), Vec2::new(-3.0, 0.5)];
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(mse_loss(&[Vec2::new(3.0, 4.0)], &[Vec2::ZERO]).unwrap(), 12.5);
        let scaled: Vec<Vec2> = a.iter().map(|v| *v * 3.0).collect();
        let base = mse_loss(&a, &[Vec2::ZERO; 2]).unwrap();
        let s = mse_loss(&scaled, &[Vec2::ZERO; 2]).unwrap();
        assert!((s - 9.0 * base).abs() < 1e-12 * s);
        assert!(mse_loss(&[], &[]).is_err());
        assert!(mse_loss(&a, &a[..1]).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let cfg = TrainConfig::default();
        let mut w = Net1Weights::zeros(WINDOW_LEN);
        let mut g = w.zeros_like();
        for (_, t) in g.tensors_mut() {
            t.fill(1.0);
        }
        let mut state = AdamState::new(&w);
        adam_step(&mut w, &g, &mut state, &cfg).unwrap();
        let expected = 0.005 / (1.0 + 1e-8);
        for (_, t) in w.tensors() {
            for v in t {
                assert!((v + expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let cfg = TrainConfig::default();
        let mut rng = sim_rng(1, 0);
        let mut w = Net1Weights::init(WINDOW_LEN, &mut rng);
        let before = w.clone();
        let g = w.zeros_like();
        let mut state = AdamState::new(&w);
        for _ in 0..3 {
            adam_step(&mut w, &g, &mut state, &cfg).unwrap();
        }
        assert_eq!(w, before);
    }

    #[test]
    fn adam_rejects_nonfinite_gradient() {
        let cfg = TrainConfig::default();
        let mut w = Net1Weights::zeros(WINDOW_LEN);
        let mut g = w.zeros_like();
        g.w_vel_s[1] = f64::NAN;
        let mut state = AdamState::new(&w);
        let err = adam_step(&mut w, &g, &mut state, &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { name: "w_vel_s" }));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }
}
