//! Mini-batch AdamW with a reduce-on-plateau schedule.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Features, Sample, N_CLASSES};
use crate::error::{Error, Result};
use crate::model::{argmax, loss};

/// Validation loss above this counts as divergence.
pub const DIVERGENCE_LOSS: f64 = 50.0;

pub trait Classifier {
    fn logits(&self, x: &Features) -> Result<[f64; N_CLASSES]>;

    fn predict(&self, x: &Features) -> Result<u8> {
        Ok(argmax(&self.logits(x)?))
    }
}

/// A classifier whose parameters live in one flat vector.
pub trait Trainable: Classifier {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
    /// Mean-over-batch gradient (same layout as `params`) and mean loss.
    fn batch_gradient(&self, batch: &[&Sample]) -> Result<(Vec<f64>, f64)>;
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Self {
            first: vec![0.0; len],
            second: vec![0.0; len],
        }
    }
}

/// One AdamW update at step `t >= 1` with decoupled weight decay:
/// `p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * p`.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    moments: &mut Moments,
    t: u64,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if grads.len() != params.len()
        || moments.first.len() != params.len()
        || moments.second.len() != params.len()
    {
        return Err(Error::ShapeMismatch(format!(
            "params {}, grads {}, moments {}/{}",
            params.len(),
            grads.len(),
            moments.first.len(),
            moments.second.len()
        )));
    }
    if t == 0 {
        return Err(Error::Config("AdamW step counter starts at 1".into()));
    }
    let bc1 = 1.0 - BETA1.powi(t as i32);
    let bc2 = 1.0 - BETA2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        let m = BETA1 * moments.first[i] + (1.0 - BETA1) * g;
        let v = BETA2 * moments.second[i] + (1.0 - BETA2) * g * g;
        moments.first[i] = m;
        moments.second[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        let p = params[i];
        params[i] = p - lr * m_hat / (v_hat.sqrt() + EPSILON) - lr * weight_decay * p;
    }
    Ok(())
}

/// Multiplies the learning rate by `factor` once the monitored loss has gone
/// `patience` consecutive epochs without improving on its best by `threshold`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    threshold: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr0: f64, factor: f64, patience: usize) -> Self {
        Self {
            lr: lr0,
            factor,
            patience,
            threshold: 1e-4,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records one epoch's loss and returns the learning rate for the next.
    pub fn step(&mut self, loss: f64) -> f64 {
        if loss.is_finite() && loss < self.best - self.threshold {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr *= self.factor;
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr0: f64,
    pub weight_decay: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            max_epochs: 100,
            lr0: 0.02,
            weight_decay: 1e-4,
            plateau_factor: 0.5,
            plateau_patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::Config(format!(
                "plateau factor must be in (0, 1), got {}",
                self.plateau_factor
            )));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.lr0)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub diverged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Prune,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainStatus {
    Completed,
    Pruned,
    Diverged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochMetrics>,
    pub status: TrainStatus,
}

/// Mean loss and accuracy (argmax, lowest index on ties).
pub fn evaluate<M: Classifier + ?Sized>(model: &M, dataset: &Dataset) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    let mut correct = 0usize;
    for s in dataset {
        let logits = model.logits(&s.features)?;
        total += loss(&logits, s.label);
        if argmax(&logits) == s.label {
            correct += 1;
        }
    }
    let m = dataset.len() as f64;
    Ok((total / m, correct as f64 / m))
}

/// Runs up to `config.max_epochs` epochs. After each epoch the observer may
/// prune the run; a non-finite loss or a validation loss above
/// [`DIVERGENCE_LOSS`] stops it with [`TrainStatus::Diverged`].
pub fn train<M, F>(
    model: &mut M,
    train_set: &Dataset,
    val_set: &Dataset,
    config: &TrainConfig,
    mut observer: F,
) -> Result<TrainOutcome>
where
    M: Trainable + ?Sized,
    F: FnMut(&EpochMetrics) -> Decision,
{
    config.validate()?;
    let mut history = Vec::new();
    if config.max_epochs == 0 {
        return Ok(TrainOutcome {
            history,
            status: TrainStatus::Completed,
        });
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = model.params();
    let mut moments = Moments::zeros(params.len());
    let mut sched = PlateauScheduler::new(config.lr0, config.plateau_factor, config.plateau_patience);
    let mut step = 0u64;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let samples = train_set.samples();

    for epoch in 1..=config.max_epochs {
        let lr = sched.lr();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (grads, batch_loss) = model.batch_gradient(&batch)?;
            loss_sum += batch_loss * batch.len() as f64;
            step += 1;
            adamw_step(&mut params, &grads, &mut moments, step, lr, config.weight_decay)?;
            model.set_params(&params)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_acc) = evaluate(&*model, val_set)?;
        let diverged =
            !train_loss.is_finite() || !val_loss.is_finite() || val_loss > DIVERGENCE_LOSS;
        let metrics = EpochMetrics {
            epoch,
            train_loss,
            val_loss,
            val_acc,
            lr,
            diverged,
        };
        history.push(metrics);
        if diverged {
            return Ok(TrainOutcome {
                history,
                status: TrainStatus::Diverged,
            });
        }
        sched.step(train_loss);
        let decision = observer(history.last().unwrap());
        if decision == Decision::Prune && epoch < config.max_epochs {
            return Ok(TrainOutcome {
                history,
                status: TrainStatus::Pruned,
            });
        }
    }
    Ok(TrainOutcome {
        history,
        status: TrainStatus::Completed,
    })
}

pub fn write_metrics_csv<W: Write>(mut out: W, history: &[EpochMetrics]) -> Result<()> {
    writeln!(out, "epoch,train_loss,val_loss,val_acc,lr")?;
    for m in history {
        writeln!(
            out,
            "{},{},{},{},{}",
            m.epoch, m.train_loss, m.val_loss, m.val_acc, m.lr
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_no_decay_is_fixed_point() {
        let mut p = vec![1.0, -2.0, 3.5];
        let mut m = Moments::zeros(3);
        for t in 1..=5 {
            adamw_step(&mut p, &[0.0; 3], &mut m, t, 0.1, 0.0).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = g, v_hat = g^2 at t = 1, so the step is lr * g / (|g| + eps)
        let mut p = vec![1.0];
        let mut m = Moments::zeros(1);
        adamw_step(&mut p, &[1.0], &mut m, 1, 0.1, 0.0).unwrap();
        let expected = 1.0 - 0.1 * 1.0 / (1.0 + EPSILON);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn decay_only_is_geometric() {
        let mut p = vec![2.0];
        let mut m = Moments::zeros(1);
        for t in 1..=10 {
            adamw_step(&mut p, &[0.0], &mut m, t, 0.1, 0.1).unwrap();
            assert!((p[0] - 2.0 * 0.99f64.powi(t as i32)).abs() < 1e-14);
        }
    }

    #[test]
    fn shape_and_step_errors() {
        let mut m = Moments::zeros(2);
        assert!(adamw_step(&mut [0.0; 2], &[0.0; 3], &mut m, 1, 0.1, 0.0).is_err());
        assert!(adamw_step(&mut [0.0; 2], &[0.0; 2], &mut m, 0, 0.1, 0.0).is_err());
    }

    #[test]
    fn plateau_halves_twice_in_21_flat_epochs() {
        let mut s = PlateauScheduler::new(0.02, 0.5, 10);
        let mut lr = s.lr();
        for _ in 0..21 {
            lr = s.step(1.0);
        }
        assert_eq!(lr, 0.02 * 0.25);
    }

    #[test]
    fn plateau_resets_on_improvement() {
        let mut s = PlateauScheduler::new(1.0, 0.5, 3);
        for loss in [1.0, 1.0, 1.0, 0.5, 0.5, 0.5] {
            s.step(loss);
        }
        assert_eq!(s.lr(), 1.0);
        // below the 1e-4 improvement threshold
        s.step(0.49995);
        assert_eq!(s.lr(), 0.5);
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { plateau_factor: 1.0, ..Default::default() },
            TrainConfig { lr0: 0.0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
        assert!(TrainConfig::default().validate().is_ok());
    }
}
