//! Mini-batch training shared by the unrolled networks and the FCN baselines.
//!
//! The loss is always the mean squared error between predicted and true
//! spectra. Updates use Adam with bias correction and global-norm gradient
//! clipping; the batch order comes from a seeded Fisher–Yates shuffle per
//! epoch, so a fixed seed gives bitwise-identical results.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::rse;
use crate::rng::SeededRng;
use crate::synthdata::Dataset;

/// Anything that maps Green's functions to spectra.
pub trait SpectralPredictor {
    /// Columns of `g` are samples; returns one spectrum per column.
    fn predict_batch(&self, g: ArrayView2<f64>) -> Result<Array2<f64>>;

    fn predict(&self, g: ArrayView1<f64>) -> Result<Array1<f64>> {
        let out = self.predict_batch(g.insert_axis(Axis(1)))?;
        Ok(out.column(0).to_owned())
    }

    fn parameter_count(&self) -> usize;
    fn n_tau(&self) -> usize;
    fn n_omega(&self) -> usize;
}

pub trait GradientTensors {
    /// Flat views in the same order as [`Trainable::tensors_mut`].
    fn tensors(&self) -> Vec<&[f64]>;

    fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

pub trait Trainable: SpectralPredictor + Clone {
    type Grad: GradientTensors;

    /// Batch loss and its gradient.
    fn loss_and_grad(&self, g: ArrayView2<f64>, a_true: ArrayView2<f64>) -> Result<(f64, Self::Grad)>;

    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    /// Learning-rate multiplier per tensor, in [`Trainable::tensors_mut`]
    /// order; `None` means 1 everywhere.
    fn lr_scales(&self, _config: &TrainConfig) -> Option<Vec<f64>> {
        None
    }

    /// Restores parameter constraints after an update.
    fn project(&mut self) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied after every epoch.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub clip_norm: f64,
    /// Multiplier on the learning rate of the soft-thresholds of unrolled
    /// networks, whose scale is far below that of the weight matrices.
    pub threshold_lr_scale: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            lr_decay: 1.0,
            batch_size: 64,
            epochs: 200,
            seed: 7,
            clip_norm: 10.0,
            threshold_lr_scale: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.lr_decay > 0.0
            && self.batch_size > 0
            && self.epochs > 0
            && self.clip_norm > 0.0
            && self.threshold_lr_scale > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training config {self:?}")))
        }
    }

    /// One-line `key=value` rendering stored in checkpoints and table headers.
    pub fn describe(&self) -> String {
        format!(
            "loss=mse optimizer=adam learning_rate={:?} lr_decay={:?} batch_size={} epochs={} seed={} clip_norm={:?} threshold_lr_scale={:?} beta1={:?} beta2={:?} epsilon={:?}",
            self.learning_rate,
            self.lr_decay,
            self.batch_size,
            self.epochs,
            self.seed,
            self.clip_norm,
            self.threshold_lr_scale,
            self.beta1,
            self.beta2,
            self.epsilon
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_rse: f64,
}

/// Final test error did not improve on the untrained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingFailure {
    pub initial_test_rse: f64,
    pub final_test_rse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub curve: Vec<EpochRecord>,
    pub initial_test_rse: f64,
    pub failure: Option<TrainingFailure>,
}

impl<M> TrainOutcome<M> {
    pub fn final_test_rse(&self) -> f64 {
        self.curve.last().map_or(self.initial_test_rse, |r| r.test_rse)
    }
}

/// Mean RSE of `model` over a dataset (noisy inputs against true spectra).
pub fn mean_rse<M: SpectralPredictor + ?Sized>(model: &M, data: &Dataset) -> Result<f64> {
    let pred = model.predict_batch(data.greens_matrix().view())?;
    let total: f64 = data
        .samples
        .iter()
        .enumerate()
        .map(|(j, s)| rse(pred.column(j), s.spectrum.view()))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    Ok(total / data.len() as f64)
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    scales: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new<M: Trainable>(model: &mut M, cfg: &TrainConfig) -> Self {
        let shapes: Vec<usize> = model.tensors_mut().iter().map(|t| t.len()).collect();
        let scales = model.lr_scales(cfg).unwrap_or_else(|| vec![1.0; shapes.len()]);
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            scales,
            step: 0,
        }
    }

    fn update<M: Trainable>(&mut self, model: &mut M, grads: &M::Grad, lr: f64, cfg: &TrainConfig) {
        let norm = grads.global_norm();
        let clip = if norm > cfg.clip_norm { cfg.clip_norm / norm } else { 1.0 };
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        let step_size = lr * bc2.sqrt() / bc1;
        let eps = cfg.epsilon * bc2.sqrt();
        for ((((p, g), m), v), &scale) in model
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
            .zip(&self.scales)
        {
            let step_size = step_size * scale;
            for i in 0..p.len() {
                let gi = g[i] * clip;
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                p[i] -= step_size * m[i] / (v[i].sqrt() + eps);
            }
        }
        model.project();
    }
}

/// Trains `model` on `train_set`, reporting the mean test RSE after every epoch.
///
/// A run whose final test RSE does not beat the untrained model is returned
/// with [`TrainOutcome::failure`] set. A non-finite loss aborts with
/// [`Error::Diverged`].
pub fn train<M: Trainable>(model: M, train_set: &Dataset, test_set: &Dataset, config: &TrainConfig) -> Result<TrainOutcome<M>> {
    config.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::Config("training and test sets must be nonempty".into()));
    }
    for d in [train_set, test_set] {
        if d.grid.n_tau != model.n_tau() || d.grid.n_omega != model.n_omega() {
            return Err(Error::shape(
                "train",
                format!("grids with N_tau={}, N_omega={}", model.n_tau(), model.n_omega()),
                format!("N_tau={}, N_omega={}", d.grid.n_tau, d.grid.n_omega),
            ));
        }
    }
    let mut model = model;
    let inputs = train_set.greens_matrix();
    let targets = train_set.spectra_matrix();
    let initial_test_rse = mean_rse(&model, test_set)?;
    let mut adam = Adam::new(&mut model, config);
    let mut rng = SeededRng::new(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    let mut lr = config.learning_rate;

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let g = inputs.select(Axis(1), batch);
            let a = targets.select(Axis(1), batch);
            let (loss, grads) = model.loss_and_grad(g.view(), a.view())?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    last_finite_epoch: curve.last().map(|r: &EpochRecord| r.epoch),
                });
            }
            loss_sum += loss * batch.len() as f64;
            adam.update(&mut model, &grads, lr, config);
        }
        let test_rse = mean_rse(&model, test_set)?;
        curve.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            test_rse,
        });
        lr *= config.lr_decay;
    }

    let final_test_rse = curve.last().map_or(initial_test_rse, |r| r.test_rse);
    let failure = (!(final_test_rse < initial_test_rse)).then_some(TrainingFailure {
        initial_test_rse,
        final_test_rse,
    });
    Ok(TrainOutcome {
        model,
        curve,
        initial_test_rse,
        failure,
    })
}

/// Learning curve as comma-separated rows with a `#` header.
pub fn curve_table(curve: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,test_rse\n");
    for r in curve {
        out.push_str(&format!(
            "{},{},{}\n",
            r.epoch,
            crate::table::fmt17(r.train_loss),
            crate::table::fmt17(r.test_rse)
        ));
    }
    out
}
