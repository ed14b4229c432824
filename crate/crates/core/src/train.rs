//! Minibatch training: adaptive moment estimation over the trainable
//! parameters with deterministic shuffling, per-step dropout streams, and
//! post-step running-statistic updates for the normalization layers.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use subact_tensor::rng::{derive_seed, hash_str, rng_from};
use subact_tensor::{ParamId, ParamStore};

use crate::config::{LossWeights, OptimizerSpec};
use crate::data::{Dataset, Sample};
use crate::error::CoreError;
use crate::labels::LabelMap;
use crate::model::SasiModel;
use crate::nn::{apply_bn_updates, ForwardCtx};
use crate::objectives::{recognition_loss, total_loss};
use crate::oracle::SegmentationOracle;

/// Adam optimizer state. Moment buffers are allocated lazily per parameter
/// and keyed by id, so the update order is deterministic.
pub struct Adam {
    spec: OptimizerSpec,
    m: BTreeMap<ParamId, Vec<f64>>,
    v: BTreeMap<ParamId, Vec<f64>>,
    steps: usize,
}

impl Adam {
    pub fn new(spec: &OptimizerSpec) -> Result<Adam, CoreError> {
        spec.validate()?;
        Ok(Adam { spec: spec.clone(), m: BTreeMap::new(), v: BTreeMap::new(), steps: 0 })
    }

    /// Number of parameter updates applied so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Applies one bias-corrected update from the given per-parameter
    /// gradients. Parameters without a gradient entry are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<ParamId, Vec<f64>>) {
        self.steps += 1;
        let t = self.steps as i32;
        let bc1 = 1.0 - self.spec.beta1.powi(t);
        let bc2 = 1.0 - self.spec.beta2.powi(t);
        for (&id, g) in grads {
            let m = self.m.entry(id).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(id).or_insert_with(|| vec![0.0; g.len()]);
            let w = store.value_mut(id);
            for i in 0..g.len() {
                m[i] = self.spec.beta1 * m[i] + (1.0 - self.spec.beta1) * g[i];
                v[i] = self.spec.beta2 * v[i] + (1.0 - self.spec.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] -= self.spec.learning_rate * m_hat / (v_hat.sqrt() + self.spec.eps);
            }
        }
    }
}

/// What one training run produced.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean loss per epoch. Entry 0 is the initial eval-mode loss before any
    /// update; entry e+1 averages the train-mode step losses of epoch e.
    pub loss_curve: Vec<f64>,
    /// Total optimizer steps taken.
    pub steps: usize,
}

/// Mean total loss over a dataset in eval mode. Leaves the model untouched.
pub fn mean_loss(
    model: &SasiModel,
    data: &Dataset,
    map: &LabelMap,
    oracle: &SegmentationOracle,
    weights: &LossWeights,
    ratio: f64,
    batch_size: usize,
) -> Result<f64, CoreError> {
    if data.samples.is_empty() {
        return Err(CoreError::Data("cannot score an empty dataset".into()));
    }
    let with_semantic = weights.lambda2 > 0.0;
    let mut total = 0.0;
    for chunk in data.samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let batch = crate::model::prepare_batch(&refs, &model.config, map, oracle, ratio)?;
        let leaves = model.leaves();
        let pass = model.forward(&leaves, &batch, with_semantic, &mut ForwardCtx::eval())?;
        let recog = recognition_loss(&pass.logits, &batch.labels)?;
        let sem = pass.semantic.map(|(t, _)| t);
        let loss = total_loss(&recog, sem.as_ref(), weights)?;
        total += loss.item()? * chunk.len() as f64;
    }
    Ok(total / data.samples.len() as f64)
}

/// Trains the model in place at a fixed observation ratio.
///
/// Each epoch shuffles the sample order with a stream derived from
/// `(seed, epoch)` and each step draws its dropout noise from a stream
/// derived from `(seed, epoch, step)`, so identical inputs reproduce the
/// run bit for bit. A non-finite loss aborts with the name of the first
/// operation that produced a non-finite value.
pub fn train_model(
    model: &mut SasiModel,
    data: &Dataset,
    map: &LabelMap,
    oracle: &SegmentationOracle,
    opt: &OptimizerSpec,
    weights: &LossWeights,
    ratio: f64,
    seed: u64,
) -> Result<TrainReport, CoreError> {
    if data.samples.is_empty() {
        return Err(CoreError::Data("cannot train on an empty dataset".into()));
    }
    weights.validate()?;
    let mut adam = Adam::new(opt)?;
    let with_semantic = weights.lambda2 > 0.0;
    let n = data.samples.len();
    let mut curve = vec![mean_loss(model, data, map, oracle, weights, ratio, opt.batch_size)?];

    for epoch in 0..opt.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_from(&[seed, hash_str("shuffle"), epoch as u64]));
        let mut epoch_loss = 0.0;
        for (step, chunk) in order.chunks(opt.batch_size.max(1)).enumerate() {
            let samples: Vec<&Sample> = chunk.iter().map(|&i| &data.samples[i]).collect();
            let batch = crate::model::prepare_batch(&samples, &model.config, map, oracle, ratio)?;
            let leaves = model.leaves();
            let step_seed = derive_seed(&[seed, hash_str("dropout"), epoch as u64, step as u64]);
            let mut ctx = ForwardCtx::train(step_seed);
            let pass = model.forward(&leaves, &batch, with_semantic, &mut ctx)?;
            let recog = recognition_loss(&pass.logits, &batch.labels)?;
            let sem = pass.semantic.map(|(t, _)| t);
            let loss = total_loss(&recog, sem.as_ref(), weights)?;
            if !loss.is_finite() {
                let op = loss
                    .first_non_finite_op()
                    .unwrap_or_else(|| "total loss".into());
                return Err(CoreError::Data(format!(
                    "non-finite loss at epoch {epoch} step {step}; first non-finite op: {op}"
                )));
            }
            epoch_loss += loss.item()? * samples.len() as f64;
            loss.backward()?;
            let grads: BTreeMap<ParamId, Vec<f64>> = leaves
                .iter()
                .filter_map(|(&id, leaf)| leaf.grad().map(|g| (id, g)))
                .collect();
            adam.step(model.store_mut(), &grads);
            apply_bn_updates(model.store_mut(), &ctx.bn_updates);
        }
        curve.push(epoch_loss / n as f64);
    }
    Ok(TrainReport { loss_curve: curve, steps: adam.steps() })
}
