//! Small parameterized layers shared by the model modules, built on the
//! tensor crate's `ParamStore`. Each layer stores parameter ids and rebuilds
//! its forward graph from the per-step leaf tensors, so gradient checks can
//! substitute probe values for any parameter.

use std::collections::BTreeMap;

use subact_tensor::{InitSpec, ParamId, ParamStore, Tensor, TensorError};

use crate::error::CoreError;

/// Leaf tensors for the trainable parameters of one forward/backward step,
/// keyed by parameter id.
pub type Leaves = BTreeMap<ParamId, Tensor>;

/// Builds fresh gradient-tracking leaves for the given parameters.
pub fn make_leaves(store: &ParamStore, ids: impl IntoIterator<Item = ParamId>) -> Leaves {
    ids.into_iter().map(|id| (id, store.leaf(id))).collect()
}

pub fn leaf(leaves: &Leaves, id: ParamId) -> Tensor {
    leaves
        .get(&id)
        .cloned()
        .expect("parameter leaf missing from the step's leaf set")
}

/// Batch-statistics update for one normalization layer, applied to the
/// running buffers after the optimizer step.
pub struct BnUpdate {
    pub mean_id: ParamId,
    pub var_id: ParamId,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Per-forward state: training/eval mode, a deterministic dropout stream,
/// and the batch-norm statistics gathered along the way.
pub struct ForwardCtx {
    pub training: bool,
    dropout_seed: u64,
    dropout_site: u64,
    pub bn_updates: Vec<BnUpdate>,
}

impl ForwardCtx {
    pub fn eval() -> ForwardCtx {
        ForwardCtx { training: false, dropout_seed: 0, dropout_site: 0, bn_updates: Vec::new() }
    }

    /// Training-mode context; `seed` must be unique per optimizer step so
    /// dropout masks differ across steps while staying reproducible.
    pub fn train(seed: u64) -> ForwardCtx {
        ForwardCtx { training: true, dropout_seed: seed, dropout_site: 0, bn_updates: Vec::new() }
    }

    fn next_dropout_seed(&mut self) -> [u64; 2] {
        self.dropout_site += 1;
        [self.dropout_seed, self.dropout_site]
    }

    pub fn dropout(&mut self, x: &Tensor, rate: f64) -> Result<Tensor, TensorError> {
        let parts = self.next_dropout_seed();
        x.dropout_seeded(rate, self.training, &parts)
    }
}

/// Affine map `x·W + b` over the last axis of `[rows, in_dim]`.
pub struct Affine {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Affine {
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        init: InitSpec,
        bias: bool,
        seed: u64,
    ) -> Result<Affine, CoreError> {
        let weight = store.add(&format!("{name}.weight"), &[in_dim, out_dim], init, seed)?;
        let bias = if bias {
            Some(store.add(&format!("{name}.bias"), &[out_dim], InitSpec::Zeros, seed)?)
        } else {
            None
        };
        Ok(Affine { weight, bias, in_dim, out_dim })
    }

    pub fn forward(&self, leaves: &Leaves, x: &Tensor) -> Result<Tensor, CoreError> {
        let y = x.matmul(&leaf(leaves, self.weight))?;
        Ok(match self.bias {
            Some(b) => y.add(&leaf(leaves, b))?,
            None => y,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.weight];
        ids.extend(self.bias);
        ids
    }
}

pub const NORM_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Layer normalization over the last axis with learned scale and shift.
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

impl LayerNorm {
    pub fn register(store: &mut ParamStore, name: &str, dim: usize, seed: u64) -> Result<LayerNorm, CoreError> {
        let gamma = store.add(&format!("{name}.gamma"), &[dim], InitSpec::Ones, seed)?;
        let beta = store.add(&format!("{name}.beta"), &[dim], InitSpec::Zeros, seed)?;
        Ok(LayerNorm { gamma, beta, dim })
    }

    pub fn forward(&self, leaves: &Leaves, x: &Tensor) -> Result<Tensor, CoreError> {
        Ok(x.layer_norm(&leaf(leaves, self.gamma), &leaf(leaves, self.beta), NORM_EPS)?)
    }
}

/// Batch normalization over the last axis of `[rows, features]`. Training
/// uses batch statistics and queues a running-buffer update; evaluation
/// normalizes with the stored running statistics.
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub features: usize,
}

impl BatchNorm {
    pub fn register(store: &mut ParamStore, name: &str, features: usize, seed: u64) -> Result<BatchNorm, CoreError> {
        Ok(BatchNorm {
            gamma: store.add(&format!("{name}.gamma"), &[features], InitSpec::Ones, seed)?,
            beta: store.add(&format!("{name}.beta"), &[features], InitSpec::Zeros, seed)?,
            running_mean: store.add(&format!("{name}.running_mean"), &[features], InitSpec::Zeros, seed)?,
            running_var: store.add(&format!("{name}.running_var"), &[features], InitSpec::Ones, seed)?,
            features,
        })
    }

    /// The non-trainable buffer ids (running statistics).
    pub fn buffer_ids(&self) -> [ParamId; 2] {
        [self.running_mean, self.running_var]
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        leaves: &Leaves,
        x: &Tensor,
        ctx: &mut ForwardCtx,
    ) -> Result<Tensor, CoreError> {
        let gamma = leaf(leaves, self.gamma);
        let beta = leaf(leaves, self.beta);
        if ctx.training {
            let (out, mean, var) = x.batch_norm_train(&gamma, &beta, NORM_EPS)?;
            ctx.bn_updates.push(BnUpdate {
                mean_id: self.running_mean,
                var_id: self.running_var,
                mean,
                var,
            });
            Ok(out)
        } else {
            let rm = store.get(self.running_mean).value.clone();
            let rv = store.get(self.running_var).value.clone();
            let inv: Vec<f64> = rv.iter().map(|&v| 1.0 / (v + NORM_EPS).sqrt()).collect();
            let rm = Tensor::constant(rm, &[self.features])?;
            let inv = Tensor::constant(inv, &[self.features])?;
            Ok(x.sub(&rm)?.mul(&inv)?.mul(&gamma)?.add(&beta)?)
        }
    }
}

/// Applies queued batch-statistics updates to the running buffers with the
/// standard exponential moving average.
pub fn apply_bn_updates(store: &mut ParamStore, updates: &[BnUpdate]) {
    for u in updates {
        let rm = store.value_mut(u.mean_id);
        for (r, &b) in rm.iter_mut().zip(&u.mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
        let rv = store.value_mut(u.var_id);
        for (r, &b) in rv.iter_mut().zip(&u.var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
    }
}
