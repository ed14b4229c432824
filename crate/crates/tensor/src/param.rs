use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::TensorError;
use crate::rng::{derive_seed, hash_str, rng_from};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitSpec {
    Zeros,
    Ones,
    Constant(f64),
    /// Zero-mean Gaussian with the given standard deviation.
    Normal { std: f64 },
    /// Uniform on [-limit, limit] with limit = sqrt(6 / (fan_in + fan_out)),
    /// fan values taken from the first two axes (a 1-D shape counts as fan_in).
    XavierUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

/// Registry of trainable values. Registration order is the canonical order
/// everywhere (optimizer state, checkpoints), so a model built the same way
/// twice lines up exactly.
#[derive(Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    /// Registers a parameter and samples its initial value from a stream that
    /// depends only on (seed, name), so adding one parameter never shifts the
    /// initialization of another.
    pub fn add(
        &mut self,
        name: &str,
        shape: &[usize],
        init: InitSpec,
        seed: u64,
    ) -> Result<ParamId, TensorError> {
        if self.by_name.contains_key(name) {
            return Err(TensorError::Param(format!("duplicate parameter name {name:?}")));
        }
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(TensorError::Param(format!(
                "parameter {name:?} has invalid shape {shape:?}"
            )));
        }
        let n = shape.iter().product();
        let value = match init {
            InitSpec::Zeros => vec![0.0; n],
            InitSpec::Ones => vec![1.0; n],
            InitSpec::Constant(c) => vec![c; n],
            InitSpec::Normal { std } => {
                let mut rng = rng_from(&[seed, hash_str(name)]);
                let dist = Normal::new(0.0, std).map_err(|e| {
                    TensorError::Param(format!("parameter {name:?}: bad normal std {std}: {e}"))
                })?;
                (0..n).map(|_| dist.sample(&mut rng)).collect()
            }
            InitSpec::XavierUniform => {
                let fan_in = shape[0];
                let fan_out = if shape.len() > 1 { shape[1] } else { shape[0] };
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut rng = rng_from(&[seed, hash_str(name)]);
                (0..n).map(|_| rng.gen_range(-limit..=limit)).collect()
            }
        };
        let id = self.params.len();
        self.params.push(Parameter {
            name: name.to_string(),
            shape: shape.to_vec(),
            value,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    /// Fresh differentiable leaf holding the parameter's current value. Call
    /// once per forward pass; the leaf's gradient is read back after backward.
    pub fn leaf(&self, id: ParamId) -> Tensor {
        let p = &self.params[id.0];
        Tensor::leaf(p.value.clone(), &p.shape, true).expect("registered shapes are valid")
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Vec<f64> {
        &mut self.params[id.0].value
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Replaces values wholesale, typically from a checkpoint. Every entry must
    /// match a registered parameter in name and shape, and every registered
    /// parameter must be present.
    pub fn load_values(&mut self, entries: &[(String, Vec<usize>, Vec<f64>)]) -> Result<(), TensorError> {
        if entries.len() != self.params.len() {
            return Err(TensorError::Param(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                entries.len()
            )));
        }
        for (name, shape, value) in entries {
            let id = self
                .lookup(name)
                .ok_or_else(|| TensorError::Param(format!("unknown parameter {name:?}")))?;
            let p = &mut self.params[id.0];
            if &p.shape != shape {
                return Err(TensorError::Param(format!(
                    "parameter {name:?}: shape {shape:?} does not match registered {:?}",
                    p.shape
                )));
            }
            p.value = value.clone();
        }
        Ok(())
    }
}

/// Seed component for a named parameter stream, shared by initializers and
/// anything else that needs a per-name deterministic stream.
pub fn param_stream_seed(seed: u64, name: &str) -> u64 {
    derive_seed(&[seed, hash_str(name)])
}
