//! Dual-branch sub-action-aware skeleton action recognition.
//!
//! The crate couples a skeleton graph-convolution branch with a text branch
//! built from sub-action label semantics. A frozen segmentation oracle
//! supplies sub-action tracks; their label texts are tokenized, encoded, and
//! fused into the kinematic features through cross-attention. Training
//! optimizes recognition cross-entropy jointly with a semantic alignment
//! loss, and evaluation supports partial-observation protocols that truncate
//! raw sequences before resampling.

pub mod config;
pub mod data;
pub mod error;
pub mod fusion;
pub mod gcn;
pub mod harness;
pub mod labels;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod oracle;
pub mod synth;
pub mod text;
pub mod train;

pub use config::{
    FusionVariant, GeneratorConfig, LossWeights, ModelConfig, OptimizerSpec, OracleSpec,
    RunConfig, SubActionInput,
};
pub use error::CoreError;
