use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CoreError;

/// How kinematic tokens and projected text tokens are combined before the
/// classifier. The first two are the attention designs; the middle four are
/// the ablation variants; `KinematicsOnly` bypasses the text branch entirely
/// and classifies `Norm(X)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionVariant {
    CrossAttention,
    CrossAttentionNoResidual,
    Add,
    Mul,
    MulResidual,
    Concat,
    KinematicsOnly,
}

impl FusionVariant {
    pub const ALL: [FusionVariant; 7] = [
        FusionVariant::CrossAttention,
        FusionVariant::CrossAttentionNoResidual,
        FusionVariant::Add,
        FusionVariant::Mul,
        FusionVariant::MulResidual,
        FusionVariant::Concat,
        FusionVariant::KinematicsOnly,
    ];

    pub fn uses_text_branch(self) -> bool {
        self != FusionVariant::KinematicsOnly
    }

    pub fn is_attention(self) -> bool {
        matches!(
            self,
            FusionVariant::CrossAttention | FusionVariant::CrossAttentionNoResidual
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            FusionVariant::CrossAttention => "cross_attention",
            FusionVariant::CrossAttentionNoResidual => "cross_attention_no_residual",
            FusionVariant::Add => "add",
            FusionVariant::Mul => "mul",
            FusionVariant::MulResidual => "mul_residual",
            FusionVariant::Concat => "concat",
            FusionVariant::KinematicsOnly => "kinematics_only",
        }
    }
}

/// Where sub-action identity enters the semantics branch: full text retrieval
/// and encoding, or the ablation that feeds one-hot class vectors through an
/// affine map instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubActionInput {
    Text,
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Kinematic token width D; also the text-feature width.
    pub feature_dim: usize,
    /// Query/key projection width in the attention fusion.
    pub d_k: usize,
    /// Number of graph-convolution blocks.
    pub gcn_blocks: usize,
    /// 1-based block indices whose input is temporally halved (stride 2).
    pub stride_blocks: Vec<usize>,
    /// Frame count F every sequence is resampled to before the backbone.
    pub frames: usize,
    /// Padded sub-action track length L_max.
    pub l_max: usize,
    pub text_layers: usize,
    pub text_heads: usize,
    pub context_length: usize,
    pub dropout: f64,
    pub fusion: FusionVariant,
    pub sub_action_input: SubActionInput,
    pub classifier_bias: bool,
    /// Pool the text feature at the EOS position; false means mean pooling
    /// over real tokens.
    pub eos_pool: bool,
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        ModelConfig {
            feature_dim: 64,
            d_k: 64,
            gcn_blocks: 4,
            stride_blocks: vec![3],
            frames: 32,
            l_max: 4,
            text_layers: 2,
            text_heads: 4,
            context_length: 77,
            dropout: 0.1,
            fusion: FusionVariant::CrossAttention,
            sub_action_input: SubActionInput::Text,
            classifier_bias: true,
            eos_pool: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.feature_dim == 0 || self.d_k == 0 || self.frames == 0 || self.l_max == 0 {
            return Err(CoreError::Config("model dimensions must be positive".into()));
        }
        if self.feature_dim % 2 != 0 {
            return Err(CoreError::Config("feature_dim must be even (half-width early blocks)".into()));
        }
        if self.gcn_blocks == 0 {
            return Err(CoreError::Config("at least one GCN block required".into()));
        }
        if self.text_layers == 0 || self.text_heads == 0 {
            return Err(CoreError::Config("text encoder needs at least one layer and head".into()));
        }
        if self.feature_dim % self.text_heads != 0 {
            return Err(CoreError::Config(format!(
                "feature_dim {} not divisible by text_heads {}",
                self.feature_dim, self.text_heads
            )));
        }
        if self.context_length < 2 {
            return Err(CoreError::Config("context_length must hold at least BOS and EOS".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CoreError::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        for &b in &self.stride_blocks {
            if b == 0 || b > self.gcn_blocks {
                return Err(CoreError::Config(format!(
                    "stride block {b} outside 1..={}",
                    self.gcn_blocks
                )));
            }
        }
        if self.fused_frames() < 1 {
            return Err(CoreError::Config("temporal striding leaves no frames".into()));
        }
        Ok(())
    }

    /// Token count T' after the configured temporal strides.
    pub fn fused_frames(&self) -> usize {
        let mut t = self.frames;
        for _ in &self.stride_blocks {
            t = t.div_ceil(2);
        }
        t
    }

    /// Output channel width of each block: half-width until the midpoint,
    /// full width after.
    pub fn channel_schedule(&self) -> Vec<usize> {
        (1..=self.gcn_blocks)
            .map(|l| {
                if l <= self.gcn_blocks / 2 {
                    self.feature_dim / 2
                } else {
                    self.feature_dim
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> LossWeights {
        LossWeights {
            lambda1: 1.0,
            lambda2: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(CoreError::Config("loss weights must be nonnegative".into()));
        }
        if self.lambda1 == 0.0 && self.lambda2 == 0.0 {
            return Err(CoreError::Config("loss weights cannot both be zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSpec {
    pub kind: String,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for OptimizerSpec {
    fn default() -> OptimizerSpec {
        OptimizerSpec {
            kind: "adam".into(),
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 30,
            batch_size: 16,
        }
    }
}

impl OptimizerSpec {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.kind != "adam" {
            return Err(CoreError::Config(format!("unknown optimizer kind {:?}", self.kind)));
        }
        if self.learning_rate <= 0.0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(CoreError::Config("optimizer needs positive lr, epochs, batch_size".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(CoreError::Config("betas must lie in [0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum OracleSpec {
    GroundTruth,
    ErrorInjected { rate: f64, seed: u64 },
    FromFile { path: PathBuf },
}

impl Default for OracleSpec {
    fn default() -> OracleSpec {
        OracleSpec::GroundTruth
    }
}

impl OracleSpec {
    pub fn validate(&self) -> Result<(), CoreError> {
        if let OracleSpec::ErrorInjected { rate, .. } = self {
            if !(0.0..=1.0).contains(rate) {
                return Err(CoreError::Config(format!("error-injection rate {rate} outside [0,1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train_data: PathBuf,
    pub test_data: PathBuf,
    pub labels: PathBuf,
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub optimizer: OptimizerSpec,
    pub oracle: OracleSpec,
    /// Observation ratios evaluated by the protocol runner.
    pub observation_ratios: Vec<f64>,
    pub merge_threshold: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            train_data: PathBuf::from("train.jsonl"),
            test_data: PathBuf::from("test.jsonl"),
            labels: PathBuf::from("labels.json"),
            model: ModelConfig::default(),
            loss: LossWeights::default(),
            optimizer: OptimizerSpec::default(),
            oracle: OracleSpec::default(),
            observation_ratios: vec![0.25, 0.5, 0.75, 1.0],
            merge_threshold: 0.9,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        self.model.validate()?;
        self.loss.validate()?;
        self.optimizer.validate()?;
        self.oracle.validate()?;
        if self.observation_ratios.is_empty() {
            return Err(CoreError::Config("observation_ratios must be nonempty".into()));
        }
        for &r in &self.observation_ratios {
            if !(r > 0.0 && r <= 1.0) {
                return Err(CoreError::Config(format!("observation ratio {r} outside (0,1]")));
            }
        }
        if !(-1.0..=2.0).contains(&self.merge_threshold) {
            return Err(CoreError::Config(format!(
                "merge threshold {} outside [-1,2]",
                self.merge_threshold
            )));
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig, CoreError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Stable fingerprint embedded in every artifact this run produces.
    pub fn hash(&self) -> String {
        fingerprint(self)
    }
}

/// SHA-256 hex digest of a config's canonical JSON serialization.
pub fn fingerprint<T: serde::Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub holistic_classes: usize,
    pub sub_action_classes: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub joints: usize,
    /// Per-segment raw frame count range (inclusive).
    pub segment_frames_min: usize,
    pub segment_frames_max: usize,
    /// Additive Gaussian position jitter.
    pub jitter: f64,
    pub grammar_len_min: usize,
    pub grammar_len_max: usize,
    /// Frames per second used for the timestamp channel.
    pub fps: f64,
}

impl Default for GeneratorConfig {
    fn default() -> GeneratorConfig {
        GeneratorConfig {
            holistic_classes: 8,
            sub_action_classes: 12,
            train_samples: 200,
            test_samples: 100,
            joints: 5,
            segment_frames_min: 10,
            segment_frames_max: 18,
            jitter: 0.05,
            grammar_len_min: 2,
            grammar_len_max: 4,
            fps: 30.0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.holistic_classes < 2 {
            return Err(CoreError::Config("need at least 2 holistic classes".into()));
        }
        if self.sub_action_classes < 2 {
            return Err(CoreError::Config("need at least 2 sub-action classes".into()));
        }
        if self.joints < 2 {
            return Err(CoreError::Config("need at least 2 joints".into()));
        }
        if self.segment_frames_min < 2 || self.segment_frames_max < self.segment_frames_min {
            return Err(CoreError::Config("invalid segment frame range".into()));
        }
        if self.grammar_len_min < 1 || self.grammar_len_max < self.grammar_len_min {
            return Err(CoreError::Config("invalid grammar length range".into()));
        }
        if self.train_samples == 0 || self.test_samples == 0 {
            return Err(CoreError::Config("sample counts must be positive".into()));
        }
        if !(self.jitter >= 0.0) || !(self.fps > 0.0) {
            return Err(CoreError::Config("jitter must be >= 0 and fps > 0".into()));
        }
        Ok(())
    }
}
