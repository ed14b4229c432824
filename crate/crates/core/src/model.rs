//! Full model assembly: kinematic backbone, text encoder, timeline
//! projection, fusion, classifier, and the semantic-alignment head, all
//! registered in one parameter store for optimization and checkpointing.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use subact_tensor::checkpoint::{load_params, save_params, CheckpointManifest};
use subact_tensor::{ParamId, ParamStore, Tensor};

use crate::config::{ModelConfig, SubActionInput};
use crate::data::{interpolate_nearest, pad_subactions, truncate_to_ratio, Sample, SubActionTrack, CHANNELS};
use crate::error::CoreError;
use crate::fusion::{Classifier, FusionModule, Mlp1};
use crate::gcn::{GcnBackbone, SkeletonGraph};
use crate::labels::{LabelMap, TokenSequence, Vocabulary};
use crate::nn::{make_leaves, Affine, ForwardCtx, Leaves};
use crate::objectives::{semantic_loss, Mlp2};
use crate::oracle::SegmentationOracle;
use crate::text::TextEncoder;

/// One minibatch after the frozen preprocessing chain: observation-ratio
/// truncation, oracle segmentation, resampling, and sub-action padding.
pub struct PreparedBatch {
    /// `[B, T, J, 4]` motion constant.
    pub motion: Tensor,
    /// Flat `B × L_max` padded sub-action class ids.
    pub sub_ids: Vec<usize>,
    /// Holistic target class per sample.
    pub labels: Vec<usize>,
    pub sample_ids: Vec<String>,
    /// Oracle segmentations of the (possibly truncated) samples.
    pub oracle_tracks: Vec<SubActionTrack>,
    /// Ground-truth tracks after the same truncation.
    pub truth_tracks: Vec<SubActionTrack>,
}

impl PreparedBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Runs the frozen preprocessing chain for one batch of samples.
pub fn prepare_batch(
    samples: &[&Sample],
    cfg: &ModelConfig,
    map: &LabelMap,
    oracle: &SegmentationOracle,
    ratio: f64,
) -> Result<PreparedBatch, CoreError> {
    if samples.is_empty() {
        return Err(CoreError::Data("cannot prepare an empty batch".into()));
    }
    let joints = samples[0].motion.joints;
    let b = samples.len();
    let mut motion = Vec::with_capacity(b * cfg.frames * joints * CHANNELS);
    let mut sub_ids = Vec::with_capacity(b * cfg.l_max);
    let mut labels = Vec::with_capacity(b);
    let mut sample_ids = Vec::with_capacity(b);
    let mut oracle_tracks = Vec::with_capacity(b);
    let mut truth_tracks = Vec::with_capacity(b);
    for s in samples {
        if s.motion.joints != joints {
            return Err(CoreError::Data(format!(
                "sample {} has {} joints, batch expects {joints}",
                s.id, s.motion.joints
            )));
        }
        let cut = truncate_to_ratio(s, ratio)?;
        let segmented = oracle.segment(&s.id, &cut.track, map.sub_count())?;
        sub_ids.extend(pad_subactions(&segmented, cfg.l_max)?);
        let resampled = interpolate_nearest(&cut.motion, cfg.frames)?;
        for t in 0..cfg.frames {
            for j in 0..joints {
                for c in 0..CHANNELS {
                    motion.push(resampled.channel(j, t, c));
                }
            }
        }
        labels.push(s.label);
        sample_ids.push(s.id.clone());
        oracle_tracks.push(segmented);
        truth_tracks.push(cut.track);
    }
    Ok(PreparedBatch {
        motion: Tensor::constant(motion, &[b, cfg.frames, joints, CHANNELS])?,
        sub_ids,
        labels,
        sample_ids,
        oracle_tracks,
        truth_tracks,
    })
}

/// Output of one forward pass.
pub struct ForwardPass {
    /// `[B, K]` class logits.
    pub logits: Tensor,
    /// `[B, T', T']` cross-attention weights, for attention variants.
    pub attention: Option<Tensor>,
    /// Semantic loss scalar and the count of degenerate (zero-norm) rows.
    pub semantic: Option<(Tensor, usize)>,
}

pub struct SasiModel {
    pub config: ModelConfig,
    store: ParamStore,
    graph: SkeletonGraph,
    backbone: GcnBackbone,
    text: TextEncoder,
    mlp1: Mlp1,
    fusion: FusionModule,
    classifier: Classifier,
    mlp2: Mlp2,
    onehot: Option<Affine>,
    buffers: BTreeSet<ParamId>,
    vocab: Vocabulary,
    sub_tokens: Vec<TokenSequence>,
    hol_tokens: Vec<TokenSequence>,
    sub_count: usize,
    holistic_count: usize,
}

impl SasiModel {
    /// Builds and initializes the model for one dataset's label map and
    /// skeleton. Initialization is per-parameter-name deterministic in
    /// `seed`, so registration order never shifts the weights.
    pub fn new(
        cfg: &ModelConfig,
        map: &LabelMap,
        joints: usize,
        topology: &[(usize, usize)],
        seed: u64,
    ) -> Result<SasiModel, CoreError> {
        cfg.validate()?;
        let vocab = Vocabulary::build(map.corpus(), cfg.context_length);
        let sub_tokens: Vec<TokenSequence> =
            map.sub_texts().iter().map(|t| vocab.tokenize(t)).collect();
        let hol_tokens: Vec<TokenSequence> =
            map.holistic_texts().iter().map(|t| vocab.tokenize(t)).collect();

        let mut store = ParamStore::new();
        let graph = SkeletonGraph::from_topology(joints, topology)?;
        let backbone = GcnBackbone::register(&mut store, cfg, joints, seed)?;
        let text = TextEncoder::register(&mut store, cfg, vocab.len(), seed)?;
        let mlp1 = Mlp1::register(&mut store, cfg, seed)?;
        let fusion = FusionModule::register(&mut store, cfg, seed)?;
        let classifier = Classifier::register(&mut store, cfg, map.holistic_count(), seed)?;
        let mlp2 = Mlp2::register(&mut store, cfg, seed)?;
        let onehot = match cfg.sub_action_input {
            SubActionInput::Text => None,
            SubActionInput::OneHot => Some(Affine::register(
                &mut store,
                "onehot",
                map.sub_count(),
                cfg.feature_dim,
                subact_tensor::InitSpec::XavierUniform,
                true,
                seed,
            )?),
        };
        let mut buffers: BTreeSet<ParamId> = backbone.buffer_ids().collect();
        buffers.extend(mlp1.buffer_ids());
        Ok(SasiModel {
            config: cfg.clone(),
            store,
            graph,
            backbone,
            text,
            mlp1,
            fusion,
            classifier,
            mlp2,
            onehot,
            buffers,
            vocab,
            sub_tokens,
            hol_tokens,
            sub_count: map.sub_count(),
            holistic_count: map.holistic_count(),
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn fused_frames(&self) -> usize {
        self.backbone.fused_frames()
    }

    pub fn holistic_count(&self) -> usize {
        self.holistic_count
    }

    /// Ids updated by the optimizer: everything except normalization buffers.
    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.store.ids().filter(|id| !self.buffers.contains(id)).collect()
    }

    /// Scalar count over trainable parameters.
    pub fn parameter_count(&self) -> usize {
        self.trainable_ids()
            .iter()
            .map(|&id| self.store.get(id).value.len())
            .sum()
    }

    /// Fresh gradient-tracking leaves for one step.
    pub fn leaves(&self) -> Leaves {
        make_leaves(&self.store, self.trainable_ids())
    }

    /// Forward pass over a prepared batch. `with_semantic` builds the
    /// semantic-loss branch (MLP_2 and holistic text features); leave it off
    /// when λ2 = 0 so those parameters receive no gradient at all.
    pub fn forward(
        &self,
        leaves: &Leaves,
        batch: &PreparedBatch,
        with_semantic: bool,
        ctx: &mut ForwardCtx,
    ) -> Result<ForwardPass, CoreError> {
        let b = batch.len();
        if batch.sub_ids.len() != b * self.config.l_max {
            return Err(CoreError::Config(format!(
                "batch carries {} sub-action ids for {b} samples with L_max {}",
                batch.sub_ids.len(),
                self.config.l_max
            )));
        }
        let x = self.backbone.forward(&self.graph, &self.store, leaves, &batch.motion, ctx)?;

        let needs_text_tokens = self.fusion.variant.uses_text_branch() || with_semantic;
        let t_sub = if needs_text_tokens { Some(self.sub_features(leaves, batch)?) } else { None };
        let timeline_text = match &t_sub {
            Some(t) if self.fusion.variant.uses_text_branch() => {
                Some(self.mlp1.forward(&self.store, leaves, t, ctx)?)
            }
            _ => None,
        };
        let (fused, attention) = self.fusion.forward(leaves, &x, timeline_text.as_ref())?;
        let logits = self.classifier.forward(leaves, &fused)?;

        let semantic = if with_semantic {
            let t_sub = t_sub.as_ref().expect("sub-action features built for the semantic branch");
            let pred = self.mlp2.forward(leaves, t_sub, ctx)?;
            let t_hol = self.holistic_features(leaves, &batch.labels)?;
            Some(semantic_loss(&pred, &t_hol)?)
        } else {
            None
        };
        Ok(ForwardPass { logits, attention, semantic })
    }

    /// `[B, L_max, D]` sub-action features. Text mode encodes each distinct
    /// label once per batch and gathers rows, so repeated labels share one
    /// encoder subgraph; one-hot mode maps indicator vectors through an
    /// affine layer instead.
    fn sub_features(&self, leaves: &Leaves, batch: &PreparedBatch) -> Result<Tensor, CoreError> {
        let b = batch.len();
        let l = self.config.l_max;
        match &self.onehot {
            None => {
                let table = self.encode_distinct(leaves, &batch.sub_ids, &self.sub_tokens)?;
                Ok(table.reshape(&[b, l, self.config.feature_dim])?)
            }
            Some(affine) => {
                let mut data = vec![0.0; b * l * self.sub_count];
                for (row, &id) in batch.sub_ids.iter().enumerate() {
                    if id >= self.sub_count {
                        return Err(CoreError::Lookup(format!("sub-action id {id} outside the label map")));
                    }
                    data[row * self.sub_count + id] = 1.0;
                }
                let onehot = Tensor::constant(data, &[b * l, self.sub_count])?;
                Ok(affine.forward(leaves, &onehot)?.reshape(&[b, l, self.config.feature_dim])?)
            }
        }
    }

    /// `[B, D]` holistic text features via the shared encoder.
    fn holistic_features(&self, leaves: &Leaves, labels: &[usize]) -> Result<Tensor, CoreError> {
        self.encode_distinct(leaves, labels, &self.hol_tokens)
    }

    /// Encodes the distinct ids in `ids` once each, then gathers back to one
    /// row per input id.
    fn encode_distinct(
        &self,
        leaves: &Leaves,
        ids: &[usize],
        tokens: &[TokenSequence],
    ) -> Result<Tensor, CoreError> {
        let mut row_of: BTreeMap<usize, usize> = BTreeMap::new();
        let mut rows: Vec<Tensor> = Vec::new();
        for &id in ids {
            if let std::collections::btree_map::Entry::Vacant(e) = row_of.entry(id) {
                let seq = tokens
                    .get(id)
                    .ok_or_else(|| CoreError::Lookup(format!("label id {id} outside the label map")))?;
                e.insert(rows.len());
                rows.push(self.text.encode(leaves, seq)?);
            }
        }
        let table = Tensor::concat_rows(&rows)?;
        let gathered: Vec<usize> = ids.iter().map(|id| row_of[id]).collect();
        Ok(Tensor::gather_rows(&table, &gathered)?)
    }

    /// Writes `checkpoint.bin` and `manifest.json` under `dir`.
    pub fn save_checkpoint(&self, dir: &Path, config_hash: &str) -> Result<(), CoreError> {
        std::fs::create_dir_all(dir)?;
        save_params(&self.store, &dir.join("checkpoint.bin"))?;
        CheckpointManifest::new(config_hash)
            .with_meta("vocab_hash", &format!("{:016x}", self.vocab.hash()))
            .with_meta("holistic_classes", &self.holistic_count.to_string())
            .with_meta("sub_classes", &self.sub_count.to_string())
            .with_meta("joints", &self.graph.joints().to_string())
            .save(&dir.join("manifest.json"))?;
        Ok(())
    }

    /// Loads weights saved by `save_checkpoint`, refusing checkpoints whose
    /// config hash or vocabulary differs from this model's.
    pub fn load_checkpoint(&mut self, dir: &Path, config_hash: &str) -> Result<(), CoreError> {
        let manifest = CheckpointManifest::load(&dir.join("manifest.json"))?;
        if manifest.config_hash != config_hash {
            return Err(CoreError::Compatibility(format!(
                "checkpoint was produced under config {} but this run hashes to {config_hash}",
                manifest.config_hash
            )));
        }
        let vocab_hash = format!("{:016x}", self.vocab.hash());
        if manifest.meta.get("vocab_hash") != Some(&vocab_hash) {
            return Err(CoreError::Compatibility(format!(
                "checkpoint vocabulary {:?} does not match the dataset vocabulary {vocab_hash}",
                manifest.meta.get("vocab_hash")
            )));
        }
        for (key, have) in [
            ("holistic_classes", self.holistic_count),
            ("sub_classes", self.sub_count),
            ("joints", self.graph.joints()),
        ] {
            let recorded = manifest.meta.get(key);
            if recorded != Some(&have.to_string()) {
                return Err(CoreError::Compatibility(format!(
                    "checkpoint records {key} {recorded:?}, model has {have}"
                )));
            }
        }
        let entries = load_params(&dir.join("checkpoint.bin"))?;
        self.store.load_values(&entries)?;
        Ok(())
    }
}
