//! Kinematic branch: a stack of graph-convolution blocks over the skeleton
//! followed by joint-axis pooling, turning `[B, T, J, 4]` motion into a
//! `[B, T', D]` token sequence along the timeline.

use subact_tensor::{InitSpec, ParamId, ParamStore, Tensor};

use crate::config::ModelConfig;
use crate::data::CHANNELS;
use crate::error::CoreError;
use crate::nn::{leaf, BatchNorm, ForwardCtx, Leaves};

/// Fixed skeleton structure: a symmetric degree-normalized adjacency with
/// self-loops, `D^{-1/2}(A+I)D^{-1/2}`.
pub struct SkeletonGraph {
    joints: usize,
    base: Vec<f64>,
}

impl SkeletonGraph {
    pub fn from_topology(joints: usize, edges: &[(usize, usize)]) -> Result<SkeletonGraph, CoreError> {
        if joints == 0 {
            return Err(CoreError::Config("skeleton needs at least one joint".into()));
        }
        let mut adj = vec![0.0; joints * joints];
        for j in 0..joints {
            adj[j * joints + j] = 1.0;
        }
        for &(a, b) in edges {
            if a >= joints || b >= joints {
                return Err(CoreError::Config(format!(
                    "edge ({a},{b}) references a joint outside 0..{joints}"
                )));
            }
            adj[a * joints + b] = 1.0;
            adj[b * joints + a] = 1.0;
        }
        let degree: Vec<f64> = (0..joints)
            .map(|i| (0..joints).map(|j| adj[i * joints + j]).sum::<f64>())
            .collect();
        let mut base = vec![0.0; joints * joints];
        for i in 0..joints {
            for j in 0..joints {
                base[i * joints + j] = adj[i * joints + j] / (degree[i] * degree[j]).sqrt();
            }
        }
        Ok(SkeletonGraph { joints, base })
    }

    /// Uses `base` verbatim, skipping normalization; for isolated-joint and
    /// hand-set adjacency setups.
    pub fn with_base(joints: usize, base: Vec<f64>) -> Result<SkeletonGraph, CoreError> {
        if base.len() != joints * joints {
            return Err(CoreError::Config(format!(
                "adjacency has {} entries, expected {joints}x{joints}",
                base.len()
            )));
        }
        Ok(SkeletonGraph { joints, base })
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }
}

/// One graph-convolution block: `ReLU(BN((base + B)·X·W))` per frame, where
/// `B` is a zero-initialized learnable adjacency offset.
pub struct GcnBlock {
    pub weight: ParamId,
    pub adj_offset: ParamId,
    pub bn: BatchNorm,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: bool,
}

impl GcnBlock {
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        joints: usize,
        in_channels: usize,
        out_channels: usize,
        stride: bool,
        seed: u64,
    ) -> Result<GcnBlock, CoreError> {
        Ok(GcnBlock {
            weight: store.add(
                &format!("{name}.weight"),
                &[in_channels, out_channels],
                InitSpec::XavierUniform,
                seed,
            )?,
            adj_offset: store.add(&format!("{name}.adj_offset"), &[joints, joints], InitSpec::Zeros, seed)?,
            bn: BatchNorm::register(store, &format!("{name}.bn"), out_channels, seed)?,
            in_channels,
            out_channels,
            stride,
        })
    }

    /// Applies the block to `[B, T, J, C_in]`, without the temporal stride.
    pub fn apply(
        &self,
        graph: &SkeletonGraph,
        store: &ParamStore,
        leaves: &Leaves,
        x: &Tensor,
        ctx: &mut ForwardCtx,
    ) -> Result<Tensor, CoreError> {
        let (b, t, j, c) = dims4(x)?;
        if j != graph.joints || c != self.in_channels {
            return Err(CoreError::Config(format!(
                "block expects [.,.,{},{}], got {:?}",
                graph.joints,
                self.in_channels,
                x.shape()
            )));
        }
        let base = Tensor::constant(graph.base.clone(), &[j, j])?;
        let a_eff = base.add(&leaf(leaves, self.adj_offset))?;
        let mixed = a_eff.lmatmul(&x.reshape(&[b * t, j, c])?)?;
        let rows = mixed.reshape(&[b * t * j, c])?.matmul(&leaf(leaves, self.weight))?;
        let normed = self.bn.forward(store, leaves, &rows, ctx)?;
        Ok(normed.relu().reshape(&[b, t, j, self.out_channels])?)
    }
}

/// The full kinematic branch.
pub struct GcnBackbone {
    pub blocks: Vec<GcnBlock>,
    frames: usize,
    fused_frames: usize,
}

impl GcnBackbone {
    pub fn register(
        store: &mut ParamStore,
        cfg: &ModelConfig,
        joints: usize,
        seed: u64,
    ) -> Result<GcnBackbone, CoreError> {
        let schedule = cfg.channel_schedule();
        let mut blocks = Vec::with_capacity(schedule.len());
        let mut in_channels = CHANNELS;
        for (i, &out_channels) in schedule.iter().enumerate() {
            let block_no = i + 1;
            blocks.push(GcnBlock::register(
                store,
                &format!("gcn.block{block_no}"),
                joints,
                in_channels,
                out_channels,
                cfg.stride_blocks.contains(&block_no),
                seed,
            )?);
            in_channels = out_channels;
        }
        Ok(GcnBackbone { blocks, frames: cfg.frames, fused_frames: cfg.fused_frames() })
    }

    /// Frame count of the output token sequence (T').
    pub fn fused_frames(&self) -> usize {
        self.fused_frames
    }

    pub fn buffer_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.blocks.iter().flat_map(|b| b.bn.buffer_ids())
    }

    /// `[B, T, J, 4]` motion to `[B, T', D]` frame tokens.
    pub fn forward(
        &self,
        graph: &SkeletonGraph,
        store: &ParamStore,
        leaves: &Leaves,
        motion: &Tensor,
        ctx: &mut ForwardCtx,
    ) -> Result<Tensor, CoreError> {
        let (b, t0, j, _) = dims4(motion)?;
        if t0 != self.frames {
            return Err(CoreError::Config(format!(
                "backbone built for {} frames, got {t0}",
                self.frames
            )));
        }
        let mut x = motion.clone();
        let mut t = t0;
        for block in &self.blocks {
            x = block.apply(graph, store, leaves, &x, ctx)?;
            if block.stride {
                let kept = t.div_ceil(2);
                let mut ids = Vec::with_capacity(b * kept);
                for sample in 0..b {
                    ids.extend((0..t).step_by(2).map(|frame| sample * t + frame));
                }
                let c = block.out_channels;
                x = Tensor::gather_rows(&x.reshape(&[b * t, j * c])?, &ids)?
                    .reshape(&[b, kept, j, c])?;
                t = kept;
            }
        }
        if t != self.fused_frames {
            return Err(CoreError::Config(format!(
                "stride schedule produced {t} frames, expected {}",
                self.fused_frames
            )));
        }
        Ok(x.mean_axis(2)?)
    }
}

fn dims4(x: &Tensor) -> Result<(usize, usize, usize, usize), CoreError> {
    match x.shape() {
        [b, t, j, c] => Ok((*b, *t, *j, *c)),
        other => Err(CoreError::Config(format!("expected a 4-axis tensor, got {other:?}"))),
    }
}
