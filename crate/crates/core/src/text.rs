//! Semantic branch: a from-scratch causal transformer over label token
//! sequences, pooled at the EOS position (or mean-pooled over real tokens).
//!
//! Padding never influences the pooled feature: with a causal mask, every
//! position at or before EOS is blind to the later PAD positions, so the
//! encoder runs on the first `length` positions only. `encode_full` keeps
//! the equivalent full-context masked computation for verification.

use subact_tensor::{InitSpec, ParamId, ParamStore, Tensor};

use crate::config::ModelConfig;
use crate::error::CoreError;
use crate::labels::TokenSequence;
use crate::nn::{Affine, LayerNorm, Leaves};

struct TextLayer {
    ln1: LayerNorm,
    q: Affine,
    k: Affine,
    v: Affine,
    o: Affine,
    ln2: LayerNorm,
    ff1: Affine,
    ff2: Affine,
}

pub struct TextEncoder {
    pub token_embedding: ParamId,
    pub positional: ParamId,
    layers: Vec<TextLayer>,
    ln_final: LayerNorm,
    dim: usize,
    heads: usize,
    context_length: usize,
    eos_pool: bool,
    vocab_size: usize,
}

impl TextEncoder {
    pub fn register(
        store: &mut ParamStore,
        cfg: &ModelConfig,
        vocab_size: usize,
        seed: u64,
    ) -> Result<TextEncoder, CoreError> {
        let d = cfg.feature_dim;
        let mut layers = Vec::with_capacity(cfg.text_layers);
        for i in 0..cfg.text_layers {
            let p = format!("text.layer{i}");
            layers.push(TextLayer {
                ln1: LayerNorm::register(store, &format!("{p}.ln1"), d, seed)?,
                q: Affine::register(store, &format!("{p}.attn.q"), d, d, InitSpec::XavierUniform, true, seed)?,
                k: Affine::register(store, &format!("{p}.attn.k"), d, d, InitSpec::XavierUniform, true, seed)?,
                v: Affine::register(store, &format!("{p}.attn.v"), d, d, InitSpec::XavierUniform, true, seed)?,
                o: Affine::register(store, &format!("{p}.attn.o"), d, d, InitSpec::XavierUniform, true, seed)?,
                ln2: LayerNorm::register(store, &format!("{p}.ln2"), d, seed)?,
                ff1: Affine::register(store, &format!("{p}.ff1"), d, 4 * d, InitSpec::XavierUniform, true, seed)?,
                ff2: Affine::register(store, &format!("{p}.ff2"), 4 * d, d, InitSpec::XavierUniform, true, seed)?,
            });
        }
        Ok(TextEncoder {
            token_embedding: store.add(
                "text.token_embedding",
                &[vocab_size, d],
                InitSpec::Normal { std: 0.02 },
                seed,
            )?,
            positional: store.add(
                "text.positional",
                &[cfg.context_length, d],
                InitSpec::Normal { std: 0.01 },
                seed,
            )?,
            layers,
            ln_final: LayerNorm::register(store, "text.ln_final", d, seed)?,
            dim: d,
            heads: cfg.text_heads,
            context_length: cfg.context_length,
            eos_pool: cfg.eos_pool,
            vocab_size,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Encodes one token sequence to a `[1, D]` feature, running only the
    /// `length` positions up to EOS.
    pub fn encode(&self, leaves: &Leaves, seq: &TokenSequence) -> Result<Tensor, CoreError> {
        self.check(seq)?;
        let len = seq.length;
        let x = self.run(leaves, &seq.ids[..len], len)?;
        self.pool(&x, len)
    }

    /// Encodes over the full padded context with an attention mask hiding
    /// future and pad positions. Equivalent to `encode`; kept for tests.
    pub fn encode_full(&self, leaves: &Leaves, seq: &TokenSequence) -> Result<Tensor, CoreError> {
        self.check(seq)?;
        let x = self.run(leaves, &seq.ids, seq.length)?;
        self.pool(&x, seq.length)
    }

    fn check(&self, seq: &TokenSequence) -> Result<(), CoreError> {
        if seq.ids.len() != self.context_length {
            return Err(CoreError::Config(format!(
                "token sequence has {} positions, encoder expects {}",
                seq.ids.len(),
                self.context_length
            )));
        }
        if seq.length < 1 || seq.length > seq.ids.len() {
            return Err(CoreError::Config(format!("invalid token length {}", seq.length)));
        }
        if let Some(&id) = seq.ids.iter().find(|&&id| id >= self.vocab_size) {
            return Err(CoreError::Lookup(format!(
                "token id {id} outside vocabulary of {} entries",
                self.vocab_size
            )));
        }
        Ok(())
    }

    /// Transformer stack over `ids`, with keys masked to positions `< real_len`
    /// and causally. Returns `[len, D]` after the final normalization.
    fn run(&self, leaves: &Leaves, ids: &[usize], real_len: usize) -> Result<Tensor, CoreError> {
        let len = ids.len();
        let emb = Tensor::gather_rows(&crate::nn::leaf(leaves, self.token_embedding), ids)?;
        let pos_ids: Vec<usize> = (0..len).collect();
        let pos = Tensor::gather_rows(&crate::nn::leaf(leaves, self.positional), &pos_ids)?;
        let mut x = emb.add(&pos)?;

        // Additive mask: key j visible to query i iff j <= i and j < real_len.
        let mut mask = vec![0.0; len * len];
        for i in 0..len {
            for j in 0..len {
                if j > i || j >= real_len {
                    mask[i * len + j] = -1e30;
                }
            }
        }
        let mask = Tensor::constant(mask, &[len, len])?;

        let head_dim = self.dim / self.heads;
        let split = |t: &Tensor| -> Result<Tensor, CoreError> {
            Ok(t.reshape(&[len, self.heads, head_dim])?.permute(&[1, 0, 2])?)
        };
        for layer in &self.layers {
            let h = layer.ln1.forward(leaves, &x)?;
            let q = split(&layer.q.forward(leaves, &h)?)?;
            let k = split(&layer.k.forward(leaves, &h)?)?;
            let v = split(&layer.v.forward(leaves, &h)?)?;
            let scores = q
                .bmm(&k.transpose_last()?)?
                .scale(1.0 / (head_dim as f64).sqrt())
                .add(&mask)?;
            let attn = scores.softmax()?;
            let mixed = attn.bmm(&v)?.permute(&[1, 0, 2])?.reshape(&[len, self.dim])?;
            x = x.add(&layer.o.forward(leaves, &mixed)?)?;

            let h = layer.ln2.forward(leaves, &x)?;
            let h = layer.ff2.forward(leaves, &layer.ff1.forward(leaves, &h)?.gelu())?;
            x = x.add(&h)?;
        }
        self.ln_final.forward(leaves, &x)
    }

    fn pool(&self, x: &Tensor, real_len: usize) -> Result<Tensor, CoreError> {
        if self.eos_pool {
            Ok(Tensor::gather_rows(x, &[real_len - 1])?)
        } else {
            let kept: Vec<usize> = (0..real_len).collect();
            Ok(Tensor::gather_rows(x, &kept)?.mean_axis(0)?.reshape(&[1, self.dim])?)
        }
    }
}
