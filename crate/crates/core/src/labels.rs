use std::collections::BTreeMap;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use subact_tensor::rng::{hash_str, rng_from};

use crate::error::CoreError;

/// Reserved sub-action id for track padding.
pub const NONE_SUB_ID: usize = 0;
pub const NONE_TEXT: &str = "none";

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;
const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

pub const LABEL_MAP_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Holistic,
    Sub,
}

/// Bidirectional id ↔ text tables for holistic actions and sub-actions.
/// Ids are dense from 0; sub id 0 is the reserved "none" padding class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    format_version: u32,
    holistic: Vec<String>,
    sub: Vec<String>,
}

impl LabelMap {
    pub fn new(holistic: Vec<String>, sub: Vec<String>) -> Result<LabelMap, CoreError> {
        let map = LabelMap {
            format_version: LABEL_MAP_FORMAT_VERSION,
            holistic,
            sub,
        };
        map.validate()?;
        Ok(map)
    }

    fn validate(&self) -> Result<(), CoreError> {
        if self.format_version != LABEL_MAP_FORMAT_VERSION {
            return Err(CoreError::Data(format!(
                "unsupported label map format version {}",
                self.format_version
            )));
        }
        if self.holistic.is_empty() {
            return Err(CoreError::Data("label map has no holistic classes".into()));
        }
        if self.sub.first().map(String::as_str) != Some(NONE_TEXT) {
            return Err(CoreError::Data(format!(
                "sub id {NONE_SUB_ID} must be the reserved {NONE_TEXT:?} class"
            )));
        }
        if self.holistic.iter().chain(&self.sub).any(String::is_empty) {
            return Err(CoreError::Data("label texts must be nonempty".into()));
        }
        Ok(())
    }

    pub fn text(&self, kind: LabelKind, id: usize) -> Result<&str, CoreError> {
        let table = match kind {
            LabelKind::Holistic => &self.holistic,
            LabelKind::Sub => &self.sub,
        };
        table.get(id).map(String::as_str).ok_or_else(|| {
            CoreError::Lookup(format!("unknown {kind:?} class id {id} ({} known)", table.len()))
        })
    }

    pub fn holistic_count(&self) -> usize {
        self.holistic.len()
    }

    /// Number of sub-action classes including the reserved "none".
    pub fn sub_count(&self) -> usize {
        self.sub.len()
    }

    pub fn holistic_texts(&self) -> &[String] {
        &self.holistic
    }

    pub fn sub_texts(&self) -> &[String] {
        &self.sub
    }

    /// All texts, holistic then sub, for vocabulary construction.
    pub fn corpus(&self) -> impl Iterator<Item = &str> {
        self.holistic.iter().chain(&self.sub).map(String::as_str)
    }

    pub fn save(&self, path: &Path) -> Result<(), CoreError> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<LabelMap, CoreError> {
        let text = std::fs::read_to_string(path)?;
        let map: LabelMap = serde_json::from_str(&text)?;
        map.validate()?;
        Ok(map)
    }
}

/// Looks up the stored description for a class id.
pub fn retrieve_text(id: usize, map: &LabelMap, kind: LabelKind) -> Result<&str, CoreError> {
    map.text(kind, id)
}

/// Fixed-capacity token-id sequence: BOS, words, EOS, then PAD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    /// Count of non-pad positions (BOS and EOS included).
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    format_version: u32,
    context_length: usize,
    tokens: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Builds the vocabulary from a text corpus: fixed specials at ids 0-3,
    /// then the sorted unique lowercase words.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>, context_length: usize) -> Vocabulary {
        let mut words: Vec<String> = corpus
            .into_iter()
            .flat_map(|text| text.split_whitespace())
            .map(str::to_lowercase)
            .collect();
        words.sort();
        words.dedup();
        Vocabulary::from_words(&words, context_length)
    }

    /// Builds from an explicit word order (specials still occupy ids 0-3).
    pub fn from_words<S: AsRef<str>>(words: &[S], context_length: usize) -> Vocabulary {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(words.iter().map(|w| w.as_ref().to_string()));
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            format_version: 1,
            context_length,
            tokens,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn context_length(&self) -> usize {
        self.context_length
    }

    pub fn word_id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Stable fingerprint used for checkpoint/dataset compatibility checks.
    pub fn hash(&self) -> u64 {
        let joined = format!("{}\u{1f}{}", self.context_length, self.tokens.join("\u{1f}"));
        hash_str(&joined)
    }

    /// Lowercases, splits on whitespace, maps words (UNK for unseen), wraps in
    /// BOS…EOS, and pads or truncates to the context length with EOS kept at
    /// the final retained position.
    pub fn tokenize(&self, text: &str) -> TokenSequence {
        let max_words = self.context_length - 2;
        let word_ids: Vec<usize> = text
            .split_whitespace()
            .take(max_words)
            .map(|w| self.word_id(&w.to_lowercase()).unwrap_or(UNK_ID))
            .collect();
        let mut ids = Vec::with_capacity(self.context_length);
        ids.push(BOS_ID);
        ids.extend(&word_ids);
        ids.push(EOS_ID);
        let length = ids.len();
        ids.resize(self.context_length, PAD_ID);
        TokenSequence { ids, length }
    }

    pub fn save(&self, path: &Path) -> Result<(), CoreError> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocabulary, CoreError> {
        let text = std::fs::read_to_string(path)?;
        let mut vocab: Vocabulary = serde_json::from_str(&text)?;
        if vocab.tokens.len() < SPECIALS.len()
            || vocab.tokens[..SPECIALS.len()] != SPECIALS.map(str::to_string)
        {
            return Err(CoreError::Data("vocabulary is missing the special tokens".into()));
        }
        vocab.index = vocab
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(vocab)
    }
}

/// Deterministic unit-norm text embedding: each lowercase word hashes to a
/// seeded Gaussian vector, word vectors are averaged and the mean normalized,
/// so identical texts map identically and word overlap raises similarity.
pub fn embed_label(text: &str, dim: usize) -> Result<Vec<f64>, CoreError> {
    let words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
    if words.is_empty() {
        return Err(CoreError::Data("cannot embed empty label text".into()));
    }
    let mut mean = vec![0.0f64; dim];
    for word in &words {
        let mut rng = rng_from(&[hash_str("label-embed"), hash_str(word)]);
        for slot in mean.iter_mut() {
            let v: f64 = StandardNormal.sample(&mut rng);
            *slot += v;
        }
    }
    let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(CoreError::Data(format!("degenerate embedding for {text:?}")));
    }
    for v in &mut mean {
        *v /= norm;
    }
    Ok(mean)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeReport {
    /// Group index per input label, numbered by first appearance.
    pub group_of: Vec<usize>,
    /// Canonical representative (lexicographically smallest member) per group.
    pub representatives: Vec<String>,
}

/// Embedding width used when grouping labels by cosine similarity.
pub const MERGE_EMBED_DIM: usize = 32;

/// Single-linkage grouping: labels whose embedding cosine reaches the
/// threshold are connected, and groups are the connected components.
pub fn merge_labels(labels: &[String], threshold: f64) -> Result<MergeReport, CoreError> {
    if labels.is_empty() {
        return Err(CoreError::Data("merge_labels requires at least one label".into()));
    }
    let embeddings: Vec<Vec<f64>> = labels
        .iter()
        .map(|l| embed_label(l, MERGE_EMBED_DIM))
        .collect::<Result<_, _>>()?;

    let mut parent: Vec<usize> = (0..labels.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            // String equality short-circuits rounding noise in cos(v, v).
            let close = (threshold <= 1.0 && labels[i] == labels[j])
                || cosine(&embeddings[i], &embeddings[j]) >= threshold;
            if close {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }

    let mut group_ids: BTreeMap<usize, usize> = BTreeMap::new();
    let mut group_of = Vec::with_capacity(labels.len());
    let mut members: Vec<Vec<usize>> = Vec::new();
    for i in 0..labels.len() {
        let root = find(&mut parent, i);
        let next = group_ids.len();
        let gid = *group_ids.entry(root).or_insert(next);
        if gid == members.len() {
            members.push(Vec::new());
        }
        members[gid].push(i);
        group_of.push(gid);
    }
    let representatives = members
        .iter()
        .map(|m| m.iter().map(|&i| labels[i].clone()).min().unwrap())
        .collect();
    Ok(MergeReport {
        group_of,
        representatives,
    })
}
