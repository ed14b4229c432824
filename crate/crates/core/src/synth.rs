use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use subact_tensor::rng::{hash_str, rng_from};

use crate::config::GeneratorConfig;
use crate::data::{Dataset, MotionSequence, Sample, Segment, SubActionTrack};
use crate::error::CoreError;
use crate::labels::LabelMap;

/// Synthetic compositional-motion corpus. Each holistic class is a fixed
/// grammar (ordered list) of motion primitives; each primitive is a joint
/// trajectory template with additive Gaussian jitter.
///
/// Primitives come in "twin" pairs (2g, 2g+1) that share one trajectory
/// template but carry distinct label texts. The last two holistic classes
/// differ only in which twin they use, so their motion distributions are
/// identical: kinematics alone cannot separate them, while correct sub-action
/// labels can. Classes 0 and 1 draw from disjoint template families, giving
/// raw motion enough signal for a nearest-neighbor baseline.
pub struct SyntheticData {
    pub train: Dataset,
    pub test: Dataset,
    pub labels: LabelMap,
    pub grammars: Vec<Vec<usize>>,
}

const FAMILY_VERBS: [&str; 6] = ["sway", "lift", "spin", "zigzag", "stretch", "crouch"];
const FAMILY_NOUNS: [&str; 6] = ["torso", "arm", "wrist", "knee", "spine", "hip"];
const VARIANT_WORDS: [&str; 2] = ["left", "right"];

fn family_verb(f: usize) -> String {
    FAMILY_VERBS.get(f).map(|s| s.to_string()).unwrap_or_else(|| format!("move{f}"))
}

fn family_noun(f: usize) -> String {
    FAMILY_NOUNS.get(f).map(|s| s.to_string()).unwrap_or_else(|| format!("part{f}"))
}

/// Primitive index -> (family, twin variant).
fn family_of(primitive: usize) -> (usize, usize) {
    (primitive / 2, primitive % 2)
}

fn sub_text(primitive: usize) -> String {
    let (f, v) = family_of(primitive);
    format!("{} the {} {}", family_verb(f), VARIANT_WORDS[v], family_noun(f))
}

fn holistic_text(grammar: &[usize]) -> String {
    let steps: Vec<String> = grammar
        .iter()
        .map(|&p| {
            let (f, v) = family_of(p);
            format!("{} {}", family_verb(f), VARIANT_WORDS[v])
        })
        .collect();
    format!("{} routine", steps.join(" then "))
}

/// Position offset of `joint` at phase `tau` in [0,1] for a template family.
/// Twins share the family, so this deliberately ignores the variant.
fn template_offset(family: usize, joint: usize, joints: usize, tau: f64) -> [f64; 3] {
    let phase = joint as f64 / joints as f64;
    let amp = 1.0;
    match family % 6 {
        0 => [amp * (std::f64::consts::TAU * (tau + phase)).sin(), 0.0, 0.0],
        1 => [0.0, amp * tau * if joint % 2 == 0 { 1.0 } else { -1.0 }, 0.0],
        2 => {
            let a = std::f64::consts::TAU * tau + phase;
            [amp * a.cos(), 0.0, amp * a.sin()]
        }
        3 => {
            let saw = (tau * 4.0).fract();
            let tri = if saw < 0.5 { saw } else { 1.0 - saw };
            [0.0, amp * (2.0 * tri - 0.5), 0.0]
        }
        4 => [0.0, 0.0, amp * tau * tau * (1.0 + phase)],
        _ => [0.0, -amp * 4.0 * tau * (1.0 - tau), amp * phase * tau],
    }
}

fn chain_topology(joints: usize) -> Vec<(usize, usize)> {
    (0..joints - 1).map(|j| (j, j + 1)).collect()
}

/// Fixed per-class primitive grammars. Classes 0 and 1 use disjoint family
/// pools; the last two classes are built as twins differing in exactly one
/// primitive that has a same-template twin.
fn build_grammars(cfg: &GeneratorConfig, seed: u64) -> Result<Vec<Vec<usize>>, CoreError> {
    let k = cfg.holistic_classes;
    let p = cfg.sub_action_classes;
    let mut rng = rng_from(&[seed, hash_str("grammar")]);
    let lens: Vec<usize> = (cfg.grammar_len_min..=cfg.grammar_len_max).collect();
    let mut grammars: Vec<Vec<usize>> = Vec::with_capacity(k);

    let family_sig = |g: &[usize]| -> Vec<usize> { g.iter().map(|&x| x / 2).collect() };

    for c in 0..k.saturating_sub(1) {
        let pool: Vec<usize> = if c == 0 && p >= 4 {
            (0..p / 2).collect()
        } else if c == 1 && p >= 4 {
            (p / 2..p).collect()
        } else {
            (0..p).collect()
        };
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > 10_000 {
                return Err(CoreError::Config(
                    "could not build distinct grammars; raise sub_action_classes or grammar length".into(),
                ));
            }
            let len = (*lens.choose(&mut rng).unwrap()).min(pool.len());
            let mut g: Vec<usize> = pool
                .choose_multiple(&mut rng, len)
                .copied()
                .collect();
            g.shuffle(&mut rng);
            // The twin construction below needs a primitive whose pair exists.
            let twin_base = c + 2 == k;
            if twin_base && !g.iter().any(|&x| (x ^ 1) < p) {
                continue;
            }
            let sig = family_sig(&g);
            if grammars.iter().all(|prev| family_sig(prev) != sig) {
                grammars.push(g);
                break;
            }
        }
    }

    // Last class: copy the previous grammar and swap one primitive for its
    // same-template twin, so only the labels distinguish the pair.
    let base = grammars
        .last()
        .ok_or_else(|| CoreError::Config("need at least 2 holistic classes".into()))?
        .clone();
    let mut twin = base.clone();
    let slot = twin
        .iter()
        .position(|&x| (x ^ 1) < p)
        .ok_or_else(|| CoreError::Config("no twin-capable primitive available".into()))?;
    twin[slot] ^= 1;
    grammars.push(twin);
    Ok(grammars)
}

fn generate_sample(
    cfg: &GeneratorConfig,
    grammar: &[usize],
    id: String,
    label: usize,
    rng: &mut ChaCha8Rng,
) -> Sample {
    let jitter = Normal::new(0.0, cfg.jitter.max(1e-12)).expect("valid jitter");
    let seg_lens: Vec<usize> = grammar
        .iter()
        .map(|_| rng.gen_range(cfg.segment_frames_min..=cfg.segment_frames_max))
        .collect();
    let total: usize = seg_lens.iter().sum();
    let mut motion = MotionSequence::zeros(cfg.joints, total, chain_topology(cfg.joints));
    let mut segments = Vec::with_capacity(grammar.len());
    let mut cursor = 0usize;
    for (&primitive, &len) in grammar.iter().zip(&seg_lens) {
        let (family, _) = family_of(primitive);
        for t in 0..len {
            let tau = if len > 1 { t as f64 / (len - 1) as f64 } else { 0.0 };
            let frame = cursor + t;
            for j in 0..cfg.joints {
                let base = [j as f64 * 0.5, 0.0, 0.0];
                let offset = template_offset(family, j, cfg.joints, tau);
                for c in 0..3 {
                    *motion.channel_mut(j, frame, c) =
                        base[c] + offset[c] + jitter.sample(rng);
                }
                *motion.channel_mut(j, frame, 3) = frame as f64 / cfg.fps;
            }
        }
        segments.push(Segment {
            // Sub-action class ids offset by one past the reserved NONE.
            class_id: primitive + 1,
            start: cursor,
            end: cursor + len,
        });
        cursor += len;
    }
    debug_assert_eq!(cursor, total);
    Sample {
        id,
        label,
        motion,
        track: SubActionTrack::new(segments),
    }
}

fn generate_split(
    cfg: &GeneratorConfig,
    grammars: &[Vec<usize>],
    seed: u64,
    split: &str,
    count: usize,
) -> Dataset {
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % cfg.holistic_classes;
        let mut rng = rng_from(&[seed, hash_str("sample"), hash_str(split), i as u64]);
        samples.push(generate_sample(
            cfg,
            &grammars[label],
            format!("{split}-{i:04}"),
            label,
            &mut rng,
        ));
    }
    Dataset { samples, resampled: false }
}

pub fn generate_synthetic(cfg: &GeneratorConfig, seed: u64) -> Result<SyntheticData, CoreError> {
    cfg.validate()?;
    let grammars = build_grammars(cfg, seed)?;

    let mut sub_texts = vec!["none".to_string()];
    sub_texts.extend((0..cfg.sub_action_classes).map(sub_text));
    let holistic_texts = grammars.iter().map(|g| holistic_text(g)).collect();
    let labels = LabelMap::new(holistic_texts, sub_texts)?;

    let train = generate_split(cfg, &grammars, seed, "train", cfg.train_samples);
    let test = generate_split(cfg, &grammars, seed, "test", cfg.test_samples);
    Ok(SyntheticData {
        train,
        test,
        labels,
        grammars,
    })
}
