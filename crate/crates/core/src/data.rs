use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::labels::{LabelMap, NONE_SUB_ID};

pub const DATASET_FORMAT: &str = "subact-dataset";
pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Channels per joint per frame: x, y, z, timestamp (seconds).
pub const CHANNELS: usize = 4;

/// One skeleton sequence. Channel layout is joint-major:
/// `channels[((j * frames) + t) * 4 + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub joints: usize,
    pub frames: usize,
    pub channels: Vec<f64>,
    /// Undirected joint pairs.
    pub topology: Vec<(usize, usize)>,
}

impl MotionSequence {
    pub fn zeros(joints: usize, frames: usize, topology: Vec<(usize, usize)>) -> MotionSequence {
        MotionSequence {
            joints,
            frames,
            channels: vec![0.0; joints * frames * CHANNELS],
            topology,
        }
    }

    pub fn channel(&self, joint: usize, frame: usize, c: usize) -> f64 {
        self.channels[((joint * self.frames) + frame) * CHANNELS + c]
    }

    pub fn channel_mut(&mut self, joint: usize, frame: usize, c: usize) -> &mut f64 {
        &mut self.channels[((joint * self.frames) + frame) * CHANNELS + c]
    }

    /// Structural checks plus strictly increasing timestamps (raw sequences;
    /// resampled ones may hold duplicated timestamps and skip this).
    pub fn validate_raw(&self) -> Result<(), CoreError> {
        self.validate_structure()?;
        for t in 1..self.frames {
            if self.channel(0, t, 3) <= self.channel(0, t - 1, 3) {
                return Err(CoreError::Data(format!(
                    "timestamps not strictly increasing at frame {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn validate_structure(&self) -> Result<(), CoreError> {
        if self.joints == 0 || self.frames == 0 {
            return Err(CoreError::Data("motion needs at least one joint and frame".into()));
        }
        if self.channels.len() != self.joints * self.frames * CHANNELS {
            return Err(CoreError::Data(format!(
                "channel buffer holds {} values, expected {}",
                self.channels.len(),
                self.joints * self.frames * CHANNELS
            )));
        }
        for &(a, b) in &self.topology {
            if a >= self.joints || b >= self.joints {
                return Err(CoreError::Data(format!(
                    "topology edge ({a},{b}) references a joint outside 0..{}",
                    self.joints
                )));
            }
        }
        Ok(())
    }
}

/// One labelled temporal segment, frames `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub class_id: usize,
    pub start: usize,
    pub end: usize,
}

/// Ordered sub-action segments of one sample.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SubActionTrack {
    pub segments: Vec<Segment>,
}

impl SubActionTrack {
    pub fn new(segments: Vec<Segment>) -> SubActionTrack {
        SubActionTrack { segments }
    }

    /// Segments must be contiguous, non-overlapping, cover `[0, frames)`, and
    /// never use the reserved padding class.
    pub fn validate(&self, frames: usize) -> Result<(), CoreError> {
        let mut cursor = 0usize;
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.class_id == NONE_SUB_ID {
                return Err(CoreError::Data(format!(
                    "segment {i} uses the reserved padding class"
                )));
            }
            if seg.start != cursor || seg.end <= seg.start {
                return Err(CoreError::Data(format!(
                    "segment {i} spans [{},{}) but frame {cursor} is next",
                    seg.start, seg.end
                )));
            }
            cursor = seg.end;
        }
        if cursor != frames {
            return Err(CoreError::Data(format!(
                "segments cover [0,{cursor}) but the sequence has {frames} frames"
            )));
        }
        Ok(())
    }

    pub fn class_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.segments.iter().map(|s| s.class_id)
    }
}

/// Pads the track's class ids with the reserved NONE class to `l_max`.
pub fn pad_subactions(track: &SubActionTrack, l_max: usize) -> Result<Vec<usize>, CoreError> {
    if track.segments.len() > l_max {
        return Err(CoreError::Capacity(format!(
            "track has {} segments, capacity is {l_max}",
            track.segments.len()
        )));
    }
    let mut padded: Vec<usize> = track.class_ids().collect();
    padded.resize(l_max, NONE_SUB_ID);
    Ok(padded)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: usize,
    pub motion: MotionSequence,
    pub track: SubActionTrack,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// True once motion has been resampled to a fixed frame count, after
    /// which timestamps may legitimately repeat.
    pub resampled: bool,
}

/// Source frame copied into output frame `i` when resampling `s` frames to
/// `target`: round_half_away_from_zero(i·(s−1)/(target−1)), or 0 for target 1.
fn nearest_source(i: usize, s: usize, target: usize) -> usize {
    if target == 1 {
        0
    } else {
        // f64::round ties away from zero.
        ((i as f64) * ((s - 1) as f64) / ((target - 1) as f64)).round() as usize
    }
}

/// Resamples to `target` frames by nearest-neighbor copy of whole frames.
/// Timestamps are copied along, so they stay monotone but may duplicate.
pub fn interpolate_nearest(m: &MotionSequence, target: usize) -> Result<MotionSequence, CoreError> {
    if target == 0 {
        return Err(CoreError::Config("interpolation target must be at least 1".into()));
    }
    let s = m.frames;
    if s == target {
        return Ok(m.clone());
    }
    let mut out = MotionSequence::zeros(m.joints, target, m.topology.clone());
    for i in 0..target {
        let src = nearest_source(i, s, target);
        for j in 0..m.joints {
            for c in 0..CHANNELS {
                *out.channel_mut(j, i, c) = m.channel(j, src, c);
            }
        }
    }
    Ok(out)
}

/// Carries a track across the same nearest-neighbor resampling applied to
/// its motion: output segment k covers exactly the output frames whose
/// source frame falls inside source segment k. Segments whose source frames
/// are all skipped by downsampling are dropped; the rest keep their class
/// and order, so segment identity is preserved even across equal-class
/// neighbors.
pub fn resample_track(
    track: &SubActionTrack,
    source_frames: usize,
    target: usize,
) -> Result<SubActionTrack, CoreError> {
    if target == 0 {
        return Err(CoreError::Config("resampling target must be at least 1".into()));
    }
    track.validate(source_frames)?;
    let mut segments = Vec::new();
    let mut i = 0;
    for seg in &track.segments {
        let start = i;
        while i < target && nearest_source(i, source_frames, target) < seg.end {
            i += 1;
        }
        if i > start {
            segments.push(Segment { class_id: seg.class_id, start, end: i });
        }
    }
    Ok(SubActionTrack::new(segments))
}

/// Keeps the first max(1, floor(r·T_raw)) raw frames and clips the track to
/// the cut. Applied before any fixed-length resampling.
pub fn truncate_to_ratio(sample: &Sample, ratio: f64) -> Result<Sample, CoreError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(CoreError::Config(format!("observation ratio {ratio} outside (0,1]")));
    }
    let total = sample.motion.frames;
    let kept = ((ratio * total as f64).floor() as usize).max(1);
    if kept >= total {
        return Ok(sample.clone());
    }
    let mut motion = MotionSequence::zeros(sample.motion.joints, kept, sample.motion.topology.clone());
    for j in 0..sample.motion.joints {
        for t in 0..kept {
            for c in 0..CHANNELS {
                *motion.channel_mut(j, t, c) = sample.motion.channel(j, t, c);
            }
        }
    }
    let segments = sample
        .track
        .segments
        .iter()
        .filter(|seg| seg.start < kept)
        .map(|seg| Segment {
            class_id: seg.class_id,
            start: seg.start,
            end: seg.end.min(kept),
        })
        .collect();
    Ok(Sample {
        id: sample.id.clone(),
        label: sample.label,
        motion,
        track: SubActionTrack::new(segments),
    })
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    format: String,
    version: u32,
    #[serde(default)]
    resampled: bool,
}

#[derive(Serialize, Deserialize)]
struct SampleLine {
    id: String,
    label: usize,
    joints: usize,
    frames: usize,
    channels: Vec<f64>,
    topology: Vec<(usize, usize)>,
    segments: Vec<(usize, usize, usize)>,
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<(), CoreError> {
    let mut out = String::new();
    let header = serde_json::to_string(&HeaderLine {
        format: DATASET_FORMAT.into(),
        version: DATASET_FORMAT_VERSION,
        resampled: dataset.resampled,
    })?;
    writeln!(out, "{header}").expect("string write");
    for s in &dataset.samples {
        let line = serde_json::to_string(&SampleLine {
            id: s.id.clone(),
            label: s.label,
            joints: s.motion.joints,
            frames: s.motion.frames,
            channels: s.motion.channels.clone(),
            topology: s.motion.topology.clone(),
            segments: s.track.segments.iter().map(|g| (g.class_id, g.start, g.end)).collect(),
        })?;
        writeln!(out, "{line}").expect("string write");
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads a dataset and validates every record against the label map.
pub fn read_dataset(path: &Path, map: &LabelMap) -> Result<Dataset, CoreError> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, header_line) = lines
        .next()
        .ok_or_else(|| CoreError::Parse { line: 1, detail: "empty file".into() })?;
    let header_text = header_line.map_err(|e| CoreError::Parse { line: 1, detail: e.to_string() })?;
    let header: HeaderLine = serde_json::from_str(&header_text)
        .map_err(|e| CoreError::Parse { line: 1, detail: format!("bad header: {e}") })?;
    if header.format != DATASET_FORMAT || header.version != DATASET_FORMAT_VERSION {
        return Err(CoreError::Parse {
            line: 1,
            detail: format!("unsupported format {}/{}", header.format, header.version),
        });
    }

    let mut samples = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let text = line.map_err(|e| CoreError::Parse { line: lineno, detail: e.to_string() })?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: SampleLine = serde_json::from_str(&text)
            .map_err(|e| CoreError::Parse { line: lineno, detail: e.to_string() })?;
        let parse_err = |detail: String| CoreError::Parse { line: lineno, detail };
        let motion = MotionSequence {
            joints: rec.joints,
            frames: rec.frames,
            channels: rec.channels,
            topology: rec.topology,
        };
        if header.resampled {
            motion.validate_structure().map_err(|e| parse_err(e.to_string()))?;
        } else {
            motion.validate_raw().map_err(|e| parse_err(e.to_string()))?;
        }
        let track = SubActionTrack::new(
            rec.segments
                .iter()
                .map(|&(class_id, start, end)| Segment { class_id, start, end })
                .collect(),
        );
        track.validate(motion.frames).map_err(|e| parse_err(e.to_string()))?;
        if rec.label >= map.holistic_count() {
            return Err(parse_err(format!("unknown holistic class id {}", rec.label)));
        }
        for seg in &track.segments {
            if seg.class_id >= map.sub_count() {
                return Err(parse_err(format!("unknown sub-action class id {}", seg.class_id)));
            }
        }
        samples.push(Sample {
            id: rec.id,
            label: rec.label,
            motion,
            track,
        });
    }
    Ok(Dataset { samples, resampled: header.resampled })
}
