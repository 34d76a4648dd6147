//! Semantic-frame sequences: ingestion, label-level edit distance and
//! count/bigram features.
//!
//! Frame parses come from an external parser as data; only the ordered
//! frame labels are kept.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{MoralTag, Story};

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("line {line}: duplicate story id '{id}'")]
    DuplicateId { line: usize, id: String },
    #[error("reference frame sequence is empty")]
    EmptyReference,
    #[error("tag {0} has no framed stories")]
    EmptyTag(MoralTag),
    #[error("k must be at least 1")]
    BadK,
}

pub type Result<T> = std::result::Result<T, FrameError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSeq {
    #[serde(rename = "id")]
    pub story_id: String,
    pub frames: Vec<String>,
}

impl FrameSeq {
    pub fn new(story_id: &str, frames: &[&str]) -> Self {
        FrameSeq {
            story_id: story_id.to_string(),
            frames: frames.iter().map(|f| f.to_string()).collect(),
        }
    }
}

/// Reads `{"id": ..., "frames": [...]}` lines.
pub fn load_frames(path: &Path) -> Result<Vec<FrameSeq>> {
    let file = File::open(path).map_err(|source| FrameError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_frames(BufReader::new(file))
}

pub fn parse_frames<R: BufRead>(reader: R) -> Result<Vec<FrameSeq>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| FrameError::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let seq: FrameSeq = serde_json::from_str(&line).map_err(|e| FrameError::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        if seq.frames.iter().any(|f| f.trim().is_empty()) {
            return Err(FrameError::MalformedRecord {
                line: line_no,
                message: format!("story '{}' has an empty frame label", seq.story_id),
            });
        }
        if !seen.insert(seq.story_id.clone()) {
            return Err(FrameError::DuplicateId {
                line: line_no,
                id: seq.story_id,
            });
        }
        out.push(seq);
    }
    Ok(out)
}

pub fn write_frames<W: Write>(mut out: W, seqs: &[FrameSeq]) -> std::io::Result<()> {
    for seq in seqs {
        writeln!(out, "{}", serde_json::to_string(seq).map_err(std::io::Error::other)?)?;
    }
    Ok(())
}

/// Levenshtein distance over label sequences with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance from `reference` to `candidate` after keeping only the
/// candidate frames that occur in the reference, scaled by the longer of
/// the two compared lengths. Directional; lies in `[0, 1]`.
pub fn scaled_frame_distance(reference: &FrameSeq, candidate: &FrameSeq) -> Result<f64> {
    if reference.frames.is_empty() {
        return Err(FrameError::EmptyReference);
    }
    let inventory: HashSet<&str> = reference.frames.iter().map(String::as_str).collect();
    let filtered: Vec<&str> = candidate
        .frames
        .iter()
        .map(String::as_str)
        .filter(|f| inventory.contains(f))
        .collect();
    let reference: Vec<&str> = reference.frames.iter().map(String::as_str).collect();
    let denom = reference.len().max(filtered.len());
    Ok(edit_distance(&reference, &filtered) as f64 / denom as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrameFeatureVector {
    pub story_id: String,
    pub counts: BTreeMap<String, usize>,
    pub bigram_counts: BTreeMap<(String, String), usize>,
}

/// Unigram and adjacent-bigram frame counts, optionally restricted to a
/// vocabulary. A bigram survives only if both of its labels do.
pub fn frame_features(seq: &FrameSeq, vocabulary: Option<&BTreeSet<String>>) -> FrameFeatureVector {
    let keep = |f: &String| vocabulary.is_none_or(|v| v.contains(f));
    let mut counts = BTreeMap::new();
    for f in seq.frames.iter().filter(|f| keep(f)) {
        *counts.entry(f.clone()).or_default() += 1;
    }
    let mut bigram_counts = BTreeMap::new();
    for w in seq.frames.windows(2) {
        if keep(&w[0]) && keep(&w[1]) {
            *bigram_counts.entry((w[0].clone(), w[1].clone())).or_default() += 1;
        }
    }
    FrameFeatureVector {
        story_id: seq.story_id.clone(),
        counts,
        bigram_counts,
    }
}

/// The `k` most frequent frame labels among stories carrying each tag,
/// ties broken by label. Only tags that occur in the corpus are returned.
pub fn top_k_frames_per_tag(
    stories: &[Story],
    frames: &[FrameSeq],
    k: usize,
) -> Result<BTreeMap<MoralTag, Vec<String>>> {
    if k == 0 {
        return Err(FrameError::BadK);
    }
    let by_id: HashMap<&str, &FrameSeq> = frames.iter().map(|f| (f.story_id.as_str(), f)).collect();
    let mut tallies: BTreeMap<MoralTag, (usize, HashMap<&str, usize>)> = BTreeMap::new();
    for story in stories {
        for tag in &story.tags {
            let entry = tallies.entry(*tag).or_default();
            if let Some(seq) = by_id.get(story.id.as_str()) {
                if !seq.frames.is_empty() {
                    entry.0 += 1;
                }
                for f in &seq.frames {
                    *entry.1.entry(f.as_str()).or_default() += 1;
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for (tag, (framed, counts)) in tallies {
        if framed == 0 {
            return Err(FrameError::EmptyTag(tag));
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        out.insert(tag, ranked.into_iter().take(k).map(|(f, _)| f.to_string()).collect());
    }
    Ok(out)
}
