//! Candidate story pairs: for each query story, the most similar other
//! story under a lexical, semantic, frame or shape criterion, plus
//! seeded random partners.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{unordered, AnalogyDimension, PairAnnotation};
use crate::frames::scaled_frame_distance;
use crate::resources::StoryResources;
use crate::seed;
use crate::shapes::{shape_agreement, ArcProfile};
use crate::textsim::cosine;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PairingError {
    #[error("need at least 2 stories, got {0}")]
    TooFewStories(usize),
    #[error("unknown story '{0}'")]
    UnknownStory(String),
    #[error("{method} pairing: story '{story}' lacks {what}")]
    MissingResource {
        method: PairingMethod,
        story: String,
        what: &'static str,
    },
    #[error("unknown pairing method '{0}'")]
    UnknownMethod(String),
    #[error("no annotated pair matches a generated pair")]
    NoAnnotatedPairs,
    #[error("pair file line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, PairingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PairingMethod {
    Lexical,
    Semantic,
    Frame,
    Shape,
    Random,
}

impl PairingMethod {
    pub const ALL: [PairingMethod; 5] = [
        PairingMethod::Lexical,
        PairingMethod::Semantic,
        PairingMethod::Frame,
        PairingMethod::Shape,
        PairingMethod::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PairingMethod::Lexical => "LEXICAL",
            PairingMethod::Semantic => "SEMANTIC",
            PairingMethod::Frame => "FRAME",
            PairingMethod::Shape => "SHAPE",
            PairingMethod::Random => "RANDOM",
        }
    }
}

impl fmt::Display for PairingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairingMethod {
    type Err = PairingError;

    /// Case-insensitive; `frames` is accepted for `FRAME`.
    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let upper = if upper == "FRAMES" { "FRAME".to_string() } else { upper };
        PairingMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == upper)
            .ok_or_else(|| PairingError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryPair {
    /// The query story.
    pub story_a: String,
    pub story_b: String,
    pub method: PairingMethod,
    /// Cosine for LEXICAL/SEMANTIC, distance for FRAME, unset otherwise.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PairSet {
    pub pairs: Vec<StoryPair>,
    pub seed: u64,
    pub deduplicated: bool,
}

/// Ranks candidates best-first: a lower key is better. Ties fall back to
/// candidate id through the caller.
fn ranked_candidates(query: &str, res: &StoryResources, method: PairingMethod) -> Result<Vec<(String, Option<f64>)>> {
    let missing = |story: &str, what| PairingError::MissingResource {
        method,
        story: story.to_string(),
        what,
    };
    let candidates: Vec<&String> = res.ids.iter().filter(|id| id.as_str() != query).collect();
    let mut scored: Vec<(String, Option<f64>, f64, f64)> = Vec::with_capacity(candidates.len());
    match method {
        PairingMethod::Lexical | PairingMethod::Semantic => {
            let (table, what) = if method == PairingMethod::Lexical {
                (&res.lexical, "a lexical document vector")
            } else {
                (&res.semantic, "a document vector")
            };
            let q = table.get(query).ok_or_else(|| missing(query, what))?;
            for c in candidates {
                let v = table.get(c).ok_or_else(|| missing(c, what))?;
                let sim = cosine(q, v).map_err(|_| missing(c, "a non-zero vector"))?;
                scored.push((c.clone(), Some(sim), -sim, 0.0));
            }
        }
        PairingMethod::Frame => {
            let q = res.frames.get(query).ok_or_else(|| missing(query, "frames"))?;
            for c in candidates {
                let f = res.frames.get(c).ok_or_else(|| missing(c, "frames"))?;
                let d = scaled_frame_distance(q, f).map_err(|_| missing(query, "a non-empty frame sequence"))?;
                scored.push((c.clone(), Some(d), d, 0.0));
            }
        }
        PairingMethod::Shape => {
            let q = res.profiles.get(query).ok_or_else(|| missing(query, "an arc profile"))?;
            for c in candidates {
                let p = res.profiles.get(c).ok_or_else(|| missing(c, "an arc profile"))?;
                let matched = shape_agreement(q, p).unwrap_or(false);
                scored.push((c.clone(), None, if matched { 0.0 } else { 1.0 }, profile_l1(q, p)));
            }
        }
        PairingMethod::Random => unreachable!("random partners are drawn, not ranked"),
    }
    scored.sort_by(|a, b| {
        a.2.partial_cmp(&b.2)
            .unwrap_or(Ordering::Equal)
            .then(a.3.partial_cmp(&b.3).unwrap_or(Ordering::Equal))
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(scored.into_iter().map(|(id, score, _, _)| (id, score)).collect())
}

fn profile_l1(a: &ArcProfile, b: &ArcProfile) -> f64 {
    (a.begin_avg - b.begin_avg).abs() + (a.mid_avg - b.mid_avg).abs() + (a.end_avg - b.end_avg).abs()
}

/// The `k` best partners for `query` under `method`, best first.
/// SHAPE prefers candidates with the same segment levels, then the
/// smallest L1 distance between segment averages. RANDOM draws `k`
/// distinct partners from a generator derived from `seed` and the query id.
pub fn nearest_k_by_method(
    query: &str,
    res: &StoryResources,
    method: PairingMethod,
    k: usize,
    seed_value: u64,
) -> Result<Vec<StoryPair>> {
    if res.ids.len() < 2 {
        return Err(PairingError::TooFewStories(res.ids.len()));
    }
    if !res.contains(query) {
        return Err(PairingError::UnknownStory(query.to_string()));
    }
    let make = |(story_b, score): (String, Option<f64>)| StoryPair {
        story_a: query.to_string(),
        story_b,
        method,
        score,
    };
    if method == PairingMethod::Random {
        let candidates: Vec<&String> = res.ids.iter().filter(|id| id.as_str() != query).collect();
        let mut rng = seed::rng(seed_value, &["random-pairs", query]);
        return Ok(index::sample(&mut rng, candidates.len(), k.min(candidates.len()))
            .into_iter()
            .map(|i| make((candidates[i].clone(), None)))
            .collect());
    }
    Ok(ranked_candidates(query, res, method)?.into_iter().take(k).map(make).collect())
}

pub fn nearest_by_method(query: &str, res: &StoryResources, method: PairingMethod, seed_value: u64) -> Result<StoryPair> {
    nearest_k_by_method(query, res, method, 1, seed_value).map(|mut v| v.remove(0))
}

/// One pair per story per method, in method order then corpus order.
pub fn generate_pairs(res: &StoryResources, methods: &[PairingMethod], seed_value: u64) -> Result<PairSet> {
    generate_pairs_k(res, methods, 1, seed_value)
}

pub fn generate_pairs_k(res: &StoryResources, methods: &[PairingMethod], k: usize, seed_value: u64) -> Result<PairSet> {
    if res.ids.len() < 2 {
        return Err(PairingError::TooFewStories(res.ids.len()));
    }
    let mut pairs = Vec::new();
    for &method in methods {
        let batches: Vec<Vec<StoryPair>> = res
            .ids
            .par_iter()
            .map(|q| nearest_k_by_method(q, res, method, k, seed_value))
            .collect::<Result<_>>()?;
        pairs.extend(batches.into_iter().flatten());
    }
    Ok(PairSet {
        pairs,
        seed: seed_value,
        deduplicated: false,
    })
}

/// Drops pairs whose unordered ids repeat an earlier pair of the same method.
pub fn dedup(set: &PairSet) -> PairSet {
    let mut seen: HashSet<(PairingMethod, String, String)> = HashSet::new();
    let pairs = set
        .pairs
        .iter()
        .filter(|p| {
            let (a, b) = unordered(&p.story_a, &p.story_b);
            seen.insert((p.method, a.to_string(), b.to_string()))
        })
        .cloned()
        .collect();
    PairSet {
        pairs,
        seed: set.seed,
        deduplicated: true,
    }
}

fn score_text(score: Option<f64>) -> String {
    score.map_or_else(String::new, |s| format!("{s:.6}"))
}

/// `story_a,story_b,method,score,seed` with a header; unset scores are empty.
pub fn write_pairs_csv<W: Write>(mut out: W, set: &PairSet) -> std::io::Result<()> {
    writeln!(out, "story_a,story_b,method,score,seed")?;
    for p in &set.pairs {
        writeln!(out, "{},{},{},{},{}", p.story_a, p.story_b, p.method, score_text(p.score), set.seed)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    story_a: String,
    story_b: String,
    method: PairingMethod,
    score: Option<f64>,
    seed: u64,
}

/// One JSON object per line.
pub fn write_pairs_records<W: Write>(mut out: W, set: &PairSet) -> std::io::Result<()> {
    for p in &set.pairs {
        let rec = PairRecord {
            story_a: p.story_a.clone(),
            story_b: p.story_b.clone(),
            method: p.method,
            score: p.score,
            seed: set.seed,
        };
        writeln!(out, "{}", serde_json::to_string(&rec).map_err(std::io::Error::other)?)?;
    }
    Ok(())
}

/// Reads either pair file layout; the seed is taken from the first row.
pub fn parse_pairs<R: BufRead>(reader: R) -> Result<PairSet> {
    let mut set = PairSet::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let bad = |message: String| PairingError::MalformedRecord { line: line_no, message };
        let line = line.map_err(|e| bad(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with("story_a,") {
            continue;
        }
        let rec: PairRecord = if line.starts_with('{') {
            serde_json::from_str(line).map_err(|e| bad(e.to_string()))?
        } else {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(format!("expected 5 fields, got {}", f.len())));
            }
            PairRecord {
                story_a: f[0].to_string(),
                story_b: f[1].to_string(),
                method: f[2].parse()?,
                score: if f[3].is_empty() {
                    None
                } else {
                    Some(f[3].parse().map_err(|_| bad(format!("bad score '{}'", f[3])))?)
                },
                seed: f[4].parse().map_err(|_| bad(format!("bad seed '{}'", f[4])))?,
            }
        };
        if set.pairs.is_empty() {
            set.seed = rec.seed;
        }
        set.pairs.push(StoryPair {
            story_a: rec.story_a,
            story_b: rec.story_b,
            method: rec.method,
            score: rec.score,
        });
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodScore {
    pub method: PairingMethod,
    pub annotated_pairs: usize,
    /// Positive rate per dimension, in canonical dimension order.
    pub dimension_rates: Vec<(AnalogyDimension, f64)>,
    /// Mean number of positive dimensions per annotated pair.
    pub method_average: f64,
    /// Share of annotated pairs whose arc levels agree, over pairs with
    /// both profiles; the story-shape reading of the SSS row.
    pub shape_agreement_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MethodReport {
    pub methods: Vec<MethodScore>,
    /// Annotations that matched no generated pair.
    pub unmatched: Vec<String>,
}

/// Attaches each annotation to every method that generated its unordered
/// pair, then summarises label rates per method.
pub fn score_methods(set: &PairSet, annotations: &[PairAnnotation], res: Option<&StoryResources>) -> Result<MethodReport> {
    let mut by_key: HashMap<(&str, &str), Vec<PairingMethod>> = HashMap::new();
    for p in &set.pairs {
        let methods = by_key.entry(unordered(&p.story_a, &p.story_b)).or_default();
        if !methods.contains(&p.method) {
            methods.push(p.method);
        }
    }
    let mut grouped: BTreeMap<PairingMethod, Vec<&PairAnnotation>> = BTreeMap::new();
    let mut report = MethodReport::default();
    for ann in annotations {
        match by_key.get(&ann.unordered_key()) {
            Some(methods) => {
                for m in methods {
                    grouped.entry(*m).or_default().push(ann);
                }
            }
            None => report.unmatched.push(ann.pair_id.clone()),
        }
    }
    if grouped.is_empty() {
        return Err(PairingError::NoAnnotatedPairs);
    }
    for (method, anns) in grouped {
        let n = anns.len() as f64;
        let dimension_rates = AnalogyDimension::ALL
            .iter()
            .map(|&d| (d, anns.iter().filter(|a| a.labels.get(d)).count() as f64 / n))
            .collect();
        let method_average = anns.iter().map(|a| a.labels.positives() as f64).sum::<f64>() / n;
        let shape_agreement_rate = res.and_then(|r| {
            let flags: Vec<bool> = anns
                .iter()
                .filter_map(|a| match (r.profiles.get(&a.story_a), r.profiles.get(&a.story_b)) {
                    (Some(pa), Some(pb)) => shape_agreement(pa, pb).ok(),
                    _ => None,
                })
                .collect();
            (!flags.is_empty()).then(|| flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64)
        });
        report.methods.push(MethodScore {
            method,
            annotated_pairs: anns.len(),
            dimension_rates,
            method_average,
            shape_agreement_rate,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DimensionLabels;
    use crate::frames::FrameSeq;

    fn with_vectors(vectors: &[(&str, Vec<f64>)]) -> StoryResources {
        let mut res = StoryResources::default();
        for (id, v) in vectors {
            res.ids.push(id.to_string());
            res.tokens.insert(id.to_string(), Default::default());
            res.lexical.insert(id.to_string(), v.clone());
        }
        res
    }

    #[test]
    fn nearest_lexical_by_cosine() {
        let res = with_vectors(&[
            ("q", vec![1.0, 0.0]),
            ("x", vec![0.9, (1.0f64 - 0.81).sqrt()]),
            ("y", vec![0.1, (1.0f64 - 0.01).sqrt()]),
        ]);
        let p = nearest_by_method("q", &res, PairingMethod::Lexical, 0).unwrap();
        assert_eq!(p.story_b, "x");
        assert!((p.score.unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_smallest_id() {
        let res = with_vectors(&[("q", vec![1.0, 0.0]), ("f9", vec![1.0, 1.0]), ("f2", vec![1.0, 1.0])]);
        assert_eq!(nearest_by_method("q", &res, PairingMethod::Lexical, 0).unwrap().story_b, "f2");
    }

    #[test]
    fn frame_method_uses_query_as_reference() {
        let mut res = with_vectors(&[("q", vec![1.0]), ("c1", vec![1.0]), ("c2", vec![1.0])]);
        res.frames.insert("q".into(), FrameSeq::new("q", &["A", "B"]));
        // extra labels outside the query inventory are filtered away
        res.frames.insert("c1".into(), FrameSeq::new("c1", &["A", "Z", "B", "Z"]));
        res.frames.insert("c2".into(), FrameSeq::new("c2", &["B", "A"]));
        let p = nearest_by_method("q", &res, PairingMethod::Frame, 0).unwrap();
        assert_eq!((p.story_b.as_str(), p.score), ("c1", Some(0.0)));
    }

    #[test]
    fn missing_resources_and_small_corpora() {
        let res = with_vectors(&[("q", vec![1.0])]);
        assert_eq!(
            nearest_by_method("q", &res, PairingMethod::Lexical, 0),
            Err(PairingError::TooFewStories(1))
        );
        let res = with_vectors(&[("q", vec![1.0]), ("x", vec![1.0])]);
        assert!(matches!(
            nearest_by_method("q", &res, PairingMethod::Semantic, 0),
            Err(PairingError::MissingResource { .. })
        ));
    }

    #[test]
    fn random_partners_are_seeded_and_distinct() {
        let res = with_vectors(&[("a", vec![1.0]), ("b", vec![1.0]), ("c", vec![1.0]), ("d", vec![1.0])]);
        let one = generate_pairs(&res, &[PairingMethod::Random], 7).unwrap();
        assert_eq!(one, generate_pairs(&res, &[PairingMethod::Random], 7).unwrap());
        assert_eq!(one.pairs.len(), 4);
        assert!(one.pairs.iter().all(|p| p.story_a != p.story_b && p.score.is_none()));
        let k3 = nearest_k_by_method("a", &res, PairingMethod::Random, 3, 7).unwrap();
        let distinct: HashSet<&str> = k3.iter().map(|p| p.story_b.as_str()).collect();
        assert_eq!(distinct.len(), 3);
    }

    #[test]
    fn dedup_is_per_method() {
        let pair = |a: &str, b: &str, m| StoryPair {
            story_a: a.into(),
            story_b: b.into(),
            method: m,
            score: None,
        };
        let set = PairSet {
            pairs: vec![
                pair("a", "b", PairingMethod::Lexical),
                pair("b", "a", PairingMethod::Lexical),
                pair("a", "b", PairingMethod::Frame),
            ],
            ..Default::default()
        };
        let d = dedup(&set);
        assert_eq!(d.pairs.len(), 2);
        assert!(d.deduplicated);
        assert!(dedup(&PairSet::default()).pairs.is_empty());
    }

    fn annotation(id: &str, a: &str, b: &str, positives: &[AnalogyDimension]) -> PairAnnotation {
        let mut labels = DimensionLabels::default();
        for d in positives {
            labels.set(*d, true);
        }
        PairAnnotation {
            pair_id: id.into(),
            story_a: a.into(),
            story_b: b.into(),
            labels,
            evidence: BTreeMap::new(),
        }
    }

    #[test]
    fn method_average_arithmetic() {
        use AnalogyDimension::*;
        let set = PairSet {
            pairs: vec![
                StoryPair { story_a: "a".into(), story_b: "b".into(), method: PairingMethod::Lexical, score: None },
                StoryPair { story_a: "c".into(), story_b: "d".into(), method: PairingMethod::Lexical, score: None },
            ],
            ..Default::default()
        };
        let anns = vec![
            annotation("p1", "b", "a", &[Ra, Ls, Mp]),
            annotation("p2", "c", "d", &[Ra]),
            annotation("p3", "x", "y", &[]),
        ];
        let report = score_methods(&set, &anns, None).unwrap();
        let lex = &report.methods[0];
        assert_eq!(lex.annotated_pairs, 2);
        assert_eq!(lex.method_average, 2.0);
        assert_eq!(lex.dimension_rates[Ra.index()], (Ra, 1.0));
        assert_eq!(report.unmatched, vec!["p3".to_string()]);
        assert_eq!(
            score_methods(&set, &anns[2..], None),
            Err(PairingError::NoAnnotatedPairs)
        );
    }

    #[test]
    fn pair_files_round_trip() {
        let set = PairSet {
            pairs: vec![
                StoryPair { story_a: "a".into(), story_b: "b".into(), method: PairingMethod::Frame, score: Some(0.25) },
                StoryPair { story_a: "b".into(), story_b: "a".into(), method: PairingMethod::Random, score: None },
            ],
            seed: 9,
            deduplicated: false,
        };
        let mut csv = Vec::new();
        write_pairs_csv(&mut csv, &set).unwrap();
        assert_eq!(parse_pairs(csv.as_slice()).unwrap(), set);
        let mut records = Vec::new();
        write_pairs_records(&mut records, &set).unwrap();
        assert_eq!(parse_pairs(records.as_slice()).unwrap(), set);
        assert_eq!("frames".parse::<PairingMethod>().unwrap(), PairingMethod::Frame);
    }
}
