//! Stories, moral tags, analogy annotations and the lexicons/ratings that
//! accompany them, plus line-delimited ingestion with validation.
//!
//! Every input lives in its own file keyed by story id so that frame parses
//! and embedding tables produced by external tools plug in unchanged.
//! Corpus and annotation files are JSON lines; the lexicon is tab-separated
//! and ratings are comma-separated.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("line {line}: duplicate id '{id}'")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: unknown moral tag '{tag}'")]
    UnknownTag { line: usize, tag: String },
    #[error("line {line}: unknown story id '{id}'")]
    UnknownStoryId { line: usize, id: String },
    #[error("line {line}: pair '{pair_id}' has no label for {dimension}")]
    MissingDimension {
        line: usize,
        pair_id: String,
        dimension: AnalogyDimension,
    },
    #[error("line {line}: unknown analogy dimension '{name}'")]
    UnknownDimension { line: usize, name: String },
    #[error("line {line}: pair '{}' violates {}", .violation.pair_id, .violation.rule)]
    ConstraintViolation { line: usize, violation: Violation },
    #[error("line {line}: pair '{pair_id}' has negated evidence triple '{triple}'")]
    NegatedTriple {
        line: usize,
        pair_id: String,
        triple: String,
    },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CorpusError>;

macro_rules! symbolic_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} '{}'", $kind, other)),
                }
            }
        }
    };
}

symbolic_enum!(
    /// One of the fifteen moral classes.
    MoralTag, "moral tag" {
        Consequence => "CONSEQUENCE",
        Content => "CONTENT",
        Danger => "DANGER",
        Effort => "EFFORT",
        Flattery => "FLATTERY",
        Friends => "FRIENDS",
        Greed => "GREED",
        Lazy => "LAZY",
        Learn => "LEARN",
        Opportunity => "OPPORTUNITY",
        Respect => "RESPECT",
        TrueNature => "TRUE-NATURE",
        Trust => "TRUST",
        Weak => "WEAK",
        Worthiness => "WORTHINESS",
    }
);

symbolic_enum!(
    /// Analogy dimensions in canonical report order. `Ls` (literal
    /// similarity) is judged alongside the six analogy types.
    AnalogyDimension, "analogy dimension" {
        Saa => "SAA",
        Daa => "DAA",
        Ra => "RA",
        Ea => "EA",
        Sa => "SA",
        Mp => "MP",
        Ls => "LS",
    }
);

impl AnalogyDimension {
    /// Position in the canonical ordering.
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Story {
    pub id: String,
    pub title: String,
    pub text: String,
    pub moral: Option<String>,
    pub tags: BTreeSet<MoralTag>,
}

impl Story {
    /// Stories without a moral are excluded from moral clustering.
    pub fn has_moral(&self) -> bool {
        self.moral.as_deref().is_some_and(|m| !m.trim().is_empty())
    }
}

/// A `subject - predicate - object` evidence fragment, stored verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EvidenceTriple {
    pub subject: String,
    pub predicate: String,
    /// Empty for unary predicates.
    pub object: String,
}

const TRIPLE_DELIMITER: &str = " - ";

impl EvidenceTriple {
    pub fn new(subject: &str, predicate: &str, object: &str) -> Self {
        EvidenceTriple {
            subject: subject.to_string(),
            predicate: predicate.to_string(),
            object: object.to_string(),
        }
    }

    /// True when the predicate opens with a negation marker ("not"/"no").
    pub fn is_negated(&self) -> bool {
        self.predicate
            .split_whitespace()
            .next()
            .map(|w| {
                let w = w.to_lowercase();
                w == "not" || w == "no"
            })
            .unwrap_or(false)
    }
}

impl FromStr for EvidenceTriple {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(TRIPLE_DELIMITER).map(str::trim).collect();
        let (subject, predicate, object) = match parts.as_slice() {
            [s, p] => (*s, *p, ""),
            [s, p, o] => (*s, *p, *o),
            _ => return Err(format!("triple '{s}' is not 'subject - predicate[ - object]'")),
        };
        if predicate.is_empty() {
            return Err(format!("triple '{s}' has an empty predicate"));
        }
        Ok(EvidenceTriple::new(subject, predicate, object))
    }
}

impl fmt::Display for EvidenceTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.object.is_empty() {
            write!(f, "{}{}{}", self.subject, TRIPLE_DELIMITER, self.predicate)
        } else {
            write!(
                f,
                "{}{d}{}{d}{}",
                self.subject,
                self.predicate,
                self.object,
                d = TRIPLE_DELIMITER
            )
        }
    }
}

/// Binary judgments over all seven dimensions, indexed canonically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DimensionLabels([bool; 7]);

impl DimensionLabels {
    pub fn new(values: [bool; 7]) -> Self {
        DimensionLabels(values)
    }

    pub fn get(&self, dim: AnalogyDimension) -> bool {
        self.0[dim.index()]
    }

    pub fn set(&mut self, dim: AnalogyDimension, value: bool) {
        self.0[dim.index()] = value;
    }

    pub fn positives(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn as_array(&self) -> [bool; 7] {
        self.0
    }
}

pub type EvidencePair = (EvidenceTriple, EvidenceTriple);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairAnnotation {
    pub pair_id: String,
    pub story_a: String,
    pub story_b: String,
    pub labels: DimensionLabels,
    pub evidence: BTreeMap<AnalogyDimension, Vec<EvidencePair>>,
}

impl PairAnnotation {
    /// The pair's ids as an ordered (min, max) key.
    pub fn unordered_key(&self) -> (&str, &str) {
        unordered(&self.story_a, &self.story_b)
    }
}

pub(crate) fn unordered<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Word happiness scores; lookups are case-insensitive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HedonometerLexicon {
    entries: HashMap<String, f64>,
}

impl HedonometerLexicon {
    /// Builds a lexicon, lowercasing words. Earlier entries win on collision.
    pub fn from_entries<I, S>(entries: I) -> std::result::Result<Self, String>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<str>,
    {
        let mut map = HashMap::new();
        for (word, score) in entries {
            if !score.is_finite() {
                return Err(format!("score for '{}' is not finite", word.as_ref()));
            }
            map.entry(word.as_ref().to_lowercase()).or_insert(score);
        }
        Ok(HedonometerLexicon { entries: map })
    }

    pub fn score(&self, word: &str) -> Option<f64> {
        if let Some(s) = self.entries.get(word) {
            return Some(*s);
        }
        self.entries.get(&word.to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// A copy with every score shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        HedonometerLexicon {
            entries: self
                .entries
                .iter()
                .map(|(w, s)| (w.clone(), s + delta))
                .collect(),
        }
    }
}

/// One rater's binary judgments, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingSet {
    pub rater_id: String,
    pub items: Vec<(String, AnalogyDimension, bool)>,
}

/// The invariant an annotation breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Rule {
    /// story_a and story_b are the same story.
    SelfPair,
    /// SA is positive while EA is negative.
    StructuralWithoutEvent,
    /// Evidence recorded for a dimension labeled false.
    EvidenceOnNegative,
    /// An evidence triple uses a negated predicate.
    NegatedTriple,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::SelfPair => "self-pair (story_a = story_b)",
            Rule::StructuralWithoutEvent => "SA requires EA (SA=true with EA=false)",
            Rule::EvidenceOnNegative => "evidence on a negative label",
            Rule::NegatedTriple => "negated evidence triple",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub pair_id: String,
    pub dimension: Option<AnalogyDimension>,
    pub rule: Rule,
    pub detail: String,
}

/// How `load_annotations` treats invariant violations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Reject the file on the first violation.
    #[default]
    Strict,
    /// Keep violating annotations so `validate_annotations` can audit them.
    Lenient,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CorpusError::io(path, e))
}

/// Yields `(line_number, trimmed_line)` for non-blank lines.
fn numbered_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((i + 1, l.trim().to_string()))),
            Err(e) => Some(Err(CorpusError::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })),
        })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StoryRecord {
    id: String,
    #[serde(default)]
    title: String,
    text: String,
    #[serde(default)]
    moral: Option<String>,
    #[serde(default)]
    tags: Vec<String>,
}

pub fn load_corpus(path: &Path) -> Result<Vec<Story>> {
    parse_corpus(open(path)?)
}

pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<Story>> {
    let mut stories = Vec::new();
    let mut seen = HashSet::new();
    for item in numbered_lines(reader) {
        let (line, text) = item?;
        let record: StoryRecord =
            serde_json::from_str(&text).map_err(|e| CorpusError::MalformedRecord {
                line,
                message: e.to_string(),
            })?;
        if record.id.is_empty() {
            return Err(CorpusError::MalformedRecord {
                line,
                message: "empty id".into(),
            });
        }
        if record.text.trim().is_empty() {
            return Err(CorpusError::MalformedRecord {
                line,
                message: format!("story '{}' has empty text", record.id),
            });
        }
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line,
                id: record.id,
            });
        }
        let mut tags = BTreeSet::new();
        for tag in &record.tags {
            let parsed = tag.parse::<MoralTag>().map_err(|_| CorpusError::UnknownTag {
                line,
                tag: tag.clone(),
            })?;
            tags.insert(parsed);
        }
        stories.push(Story {
            id: record.id,
            title: record.title,
            text: record.text,
            moral: record.moral,
            tags,
        });
    }
    Ok(stories)
}

pub fn write_corpus<W: Write>(mut out: W, stories: &[Story]) -> std::io::Result<()> {
    for story in stories {
        let record = serde_json::json!({
            "id": story.id,
            "title": story.title,
            "text": story.text,
            "moral": story.moral,
            "tags": story.tags.iter().map(|t| t.as_str()).collect::<Vec<_>>(),
        });
        writeln!(out, "{record}")?;
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRecord {
    pair_id: String,
    story_a: String,
    story_b: String,
    labels: Map<String, Value>,
    #[serde(default)]
    evidence: BTreeMap<String, Vec<[String; 2]>>,
}

pub fn load_annotations(path: &Path, corpus: &[Story], mode: LoadMode) -> Result<Vec<PairAnnotation>> {
    parse_annotations(open(path)?, corpus, mode)
}

pub fn parse_annotations<R: BufRead>(
    reader: R,
    corpus: &[Story],
    mode: LoadMode,
) -> Result<Vec<PairAnnotation>> {
    let known: HashSet<&str> = corpus.iter().map(|s| s.id.as_str()).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for item in numbered_lines(reader) {
        let (line, text) = item?;
        let record: AnnotationRecord =
            serde_json::from_str(&text).map_err(|e| CorpusError::MalformedRecord {
                line,
                message: e.to_string(),
            })?;
        for id in [&record.story_a, &record.story_b] {
            if !known.contains(id.as_str()) {
                return Err(CorpusError::UnknownStoryId {
                    line,
                    id: id.clone(),
                });
            }
        }
        if !seen.insert(record.pair_id.clone()) {
            return Err(CorpusError::DuplicateId {
                line,
                id: record.pair_id,
            });
        }
        let annotation = annotation_from_record(record, line)?;
        if mode == LoadMode::Strict {
            if let Some(v) = check_annotation(&annotation).into_iter().next() {
                return Err(match v.rule {
                    Rule::NegatedTriple => CorpusError::NegatedTriple {
                        line,
                        pair_id: v.pair_id,
                        triple: v.detail,
                    },
                    _ => CorpusError::ConstraintViolation { line, violation: v },
                });
            }
        }
        out.push(annotation);
    }
    Ok(out)
}

fn annotation_from_record(record: AnnotationRecord, line: usize) -> Result<PairAnnotation> {
    for key in record.labels.keys() {
        key.parse::<AnalogyDimension>()
            .map_err(|_| CorpusError::UnknownDimension {
                line,
                name: key.clone(),
            })?;
    }
    let mut labels = DimensionLabels::default();
    for &dim in AnalogyDimension::ALL {
        let value = match record.labels.get(dim.as_str()) {
            None | Some(Value::Null) => {
                return Err(CorpusError::MissingDimension {
                    line,
                    pair_id: record.pair_id,
                    dimension: dim,
                })
            }
            Some(v) => parse_bool_value(v).ok_or_else(|| CorpusError::MalformedRecord {
                line,
                message: format!("label {dim} must be a boolean, got {v}"),
            })?,
        };
        labels.set(dim, value);
    }
    let mut evidence = BTreeMap::new();
    for (name, entries) in record.evidence {
        let dim = name
            .parse::<AnalogyDimension>()
            .map_err(|_| CorpusError::UnknownDimension { line, name })?;
        let mut pairs = Vec::with_capacity(entries.len());
        for [left, right] in entries {
            let parse = |s: &str| {
                s.parse::<EvidenceTriple>()
                    .map_err(|message| CorpusError::MalformedRecord { line, message })
            };
            pairs.push((parse(&left)?, parse(&right)?));
        }
        if !pairs.is_empty() {
            evidence.insert(dim, pairs);
        }
    }
    Ok(PairAnnotation {
        pair_id: record.pair_id,
        story_a: record.story_a,
        story_b: record.story_b,
        labels,
        evidence,
    })
}

fn parse_bool_value(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::Number(n) => match n.as_u64() {
            Some(0) => Some(false),
            Some(1) => Some(true),
            _ => None,
        },
        _ => None,
    }
}

pub fn write_annotations<W: Write>(mut out: W, annotations: &[PairAnnotation]) -> std::io::Result<()> {
    for ann in annotations {
        // canonical dimension order in the labels object
        let labels: String = AnalogyDimension::ALL
            .iter()
            .map(|d| format!("\"{}\":{}", d.as_str(), ann.labels.get(*d)))
            .collect::<Vec<_>>()
            .join(",");
        let evidence: Map<String, Value> = ann
            .evidence
            .iter()
            .map(|(dim, pairs)| {
                let arr = pairs
                    .iter()
                    .map(|(a, b)| serde_json::json!([a.to_string(), b.to_string()]))
                    .collect();
                (dim.as_str().to_string(), Value::Array(arr))
            })
            .collect();
        writeln!(
            out,
            "{{\"pair_id\":{},\"story_a\":{},\"story_b\":{},\"labels\":{{{}}},\"evidence\":{}}}",
            Value::from(ann.pair_id.as_str()),
            Value::from(ann.story_a.as_str()),
            Value::from(ann.story_b.as_str()),
            labels,
            Value::Object(evidence)
        )?;
    }
    Ok(())
}

fn check_annotation(ann: &PairAnnotation) -> Vec<Violation> {
    let mut out = Vec::new();
    let report = |dimension, rule, detail: String| Violation {
        pair_id: ann.pair_id.clone(),
        dimension,
        rule,
        detail,
    };
    if ann.story_a == ann.story_b {
        out.push(report(None, Rule::SelfPair, ann.story_a.clone()));
    }
    if ann.labels.get(AnalogyDimension::Sa) && !ann.labels.get(AnalogyDimension::Ea) {
        out.push(report(
            Some(AnalogyDimension::Sa),
            Rule::StructuralWithoutEvent,
            String::new(),
        ));
    }
    for (dim, pairs) in &ann.evidence {
        if !ann.labels.get(*dim) && !pairs.is_empty() {
            out.push(report(
                Some(*dim),
                Rule::EvidenceOnNegative,
                format!("{} evidence entries", pairs.len()),
            ));
        }
        for (a, b) in pairs {
            for triple in [a, b] {
                if triple.is_negated() {
                    out.push(report(Some(*dim), Rule::NegatedTriple, triple.to_string()));
                }
            }
        }
    }
    out
}

/// One report per violated invariant across all annotations.
pub fn validate_annotations(annotations: &[PairAnnotation]) -> Vec<Violation> {
    annotations.iter().flat_map(check_annotation).collect()
}

/// Tag counts over the corpus; every tag is present, possibly at zero.
pub fn moral_distribution(corpus: &[Story]) -> BTreeMap<MoralTag, usize> {
    let mut counts: BTreeMap<MoralTag, usize> = MoralTag::ALL.iter().map(|t| (*t, 0)).collect();
    for story in corpus {
        for tag in &story.tags {
            *counts.entry(*tag).or_default() += 1;
        }
    }
    counts
}

/// Loads a `word<TAB>score` lexicon. Extra columns are ignored and a first
/// line whose score column is not numeric is treated as a header.
pub fn load_lexicon(path: &Path) -> Result<HedonometerLexicon> {
    parse_lexicon(open(path)?)
}

pub fn parse_lexicon<R: BufRead>(reader: R) -> Result<HedonometerLexicon> {
    let mut entries = Vec::new();
    for (index, item) in numbered_lines(reader).enumerate() {
        let (line, text) = item?;
        let mut cols = if text.contains('\t') {
            text.split('\t').map(str::trim).collect::<Vec<_>>()
        } else {
            text.split_whitespace().collect::<Vec<_>>()
        };
        if cols.len() < 2 {
            return Err(CorpusError::MalformedRecord {
                line,
                message: "expected 'word<TAB>score'".into(),
            });
        }
        cols.truncate(2);
        match cols[1].parse::<f64>() {
            Ok(score) if score.is_finite() => entries.push((cols[0].to_string(), score)),
            Ok(_) => {
                return Err(CorpusError::MalformedRecord {
                    line,
                    message: format!("non-finite score for '{}'", cols[0]),
                })
            }
            Err(_) if index == 0 => continue,
            Err(e) => {
                return Err(CorpusError::MalformedRecord {
                    line,
                    message: format!("bad score '{}': {e}", cols[1]),
                })
            }
        }
    }
    HedonometerLexicon::from_entries(entries)
        .map_err(|message| CorpusError::MalformedRecord { line: 0, message })
}

/// Loads `rater_id,pair_id,dimension,boolean` lines grouped by rater in
/// order of first appearance. A header line is skipped.
pub fn load_ratings(path: &Path) -> Result<Vec<RatingSet>> {
    parse_ratings(open(path)?)
}

pub fn parse_ratings<R: BufRead>(reader: R) -> Result<Vec<RatingSet>> {
    let mut sets: Vec<RatingSet> = Vec::new();
    let mut seen: HashSet<(String, String, AnalogyDimension)> = HashSet::new();
    for (index, item) in numbered_lines(reader).enumerate() {
        let (line, text) = item?;
        let cols: Vec<&str> = text.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(CorpusError::MalformedRecord {
                line,
                message: "expected 'rater_id,pair_id,dimension,boolean'".into(),
            });
        }
        let dim = match cols[2].parse::<AnalogyDimension>() {
            Ok(d) => d,
            Err(_) if index == 0 && cols[0].eq_ignore_ascii_case("rater_id") => continue,
            Err(_) => {
                return Err(CorpusError::UnknownDimension {
                    line,
                    name: cols[2].to_string(),
                })
            }
        };
        let value = match cols[3].to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => true,
            "false" | "0" | "no" => false,
            other => {
                return Err(CorpusError::MalformedRecord {
                    line,
                    message: format!("bad boolean '{other}'"),
                })
            }
        };
        let (rater, pair) = (cols[0].to_string(), cols[1].to_string());
        if !seen.insert((rater.clone(), pair.clone(), dim)) {
            return Err(CorpusError::DuplicateId {
                line,
                id: format!("{rater}/{pair}/{dim}"),
            });
        }
        match sets.iter_mut().find(|s| s.rater_id == rater) {
            Some(set) => set.items.push((pair, dim, value)),
            None => sets.push(RatingSet {
                rater_id: rater,
                items: vec![(pair, dim, value)],
            }),
        }
    }
    Ok(sets)
}
