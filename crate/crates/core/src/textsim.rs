//! Tokenization, TF-IDF, embedding providers and cosine similarity.
//!
//! No neural encoder runs here. Word and document vectors come from
//! precomputed text tables, or from [`HashEmbedding`] when none are supplied,
//! in which case every similarity is synthetic.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum TextSimError {
    #[error("cannot fit TF-IDF on an empty corpus")]
    EmptyCorpus,
    #[error("word '{0}' does not occur in the document")]
    WordNotInDoc(String),
    #[error("no token of the document has a known vector")]
    NoKnownTokens,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine of a zero vector is undefined")]
    ZeroVector,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("bad embedding provider '{0}' (expected a file path or hash:<dimension>:<seed>)")]
    BadProviderSpec(String),
}

pub type Result<T> = std::result::Result<T, TextSimError>;

/// Lowercased word tokens in document order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenStream {
    tokens: Vec<String>,
}

impl TokenStream {
    /// Wraps already-segmented tokens without re-tokenizing them.
    pub fn new(tokens: Vec<String>) -> Self {
        TokenStream { tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Occurrences of `word`.
    pub fn count(&self, word: &str) -> usize {
        self.tokens.iter().filter(|t| *t == word).count()
    }

    /// Term counts keyed in sorted order.
    pub fn counts(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for t in &self.tokens {
            *out.entry(t.as_str()).or_default() += 1;
        }
        out
    }

    pub fn distinct(&self) -> BTreeSet<&str> {
        self.tokens.iter().map(String::as_str).collect()
    }

    /// Drops tokens found in a stop list.
    pub fn without(&self, stop: &HashSet<String>) -> Self {
        TokenStream {
            tokens: self
                .tokens
                .iter()
                .filter(|t| !stop.contains(*t))
                .cloned()
                .collect(),
        }
    }
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-')
}

/// Splits text into lowercase alphabetic words. Apostrophes and hyphens
/// survive only between two letters; everything else separates tokens.
pub fn tokenize(text: &str) -> TokenStream {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphabetic() {
            current.extend(c.to_lowercase().filter(|l| l.is_alphabetic()));
        } else if is_joiner(c)
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphabetic())
            && chars[i - 1].is_alphabetic()
        {
            current.push(if c == '-' { '-' } else { '\'' });
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenStream { tokens }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TfIdfModel {
    doc_count: usize,
    doc_freq: HashMap<String, usize>,
}

impl TfIdfModel {
    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn doc_freq(&self, word: &str) -> usize {
        self.doc_freq.get(word).copied().unwrap_or(0)
    }

    /// Smoothed inverse document frequency, `ln((1+N)/(1+df)) + 1`.
    pub fn idf(&self, word: &str) -> f64 {
        ((1.0 + self.doc_count as f64) / (1.0 + self.doc_freq(word) as f64)).ln() + 1.0
    }
}

pub fn fit_tfidf(docs: &[TokenStream]) -> Result<TfIdfModel> {
    if docs.is_empty() {
        return Err(TextSimError::EmptyCorpus);
    }
    let mut doc_freq: HashMap<String, usize> = HashMap::new();
    for doc in docs {
        for word in doc.distinct() {
            *doc_freq.entry(word.to_string()).or_default() += 1;
        }
    }
    Ok(TfIdfModel {
        doc_count: docs.len(),
        doc_freq,
    })
}

/// `tf(word, doc) * idf(word)` with `tf = count / |doc|`.
pub fn tfidf_weight(model: &TfIdfModel, doc: &TokenStream, word: &str) -> Result<f64> {
    let count = doc.count(word);
    if count == 0 {
        return Err(TextSimError::WordNotInDoc(word.to_string()));
    }
    Ok(count as f64 / doc.len() as f64 * model.idf(word))
}

/// Yields a fixed-dimension vector per key; repeated calls agree.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, key: &str) -> Option<Vec<f64>>;

    /// True when vectors carry no linguistic signal.
    fn is_synthetic(&self) -> bool {
        false
    }

    fn describe(&self) -> String;
}

/// Vectors keyed by word or story id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
    source: String,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        EmbeddingTable {
            dimension,
            vectors: HashMap::new(),
            source: "in-memory".into(),
        }
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(TextSimError::DimensionMismatch {
                left: self.dimension,
                right: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(TextSimError::Malformed {
                line: 0,
                message: "non-finite vector component".into(),
            });
        }
        self.vectors.insert(key.into(), vector);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for EmbeddingTable {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, key: &str) -> Option<Vec<f64>> {
        self.vectors.get(key).cloned()
    }

    fn describe(&self) -> String {
        format!("table:{} ({} keys, dim {})", self.source, self.len(), self.dimension)
    }
}

/// Reads a word2vec-style text table: `key v1 v2 ... vd` per line, with an
/// optional `count dimension` header line.
pub fn load_embedding_table(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|source| TextSimError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut table = parse_embedding_table(BufReader::new(file))?;
    table.source = path.display().to_string();
    Ok(table)
}

pub fn parse_embedding_table<R: BufRead>(reader: R) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| TextSimError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if table.is_none() && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            let dim: usize = fields[1].parse().unwrap_or(0);
            if dim == 0 {
                return Err(TextSimError::Malformed {
                    line: line_no,
                    message: "header dimension must be positive".into(),
                });
            }
            table = Some(EmbeddingTable::new(dim));
            continue;
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| TextSimError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        if values.is_empty() {
            return Err(TextSimError::Malformed {
                line: line_no,
                message: format!("key '{}' has no vector", fields[0]),
            });
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(values.len()));
        t.insert(fields[0], values).map_err(|e| TextSimError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
    }
    table.ok_or(TextSimError::Malformed {
        line: 0,
        message: "empty embedding table".into(),
    })
}

/// Deterministic pseudo-random unit vectors keyed by string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedding {
    pub dimension: usize,
    pub seed: u64,
}

impl EmbeddingProvider for HashEmbedding {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, key: &str) -> Option<Vec<f64>> {
        Some(hash_embedding(key, self.dimension, self.seed))
    }

    fn is_synthetic(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        format!("hash:{}:{}", self.dimension, self.seed)
    }
}

/// A unit-norm Gaussian direction drawn from a stream keyed by
/// `(key, dimension, seed)`.
pub fn hash_embedding(key: &str, dimension: usize, seed: u64) -> Vec<f64> {
    assert!(dimension > 0, "embedding dimension must be positive");
    let mut rng = seed::rng(seed, &["hash-embedding", &dimension.to_string(), key]);
    loop {
        let v: Vec<f64> = (0..dimension).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Parses a provider flag: `hash:<dimension>:<seed>` or a table path.
pub fn provider_from_spec(spec: &str) -> Result<Box<dyn EmbeddingProvider>> {
    if let Some(rest) = spec.strip_prefix("hash:") {
        let mut parts = rest.split(':');
        let dimension = parts.next().and_then(|d| d.parse::<usize>().ok());
        let seed = parts.next().and_then(|s| s.parse::<u64>().ok());
        return match (dimension, seed, parts.next()) {
            (Some(d), Some(s), None) if d > 0 => Ok(Box::new(HashEmbedding {
                dimension: d,
                seed: s,
            })),
            _ => Err(TextSimError::BadProviderSpec(spec.to_string())),
        };
    }
    Ok(Box::new(load_embedding_table(Path::new(spec))?))
}

/// TF-IDF-weighted mean of the vectors of the document's known words.
/// Words without a vector are skipped.
pub fn embed_document_weighted(
    doc: &TokenStream,
    words: &dyn EmbeddingProvider,
    model: &TfIdfModel,
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; words.dimension()];
    let mut total = 0.0;
    let len = doc.len() as f64;
    for (word, count) in doc.counts() {
        let Some(vector) = words.embed(word) else {
            continue;
        };
        let weight = count as f64 / len * model.idf(word);
        for (a, x) in acc.iter_mut().zip(&vector) {
            *a += weight * x;
        }
        total += weight;
    }
    if total == 0.0 {
        return Err(TextSimError::NoKnownTokens);
    }
    Ok(acc.into_iter().map(|a| a / total).collect())
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(TextSimError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum();
    let nv: f64 = v.iter().map(|b| b * b).sum();
    if nu == 0.0 || nv == 0.0 {
        return Err(TextSimError::ZeroVector);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Jaccard similarity of token sets; 0 when both are empty.
pub fn lexical_overlap(a: &TokenStream, b: &TokenStream) -> f64 {
    let sa = a.distinct();
    let sb = b.distinct();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}
