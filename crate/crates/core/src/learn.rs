//! Full-batch gradient-descent logistic regression and the experiment
//! harnesses built on it: one-vs-all moral clustering, per-dimension
//! analogy classifiers over pair features, and transfer-pair construction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{AnalogyDimension, MoralTag, PairAnnotation, Story};
use crate::frames::{frame_features, scaled_frame_distance, FrameSeq};
use crate::metrics::{accuracy, f1, ConfusionCounts};
use crate::resources::StoryResources;
use crate::seed;
use crate::shapes::shape_agreement;
use crate::textsim::{cosine, lexical_overlap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite feature value")]
    NonFinite,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("unknown story '{0}'")]
    UnknownStory(String),
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("model file: {0}")]
    ModelFormat(String),
}

pub type Result<T> = std::result::Result<T, LearnError>;

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    pub row_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, row_ids: Vec<String>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(LearnError::DimensionMismatch {
                expected: rows * cols,
                got: values.len(),
            });
        }
        if row_ids.len() != rows {
            return Err(LearnError::DimensionMismatch {
                expected: rows,
                got: row_ids.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::NonFinite);
        }
        Ok(FeatureMatrix {
            rows,
            cols,
            values,
            row_ids,
        })
    }

    /// Builds from rows; ids default to the row index.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(LearnError::DimensionMismatch {
                expected: cols,
                got: bad.len(),
            });
        }
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        FeatureMatrix::new(rows.len(), cols, rows.concat(), ids)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows: indices.len(),
            cols: self.cols,
            values,
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 200,
            l2: 1e-3,
            seed: 0,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LearnError::BadConfig("learning_rate must be > 0".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(LearnError::BadConfig("l2 must be >= 0".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(LearnError::BadConfig("threshold must be in (0, 1)".into()));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: TrainConfig,
}

impl LogisticModel {
    pub fn zeros(cols: usize, config: TrainConfig) -> Self {
        LogisticModel {
            weights: vec![0.0; cols],
            bias: 0.0,
            config,
        }
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.predict_proba(x) >= self.config.threshold
    }

    pub fn confusion(&self, x: &FeatureMatrix, y: &[bool]) -> ConfusionCounts {
        let predicted: Vec<bool> = (0..x.rows()).map(|i| self.predict(x.row(i))).collect();
        ConfusionCounts::from_predictions(&predicted, y)
    }
}

/// Mean cross-entropy plus `l2/2 * |w|^2` (bias unpenalized).
pub fn loss(x: &FeatureMatrix, y: &[bool], model: &LogisticModel) -> f64 {
    let n = x.rows() as f64;
    let data: f64 = (0..x.rows())
        .map(|i| {
            let z = model.logit(x.row(i));
            softplus(z) - if y[i] { z } else { 0.0 }
        })
        .sum::<f64>()
        / n;
    let penalty = 0.5 * model.config.l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    data + penalty
}

/// Analytic gradient of [`loss`] with respect to (weights, bias).
pub fn gradient(x: &FeatureMatrix, y: &[bool], model: &LogisticModel) -> (Vec<f64>, f64) {
    let n = x.rows() as f64;
    let mut gw = vec![0.0; x.cols()];
    let mut gb = 0.0;
    for (i, &label) in y.iter().enumerate().take(x.rows()) {
        let row = x.row(i);
        let err = model.predict_proba(row) - if label { 1.0 } else { 0.0 };
        for (g, v) in gw.iter_mut().zip(row) {
            *g += err * v;
        }
        gb += err;
    }
    for (g, w) in gw.iter_mut().zip(&model.weights) {
        *g = *g / n + model.config.l2 * w;
    }
    (gw, gb / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_accuracy: f64,
    pub eval_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EpochTrace {
    pub records: Vec<EpochRecord>,
}

impl EpochTrace {
    /// `epoch,loss,accuracy,f1` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,accuracy,f1\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{:.10},{:.6},{:.6}", r.epoch, r.train_loss, r.eval_accuracy, r.eval_f1);
        }
        out
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

fn check_inputs(x: &FeatureMatrix, y: &[bool]) -> Result<()> {
    if y.len() != x.rows() {
        return Err(LearnError::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if x.rows() < 2 {
        return Err(LearnError::InsufficientData(format!("{} rows", x.rows())));
    }
    if y.iter().all(|v| *v) || y.iter().all(|v| !*v) {
        return Err(LearnError::SingleClass);
    }
    Ok(())
}

/// Gradient descent from zero weights, calling `on_epoch` with the epoch
/// number, the post-update training loss and the current model.
pub fn train_logistic_with<F>(x: &FeatureMatrix, y: &[bool], config: TrainConfig, mut on_epoch: F) -> Result<LogisticModel>
where
    F: FnMut(usize, f64, &LogisticModel),
{
    check_inputs(x, y)?;
    config.validate()?;
    let mut model = LogisticModel::zeros(x.cols(), config);
    for epoch in 1..=config.epochs {
        let (gw, gb) = gradient(x, y, &model);
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= config.learning_rate * g;
        }
        model.bias -= config.learning_rate * gb;
        on_epoch(epoch, loss(x, y, &model), &model);
    }
    Ok(model)
}

/// Accuracy and positive-class F1 (0 when undefined).
pub fn evaluate(model: &LogisticModel, x: &FeatureMatrix, y: &[bool]) -> (f64, f64) {
    let c = model.confusion(x, y);
    (
        accuracy(&c).unwrap_or(0.0),
        f1(&c).map(|f| f.value).unwrap_or(0.0),
    )
}

/// Trains and records one trace row per epoch, evaluated on `eval` when
/// given and on the training data otherwise.
pub fn train_logistic(
    x: &FeatureMatrix,
    y: &[bool],
    config: TrainConfig,
    eval: Option<(&FeatureMatrix, &[bool])>,
) -> Result<(LogisticModel, EpochTrace)> {
    if let Some((ex, ey)) = eval {
        if ex.cols() != x.cols() || ex.rows() != ey.len() {
            return Err(LearnError::DimensionMismatch {
                expected: x.cols(),
                got: ex.cols(),
            });
        }
    }
    let (ex, ey) = eval.unwrap_or((x, y));
    let mut trace = EpochTrace::default();
    let model = train_logistic_with(x, y, config, |epoch, train_loss, m| {
        let (acc, f) = evaluate(m, ex, ey);
        trace.records.push(EpochRecord {
            epoch,
            train_loss,
            eval_accuracy: acc,
            eval_f1: f,
        });
    })?;
    Ok((model, trace))
}

/// Largest componentwise relative error between the analytic gradient and
/// central finite differences. Components where both are below 1e-4 in
/// magnitude are compared on an absolute 1e-4 scale.
pub fn gradient_check(x: &FeatureMatrix, y: &[bool], model: &LogisticModel, epsilon: f64) -> f64 {
    let (gw, gb) = gradient(x, y, model);
    let mut analytic = gw;
    analytic.push(gb);
    let mut worst: f64 = 0.0;
    for (k, a) in analytic.iter().enumerate() {
        let mut plus = model.clone();
        let mut minus = model.clone();
        if k < model.weights.len() {
            plus.weights[k] += epsilon;
            minus.weights[k] -= epsilon;
        } else {
            plus.bias += epsilon;
            minus.bias -= epsilon;
        }
        let numeric = (loss(x, y, &plus) - loss(x, y, &minus)) / (2.0 * epsilon);
        let denom = a.abs().max(numeric.abs()).max(1e-4);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

/// Keeps every minority row and a seeded sample of the majority class of
/// the same size, in original row order.
pub fn undersample(x: &FeatureMatrix, y: &[bool], seed: u64) -> Result<(FeatureMatrix, Vec<bool>)> {
    let idx = undersample_indices(y, seed)?;
    Ok((x.select(&idx), idx.iter().map(|&i| y[i]).collect()))
}

pub fn undersample_indices(y: &[bool], seed: u64) -> Result<Vec<usize>> {
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
    let neg: Vec<usize> = (0..y.len()).filter(|&i| !y[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(LearnError::SingleClass);
    }
    let (minority, majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    let mut rng = seed::rng(seed, &["undersample"]);
    let mut chosen: Vec<usize> = index::sample(&mut rng, majority.len(), minority.len())
        .into_iter()
        .map(|k| majority[k])
        .collect();
    chosen.extend(minority);
    chosen.sort_unstable();
    Ok(chosen)
}

/// Seeded 80/20 split done within each class, so both sides keep both
/// classes whenever a class has at least two rows.
pub fn stratified_split(y: &[bool], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seed::rng(seed, &["split"]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [true, false] {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        members.shuffle(&mut rng);
        let n = members.len();
        let n_test = if n >= 2 {
            ((n as f64 * 0.2).round() as usize).clamp(1, n - 1)
        } else {
            0
        };
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Per-column z-scoring fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &FeatureMatrix) -> Self {
        let n = x.rows().max(1) as f64;
        let mut means = vec![0.0; x.cols()];
        for i in 0..x.rows() {
            for (m, v) in means.iter_mut().zip(x.row(i)) {
                *m += v / n;
            }
        }
        let mut scales = vec![0.0; x.cols()];
        for i in 0..x.rows() {
            for ((s, v), m) in scales.iter_mut().zip(x.row(i)).zip(&means) {
                *s += (v - m) * (v - m) / n;
            }
        }
        // constant columns pass through centred
        let scales = scales.into_iter().map(|s| if s > 0.0 { s.sqrt() } else { 1.0 }).collect();
        Standardizer { means, scales }
    }

    pub fn transform(&self, x: &FeatureMatrix) -> FeatureMatrix {
        let mut values = Vec::with_capacity(x.rows() * x.cols());
        for i in 0..x.rows() {
            for ((v, m), s) in x.row(i).iter().zip(&self.means).zip(&self.scales) {
                values.push((v - m) / s);
            }
        }
        FeatureMatrix {
            rows: x.rows(),
            cols: x.cols(),
            values,
            row_ids: x.row_ids.clone(),
        }
    }

    /// Rewrites a model trained on standardized features so it applies to
    /// raw features directly.
    pub fn fold_into(&self, model: &LogisticModel) -> LogisticModel {
        let weights: Vec<f64> = model.weights.iter().zip(&self.scales).map(|(w, s)| w / s).collect();
        let shift: f64 = weights.iter().zip(&self.means).map(|(w, m)| w * m).sum();
        LogisticModel {
            weights,
            bias: model.bias - shift,
            config: model.config,
        }
    }
}

/// Trains on standardized features and returns a raw-feature model.
fn fit_standardized(x: &FeatureMatrix, y: &[bool], config: TrainConfig) -> Result<LogisticModel> {
    let scaler = Standardizer::fit(x);
    let model = train_logistic_with(&scaler.transform(x), y, config, |_, _, _| {})?;
    Ok(scaler.fold_into(&model))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TagResult {
    pub tag: MoralTag,
    pub positives: usize,
    pub negatives: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct OneVsAllReport {
    pub results: Vec<TagResult>,
    pub skipped: Vec<(MoralTag, String)>,
}

/// For each tag: `repeats` rounds of undersample, stratified 80/20 split,
/// train and evaluate; reports mean held-out accuracy and F1. Tags with
/// fewer than two stories on either side are skipped with a reason.
pub fn one_vs_all_train(
    x: &FeatureMatrix,
    tags: &[BTreeSet<MoralTag>],
    config: TrainConfig,
    repeats: usize,
) -> Result<OneVsAllReport> {
    if tags.len() != x.rows() {
        return Err(LearnError::DimensionMismatch {
            expected: x.rows(),
            got: tags.len(),
        });
    }
    config.validate()?;
    let repeats = repeats.max(1);
    let outcomes: Vec<std::result::Result<TagResult, (MoralTag, String)>> = MoralTag::ALL
        .par_iter()
        .map(|&tag| {
            let y: Vec<bool> = tags.iter().map(|t| t.contains(&tag)).collect();
            let positives = y.iter().filter(|v| **v).count();
            let negatives = y.len() - positives;
            if positives.min(negatives) < 2 {
                return Err((tag, format!("{positives} positive / {negatives} negative stories")));
            }
            let (mut acc_sum, mut f1_sum) = (0.0, 0.0);
            for r in 0..repeats {
                let s = seed::derive(config.seed, &["one-vs-all", tag.as_str(), &r.to_string()]);
                let idx = undersample_indices(&y, s).map_err(|e| (tag, e.to_string()))?;
                let sub_y: Vec<bool> = idx.iter().map(|&i| y[i]).collect();
                let (train, test) = stratified_split(&sub_y, s);
                let pick = |rows: &[usize]| -> Vec<usize> { rows.iter().map(|&k| idx[k]).collect() };
                let (tr, te) = (pick(&train), pick(&test));
                let ty: Vec<bool> = tr.iter().map(|&i| y[i]).collect();
                let ey: Vec<bool> = te.iter().map(|&i| y[i]).collect();
                let model = fit_standardized(&x.select(&tr), &ty, config).map_err(|e| (tag, e.to_string()))?;
                let (a, f) = evaluate(&model, &x.select(&te), &ey);
                acc_sum += a;
                f1_sum += f;
            }
            Ok(TagResult {
                tag,
                positives,
                negatives,
                accuracy: acc_sum / repeats as f64,
                f1: f1_sum / repeats as f64,
                runs: repeats,
            })
        })
        .collect();
    let mut report = OneVsAllReport::default();
    for o in outcomes {
        match o {
            Ok(r) => report.results.push(r),
            Err(s) => report.skipped.push(s),
        }
    }
    Ok(report)
}

/// Rows of unigram and adjacent-bigram frame counts, one per story.
/// Columns are the sorted labels then the sorted bigrams observed (after
/// the optional vocabulary restriction); stories without frames get zeros.
pub fn frame_count_matrix(
    stories: &[&Story],
    frames: &[FrameSeq],
    vocabulary: Option<&BTreeSet<String>>,
) -> Result<FeatureMatrix> {
    let by_id: HashMap<&str, &FrameSeq> = frames.iter().map(|f| (f.story_id.as_str(), f)).collect();
    let feats: Vec<_> = stories
        .iter()
        .map(|s| match by_id.get(s.id.as_str()) {
            Some(seq) => frame_features(seq, vocabulary),
            None => frame_features(&FrameSeq::new(&s.id, &[]), vocabulary),
        })
        .collect();
    let unigrams: BTreeSet<&String> = feats.iter().flat_map(|f| f.counts.keys()).collect();
    let bigrams: BTreeSet<&(String, String)> = feats.iter().flat_map(|f| f.bigram_counts.keys()).collect();
    let cols = unigrams.len() + bigrams.len();
    let mut values = Vec::with_capacity(stories.len() * cols);
    for f in &feats {
        values.extend(unigrams.iter().map(|u| *f.counts.get(*u).unwrap_or(&0) as f64));
        values.extend(bigrams.iter().map(|b| *f.bigram_counts.get(*b).unwrap_or(&0) as f64));
    }
    FeatureMatrix::new(stories.len(), cols, values, stories.iter().map(|s| s.id.clone()).collect())
}

/// Explicit similarity features for a story pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairFeatures {
    pub lexical_cosine: f64,
    pub semantic_cosine: f64,
    pub frame_distance_ab: f64,
    pub frame_distance_ba: f64,
    pub shape_agreement: f64,
    pub lexical_overlap: f64,
    pub same_tag: f64,
    pub moral_cosine: f64,
}

impl PairFeatures {
    pub const NAMES: [&'static str; 8] = [
        "lexical_cosine",
        "semantic_cosine",
        "frame_distance_ab",
        "frame_distance_ba",
        "shape_agreement",
        "lexical_overlap",
        "same_tag",
        "moral_cosine",
    ];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.lexical_cosine,
            self.semantic_cosine,
            self.frame_distance_ab,
            self.frame_distance_ba,
            self.shape_agreement,
            self.lexical_overlap,
            self.same_tag,
            self.moral_cosine,
        ]
    }
}

fn optional_cosine(map: &HashMap<String, Vec<f64>>, a: &str, b: &str) -> f64 {
    match (map.get(a), map.get(b)) {
        (Some(u), Some(v)) => cosine(u, v).unwrap_or(0.0),
        _ => 0.0,
    }
}

/// Features for the pair `(a, b)`. Missing resources give neutral values:
/// cosines 0, frame distances 1, indicators 0.
pub fn pair_features(a: &str, b: &str, res: &StoryResources) -> Result<PairFeatures> {
    for id in [a, b] {
        if !res.contains(id) {
            return Err(LearnError::UnknownStory(id.to_string()));
        }
    }
    let frame_distance = |r: &str, c: &str| match (res.frames.get(r), res.frames.get(c)) {
        (Some(fr), Some(fc)) => scaled_frame_distance(fr, fc).unwrap_or(1.0),
        _ => 1.0,
    };
    let shape = match (res.profiles.get(a), res.profiles.get(b)) {
        (Some(pa), Some(pb)) if shape_agreement(pa, pb).unwrap_or(false) => 1.0,
        _ => 0.0,
    };
    let same_tag = match (res.tags.get(a), res.tags.get(b)) {
        (Some(ta), Some(tb)) if !ta.is_disjoint(tb) => 1.0,
        _ => 0.0,
    };
    Ok(PairFeatures {
        lexical_cosine: optional_cosine(&res.lexical, a, b),
        semantic_cosine: optional_cosine(&res.semantic, a, b),
        frame_distance_ab: frame_distance(a, b),
        frame_distance_ba: frame_distance(b, a),
        shape_agreement: shape,
        lexical_overlap: lexical_overlap(&res.tokens[a], &res.tokens[b]),
        same_tag,
        moral_cosine: optional_cosine(&res.moral, a, b),
    })
}

pub fn pair_feature_matrix(features: &[PairFeatures], ids: Vec<String>) -> Result<FeatureMatrix> {
    let values: Vec<f64> = features.iter().flat_map(PairFeatures::to_vec).collect();
    FeatureMatrix::new(features.len(), PairFeatures::NAMES.len(), values, ids)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum DimensionOutcome {
    Trained {
        accuracy: f64,
        f1: f64,
        f1_defined: bool,
        test_size: usize,
        #[serde(skip)]
        model: LogisticModel,
    },
    Untrainable {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionReport {
    pub dimension: AnalogyDimension,
    pub positive_ratio: f64,
    pub outcome: DimensionOutcome,
}

/// Minimum annotated pairs for analogy-type training.
pub const MIN_ANNOTATED_PAIRS: usize = 10;

/// One logistic classifier per analogy dimension over pair features,
/// evaluated on a seeded stratified 80/20 split.
pub fn train_analogy_classifiers(
    features: &[PairFeatures],
    annotations: &[PairAnnotation],
    config: TrainConfig,
) -> Result<Vec<DimensionReport>> {
    if features.len() != annotations.len() {
        return Err(LearnError::DimensionMismatch {
            expected: annotations.len(),
            got: features.len(),
        });
    }
    if annotations.len() < MIN_ANNOTATED_PAIRS {
        return Err(LearnError::InsufficientData(format!(
            "{} annotated pairs (need at least {MIN_ANNOTATED_PAIRS})",
            annotations.len()
        )));
    }
    config.validate()?;
    let ids = annotations.iter().map(|a| a.pair_id.clone()).collect();
    let x = pair_feature_matrix(features, ids)?;
    let n = annotations.len() as f64;
    Ok(AnalogyDimension::ALL
        .par_iter()
        .map(|&dim| {
            let y: Vec<bool> = annotations.iter().map(|a| a.labels.get(dim)).collect();
            let pos = y.iter().filter(|v| **v).count();
            let positive_ratio = pos as f64 / n;
            let untrainable = |reason: String| DimensionReport {
                dimension: dim,
                positive_ratio,
                outcome: DimensionOutcome::Untrainable { reason },
            };
            if pos == 0 || pos == y.len() {
                return untrainable(format!("single class ({pos} of {} positive)", y.len()));
            }
            let (train, test) = stratified_split(&y, seed::derive(config.seed, &["analogy", dim.as_str()]));
            let ty: Vec<bool> = train.iter().map(|&i| y[i]).collect();
            let ey: Vec<bool> = test.iter().map(|&i| y[i]).collect();
            let model = match fit_standardized(&x.select(&train), &ty, config) {
                Ok(m) => m,
                Err(e) => return untrainable(e.to_string()),
            };
            let c = model.confusion(&x.select(&test), &ey);
            let f = f1(&c).unwrap_or(crate::metrics::F1 {
                value: 0.0,
                defined: false,
            });
            DimensionReport {
                dimension: dim,
                positive_ratio,
                outcome: DimensionOutcome::Trained {
                    accuracy: accuracy(&c).unwrap_or(0.0),
                    f1: f.value,
                    f1_defined: f.defined,
                    test_size: test.len(),
                    model,
                },
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabeledPair {
    pub story_a: String,
    pub story_b: String,
    pub same_tag: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum TransferWarning {
    InsufficientPositives { available: usize, requested: usize },
    InsufficientNegatives { available: usize, requested: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct TransferPairs {
    pub pairs: Vec<LabeledPair>,
    pub warnings: Vec<TransferWarning>,
}

impl TransferPairs {
    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.same_tag).count()
    }

    pub fn negatives(&self) -> usize {
        self.pairs.len() - self.positives()
    }
}

fn sample_sorted<T: Clone>(items: &[T], k: usize, rng: &mut impl rand::Rng) -> Vec<T> {
    let mut picked: Vec<usize> = index::sample(rng, items.len(), k.min(items.len())).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i].clone()).collect()
}

/// Balanced same-tag / different-tag pairs over tagged stories: positives
/// share at least one tag and are sampled down to `target_size`; the same
/// number of negatives is sampled from pairs sharing none. When one side
/// falls short the larger side is cut to match and a warning is recorded.
pub fn build_transfer_pairs(stories: &[Story], target_size: usize, seed_value: u64) -> Result<TransferPairs> {
    let tagged: Vec<&Story> = stories.iter().filter(|s| !s.tags.is_empty()).collect();
    if tagged.len() < 2 {
        return Err(LearnError::InsufficientData(format!("{} tagged stories", tagged.len())));
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for i in 0..tagged.len() {
        for j in i + 1..tagged.len() {
            let same = !tagged[i].tags.is_disjoint(&tagged[j].tags);
            let pair = LabeledPair {
                story_a: tagged[i].id.clone(),
                story_b: tagged[j].id.clone(),
                same_tag: same,
            };
            if same {
                positives.push(pair);
            } else {
                negatives.push(pair);
            }
        }
    }
    let mut warnings = Vec::new();
    if positives.len() < target_size {
        warnings.push(TransferWarning::InsufficientPositives {
            available: positives.len(),
            requested: target_size,
        });
    }
    let wanted = positives.len().min(target_size);
    if negatives.len() < wanted {
        warnings.push(TransferWarning::InsufficientNegatives {
            available: negatives.len(),
            requested: wanted,
        });
    }
    let size = wanted.min(negatives.len());
    let mut rng = seed::rng(seed_value, &["transfer-pairs"]);
    let mut pairs = sample_sorted(&positives, size, &mut rng);
    pairs.extend(sample_sorted(&negatives, size, &mut rng));
    Ok(TransferPairs { pairs, warnings })
}

/// The `words`-token span centred on token `n/2`, clamped to the document
/// and rejoined with single spaces; the whole text when it is short enough.
pub fn middle_window(text: &str, words: usize) -> String {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let n = tokens.len();
    if n <= words {
        return tokens.join(" ");
    }
    let start = (n / 2).saturating_sub(words / 2).min(n - words);
    tokens[start..start + words].join(" ")
}

/// Trains on `x, y` and evaluates every named set after each epoch.
pub fn train_with_eval_sets(
    x: &FeatureMatrix,
    y: &[bool],
    config: TrainConfig,
    evals: &[(&str, &FeatureMatrix, &[bool])],
) -> Result<(LogisticModel, BTreeMap<String, EpochTrace>)> {
    let scaler = Standardizer::fit(x);
    let scaled: Vec<FeatureMatrix> = evals.iter().map(|(_, m, _)| scaler.transform(m)).collect();
    let mut traces: BTreeMap<String, EpochTrace> = evals.iter().map(|(n, _, _)| (n.to_string(), EpochTrace::default())).collect();
    let model = train_logistic_with(&scaler.transform(x), y, config, |epoch, train_loss, m| {
        for ((name, _, ey), ex) in evals.iter().zip(&scaled) {
            let (acc, f) = evaluate(m, ex, ey);
            traces.get_mut(*name).expect("trace per eval set").records.push(EpochRecord {
                epoch,
                train_loss,
                eval_accuracy: acc,
                eval_f1: f,
            });
        }
    })?;
    Ok((scaler.fold_into(&model), traces))
}

/// Text record of a model: one `key value...` line per field.
pub fn write_model<W: Write>(mut out: W, model: &LogisticModel) -> std::io::Result<()> {
    let c = &model.config;
    writeln!(out, "dimension {}", model.weights.len())?;
    writeln!(
        out,
        "weights {}",
        model.weights.iter().map(|w| format!("{w:?}")).collect::<Vec<_>>().join(" ")
    )?;
    writeln!(out, "bias {:?}", model.bias)?;
    writeln!(out, "learning_rate {:?}", c.learning_rate)?;
    writeln!(out, "epochs {}", c.epochs)?;
    writeln!(out, "l2 {:?}", c.l2)?;
    writeln!(out, "seed {}", c.seed)?;
    writeln!(out, "threshold {:?}", c.threshold)
}

pub fn read_model<R: BufRead>(reader: R) -> Result<LogisticModel> {
    let mut fields: HashMap<String, String> = HashMap::new();
    for line in reader.lines() {
        let line = line.map_err(|e| LearnError::ModelFormat(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once(' ').unwrap_or((line, ""));
        fields.insert(key.to_string(), value.trim().to_string());
    }
    let get = |k: &str| fields.get(k).ok_or_else(|| LearnError::ModelFormat(format!("missing '{k}'")));
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| LearnError::ModelFormat(format!("bad value for '{k}': {v}")))
    }
    let dimension: usize = num("dimension", get("dimension")?)?;
    let weights = get("weights")?
        .split_whitespace()
        .map(|w| num::<f64>("weights", w))
        .collect::<Result<Vec<_>>>()?;
    if weights.len() != dimension {
        return Err(LearnError::DimensionMismatch {
            expected: dimension,
            got: weights.len(),
        });
    }
    Ok(LogisticModel {
        weights,
        bias: num("bias", get("bias")?)?,
        config: TrainConfig {
            learning_rate: num("learning_rate", get("learning_rate")?)?,
            epochs: num("epochs", get("epochs")?)?,
            l2: num("l2", get("l2")?)?,
            seed: num("seed", get("seed")?)?,
            threshold: num("threshold", get("threshold")?)?,
        },
    })
}
