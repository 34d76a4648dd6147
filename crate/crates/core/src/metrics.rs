//! Evaluation statistics: accuracy, positive-class F1, binary Cohen kappa
//! and Pearson correlation over analogy labels.
//!
//! Undefined statistics are surfaced as flagged cells, never as zeros.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{AnalogyDimension, PairAnnotation, RatingSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("confusion counts are all zero")]
    EmptyCounts,
    #[error("raters '{a}' and '{b}' rated different items for {dimension}")]
    ItemMismatch {
        a: String,
        b: String,
        dimension: AnalogyDimension,
    },
    #[error("no rated items for {0}")]
    EmptyItems(AnalogyDimension),
    #[error("chance agreement is 1 but observed agreement is not")]
    DegenerateMarginals,
    #[error("series have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least two points")]
    TooFewPoints,
    #[error("a series has zero variance")]
    ZeroVariance,
    #[error("need at least two annotations, got {0}")]
    TooFewAnnotations(usize),
    #[error("need at least two raters, got {0}")]
    TooFewRaters(usize),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Self {
        let mut c = ConfusionCounts::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    match c.total() {
        0 => Err(MetricsError::EmptyCounts),
        n => Ok((c.tp + c.tn) as f64 / n as f64),
    }
}

/// Positive-class F1. `defined` is false when there are no positives in
/// either predictions or truth, in which case `value` is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct F1 {
    pub value: f64,
    pub defined: bool,
}

pub fn f1(c: &ConfusionCounts) -> Result<F1> {
    if c.total() == 0 {
        return Err(MetricsError::EmptyCounts);
    }
    let denom = 2 * c.tp + c.fp + c.fn_;
    Ok(if denom == 0 {
        F1 {
            value: 0.0,
            defined: false,
        }
    } else {
        F1 {
            value: (2 * c.tp) as f64 / denom as f64,
            defined: true,
        }
    })
}

/// Cohen's kappa for two binary label sequences over the same items.
pub fn kappa_from_labels(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let pa = a.iter().filter(|x| **x).count() as f64 / n;
    let pb = b.iter().filter(|x| **x).count() as f64 / n;
    let p_o = agree / n;
    let p_e = pa * pb + (1.0 - pa) * (1.0 - pb);
    if p_e == 1.0 {
        return if p_o == 1.0 {
            Ok(1.0)
        } else {
            Err(MetricsError::DegenerateMarginals)
        };
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Kappa between two raters on one dimension. Both must have rated exactly
/// the same pair ids for that dimension.
pub fn cohen_kappa(a: &RatingSet, b: &RatingSet, dimension: AnalogyDimension) -> Result<f64> {
    let pick = |r: &RatingSet| -> BTreeMap<String, bool> {
        r.items
            .iter()
            .filter(|(_, d, _)| *d == dimension)
            .map(|(p, _, v)| (p.clone(), *v))
            .collect()
    };
    let (ma, mb) = (pick(a), pick(b));
    if ma.is_empty() && mb.is_empty() {
        return Err(MetricsError::EmptyItems(dimension));
    }
    if ma.keys().ne(mb.keys()) {
        return Err(MetricsError::ItemMismatch {
            a: a.rater_id.clone(),
            b: b.rater_id.clone(),
            dimension,
        });
    }
    let va: Vec<bool> = ma.values().copied().collect();
    let vb: Vec<bool> = mb.values().copied().collect();
    kappa_from_labels(&va, &vb)
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricsError::TooFewPoints);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// A statistic that may be undefined for degenerate inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "value", rename_all = "lowercase")]
pub enum Cell {
    Defined(f64),
    Undefined(String),
}

impl Cell {
    pub fn value(&self) -> Option<f64> {
        match self {
            Cell::Defined(v) => Some(*v),
            Cell::Undefined(_) => None,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            Cell::Defined(_) => "defined",
            Cell::Undefined(_) => "undefined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub dims: Vec<AnalogyDimension>,
    pub values: Vec<Vec<Cell>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: AnalogyDimension, b: AnalogyDimension) -> &Cell {
        let i = self.dims.iter().position(|d| *d == a).expect("dimension in matrix");
        let j = self.dims.iter().position(|d| *d == b).expect("dimension in matrix");
        &self.values[i][j]
    }

    /// Largest defined off-diagonal entry.
    pub fn max_off_diagonal(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (i, row) in self.values.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if i != j {
                    if let Some(v) = cell.value() {
                        best = Some(best.map_or(v, |b| b.max(v)));
                    }
                }
            }
        }
        best
    }
}

/// The 0/1 label column of one dimension across annotations.
pub fn label_column(annotations: &[PairAnnotation], dim: AnalogyDimension) -> Vec<f64> {
    annotations
        .iter()
        .map(|a| if a.labels.get(dim) { 1.0 } else { 0.0 })
        .collect()
}

/// Pairwise Pearson correlation of the seven label columns.
pub fn correlation_matrix(annotations: &[PairAnnotation]) -> Result<CorrelationMatrix> {
    if annotations.len() < 2 {
        return Err(MetricsError::TooFewAnnotations(annotations.len()));
    }
    let dims = AnalogyDimension::ALL.to_vec();
    let columns: Vec<Vec<f64>> = dims.iter().map(|d| label_column(annotations, *d)).collect();
    let values = columns
        .iter()
        .map(|x| {
            columns
                .iter()
                .map(|y| match pearson(x, y) {
                    Ok(r) => Cell::Defined(r),
                    Err(e) => Cell::Undefined(e.to_string()),
                })
                .collect()
        })
        .collect();
    Ok(CorrelationMatrix { dims, values })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IaaRow {
    pub rater_a: String,
    pub rater_b: String,
    pub kappas: Vec<(AnalogyDimension, Cell)>,
}

impl IaaRow {
    pub fn label(&self) -> String {
        format!("{} VS {}", self.rater_a, self.rater_b)
    }
}

/// Kappa for every rater pair and dimension. Rows follow rater order
/// (1 vs 2, 1 vs 3, 2 vs 3, ...); problem cells are flagged, not fatal.
pub fn iaa_report(ratings: &[RatingSet]) -> Result<Vec<IaaRow>> {
    if ratings.len() < 2 {
        return Err(MetricsError::TooFewRaters(ratings.len()));
    }
    let mut rows = Vec::new();
    for i in 0..ratings.len() {
        for j in i + 1..ratings.len() {
            let kappas = AnalogyDimension::ALL
                .iter()
                .map(|d| {
                    let cell = match cohen_kappa(&ratings[i], &ratings[j], *d) {
                        Ok(k) => Cell::Defined(k),
                        Err(e) => Cell::Undefined(e.to_string()),
                    };
                    (*d, cell)
                })
                .collect();
            rows.push(IaaRow {
                rater_a: ratings[i].rater_id.clone(),
                rater_b: ratings[j].rater_id.clone(),
                kappas,
            });
        }
    }
    Ok(rows)
}

/// Fraction of positives per dimension.
pub fn positive_ratios(annotations: &[PairAnnotation]) -> HashMap<AnalogyDimension, f64> {
    let n = annotations.len().max(1) as f64;
    AnalogyDimension::ALL
        .iter()
        .map(|d| (*d, annotations.iter().filter(|a| a.labels.get(*d)).count() as f64 / n))
        .collect()
}
