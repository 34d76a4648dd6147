//! Hedonometric story arcs.
//!
//! A story is scored word by word against a happiness lexicon, smoothed
//! with a stride-1 sliding window, split into beginning (30%), middle (40%)
//! and end (30%) of the windowed series, and each segment mean is graded
//! HIGH, MID or LOW against a neutral level. The grade triple names the arc.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::HedonometerLexicon;
use crate::textsim::tokenize;

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("no token of the text is scored by the lexicon")]
    NoScoredTokens,
    #[error("hedonic series is empty")]
    EmptySeries,
    #[error("window must be at least 1")]
    BadWindow,
    #[error("band must be positive")]
    BadBand,
    #[error("profiles were computed with different parameters")]
    ParameterMismatch,
}

pub type Result<T> = std::result::Result<T, ShapeError>;

/// Window size and level thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapeParams {
    pub window: usize,
    pub neutral: f64,
    pub band: f64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        ShapeParams {
            window: 30,
            neutral: 5.4,
            band: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HedonicSeries {
    pub story_id: String,
    pub window: usize,
    pub values: Vec<f64>,
    pub scored_tokens: usize,
    pub total_tokens: usize,
}

impl HedonicSeries {
    /// Fraction of tokens the lexicon scored.
    pub fn coverage(&self) -> f64 {
        if self.total_tokens == 0 {
            0.0
        } else {
            self.scored_tokens as f64 / self.total_tokens as f64
        }
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SegmentLevel {
    #[serde(rename = "HIGH")]
    High,
    #[serde(rename = "MID")]
    Mid,
    #[serde(rename = "LOW")]
    Low,
}

impl SegmentLevel {
    pub fn letter(self) -> char {
        match self {
            SegmentLevel::High => 'H',
            SegmentLevel::Mid => 'M',
            SegmentLevel::Low => 'L',
        }
    }

    /// Strict comparison: a mean exactly on a threshold is MID.
    pub fn grade(mean: f64, neutral: f64, band: f64) -> Self {
        if mean > neutral + band {
            SegmentLevel::High
        } else if mean < neutral - band {
            SegmentLevel::Low
        } else {
            SegmentLevel::Mid
        }
    }
}

impl fmt::Display for SegmentLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SegmentLevel::High => "HIGH",
            SegmentLevel::Mid => "MID",
            SegmentLevel::Low => "LOW",
        })
    }
}

pub type Levels = [SegmentLevel; 3];

pub fn levels_string(levels: &Levels) -> String {
    levels.iter().map(|l| l.letter().to_string()).collect::<Vec<_>>().join("-")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArcType {
    Tragedy,
    RagsToRiches,
    Cinderella,
    Oedipus,
    Other(Levels),
}

impl fmt::Display for ArcType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArcType::Tragedy => f.write_str("TRAGEDY"),
            ArcType::RagsToRiches => f.write_str("RAGS_TO_RICHES"),
            ArcType::Cinderella => f.write_str("CINDERELLA"),
            ArcType::Oedipus => f.write_str("OEDIPUS"),
            ArcType::Other(l) => write!(f, "OTHER({},{},{})", l[0].letter(), l[1].letter(), l[2].letter()),
        }
    }
}

impl Serialize for ArcType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segments {
    pub begin_avg: f64,
    pub mid_avg: f64,
    pub end_avg: f64,
    pub levels: Levels,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArcProfile {
    pub story_id: String,
    pub begin_avg: f64,
    pub mid_avg: f64,
    pub end_avg: f64,
    pub levels: Levels,
    pub arc: ArcType,
    pub coverage: f64,
    pub params: ShapeParams,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Windowed average happiness over the lexicon-scored tokens of `text`.
/// Unscored tokens are dropped before windowing. With fewer scored tokens
/// than `window` the series is the single whole-text mean.
pub fn hedonic_series(text: &str, lexicon: &HedonometerLexicon, window: usize) -> Result<HedonicSeries> {
    if window == 0 {
        return Err(ShapeError::BadWindow);
    }
    let tokens = tokenize(text);
    let scores: Vec<f64> = tokens.tokens().iter().filter_map(|t| lexicon.score(t)).collect();
    let values = windowed_means(&scores, window)?;
    Ok(HedonicSeries {
        story_id: String::new(),
        window,
        values,
        scored_tokens: scores.len(),
        total_tokens: tokens.len(),
    })
}

/// Stride-1 sliding means; a single overall mean when `scores` is shorter
/// than the window.
pub fn windowed_means(scores: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(ShapeError::BadWindow);
    }
    if scores.is_empty() {
        return Err(ShapeError::NoScoredTokens);
    }
    if scores.len() < window {
        return Ok(vec![mean(scores)]);
    }
    Ok(scores.windows(window).map(mean).collect())
}

/// Segment bounds over a series of length `n`: `[0, b)`, `[b, e)`, `[e, n)`
/// with `b = floor(0.3n)` and `e = floor(0.7n)`, clamped so the beginning
/// and end are non-empty. When the middle would be empty (n < 3) the whole
/// series stands in for it.
pub fn segment_bounds(n: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>, std::ops::Range<usize>) {
    let b = (n * 3 / 10).max(1).min(n);
    let e = (n * 7 / 10).min(n.saturating_sub(1));
    let mid = if b < e { b..e } else { 0..n };
    (0..b, mid, e..n)
}

pub fn segment_levels(series: &[f64], neutral: f64, band: f64) -> Result<Segments> {
    if series.is_empty() {
        return Err(ShapeError::EmptySeries);
    }
    if band <= 0.0 || band.is_nan() {
        return Err(ShapeError::BadBand);
    }
    let (b, m, e) = segment_bounds(series.len());
    let begin_avg = mean(&series[b]);
    let mid_avg = mean(&series[m]);
    let end_avg = mean(&series[e]);
    let levels = [begin_avg, mid_avg, end_avg].map(|x| SegmentLevel::grade(x, neutral, band));
    Ok(Segments {
        begin_avg,
        mid_avg,
        end_avg,
        levels,
    })
}

pub fn classify_arc(levels: Levels) -> ArcType {
    use SegmentLevel::*;
    match levels {
        [High, High, Low] => ArcType::Tragedy,
        [Low, Mid, High] => ArcType::RagsToRiches,
        [High, Low, High] => ArcType::Cinderella,
        [Low, Mid, Low] => ArcType::Oedipus,
        other => ArcType::Other(other),
    }
}

pub fn arc_profile(
    story_id: &str,
    text: &str,
    lexicon: &HedonometerLexicon,
    params: ShapeParams,
) -> Result<(ArcProfile, HedonicSeries)> {
    let mut series = hedonic_series(text, lexicon, params.window)?;
    series.story_id = story_id.to_string();
    let seg = segment_levels(&series.values, params.neutral, params.band)?;
    let profile = ArcProfile {
        story_id: story_id.to_string(),
        begin_avg: seg.begin_avg,
        mid_avg: seg.mid_avg,
        end_avg: seg.end_avg,
        levels: seg.levels,
        arc: classify_arc(seg.levels),
        coverage: series.coverage(),
        params,
    };
    Ok((profile, series))
}

/// True iff both profiles share the same level triple.
pub fn shape_agreement(a: &ArcProfile, b: &ArcProfile) -> Result<bool> {
    if a.params != b.params {
        return Err(ShapeError::ParameterMismatch);
    }
    Ok(a.levels == b.levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use SegmentLevel::*;

    fn lexicon() -> HedonometerLexicon {
        HedonometerLexicon::from_entries([("five", 5.0), ("six", 6.0), ("seven", 7.0), ("neutral", 5.4)])
            .unwrap()
    }

    #[test]
    fn series_examples() {
        let s = hedonic_series("five six, the seven", &lexicon(), 2).unwrap();
        assert_eq!(s.values, vec![5.5, 6.5]);
        assert_eq!((s.scored_tokens, s.total_tokens), (3, 4));

        let flat = hedonic_series(&"neutral ".repeat(40), &lexicon(), 30).unwrap();
        assert_eq!(flat.values.len(), 11);
        assert!(flat.values.iter().all(|v| (v - 5.4).abs() < 1e-12));

        let short = hedonic_series(&"five seven ".repeat(5), &lexicon(), 30).unwrap();
        assert_eq!(short.values, vec![6.0]);

        assert_eq!(hedonic_series("no scored words", &lexicon(), 3), Err(ShapeError::NoScoredTokens));
        assert_eq!(hedonic_series("five", &lexicon(), 0), Err(ShapeError::BadWindow));
    }

    #[test]
    fn levels_from_segment_means() {
        // 10 points: begin = [0,3), mid = [3,7), end = [7,10)
        let series = [6.0, 6.0, 6.0, 6.0, 6.0, 6.0, 6.0, 4.8, 4.8, 4.8];
        let seg = segment_levels(&series, 5.4, 0.2).unwrap();
        assert_eq!(seg.levels, [High, High, Low]);

        let seg = segment_levels(&[5.4; 7], 5.4, 0.2).unwrap();
        assert_eq!(seg.levels, [Mid, Mid, Mid]);

        let boundary = [5.61, 5.61, 5.61, 5.40, 5.40, 5.40, 5.40, 5.19, 5.19, 5.19];
        let seg = segment_levels(&boundary, 5.4, 0.2).unwrap();
        assert_eq!(seg.levels, [High, Mid, Low]);

        assert_eq!(segment_levels(&[], 5.4, 0.2), Err(ShapeError::EmptySeries));
        assert_eq!(segment_levels(&[1.0], 5.4, 0.0), Err(ShapeError::BadBand));
    }

    #[test]
    fn exact_thresholds_are_mid() {
        assert_eq!(SegmentLevel::grade(5.4 + 0.2, 5.4, 0.2), Mid);
        assert_eq!(SegmentLevel::grade(5.4 - 0.2, 5.4, 0.2), Mid);
    }

    #[test]
    fn segment_bounds_small_series() {
        assert_eq!(segment_bounds(1), (0..1, 0..1, 0..1));
        assert_eq!(segment_bounds(2), (0..1, 0..2, 1..2));
        assert_eq!(segment_bounds(3), (0..1, 1..2, 2..3));
        assert_eq!(segment_bounds(10), (0..3, 3..7, 7..10));
    }

    #[test]
    fn arc_table() {
        assert_eq!(classify_arc([High, High, Low]), ArcType::Tragedy);
        assert_eq!(classify_arc([Low, Mid, High]), ArcType::RagsToRiches);
        assert_eq!(classify_arc([High, Low, High]), ArcType::Cinderella);
        assert_eq!(classify_arc([Low, Mid, Low]), ArcType::Oedipus);
        assert_eq!(classify_arc([Mid, Mid, Mid]), ArcType::Other([Mid, Mid, Mid]));
        assert_eq!(ArcType::Other([Mid, Mid, Mid]).to_string(), "OTHER(M,M,M)");
    }

    #[test]
    fn agreement_compares_levels_only() {
        let lex = lexicon();
        let params = ShapeParams { window: 2, ..Default::default() };
        let (a, _) = arc_profile("a", "seven seven seven seven seven five five five five five five", &lex, params).unwrap();
        let (b, _) = arc_profile("b", "six seven six seven six seven five five five five", &lex, params).unwrap();
        assert_eq!(a.levels, [High, High, Low]);
        assert!(shape_agreement(&a, &b).unwrap());
        assert!(shape_agreement(&a, &a).unwrap());
        let (c, _) = arc_profile("c", "five five five six seven seven seven", &lex, params).unwrap();
        assert!(!shape_agreement(&a, &c).unwrap());
        let (d, _) = arc_profile("d", "five", &lex, ShapeParams::default()).unwrap();
        assert_eq!(shape_agreement(&a, &d), Err(ShapeError::ParameterMismatch));
    }

    proptest! {
        #[test]
        fn series_length_law(n in 1usize..120, window in 1usize..40) {
            let scores: Vec<f64> = (0..n).map(|i| (i % 9) as f64).collect();
            let values = windowed_means(&scores, window).unwrap();
            prop_assert_eq!(values.len(), if n >= window { n - window + 1 } else { 1 });
            prop_assert!(values.iter().all(|v| v.is_finite()));
        }

        #[test]
        fn levels_shift_invariant(
            series in prop::collection::vec(4.0f64..7.0, 1..60),
            delta in -3.0f64..3.0,
        ) {
            let base = segment_levels(&series, 5.4, 0.2).unwrap();
            let near = |x: f64| (x - 5.6).abs() < 1e-9 || (x - 5.2).abs() < 1e-9;
            prop_assume!(![base.begin_avg, base.mid_avg, base.end_avg].into_iter().any(near));
            let shifted: Vec<f64> = series.iter().map(|x| x + delta).collect();
            let moved = segment_levels(&shifted, 5.4 + delta, 0.2).unwrap();
            prop_assert_eq!(base.levels, moved.levels);
            // classification is total on any non-empty series
            let _ = classify_arc(moved.levels);
        }
    }
}
