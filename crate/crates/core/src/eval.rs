//! Verification metrics and summary statistics.

use std::fmt::Display;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("score set needs at least one target and one non-target score")]
    EmptyScores,
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("label lists differ in length ({truth} vs {predicted})")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("label {0} not in label order")]
    UnknownLabel(String),
    #[error("statistics of an empty list")]
    Empty,
    #[error("t test needs at least two values per sample")]
    TooFewSamples,
    #[error("malformed table: {0}")]
    MalformedTable(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    target: Vec<f64>,
    nontarget: Vec<f64>,
}

impl ScoreSet {
    pub fn new(target: Vec<f64>, nontarget: Vec<f64>) -> Result<Self, EvalError> {
        if target.is_empty() || nontarget.is_empty() {
            return Err(EvalError::EmptyScores);
        }
        if target.iter().chain(&nontarget).any(|s| !s.is_finite()) {
            return Err(EvalError::NonFiniteScore);
        }
        Ok(ScoreSet { target, nontarget })
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn nontarget(&self) -> &[f64] {
        &self.nontarget
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub false_alarm: f64,
    pub miss: f64,
}

/// Operating points ordered by increasing threshold.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetCurve {
    pub points: Vec<DetPoint>,
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Sweeps every distinct score as a threshold, plus one above the maximum.
///
/// A trial is accepted when its score is at or above the threshold, so
/// `miss` counts targets strictly below and `false_alarm` non-targets at or
/// above it.
pub fn det_curve(scores: &ScoreSet) -> DetCurve {
    let tgt = sorted(&scores.target);
    let non = sorted(&scores.nontarget);
    let mut thresholds: Vec<f64> = tgt.iter().chain(&non).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let top = *thresholds.last().unwrap();
    thresholds.push(top + top.abs().max(1.0));

    let (nt, nn) = (tgt.len() as f64, non.len() as f64);
    let (mut i, mut k) = (0, 0);
    let points = thresholds
        .into_iter()
        .map(|th| {
            while i < tgt.len() && tgt[i] < th {
                i += 1;
            }
            while k < non.len() && non[k] < th {
                k += 1;
            }
            DetPoint { threshold: th, false_alarm: (non.len() - k) as f64 / nn, miss: i as f64 / nt }
        })
        .collect();
    DetCurve { points }
}

/// Equal error rate in percent, interpolated linearly between the two sweep
/// points that bracket the miss/false-alarm crossing.
pub fn eer(scores: &ScoreSet) -> f64 {
    eer_from_curve(&det_curve(scores))
}

pub fn eer_from_curve(curve: &DetCurve) -> f64 {
    let pts = &curve.points;
    let k = pts.iter().position(|p| p.miss >= p.false_alarm).unwrap_or(pts.len() - 1);
    if k == 0 {
        return 100.0 * pts[0].miss;
    }
    let (a, b) = (pts[k - 1], pts[k]);
    let d0 = a.miss - a.false_alarm;
    let d1 = b.miss - b.false_alarm;
    if d1 == 0.0 {
        return 100.0 * b.miss;
    }
    let f = -d0 / (d1 - d0);
    100.0 * (a.false_alarm + f * (b.false_alarm - a.false_alarm))
}

/// Threshold at the equal-error operating point, interpolated like [`eer`].
pub fn eer_threshold(scores: &ScoreSet) -> f64 {
    let curve = det_curve(scores);
    let pts = &curve.points;
    let k = pts.iter().position(|p| p.miss >= p.false_alarm).unwrap_or(pts.len() - 1);
    if k == 0 {
        return pts[0].threshold;
    }
    let (a, b) = (pts[k - 1], pts[k]);
    let d0 = a.miss - a.false_alarm;
    let d1 = b.miss - b.false_alarm;
    if d1 == 0.0 {
        return b.threshold;
    }
    let f = -d0 / (d1 - d0);
    a.threshold + f * (b.threshold - a.threshold)
}

fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Writes `threshold,false_alarm,miss` lines under a header.
pub fn export_det(curve: &DetCurve, path: &Path) -> Result<(), EvalError> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "threshold,false_alarm,miss")?;
    for p in &curve.points {
        writeln!(out, "{},{},{}", sig9(p.threshold), sig9(p.false_alarm), sig9(p.miss))?;
    }
    out.flush()?;
    Ok(())
}

pub fn parse_det(text: &str) -> Result<DetCurve, EvalError> {
    let mut lines = text.lines();
    if lines.next() != Some("threshold,false_alarm,miss") {
        return Err(EvalError::MalformedTable("missing DET header".into()));
    }
    let points = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(str::parse).collect::<Result<_, _>>().map_err(|e| EvalError::MalformedTable(format!("{l}: {e}")))?;
            match v[..] {
                [threshold, false_alarm, miss] => Ok(DetPoint { threshold, false_alarm, miss }),
                _ => Err(EvalError::MalformedTable(format!("expected 3 fields: {l}"))),
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(DetCurve { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `counts[i][j]`: items of true class `i` predicted as `j`.
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    /// Row-normalized percentages; rows with no items are all zero.
    pub fn percentages(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let n: usize = row.iter().sum();
                row.iter().map(|&c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 }).collect()
            })
            .collect()
    }

    /// Fraction of items on the diagonal, in percent.
    pub fn accuracy(&self) -> f64 {
        let total: usize = self.counts.iter().flatten().sum();
        let hits: usize = (0..self.counts.len()).map(|i| self.counts[i][i]).sum();
        if total == 0 {
            0.0
        } else {
            100.0 * hits as f64 / total as f64
        }
    }

    /// Per-class recall in percent.
    pub fn class_accuracies(&self) -> Vec<f64> {
        self.percentages().iter().enumerate().map(|(i, r)| r[i]).collect()
    }
}

pub fn confusion_matrix<L: PartialEq + Display>(truth: &[L], predicted: &[L], order: &[L]) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch { truth: truth.len(), predicted: predicted.len() });
    }
    let index = |l: &L| order.iter().position(|o| o == l).ok_or_else(|| EvalError::UnknownLabel(l.to_string()));
    let mut counts = vec![vec![0usize; order.len()]; order.len()];
    for (t, p) in truth.iter().zip(predicted) {
        counts[index(t)?][index(p)?] += 1;
    }
    Ok(ConfusionMatrix { labels: order.iter().map(ToString::to_string).collect(), counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation (divisor n).
    pub sd: f64,
}

pub fn summary_stats(values: &[f64]) -> Result<Summary, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(Summary { mean, sd: var.sqrt() })
}

/// Welch's t statistic with sample variances (divisor n - 1).
pub fn two_sample_t(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(EvalError::TooFewSamples);
    }
    let moments = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0), n)
    };
    let (ma, va, na) = moments(a);
    let (mb, vb, nb) = moments(b);
    let diff = ma - mb;
    if diff == 0.0 {
        return Ok(0.0);
    }
    Ok(diff / (va / na + vb / nb).sqrt())
}

/// Tab-separated table with a header row; `#` lines are comments.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl LabeledTable {
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| EvalError::MalformedTable("no header".into()))?;
        let columns: Vec<String> = header.split('\t').skip(1).map(str::to_string).collect();
        let rows = lines
            .map(|l| {
                let mut f = l.split('\t');
                let label = f.next().unwrap_or_default().to_string();
                let vals = f
                    .map(|x| x.trim().parse::<f64>().map_err(|e| EvalError::MalformedTable(format!("{l}: {e}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                if vals.len() != columns.len() {
                    return Err(EvalError::MalformedTable(format!("row {label} has {} values", vals.len())));
                }
                Ok((label, vals))
            })
            .collect::<Result<_, _>>()?;
        Ok(LabeledTable { columns, rows })
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|x| x == name)?;
        Some(self.rows.iter().map(|(_, v)| v[c]).collect())
    }

    pub fn row(&self, label: &str) -> Option<&[f64]> {
        self.rows.iter().find(|(l, _)| l == label).map(|(_, v)| v.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(t: &[f64], n: &[f64]) -> ScoreSet {
        ScoreSet::new(t.to_vec(), n.to_vec()).unwrap()
    }

    #[test]
    fn det_extremes() {
        let c = det_curve(&set(&[1.0, 2.0], &[-2.0, -1.0]));
        let first = c.points[0];
        let last = *c.points.last().unwrap();
        assert_eq!((first.false_alarm, first.miss), (1.0, 0.0));
        assert_eq!((last.false_alarm, last.miss), (0.0, 1.0));
        assert!(c.points.iter().any(|p| p.false_alarm == 0.0 && p.miss == 0.0));
    }

    #[test]
    fn det_monotone() {
        let c = det_curve(&set(&[0.3, 1.2, 0.3, 2.0, -0.4], &[0.1, 0.3, -1.0, 0.9]));
        for w in c.points.windows(2) {
            assert!(w[1].threshold > w[0].threshold);
            assert!(w[1].false_alarm <= w[0].false_alarm);
            assert!(w[1].miss >= w[0].miss);
        }
    }

    #[test]
    fn identical_sets_are_symmetric() {
        let v = [0.5, -1.0, 2.0, 2.0, 0.1];
        for p in det_curve(&set(&v, &v)).points {
            assert_eq!(p.miss + p.false_alarm, 1.0);
        }
        assert!((eer(&set(&v, &v)) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn eer_examples() {
        assert_eq!(eer(&set(&[0.9, 0.8], &[0.2, 0.1])), 0.0);
        assert!((eer(&set(&[1.0, 2.0], &[1.0, 2.0])) - 50.0).abs() < 1e-12);
        assert!((eer(&set(&[3.0, 2.0, 1.0, 0.0], &[2.5, 1.5, 0.5, -0.5])) - 50.0).abs() < 1e-12);
        assert_eq!(eer(&set(&[-5.0], &[5.0])), 100.0);
    }

    #[test]
    fn eer_shift_and_transform_invariant() {
        let t = [0.3, 1.2, 0.7, 2.0, -0.4, 0.9];
        let n = [0.1, 0.35, -1.0, 0.95, -0.2];
        let base = eer(&set(&t, &n));
        let shifted = eer(&set(&t.map(|x| x + 17.5), &n.map(|x| x + 17.5)));
        let cubed = eer(&set(&t.map(|x| x * x * x), &n.map(|x| x * x * x)));
        assert_eq!(base, shifted);
        assert_eq!(base, cubed);
    }

    #[test]
    fn det_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("det.csv");
        let curve = det_curve(&set(&[0.123456789012, 2.0], &[1.0 / 3.0]));
        assert_eq!(curve.points.len(), 4);
        export_det(&curve, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
        let back = parse_det(&text).unwrap();
        for (a, b) in back.points.iter().zip(&curve.points) {
            assert_eq!(sig9(a.threshold), sig9(b.threshold));
            assert_eq!(sig9(a.miss), sig9(b.miss));
        }
        export_det(&DetCurve::default(), &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "threshold,false_alarm,miss\n");
    }

    #[test]
    fn confusion_rows() {
        let labels = ["a", "b", "c"];
        let m = confusion_matrix(&labels, &labels, &labels).unwrap();
        assert_eq!(m.percentages(), vec![vec![100.0, 0.0, 0.0], vec![0.0, 100.0, 0.0], vec![0.0, 0.0, 100.0]]);
        assert!(matches!(confusion_matrix(&["a"], &["z"], &labels), Err(EvalError::UnknownLabel(l)) if l == "z"));
        assert!(matches!(confusion_matrix(&["a"], &[], &labels), Err(EvalError::LengthMismatch { .. })));
        let m = confusion_matrix(&["a", "a", "b", "a"], &["a", "b", "b", "c"], &labels).unwrap();
        let p = m.percentages();
        assert!((p[0].iter().sum::<f64>() - 100.0).abs() < 1e-9);
        assert_eq!(m.accuracy(), 50.0);
    }

    #[test]
    fn stats() {
        let s = summary_stats(&[4.0, 4.0, 4.0]).unwrap();
        assert_eq!((s.mean, s.sd), (4.0, 0.0));
        assert!(summary_stats(&[]).is_err());
        assert_eq!(two_sample_t(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(two_sample_t(&[1.0], &[1.0, 2.0]).is_err());
        let tiny = two_sample_t(&[1.0; 4], &[0.0, 1e-9, -1e-9, 0.0]).unwrap();
        assert!(tiny > 1e8);
    }

    #[test]
    fn table_parsing() {
        let t = LabeledTable::parse("# note\nemotion\tx\ty\nneutral\t1\t2.5\nanger\t3\t4\n").unwrap();
        assert_eq!(t.column("y").unwrap(), vec![2.5, 4.0]);
        assert_eq!(t.row("anger").unwrap(), &[3.0, 4.0]);
        assert!(LabeledTable::parse("e\tx\nr\t1\t2\n").is_err());
    }
}
