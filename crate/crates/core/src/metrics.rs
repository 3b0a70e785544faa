//! Classification metrics: confusion matrix, per-class precision/recall/F1,
//! ROC-AUC and report rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts indexed `[true class][predicted class]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>, class_names: Vec<String>) -> Result<Self> {
        let c = class_names.len();
        if counts.len() != c || counts.iter().any(|r| r.len() != c) {
            return Err(Error::dim(
                "confusion_matrix",
                format!("counts must be {c}x{c} for {c} class names"),
            ));
        }
        Ok(Self {
            counts,
            class_names,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }

    /// Text grid with true classes as rows.
    pub fn render(&self) -> String {
        let width = self
            .class_names
            .iter()
            .map(|n| n.len() + 5)
            .chain(self.counts.iter().flatten().map(|v| v.to_string().len()))
            .max()
            .unwrap_or(8)
            .max(8);
        let mut out = String::from("Confusion Matrix (rows: true, columns: predicted):\n");
        let _ = write!(out, "{:>width$}", "");
        for n in &self.class_names {
            let _ = write!(out, " {:>width$}", format!("pred {n}"));
        }
        out.push('\n');
        for (n, row) in self.class_names.iter().zip(&self.counts) {
            let _ = write!(out, "{n:>width$}");
            for v in row {
                let _ = write!(out, " {v:>width$}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix(
    truth: &[usize],
    pred: &[usize],
    class_names: &[String],
) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::dim(
            "confusion_matrix",
            format!("{} labels vs {} predictions", truth.len(), pred.len()),
        ));
    }
    if truth.is_empty() {
        return Err(Error::dim("confusion_matrix", "no samples"));
    }
    let c = class_names.len();
    let mut counts = vec![vec![0u64; c]; c];
    for (i, (&t, &p)) in truth.iter().zip(pred).enumerate() {
        if t >= c || p >= c {
            return Err(Error::Label {
                index: i,
                label: t.max(p),
                num_classes: c,
            });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        class_names: class_names.to_vec(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when a zero denominator forced one of the rates to 0.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: AverageMetrics,
    pub weighted_avg: AverageMetrics,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn classification_report(cm: &ConfusionMatrix) -> Result<ClassificationReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetric(
            "classification report of zero samples".into(),
        ));
    }
    let classes: Vec<ClassMetrics> = (0..cm.num_classes())
        .map(|c| {
            let tp = cm.counts[c][c];
            let precision = ratio(tp, cm.col_sum(c));
            let recall = ratio(tp, cm.row_sum(c));
            let (p, r) = (precision.unwrap_or(0.0), recall.unwrap_or(0.0));
            let f1 = if p + r > 0.0 {
                2.0 * p * r / (p + r)
            } else {
                0.0
            };
            ClassMetrics {
                name: cm.class_names[c].clone(),
                precision: p,
                recall: r,
                f1,
                support: cm.row_sum(c),
                degenerate: precision.is_none() || recall.is_none() || p + r == 0.0,
            }
        })
        .collect();
    let n = classes.len() as f64;
    let macro_avg = AverageMetrics {
        precision: classes.iter().map(|c| c.precision).sum::<f64>() / n,
        recall: classes.iter().map(|c| c.recall).sum::<f64>() / n,
        f1: classes.iter().map(|c| c.f1).sum::<f64>() / n,
        support: total,
    };
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        classes.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / total as f64
    };
    let weighted_avg = AverageMetrics {
        precision: weighted(|c| c.precision),
        recall: weighted(|c| c.recall),
        f1: weighted(|c| c.f1),
        support: total,
    };
    Ok(ClassificationReport {
        classes,
        accuracy: cm.accuracy(),
        macro_avg,
        weighted_avg,
    })
}

/// Text table in the familiar scikit-learn layout, two decimals.
pub fn render_report(report: &ClassificationReport) -> String {
    let width = report
        .classes
        .iter()
        .map(|c| c.name.len())
        .chain(["weighted avg".len()])
        .max()
        .unwrap_or(12);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>width$}  {:>9} {:>9} {:>9} {:>9}\n",
        "", "precision", "recall", "f1-score", "support"
    );
    let row = |out: &mut String, name: &str, p: f64, r: f64, f: f64, s: u64| {
        let _ = writeln!(out, "{name:>width$}  {p:>9.2} {r:>9.2} {f:>9.2} {s:>9}");
    };
    for c in &report.classes {
        row(&mut out, &c.name, c.precision, c.recall, c.f1, c.support);
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "{:>width$}  {:>9} {:>9} {:>9.2} {:>9}",
        "accuracy", "", "", report.accuracy, report.macro_avg.support
    );
    for (name, a) in [
        ("macro avg", &report.macro_avg),
        ("weighted avg", &report.weighted_avg),
    ] {
        row(&mut out, name, a.precision, a.recall, a.f1, a.support);
    }
    out
}

/// One evaluated sample with the model's score for the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub truth: usize,
    pub predicted: usize,
    pub score: f64,
}

fn split_scores(scored: &[ScoredPrediction], positive: usize) -> Result<(usize, usize)> {
    let p = scored.iter().filter(|s| s.truth == positive).count();
    let n = scored.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::UndefinedMetric(format!(
            "ROC-AUC needs both classes ({p} positive, {n} negative samples)"
        )));
    }
    if scored.iter().any(|s| s.score.is_nan()) {
        return Err(Error::UndefinedMetric("NaN score".into()));
    }
    Ok((p, n))
}

/// Area under the ROC curve via the Mann-Whitney rank statistic, with tied
/// scores sharing their average rank.
pub fn roc_auc(scored: &[ScoredPrediction], positive: usize) -> Result<f64> {
    let (p, n) = split_scores(scored, positive)?;
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].score.total_cmp(&scored[b].score));
    let mut pos_rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].score == scored[order[i]].score {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let mean_rank = (i + j + 2) as f64 / 2.0;
        let pos_in_group = order[i..=j]
            .iter()
            .filter(|&&k| scored[k].truth == positive)
            .count();
        pos_rank_sum += mean_rank * pos_in_group as f64;
        i = j + 1;
    }
    let u = pos_rank_sum - (p * (p + 1)) as f64 / 2.0;
    Ok(u / (p as f64 * n as f64))
}

/// ROC points `(false positive rate, true positive rate)` swept over every
/// distinct score, from `(0, 0)` to `(1, 1)`.
pub fn roc_curve(scored: &[ScoredPrediction], positive: usize) -> Result<Vec<(f64, f64)>> {
    let (p, n) = split_scores(scored, positive)?;
    let mut sorted: Vec<&ScoredPrediction> = scored.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].score;
        while i < sorted.len() && sorted[i].score == s {
            if sorted[i].truth == positive {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    Ok(points)
}

/// Trapezoidal area under a piecewise-linear curve.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Machine-readable evaluation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub classes: Vec<ClassMetrics>,
    pub macro_avg: AverageMetrics,
    pub weighted_avg: AverageMetrics,
    pub roc_auc: Option<f64>,
    pub confusion: Vec<Vec<u64>>,
}

impl MetricsReport {
    pub fn new(report: &ClassificationReport, cm: &ConfusionMatrix, roc_auc: Option<f64>) -> Self {
        Self {
            accuracy: report.accuracy,
            classes: report.classes.clone(),
            macro_avg: report.macro_avg.clone(),
            weighted_avg: report.weighted_avg.clone(),
            roc_auc,
            confusion: cm.counts.clone(),
        }
    }

    pub fn report(&self) -> ClassificationReport {
        ClassificationReport {
            classes: self.classes.clone(),
            accuracy: self.accuracy,
            macro_avg: self.macro_avg.clone(),
            weighted_avg: self.weighted_avg.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        vec!["fire".into(), "nofire".into()]
    }

    fn reference_matrix() -> ConfusionMatrix {
        ConfusionMatrix::from_counts(vec![vec![149, 10], vec![10, 241]], names()).unwrap()
    }

    #[test]
    fn diagonal_and_single_wrong() {
        let cm = confusion_matrix(&[0, 1, 1], &[0, 1, 1], &names()).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0], vec![0, 2]]);
        assert_eq!(cm.accuracy(), 1.0);
        let r = classification_report(&cm).unwrap();
        assert!(r
            .classes
            .iter()
            .all(|c| c.precision == 1.0 && c.recall == 1.0 && c.f1 == 1.0));
        let cm = confusion_matrix(&[0], &[1], &names()).unwrap();
        assert_eq!(cm.accuracy(), 0.0);
        assert_eq!(cm.counts[0][1], 1);
        assert!(confusion_matrix(&[0, 1], &[0], &names()).is_err());
    }

    #[test]
    fn reference_counts() {
        let r = classification_report(&reference_matrix()).unwrap();
        assert!((r.accuracy - 390.0 / 410.0).abs() < 1e-12);
        assert!((r.classes[0].precision - 149.0 / 159.0).abs() < 1e-12);
        assert!((r.classes[1].recall - 241.0 / 251.0).abs() < 1e-12);
        assert!((r.weighted_avg.recall - r.accuracy).abs() < 1e-12);
    }

    #[test]
    fn degenerate_class() {
        let cm = confusion_matrix(&[0, 1], &[1, 1], &names()).unwrap();
        let r = classification_report(&cm).unwrap();
        assert_eq!(r.classes[0].precision, 0.0);
        assert!(r.classes[0].degenerate);
        assert!(!r.classes[1].degenerate);
    }

    #[test]
    fn report_layout_matches_sklearn() {
        let text = render_report(&classification_report(&reference_matrix()).unwrap());
        let expected = "              precision    recall  f1-score   support\n\n        fire       0.94      0.94      0.94       159\n      nofire       0.96      0.96      0.96       251\n\n    accuracy                           0.95       410\n   macro avg       0.95      0.95      0.95       410\nweighted avg       0.95      0.95      0.95       410\n";
        assert_eq!(text, expected);
    }

    fn scored(pos: &[f64], neg: &[f64]) -> Vec<ScoredPrediction> {
        pos.iter()
            .map(|&s| ScoredPrediction {
                truth: 0,
                predicted: 0,
                score: s,
            })
            .chain(neg.iter().map(|&s| ScoredPrediction {
                truth: 1,
                predicted: 1,
                score: s,
            }))
            .collect()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&scored(&[0.9, 0.8], &[0.1, 0.2]), 0).unwrap(), 1.0);
        assert_eq!(roc_auc(&scored(&[0.5, 0.5], &[0.5]), 0).unwrap(), 0.5);
        assert_eq!(roc_auc(&scored(&[0.9, 0.4], &[0.6, 0.1]), 0).unwrap(), 0.75);
        assert!(matches!(
            roc_auc(&scored(&[0.9], &[]), 0),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn curve_area_matches_rank_auc() {
        let s = scored(&[0.9, 0.4, 0.4, 0.7], &[0.6, 0.1, 0.4]);
        let area = trapezoid_area(&roc_curve(&s, 0).unwrap());
        assert!((area - roc_auc(&s, 0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn json_twin_round_trips() {
        let cm = reference_matrix();
        let r = classification_report(&cm).unwrap();
        let m = MetricsReport::new(&r, &cm, Some(0.97));
        let back: MetricsReport =
            serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.report(), r);
    }
}
