//! Confusion matrices, macro-averaged precision/recall/F1, one-vs-rest ROC
//! curves with trapezoidal AUC, and CSV/SVG report rendering.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    /// Row-major; entry `(i, j)` counts true class `i` predicted as `j`.
    counts: Vec<u64>,
    names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i * self.k..(i + 1) * self.k].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, j)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Replaces the default `"0".."K-1"` class names.
    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.k {
            return Err(Error::InconsistentDimensions(format!("{} names for {} classes", names.len(), self.k)));
        }
        self.names = names;
        Ok(self)
    }
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch(truth.len(), predicted.len()));
    }
    let mut counts = vec![0u64; k * k];
    for (&t, &p) in truth.iter().zip(predicted) {
        for label in [t, p] {
            if label >= k {
                return Err(Error::LabelOutOfRange { label, classes: k });
            }
        }
        counts[t * k + p] += 1;
    }
    Ok(ConfusionMatrix { k, counts, names: (0..k).map(|i| i.to_string()).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// Macro (unweighted class mean) aggregates.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// One-vs-rest AUC per class; `None` when the class has no positives or
    /// no negatives.
    pub auc: Vec<Option<f64>>,
    pub samples: u64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Accuracy and macro P/R/F1. Undefined 0/0 ratios count as 0.
pub fn summary_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let per_class: Vec<ClassMetrics> = (0..cm.k)
        .map(|i| {
            let tp = cm.get(i, i) as f64;
            let precision = ratio(tp, cm.col_sum(i) as f64);
            let recall = ratio(tp, cm.row_sum(i) as f64);
            let f1 = ratio(2.0 * precision * recall, precision + recall);
            ClassMetrics { precision, recall, f1 }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / cm.k as f64;
    Ok(MetricsReport {
        accuracy: cm.trace() as f64 / total as f64,
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        f1: mean(|c| c.f1),
        auc: vec![None; cm.k],
        per_class,
        samples: total,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub positive_class: usize,
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
}

/// One-vs-rest ROC for class `c`: one point per distinct score, swept from
/// the highest threshold down, tied samples entering together.
pub fn roc_curve_ovr(scores: &[f64], labels: &[usize], c: usize) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l == c).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateClass(c));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == c {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    Ok(RocCurve { positive_class: c, points })
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve.points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

/// Confusion matrix, summary metrics with per-class AUC, and the ROC curves
/// of every non-degenerate class. `scores[i]` is sample `i`'s probability row.
pub fn evaluate(
    truth: &[usize],
    predicted: &[usize],
    scores: &[Vec<f64>],
    k: usize,
) -> Result<(ConfusionMatrix, MetricsReport, Vec<RocCurve>)> {
    let cm = confusion_matrix(truth, predicted, k)?;
    let mut report = summary_metrics(&cm)?;
    if scores.len() != truth.len() {
        return Err(Error::LengthMismatch(scores.len(), truth.len()));
    }
    if let Some(row) = scores.iter().find(|r| r.len() != k) {
        return Err(Error::InconsistentDimensions(format!("score row of {} for {k} classes", row.len())));
    }
    let mut curves = Vec::new();
    for c in 0..k {
        let col: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        match roc_curve_ovr(&col, truth, c) {
            Ok(curve) => {
                report.auc[c] = Some(auc(&curve));
                curves.push(curve);
            }
            Err(Error::DegenerateClass(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((cm, report, curves))
}

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// CSV metrics row and an SVG with the confusion heat map and ROC curves.
pub fn render_report(
    model: &str,
    report: &MetricsReport,
    cm: &ConfusionMatrix,
    curves: &[RocCurve],
) -> Result<(String, String)> {
    let k = cm.classes();
    if report.per_class.len() != k || report.auc.len() != k {
        return Err(Error::InconsistentDimensions(format!(
            "report covers {} classes, matrix {k}",
            report.per_class.len()
        )));
    }
    if let Some(c) = curves.iter().find(|c| c.positive_class >= k) {
        return Err(Error::InconsistentDimensions(format!("ROC curve for class {} of {k}", c.positive_class)));
    }

    let mut csv = String::from("model,accuracy,precision,recall,f1\n");
    writeln!(csv, "{model},{:.4},{:.4},{:.4},{:.4}", report.accuracy, report.precision, report.recall, report.f1).unwrap();
    csv.push_str("# precision, recall and f1 are macro averages over classes\n");
    csv.push_str("# a ratio with zero denominator (0/0) is reported as 0\n");
    for (i, m) in report.per_class.iter().enumerate() {
        let auc = report.auc[i].map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
        writeln!(csv, "# class {}: precision={:.4} recall={:.4} f1={:.4} auc={auc}", cm.names()[i], m.precision, m.recall, m.f1)
            .unwrap();
    }

    let cell = (360 / k.max(1)).clamp(8, 60);
    let grid = cell * k;
    let roc_x = 80 + grid + 60;
    let roc_size = 300;
    let width = roc_x + roc_size + 200;
    let height = (grid.max(roc_size) + 120).max(140 + 18 * curves.len());
    let mut svg = String::new();
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#).unwrap();
    writeln!(svg, r#"<text x="80" y="30" font-size="14">{} confusion matrix</text>"#, xml_escape(model)).unwrap();
    writeln!(svg, r#"<g class="confusion" transform="translate(80,50)">"#).unwrap();
    for i in 0..k {
        let row = cm.row_sum(i).max(1) as f64;
        for j in 0..k {
            let v = cm.get(i, j);
            let shade = 255 - (215.0 * v as f64 / row).round() as u8;
            writeln!(
                svg,
                r##"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="#999"><title>{} as {}: {v}</title></rect>"##,
                j * cell,
                i * cell,
                xml_escape(&cm.names()[i]),
                xml_escape(&cm.names()[j]),
            )
            .unwrap();
            if cell >= 20 {
                writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{v}</text>"#, j * cell + cell / 2, i * cell + cell / 2 + 4).unwrap();
            }
        }
    }
    writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">predicted</text>"#, grid / 2, grid + 20).unwrap();
    writeln!(svg, r#"<text x="-10" y="{}" text-anchor="end">true</text>"#, grid / 2).unwrap();
    svg.push_str("</g>\n");

    if !curves.is_empty() {
        let s = roc_size as f64;
        writeln!(svg, r#"<text x="{roc_x}" y="30" font-size="14">ROC (one-vs-rest)</text>"#).unwrap();
        writeln!(svg, r#"<g class="roc" transform="translate({roc_x},50)">"#).unwrap();
        writeln!(svg, r##"<rect width="{roc_size}" height="{roc_size}" fill="none" stroke="#333"/>"##).unwrap();
        writeln!(svg, r##"<line x1="0" y1="{roc_size}" x2="{roc_size}" y2="0" stroke="#bbb" stroke-dasharray="4 4"/>"##).unwrap();
        for (n, curve) in curves.iter().enumerate() {
            let colour = PALETTE[curve.positive_class % PALETTE.len()];
            let pts: Vec<String> =
                curve.points.iter().map(|&(fpr, tpr)| format!("{:.2},{:.2}", fpr * s, (1.0 - tpr) * s)).collect();
            writeln!(svg, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, pts.join(" ")).unwrap();
            writeln!(
                svg,
                r#"<text x="{}" y="{}" fill="{colour}">{} AUC={:.4}</text>"#,
                roc_size + 12,
                14 + 18 * n,
                xml_escape(&cm.names()[curve.positive_class]),
                auc(curve)
            )
            .unwrap();
        }
        writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">false positive rate</text>"#, roc_size / 2, roc_size + 20).unwrap();
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok((csv, svg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cm_from(rows: &[&[u64]]) -> ConfusionMatrix {
        let k = rows.len();
        let mut t = Vec::new();
        let mut p = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            for (j, &n) in r.iter().enumerate() {
                for _ in 0..n {
                    t.push(i);
                    p.push(j);
                }
            }
        }
        confusion_matrix(&t, &p, k).unwrap()
    }

    #[test]
    fn diagonal_and_empty() {
        let cm = confusion_matrix(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(cm.trace(), 4);
        let r = summary_metrics(&cm).unwrap();
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (1.0, 1.0, 1.0, 1.0));
        let empty = confusion_matrix(&[], &[], 4).unwrap();
        assert_eq!(empty.total(), 0);
        assert!(matches!(summary_metrics(&empty), Err(Error::EmptyMatrix)));
        assert!(matches!(confusion_matrix(&[0], &[3], 3), Err(Error::LabelOutOfRange { .. })));
        assert!(matches!(confusion_matrix(&[0], &[], 3), Err(Error::LengthMismatch(1, 0))));
    }

    #[test]
    fn two_class_hand_values() {
        let r = summary_metrics(&cm_from(&[&[8, 2], &[3, 7]])).unwrap();
        assert_eq!(r.accuracy, 0.75);
        let (p0, r0) = (8.0 / 11.0, 8.0 / 10.0);
        let (p1, r1) = (7.0 / 9.0, 7.0 / 10.0);
        let f = |p: f64, r: f64| 2.0 * p * r / (p + r);
        assert!((r.per_class[0].precision - p0).abs() < 1e-15);
        assert!((r.per_class[1].recall - r1).abs() < 1e-15);
        assert!((r.precision - (p0 + p1) / 2.0).abs() < 1e-15);
        assert!((r.recall - (r0 + r1) / 2.0).abs() < 1e-15);
        assert!((r.f1 - (f(p0, r0) + f(p1, r1)) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_scores_zero() {
        let r = summary_metrics(&cm_from(&[&[5, 0, 0], &[1, 4, 0], &[0, 0, 0]])).unwrap();
        assert_eq!(r.per_class[2], ClassMetrics { precision: 0.0, recall: 0.0, f1: 0.0 });
    }

    #[test]
    fn roc_edge_cases() {
        let perfect = roc_curve_ovr(&[0.9, 0.8, 0.4, 0.3], &[1, 1, 0, 0], 1).unwrap();
        assert!(perfect.points.contains(&(0.0, 1.0)));
        assert_eq!(auc(&perfect), 1.0);
        let tie = roc_curve_ovr(&[0.5; 6], &[0, 1, 0, 1, 1, 0], 1).unwrap();
        assert_eq!(tie.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc(&tie), 0.5);
        assert!(matches!(roc_curve_ovr(&[0.1, 0.2], &[0, 0], 1), Err(Error::DegenerateClass(1))));
    }

    #[test]
    fn reference_row_rendering() {
        let cm = cm_from(&[&[1, 0], &[0, 1]]);
        let mut r = summary_metrics(&cm).unwrap();
        (r.accuracy, r.precision, r.recall, r.f1) = (0.87, 0.86, 0.85, 0.87);
        let (csv, svg) = render_report("alexnet", &r, &cm, &[]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "model,accuracy,precision,recall,f1");
        assert_eq!(lines[1], "alexnet,0.8700,0.8600,0.8500,0.8700");
        assert!(lines[2..].iter().all(|l| l.starts_with('#')));
        assert!(svg.contains("confusion") && !svg.contains("polyline"));
    }

    #[test]
    fn render_is_deterministic_and_checks_dimensions() {
        let truth = [0, 1, 2, 0, 1, 2];
        let pred = [0, 2, 2, 0, 1, 1];
        let scores: Vec<Vec<f64>> = (0..6).map(|i| vec![0.1 * i as f64, 0.5, 1.0 - 0.1 * i as f64]).collect();
        let (cm, r, curves) = evaluate(&truth, &pred, &scores, 3).unwrap();
        let a = render_report("m", &r, &cm, &curves).unwrap();
        assert_eq!(a, render_report("m", &r, &cm, &curves).unwrap());
        assert_eq!(a.1.matches("<polyline").count(), 3);
        assert_eq!(a.1.matches("AUC=").count(), 3);
        let other = confusion_matrix(&[0, 1], &[0, 1], 2).unwrap();
        assert!(matches!(render_report("m", &r, &other, &curves), Err(Error::InconsistentDimensions(_))));
    }

    fn mann_whitney(scores: &[f64], positive: &[bool]) -> f64 {
        let (mut num, mut pairs) = (0.0, 0.0);
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if positive[i] && !positive[j] {
                    pairs += 1.0;
                    num += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
                }
            }
        }
        num / pairs
    }

    proptest! {
        #[test]
        fn auc_matches_rank_statistic(
            data in prop::collection::vec((0u8..20, any::<bool>()), 2..60)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 20.0).collect();
            let labels: Vec<usize> = data.iter().map(|(_, p)| *p as usize).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let curve = roc_curve_ovr(&scores, &labels, 1).unwrap();
            let pos: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
            prop_assert!((auc(&curve) - mann_whitney(&scores, &pos)).abs() < 1e-9);
            for w in curve.points.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
        }

        #[test]
        fn class_permutation_keeps_aggregates(
            pairs in prop::collection::vec((0usize..4, 0usize..4), 1..80)
        ) {
            let perm = [2usize, 0, 3, 1];
            let t: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let p: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let a = summary_metrics(&confusion_matrix(&t, &p, 4).unwrap()).unwrap();
            let tp: Vec<usize> = t.iter().map(|&x| perm[x]).collect();
            let pp: Vec<usize> = p.iter().map(|&x| perm[x]).collect();
            let b = summary_metrics(&confusion_matrix(&tp, &pp, 4).unwrap()).unwrap();
            prop_assert_eq!(a.accuracy, b.accuracy);
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
            for c in 0..4 {
                prop_assert_eq!(a.per_class[c], b.per_class[perm[c]]);
            }
        }
    }
}
