//! Detection metrics. Label 1 marks the positive (anomalous) class and higher
//! scores mean "more anomalous".

use std::fmt;

use crate::error::{ensure, Result};

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    ensure!(scores.len() == labels.len(), Shape, "{} scores for {} labels", scores.len(), labels.len());
    ensure!(labels.iter().all(|&l| l <= 1), Contract, "labels must be 0 or 1");
    ensure!(scores.iter().all(|s| !s.is_nan()), NumericDomain, "scores contain NaN");
    let pos = labels.iter().filter(|&&l| l == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Area under the ROC curve from average ranks (ties share their mean rank),
/// which equals the fraction of positive/negative pairs ordered correctly
/// with ties counted one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    ensure!(pos > 0 && neg > 0, Contract, "AUC needs both classes, got {pos} positive and {neg} negative");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of positives, so tied groups stay integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_avg_rank = (i + 1 + j + 1) as u128;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        twice_rank_sum += twice_avg_rank * tied_pos;
        i = j + 1;
    }
    let (p, n) = (pos as u128, neg as u128);
    // U = R - p(p+1)/2; in doubled units 2U = 2R - p(p+1).
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub auc: Option<f64>,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

impl MetricsReport {
    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }

    pub const CSV_HEADER: &'static str = "auc,threshold,precision,recall,f1,tp,fp,tn,fn";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.auc.map_or(String::new(), |a| a.to_string()),
            self.threshold,
            self.precision,
            self.recall,
            self.f1,
            self.true_positives,
            self.false_positives,
            self.true_negatives,
            self.false_negatives
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.auc {
            Some(a) => writeln!(f, "auc={a}")?,
            None => writeln!(f, "auc=undefined")?,
        }
        writeln!(f, "threshold={}", self.threshold)?;
        writeln!(f, "precision={}", self.precision)?;
        writeln!(f, "recall={}", self.recall)?;
        writeln!(f, "f1={}", self.f1)?;
        write!(
            f,
            "tp={} fp={} tn={} fn={}",
            self.true_positives, self.false_positives, self.true_negatives, self.false_negatives
        )
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion counts for `score >= threshold`; empty denominators give 0.
/// AUC is filled in when both classes are present.
pub fn pr_metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport> {
    let (pos, neg) = check(scores, labels)?;
    let mut r = MetricsReport {
        auc: if pos > 0 && neg > 0 { Some(roc_auc(scores, labels)?) } else { None },
        threshold,
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        true_positives: 0,
        false_positives: 0,
        true_negatives: 0,
        false_negatives: 0,
    };
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => r.true_positives += 1,
            (true, false) => r.false_positives += 1,
            (false, false) => r.true_negatives += 1,
            (false, true) => r.false_negatives += 1,
        }
    }
    r.precision = ratio(r.true_positives, r.true_positives + r.false_positives);
    r.recall = ratio(r.true_positives, r.true_positives + r.false_negatives);
    r.f1 = if r.precision + r.recall > 0.0 {
        2.0 * r.precision * r.recall / (r.precision + r.recall)
    } else {
        0.0
    };
    Ok(r)
}

/// The candidate threshold (one of the scores) with the highest F1; ties go
/// to the larger threshold.
pub fn best_f1_threshold(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check(scores, labels)?;
    ensure!(!scores.is_empty(), Contract, "no scores");
    let mut candidates = scores.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best = (f64::NEG_INFINITY, candidates[0]);
    for t in candidates {
        let f1 = pr_metrics(scores, labels, t)?.f1;
        if f1 >= best.0 {
            best = (f1, t);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_point_case() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [0, 0, 1, 1];
        assert_eq!(roc_auc(&scores, &labels).unwrap(), 0.75);
        let m = pr_metrics(&scores, &labels, 0.37).unwrap();
        assert_eq!((m.precision, m.recall), (0.5, 0.5));
        assert_eq!((m.true_positives, m.false_positives, m.true_negatives, m.false_negatives), (1, 1, 1, 1));
    }

    #[test]
    fn extremes() {
        assert_eq!(roc_auc(&[0.0, 1.0], &[0, 1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[1.0, 0.0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[3.0; 5], &[0, 1, 0, 1, 1]).unwrap(), 0.5);
        assert!(roc_auc(&[1.0, 2.0], &[1, 1]).is_err());
        assert!(roc_auc(&[1.0, f64::NAN], &[0, 1]).is_err());
    }

    #[test]
    fn threshold_extremes() {
        let scores = [0.2, 0.5, 0.9];
        let labels = [0, 1, 1];
        assert_eq!(pr_metrics(&scores, &labels, 0.0).unwrap().recall, 1.0);
        let high = pr_metrics(&scores, &labels, 2.0).unwrap();
        assert_eq!((high.recall, high.precision, high.f1), (0.0, 0.0, 0.0));
        assert_eq!(high.total(), 3);
    }

    #[test]
    fn best_threshold_separates_clean_sets() {
        assert_eq!(best_f1_threshold(&[0.1, 0.2, 0.7, 0.9], &[0, 0, 1, 1]).unwrap(), 0.7);
        assert_eq!(best_f1_threshold(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.35);
    }

    #[test]
    fn single_class_report_has_no_auc() {
        let m = pr_metrics(&[0.1, 0.2], &[0, 0], 0.15).unwrap();
        assert_eq!(m.auc, None);
        assert_eq!(m.false_positives, 1);
    }
}
