//! Accuracy, macro F1 and confusion matrices over integer class indices.

use std::fmt::Write as _;

use crate::error::{contract, Result};

/// `c×c` counts; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[usize] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    fn column_sum(&self, predicted: usize) -> usize {
        (0..self.classes).map(|t| self.get(t, predicted)).sum()
    }

    /// Row-normalized recognition rates; rows of absent classes stay zero.
    pub fn rates(&self) -> Vec<Vec<f64>> {
        (0..self.classes)
            .map(|t| {
                let row = self.row(t);
                let n: usize = row.iter().sum();
                row.iter()
                    .map(|&v| if n == 0 { 0.0 } else { v as f64 / n as f64 })
                    .collect()
            })
            .collect()
    }

    /// Per-class `(precision, recall)`, 0 where the denominator is 0.
    pub fn precision_recall(&self) -> Vec<(f64, f64)> {
        (0..self.classes)
            .map(|k| {
                let tp = self.get(k, k) as f64;
                let predicted = self.column_sum(k);
                let actual: usize = self.row(k).iter().sum();
                let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
                let r = if actual == 0 { 0.0 } else { tp / actual as f64 };
                (p, r)
            })
            .collect()
    }

    /// Unweighted mean over all `c` classes of `2pr / (p + r)`.
    pub fn f1_macro(&self) -> f64 {
        let sum: f64 = self
            .precision_recall()
            .into_iter()
            .map(|(p, r)| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
            .sum();
        sum / self.classes as f64
    }
}

fn check_labels(pred: &[usize], truth: &[usize], classes: usize) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(contract(format!(
            "{} predictions for {} truth labels",
            pred.len(),
            truth.len()
        )));
    }
    if classes == 0 {
        return Err(contract("class count must be positive"));
    }
    if let Some(&bad) = pred.iter().chain(truth).find(|&&l| l >= classes) {
        return Err(contract(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

pub fn confusion_matrix(pred: &[usize], truth: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    check_labels(pred, truth, classes)?;
    let mut counts = vec![0; classes * classes];
    for (&p, &t) in pred.iter().zip(truth) {
        counts[t * classes + p] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

/// Percentage of correct predictions.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(contract(format!(
            "{} predictions for {} truth labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(contract("accuracy of an empty prediction set"));
    }
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * correct as f64 / pred.len() as f64)
}

pub fn f1_macro(pred: &[usize], truth: &[usize], classes: usize) -> Result<f64> {
    Ok(confusion_matrix(pred, truth, classes)?.f1_macro())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy_percent: f64,
    pub f1_macro: f64,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn evaluate(pred: &[usize], truth: &[usize], classes: usize) -> Result<Self> {
        let confusion = confusion_matrix(pred, truth, classes)?;
        Ok(Self {
            accuracy_percent: accuracy(pred, truth)?,
            f1_macro: confusion.f1_macro(),
            confusion,
        })
    }

    /// CSV blocks: scalar metrics, confusion counts, row-normalized rates.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let c = self.confusion.classes();
        let name = |k: usize| class_names.get(k).cloned().unwrap_or_else(|| k.to_string());
        let mut out = String::new();
        let _ = writeln!(out, "metric,value");
        let _ = writeln!(out, "accuracy_percent,{:.4}", self.accuracy_percent);
        let _ = writeln!(out, "f1_macro,{:.4}", self.f1_macro);
        let _ = writeln!(out, "samples,{}", self.confusion.total());
        let _ = writeln!(out);

        let header: Vec<String> = (0..c).map(|k| format!("pred_{}", name(k))).collect();
        let _ = writeln!(out, "confusion_counts,{}", header.join(","));
        for t in 0..c {
            let row: Vec<String> = self.confusion.row(t).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "true_{},{}", name(t), row.join(","));
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "confusion_rates,{}", header.join(","));
        for (t, rates) in self.confusion.rates().iter().enumerate() {
            let row: Vec<String> = rates.iter().map(|v| format!("{v:.4}")).collect();
            let _ = writeln!(out, "true_{},{}", name(t), row.join(","));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 100.0);
        assert_eq!(accuracy(&[1, 2, 0], &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 0, 1]).unwrap(), 50.0);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn f1_hand_fixture() {
        // confusion [[3,1],[2,4]]: p = (0.6, 0.8), r = (0.75, 2/3)
        let truth = [0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        let pred = [0, 0, 0, 1, 0, 0, 1, 1, 1, 1];
        let cm = confusion_matrix(&pred, &truth, 2).unwrap();
        assert_eq!(cm.row(0), &[3, 1]);
        assert_eq!(cm.row(1), &[2, 4]);
        let pr = cm.precision_recall();
        assert!((pr[0].0 - 0.6).abs() < 1e-12 && (pr[0].1 - 0.75).abs() < 1e-12);
        assert!((pr[1].0 - 0.8).abs() < 1e-12 && (pr[1].1 - 2.0 / 3.0).abs() < 1e-12);
        let f1 = f1_macro(&pred, &truth, 2).unwrap();
        assert!((f1 - 0.6970).abs() < 1e-4, "{f1}");
    }

    #[test]
    fn f1_perfect_and_absent_class() {
        assert_eq!(f1_macro(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), 1.0);
        // class 2 never appears in truth or predictions: its term is 0
        let f1 = f1_macro(&[0, 1], &[0, 1], 3).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn confusion_cases() {
        let cm = confusion_matrix(&[0, 1, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(cm.row(0), &[1, 0]);
        assert_eq!(cm.row(1), &[0, 2]);

        let cm = confusion_matrix(&[2], &[0], 3).unwrap();
        assert_eq!(cm.get(0, 2), 1);
        assert_eq!(cm.total(), 1);
        assert_eq!(cm.trace(), 0);

        // hand tally of six samples
        let truth = [0, 0, 1, 1, 2, 2];
        let pred = [0, 1, 1, 1, 0, 2];
        let cm = confusion_matrix(&pred, &truth, 3).unwrap();
        assert_eq!(cm.row(0), &[1, 1, 0]);
        assert_eq!(cm.row(1), &[0, 2, 0]);
        assert_eq!(cm.row(2), &[1, 0, 1]);

        assert!(confusion_matrix(&[3], &[0], 3).is_err());
    }

    #[test]
    fn report_csv_layout() {
        let r = MetricsReport::evaluate(&[0, 1, 1], &[0, 1, 0], 2).unwrap();
        let csv = r.to_csv(&["a".into(), "b".into()]);
        let expected = "metric,value\naccuracy_percent,66.6667\nf1_macro,0.6667\nsamples,3\n\n\
confusion_counts,pred_a,pred_b\ntrue_a,1,1\ntrue_b,0,1\n\n\
confusion_rates,pred_a,pred_b\ntrue_a,0.5000,0.5000\ntrue_b,0.0000,1.0000\n";
        assert_eq!(csv, expected);
    }

    fn labelled_pairs() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        prop::collection::vec((0usize..4, 0usize..4), 1..60).prop_map(|v| v.into_iter().unzip())
    }

    proptest! {
        #[test]
        fn accuracy_matches_confusion_trace((pred, truth) in labelled_pairs()) {
            let cm = confusion_matrix(&pred, &truth, 4).unwrap();
            let acc = accuracy(&pred, &truth).unwrap();
            prop_assert_eq!(cm.total(), pred.len());
            prop_assert!((acc - 100.0 * cm.trace() as f64 / cm.total() as f64).abs() < 1e-12);
            let f1 = cm.f1_macro();
            prop_assert!((0.0..=1.0).contains(&f1));
            let diagonal_all_present = cm.trace() == cm.total() && (0..4).all(|k| cm.get(k, k) > 0);
            prop_assert_eq!(f1 == 1.0, diagonal_all_present);
        }

        #[test]
        fn metrics_ignore_joint_permutation((pred, truth) in labelled_pairs(), rot in 0usize..60) {
            let k = rot % pred.len();
            let mut p2 = pred.clone();
            let mut t2 = truth.clone();
            p2.rotate_left(k);
            t2.rotate_left(k);
            p2.reverse();
            t2.reverse();
            prop_assert_eq!(
                MetricsReport::evaluate(&pred, &truth, 4).unwrap(),
                MetricsReport::evaluate(&p2, &t2, 4).unwrap()
            );
        }
    }
}
