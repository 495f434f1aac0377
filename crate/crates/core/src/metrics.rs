//! Imbalance-aware evaluation: confusion matrix over the three working
//! states, micro-averaged F1, accuracy, and error-location reporting.
//!
//! Matrix orientation: row = ground truth, column = prediction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::WindowMeta;

pub const CLASS_COUNT: usize = 3;
pub const CLASS_NAMES: [&str; 3] = ["e0 travel", "e1 loading", "e2 unloading"];

/// 3x3 confusion counts; `counts[truth][prediction]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; CLASS_COUNT]; CLASS_COUNT],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..CLASS_COUNT).map(|i| self.counts[i][i]).sum()
    }

    /// Loading mistaken for unloading plus the reverse; the cycle-level
    /// failure mode that matters most downstream, exposed as a first-class
    /// metric.
    pub fn loading_unloading_confusions(&self) -> u64 {
        self.counts[1][2] + self.counts[2][1]
    }

    /// Renders with predictions across and ground truth down.
    pub fn render(&self) -> String {
        let mut out = String::from("truth \\ pred      e0      e1      e2\n");
        for (i, name) in ["e0", "e1", "e2"].iter().enumerate() {
            out.push_str(&format!(
                "{name:<13}{:>8}{:>8}{:>8}\n",
                self.counts[i][0], self.counts[i][1], self.counts[i][2]
            ));
        }
        out
    }
}

/// Tallies predictions against ground truth. Indices must be in `{0,1,2}`.
pub fn confusion(predictions: &[usize], truths: &[usize]) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::Input(format!(
            "{} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truths.iter()) {
        if p >= CLASS_COUNT || t >= CLASS_COUNT {
            return Err(Error::Input(format!("class index out of range: ({t}, {p})")));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

/// Micro-averaged F1: `2 TP / (2 TP + FP + FN)` with TP/FP/FN pooled over
/// classes. For single-label predictions pooled FP equals pooled FN, so this
/// coincides with accuracy.
pub fn micro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("empty confusion matrix".into()));
    }
    let tp = cm.trace();
    let fp = total - tp;
    let fn_ = total - tp;
    Ok(2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64))
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("empty confusion matrix".into()));
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// Macro-averaged F1. Reported for debugging only; selection uses micro-F1.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::UndefinedMetric("empty confusion matrix".into()));
    }
    let mut sum = 0.0;
    for k in 0..CLASS_COUNT {
        let tp = cm.counts[k][k] as f64;
        let fp: f64 = (0..CLASS_COUNT)
            .filter(|&i| i != k)
            .map(|i| cm.counts[i][k] as f64)
            .sum();
        let fn_: f64 = (0..CLASS_COUNT)
            .filter(|&j| j != k)
            .map(|j| cm.counts[k][j] as f64)
            .sum();
        let denom = 2.0 * tp + fp + fn_;
        sum += if denom == 0.0 { 0.0 } else { 2.0 * tp / denom };
    }
    Ok(sum / CLASS_COUNT as f64)
}

/// The full evaluation bundle reported after a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub loading_unloading_confusions: u64,
    pub samples: u64,
}

impl MetricsBundle {
    pub fn from_predictions(predictions: &[usize], truths: &[usize]) -> Result<Self> {
        let cm = confusion(predictions, truths)?;
        Ok(MetricsBundle {
            confusion: cm,
            accuracy: accuracy(&cm)?,
            micro_f1: micro_f1(&cm)?,
            macro_f1: macro_f1(&cm)?,
            loading_unloading_confusions: cm.loading_unloading_confusions(),
            samples: cm.total(),
        })
    }

    pub fn render(&self) -> String {
        format!(
            "samples {}\naccuracy {:.6}\nmicro_f1 {:.6}\nmacro_f1 {:.6}\nloading_unloading_confusions {}\n{}",
            self.samples,
            self.accuracy,
            self.micro_f1,
            self.macro_f1,
            self.loading_unloading_confusions,
            self.confusion.render()
        )
    }
}

/// One misclassified window with its position in the recording.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub window: usize,
    pub cycle: usize,
    /// Timestamp of the window's final frame, seconds into its cycle.
    pub t: f64,
    pub truth: usize,
    pub prediction: usize,
}

/// Emits every mismatch with its window index and timestamp so clustering
/// around state transitions can be inspected.
pub fn error_map(
    predictions: &[usize],
    truths: &[usize],
    meta: &[WindowMeta],
) -> Result<Vec<ErrorRecord>> {
    if predictions.len() != truths.len() || predictions.len() != meta.len() {
        return Err(Error::Input("error_map inputs not aligned".into()));
    }
    Ok(predictions
        .iter()
        .zip(truths.iter())
        .zip(meta.iter())
        .enumerate()
        .filter(|(_, ((p, t), _))| p != t)
        .map(|(i, ((&p, &t), m))| ErrorRecord {
            window: i,
            cycle: m.cycle,
            t: m.t_final,
            truth: t,
            prediction: p,
        })
        .collect())
}

/// Fraction of mistakes whose window endpoint lies within `tol_s` seconds of
/// a labeled state transition of its cycle. Returns 1.0 when there are no
/// mistakes at all.
pub fn fraction_near_transitions(
    errors: &[ErrorRecord],
    transitions_by_cycle: &[Vec<f64>],
    tol_s: f64,
) -> f64 {
    if errors.is_empty() {
        return 1.0;
    }
    let near = errors
        .iter()
        .filter(|e| {
            transitions_by_cycle
                .get(e.cycle)
                .map(|ts| ts.iter().any(|&t| (e.t - t).abs() <= tol_s))
                .unwrap_or(false)
        })
        .count();
    near as f64 / errors.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(n: usize) -> Vec<WindowMeta> {
        (0..n)
            .map(|i| WindowMeta {
                cycle: 0,
                anchor: i,
                t_final: i as f64 * 0.5,
            })
            .collect()
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let truths = [0, 1, 2, 1, 0, 2];
        let cm = confusion(&truths, &truths).unwrap();
        assert_eq!(cm.trace(), 6);
        assert_eq!(cm.total(), 6);
        assert_eq!(accuracy(&cm).unwrap(), 1.0);
        assert_eq!(micro_f1(&cm).unwrap(), 1.0);
    }

    #[test]
    fn single_mismatch_lands_in_the_right_cell() {
        let cm = confusion(&[2], &[1]).unwrap();
        assert_eq!(cm.counts[1][2], 1);
        assert_eq!(cm.total(), 1);
        assert_eq!(cm.loading_unloading_confusions(), 1);
    }

    #[test]
    fn matches_brute_force_tally() {
        use rand::Rng;
        let mut rng = crate::seed::rng_for(3, "cm-oracle", 0);
        let truths: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..3)).collect();
        let preds: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..3)).collect();
        let cm = confusion(&preds, &truths).unwrap();
        // independent tally loop
        let mut expect = [[0u64; 3]; 3];
        for i in 0..1000 {
            expect[truths[i]][preds[i]] += 1;
        }
        assert_eq!(cm.counts, expect);
        assert_eq!(cm.total(), 1000);
    }

    #[test]
    fn hand_built_matrix_metrics() {
        let cm = ConfusionMatrix {
            counts: [[5, 1, 0], [0, 3, 1], [0, 0, 2]],
        };
        let acc = accuracy(&cm).unwrap();
        assert!((acc - 10.0 / 12.0).abs() < 1e-15);
        assert_eq!(micro_f1(&cm).unwrap(), acc);
    }

    #[test]
    fn micro_f1_equals_accuracy_exactly_for_single_label() {
        use rand::Rng;
        let mut rng = crate::seed::rng_for(5, "f1-id", 0);
        for round in 0..100 {
            let n = rng.gen_range(1..200);
            let truths: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let cm = confusion(&preds, &truths).unwrap();
            let f1 = micro_f1(&cm).unwrap();
            let acc = accuracy(&cm).unwrap();
            assert_eq!(f1.to_bits(), acc.to_bits(), "round {round}");
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(confusion(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn empty_matrix_metrics_undefined() {
        let cm = ConfusionMatrix::default();
        assert!(matches!(micro_f1(&cm), Err(Error::UndefinedMetric(_))));
        assert!(matches!(accuracy(&cm), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn error_map_empty_when_no_mismatch() {
        let truths = [0usize, 1, 2];
        let records = error_map(&truths, &truths, &meta(3)).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn error_map_reports_injected_flip() {
        let truths = [0usize, 1, 2, 1];
        let mut preds = truths;
        preds[2] = 0;
        let records = error_map(&preds, &truths, &meta(4)).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].window, 2);
        assert_eq!(records[0].truth, 2);
        assert_eq!(records[0].prediction, 0);
    }

    #[test]
    fn transition_proximity_fraction() {
        let errors = vec![
            ErrorRecord {
                window: 0,
                cycle: 0,
                t: 4.9,
                truth: 0,
                prediction: 1,
            },
            ErrorRecord {
                window: 1,
                cycle: 0,
                t: 20.0,
                truth: 1,
                prediction: 0,
            },
        ];
        let transitions = vec![vec![5.0, 9.0]];
        let frac = fraction_near_transitions(&errors, &transitions, 1.0);
        assert!((frac - 0.5).abs() < 1e-15);
        assert_eq!(fraction_near_transitions(&[], &transitions, 1.0), 1.0);
    }
}
