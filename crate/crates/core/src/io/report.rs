//! Line-oriented training-report rendering: one record per epoch, then a
//! summary block with the stop decision, the final metrics bundle and the
//! per-layer weight-magnitude report. Floats use shortest round-trip form,
//! so identical reports render to identical bytes.

use crate::train::{StopReason, TrainReport};

pub const REPORT_MAGIC: &str = "# ycycle-train-report v1";

pub fn render_train_report(report: &TrainReport) -> String {
    let mut out = String::new();
    out.push_str(REPORT_MAGIC);
    out.push('\n');
    for e in &report.epochs {
        out.push_str(&format!(
            "epoch {} lr {} train_cost {} test_cost {} test_acc {}\n",
            e.epoch, e.learning_rate, e.train_cost, e.test_cost, e.test_accuracy
        ));
    }
    out.push_str(&format!(
        "summary stop_epoch {} stop_reason {} best_epoch {} best_test_cost {} parameters {}\n",
        report.stop_epoch,
        match report.stop_reason {
            StopReason::EarlyStopped => "early_stopped",
            StopReason::MaxEpochs => "max_epochs",
        },
        report.best_epoch,
        report.best_test_cost,
        report.parameter_count
    ));
    out.push_str(&report.final_metrics.render());
    out.push_str("weight magnitudes (mean |w| per layer):\n");
    for (name, mag) in &report.weight_magnitudes {
        out.push_str(&format!("  {name} {mag}\n"));
    }
    if !report.input_channel_magnitudes.is_empty() {
        out.push_str("conv attention per input channel (mean |w|):\n");
        for (ch, mag) in report.input_channel_magnitudes.iter().enumerate() {
            out.push_str(&format!(
                "  {} {mag}\n",
                crate::pipeline::CHANNEL_NAMES[ch]
            ));
        }
    }
    out
}

/// Epoch costs as CSV for external plotting.
pub fn cost_curve_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,learning_rate,train_cost,test_cost,test_accuracy\n");
    for e in &report.epochs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.epoch, e.learning_rate, e.train_cost, e.test_cost, e.test_accuracy
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ConfusionMatrix, MetricsBundle};
    use crate::train::EpochRecord;

    fn sample_report() -> TrainReport {
        TrainReport {
            epochs: vec![EpochRecord {
                epoch: 1,
                learning_rate: 1e-4,
                train_cost: 2.5,
                test_cost: 2.625,
                test_accuracy: 0.5,
            }],
            stop_epoch: 1,
            stop_reason: StopReason::MaxEpochs,
            best_epoch: 1,
            best_test_cost: 2.625,
            final_metrics: MetricsBundle::from_predictions(&[0, 1, 2], &[0, 1, 1]).unwrap(),
            parameter_count: 19_463,
            weight_magnitudes: vec![("layer00 conv1d".into(), 0.25)],
            input_channel_magnitudes: vec![0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }

    #[test]
    fn report_renders_epochs_and_summary() {
        let text = render_train_report(&sample_report());
        assert!(text.starts_with(REPORT_MAGIC));
        assert!(text.contains("epoch 1 lr 0.0001"));
        assert!(text.contains("stop_reason max_epochs"));
        assert!(text.contains("parameters 19463"));
        assert!(text.contains("bucket_dp_bar"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let r = sample_report();
        assert_eq!(render_train_report(&r), render_train_report(&r));
        assert_eq!(cost_curve_csv(&r), cost_curve_csv(&r));
    }

    #[test]
    fn confusion_matrix_prints_truth_rows() {
        let cm = ConfusionMatrix {
            counts: [[5, 0, 0], [1, 3, 0], [0, 0, 2]],
        };
        let text = cm.render();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].contains("pred"));
        assert!(lines[1].starts_with("e0"));
        assert!(lines[2].contains('1'), "truth=loading row holds the error");
    }
}
