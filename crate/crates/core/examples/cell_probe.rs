use std::time::Instant;
use ycycle_core::grid::{prepare_grid_data, GridConfig};
use ycycle_core::loss::LossConfig;
use ycycle_core::nn::{Architecture, CrdnnModel, ModelConfig};
use ycycle_core::synth::{default_roster, generate_dataset};
use ycycle_core::train::{train, TrainConfig};

fn main() {
    let t0 = Instant::now();
    let cycles = generate_dataset(&default_roster(), 20260501).unwrap();
    println!("generate: {:.1}s", t0.elapsed().as_secs_f64());

    let cfg = GridConfig {
        window_sizes: vec![25],
        train: TrainConfig {
            batch_size: 128,
            initial_learning_rate: 1e-3,
            lr_decay: 0.97,
            max_epochs: 25,
            early_stop_patience: 6,
            seed: 7,
            ..TrainConfig::default()
        },
        train_stride: 40,
        eval_stride: 25,
        ..GridConfig::default()
    };
    let t1 = Instant::now();
    let (datasets, _, _, _) = prepare_grid_data(&cycles, &cfg).unwrap();
    let (_, train_batch, test_batch) = &datasets[0];
    println!(
        "prep: {:.1}s | train windows {} (classes {:?}) test windows {} (classes {:?})",
        t1.elapsed().as_secs_f64(),
        train_batch.len(),
        train_batch.class_counts(),
        test_batch.len(),
        test_batch.class_counts()
    );

    for arch in [Architecture::TwoLstm, Architecture::TwoBiLstm] {
        let t2 = Instant::now();
        let mut model = CrdnnModel::new(arch, &ModelConfig::default(), 3).unwrap();
        let report = train(&mut model, train_batch, test_batch, &cfg.train, &LossConfig::default()).unwrap();
        println!(
            "{:?}: {:.1}s, stop {} ({:?}), best epoch {}, test acc {:.4}, micro_f1 {:.4}, lu_conf {}",
            arch,
            t2.elapsed().as_secs_f64(),
            report.stop_epoch,
            report.stop_reason,
            report.best_epoch,
            report.final_metrics.accuracy,
            report.final_metrics.micro_f1,
            report.final_metrics.loading_unloading_confusions
        );
        for e in report.epochs.iter().take(3) {
            println!("  epoch {} train {:.4} test {:.4} acc {:.4}", e.epoch, e.train_cost, e.test_cost, e.test_accuracy);
        }
    }
}
