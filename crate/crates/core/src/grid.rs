//! The architecture-comparison experiment: {1 LSTM, 2 LSTMs, 2 BiLSTMs} x
//! window sizes {9, 15, 25}, each cell trained and evaluated on the same
//! cycle split.
//!
//! Cells are independent (they share only read-only dataset views) and run
//! in parallel; per-cell failures are reported without aborting the rest.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::metrics::MetricsBundle;
use crate::nn::{Architecture, CrdnnModel, ModelConfig};
use crate::pipeline::{
    apply_stats, compute_stats, make_windows_batch, smooth, split_dataset, ChannelStats,
    LabelMode, LabeledSeries, WindowBatch, WindowConfig, DEFAULT_SMOOTH_ALPHA,
};
use crate::seed::derive_seed;
use crate::train::{train, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub architectures: Vec<Architecture>,
    pub window_sizes: Vec<usize>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub decimation: usize,
    /// Anchor stride for training windows.
    pub train_stride: usize,
    /// Anchor stride for test windows.
    pub eval_stride: usize,
    pub label_mode: LabelMode,
    pub smooth_alpha: f64,
    pub split_ratio: f64,
    /// Seed for the cycle split (training seeds derive per cell from
    /// `train.seed`).
    pub split_seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            architectures: Architecture::ALL.to_vec(),
            window_sizes: vec![9, 15, 25],
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            loss: LossConfig::default(),
            decimation: 10,
            train_stride: 1,
            eval_stride: 1,
            label_mode: LabelMode::Final,
            smooth_alpha: DEFAULT_SMOOTH_ALPHA,
            split_ratio: 0.8,
            split_seed: 1,
        }
    }
}

/// One trained cell of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub architecture: Architecture,
    pub window_size: usize,
    pub report: TrainReport,
    pub metrics: MetricsBundle,
    pub parameter_count: usize,
}

/// Grid outcome: per-cell results (errors isolated per cell) plus the shared
/// preprocessing artifacts needed to reuse the winning model.
#[derive(Debug)]
pub struct GridOutcome {
    pub cells: Vec<std::result::Result<GridCell, Error>>,
    pub stats: ChannelStats,
    pub train_cycles: Vec<usize>,
    pub test_cycles: Vec<usize>,
}

impl GridOutcome {
    pub fn ok_cells(&self) -> impl Iterator<Item = &GridCell> {
        self.cells.iter().filter_map(|c| c.as_ref().ok())
    }

    /// Highest micro-F1 cell, ties broken toward fewer parameters.
    pub fn best_cell(&self) -> Option<&GridCell> {
        self.ok_cells().max_by(|a, b| {
            a.metrics
                .micro_f1
                .partial_cmp(&b.metrics.micro_f1)
                .unwrap()
                .then(b.parameter_count.cmp(&a.parameter_count))
        })
    }
}

/// Preprocesses cycles (smooth, split, normalize with training statistics)
/// and returns per-window-size train/test batches along with the split.
pub fn prepare_grid_data(
    cycles: &[LabeledSeries],
    cfg: &GridConfig,
) -> Result<(
    Vec<(usize, WindowBatch, WindowBatch)>,
    ChannelStats,
    Vec<usize>,
    Vec<usize>,
)> {
    let (train_idx, test_idx) = split_dataset(cycles, cfg.split_ratio, cfg.split_seed)?;
    let smoothed: Vec<LabeledSeries> = cycles
        .iter()
        .map(|c| smooth(c, cfg.smooth_alpha))
        .collect();
    let train_smoothed: Vec<LabeledSeries> =
        train_idx.iter().map(|&i| smoothed[i].clone()).collect();
    let stats = compute_stats(&train_smoothed)?;
    let normalized: Vec<LabeledSeries> =
        smoothed.iter().map(|c| apply_stats(c, &stats)).collect();

    let mut datasets = Vec::with_capacity(cfg.window_sizes.len());
    for &ws in &cfg.window_sizes {
        let train_wc = WindowConfig {
            window_size: ws,
            decimation: cfg.decimation,
            stride: cfg.train_stride,
            label_mode: cfg.label_mode,
        };
        let eval_wc = WindowConfig {
            stride: cfg.eval_stride,
            ..train_wc
        };
        let train_cycles: Vec<LabeledSeries> =
            train_idx.iter().map(|&i| normalized[i].clone()).collect();
        let test_cycles: Vec<LabeledSeries> =
            test_idx.iter().map(|&i| normalized[i].clone()).collect();
        let train_batch = make_windows_batch(&train_cycles, &train_idx, &train_wc)?;
        let test_batch = make_windows_batch(&test_cycles, &test_idx, &eval_wc)?;
        datasets.push((ws, train_batch, test_batch));
    }
    Ok((datasets, stats, train_idx, test_idx))
}

/// Trains every (architecture, window size) combination.
pub fn run_experiment_grid(cycles: &[LabeledSeries], cfg: &GridConfig) -> Result<GridOutcome> {
    if cfg.architectures.is_empty() || cfg.window_sizes.is_empty() {
        return Err(Error::Config("grid axes must be non-empty".into()));
    }
    let (datasets, stats, train_idx, test_idx) = prepare_grid_data(cycles, cfg)?;

    let mut jobs = Vec::new();
    for (ws_slot, (ws, train_batch, test_batch)) in datasets.iter().enumerate() {
        for &arch in &cfg.architectures {
            jobs.push((arch, *ws, ws_slot, train_batch, test_batch));
        }
    }

    let cells: Vec<std::result::Result<GridCell, Error>> = jobs
        .par_iter()
        .enumerate()
        .map(|(cell_idx, (arch, ws, _, train_batch, test_batch))| {
            let mut model = CrdnnModel::new(
                *arch,
                &cfg.model,
                derive_seed(cfg.train.seed, "cell-init", cell_idx as u64),
            )?;
            let cell_train_cfg = TrainConfig {
                seed: derive_seed(cfg.train.seed, "cell-train", cell_idx as u64),
                ..cfg.train.clone()
            };
            let report = train(&mut model, train_batch, test_batch, &cell_train_cfg, &cfg.loss)?;
            Ok(GridCell {
                architecture: *arch,
                window_size: *ws,
                metrics: report.final_metrics.clone(),
                parameter_count: report.parameter_count,
                report,
            })
        })
        .collect();

    Ok(GridOutcome {
        cells,
        stats,
        train_cycles: train_idx,
        test_cycles: test_idx,
    })
}

/// Renders the comparison table across all cells.
pub fn render_comparison(outcome: &GridOutcome) -> String {
    let mut out = String::from(
        "architecture  ws  params  stop_epoch  best_epoch  accuracy  micro_f1  load/unload_conf\n",
    );
    for cell in &outcome.cells {
        match cell {
            Ok(c) => out.push_str(&format!(
                "{:<12}  {:>2}  {:>6}  {:>10}  {:>10}  {:>8.4}  {:>8.4}  {:>16}\n",
                c.architecture.label(),
                c.window_size,
                c.parameter_count,
                c.report.stop_epoch,
                c.report.best_epoch,
                c.metrics.accuracy,
                c.metrics.micro_f1,
                c.metrics.loading_unloading_confusions,
            )),
            Err(e) => out.push_str(&format!("FAILED cell: {e}\n")),
        }
    }
    out
}
