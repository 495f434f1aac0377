//! From labeled telemetry to training-ready windows.
//!
//! Stages: first-order smoothing, per-channel z-scoring with statistics from
//! the training split only, decimated sliding windows with one-hot targets,
//! whole-cycle train/test splitting, and deliberate mislabel injection for
//! robustness probes.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed::rng_for;

/// Fixed sample rate of the telemetry bus.
pub const SAMPLE_RATE_HZ: f64 = 50.0;
pub const FRAME_DT: f64 = 1.0 / SAMPLE_RATE_HZ;
/// Tolerance on frame spacing.
pub const DT_TOLERANCE: f64 = 1e-9;

pub const CHANNEL_COUNT: usize = 5;
pub const CHANNEL_NAMES: [&str; CHANNEL_COUNT] = [
    "bucket_dp_bar",
    "velocity_mps",
    "joystick_dir",
    "drive_dp_bar",
    "boom_dp_bar",
];
/// Index of the joystick direction channel, which is discrete and therefore
/// skipped by the smoother.
pub const JOYSTICK_CHANNEL: usize = 2;

/// Default smoothing constant: time constant 0.2 s discretized as
/// `alpha = dt / (tau + dt)`.
pub const DEFAULT_SMOOTH_ALPHA: f64 = FRAME_DT / (0.2 + FRAME_DT);

/// One 50 Hz sample of the five sensor channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    /// Seconds since cycle start.
    pub t: f64,
    /// Pressure difference inside the bucket circuit, bar.
    pub bucket_dp: f64,
    /// Signed vehicle velocity, m/s.
    pub velocity: f64,
    /// Joystick direction signal in {-1, 0, +1}.
    pub joystick_dir: f64,
    /// Closed-circuit drivetrain pressure difference, bar.
    pub drive_dp: f64,
    /// Boom circuit pressure difference, bar.
    pub boom_dp: f64,
}

impl TelemetryFrame {
    pub fn channel(&self, i: usize) -> f64 {
        match i {
            0 => self.bucket_dp,
            1 => self.velocity,
            2 => self.joystick_dir,
            3 => self.drive_dp,
            4 => self.boom_dp,
            _ => panic!("channel index {i} out of range"),
        }
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut f64 {
        match i {
            0 => &mut self.bucket_dp,
            1 => &mut self.velocity,
            2 => &mut self.joystick_dir,
            3 => &mut self.drive_dp,
            4 => &mut self.boom_dp,
            _ => panic!("channel index {i} out of range"),
        }
    }
}

/// Working state of the machine. The discriminants fix the class-index
/// mapping used everywhere: e0 travel, e1 loading, e2 unloading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Travel = 0,
    Loading = 1,
    Unloading = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Travel, Label::Loading, Label::Unloading];

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn from_index(i: usize) -> Result<Label> {
        match i {
            0 => Ok(Label::Travel),
            1 => Ok(Label::Loading),
            2 => Ok(Label::Unloading),
            _ => Err(Error::Input(format!("label index {i} out of range"))),
        }
    }

    /// One-hot encoding; loading maps to `[0, 1, 0]`.
    pub fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; 3];
        v[self.index()] = 1.0;
        v
    }

    pub fn name(&self) -> &'static str {
        match self {
            Label::Travel => "travel",
            Label::Loading => "loading",
            Label::Unloading => "unloading",
        }
    }
}

/// Where a recording came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub driver: String,
    pub session: u32,
    /// Cycles recorded on a badly calibrated machine are forced into the
    /// training split.
    pub force_train: bool,
}

/// A telemetry recording with per-frame ground-truth labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSeries {
    pub frames: Vec<TelemetryFrame>,
    pub labels: Vec<Label>,
    pub provenance: Provenance,
}

impl LabeledSeries {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 * FRAME_DT
    }

    /// Checks the frame-spacing and label-alignment invariants.
    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.frames.len() {
            return Err(Error::Input(format!(
                "{} labels for {} frames",
                self.labels.len(),
                self.frames.len()
            )));
        }
        for pair in self.frames.windows(2) {
            let dt = pair[1].t - pair[0].t;
            if (dt - FRAME_DT).abs() > DT_TOLERANCE {
                return Err(Error::Input(format!(
                    "frame spacing {dt} at t={} violates the 50 Hz contract",
                    pair[0].t
                )));
            }
        }
        Ok(())
    }

    /// Times (relative to cycle start) at which the label changes.
    pub fn transition_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 1..self.labels.len() {
            if self.labels[i] != self.labels[i - 1] {
                out.push(self.frames[i].t);
            }
        }
        out
    }

    /// Seconds spent in each state.
    pub fn time_per_label(&self) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for l in &self.labels {
            acc[l.index()] += FRAME_DT;
        }
        acc
    }
}

/// First-order low-pass `y[t] = alpha x[t] + (1 - alpha) y[t-1]`, seeded with
/// `y[0] = x[0]`, applied to every continuous channel. The discrete joystick
/// signal passes through unfiltered. `alpha = 1` is the identity.
pub fn smooth(series: &LabeledSeries, alpha: f64) -> LabeledSeries {
    let mut out = series.clone();
    for ch in 0..CHANNEL_COUNT {
        if ch == JOYSTICK_CHANNEL {
            continue;
        }
        let mut prev = match out.frames.first() {
            Some(f) => f.channel(ch),
            None => continue,
        };
        for frame in out.frames.iter_mut() {
            let x = frame.channel(ch);
            let y = alpha * x + (1.0 - alpha) * prev;
            *frame.channel_mut(ch) = y;
            prev = y;
        }
    }
    out
}

/// Per-channel mean and standard deviation, with the channels that turned out
/// constant (z-scoring would divide by zero) recorded as a warning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: [f64; CHANNEL_COUNT],
    pub std: [f64; CHANNEL_COUNT],
    pub degenerate_channels: Vec<usize>,
}

const STD_FLOOR: f64 = 1e-12;

/// Computes normalization statistics over a set of cycles. Call this on the
/// training split only; the returned stats are then applied to both splits.
pub fn compute_stats(cycles: &[LabeledSeries]) -> Result<ChannelStats> {
    let n: usize = cycles.iter().map(|c| c.len()).sum();
    if n == 0 {
        return Err(Error::EmptyInput("no frames to compute stats from".into()));
    }
    let mut mean = [0.0; CHANNEL_COUNT];
    for c in cycles {
        for f in &c.frames {
            for ch in 0..CHANNEL_COUNT {
                mean[ch] += f.channel(ch);
            }
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut var = [0.0; CHANNEL_COUNT];
    for c in cycles {
        for f in &c.frames {
            for ch in 0..CHANNEL_COUNT {
                let d = f.channel(ch) - mean[ch];
                var[ch] += d * d;
            }
        }
    }
    let mut std = [0.0; CHANNEL_COUNT];
    let mut degenerate = Vec::new();
    for ch in 0..CHANNEL_COUNT {
        let s = (var[ch] / n as f64).sqrt();
        if s < STD_FLOOR {
            degenerate.push(ch);
            std[ch] = 0.0;
        } else {
            std[ch] = s;
        }
    }
    Ok(ChannelStats {
        mean,
        std,
        degenerate_channels: degenerate,
    })
}

/// Applies z-scoring with precomputed statistics. Degenerate channels map to
/// all zeros.
pub fn apply_stats(series: &LabeledSeries, stats: &ChannelStats) -> LabeledSeries {
    let mut out = series.clone();
    for frame in out.frames.iter_mut() {
        for ch in 0..CHANNEL_COUNT {
            let v = frame.channel(ch);
            *frame.channel_mut(ch) = if stats.std[ch] == 0.0 {
                0.0
            } else {
                (v - stats.mean[ch]) / stats.std[ch]
            };
        }
    }
    out
}

/// Normalizes a series. With `stats` given they are applied as-is (the
/// test-split path); otherwise statistics are computed from this series and
/// returned alongside.
pub fn normalize(
    series: &LabeledSeries,
    stats: Option<&ChannelStats>,
) -> Result<(LabeledSeries, ChannelStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => compute_stats(std::slice::from_ref(series))?,
    };
    Ok((apply_stats(series, &stats), stats))
}

/// Which frame of a window supplies its label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// The window's most recent frame (causal default).
    Final,
    /// The window's center frame, for bidirectional experiments.
    Center,
}

/// Sliding-window construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Decimated samples per window; 9, 15 or 25 in the experiment grid.
    pub window_size: usize,
    /// Raw frames between consecutive window elements. 10 at 50 Hz makes a
    /// 25-sample window span 4.82 s.
    pub decimation: usize,
    /// Raw frames between consecutive window anchors.
    pub stride: usize,
    pub label_mode: LabelMode,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_size: 25,
            decimation: 10,
            stride: 1,
            label_mode: LabelMode::Final,
        }
    }
}

impl WindowConfig {
    /// Raw frames covered by one window.
    pub fn span(&self) -> usize {
        (self.window_size - 1) * self.decimation + 1
    }

    pub fn span_seconds(&self) -> f64 {
        (self.span() - 1) as f64 * FRAME_DT
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.decimation == 0 || self.stride == 0 {
            return Err(Error::Config(
                "window size, decimation and stride must all be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Position of one window within its source recording.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMeta {
    pub cycle: usize,
    /// Raw-frame index of the window's first element.
    pub anchor: usize,
    /// Timestamp of the window's final frame.
    pub t_final: f64,
}

/// Decimated windows paired with one-hot targets.
#[derive(Debug, Clone, Default)]
pub struct WindowBatch {
    /// Each window is a `window_size x 5` matrix.
    pub windows: Vec<Matrix>,
    /// One-hot target per window.
    pub targets: Vec<Vec<f64>>,
    pub meta: Vec<WindowMeta>,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn merge(&mut self, other: WindowBatch) {
        self.windows.extend(other.windows);
        self.targets.extend(other.targets);
        self.meta.extend(other.meta);
    }

    pub fn target_class(&self, i: usize) -> usize {
        self.targets[i]
            .iter()
            .position(|&v| v == 1.0)
            .expect("one-hot target")
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for i in 0..self.len() {
            counts[self.target_class(i)] += 1;
        }
        counts
    }
}

/// Cuts one cycle into decimated sliding windows. Window elements sit at
/// offsets `0, d, 2d, ... (w-1)d` from the anchor; anchors advance by
/// `stride` raw frames; the target is the one-hot label of the window's
/// final (most recent) frame, or of the center frame in `Center` mode.
pub fn make_windows(
    series: &LabeledSeries,
    cfg: &WindowConfig,
    cycle_id: usize,
) -> Result<WindowBatch> {
    cfg.validate()?;
    let span = cfg.span();
    let n = series.len();
    if n < span {
        return Err(Error::Input(format!(
            "series of {n} frames shorter than window span {span}"
        )));
    }
    let mut batch = WindowBatch::default();
    let mut anchor = 0;
    while anchor + span <= n {
        let mut window = Matrix::zeros(cfg.window_size, CHANNEL_COUNT);
        for i in 0..cfg.window_size {
            let frame = &series.frames[anchor + i * cfg.decimation];
            for ch in 0..CHANNEL_COUNT {
                window.set(i, ch, frame.channel(ch));
            }
        }
        let label_at = match cfg.label_mode {
            LabelMode::Final => anchor + (cfg.window_size - 1) * cfg.decimation,
            LabelMode::Center => anchor + ((cfg.window_size - 1) / 2) * cfg.decimation,
        };
        let final_idx = anchor + (cfg.window_size - 1) * cfg.decimation;
        batch.windows.push(window);
        batch.targets.push(series.labels[label_at].one_hot());
        batch.meta.push(WindowMeta {
            cycle: cycle_id,
            anchor,
            t_final: series.frames[final_idx].t,
        });
        anchor += cfg.stride;
    }
    Ok(batch)
}

/// Windows a list of cycles into one batch, in cycle order.
pub fn make_windows_batch(
    cycles: &[LabeledSeries],
    cycle_ids: &[usize],
    cfg: &WindowConfig,
) -> Result<WindowBatch> {
    let mut batch = WindowBatch::default();
    for (series, &id) in cycles.iter().zip(cycle_ids.iter()) {
        batch.merge(make_windows(series, cfg, id)?);
    }
    Ok(batch)
}

/// Splits cycles into train/test index sets at whole-cycle granularity.
/// `ratio` is the training share; the training count is floored, so with 119
/// cycles at 0.8 the split is 95/24. Cycles tagged `force_train` never land
/// in the test set. Deterministic for a fixed seed.
pub fn split_dataset(
    cycles: &[LabeledSeries],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = cycles.len();
    if n < 2 {
        return Err(Error::Input(format!(
            "need at least 2 cycles to split, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Config(format!("split ratio {ratio} not in [0, 1]")));
    }
    let forced: Vec<usize> = (0..n)
        .filter(|&i| cycles[i].provenance.force_train)
        .collect();
    let mut eligible: Vec<usize> = (0..n)
        .filter(|&i| !cycles[i].provenance.force_train)
        .collect();

    let train_count = ((n as f64) * ratio).floor() as usize;
    let train_count = train_count.max(forced.len()).min(n);
    let test_count = n - train_count;
    if test_count > eligible.len() {
        return Err(Error::Input(
            "not enough unforced cycles to populate the test split".into(),
        ));
    }

    let mut rng = rng_for(seed, "cycle-split", 0);
    eligible.shuffle(&mut rng);
    let mut test: Vec<usize> = eligible[..test_count].to_vec();
    let mut train: Vec<usize> = eligible[test_count..].to_vec();
    train.extend_from_slice(&forced);
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// A contiguous run of frames whose label was flipped to travel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MislabelSpan {
    pub cycle: usize,
    /// First flipped frame index.
    pub start: usize,
    /// One past the last flipped frame index.
    pub end: usize,
    pub original: Label,
}

fn label_runs(series: &LabeledSeries) -> Vec<(usize, usize, Label)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=series.labels.len() {
        if i == series.labels.len() || series.labels[i] != series.labels[start] {
            runs.push((start, i, series.labels[start]));
            start = i;
        }
    }
    runs
}

/// Flips randomly chosen loading/unloading spans to travel until roughly
/// `rate` of the frames are mislabeled, mimicking imperfect human labeling.
/// Each flip takes a contiguous sub-span of one run; flipped locations are
/// returned for later audit. `rate` must lie in `[0, 0.05]`.
pub fn inject_mislabels(
    series: &LabeledSeries,
    rate: f64,
    seed: u64,
    cycle_id: usize,
) -> Result<(LabeledSeries, Vec<MislabelSpan>)> {
    if !(0.0..=0.05).contains(&rate) {
        return Err(Error::Input(format!(
            "mislabel rate {rate} outside [0, 0.05]"
        )));
    }
    let mut out = series.clone();
    let mut audit = Vec::new();
    if rate == 0.0 {
        return Ok((out, audit));
    }
    let mut target = ((series.len() as f64) * rate).round() as usize;
    let mut runs: Vec<(usize, usize, Label)> = label_runs(series)
        .into_iter()
        .filter(|(_, _, l)| *l != Label::Travel)
        .collect();
    let mut rng = rng_for(seed, "mislabel", cycle_id as u64);
    runs.shuffle(&mut rng);
    for (start, end, label) in runs {
        if target == 0 {
            break;
        }
        let run_len = end - start;
        let flip_len = run_len.min(target);
        let offset = if run_len > flip_len {
            rng.gen_range(0..=(run_len - flip_len))
        } else {
            0
        };
        let fs = start + offset;
        let fe = fs + flip_len;
        for l in &mut out.labels[fs..fe] {
            *l = Label::Travel;
        }
        audit.push(MislabelSpan {
            cycle: cycle_id,
            start: fs,
            end: fe,
            original: label,
        });
        target -= flip_len;
    }
    Ok((out, audit))
}

/// Dataset-level mislabel probe: flips whole loading/unloading runs across
/// randomly chosen cycles until roughly `rate` of all frames are flipped.
/// Whole runs are used so that the flipped regions are long enough to contain
/// evaluation windows.
pub fn inject_mislabels_dataset(
    cycles: &[LabeledSeries],
    rate: f64,
    seed: u64,
) -> Result<(Vec<LabeledSeries>, Vec<MislabelSpan>)> {
    if !(0.0..=0.05).contains(&rate) {
        return Err(Error::Input(format!(
            "mislabel rate {rate} outside [0, 0.05]"
        )));
    }
    let mut out: Vec<LabeledSeries> = cycles.to_vec();
    let mut audit = Vec::new();
    if rate == 0.0 {
        return Ok((out, audit));
    }
    let total: usize = cycles.iter().map(|c| c.len()).sum();
    let mut remaining = ((total as f64) * rate).round() as i64;
    let mut rng = rng_for(seed, "mislabel-dataset", 0);
    let mut order: Vec<usize> = (0..cycles.len()).collect();
    order.shuffle(&mut rng);
    for cycle_id in order {
        if remaining <= 0 {
            break;
        }
        let runs: Vec<(usize, usize, Label)> = label_runs(&out[cycle_id])
            .into_iter()
            .filter(|(_, _, l)| *l != Label::Travel)
            .collect();
        if runs.is_empty() {
            continue;
        }
        let (start, end, label) = runs[rng.gen_range(0..runs.len())];
        for l in &mut out[cycle_id].labels[start..end] {
            *l = Label::Travel;
        }
        audit.push(MislabelSpan {
            cycle: cycle_id,
            start,
            end,
            original: label,
        });
        remaining -= (end - start) as i64;
    }
    Ok((out, audit))
}
