//! Labeled relay-pickup windows: extraction, containers, stratified splits,
//! pooling across lines, and the on-disk format.

mod format;
mod grid;

pub use format::{
    decode_dataset, encode_dataset, load_dataset, load_sidecar, save_dataset, save_sidecar, DATASET_MAGIC,
};
pub use grid::{
    attack_descriptor, build_example, build_stream, enumerate_scenarios, generate, AttackPlan, Generation,
    LineProfile, ScenarioDescriptor, ScenarioGrid, ScenarioKind,
};

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::signal::{ChannelLayout, LineKind, SampleStream};
use crate::{Error, Result};

/// Binary class label; FDIA is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Fault = 0,
    Fdia = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Fault),
            1 => Ok(Label::Fdia),
            _ => Err(Error::invalid(format!("label byte {v} is not 0 or 1"))),
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Fault => "fault",
            Label::Fdia => "fdia",
        })
    }
}

/// Observation window centered on the relay trigger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub duration_ms: f64,
    pub fs_hz: f64,
}

impl WindowSpec {
    pub fn new(duration_ms: f64, fs_hz: f64) -> Result<Self> {
        let spec = Self { duration_ms, fs_hz };
        spec.validate()?;
        Ok(spec)
    }

    /// 10 ms for AC, 4 ms for DC.
    pub fn default_for(kind: LineKind, fs_hz: f64) -> Self {
        let duration_ms = match kind {
            LineKind::Ac => 10.0,
            LineKind::Dc => 4.0,
        };
        Self { duration_ms, fs_hz }
    }

    /// Sequence length `T`.
    pub fn len(&self) -> usize {
        (self.duration_ms * self.fs_hz / 1000.0).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_ms > 0.0 && self.fs_hz > 0.0) {
            return Err(Error::invalid("window duration and rate must be positive"));
        }
        if self.len() < 2 {
            return Err(Error::invalid(format!(
                "a {} ms window at {} Hz has fewer than 2 samples",
                self.duration_ms, self.fs_hz
            )));
        }
        Ok(())
    }

    /// Position of the trigger sample inside the window: `ceil(T/2)` samples
    /// up to and including the trigger, `floor(T/2)` after it.
    pub fn trigger_offset(&self) -> usize {
        self.len().div_ceil(2) - 1
    }

    /// Inclusive sample range `[k - ceil(T/2) + 1, k + floor(T/2)]`.
    pub fn bounds(&self, trigger: usize) -> (i64, i64) {
        let t = self.len() as i64;
        let k = trigger as i64;
        (k - (t + 1) / 2 + 1, k + t / 2)
    }
}

/// `T x d` time-major window of raw currents (kA) stored at single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    t: usize,
    d: usize,
    data: Vec<f32>,
}

impl Window {
    pub fn new(t: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != t * d {
            return Err(Error::Dimension {
                expected: format!("{t}x{d} = {} values", t * d),
                found: format!("{} values", data.len()),
            });
        }
        Ok(Self { t, d, data })
    }

    pub fn steps(&self) -> usize {
        self.t
    }

    pub fn channels(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, step: usize, channel: usize) -> f32 {
        self.data[step * self.d + channel]
    }

    pub fn to_stream(&self, fs_hz: f64) -> Result<SampleStream> {
        let layout = ChannelLayout::from_channels(self.d)?;
        SampleStream::new(layout, fs_hz, 0.0, self.data.iter().map(|&v| v as f64).collect())
    }

    pub fn from_stream(stream: &SampleStream) -> Self {
        Self {
            t: stream.len(),
            d: stream.channels(),
            data: stream.samples().iter().map(|&v| v as f32).collect(),
        }
    }
}

/// Cuts the centered window around `trigger`; no padding.
pub fn extract_window(stream: &SampleStream, trigger: usize, spec: &WindowSpec) -> Result<Window> {
    spec.validate()?;
    let (start, end) = spec.bounds(trigger);
    if start < 0 || end >= stream.len() as i64 {
        return Err(Error::WindowOutOfBounds { start, end, len: stream.len() });
    }
    let d = stream.channels();
    let (start, end) = (start as usize, end as usize);
    let data = stream.samples()[start * d..(end + 1) * d].iter().map(|&v| v as f32).collect();
    Window::new(spec.len(), d, data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub window: Window,
    pub label: Label,
    /// `<line>/<f|a><index>`; the prefix identifies the line profile.
    pub scenario_id: String,
    pub scenario_kind: String,
    pub params: String,
}

impl LabeledExample {
    pub fn line(&self) -> &str {
        self.scenario_id.split('/').next().unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: LineKind,
    pub fs_hz: f64,
    pub window_ms: f64,
    pub steps: usize,
    pub channels: usize,
    pub seed: u64,
    examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn new(kind: LineKind, window: WindowSpec, seed: u64) -> Self {
        Self {
            kind,
            fs_hz: window.fs_hz,
            window_ms: window.duration_ms,
            steps: window.len(),
            channels: ChannelLayout::new(kind).channels(),
            seed,
            examples: Vec::new(),
        }
    }

    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec { duration_ms: self.window_ms, fs_hz: self.fs_hz }
    }

    pub fn push(&mut self, example: LabeledExample) -> Result<()> {
        self.check_shape(&example.window)?;
        self.examples.push(example);
        Ok(())
    }

    pub(crate) fn check_shape(&self, w: &Window) -> Result<()> {
        if w.steps() != self.steps || w.channels() != self.channels {
            return Err(Error::Dimension {
                expected: format!("{}x{}", self.steps, self.channels),
                found: format!("{}x{}", w.steps(), w.channels()),
            });
        }
        Ok(())
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn examples_mut(&mut self) -> &mut [LabeledExample] {
        &mut self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }

    /// Distinct line prefixes in first-seen order.
    pub fn lines(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.examples {
            if !out.iter().any(|l| l == e.line()) {
                out.push(e.line().to_string());
            }
        }
        out
    }

    /// Subset belonging to one line profile.
    pub fn filter_line(&self, line: &str) -> Dataset {
        self.with_examples(self.examples.iter().filter(|e| e.line() == line).cloned().collect())
    }

    fn with_examples(&self, examples: Vec<LabeledExample>) -> Dataset {
        Dataset { examples, ..self.empty_like() }
    }

    fn empty_like(&self) -> Dataset {
        Dataset {
            kind: self.kind,
            fs_hz: self.fs_hz,
            window_ms: self.window_ms,
            steps: self.steps,
            channels: self.channels,
            seed: self.seed,
            examples: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSplit {
    pub train_fraction: f64,
    /// Carved out of the training portion.
    pub val_fraction: Option<f64>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn new(seed: u64) -> Self {
        Self { train_fraction: 0.8, val_fraction: None, seed }
    }
}

#[derive(Debug, Clone)]
pub struct SplitSets {
    pub train: Dataset,
    pub test: Dataset,
    pub val: Option<Dataset>,
}

/// Minimum examples per class accepted by [`split_dataset`].
pub const MIN_PER_CLASS: usize = 5;

/// Stratified, seeded split. Each class is shuffled and cut independently,
/// then each partition is shuffled as a whole.
pub fn split_dataset(ds: &Dataset, split: &DatasetSplit) -> Result<SplitSets> {
    if !(split.train_fraction > 0.0 && split.train_fraction < 1.0) {
        return Err(Error::invalid("train fraction must lie in (0, 1)"));
    }
    if let Some(v) = split.val_fraction {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::invalid("validation fraction must lie in (0, 1)"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(split.seed);
    let (mut train, mut test, mut val) = (Vec::new(), Vec::new(), Vec::new());
    for label in [Label::Fault, Label::Fdia] {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.examples[i].label == label).collect();
        if idx.len() < MIN_PER_CLASS {
            return Err(Error::invalid(format!(
                "class {label} has {} examples; at least {MIN_PER_CLASS} are required",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n_train = (idx.len() as f64 * split.train_fraction).round() as usize;
        let (tr, te) = idx.split_at(n_train);
        let n_val = split.val_fraction.map_or(0, |v| (tr.len() as f64 * v).round() as usize);
        let (va, tr) = tr.split_at(n_val);
        train.extend_from_slice(tr);
        test.extend_from_slice(te);
        val.extend_from_slice(va);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    val.shuffle(&mut rng);
    let pick = |ids: &[usize]| ds.with_examples(ids.iter().map(|&i| ds.examples[i].clone()).collect());
    Ok(SplitSets {
        train: pick(&train),
        test: pick(&test),
        val: split.val_fraction.map(|_| pick(&val)),
    })
}

/// Concatenates datasets of one relay type, keeping each example's scenario id.
pub fn pool_datasets(parts: &[Dataset]) -> Result<Dataset> {
    let first = parts.first().ok_or_else(|| Error::invalid("nothing to pool"))?;
    let mut pooled = first.empty_like();
    for p in parts {
        if p.kind != first.kind || p.steps != first.steps || p.channels != first.channels || p.fs_hz != first.fs_hz {
            return Err(Error::invalid(format!(
                "cannot pool {} {}x{} @ {} Hz with {} {}x{} @ {} Hz",
                p.kind, p.steps, p.channels, p.fs_hz, first.kind, first.steps, first.channels, first.fs_hz
            )));
        }
        pooled.examples.extend(p.examples.iter().cloned());
    }
    Ok(pooled)
}
