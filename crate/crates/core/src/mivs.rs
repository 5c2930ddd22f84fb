//! Supervisory trip validation, detection metrics, and inference timing.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{extract_window, Dataset, Label, Window, WindowSpec};
use crate::nn::{predict_proba, RnnModel};
use crate::relay::{scan_for_trip, RelaySettings, TripEvent};
use crate::signal::{add_noise, ChannelLayout, NoiseSpec, SampleStream};
use crate::{Error, Result};

/// Probability at or above which a trip is blocked.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    PermitTrip,
    BlockTrip,
}

impl Verdict {
    pub fn from_probability(p: f64) -> Self {
        if p >= DECISION_THRESHOLD {
            Verdict::BlockTrip
        } else {
            Verdict::PermitTrip
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationDecision {
    pub verdict: Verdict,
    pub probability_fdia: f64,
    /// Wall time of window extraction plus inference.
    pub elapsed_s: f64,
    pub trigger: TripEvent,
}

/// Runs the relay; on pickup, classifies the centered window.
pub fn validate(
    model: &RnnModel,
    stream: &SampleStream,
    settings: &RelaySettings,
    spec: &WindowSpec,
) -> Result<ValidationDecision> {
    let trigger = scan_for_trip(stream, settings)?.ok_or(Error::NotTriggered)?;
    let start = Instant::now();
    let window = extract_window(stream, trigger.index, spec)?;
    let probability_fdia = predict_proba(model, &window)?;
    let elapsed_s = start.elapsed().as_secs_f64();
    Ok(ValidationDecision { verdict: Verdict::from_probability(probability_fdia), probability_fdia, elapsed_s, trigger })
}

/// Confusion counts with FDIA as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    pub fn record(&mut self, actual: Label, predicted: Verdict) {
        match (actual, predicted) {
            (Label::Fdia, Verdict::BlockTrip) => self.tp += 1,
            (Label::Fdia, Verdict::PermitTrip) => self.fn_ += 1,
            (Label::Fault, Verdict::PermitTrip) => self.tn += 1,
            (Label::Fault, Verdict::BlockTrip) => self.fp += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.tn + self.fp
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// FDIA detection rate.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Share of genuine faults whose trip is permitted.
    pub fn fault_recall(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Row-normalized percentages: rows are actual (fault, FDIA), columns
    /// predicted (permit, block).
    pub fn percent(&self) -> [[f64; 2]; 2] {
        let fault = self.tn + self.fp;
        let fdia = self.tp + self.fn_;
        [
            [100.0 * ratio(self.tn, fault), 100.0 * ratio(self.fp, fault)],
            [100.0 * ratio(self.fn_, fdia), 100.0 * ratio(self.tp, fdia)],
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub overall: Confusion,
    /// Present when scenario ids span more than one line.
    pub per_line: Vec<(String, Confusion)>,
}

impl MetricsReport {
    pub fn accuracy(&self) -> f64 {
        self.overall.accuracy()
    }

    pub fn to_csv(&self) -> String {
        let c = &self.overall;
        let mut s = String::from("metric,value\n");
        for (k, v) in [("tp", c.tp), ("fn", c.fn_), ("tn", c.tn), ("fp", c.fp)] {
            let _ = writeln!(s, "{k},{v}");
        }
        for (k, v) in [
            ("accuracy", c.accuracy()),
            ("precision", c.precision()),
            ("recall", c.recall()),
            ("f1", c.f1()),
            ("fault_recall", c.fault_recall()),
        ] {
            let _ = writeln!(s, "{k},{v:.6}");
        }
        for (line, lc) in &self.per_line {
            let _ = writeln!(s, "accuracy[{line}],{:.6}", lc.accuracy());
        }
        let p = c.percent();
        s.push_str("\nactual,permit_pct,block_pct\n");
        let _ = writeln!(s, "fault,{:.3},{:.3}", p[0][0], p[0][1]);
        let _ = writeln!(s, "fdia,{:.3},{:.3}", p[1][0], p[1][1]);
        s
    }

    pub fn to_table(&self) -> String {
        let c = &self.overall;
        let mut s = String::new();
        let _ = writeln!(s, "{:<14}{:>10}", "metric", "value");
        for (k, v) in [
            ("accuracy", c.accuracy()),
            ("precision", c.precision()),
            ("recall", c.recall()),
            ("f1", c.f1()),
            ("fault recall", c.fault_recall()),
        ] {
            let _ = writeln!(s, "{k:<14}{:>9.1}%", 100.0 * v);
        }
        let _ = writeln!(s, "{:<14}{:>10}", "examples", c.total());
        let p = c.percent();
        let _ = writeln!(s, "\n{:<10}{:>10}{:>10}", "actual", "permit", "block");
        let _ = writeln!(s, "{:<10}{:>9.2}%{:>9.2}%", "fault", p[0][0], p[0][1]);
        let _ = writeln!(s, "{:<10}{:>9.2}%{:>9.2}%", "fdia", p[1][0], p[1][1]);
        if !self.per_line.is_empty() {
            let _ = writeln!(s, "\n{:<10}{:>10}{:>10}", "line", "n", "accuracy");
            for (line, lc) in &self.per_line {
                let _ = writeln!(s, "{line:<10}{:>10}{:>9.1}%", lc.total(), 100.0 * lc.accuracy());
            }
        }
        s
    }
}

fn classify_all<F>(model: &RnnModel, ds: &Dataset, mut window_for: F) -> Result<MetricsReport>
where
    F: FnMut(usize, &Window) -> Result<Window>,
{
    if ds.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty dataset"));
    }
    let lines = ds.lines();
    let mut overall = Confusion::default();
    let mut per_line = vec![Confusion::default(); lines.len()];
    for (i, e) in ds.examples().iter().enumerate() {
        let w = window_for(i, &e.window)?;
        let verdict = Verdict::from_probability(predict_proba(model, &w)?);
        overall.record(e.label, verdict);
        let li = lines.iter().position(|l| l == e.line()).expect("line listed");
        per_line[li].record(e.label, verdict);
    }
    let per_line = if lines.len() > 1 { lines.into_iter().zip(per_line).collect() } else { Vec::new() };
    Ok(MetricsReport { overall, per_line })
}

pub fn evaluate(model: &RnnModel, ds: &Dataset) -> Result<MetricsReport> {
    classify_all(model, ds, |_, w| Ok(w.clone()))
}

fn example_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn noisy(window: &Window, fs_hz: f64, noise: &NoiseSpec, index: usize) -> Result<Window> {
    let stream = window.to_stream(fs_hz)?;
    let spec = NoiseSpec { snr_db: noise.snr_db, seed: example_seed(noise.seed, index) };
    Ok(Window::from_stream(&add_noise(&stream, &spec)?))
}

/// Evaluates with white noise added to each window at evaluation time; the
/// per-channel signal power is measured over the window.
pub fn evaluate_with_noise(model: &RnnModel, ds: &Dataset, noise: &NoiseSpec) -> Result<MetricsReport> {
    classify_all(model, ds, |i, w| noisy(w, ds.fs_hz, noise, i))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    /// FDIA detection rate.
    pub tpr: f64,
    /// Share of faults wrongly blocked.
    pub fpr: f64,
    pub accuracy: f64,
}

/// Detection trade-off across thresholds; the verdict contract stays at 0.5.
pub fn threshold_sweep(model: &RnnModel, ds: &Dataset, thresholds: &[f64]) -> Result<Vec<SweepRow>> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot sweep an empty dataset"));
    }
    let scored: Vec<(f64, Label)> = ds
        .examples()
        .iter()
        .map(|e| Ok((predict_proba(model, &e.window)?, e.label)))
        .collect::<Result<_>>()?;
    Ok(thresholds
        .iter()
        .map(|&threshold| {
            let mut c = Confusion::default();
            for &(p, label) in &scored {
                let v = if p >= threshold { Verdict::BlockTrip } else { Verdict::PermitTrip };
                c.record(label, v);
            }
            SweepRow { threshold, tpr: c.recall(), fpr: 1.0 - c.fault_recall(), accuracy: c.accuracy() }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyStats {
    pub iterations: usize,
    pub median_s: f64,
    pub p99_s: f64,
    pub mean_s: f64,
}

pub const WARMUP_ITERATIONS: usize = 100;

/// Times window extraction plus inference on randomized streams, on the
/// calling thread, after [`WARMUP_ITERATIONS`] untimed runs.
pub fn bench_latency(model: &RnnModel, spec: &WindowSpec, iterations: usize, seed: u64) -> Result<LatencyStats> {
    if iterations < 100 {
        return Err(Error::invalid(format!("latency benchmark needs at least 100 iterations, got {iterations}")));
    }
    let steps = spec.len();
    let layout = ChannelLayout::new(model.kind);
    if steps != model.dims().steps || layout.channels() != model.dims().inputs {
        return Err(Error::Dimension {
            expected: format!("{}x{} window", model.dims().steps, model.dims().inputs),
            found: format!("{steps}x{}", layout.channels()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = 2 * steps + 1;
    let pool: Vec<SampleStream> = (0..16)
        .map(|_| {
            let samples = (0..len * layout.channels()).map(|_| rng.random_range(-1.5..1.5) * model.i_nom).collect();
            SampleStream::new(layout, spec.fs_hz, 0.0, samples)
        })
        .collect::<Result<_>>()?;
    let trigger = steps;
    let mut run = |k: usize| -> Result<f64> {
        let start = Instant::now();
        let w = extract_window(&pool[k % pool.len()], trigger, spec)?;
        let p = predict_proba(model, &w)?;
        let dt = start.elapsed().as_secs_f64();
        std::hint::black_box(p);
        Ok(dt)
    };
    for k in 0..WARMUP_ITERATIONS {
        run(k)?;
    }
    let mut times: Vec<f64> = (0..iterations).map(&mut run).collect::<Result<_>>()?;
    times.sort_by(f64::total_cmp);
    let mean_s = times.iter().sum::<f64>() / iterations as f64;
    let pick = |q: f64| times[((q * (iterations - 1) as f64).round() as usize).min(iterations - 1)];
    Ok(LatencyStats { iterations, median_s: pick(0.5), p99_s: pick(0.99), mean_s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledExample;
    use crate::nn::ModelDims;
    use crate::signal::{synth_prefault, LineKind, WaveformConfig};

    fn counts(tp: usize, fn_: usize, tn: usize, fp: usize) -> Confusion {
        Confusion { tp, fn_, tn, fp }
    }

    #[test]
    fn reference_confusion_metrics() {
        let c = counts(983, 17, 995, 5);
        assert!((c.accuracy() - 0.989).abs() < 1e-12);
        assert!((c.recall() - 0.983).abs() < 1e-12);
        assert!((c.precision() - 983.0 / 988.0).abs() < 1e-12);
        assert!((c.precision() - 0.995).abs() < 5e-4);
        assert!((c.f1() - 0.989).abs() < 5e-4);
        let p = c.percent();
        for (got, want) in p.iter().flatten().zip([99.5, 0.5, 1.7, 98.3]) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_classifiers() {
        let perfect = counts(10, 0, 10, 0);
        assert_eq!((perfect.accuracy(), perfect.precision(), perfect.recall(), perfect.f1()), (1.0, 1.0, 1.0, 1.0));
        let always = counts(10, 0, 0, 10);
        assert_eq!((always.accuracy(), always.recall(), always.precision()), (0.5, 1.0, 0.5));
    }

    #[test]
    fn metrics_recompute_from_counts() {
        let c = counts(7, 3, 11, 2);
        let report = MetricsReport { overall: c, per_line: Vec::new() };
        let csv = report.to_csv();
        assert!(csv.starts_with("metric,value\ntp,7\nfn,3\ntn,11\nfp,2\n"));
        assert!(csv.contains(&format!("accuracy,{:.6}", 18.0 / 23.0)));
        assert!(csv.contains("actual,permit_pct,block_pct"));
        assert!(report.to_table().contains("78.3%"));
    }

    fn zero_model(kind: LineKind, t: usize, d: usize) -> RnnModel {
        let mut m = RnnModel::init(ModelDims::for_window(t, d), kind, 0.5, 0).unwrap();
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        m
    }

    #[test]
    fn healthy_stream_is_not_triggered() {
        let cfg = WaveformConfig::ac_default();
        let stream = synth_prefault(&cfg, ChannelLayout::AC, 0.1).unwrap();
        let settings = RelaySettings::ac(cfg.i_nom, cfg.f0_hz);
        let spec = WindowSpec::default_for(LineKind::Ac, cfg.fs_hz);
        let m = zero_model(LineKind::Ac, 40, 6);
        assert!(matches!(validate(&m, &stream, &settings, &spec), Err(Error::NotTriggered)));
    }

    #[test]
    fn zero_model_blocks_at_the_threshold() {
        let cfg = WaveformConfig::dc_default();
        let mut stream = synth_prefault(&cfg, ChannelLayout::DC, 0.04).unwrap();
        for k in 40..stream.len() {
            stream.set(k, 2, 0.0);
        }
        let settings = RelaySettings::dc(cfg.i_nom);
        let spec = WindowSpec::default_for(LineKind::Dc, cfg.fs_hz);
        let d = validate(&zero_model(LineKind::Dc, 16, 4), &stream, &settings, &spec).unwrap();
        assert_eq!(d.probability_fdia, 0.5);
        assert_eq!(d.verdict, Verdict::BlockTrip);
        assert!(d.elapsed_s >= 0.0);
    }

    #[test]
    fn empty_sets_and_short_benchmarks_are_rejected() {
        let m = zero_model(LineKind::Dc, 16, 4);
        let ds = Dataset::new(LineKind::Dc, WindowSpec::default_for(LineKind::Dc, 4000.0), 0);
        assert!(evaluate(&m, &ds).is_err());
        let spec = WindowSpec::default_for(LineKind::Dc, 4000.0);
        assert!(bench_latency(&m, &spec, 0, 0).is_err());
        assert!(bench_latency(&m, &spec, 99, 0).is_err());
        let stats = bench_latency(&m, &spec, 100, 0).unwrap();
        assert!(stats.median_s <= stats.p99_s);
    }

    #[test]
    fn per_line_breakdown_and_noise_determinism() {
        let spec = WindowSpec::default_for(LineKind::Dc, 4000.0);
        let mut ds = Dataset::new(LineKind::Dc, spec, 0);
        for i in 0..8 {
            let data = (0..64).map(|j| ((i * 64 + j) as f32 * 0.3).sin() * 0.4).collect();
            ds.push(LabeledExample {
                window: Window::new(16, 4, data).unwrap(),
                label: if i % 2 == 0 { Label::Fault } else { Label::Fdia },
                scenario_id: format!("{}/x{i}", if i < 4 { "dc1" } else { "dc2" }),
                scenario_kind: String::new(),
                params: String::new(),
            })
            .unwrap();
        }
        let m = RnnModel::init(ModelDims::for_window(16, 4), LineKind::Dc, 0.5, 3).unwrap();
        let r = evaluate(&m, &ds).unwrap();
        assert_eq!(r.overall.total(), 8);
        assert_eq!(r.per_line.iter().map(|(l, c)| (l.as_str(), c.total())).collect::<Vec<_>>(), [("dc1", 4), ("dc2", 4)]);
        let noise = NoiseSpec::snr(40.0, 9);
        assert_eq!(evaluate_with_noise(&m, &ds, &noise).unwrap(), evaluate_with_noise(&m, &ds, &noise).unwrap());
        let sweep = threshold_sweep(&m, &ds, &[0.0, 0.5, 1.1]).unwrap();
        assert_eq!((sweep[0].tpr, sweep[0].fpr), (1.0, 1.0));
        assert_eq!((sweep[2].tpr, sweep[2].fpr), (0.0, 0.0));
        assert_eq!(sweep[1].accuracy, r.accuracy());
    }
}
