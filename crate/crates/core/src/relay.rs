//! AC dual-slope and DC threshold line-current differential relay logic.

use crate::signal::{LineKind, SampleStream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RelaySettings {
    pub kind: LineKind,
    /// Minimum pickup, kA.
    pub i_d: f64,
    /// Breakpoint between the two slopes, kA.
    pub i_b: f64,
    pub m1: f64,
    pub m2: f64,
    /// DC reliability threshold as a fraction of `i_nom`.
    pub eta: f64,
    pub i_nom: f64,
    /// Trailing window of the magnitude estimator.
    pub mag_window_s: f64,
}

impl RelaySettings {
    /// Defaults with a one-cycle RMS window.
    pub fn ac(i_nom: f64, f0_hz: f64) -> Self {
        Self {
            kind: LineKind::Ac,
            i_d: 0.05,
            i_b: 0.585,
            m1: 0.2,
            m2: 0.4,
            eta: 0.2,
            i_nom,
            mag_window_s: 1.0 / f0_hz,
        }
    }

    /// Defaults with a 2 ms moving-average window.
    pub fn dc(i_nom: f64) -> Self {
        Self { kind: LineKind::Dc, mag_window_s: 0.002, ..Self::ac(i_nom, 60.0) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.i_d > 0.0 && self.i_b > 0.0) {
            return Err(Error::invalid("i_d and i_b must be positive"));
        }
        if !(0.0 < self.m1 && self.m1 < self.m2) {
            return Err(Error::invalid(format!("slopes must satisfy 0 < m1 < m2 (got {}, {})", self.m1, self.m2)));
        }
        if !(0.1..=0.25).contains(&self.eta) {
            return Err(Error::invalid(format!("eta {} outside [0.1, 0.25]", self.eta)));
        }
        if !(self.i_nom > 0.0) {
            return Err(Error::invalid("i_nom must be positive"));
        }
        if !(self.mag_window_s > 0.0) || !self.mag_window_s.is_finite() {
            return Err(Error::invalid("magnitude window must be positive"));
        }
        Ok(())
    }

    /// Magnitude window length in samples at `fs_hz`.
    pub fn window_samples(&self, fs_hz: f64) -> usize {
        ((self.mag_window_s * fs_hz).round() as usize).max(1)
    }

    /// DC trip level `eta * i_nom`.
    pub fn dc_threshold(&self) -> f64 {
        self.eta * self.i_nom
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripEvent {
    pub index: usize,
    pub time_s: f64,
    /// Phase or pole pair that first met the criterion.
    pub pair: usize,
    pub i_d: f64,
    pub i_r: f64,
    /// Operating level the differential was compared against.
    pub threshold: f64,
}

/// Compensated (Neumaier) summation, so constant windows average exactly.
fn neumaier<I: Iterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Peak-equivalent RMS (AC) or absolute mean (DC) of a window.
fn magnitude_of<F: Fn(usize) -> f64>(kind: LineKind, start: usize, end: usize, value: F) -> f64 {
    let n = (end - start) as f64;
    match kind {
        LineKind::Ac => {
            let ms = neumaier((start..end).map(|k| {
                let v = value(k);
                v * v
            })) / n;
            (2.0 * ms).sqrt()
        }
        LineKind::Dc => (neumaier((start..end).map(&value)) / n).abs(),
    }
}

fn window_bounds(stream: &SampleStream, k: usize, settings: &RelaySettings) -> Result<(usize, usize)> {
    let w = settings.window_samples(stream.fs_hz);
    if k >= stream.len() {
        return Err(Error::invalid(format!("sample {k} beyond stream of {} samples", stream.len())));
    }
    if k + 1 < w {
        return Err(Error::InsufficientHistory { index: k, needed: w });
    }
    Ok((k + 1 - w, k + 1))
}

fn check_kind(stream: &SampleStream, settings: &RelaySettings) -> Result<()> {
    if stream.layout.kind() != settings.kind {
        return Err(Error::invalid(format!(
            "{} relay settings applied to a {} stream",
            settings.kind,
            stream.layout.kind()
        )));
    }
    Ok(())
}

fn check_pair(stream: &SampleStream, pair: usize) -> Result<()> {
    if pair >= stream.layout.pairs() {
        return Err(Error::invalid(format!("pair {pair} out of range for {} line", stream.layout.kind())));
    }
    Ok(())
}

/// `||x||` of one channel over the trailing window ending at `k`.
pub fn estimate_magnitude(stream: &SampleStream, channel: usize, k: usize, settings: &RelaySettings) -> Result<f64> {
    if channel >= stream.channels() {
        return Err(Error::invalid(format!("channel {channel} out of range")));
    }
    let (start, end) = window_bounds(stream, k, settings)?;
    Ok(magnitude_of(settings.kind, start, end, |i| stream.get(i, channel)))
}

/// `||I1 + I2||` for a phase/pole pair at sample `k`.
pub fn differential_current(stream: &SampleStream, pair: usize, k: usize, settings: &RelaySettings) -> Result<f64> {
    check_pair(stream, pair)?;
    let (start, end) = window_bounds(stream, k, settings)?;
    let (l, r) = (stream.layout.local(pair), stream.layout.remote(pair));
    Ok(magnitude_of(settings.kind, start, end, |i| stream.get(i, l) + stream.get(i, r)))
}

/// `||I1|| + ||I2||` for a phase/pole pair at sample `k`.
pub fn restraining_current(stream: &SampleStream, pair: usize, k: usize, settings: &RelaySettings) -> Result<f64> {
    check_pair(stream, pair)?;
    let (l, r) = (stream.layout.local(pair), stream.layout.remote(pair));
    Ok(estimate_magnitude(stream, l, k, settings)? + estimate_magnitude(stream, r, k, settings)?)
}

/// Dual-slope operating characteristic `I_op(I_r)`.
pub fn operating_current(i_r: f64, settings: &RelaySettings) -> Result<f64> {
    if settings.kind != LineKind::Ac {
        return Err(Error::invalid("the dual-slope characteristic applies to AC relays"));
    }
    if !(i_r >= 0.0) {
        return Err(Error::invalid(format!("restraining current {i_r} must be non-negative")));
    }
    if i_r <= settings.i_b {
        Ok(settings.i_d + settings.m1 * i_r)
    } else {
        Ok(settings.i_d + settings.m1 * settings.i_b + settings.m2 * (i_r - settings.i_b))
    }
}

/// Trip evaluation of one pair at one index; `None` when not satisfied.
pub(crate) fn evaluate_pair(
    stream: &SampleStream,
    pair: usize,
    k: usize,
    window: usize,
    settings: &RelaySettings,
) -> Option<TripEvent> {
    let (start, end) = (k + 1 - window, k + 1);
    let (l, r) = (stream.layout.local(pair), stream.layout.remote(pair));
    let kind = settings.kind;
    let i_d = magnitude_of(kind, start, end, |i| stream.get(i, l) + stream.get(i, r));
    let (threshold, i_r) = match kind {
        LineKind::Ac => {
            // Cheap reject: I_op >= i_d always.
            if i_d < settings.i_d {
                return None;
            }
            let i_r = magnitude_of(kind, start, end, |i| stream.get(i, l))
                + magnitude_of(kind, start, end, |i| stream.get(i, r));
            let op = operating_current(i_r, settings).ok()?;
            (op, i_r)
        }
        LineKind::Dc => {
            let threshold = settings.dc_threshold();
            if i_d < threshold {
                return None;
            }
            let i_r = magnitude_of(kind, start, end, |i| stream.get(i, l))
                + magnitude_of(kind, start, end, |i| stream.get(i, r));
            (threshold, i_r)
        }
    };
    (i_d >= threshold).then(|| TripEvent { index: k, time_s: stream.time(k), pair, i_d, i_r, threshold })
}

/// Scans from sample `from` (clamped to the first index with full history).
pub(crate) fn scan_from(stream: &SampleStream, settings: &RelaySettings, from: usize) -> Result<Option<TripEvent>> {
    check_kind(stream, settings)?;
    let window = settings.window_samples(stream.fs_hz);
    if stream.len() < window {
        return Err(Error::invalid(format!(
            "stream of {} samples is shorter than the {window}-sample magnitude window",
            stream.len()
        )));
    }
    for k in from.max(window - 1)..stream.len() {
        for pair in 0..stream.layout.pairs() {
            if let Some(ev) = evaluate_pair(stream, pair, k, window, settings) {
                return Ok(Some(ev));
            }
        }
    }
    Ok(None)
}

/// Earliest trip over the whole stream; ties at one index go to the lowest pair.
pub fn scan_for_trip(stream: &SampleStream, settings: &RelaySettings) -> Result<Option<TripEvent>> {
    settings.validate()?;
    scan_from(stream, settings, 0)
}
