//! Surrogate two-terminal plant: pre-fault load, internal and external
//! faults, inverter current limiting, and measurement noise.
//!
//! Currents are in kA. Every stream carries the local terminal channels
//! first and the remote terminal channels second, in the same phase/pole
//! order, so channel `p` and channel `p + pairs` form relay pair `p`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LineKind {
    Ac,
    Dc,
}

impl fmt::Display for LineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LineKind::Ac => "ac",
            LineKind::Dc => "dc",
        })
    }
}

impl FromStr for LineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ac" => Ok(LineKind::Ac),
            "dc" => Ok(LineKind::Dc),
            other => Err(Error::invalid(format!("unknown line kind `{other}` (expected ac|dc)"))),
        }
    }
}

/// Fixed channel order: AC = local A,B,C then remote A,B,C; DC = local PP,NP
/// then remote PP,NP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChannelLayout {
    kind: LineKind,
}

impl ChannelLayout {
    pub const AC: ChannelLayout = ChannelLayout { kind: LineKind::Ac };
    pub const DC: ChannelLayout = ChannelLayout { kind: LineKind::Dc };

    pub fn new(kind: LineKind) -> Self {
        Self { kind }
    }

    pub fn kind(&self) -> LineKind {
        self.kind
    }

    /// Number of channels `d`.
    pub fn channels(&self) -> usize {
        2 * self.pairs()
    }

    /// Number of phase (AC) or pole (DC) pairs.
    pub fn pairs(&self) -> usize {
        match self.kind {
            LineKind::Ac => 3,
            LineKind::Dc => 2,
        }
    }

    pub fn local(&self, pair: usize) -> usize {
        pair
    }

    pub fn remote(&self, pair: usize) -> usize {
        self.pairs() + pair
    }

    pub fn pair_name(&self, pair: usize) -> &'static str {
        match self.kind {
            LineKind::Ac => ["A", "B", "C"][pair],
            LineKind::Dc => ["PP", "NP"][pair],
        }
    }

    pub fn channel_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.channels());
        for side in ["local", "remote"] {
            for p in 0..self.pairs() {
                names.push(format!("{side}_{}", self.pair_name(p)));
            }
        }
        names
    }

    /// Layout implied by a channel count.
    pub fn from_channels(d: usize) -> Result<Self> {
        match d {
            6 => Ok(Self::AC),
            4 => Ok(Self::DC),
            _ => Err(Error::invalid(format!("no channel layout has {d} channels"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveformConfig {
    pub fs_hz: f64,
    /// AC only.
    pub f0_hz: f64,
    /// Peak (AC) or constant (DC) pre-fault load current, kA.
    pub i_load: f64,
    pub i_nom: f64,
    pub i_lim_pu: f64,
    /// Per-unit source strength behind the local terminal.
    pub z1: f64,
    /// Per-unit source strength behind the remote terminal.
    pub z2: f64,
    pub z_line: f64,
    /// Impedance base in ohms used to express the fault resistance in per unit.
    pub z_base: f64,
    pub psi_deg: f64,
    pub tau_ac_s: f64,
    pub tau_dc_s: f64,
    pub ripple_pu: f64,
    pub ripple_hz: f64,
    /// Minimum pre-fault history required before inception.
    pub prefault_margin_s: f64,
}

impl WaveformConfig {
    pub fn ac_default() -> Self {
        Self {
            fs_hz: 4000.0,
            f0_hz: 60.0,
            i_load: 0.3,
            i_nom: 0.5,
            i_lim_pu: 1.5,
            z1: 0.25,
            z2: 0.35,
            z_line: 0.5,
            z_base: 50.0,
            psi_deg: -80.0,
            tau_ac_s: 0.02,
            tau_dc_s: 0.001,
            ripple_pu: 0.0,
            ripple_hz: 360.0,
            prefault_margin_s: 0.005,
        }
    }

    pub fn dc_default() -> Self {
        Self {
            i_load: 0.4,
            z1: 0.2,
            z2: 0.3,
            z_line: 0.4,
            prefault_margin_s: 0.002,
            ..Self::ac_default()
        }
    }

    /// Inverter current cap in kA.
    pub fn i_lim(&self) -> f64 {
        self.i_lim_pu * self.i_nom
    }

    pub fn validate(&self, layout: ChannelLayout) -> Result<()> {
        let finite = [
            self.fs_hz, self.f0_hz, self.i_load, self.i_nom, self.i_lim_pu, self.z1, self.z2,
            self.z_line, self.z_base, self.psi_deg, self.tau_ac_s, self.tau_dc_s, self.ripple_pu,
            self.ripple_hz, self.prefault_margin_s,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("waveform config contains a non-finite value"));
        }
        if self.fs_hz <= 0.0 {
            return Err(Error::invalid("fs_hz must be positive"));
        }
        if self.i_nom <= 0.0 {
            return Err(Error::invalid("i_nom must be positive"));
        }
        if self.i_lim_pu < 1.0 {
            return Err(Error::invalid("i_lim_pu must be at least 1"));
        }
        if self.i_load < 0.0 || self.ripple_pu < 0.0 {
            return Err(Error::invalid("i_load and ripple_pu must be non-negative"));
        }
        if self.i_load * (1.0 + self.ripple_pu) > self.i_lim() {
            return Err(Error::invalid("pre-fault load exceeds the inverter current cap"));
        }
        if self.z1 <= 0.0 || self.z2 <= 0.0 || self.z_line <= 0.0 || self.z_base <= 0.0 {
            return Err(Error::invalid("source, line, and base impedances must be positive"));
        }
        if self.tau_ac_s <= 0.0 || self.tau_dc_s <= 0.0 {
            return Err(Error::invalid("time constants must be positive"));
        }
        if layout.kind() == LineKind::Ac {
            if self.f0_hz <= 0.0 {
                return Err(Error::invalid("AC configs require f0_hz > 0"));
            }
            if self.fs_hz < 10.0 * self.f0_hz {
                return Err(Error::invalid(format!(
                    "fs_hz {} is below the 10x fundamental floor ({} Hz)",
                    self.fs_hz,
                    10.0 * self.f0_hz
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultType {
    AG,
    BG,
    CG,
    AB,
    BC,
    CA,
    ABG,
    BCG,
    CAG,
    ABC,
    ABCG,
    PpNp,
    PpG,
    NpG,
}

impl FaultType {
    pub const AC: [FaultType; 11] = [
        FaultType::AG,
        FaultType::BG,
        FaultType::CG,
        FaultType::AB,
        FaultType::BC,
        FaultType::CA,
        FaultType::ABG,
        FaultType::BCG,
        FaultType::CAG,
        FaultType::ABC,
        FaultType::ABCG,
    ];
    pub const DC: [FaultType; 3] = [FaultType::PpNp, FaultType::PpG, FaultType::NpG];

    pub fn all(kind: LineKind) -> &'static [FaultType] {
        match kind {
            LineKind::Ac => &Self::AC,
            LineKind::Dc => &Self::DC,
        }
    }

    pub fn kind(&self) -> LineKind {
        if Self::DC.contains(self) {
            LineKind::Dc
        } else {
            LineKind::Ac
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FaultType::AG => "A-G",
            FaultType::BG => "B-G",
            FaultType::CG => "C-G",
            FaultType::AB => "A-B",
            FaultType::BC => "B-C",
            FaultType::CA => "C-A",
            FaultType::ABG => "A-B-G",
            FaultType::BCG => "B-C-G",
            FaultType::CAG => "C-A-G",
            FaultType::ABC => "A-B-C",
            FaultType::ABCG => "A-B-C-G",
            FaultType::PpNp => "PP-NP",
            FaultType::PpG => "PP-G",
            FaultType::NpG => "NP-G",
        }
    }

    /// Fault-current components as `(pair, angle offset from the pair's own
    /// phase in degrees, amplitude factor, sign)`.
    ///
    /// Phase-to-phase faults carry an antiphase component pair driven by the
    /// line-to-line voltage (leading by 30 degrees, sqrt(3)/2 of the
    /// three-phase level). DC signs follow each pole's pre-fault direction.
    fn components(&self) -> Vec<(usize, f64, f64, f64)> {
        let ll = 3f64.sqrt() / 2.0;
        match self {
            FaultType::AG => vec![(0, 0.0, 1.0, 1.0)],
            FaultType::BG => vec![(1, 0.0, 1.0, 1.0)],
            FaultType::CG => vec![(2, 0.0, 1.0, 1.0)],
            FaultType::AB => vec![(0, 30.0, ll, 1.0), (1, 30.0 + 120.0, ll, -1.0)],
            FaultType::BC => vec![(1, 30.0, ll, 1.0), (2, 30.0 + 120.0, ll, -1.0)],
            FaultType::CA => vec![(2, 30.0, ll, 1.0), (0, 30.0 + 120.0, ll, -1.0)],
            FaultType::ABG => vec![(0, 0.0, 1.0, 1.0), (1, 0.0, 1.0, 1.0)],
            FaultType::BCG => vec![(1, 0.0, 1.0, 1.0), (2, 0.0, 1.0, 1.0)],
            FaultType::CAG => vec![(2, 0.0, 1.0, 1.0), (0, 0.0, 1.0, 1.0)],
            FaultType::ABC | FaultType::ABCG => {
                vec![(0, 0.0, 1.0, 1.0), (1, 0.0, 1.0, 1.0), (2, 0.0, 1.0, 1.0)]
            }
            FaultType::PpNp => vec![(0, 0.0, 1.0, 1.0), (1, 0.0, 1.0, -1.0)],
            FaultType::PpG => vec![(0, 0.0, 1.0, 1.0)],
            FaultType::NpG => vec![(1, 0.0, 1.0, -1.0)],
        }
    }
}

impl fmt::Display for FaultType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FaultType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.to_ascii_uppercase();
        Self::AC
            .iter()
            .chain(Self::DC.iter())
            .copied()
            .find(|t| t.label() == up)
            .ok_or_else(|| Error::invalid(format!("unknown fault type `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultScenario {
    pub fault_type: FaultType,
    pub zf_ohm: f64,
    /// Fraction of line length measured from the relay.
    pub location: f64,
    /// Point-on-wave of phase A at inception (AC only).
    pub inception_deg: f64,
    /// Cycle-aligned reference time; AC inception is offset from it by the angle.
    pub t_fault_s: f64,
    pub internal: bool,
}

impl FaultScenario {
    pub fn validate(&self, layout: ChannelLayout) -> Result<()> {
        if self.fault_type.kind() != layout.kind() {
            return Err(Error::invalid(format!(
                "fault type {} is not valid on a {} line",
                self.fault_type,
                layout.kind()
            )));
        }
        if !(0.0..=200.0).contains(&self.zf_ohm) {
            return Err(Error::invalid(format!("fault impedance {} outside [0, 200] ohm", self.zf_ohm)));
        }
        if !(self.location > 0.0 && self.location < 1.0) {
            return Err(Error::invalid(format!("fault location {} outside (0, 1)", self.location)));
        }
        if !(0.0..=180.0).contains(&self.inception_deg) {
            return Err(Error::invalid(format!(
                "inception angle {} outside [0, 180] degrees",
                self.inception_deg
            )));
        }
        if !self.t_fault_s.is_finite() {
            return Err(Error::invalid("fault time must be finite"));
        }
        Ok(())
    }

    /// Actual inception instant.
    pub fn inception_time(&self, config: &WaveformConfig, layout: ChannelLayout) -> f64 {
        match layout.kind() {
            LineKind::Ac => self.t_fault_s + self.inception_deg / (360.0 * config.f0_hz),
            LineKind::Dc => self.t_fault_s,
        }
    }

    /// Capped fault-current amplitudes `(I_F1, I_F2)` fed from each terminal.
    pub fn terminal_amplitudes(&self, config: &WaveformConfig) -> (f64, f64) {
        let zf = self.zf_ohm / config.z_base;
        let cap = config.i_lim();
        let f1 = config.i_nom / (config.z1 + self.location * config.z_line + zf);
        let f2 = config.i_nom / (config.z2 + (1.0 - self.location) * config.z_line + zf);
        (f1.min(cap), f2.min(cap))
    }

    /// Through-current amplitude for an external fault beyond the remote bus,
    /// `location` then being the distance past the bus in line lengths.
    pub fn through_amplitude(&self, config: &WaveformConfig) -> f64 {
        let zf = self.zf_ohm / config.z_base;
        let f = config.i_nom / (config.z1 + (1.0 + self.location) * config.z_line + zf);
        f.min(config.i_lim())
    }
}

/// Time-major `N x d` matrix of instantaneous currents in kA.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    pub layout: ChannelLayout,
    pub fs_hz: f64,
    pub t0_s: f64,
    samples: Vec<f64>,
}

impl SampleStream {
    pub fn new(layout: ChannelLayout, fs_hz: f64, t0_s: f64, samples: Vec<f64>) -> Result<Self> {
        let d = layout.channels();
        if samples.len() % d != 0 {
            return Err(Error::invalid(format!(
                "sample buffer of length {} is not a multiple of {d} channels",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("stream contains non-finite samples"));
        }
        if !(fs_hz > 0.0) {
            return Err(Error::invalid("fs_hz must be positive"));
        }
        Ok(Self { layout, fs_hz, t0_s, samples })
    }

    pub fn empty(layout: ChannelLayout, fs_hz: f64) -> Self {
        Self { layout, fs_hz, t0_s: 0.0, samples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.layout.channels()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.layout.channels()
    }

    #[inline]
    pub fn get(&self, k: usize, channel: usize) -> f64 {
        self.samples[k * self.layout.channels() + channel]
    }

    #[inline]
    pub fn set(&mut self, k: usize, channel: usize, v: f64) {
        let d = self.layout.channels();
        self.samples[k * d + channel] = v;
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let d = self.layout.channels();
        &self.samples[k * d..(k + 1) * d]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0_s + k as f64 / self.fs_hz
    }

    /// First sample index whose time is at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let x = (t - self.t0_s) * self.fs_hz;
        (x - 1e-9).ceil().max(0.0) as usize
    }

    pub fn channel(&self, channel: usize) -> impl Iterator<Item = f64> + '_ {
        let d = self.layout.channels();
        self.samples.iter().skip(channel).step_by(d).copied()
    }

    /// Returns a new stream whose first `prefix.len()` rows come from `prefix`.
    pub fn prepend(&self, prefix: &SampleStream) -> Result<SampleStream> {
        if prefix.layout != self.layout || prefix.fs_hz != self.fs_hz {
            return Err(Error::invalid("prepended stream must share layout and rate"));
        }
        let mut samples = prefix.samples.clone();
        samples.extend_from_slice(&self.samples);
        Ok(SampleStream {
            layout: self.layout,
            fs_hz: self.fs_hz,
            t0_s: self.t0_s - prefix.len() as f64 / self.fs_hz,
            samples,
        })
    }
}

/// Pre-fault phase angles of phases A, B, C.
const PHASE_DEG: [f64; 3] = [0.0, -120.0, 120.0];

fn sample_count(duration_s: f64, fs_hz: f64) -> Result<usize> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::invalid(format!("duration {duration_s} s must be positive")));
    }
    let n = (duration_s * fs_hz).round() as usize;
    if n == 0 {
        return Err(Error::invalid("duration shorter than one sample"));
    }
    Ok(n)
}

/// Healthy load flow; remote channels are the exact negation of local ones.
pub fn synth_prefault(config: &WaveformConfig, layout: ChannelLayout, duration_s: f64) -> Result<SampleStream> {
    config.validate(layout)?;
    let n = sample_count(duration_s, config.fs_hz)?;
    let d = layout.channels();
    let pairs = layout.pairs();
    let mut samples = vec![0.0; n * d];
    let w = 2.0 * PI * config.f0_hz;
    for k in 0..n {
        let t = k as f64 / config.fs_hz;
        let row = &mut samples[k * d..(k + 1) * d];
        match layout.kind() {
            LineKind::Ac => {
                for p in 0..pairs {
                    row[p] = config.i_load * (w * t + PHASE_DEG[p].to_radians()).sin();
                }
            }
            LineKind::Dc => {
                let ripple = config.ripple_pu * (2.0 * PI * config.ripple_hz * t).sin();
                let level = config.i_load * (1.0 + ripple);
                row[0] = level;
                row[1] = -level;
            }
        }
        for p in 0..pairs {
            row[pairs + p] = -row[p];
        }
    }
    SampleStream::new(layout, config.fs_hz, 0.0, samples)
}

/// Pre-fault load plus fault components from the inception instant onward,
/// clamped by the inverter current cap.
pub fn synth_fault(
    config: &WaveformConfig,
    layout: ChannelLayout,
    scenario: &FaultScenario,
    duration_s: f64,
) -> Result<SampleStream> {
    scenario.validate(layout)?;
    let mut stream = synth_prefault(config, layout, duration_s)?;
    let tf = scenario.inception_time(config, layout);
    if tf < config.prefault_margin_s - 1e-12 {
        return Err(Error::invalid(format!(
            "fault inception at {:.6} s leaves less than {:.6} s of pre-fault history",
            tf, config.prefault_margin_s
        )));
    }
    let end = stream.time(stream.len() - 1);
    if tf > end {
        return Err(Error::invalid(format!("fault inception at {tf} s is beyond the stream end {end} s")));
    }

    let (f1, f2) = scenario.terminal_amplitudes(config);
    let through = scenario.through_amplitude(config);
    let comps = scenario.fault_type.components();
    let w = 2.0 * PI * config.f0_hz;
    let psi = config.psi_deg.to_radians();
    let start = stream.index_at(tf);

    for k in start..stream.len() {
        let t = stream.time(k);
        let dt = t - tf;
        for &(pair, offset_deg, factor, sign) in &comps {
            let shape = match layout.kind() {
                LineKind::Ac => {
                    let gamma = PHASE_DEG[pair].to_radians() + offset_deg.to_radians() + psi;
                    sign * factor
                        * ((w * t + gamma).sin() - (w * tf + gamma).sin() * (-dt / config.tau_ac_s).exp())
                }
                LineKind::Dc => sign * factor * (1.0 - (-dt / config.tau_dc_s).exp()),
            };
            let local = layout.local(pair);
            let remote = layout.remote(pair);
            if scenario.internal {
                stream.set(k, local, stream.get(k, local) + f1 * shape);
                stream.set(k, remote, stream.get(k, remote) + f2 * shape);
            } else {
                let v = stream.get(k, local) + through * shape;
                stream.set(k, local, v);
                stream.set(k, remote, -v);
            }
        }
    }
    apply_limiter(&stream, config.i_lim())
}

/// Clamps every sample into `[-i_lim, i_lim]`.
pub fn apply_limiter(stream: &SampleStream, i_lim: f64) -> Result<SampleStream> {
    if !(i_lim > 0.0) || !i_lim.is_finite() {
        return Err(Error::invalid(format!("current limit {i_lim} must be positive")));
    }
    let mut out = stream.clone();
    for v in out.samples.iter_mut() {
        *v = v.clamp(-i_lim, i_lim);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self { snr_db: None, seed: 0 }
    }

    pub fn snr(snr_db: f64, seed: u64) -> Self {
        Self { snr_db: Some(snr_db), seed }
    }
}

/// Per-channel white Gaussian noise at the requested SNR, where signal power
/// is the channel's mean square over the stream.
pub fn add_noise(stream: &SampleStream, spec: &NoiseSpec) -> Result<SampleStream> {
    if stream.is_empty() {
        return Err(Error::invalid("cannot add noise to an empty stream"));
    }
    let Some(snr_db) = spec.snr_db else {
        return Ok(stream.clone());
    };
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr_db must be finite"));
    }
    let n = stream.len();
    let d = stream.channels();
    let mut out = stream.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ratio = 10f64.powf(snr_db / 10.0);
    for c in 0..d {
        let power = stream.channel(c).map(|v| v * v).sum::<f64>() / n as f64;
        let sigma = (power / ratio).sqrt();
        if sigma == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
        for k in 0..n {
            out.samples[k * d + c] += normal.sample(&mut rng);
        }
    }
    Ok(out)
}
