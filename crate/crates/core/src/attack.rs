//! False-data-injection and time-synchronization attacks on the remote
//! measurement stream.
//!
//! Only remote channels are ever modified; local measurements arrive over
//! copper from the relay's own current transformers.

use std::fmt;
use std::str::FromStr;

use crate::relay::{scan_for_trip, scan_from, RelaySettings, TripEvent};
use crate::signal::SampleStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackStrategy {
    /// `I2m = alpha * I2`.
    Scale { alpha: f64 },
    /// `I2m = I2 + delta` (kA).
    Additive { delta: f64 },
    /// `I2m(t) = I2(t - shift)`: a time-synchronization attack.
    TimeShift { shift_s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackFamily {
    Scale,
    Additive,
    TimeShift,
}

impl AttackFamily {
    pub fn name(&self) -> &'static str {
        match self {
            AttackFamily::Scale => "scale",
            AttackFamily::Additive => "add",
            AttackFamily::TimeShift => "tsa",
        }
    }
}

impl fmt::Display for AttackFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scale" => Ok(AttackFamily::Scale),
            "add" | "additive" => Ok(AttackFamily::Additive),
            "tsa" | "shift" | "timeshift" => Ok(AttackFamily::TimeShift),
            other => Err(Error::invalid(format!("unknown attack strategy `{other}` (scale|add|tsa)"))),
        }
    }
}

/// Sign of the perturbation relative to the identity attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Decrease,
    Increase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub strategy: AttackStrategy,
    pub onset_s: f64,
    /// Targeted phase/pole pairs; the remote channel of each is manipulated.
    pub pairs: Vec<usize>,
    /// Set when the magnitude came out of the minimal-perturbation solver.
    pub minimal: bool,
}

impl AttackSpec {
    pub fn new(strategy: AttackStrategy, onset_s: f64, pairs: Vec<usize>) -> Self {
        Self { strategy, onset_s, pairs, minimal: false }
    }

    pub fn family(&self) -> AttackFamily {
        match self.strategy {
            AttackStrategy::Scale { .. } => AttackFamily::Scale,
            AttackStrategy::Additive { .. } => AttackFamily::Additive,
            AttackStrategy::TimeShift { .. } => AttackFamily::TimeShift,
        }
    }

    /// Distance from the identity attack: `|alpha - 1|`, `|delta|` or `|shift|`.
    pub fn perturbation(&self) -> f64 {
        match self.strategy {
            AttackStrategy::Scale { alpha } => (alpha - 1.0).abs(),
            AttackStrategy::Additive { delta } => delta.abs(),
            AttackStrategy::TimeShift { shift_s } => shift_s.abs(),
        }
    }

    /// Same attack with its perturbation multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let strategy = match self.strategy {
            AttackStrategy::Scale { alpha } => AttackStrategy::Scale { alpha: 1.0 + (alpha - 1.0) * factor },
            AttackStrategy::Additive { delta } => AttackStrategy::Additive { delta: delta * factor },
            AttackStrategy::TimeShift { shift_s } => AttackStrategy::TimeShift { shift_s: shift_s * factor },
        };
        Self { strategy, minimal: false, ..self.clone() }
    }

    pub fn describe(&self) -> String {
        let body = match self.strategy {
            AttackStrategy::Scale { alpha } => format!("scale alpha={alpha:.6}"),
            AttackStrategy::Additive { delta } => format!("add delta={delta:.6}kA"),
            AttackStrategy::TimeShift { shift_s } => format!("tsa shift={:.6}ms", shift_s * 1e3),
        };
        let pairs: Vec<String> = self.pairs.iter().map(|p| p.to_string()).collect();
        format!(
            "{body} onset={:.6}s pairs={}{}",
            self.onset_s,
            pairs.join("+"),
            if self.minimal { " minimal" } else { "" }
        )
    }
}

fn strategy_for(family: AttackFamily, direction: Direction, magnitude: f64) -> AttackStrategy {
    let signed = match direction {
        Direction::Decrease => -magnitude,
        Direction::Increase => magnitude,
    };
    match family {
        AttackFamily::Scale => AttackStrategy::Scale { alpha: 1.0 + signed },
        AttackFamily::Additive => AttackStrategy::Additive { delta: signed },
        AttackFamily::TimeShift => AttackStrategy::TimeShift { shift_s: magnitude },
    }
}

fn check_pairs(stream: &SampleStream, pairs: &[usize]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::invalid("an attack must target at least one pair"));
    }
    for (i, &p) in pairs.iter().enumerate() {
        if p >= stream.layout.pairs() {
            return Err(Error::invalid(format!(
                "pair {p} out of range for a {} line",
                stream.layout.kind()
            )));
        }
        if pairs[..i].contains(&p) {
            return Err(Error::invalid(format!("pair {p} targeted twice")));
        }
    }
    Ok(())
}

/// Replaces the targeted remote channels by their manipulated version from
/// the onset sample onward.
pub fn apply_attack(stream: &SampleStream, spec: &AttackSpec) -> Result<SampleStream> {
    check_pairs(stream, &spec.pairs)?;
    if stream.is_empty() {
        return Err(Error::invalid("cannot attack an empty stream"));
    }
    let end = stream.time(stream.len() - 1);
    if !spec.onset_s.is_finite() || spec.onset_s < stream.t0_s || spec.onset_s > end {
        return Err(Error::invalid(format!(
            "attack onset {} s outside stream [{}, {}] s",
            spec.onset_s, stream.t0_s, end
        )));
    }
    let onset = stream.index_at(spec.onset_s);
    let mut out = stream.clone();
    for &pair in &spec.pairs {
        let ch = stream.layout.remote(pair);
        match spec.strategy {
            AttackStrategy::Scale { alpha } => {
                if !alpha.is_finite() {
                    return Err(Error::invalid("alpha must be finite"));
                }
                for k in onset..stream.len() {
                    out.set(k, ch, alpha * stream.get(k, ch));
                }
            }
            AttackStrategy::Additive { delta } => {
                if !delta.is_finite() {
                    return Err(Error::invalid("delta must be finite"));
                }
                for k in onset..stream.len() {
                    out.set(k, ch, stream.get(k, ch) + delta);
                }
            }
            AttackStrategy::TimeShift { shift_s } => {
                if !(shift_s >= 0.0) || !shift_s.is_finite() {
                    return Err(Error::invalid("time shift must be finite and non-negative"));
                }
                let shift = shift_s * stream.fs_hz;
                if shift > onset as f64 + 1e-9 {
                    return Err(Error::invalid(format!(
                        "time shift of {:.3} samples exceeds the {onset} samples of history before onset",
                        shift
                    )));
                }
                for k in onset..stream.len() {
                    let x = (k as f64 - shift).max(0.0);
                    let i = x.floor() as usize;
                    let frac = x - i as f64;
                    let v = if frac == 0.0 || i + 1 >= stream.len() {
                        stream.get(i, ch)
                    } else {
                        stream.get(i, ch) * (1.0 - frac) + stream.get(i + 1, ch) * frac
                    };
                    out.set(k, ch, v);
                }
            }
        }
    }
    Ok(out)
}

/// Attacker search space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBounds {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub delta_max: f64,
    pub shift_max_s: f64,
}

impl SearchBounds {
    /// `alpha` in [-10, 10], `|delta|` up to 10 `i_nom`, shifts up to one period.
    pub fn new(i_nom: f64, f0_hz: f64) -> Self {
        Self { alpha_min: -10.0, alpha_max: 10.0, delta_max: 10.0 * i_nom, shift_max_s: 1.0 / f0_hz }
    }

    /// Largest perturbation magnitude in a direction.
    pub fn max_magnitude(&self, family: AttackFamily, direction: Direction) -> f64 {
        match (family, direction) {
            (AttackFamily::Scale, Direction::Decrease) => 1.0 - self.alpha_min,
            (AttackFamily::Scale, Direction::Increase) => self.alpha_max - 1.0,
            (AttackFamily::Additive, _) => self.delta_max,
            (AttackFamily::TimeShift, _) => self.shift_max_s,
        }
    }

    /// Upper end of the bracket searched by bisection. A shift's differential
    /// grows monotonically only up to half a period.
    fn bracket(&self, family: AttackFamily, direction: Direction) -> f64 {
        match family {
            AttackFamily::TimeShift => self.shift_max_s / 2.0,
            _ => self.max_magnitude(family, direction),
        }
    }
}

/// Relative bracket width at which bisection stops.
pub const BISECTION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct AttackRequest {
    pub family: AttackFamily,
    pub onset_s: f64,
    pub pairs: Vec<usize>,
    /// `None` searches both directions and keeps the smaller perturbation.
    pub direction: Option<Direction>,
}

fn trips_with(
    stream: &SampleStream,
    settings: &RelaySettings,
    spec: &AttackSpec,
    from: usize,
) -> Result<Option<TripEvent>> {
    let attacked = apply_attack(stream, spec)?;
    scan_from(&attacked, settings, from)
}

/// Smallest perturbation magnitude in one direction that trips the relay,
/// bracketed by bisection to [`BISECTION_TOLERANCE`]. The returned value
/// trips; the bracket's lower end does not.
pub fn minimal_perturbation(
    stream: &SampleStream,
    settings: &RelaySettings,
    family: AttackFamily,
    direction: Direction,
    onset_s: f64,
    pairs: &[usize],
    bounds: &SearchBounds,
) -> Result<f64> {
    let onset = stream.index_at(onset_s);
    let spec_at = |u: f64| AttackSpec::new(strategy_for(family, direction, u), onset_s, pairs.to_vec());
    let mut hi = bounds.bracket(family, direction);
    if family == AttackFamily::TimeShift {
        hi = hi.min(onset as f64 / stream.fs_hz);
    }
    if !(hi > 0.0) || trips_with(stream, settings, &spec_at(hi), onset)?.is_none() {
        return Err(Error::NoSolution(format!(
            "{family} attack ({direction:?}) on pairs {pairs:?} does not trip at the search bound"
        )));
    }
    let mut lo = 0.0;
    while hi - lo > BISECTION_TOLERANCE * hi {
        let mid = 0.5 * (lo + hi);
        if trips_with(stream, settings, &spec_at(mid), onset)?.is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Minimal-perturbation attack in the requested family that trips a relay
/// which is healthy on `prefault`. The result is re-verified against the relay.
pub fn craft_tripping_attack(
    prefault: &SampleStream,
    settings: &RelaySettings,
    request: &AttackRequest,
    bounds: &SearchBounds,
) -> Result<AttackSpec> {
    check_pairs(prefault, &request.pairs)?;
    if scan_for_trip(prefault, settings)?.is_some() {
        return Err(Error::Precondition("input stream already trips the relay".into()));
    }
    let directions: &[Direction] = match (request.family, request.direction) {
        (AttackFamily::TimeShift, _) => &[Direction::Increase],
        (_, Some(Direction::Decrease)) => &[Direction::Decrease],
        (_, Some(Direction::Increase)) => &[Direction::Increase],
        (_, None) => &[Direction::Increase, Direction::Decrease],
    };
    let mut best: Option<(f64, Direction)> = None;
    let mut last_err = None;
    for &dir in directions {
        match minimal_perturbation(prefault, settings, request.family, dir, request.onset_s, &request.pairs, bounds) {
            Ok(u) => {
                if best.is_none_or(|(b, _)| u < b) {
                    best = Some((u, dir));
                }
            }
            Err(e @ Error::NoSolution(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    let Some((u, dir)) = best else {
        return Err(last_err.unwrap_or_else(|| Error::NoSolution("no direction searched".into())));
    };
    let mut spec = AttackSpec::new(strategy_for(request.family, dir, u), request.onset_s, request.pairs.clone());
    spec.minimal = true;
    verify_attack(prefault, &spec, settings)?;
    Ok(spec)
}

/// Applies the attack and returns the trip it causes.
pub fn verify_attack(stream: &SampleStream, spec: &AttackSpec, settings: &RelaySettings) -> Result<TripEvent> {
    let attacked = apply_attack(stream, spec)?;
    scan_for_trip(&attacked, settings)?.ok_or(Error::AttackIneffective)
}

/// Builds a spec with a given signed direction and magnitude.
pub fn spec_with_magnitude(
    family: AttackFamily,
    direction: Direction,
    magnitude: f64,
    onset_s: f64,
    pairs: Vec<usize>,
) -> AttackSpec {
    AttackSpec::new(strategy_for(family, direction, magnitude), onset_s, pairs)
}
