//! Scenario grids for one protected line and the generation pipeline that
//! turns them into relay-triggered labeled windows.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{extract_window, Dataset, LabeledExample, Label, WindowSpec};
use crate::attack::{
    apply_attack, minimal_perturbation, spec_with_magnitude, verify_attack, AttackFamily, AttackSpec, Direction,
    SearchBounds,
};
use crate::relay::{scan_for_trip, RelaySettings};
use crate::signal::{synth_fault, synth_prefault, ChannelLayout, FaultScenario, FaultType, LineKind, SampleStream, WaveformConfig};
use crate::{Error, Result};

/// A protected line: plant surrogate, relay settings, and stream timing.
#[derive(Debug, Clone, PartialEq)]
pub struct LineProfile {
    pub name: String,
    pub layout: ChannelLayout,
    pub waveform: WaveformConfig,
    pub relay: RelaySettings,
    pub duration_s: f64,
    /// Cycle-aligned reference for fault inception and attack onset.
    pub event_time_s: f64,
}

impl LineProfile {
    pub fn ac_line1(fs_hz: f64) -> Self {
        let waveform = WaveformConfig { fs_hz, ..WaveformConfig::ac_default() };
        Self {
            name: "ac1".into(),
            layout: ChannelLayout::AC,
            relay: RelaySettings::ac(waveform.i_nom, waveform.f0_hz),
            waveform,
            duration_s: 0.12,
            event_time_s: 0.05,
        }
    }

    /// A longer, weaker-fed AC line with a heavier load.
    pub fn ac_line2(fs_hz: f64) -> Self {
        let waveform = WaveformConfig {
            fs_hz,
            i_load: 0.4,
            z1: 0.4,
            z2: 0.2,
            z_line: 0.8,
            z_base: 40.0,
            ..WaveformConfig::ac_default()
        };
        Self {
            name: "ac2".into(),
            relay: RelaySettings::ac(waveform.i_nom, waveform.f0_hz),
            waveform,
            ..Self::ac_line1(fs_hz)
        }
    }

    pub fn dc_line1(fs_hz: f64) -> Self {
        let waveform = WaveformConfig { fs_hz, ..WaveformConfig::dc_default() };
        Self {
            name: "dc1".into(),
            layout: ChannelLayout::DC,
            relay: RelaySettings::dc(waveform.i_nom),
            waveform,
            duration_s: 0.04,
            event_time_s: 0.02,
        }
    }

    pub fn dc_line2(fs_hz: f64) -> Self {
        let waveform = WaveformConfig {
            fs_hz,
            i_load: 0.25,
            i_nom: 0.4,
            z1: 0.3,
            z2: 0.3,
            z_line: 0.6,
            ripple_pu: 0.01,
            ..WaveformConfig::dc_default()
        };
        Self { name: "dc2".into(), relay: RelaySettings::dc(waveform.i_nom), waveform, ..Self::dc_line1(fs_hz) }
    }

    pub fn builtin(name: &str, fs_hz: f64) -> Result<Self> {
        match name {
            "ac1" => Ok(Self::ac_line1(fs_hz)),
            "ac2" => Ok(Self::ac_line2(fs_hz)),
            "dc1" => Ok(Self::dc_line1(fs_hz)),
            "dc2" => Ok(Self::dc_line2(fs_hz)),
            _ => Err(Error::invalid(format!("unknown line profile `{name}` (ac1|ac2|dc1|dc2)"))),
        }
    }

    pub fn kind(&self) -> LineKind {
        self.layout.kind()
    }

    pub fn validate(&self) -> Result<()> {
        self.waveform.validate(self.layout)?;
        self.relay.validate()?;
        if self.relay.kind != self.kind() {
            return Err(Error::invalid("relay kind does not match the line layout"));
        }
        if !(self.event_time_s > 0.0 && self.event_time_s < self.duration_s) {
            return Err(Error::invalid("event time must fall inside the stream"));
        }
        Ok(())
    }

    /// Span over which attack onsets are drawn: one cycle (AC) or 2 ms (DC).
    fn onset_spread_s(&self) -> f64 {
        match self.kind() {
            LineKind::Ac => 1.0 / self.waveform.f0_hz,
            LineKind::Dc => 0.002,
        }
    }

    fn loaded(&self, level: f64) -> WaveformConfig {
        WaveformConfig { i_load: self.waveform.i_load * level, ..self.waveform.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGrid {
    pub profile: LineProfile,
    pub window: WindowSpec,
    pub fault_count: usize,
    pub attack_count: usize,
    pub fault_types: Vec<FaultType>,
    pub zf_ohm: Vec<f64>,
    pub locations: Vec<f64>,
    /// Ignored for DC lines.
    pub inception_deg: Vec<f64>,
    /// Load multipliers applied to the profile's nominal load.
    pub load_levels: Vec<f64>,
    pub attack_families: Vec<AttackFamily>,
    /// Share of attacks kept at their minimal tripping magnitude.
    pub minimal_fraction: f64,
    pub bounds: SearchBounds,
    pub seed: u64,
}

impl ScenarioGrid {
    /// Desk-scale defaults: 1000 + 1000 for AC, 600 + 600 for DC.
    pub fn default_for(profile: LineProfile, seed: u64) -> Self {
        let kind = profile.kind();
        let window = WindowSpec::default_for(kind, profile.waveform.fs_hz);
        let locations = (1..=9).map(|i| i as f64 / 10.0).collect();
        let bounds = SearchBounds::new(profile.waveform.i_nom, profile.waveform.f0_hz);
        match kind {
            LineKind::Ac => Self {
                window,
                fault_count: 1000,
                attack_count: 1000,
                fault_types: FaultType::AC.to_vec(),
                zf_ohm: vec![0.0, 10.0, 50.0, 100.0, 200.0],
                locations,
                inception_deg: vec![0.0, 45.0, 90.0, 135.0, 180.0],
                load_levels: vec![0.6, 0.8, 1.0, 1.2],
                attack_families: vec![AttackFamily::Scale, AttackFamily::Additive, AttackFamily::TimeShift],
                minimal_fraction: 0.3,
                bounds,
                seed,
                profile,
            },
            LineKind::Dc => Self {
                window,
                fault_count: 600,
                attack_count: 600,
                fault_types: FaultType::DC.to_vec(),
                zf_ohm: (0..=8).map(|i| i as f64 * 25.0).collect(),
                locations,
                inception_deg: vec![0.0],
                load_levels: vec![0.6, 0.8, 1.0],
                attack_families: vec![AttackFamily::Scale, AttackFamily::Additive],
                minimal_fraction: 0.3,
                bounds,
                seed,
                profile,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.window.validate()?;
        let dims: [(&str, usize); 5] = [
            ("fault_types", self.fault_types.len()),
            ("zf_ohm", self.zf_ohm.len()),
            ("locations", self.locations.len()),
            ("inception_deg", self.inception_deg.len()),
            ("load_levels", self.load_levels.len()),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, n)| *n == 0) {
            return Err(Error::invalid(format!("grid dimension `{name}` is empty")));
        }
        if self.attack_count > 0 && self.attack_families.is_empty() {
            return Err(Error::invalid("grid dimension `attack_families` is empty"));
        }
        if let Some(ft) = self.fault_types.iter().find(|t| t.kind() != self.profile.kind()) {
            return Err(Error::invalid(format!("fault type {ft} does not fit a {} line", self.profile.kind())));
        }
        if !(0.0..=1.0).contains(&self.minimal_fraction) {
            return Err(Error::invalid("minimal_fraction must lie in [0, 1]"));
        }
        let cap = self.profile.waveform.i_lim();
        if self.load_levels.iter().any(|l| !(*l > 0.0) || self.profile.waveform.i_load * l > cap) {
            return Err(Error::invalid("load levels must be positive and keep the load under the current cap"));
        }
        Ok(())
    }

    fn inception_points(&self) -> &[f64] {
        match self.profile.kind() {
            LineKind::Ac => &self.inception_deg,
            LineKind::Dc => &[0.0],
        }
    }

    /// Size of the full fault Cartesian grid.
    pub fn fault_grid_size(&self) -> usize {
        self.fault_types.len()
            * self.locations.len()
            * self.zf_ohm.len()
            * self.inception_points().len()
            * self.load_levels.len()
    }
}

/// Attack recipe resolved against the relay when the example is built.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan {
    pub family: AttackFamily,
    pub direction: Direction,
    pub pairs: Vec<usize>,
    pub onset_s: f64,
    /// `None` keeps the minimal tripping magnitude; `Some(u)` places the
    /// magnitude at fraction `u` between the minimum and the search bound.
    pub draw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioKind {
    Fault(FaultScenario),
    Attack(AttackPlan),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDescriptor {
    pub index: usize,
    pub id: String,
    pub seed: u64,
    pub load_level: f64,
    pub kind: ScenarioKind,
}

impl ScenarioDescriptor {
    pub fn label(&self) -> Label {
        match self.kind {
            ScenarioKind::Fault(_) => Label::Fault,
            ScenarioKind::Attack(_) => Label::Fdia,
        }
    }

    pub fn kind_name(&self) -> String {
        match &self.kind {
            ScenarioKind::Fault(f) => format!("fault:{}", f.fault_type),
            ScenarioKind::Attack(a) => format!("fdia:{}", a.family),
        }
    }
}

fn sub_seed(master: u64, stream: u64, index: usize) -> u64 {
    // SplitMix64 finalizer over (master, stream, index).
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add((index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const FAULT_STREAM: u64 = 1;
const ATTACK_STREAM: u64 = 2;

/// Fault grid (every Cartesian point, in a seeded order) followed by the
/// first `attack_count` attack descriptors.
pub fn enumerate_scenarios(grid: &ScenarioGrid) -> Result<Vec<ScenarioDescriptor>> {
    grid.validate()?;
    let mut points = Vec::with_capacity(grid.fault_grid_size());
    for &ft in &grid.fault_types {
        for &loc in &grid.locations {
            for &zf in &grid.zf_ohm {
                for &theta in grid.inception_points() {
                    for &load in &grid.load_levels {
                        points.push((ft, loc, zf, theta, load));
                    }
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(grid.seed, FAULT_STREAM, usize::MAX));
    points.shuffle(&mut rng);
    let name = &grid.profile.name;
    let mut out: Vec<ScenarioDescriptor> = points
        .into_iter()
        .enumerate()
        .map(|(i, (fault_type, location, zf_ohm, inception_deg, load_level))| ScenarioDescriptor {
            index: i,
            id: format!("{name}/f{i:05}"),
            seed: sub_seed(grid.seed, FAULT_STREAM, i),
            load_level,
            kind: ScenarioKind::Fault(FaultScenario {
                fault_type,
                zf_ohm,
                location,
                inception_deg,
                t_fault_s: grid.profile.event_time_s,
                internal: true,
            }),
        })
        .collect();
    out.extend((0..grid.attack_count).map(|i| attack_descriptor(grid, i)));
    Ok(out)
}

/// The `i`-th attack descriptor of the grid's deterministic attack sequence.
pub fn attack_descriptor(grid: &ScenarioGrid, index: usize) -> ScenarioDescriptor {
    let seed = sub_seed(grid.seed, ATTACK_STREAM, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family = grid.attack_families[rng.random_range(0..grid.attack_families.len())];
    let npairs = grid.profile.layout.pairs();
    let count = rng.random_range(1..=npairs);
    let mut pairs: Vec<usize> = (0..npairs).collect();
    pairs.shuffle(&mut rng);
    pairs.truncate(count);
    pairs.sort_unstable();
    let direction = match family {
        AttackFamily::TimeShift => Direction::Increase,
        _ if rng.random_bool(0.5) => Direction::Decrease,
        _ => Direction::Increase,
    };
    let onset_s = grid.profile.event_time_s + rng.random::<f64>() * grid.profile.onset_spread_s();
    let load_level = grid.load_levels[rng.random_range(0..grid.load_levels.len())];
    let draw = if rng.random::<f64>() < grid.minimal_fraction { None } else { Some(rng.random::<f64>()) };
    ScenarioDescriptor {
        index,
        id: format!("{}/a{index:05}", grid.profile.name),
        seed,
        load_level,
        kind: ScenarioKind::Attack(AttackPlan { family, direction, pairs, onset_s, draw }),
    }
}

fn reject(desc: &ScenarioDescriptor, reason: impl Into<String>) -> Error {
    Error::RejectedScenario { id: desc.id.clone(), reason: reason.into() }
}

/// Synthesizes the descriptor's stream. Attacks are resolved into concrete
/// specs; scenarios that cannot trip the relay come back as rejections.
pub fn build_stream(
    grid: &ScenarioGrid,
    desc: &ScenarioDescriptor,
) -> Result<(SampleStream, Option<AttackSpec>)> {
    let profile = &grid.profile;
    let config = profile.loaded(desc.load_level);
    match &desc.kind {
        ScenarioKind::Fault(scenario) => {
            let stream = synth_fault(&config, profile.layout, scenario, profile.duration_s)?;
            Ok((stream, None))
        }
        ScenarioKind::Attack(plan) => {
            let base = synth_prefault(&config, profile.layout, profile.duration_s)?;
            let minimal = match minimal_perturbation(
                &base,
                &profile.relay,
                plan.family,
                plan.direction,
                plan.onset_s,
                &plan.pairs,
                &grid.bounds,
            ) {
                Ok(u) => u,
                Err(Error::NoSolution(msg)) => return Err(reject(desc, msg)),
                Err(e) => return Err(e),
            };
            let magnitude = match plan.draw {
                None => minimal,
                Some(u) => {
                    let top = match plan.family {
                        AttackFamily::TimeShift => grid.bounds.shift_max_s - minimal,
                        f => grid.bounds.max_magnitude(f, plan.direction),
                    };
                    minimal + u * (top - minimal).max(0.0)
                }
            };
            let mut spec = spec_with_magnitude(plan.family, plan.direction, magnitude, plan.onset_s, plan.pairs.clone());
            spec.minimal = plan.draw.is_none();
            match verify_attack(&base, &spec, &profile.relay) {
                Ok(_) => {}
                Err(Error::AttackIneffective) => return Err(reject(desc, "sampled attack does not trip")),
                Err(e) => return Err(e),
            }
            Ok((apply_attack(&base, &spec)?, Some(spec)))
        }
    }
}

fn describe_params(desc: &ScenarioDescriptor, spec: Option<&AttackSpec>) -> String {
    let mut s = format!("load={}", desc.load_level);
    match &desc.kind {
        ScenarioKind::Fault(f) => {
            s += &format!(";zf_ohm={};loc={};theta_deg={}", f.zf_ohm, f.location, f.inception_deg);
        }
        ScenarioKind::Attack(_) => {
            if let Some(spec) = spec {
                s += &format!(";{}", spec.describe().replace(' ', ";"));
            }
        }
    }
    s
}

/// Runs synthesis, relay, and window extraction for one scenario.
pub fn build_example(grid: &ScenarioGrid, desc: &ScenarioDescriptor) -> Result<LabeledExample> {
    let (stream, spec) = build_stream(grid, desc)?;
    let trip = scan_for_trip(&stream, &grid.profile.relay)?.ok_or_else(|| reject(desc, "relay did not pick up"))?;
    let window = extract_window(&stream, trip.index, &grid.window)?;
    Ok(LabeledExample {
        window,
        label: desc.label(),
        scenario_id: desc.id.clone(),
        scenario_kind: desc.kind_name(),
        params: describe_params(desc, spec.as_ref()),
    })
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub dataset: Dataset,
    /// Accepted descriptors in dataset order.
    pub accepted: Vec<ScenarioDescriptor>,
    pub rejected: Vec<(String, String)>,
}

const CHUNK: usize = 64;

/// Walks `candidates` in order, building chunks in parallel, until `want`
/// examples are accepted. Output order is the candidate order.
fn collect_accepted<I>(
    grid: &ScenarioGrid,
    candidates: I,
    want: usize,
    out: &mut Generation,
) -> Result<usize>
where
    I: Iterator<Item = ScenarioDescriptor>,
{
    let mut got = 0;
    let mut candidates = candidates.peekable();
    while got < want && candidates.peek().is_some() {
        let chunk: Vec<ScenarioDescriptor> = candidates.by_ref().take(CHUNK).collect();
        let built: Vec<Result<LabeledExample>> = chunk.par_iter().map(|d| build_example(grid, d)).collect();
        for (desc, res) in chunk.into_iter().zip(built) {
            if got == want {
                break;
            }
            match res {
                Ok(ex) => {
                    out.dataset.push(ex)?;
                    out.accepted.push(desc);
                    got += 1;
                }
                Err(Error::RejectedScenario { id, reason }) => out.rejected.push((id, reason)),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(got)
}

/// Builds the balanced labeled dataset for a grid. Deterministic for a given
/// grid regardless of the rayon thread count.
pub fn generate(grid: &ScenarioGrid) -> Result<Generation> {
    let scenarios = enumerate_scenarios(grid)?;
    let mut out = Generation {
        dataset: Dataset::new(grid.profile.kind(), grid.window, grid.seed),
        accepted: Vec::new(),
        rejected: Vec::new(),
    };
    let faults = scenarios.into_iter().filter(|d| matches!(d.kind, ScenarioKind::Fault(_)));
    let got = collect_accepted(grid, faults, grid.fault_count, &mut out)?;
    if got < grid.fault_count {
        return Err(Error::invalid(format!(
            "fault grid of {} points yields only {got} relay-triggering faults; {} requested",
            grid.fault_grid_size(),
            grid.fault_count
        )));
    }
    let max_attempts = grid.attack_count.saturating_mul(4).max(16);
    let attacks = (0..max_attempts).map(|i| attack_descriptor(grid, i));
    let got = collect_accepted(grid, attacks, grid.attack_count, &mut out)?;
    if got < grid.attack_count {
        return Err(Error::invalid(format!(
            "only {got} of {} attacks tripped the relay within {max_attempts} attempts",
            grid.attack_count
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relay::scan_for_trip;

    fn small(profile: LineProfile, faults: usize, attacks: usize) -> ScenarioGrid {
        ScenarioGrid { fault_count: faults, attack_count: attacks, ..ScenarioGrid::default_for(profile, 11) }
    }

    #[test]
    fn ac_grid_covers_the_cartesian_product() {
        let grid = ScenarioGrid::default_for(LineProfile::ac_line1(4000.0), 1);
        let list = enumerate_scenarios(&grid).unwrap();
        let faults = list.iter().filter(|d| d.label() == Label::Fault).count();
        assert_eq!(faults, 11 * 9 * 5 * 5 * 4);
        assert_eq!(list.len() - faults, 1000);
        assert_eq!(enumerate_scenarios(&grid).unwrap(), list);
    }

    #[test]
    fn dc_grid_ignores_inception_angles() {
        let grid = ScenarioGrid::default_for(LineProfile::dc_line1(4000.0), 1);
        assert_eq!(grid.fault_grid_size(), 3 * 9 * 9 * 3);
        assert!(grid.fault_grid_size() >= grid.fault_count);
    }

    #[test]
    fn empty_dimension_is_rejected() {
        let mut grid = ScenarioGrid::default_for(LineProfile::dc_line1(4000.0), 1);
        grid.zf_ohm.clear();
        assert!(enumerate_scenarios(&grid).is_err());
    }

    #[test]
    fn bolted_fault_example_is_centered_on_the_trigger() {
        let grid = small(LineProfile::ac_line1(4000.0), 1, 0);
        let desc = ScenarioDescriptor {
            index: 0,
            id: "ac1/f0".into(),
            seed: 0,
            load_level: 1.0,
            kind: ScenarioKind::Fault(FaultScenario {
                fault_type: FaultType::AG,
                zf_ohm: 0.0,
                location: 0.3,
                inception_deg: 0.0,
                t_fault_s: 0.05,
                internal: true,
            }),
        };
        let ex = build_example(&grid, &desc).unwrap();
        assert_eq!(ex.label, Label::Fault);
        assert_eq!((ex.window.steps(), ex.window.channels()), (40, 6));
        let (stream, _) = build_stream(&grid, &desc).unwrap();
        let trip = scan_for_trip(&stream, &grid.profile.relay).unwrap().unwrap();
        let centre = grid.window.trigger_offset();
        for c in 0..6 {
            assert_eq!(ex.window.get(centre, c), stream.get(trip.index, c) as f32);
        }
    }

    #[test]
    fn attack_examples_keep_local_channels_clean() {
        let grid = small(LineProfile::ac_line1(4000.0), 0, 1);
        let desc = ScenarioDescriptor {
            index: 0,
            id: "ac1/a0".into(),
            seed: 0,
            load_level: 1.0,
            kind: ScenarioKind::Attack(AttackPlan {
                family: AttackFamily::Scale,
                direction: Direction::Decrease,
                pairs: vec![0],
                onset_s: 0.05,
                draw: None,
            }),
        };
        let (stream, spec) = build_stream(&grid, &desc).unwrap();
        assert!(spec.unwrap().minimal);
        let ex = build_example(&grid, &desc).unwrap();
        assert_eq!(ex.label, Label::Fdia);
        let clean = synth_prefault(&grid.profile.waveform, grid.profile.layout, grid.profile.duration_s).unwrap();
        let trip = scan_for_trip(&stream, &grid.profile.relay).unwrap().unwrap();
        let (start, _) = grid.window.bounds(trip.index);
        for t in 0..ex.window.steps() {
            for c in 0..3 {
                assert_eq!(ex.window.get(t, c), clean.get(start as usize + t, c) as f32);
            }
        }
    }

    #[test]
    fn non_triggering_fault_is_rejected() {
        let mut profile = LineProfile::ac_line1(4000.0);
        profile.waveform.z_base = 1.0;
        let grid = small(profile, 1, 0);
        let desc = ScenarioDescriptor {
            index: 0,
            id: "ac1/f0".into(),
            seed: 0,
            load_level: 1.0,
            kind: ScenarioKind::Fault(FaultScenario {
                fault_type: FaultType::AG,
                zf_ohm: 200.0,
                location: 0.9,
                inception_deg: 0.0,
                t_fault_s: 0.05,
                internal: true,
            }),
        };
        assert!(matches!(build_example(&grid, &desc), Err(Error::RejectedScenario { .. })));
    }

    #[test]
    fn generation_is_deterministic_and_balanced() {
        let grid = small(LineProfile::dc_line1(4000.0), 30, 30);
        let a = generate(&grid).unwrap();
        let b = generate(&grid).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.dataset.count(Label::Fault), 30);
        assert_eq!(a.dataset.count(Label::Fdia), 30);
        let other = generate(&ScenarioGrid { seed: 12, ..grid }).unwrap();
        assert_ne!(a.dataset, other.dataset);
    }
}
