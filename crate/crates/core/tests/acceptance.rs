//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails. Pass criterion numbers as arguments
//! to run a subset, e.g. `cargo test -p mivs-core --test acceptance -- 1 4`.

use std::process::ExitCode;
use std::time::Instant;

use mivs_core::attack::{
    apply_attack, craft_tripping_attack, AttackFamily, AttackRequest, AttackSpec, SearchBounds,
};
use mivs_core::dataset::{
    encode_dataset, generate, pool_datasets, split_dataset, Dataset, DatasetSplit, LineProfile, ScenarioGrid,
    WindowSpec,
};
use mivs_core::mivs::{bench_latency, evaluate, evaluate_with_noise, MetricsReport};
use mivs_core::nn::{
    backward_bptt, batch_loss, encode_model, examples_from, fit, Example, ModelDims, Readout, RnnModel, TrainConfig,
    TARGET_PARAM_COUNT,
};
use mivs_core::relay::{operating_current, scan_for_trip, RelaySettings};
use mivs_core::signal::{synth_prefault, LineKind, NoiseSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 42;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Trained {
    train_bytes: Vec<u8>,
    test_bytes: Vec<u8>,
    model_bytes: Vec<u8>,
    report: MetricsReport,
    model: RnnModel,
    test: Dataset,
}

fn train_config() -> TrainConfig {
    TrainConfig { seed: SEED, ..TrainConfig::default() }
}

/// gen + 80/20 split + training with a 10% validation carve-out + eval.
fn pipeline(datasets: &[Dataset], i_nom: f64) -> Trained {
    let cfg = train_config();
    let mut trains = Vec::new();
    let mut tests = Vec::new();
    for ds in datasets {
        let split = split_dataset(ds, &DatasetSplit { val_fraction: Some(cfg.val_fraction), ..DatasetSplit::new(SEED) })
            .expect("split");
        trains.push((split.train, split.val.expect("val")));
        tests.push(split.test);
    }
    let train = pool_datasets(&trains.iter().map(|(t, _)| t.clone()).collect::<Vec<_>>()).unwrap();
    let val = pool_datasets(&trains.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>()).unwrap();
    let test = pool_datasets(&tests).unwrap();
    let dims = ModelDims::for_window(train.steps, train.channels);
    let init = RnnModel::init(dims, train.kind, i_nom, SEED).unwrap();
    let out = fit(init, &examples_from(&train, i_nom), &examples_from(&val, i_nom), &cfg).expect("training");
    let report = evaluate(&out.model, &test).unwrap();
    Trained {
        train_bytes: encode_dataset(&train).unwrap(),
        test_bytes: encode_dataset(&test).unwrap(),
        model_bytes: encode_model(&out.model),
        report,
        model: out.model,
        test,
    }
}

fn generated(profile: LineProfile) -> Dataset {
    let grid = ScenarioGrid::default_for(profile, SEED);
    generate(&grid).expect("generation").dataset
}

struct Cache {
    ac: Option<Trained>,
    dc: Option<Trained>,
}

impl Cache {
    fn ac(&mut self) -> &Trained {
        self.ac.get_or_insert_with(|| {
            let p = LineProfile::ac_line1(4000.0);
            let i_nom = p.waveform.i_nom;
            pipeline(&[generated(p)], i_nom)
        })
    }

    fn dc(&mut self) -> &Trained {
        self.dc.get_or_insert_with(|| {
            let p = LineProfile::dc_line1(4000.0);
            let i_nom = p.waveform.i_nom;
            pipeline(&[generated(p)], i_nom)
        })
    }
}

fn relay_exactness() -> Outcome {
    let s = RelaySettings::ac(0.5, 60.0);
    let points = [(0.0, 0.05), (0.585, 0.167), (1.0, 0.333)];
    let mut worst: f64 = 0.0;
    for (i_r, want) in points {
        let got = operating_current(i_r, &s).unwrap();
        worst = worst.max((got - want).abs() / want);
    }
    let lower = s.i_d + s.m1 * s.i_b;
    let upper = s.i_d + s.m1 * s.i_b + s.m2 * (s.i_b - s.i_b);
    let at_b = operating_current(s.i_b, &s).unwrap();
    let pass = worst <= 4.0 * f64::EPSILON && lower == upper && at_b == lower;
    outcome(pass, format!("max relative error {worst:.1e}, branches at i_b: {lower} / {upper}"))
}

fn random_request(rng: &mut ChaCha8Rng, profile: &LineProfile, families: &[AttackFamily]) -> AttackRequest {
    let pairs_n = profile.layout.pairs();
    let mut pairs: Vec<usize> = (0..pairs_n).filter(|_| rng.random_bool(0.5)).collect();
    if pairs.is_empty() {
        pairs.push(rng.random_range(0..pairs_n));
    }
    AttackRequest {
        family: families[rng.random_range(0..families.len())],
        onset_s: profile.event_time_s + rng.random::<f64>() * 0.01,
        pairs,
        direction: None,
    }
}

/// Crafts attacks on randomly loaded healthy streams; yields specs with their base streams.
fn crafted(
    profile: &LineProfile,
    families: &[AttackFamily],
    want: usize,
    seed: u64,
) -> (Vec<(mivs_core::signal::SampleStream, AttackSpec)>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = SearchBounds::new(profile.waveform.i_nom, profile.waveform.f0_hz);
    let mut out = Vec::new();
    let mut unsolved = 0;
    while out.len() < want {
        let mut cfg = profile.waveform.clone();
        cfg.i_load *= rng.random_range(0.6..1.2);
        let base = synth_prefault(&cfg, profile.layout, profile.duration_s).unwrap();
        let req = random_request(&mut rng, profile, families);
        match craft_tripping_attack(&base, &profile.relay, &req, &bounds) {
            Ok(spec) => out.push((base, spec)),
            Err(mivs_core::Error::NoSolution(_)) => unsolved += 1,
            Err(e) => panic!("craft failed: {e}"),
        }
    }
    (out, unsolved)
}

fn baseline_vulnerability() -> Outcome {
    let ac = LineProfile::ac_line1(4000.0);
    let dc = LineProfile::dc_line1(4000.0);
    let all = [AttackFamily::Scale, AttackFamily::Additive, AttackFamily::TimeShift];
    let mut lines = Vec::new();
    let mut pass = true;
    for (profile, families, n) in [(&ac, &all[..], 500), (&dc, &all[..2], 300)] {
        let (attacks, unsolved) = crafted(profile, families, n, SEED);
        let tripped = attacks
            .iter()
            .filter(|(base, spec)| scan_for_trip(&apply_attack(base, spec).unwrap(), &profile.relay).unwrap().is_some())
            .count();
        pass &= tripped == attacks.len() && attacks.len() >= n;
        lines.push(format!("{}: {tripped}/{} tripped ({unsolved} requests unsolvable)", profile.name, attacks.len()));
    }
    outcome(pass, lines.join("; "))
}

fn attack_minimality() -> Outcome {
    let ac = LineProfile::ac_line1(4000.0);
    let dc = LineProfile::dc_line1(4000.0);
    let mut lines = Vec::new();
    let mut pass = true;
    for family in [AttackFamily::Scale, AttackFamily::Additive, AttackFamily::TimeShift] {
        let mut cases = Vec::new();
        let (a, _) = crafted(&ac, &[family], 50, SEED + 1);
        cases.extend(a.into_iter().map(|c| (c, &ac)));
        if family != AttackFamily::TimeShift {
            let (d, _) = crafted(&dc, &[family], 25, SEED + 2);
            cases.extend(d.into_iter().map(|c| (c, &dc)));
        }
        let mut ok = 0;
        for ((base, spec), profile) in &cases {
            let trips = |s: &AttackSpec| scan_for_trip(&apply_attack(base, s).unwrap(), &profile.relay).unwrap().is_some();
            if spec.minimal && trips(spec) && !trips(&spec.scaled(0.99)) {
                ok += 1;
            }
        }
        pass &= ok == cases.len() && cases.len() >= 50;
        lines.push(format!("{family}: {ok}/{}", cases.len()));
    }
    outcome(pass, lines.join(", "))
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for m in 0..20u64 {
        let steps = rng.random_range(2..=6);
        let inputs = rng.random_range(1..=4);
        let h = [rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=4)];
        let readout = if m % 4 == 3 { Readout::Final } else { Readout::Sequence };
        let dims = ModelDims { steps, inputs, hidden: h, dense: [rng.random_range(1..=5), rng.random_range(1..=4)], readout };
        let model = RnnModel::init(dims, LineKind::Ac, 1.0, SEED + m).unwrap();
        let batch: Vec<Example> = (0..3)
            .map(|_| Example {
                input: (0..dims.input_len()).map(|_| rng.random_range(-2.0..2.0)).collect(),
                label: rng.random_range(0..2),
            })
            .collect();
        let (_, grad) = backward_bptt(&model, &batch).unwrap();
        let step = 1e-5;
        for i in 0..model.param_count() {
            let mut plus = model.clone();
            plus.params_mut()[i] += step;
            let mut minus = model.clone();
            minus.params_mut()[i] -= step;
            let numeric = (batch_loss(&plus, &batch).unwrap() - batch_loss(&minus, &batch).unwrap()) / (2.0 * step);
            let err = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-6);
            worst = worst.max(err);
            checked += 1;
        }
    }
    outcome(worst <= 1e-4, format!("20 models, {checked} parameters, max relative error {worst:.2e}"))
}

fn summary(name: &str, r: &MetricsReport) -> String {
    let c = &r.overall;
    format!(
        "{name}: acc {:.2}% fault-recall {:.2}% f1 {:.4} (n={})",
        100.0 * c.accuracy(),
        100.0 * c.fault_recall(),
        c.f1(),
        c.total()
    )
}

fn detection(cache: &mut Cache) -> Outcome {
    let ac = cache.ac().report.overall;
    let ac_line = summary("ac", &cache.ac().report);
    let dc = cache.dc().report.overall;
    let dc_line = summary("dc", &cache.dc().report);
    let pass = ac.accuracy() >= 0.95
        && dc.accuracy() >= 0.97
        && ac.fault_recall() >= 0.99
        && dc.fault_recall() >= 0.99
        && ac.f1() >= 0.95
        && dc.f1() >= 0.95;
    outcome(pass, format!("{ac_line}; {dc_line}"))
}

fn noise_robustness(cache: &mut Cache) -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    cache.ac();
    cache.dc();
    let both = [("ac", cache.ac.as_ref().unwrap()), ("dc", cache.dc.as_ref().unwrap())];
    for (name, t) in both {
        let clean = t.report.accuracy();
        let noisy = evaluate_with_noise(&t.model, &t.test, &NoiseSpec::snr(40.0, SEED)).unwrap().accuracy();
        let drop = 100.0 * (clean - noisy);
        pass &= drop <= 3.0;
        lines.push(format!("{name}: {:.2}% -> {:.2}% ({drop:+.2} pp drop)", 100.0 * clean, 100.0 * noisy));
    }
    outcome(pass, lines.join("; "))
}

fn latency(cache: &mut Cache) -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    let ac_model = cache.ac().model.clone();
    let low = WindowSpec::default_for(LineKind::Ac, 1000.0);
    let low_model = RnnModel::init(ModelDims::for_window(low.len(), 6), LineKind::Ac, 0.5, SEED).unwrap();
    for (label, model, spec) in [
        ("4 kHz", &ac_model, WindowSpec::default_for(LineKind::Ac, 4000.0)),
        ("1 kHz", &low_model, low),
    ] {
        let stats = bench_latency(model, &spec, 1000, SEED).unwrap();
        pass &= stats.median_s < 2e-3;
        lines.push(format!(
            "{label} T={}: median {:.1} us, p99 {:.1} us",
            spec.len(),
            stats.median_s * 1e6,
            stats.p99_s * 1e6
        ));
    }
    outcome(pass, lines.join("; "))
}

fn determinism(cache: &mut Cache) -> Outcome {
    let mut diff = Vec::new();
    for profile in [LineProfile::ac_line1(4000.0), LineProfile::dc_line1(4000.0)] {
        let name = profile.name.clone();
        let i_nom = profile.waveform.i_nom;
        let again = pipeline(&[generated(profile)], i_nom);
        let first = if name == "ac1" { cache.ac() } else { cache.dc() };
        let same = [
            ("train set", first.train_bytes == again.train_bytes),
            ("test set", first.test_bytes == again.test_bytes),
            ("checkpoint", first.model_bytes == again.model_bytes),
            ("report", first.report.to_csv() == again.report.to_csv()),
        ];
        diff.extend(same.iter().filter(|(_, eq)| !eq).map(|(n, _)| format!("{name} {n}")));
    }
    let detail = if diff.is_empty() {
        "ac and dc gen+train+eval repeated: dataset, checkpoint and report bytes identical".to_string()
    } else {
        format!("differs: {}", diff.join(", "))
    };
    outcome(diff.is_empty(), detail)
}

fn model_scale() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for kind in [LineKind::Ac, LineKind::Dc] {
        let spec = WindowSpec::default_for(kind, 4000.0);
        let d = if kind == LineKind::Ac { 6 } else { 4 };
        let n = ModelDims::for_window(spec.len(), d).param_count();
        let rel = n as f64 / TARGET_PARAM_COUNT as f64 - 1.0;
        pass &= rel.abs() <= 0.2;
        lines.push(format!("{kind} T={}: {n} ({:+.1}%)", spec.len(), 100.0 * rel));
    }
    outcome(pass, lines.join("; "))
}

fn pooled_training() -> Outcome {
    let p1 = LineProfile::ac_line1(4000.0);
    let p2 = LineProfile::ac_line2(4000.0);
    let i_nom = p1.waveform.i_nom;
    let t = pipeline(&[generated(p1), generated(p2)], i_nom);
    let mut pass = t.report.per_line.len() == 2;
    let mut lines = Vec::new();
    for (line, c) in &t.report.per_line {
        pass &= c.accuracy() >= 0.94;
        lines.push(format!("{line}: {:.2}% (n={})", 100.0 * c.accuracy(), c.total()));
    }
    outcome(pass, lines.join("; "))
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    let mut cache = Cache { ac: None, dc: None };
    let criteria: [(usize, &str); 10] = [
        (1, "relay characteristic exactness"),
        (2, "baseline vulnerability"),
        (3, "attack minimality"),
        (4, "gradient correctness"),
        (5, "desk-scale detection"),
        (6, "noise robustness at 40 dB"),
        (7, "inference latency"),
        (8, "determinism"),
        (9, "model scale"),
        (10, "pooled training"),
    ];
    let mut failed = 0;
    for (n, name) in criteria {
        if !wanted(n) {
            continue;
        }
        let start = Instant::now();
        let o = match n {
            1 => relay_exactness(),
            2 => baseline_vulnerability(),
            3 => attack_minimality(),
            4 => gradient_correctness(),
            5 => detection(&mut cache),
            6 => noise_robustness(&mut cache),
            7 => latency(&mut cache),
            8 => determinism(&mut cache),
            9 => model_scale(),
            _ => pooled_training(),
        };
        failed += (!o.pass) as usize;
        println!(
            "{} criterion {n:>2} ({name}) [{:.1}s]: {}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
