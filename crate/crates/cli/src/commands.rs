use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};

use mivs_core::attack::{
    apply_attack, craft_tripping_attack, AttackFamily, AttackRequest, AttackSpec, AttackStrategy, Direction,
    SearchBounds,
};
use mivs_core::dataset::{
    generate, load_dataset, load_sidecar, save_dataset, save_sidecar, split_dataset, Dataset, DatasetSplit, Label,
    LineProfile, ScenarioGrid, WindowSpec,
};
use mivs_core::mivs::{bench_latency, evaluate, evaluate_with_noise, threshold_sweep, validate, WARMUP_ITERATIONS};
use mivs_core::nn::{
    examples_from, fit, grid_search, load_model, save_model, FitOutcome, ModelDims, Readout, RnnModel, TrainConfig,
    TARGET_PARAM_COUNT,
};
use mivs_core::relay::scan_for_trip;
use mivs_core::signal::{synth_prefault, LineKind, NoiseSpec, SampleStream};

use crate::config::{Echo, RunConfig, GLOBAL};
use crate::{AttackArgs, BenchArgs, Cli, Command, EvalArgs, GenArgs, ModelInfoArgs, TrainArgs};

const DEFAULT_SEED: u64 = 42;
const DEFAULT_FS_HZ: f64 = 4000.0;

struct Globals {
    seed: u64,
    threads: usize,
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.overlay(GLOBAL, "seed", cli.seed);
    cfg.overlay(GLOBAL, "threads", cli.threads);
    let g = Globals {
        seed: cfg.get_or(GLOBAL, "seed", DEFAULT_SEED)?,
        threads: cfg.get_or(GLOBAL, "threads", 1usize)?,
    };
    ensure!(g.threads > 0, "threads must be at least 1");
    match cli.command {
        Command::Gen(a) => gen(&mut cfg, &g, a),
        Command::Train(a) => train(&mut cfg, &g, a),
        Command::Eval(a) => eval(&mut cfg, &g, a),
        Command::Attack(a) => attack(&mut cfg, &g, a),
        Command::Bench(a) => bench(&mut cfg, &g, a),
        Command::ModelInfo(a) => model_info(&mut cfg, a),
    }
}

/// `prefix` with `suffix` appended to its file name.
fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// `path` with its extension replaced by `suffix` (which carries its own dot).
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    suffixed(&path.with_extension(""), suffix)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    write(path, [])
}

fn required(cfg: &RunConfig, section: &str, key: &str) -> Result<PathBuf> {
    cfg.get::<PathBuf>(section, key)?.ok_or_else(|| anyhow!("missing --{key} (or `{key}` in [{section}])"))
}

fn resolve_profile(kind: Option<String>, line: Option<String>, fs_hz: f64) -> Result<LineProfile> {
    let kind: Option<LineKind> = kind.map(|k| k.parse()).transpose()?;
    let line = match (&line, kind) {
        (Some(l), _) => l.clone(),
        (None, Some(LineKind::Dc)) => "dc1".into(),
        (None, _) => "ac1".into(),
    };
    let profile = LineProfile::builtin(&line, fs_hz)?;
    if let Some(k) = kind {
        ensure!(profile.kind() == k, "line profile {line} is a {} line, not {k}", profile.kind());
    }
    profile.validate()?;
    Ok(profile)
}

fn gen(cfg: &mut RunConfig, g: &Globals, a: GenArgs) -> Result<()> {
    const S: &str = "gen";
    cfg.overlay(S, "kind", a.kind);
    cfg.overlay(S, "line", a.line);
    cfg.overlay(S, "faults", a.faults);
    cfg.overlay(S, "attacks", a.attacks);
    cfg.overlay(S, "fs_hz", a.fs_hz);
    cfg.overlay(S, "window_ms", a.window_ms);
    cfg.overlay(S, "minimal_fraction", a.minimal_fraction);
    cfg.overlay(S, "train_fraction", a.train_fraction);
    cfg.overlay(S, "out", a.out.map(|p| p.display().to_string()));

    let fs_hz = cfg.get_or(S, "fs_hz", DEFAULT_FS_HZ)?;
    let profile = resolve_profile(cfg.get(S, "kind")?, cfg.get(S, "line")?, fs_hz)?;
    let kind = profile.kind();
    let mut grid = ScenarioGrid::default_for(profile, g.seed);
    let window_ms = cfg.get_or(S, "window_ms", grid.window.duration_ms)?;
    grid.window = WindowSpec::new(window_ms, fs_hz)?;
    grid.fault_count = cfg.get_or(S, "faults", grid.fault_count)?;
    grid.attack_count = cfg.get_or(S, "attacks", grid.attack_count)?;
    grid.minimal_fraction = cfg.get_or(S, "minimal_fraction", grid.minimal_fraction)?;
    let train_fraction = cfg.get_or(S, "train_fraction", 0.8)?;
    let out = required(cfg, S, "out")?;
    grid.validate()?;

    let mut echo = Echo::new(S, g.seed, g.threads);
    echo.set("kind", kind)
        .set("line", &grid.profile.name)
        .set("fs_hz", fs_hz)
        .set("window_ms", window_ms)
        .set("faults", grid.fault_count)
        .set("attacks", grid.attack_count)
        .set("minimal_fraction", grid.minimal_fraction)
        .set("train_fraction", train_fraction)
        .set("out", out.display());
    ensure_parent(&suffixed(&out, ".gen.config"))?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(g.threads).build()?;
    let generation = pool.install(|| generate(&grid))?;
    let split = split_dataset(&generation.dataset, &DatasetSplit { train_fraction, val_fraction: None, seed: g.seed })?;

    save_dataset(&split.train, suffixed(&out, ".train.ds"))?;
    save_dataset(&split.test, suffixed(&out, ".test.ds"))?;
    save_sidecar(&split.train, suffixed(&out, ".train.csv"))?;
    save_sidecar(&split.test, suffixed(&out, ".test.csv"))?;

    let ds = &generation.dataset;
    let mut by_reason: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, reason) in &generation.rejected {
        *by_reason.entry(reason.as_str()).or_default() += 1;
    }
    let mut log = String::new();
    let _ = writeln!(
        log,
        "line={} kind={kind} fs_hz={fs_hz} window_ms={window_ms} T={} d={} seed={}",
        grid.profile.name, ds.steps, ds.channels, g.seed
    );
    let _ = writeln!(log, "fault_grid_points={}", grid.fault_grid_size());
    let _ = writeln!(log, "accepted_faults={} accepted_attacks={}", ds.count(Label::Fault), ds.count(Label::Fdia));
    let _ = writeln!(log, "rejected={}", generation.rejected.len());
    for (reason, n) in &by_reason {
        let _ = writeln!(log, "rejected[{reason}]={n}");
    }
    let _ = writeln!(log, "train={} test={}", split.train.len(), split.test.len());
    if !generation.rejected.is_empty() {
        log.push_str("\nscenario_id,reason\n");
        for (id, reason) in &generation.rejected {
            let _ = writeln!(log, "{id},{reason}");
        }
    }
    write(&suffixed(&out, ".gen.log"), &log)?;
    write(&suffixed(&out, ".gen.config"), echo.render())?;

    println!(
        "generated {} examples ({} faults, {} attacks; {} scenarios rejected)",
        ds.len(),
        ds.count(Label::Fault),
        ds.count(Label::Fdia),
        generation.rejected.len()
    );
    println!("window T={} d={} at {fs_hz} Hz", ds.steps, ds.channels);
    println!("train {} -> {}", split.train.len(), suffixed(&out, ".train.ds").display());
    println!("test {} -> {}", split.test.len(), suffixed(&out, ".test.ds").display());
    Ok(())
}

fn default_i_nom(kind: LineKind) -> f64 {
    let line = if kind == LineKind::Ac { "ac1" } else { "dc1" };
    LineProfile::builtin(line, DEFAULT_FS_HZ).expect("builtin profile").waveform.i_nom
}

fn model_summary(model: &RnnModel) -> String {
    let d = model.dims();
    let n = model.param_count();
    let mut s = String::new();
    let _ = writeln!(s, "kind          {}", model.kind);
    let _ = writeln!(s, "input         T={} d={}", d.steps, d.inputs);
    let _ = writeln!(s, "recurrent     {}/{}/{} (tanh)", d.hidden[0], d.hidden[1], d.hidden[2]);
    let _ = writeln!(s, "readout       {} ({} values)", d.readout, d.flat_len());
    let _ = writeln!(s, "dense         {}/{} (tanh)", d.dense[0], d.dense[1]);
    let _ = writeln!(s, "classes       2 (softmax)");
    let _ = writeln!(s, "i_nom         {} kA", model.i_nom);
    let _ = writeln!(s, "seed          {}", model.seed);
    let _ = writeln!(
        s,
        "param_count   {n} ({:+.1}% vs {TARGET_PARAM_COUNT})",
        100.0 * (n as f64 / TARGET_PARAM_COUNT as f64 - 1.0)
    );
    let _ = writeln!(s, "\n{:<14}{:>8}{:>8}{:>8}", "tensor", "rows", "cols", "count");
    for (name, slot) in model.layout().named() {
        let _ = writeln!(s, "{name:<14}{:>8}{:>8}{:>8}", slot.rows, slot.cols, slot.len());
    }
    s
}

fn curve_csv(out: &FitOutcome) -> String {
    let mut s = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
    for r in &out.curve {
        let _ = writeln!(s, "{},{:.6},{:.6},{:.6},{:.6}", r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc);
    }
    s
}

fn train(cfg: &mut RunConfig, g: &Globals, a: TrainArgs) -> Result<()> {
    const S: &str = "train";
    cfg.overlay(S, "data", a.data.map(|p| p.display().to_string()));
    cfg.overlay(S, "out", a.out.map(|p| p.display().to_string()));
    cfg.overlay(S, "i_nom", a.i_nom);
    cfg.overlay(S, "epochs", a.epochs);
    cfg.overlay(S, "batch_size", a.batch_size);
    cfg.overlay(S, "learning_rate", a.learning_rate);
    cfg.overlay(S, "patience", a.patience);
    cfg.overlay(S, "val_fraction", a.val_fraction);
    cfg.overlay(S, "clip_norm", a.clip_norm);
    cfg.overlay(S, "hidden", a.hidden);
    cfg.overlay(S, "dense1", a.dense1);
    cfg.overlay(S, "dense2", a.dense2);
    cfg.overlay(S, "readout", a.readout);
    cfg.overlay(S, "grid_search", a.grid_search.then_some(true));
    cfg.overlay(S, "grid_hidden", a.grid_hidden);
    cfg.overlay(S, "grid_dense1", a.grid_dense1);
    cfg.overlay(S, "grid_lr", a.grid_lr);

    let data = required(cfg, S, "data")?;
    let out = required(cfg, S, "out")?;
    let ds = load_dataset(&data).with_context(|| format!("loading {}", data.display()))?;
    let defaults = TrainConfig::default();
    let tc = TrainConfig {
        learning_rate: cfg.get_or(S, "learning_rate", defaults.learning_rate)?,
        batch_size: cfg.get_or(S, "batch_size", defaults.batch_size)?,
        epochs: cfg.get_or(S, "epochs", defaults.epochs)?,
        patience: cfg.get_or(S, "patience", defaults.patience)?,
        val_fraction: cfg.get_or(S, "val_fraction", defaults.val_fraction)?,
        clip_norm: cfg.get_or(S, "clip_norm", defaults.clip_norm)?,
        seed: g.seed,
        ..defaults
    };
    tc.validate()?;
    let base = ModelDims::for_window(ds.steps, ds.channels);
    let h = cfg.get_or(S, "hidden", base.hidden[0])?;
    let dims = ModelDims {
        hidden: [h; 3],
        dense: [cfg.get_or(S, "dense1", base.dense[0])?, cfg.get_or(S, "dense2", base.dense[1])?],
        readout: cfg.get_or::<Readout>(S, "readout", base.readout)?,
        ..base
    };
    let i_nom = cfg.get_or(S, "i_nom", default_i_nom(ds.kind))?;
    let grid = cfg.get_or(S, "grid_search", false)?;
    let grid_hidden: Vec<usize> = cfg.list(S, "grid_hidden")?.unwrap_or_else(|| vec![8, 16]);
    let grid_dense1: Vec<usize> = cfg.list(S, "grid_dense1")?.unwrap_or_else(|| vec![dims.dense[0] / 2, dims.dense[0]]);
    let grid_lr: Vec<f64> = cfg.list(S, "grid_lr")?.unwrap_or_else(|| vec![1e-3, 3e-3]);

    let join = |v: &[String]| v.join(",");
    let mut echo = Echo::new(S, g.seed, g.threads);
    echo.set("data", data.display())
        .set("out", out.display())
        .set("i_nom", i_nom)
        .set("epochs", tc.epochs)
        .set("batch_size", tc.batch_size)
        .set("learning_rate", tc.learning_rate)
        .set("patience", tc.patience)
        .set("val_fraction", tc.val_fraction)
        .set("clip_norm", tc.clip_norm)
        .set("hidden", h)
        .set("dense1", dims.dense[0])
        .set("dense2", dims.dense[1])
        .set("readout", dims.readout)
        .set("grid_search", grid);
    if grid {
        echo.set("grid_hidden", join(&grid_hidden.iter().map(|v| v.to_string()).collect::<Vec<_>>()))
            .set("grid_dense1", join(&grid_dense1.iter().map(|v| v.to_string()).collect::<Vec<_>>()))
            .set("grid_lr", join(&grid_lr.iter().map(|v| v.to_string()).collect::<Vec<_>>()));
    }
    ensure_parent(&out)?;

    let split = split_dataset(
        &ds,
        &DatasetSplit { train_fraction: 1.0 - tc.val_fraction, val_fraction: None, seed: g.seed },
    )?;
    let train_set = examples_from(&split.train, i_nom);
    let val_set = examples_from(&split.test, i_nom);
    let init = RnnModel::init(dims, ds.kind, i_nom, g.seed)?;
    println!("training on {} windows, validating on {}", train_set.len(), val_set.len());

    let outcome = if grid {
        let search = grid_search(&init, &train_set, &val_set, &grid_hidden, &grid_dense1, &grid_lr, &tc)?;
        let mut table = String::from("hidden,dense1,learning_rate,param_count,val_loss,val_acc\n");
        println!("{:>7}{:>8}{:>10}{:>9}{:>10}{:>9}", "hidden", "dense1", "lr", "params", "val_loss", "val_acc");
        for (i, p) in search.points.iter().enumerate() {
            let mark = if i == search.best_index { " *" } else { "" };
            println!(
                "{:>7}{:>8}{:>10}{:>9}{:>10.4}{:>8.2}%{mark}",
                p.hidden,
                p.dense1,
                p.learning_rate,
                p.param_count,
                p.val_loss,
                100.0 * p.val_acc
            );
            let _ = writeln!(
                table,
                "{},{},{},{},{:.6},{:.6}",
                p.hidden, p.dense1, p.learning_rate, p.param_count, p.val_loss, p.val_acc
            );
        }
        write(&sibling(&out, ".grid.csv"), table)?;
        search.best
    } else {
        fit(init, &train_set, &val_set, &tc)?
    };

    save_model(&outcome.model, &out)?;
    write(&sibling(&out, ".curve.csv"), curve_csv(&outcome))?;
    let summary = model_summary(&outcome.model);
    write(&sibling(&out, ".info.txt"), &summary)?;
    write(&sibling(&out, ".train.config"), echo.render())?;

    if let Some(last) = outcome.curve.last() {
        println!(
            "{} epochs; best epoch {}; final train acc {:.2}%, val acc {:.2}%",
            outcome.curve.len(),
            outcome.best_epoch.unwrap_or(0),
            100.0 * last.train_acc,
            100.0 * last.val_acc
        );
    } else {
        println!("0 epochs; checkpoint holds the initialized model");
    }
    print!("{summary}");
    println!("checkpoint -> {}", out.display());
    Ok(())
}

fn check_compatible(model: &RnnModel, ds: &Dataset) -> Result<()> {
    let d = model.dims();
    if model.kind != ds.kind || d.steps != ds.steps || d.inputs != ds.channels {
        bail!(
            "model expects {}x{} {} windows but the dataset holds {}x{} {} windows",
            d.steps,
            d.inputs,
            model.kind,
            ds.steps,
            ds.channels,
            ds.kind
        );
    }
    Ok(())
}

fn eval(cfg: &mut RunConfig, g: &Globals, a: EvalArgs) -> Result<()> {
    const S: &str = "eval";
    cfg.overlay(S, "model", a.model.map(|p| p.display().to_string()));
    cfg.overlay(S, "data", a.data.map(|p| p.display().to_string()));
    cfg.overlay(S, "sidecar", a.sidecar.map(|p| p.display().to_string()));
    cfg.overlay(S, "noise_snr", a.noise_snr);
    cfg.overlay(S, "sweep", a.sweep.then_some(true));
    cfg.overlay(S, "out", a.out.map(|p| p.display().to_string()));

    let model_path = required(cfg, S, "model")?;
    let data = required(cfg, S, "data")?;
    let model = load_model(&model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let mut ds = load_dataset(&data).with_context(|| format!("loading {}", data.display()))?;
    check_compatible(&model, &ds)?;
    let sidecar = match cfg.get::<PathBuf>(S, "sidecar")? {
        Some(p) => Some(p),
        None => Some(data.with_extension("csv")).filter(|p| p.exists()),
    };
    if let Some(p) = &sidecar {
        load_sidecar(&mut ds, p).with_context(|| format!("loading {}", p.display()))?;
    }
    let noise_snr: Option<f64> = cfg.get(S, "noise_snr")?;
    let sweep = cfg.get_or(S, "sweep", false)?;
    let out = cfg.get::<PathBuf>(S, "out")?.unwrap_or_else(|| sibling(&data, ".eval"));

    let mut echo = Echo::new(S, g.seed, g.threads);
    echo.set("model", model_path.display()).set("data", data.display());
    if let Some(p) = &sidecar {
        echo.set("sidecar", p.display());
    }
    if let Some(snr) = noise_snr {
        echo.set("noise_snr", snr);
    }
    echo.set("sweep", sweep).set("out", out.display());
    ensure_parent(&suffixed(&out, ".eval.config"))?;

    let report = evaluate(&model, &ds)?;
    println!("clean evaluation on {} windows", ds.len());
    print!("{}", report.to_table());
    write(&suffixed(&out, ".metrics.csv"), report.to_csv())?;
    let mut text = report.to_table();

    if let Some(snr) = noise_snr {
        let noisy = evaluate_with_noise(&model, &ds, &NoiseSpec::snr(snr, g.seed))?;
        let drop = 100.0 * (report.accuracy() - noisy.accuracy());
        println!("\nevaluation at {snr} dB SNR (no retraining)");
        print!("{}", noisy.to_table());
        println!("accuracy change: {:.1}% -> {:.1}% ({drop:.2} pp degradation)", 100.0 * report.accuracy(), 100.0 * noisy.accuracy());
        write(&suffixed(&out, ".noisy.metrics.csv"), noisy.to_csv())?;
        let _ = write!(text, "\nat {snr} dB SNR\n{}degradation_pp={drop:.4}\n", noisy.to_table());
    }
    if sweep {
        let thresholds: Vec<f64> = (1..20).map(|i| i as f64 * 0.05).collect();
        let rows = threshold_sweep(&model, &ds, &thresholds)?;
        let mut csv = String::from("threshold,tpr,fpr,accuracy\n");
        for r in rows {
            let _ = writeln!(csv, "{:.2},{:.6},{:.6},{:.6}", r.threshold, r.tpr, r.fpr, r.accuracy);
        }
        write(&suffixed(&out, ".sweep.csv"), csv)?;
    }
    write(&suffixed(&out, ".report.txt"), text)?;
    write(&suffixed(&out, ".eval.config"), echo.render())?;
    println!("\nreport -> {}", suffixed(&out, ".metrics.csv").display());
    Ok(())
}

fn parse_direction(s: &str) -> Result<Direction> {
    match s {
        "increase" | "up" => Ok(Direction::Increase),
        "decrease" | "down" => Ok(Direction::Decrease),
        _ => bail!("unknown direction `{s}` (increase|decrease)"),
    }
}

fn stream_csv(stream: &SampleStream) -> String {
    let mut s = String::from("sample_index");
    for name in stream.layout.channel_names() {
        s.push(',');
        s.push_str(&name);
    }
    s.push('\n');
    for k in 0..stream.len() {
        let _ = write!(s, "{k}");
        for v in stream.row(k) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

fn attack(cfg: &mut RunConfig, g: &Globals, a: AttackArgs) -> Result<()> {
    const S: &str = "attack";
    cfg.overlay(S, "kind", a.kind);
    cfg.overlay(S, "line", a.line);
    cfg.overlay(S, "fs_hz", a.fs_hz);
    cfg.overlay(S, "strategy", a.strategy);
    cfg.overlay(S, "alpha", a.alpha);
    cfg.overlay(S, "delta", a.delta);
    cfg.overlay(S, "shift_ms", a.shift_ms);
    cfg.overlay(S, "direction", a.direction);
    cfg.overlay(S, "pairs", a.pairs);
    cfg.overlay(S, "onset_s", a.onset_s);
    cfg.overlay(S, "model", a.model.map(|p| p.display().to_string()));
    cfg.overlay(S, "out", a.out.map(|p| p.display().to_string()));

    let fs_hz = cfg.get_or(S, "fs_hz", DEFAULT_FS_HZ)?;
    let profile = resolve_profile(cfg.get(S, "kind")?, cfg.get(S, "line")?, fs_hz)?;
    let family: AttackFamily = cfg.get_or(S, "strategy", AttackFamily::Scale)?;
    let pairs: Vec<usize> = cfg.list(S, "pairs")?.unwrap_or_else(|| vec![0]);
    let onset_s = cfg.get_or(S, "onset_s", profile.event_time_s)?;
    let direction = cfg.raw(S, "direction").map(parse_direction).transpose()?;
    let out = cfg.get::<PathBuf>(S, "out")?.unwrap_or_else(|| PathBuf::from("attack.csv"));
    let model_path: Option<PathBuf> = cfg.get(S, "model")?;

    let explicit = match family {
        AttackFamily::Scale => cfg.get::<f64>(S, "alpha")?.map(|alpha| AttackStrategy::Scale { alpha }),
        AttackFamily::Additive => cfg.get::<f64>(S, "delta")?.map(|delta| AttackStrategy::Additive { delta }),
        AttackFamily::TimeShift => cfg.get::<f64>(S, "shift_ms")?.map(|ms| AttackStrategy::TimeShift { shift_s: ms * 1e-3 }),
    };
    for (key, fam) in [("alpha", AttackFamily::Scale), ("delta", AttackFamily::Additive), ("shift_ms", AttackFamily::TimeShift)] {
        ensure!(fam == family || cfg.raw(S, key).is_none(), "`{key}` does not apply to the {family} strategy");
    }

    let mut echo = Echo::new(S, g.seed, g.threads);
    echo.set("kind", profile.kind())
        .set("line", &profile.name)
        .set("fs_hz", fs_hz)
        .set("strategy", family)
        .set("pairs", pairs.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","))
        .set("onset_s", onset_s);
    match explicit {
        Some(AttackStrategy::Scale { alpha }) => echo.set("alpha", alpha),
        Some(AttackStrategy::Additive { delta }) => echo.set("delta", delta),
        Some(AttackStrategy::TimeShift { shift_s }) => echo.set("shift_ms", shift_s * 1e3),
        None => &mut echo,
    };
    if let Some(d) = direction {
        echo.set("direction", if d == Direction::Increase { "increase" } else { "decrease" });
    }
    if let Some(p) = &model_path {
        echo.set("model", p.display());
    }
    echo.set("out", out.display());
    ensure_parent(&out)?;

    let base = synth_prefault(&profile.waveform, profile.layout, profile.duration_s)?;
    let spec = match explicit {
        Some(strategy) => AttackSpec::new(strategy, onset_s, pairs),
        None => {
            let bounds = SearchBounds::new(profile.waveform.i_nom, profile.waveform.f0_hz);
            let request = AttackRequest { family, onset_s, pairs, direction };
            craft_tripping_attack(&base, &profile.relay, &request, &bounds)?
        }
    };
    println!("line {} ({}) at {fs_hz} Hz", profile.name, profile.kind());
    println!("attack: {}", spec.describe());
    let attacked = apply_attack(&base, &spec)?;
    write(&out, stream_csv(&attacked))?;
    write(&sibling(&out, ".config"), echo.render())?;
    println!("attacked stream -> {}", out.display());

    let Some(trip) = scan_for_trip(&attacked, &profile.relay)? else {
        println!("relay (no validator): no trip");
        bail!("attack ineffective: the relay does not trip");
    };
    println!(
        "relay (no validator): TRIP at sample {} (t={:.6}s) on {} with I_d={:.4} kA, I_r={:.4} kA, threshold {:.4} kA",
        trip.index,
        trip.time_s,
        profile.layout.pair_name(trip.pair),
        trip.i_d,
        trip.i_r,
        trip.threshold
    );
    if let Some(p) = model_path {
        let model = load_model(&p).with_context(|| format!("loading {}", p.display()))?;
        let window = WindowSpec::new(model.dims().steps as f64 * 1000.0 / fs_hz, fs_hz)?;
        let decision = validate(&model, &attacked, &profile.relay, &window)?;
        println!(
            "validator: {:?} (P[fdia]={:.4}, {:.1} us)",
            decision.verdict,
            decision.probability_fdia,
            decision.elapsed_s * 1e6
        );
    }
    Ok(())
}

fn bench(cfg: &mut RunConfig, g: &Globals, a: BenchArgs) -> Result<()> {
    const S: &str = "bench";
    cfg.overlay(S, "model", a.model.map(|p| p.display().to_string()));
    cfg.overlay(S, "iters", a.iters);
    cfg.overlay(S, "fs_hz", a.fs_hz);
    cfg.overlay(S, "window_ms", a.window_ms);
    cfg.overlay(S, "out", a.out.map(|p| p.display().to_string()));

    let model_path = required(cfg, S, "model")?;
    let model = load_model(&model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let iters = cfg.get_or(S, "iters", 1000usize)?;
    let fs_hz = cfg.get_or(S, "fs_hz", DEFAULT_FS_HZ)?;
    let window_ms = cfg.get_or(S, "window_ms", model.dims().steps as f64 * 1000.0 / fs_hz)?;
    let spec = WindowSpec::new(window_ms, fs_hz)?;
    let out = cfg.get::<PathBuf>(S, "out")?.unwrap_or_else(|| sibling(&model_path, ".bench.csv"));

    let mut echo = Echo::new(S, g.seed, g.threads);
    echo.set("model", model_path.display())
        .set("iters", iters)
        .set("fs_hz", fs_hz)
        .set("window_ms", window_ms)
        .set("out", out.display());

    let stats = bench_latency(&model, &spec, iters, g.seed)?;
    println!(
        "{} timed inferences after {WARMUP_ITERATIONS} warm-ups (T={} d={} at {fs_hz} Hz)",
        stats.iterations,
        spec.len(),
        model.dims().inputs
    );
    println!("median {:.1} us, p99 {:.1} us, mean {:.1} us", stats.median_s * 1e6, stats.p99_s * 1e6, stats.mean_s * 1e6);
    let csv = format!(
        "metric,value\niterations,{}\nwarmup,{WARMUP_ITERATIONS}\nmedian_s,{:e}\np99_s,{:e}\nmean_s,{:e}\n",
        stats.iterations, stats.median_s, stats.p99_s, stats.mean_s
    );
    write(&out, csv)?;
    write(&sibling(&out, ".config"), echo.render())?;
    Ok(())
}

fn model_info(cfg: &mut RunConfig, a: ModelInfoArgs) -> Result<()> {
    const S: &str = "model-info";
    cfg.overlay(S, "model", a.model.map(|p| p.display().to_string()));
    cfg.overlay(S, "kind", a.kind);
    cfg.overlay(S, "fs_hz", a.fs_hz);
    cfg.overlay(S, "window_ms", a.window_ms);
    let model = match cfg.get::<PathBuf>(S, "model")? {
        Some(p) => load_model(&p).with_context(|| format!("loading {}", p.display()))?,
        None => {
            let kind: LineKind = cfg.get_or(S, "kind", LineKind::Ac)?;
            let fs_hz = cfg.get_or(S, "fs_hz", DEFAULT_FS_HZ)?;
            let spec = match cfg.get::<f64>(S, "window_ms")? {
                Some(ms) => WindowSpec::new(ms, fs_hz)?,
                None => WindowSpec::default_for(kind, fs_hz),
            };
            let channels = if kind == LineKind::Ac { 6 } else { 4 };
            RnnModel::init(ModelDims::for_window(spec.len(), channels), kind, default_i_nom(kind), 0)?
        }
    };
    print!("{}", model_summary(&model));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn companion_paths() {
        assert_eq!(suffixed(Path::new("data/ac"), ".train.ds"), PathBuf::from("data/ac.train.ds"));
        assert_eq!(sibling(Path::new("m/ac.nn"), ".curve.csv"), PathBuf::from("m/ac.curve.csv"));
        assert_eq!(sibling(Path::new("x.train.ds"), ".eval"), PathBuf::from("x.train.eval"));
    }
}
