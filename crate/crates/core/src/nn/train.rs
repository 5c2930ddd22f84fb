use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adam_step, backward_bptt, AdamState, ModelDims, RnnModel};
use crate::dataset::Dataset;
use crate::{Error, Result};

/// Normalized, time-major model input with its 0/1 label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub label: u8,
}

/// Converts raw kA windows to per-unit model inputs.
pub fn examples_from(ds: &Dataset, i_nom: f64) -> Vec<Example> {
    let scale = 1.0 / i_nom;
    ds.examples()
        .iter()
        .map(|e| Example {
            input: e.window.data().iter().map(|&v| v as f64 * scale).collect(),
            label: e.label.as_u8(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    /// Share of the training set held out for validation by callers that split.
    pub val_fraction: f64,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            epochs: 100,
            patience: 10,
            val_fraction: 0.1,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.epsilon, self.clip_norm];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("learning rate, epsilon and clip norm must be positive"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if self.batch_size == 0 || self.patience == 0 {
            return Err(Error::invalid("batch size and patience must be positive"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::invalid("validation fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: RnnModel,
    pub curve: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Mean loss and accuracy at the 0.5 threshold.
pub fn score(model: &RnnModel, set: &[Example]) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Err(Error::invalid("cannot score an empty set"));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for ex in set {
        let p = model.forward(&ex.input)?;
        loss -= p[ex.label as usize].max(super::PROB_FLOOR).ln();
        correct += ((p[1] >= 0.5) as u8 == ex.label) as usize;
    }
    let n = set.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

fn clip(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

/// Mini-batch Adam with a seeded shuffle each epoch and early stopping on
/// validation loss. With an empty `val` the training loss is monitored.
/// The returned parameters are rounded to single precision.
pub fn fit(model: RnnModel, train: &[Example], val: &[Example], config: &TrainConfig) -> Result<FitOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut model = model;
    let mut best = model.clone();
    best.quantize();
    let mut curve = Vec::new();
    if config.epochs == 0 {
        return Ok(FitOutcome { model: best, curve, best_epoch: None });
    }
    let mut state = AdamState::for_model(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = None;
    let mut stale = 0;
    let mut batch = Vec::with_capacity(config.batch_size);
    for epoch in 1..=config.epochs {
        let last_finite = curve.last().map(|r: &EpochRecord| r.epoch);
        let diverged = || Error::TrainingDiverged { epoch, last_finite };
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i].clone()));
            let (loss, mut grad) = backward_bptt(&model, &batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(diverged());
            }
            clip(&mut grad, config.clip_norm);
            adam_step(&mut model, &grad, &mut state, config)?;
        }
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(diverged());
        }
        let (train_loss, train_acc) = score(&model, train)?;
        let (val_loss, val_acc) = if val.is_empty() { (train_loss, train_acc) } else { score(&model, val)? };
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(diverged());
        }
        curve.push(EpochRecord { epoch, train_loss, train_acc, val_loss, val_acc });
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = Some(epoch);
            best = model.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    best.quantize();
    Ok(FitOutcome { model: best, curve, best_epoch })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub hidden: usize,
    pub dense1: usize,
    pub learning_rate: f64,
    pub param_count: usize,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct GridSearch {
    pub points: Vec<GridPoint>,
    /// Index into `points` of the highest validation accuracy, ties broken by loss.
    pub best_index: usize,
    pub best: FitOutcome,
}

/// Trains one model per `(hidden, dense1, lr)` combination; every recurrent
/// layer takes the given hidden width.
pub fn grid_search(
    template: &RnnModel,
    train: &[Example],
    val: &[Example],
    hidden: &[usize],
    dense1: &[usize],
    learning_rates: &[f64],
    config: &TrainConfig,
) -> Result<GridSearch> {
    if hidden.is_empty() || dense1.is_empty() || learning_rates.is_empty() {
        return Err(Error::invalid("grid search needs at least one value per axis"));
    }
    let base: ModelDims = *template.dims();
    let mut points = Vec::new();
    let mut best: Option<(usize, FitOutcome)> = None;
    for &h in hidden {
        for &n in dense1 {
            for &lr in learning_rates {
                let dims = ModelDims { hidden: [h; 3], dense: [n, base.dense[1]], ..base };
                let init = RnnModel::init(dims, template.kind, template.i_nom, template.seed)?;
                let cfg = TrainConfig { learning_rate: lr, ..config.clone() };
                let out = fit(init, train, val, &cfg)?;
                let monitored = if val.is_empty() { train } else { val };
                let (val_loss, val_acc) = score(&out.model, monitored)?;
                let point = GridPoint { hidden: h, dense1: n, learning_rate: lr, param_count: dims.param_count(), val_loss, val_acc };
                let better = match &best {
                    None => true,
                    Some((i, _)) => {
                        let b: &GridPoint = &points[*i];
                        val_acc > b.val_acc || (val_acc == b.val_acc && val_loss < b.val_loss)
                    }
                };
                points.push(point);
                if better {
                    best = Some((points.len() - 1, out));
                }
            }
        }
    }
    let (best_index, best) = best.expect("non-empty grid");
    Ok(GridSearch { points, best_index, best })
}
