//! Stacked tanh recurrent classifier written from scratch.
//!
//! Parameters live in one flat `f64` buffer; tensors are row-major views
//! into it in declaration order: for each recurrent layer `W_xh`, `W_hh`,
//! `b_h`; then `W1`, `b1`, `W2`, `b2`, and the head `W_hy`, `b_y`.

mod adam;
mod checkpoint;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC};
pub use train::{
    examples_from, fit, grid_search, score, EpochRecord, Example, FitOutcome, GridPoint, GridSearch, TrainConfig,
};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Window;
use crate::signal::LineKind;
use crate::{Error, Result};

/// Reference parameter budget the default dimensioning aims for.
pub const TARGET_PARAM_COUNT: usize = 14_817;

pub const CLASSES: usize = 2;

const PROB_FLOOR: f64 = 1e-12;

/// What the first dense layer sees from the last recurrent layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    /// Flattened hidden sequence, `T * h3` values.
    Sequence,
    /// Final hidden state only, `h3` values.
    Final,
}

impl fmt::Display for Readout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Readout::Sequence => "sequence",
            Readout::Final => "final",
        })
    }
}

impl FromStr for Readout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequence" => Ok(Readout::Sequence),
            "final" => Ok(Readout::Final),
            _ => Err(Error::invalid(format!("unknown readout `{s}` (sequence|final)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub steps: usize,
    pub inputs: usize,
    pub hidden: [usize; 3],
    pub dense: [usize; 2],
    pub readout: Readout,
}

impl ModelDims {
    /// Hidden 16/16/16 and dense2 32, with the first dense width chosen so
    /// the parameter count lands closest to [`TARGET_PARAM_COUNT`].
    pub fn for_window(steps: usize, inputs: usize) -> Self {
        let base = Self { steps, inputs, hidden: [16; 3], dense: [1, 32], readout: Readout::Sequence };
        (1..=512)
            .map(|n| Self { dense: [n, 32], ..base })
            .min_by_key(|d| d.param_count().abs_diff(TARGET_PARAM_COUNT))
            .expect("non-empty range")
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.inputs == 0 || self.hidden.contains(&0) || self.dense.contains(&0) {
            return Err(Error::invalid(format!("model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn flat_len(&self) -> usize {
        match self.readout {
            Readout::Sequence => self.steps * self.hidden[2],
            Readout::Final => self.hidden[2],
        }
    }

    pub fn input_len(&self) -> usize {
        self.steps * self.inputs
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }
}

/// Row-major tensor slot inside the flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecurrentSlots {
    pub w_xh: Slot,
    pub w_hh: Slot,
    pub b_h: Slot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AffineSlots {
    pub w: Slot,
    pub b: Slot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub recurrent: [RecurrentSlots; 3],
    pub dense: [AffineSlots; 2],
    pub head: AffineSlots,
    pub total: usize,
}

impl Layout {
    fn new(dims: &ModelDims) -> Self {
        let mut offset = 0;
        let mut slot = |rows: usize, cols: usize| {
            let s = Slot { offset, rows, cols };
            offset += rows * cols;
            s
        };
        let mut input = dims.inputs;
        let recurrent = dims.hidden.map(|h| {
            let r = RecurrentSlots { w_xh: slot(h, input), w_hh: slot(h, h), b_h: slot(h, 1) };
            input = h;
            r
        });
        let mut input = dims.flat_len();
        let dense = dims.dense.map(|n| {
            let a = AffineSlots { w: slot(n, input), b: slot(n, 1) };
            input = n;
            a
        });
        let head = AffineSlots { w: slot(CLASSES, input), b: slot(CLASSES, 1) };
        Self { recurrent, dense, head, total: offset }
    }

    /// Tensor names and slots in declaration order.
    pub fn named(&self) -> Vec<(String, Slot)> {
        let mut out = Vec::new();
        for (i, r) in self.recurrent.iter().enumerate() {
            out.push((format!("rnn{}.W_xh", i + 1), r.w_xh));
            out.push((format!("rnn{}.W_hh", i + 1), r.w_hh));
            out.push((format!("rnn{}.b_h", i + 1), r.b_h));
        }
        for (i, a) in self.dense.iter().enumerate() {
            out.push((format!("dense{}.W", i + 1), a.w));
            out.push((format!("dense{}.b", i + 1), a.b));
        }
        out.push(("head.W_hy".into(), self.head.w));
        out.push(("head.b_y".into(), self.head.b));
        out
    }
}

/// Borrowed view of one recurrent layer.
pub struct RnnLayer<'a> {
    pub w_xh: &'a [f64],
    pub w_hh: &'a [f64],
    pub b_h: &'a [f64],
    pub hidden: usize,
    pub inputs: usize,
}

impl RnnLayer<'_> {
    /// Emits `z_t = h_t = tanh(W_hh h_{t-1} + W_xh x_t + b_h)` for every step,
    /// starting from `h_0 = 0`. `xs` and the result are time-major.
    pub fn run(&self, xs: &[f64], steps: usize) -> Vec<f64> {
        let h = self.hidden;
        let mut out = vec![0.0; steps * h];
        for t in 0..steps {
            let (done, rest) = out.split_at_mut(t * h);
            let cur = &mut rest[..h];
            cur.copy_from_slice(self.b_h);
            matvec_add(self.w_xh, h, self.inputs, &xs[t * self.inputs..(t + 1) * self.inputs], cur);
            if t > 0 {
                matvec_add(self.w_hh, h, h, &done[(t - 1) * h..], cur);
            }
            cur.iter_mut().for_each(|v| *v = v.tanh());
        }
        out
    }
}

/// `out += W x` for a row-major `rows x cols` matrix.
fn matvec_add(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        let row = &w[r * cols..(r + 1) * cols];
        *o += row.iter().zip(&x[..cols]).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += W^T g`.
fn matvec_t_add(w: &[f64], rows: usize, cols: usize, g: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let gr = g[r];
        if gr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, a) in out[..cols].iter_mut().zip(row) {
            *o += a * gr;
        }
    }
}

/// `grad += g x^T`.
fn outer_add(grad: &mut [f64], rows: usize, cols: usize, g: &[f64], x: &[f64]) {
    for r in 0..rows {
        let gr = g[r];
        if gr == 0.0 {
            continue;
        }
        for (o, xv) in grad[r * cols..(r + 1) * cols].iter_mut().zip(&x[..cols]) {
            *o += gr * xv;
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean binary cross-entropy of class-1 probabilities against 0/1 labels,
/// with probabilities clamped `1e-12` away from the boundaries.
pub fn bce_loss(predicted: &[f64], labels: &[u8]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::invalid("loss of an empty batch"));
    }
    if predicted.len() != labels.len() {
        return Err(Error::invalid(format!("{} predictions for {} labels", predicted.len(), labels.len())));
    }
    let mut total = 0.0;
    for (&p, &y) in predicted.iter().zip(labels) {
        let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        total -= match y {
            0 => (1.0 - p).ln(),
            1 => p.ln(),
            _ => return Err(Error::invalid(format!("label {y} is not 0 or 1"))),
        };
    }
    Ok(total / predicted.len() as f64)
}

/// Activations of one forward pass, kept for backpropagation.
struct Trace {
    sequences: [Vec<f64>; 3],
    dense: [Vec<f64>; 2],
    probs: [f64; CLASSES],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    dims: ModelDims,
    layout: Layout,
    params: Vec<f64>,
    pub kind: LineKind,
    /// Per-unit base applied to raw kA windows before the forward pass.
    pub i_nom: f64,
    pub seed: u64,
}

impl RnnModel {
    /// Seeded uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights, zero biases.
    /// Values are rounded to single precision so checkpoints are exact.
    pub fn init(dims: ModelDims, kind: LineKind, i_nom: f64, seed: u64) -> Result<Self> {
        dims.validate()?;
        if !(i_nom > 0.0 && i_nom.is_finite()) {
            return Err(Error::invalid("normalization base must be positive"));
        }
        let layout = dims.layout();
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |slot: Slot, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[slot.range()] {
                *p = rng.random_range(-bound..bound) as f32 as f64;
            }
        };
        for r in &layout.recurrent {
            fill(r.w_xh, r.w_xh.cols);
            fill(r.w_hh, r.w_hh.cols);
        }
        for a in layout.dense.iter().chain([&layout.head]) {
            fill(a.w, a.w.cols);
        }
        Ok(Self { dims, layout, params, kind, i_nom, seed })
    }

    pub fn from_params(dims: ModelDims, kind: LineKind, i_nom: f64, seed: u64, params: Vec<f64>) -> Result<Self> {
        let mut model = Self::init(dims, kind, i_nom, seed)?;
        if params.len() != model.params.len() {
            return Err(Error::Dimension {
                expected: format!("{} parameters", model.params.len()),
                found: format!("{}", params.len()),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("non-finite parameter"));
        }
        model.params = params;
        Ok(model)
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Rounds every parameter to the nearest single-precision value.
    pub fn quantize(&mut self) {
        self.params.iter_mut().for_each(|p| *p = *p as f32 as f64);
    }

    pub fn layer(&self, index: usize) -> RnnLayer<'_> {
        let r = &self.layout.recurrent[index];
        RnnLayer {
            w_xh: &self.params[r.w_xh.range()],
            w_hh: &self.params[r.w_hh.range()],
            b_h: &self.params[r.b_h.range()],
            hidden: r.w_xh.rows,
            inputs: r.w_xh.cols,
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.dims.input_len() {
            return Err(Error::invalid(format!(
                "input has {} values; model expects {}x{}",
                input.len(),
                self.dims.steps,
                self.dims.inputs
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite input"));
        }
        Ok(())
    }

    fn trace(&self, input: &[f64]) -> Trace {
        let steps = self.dims.steps;
        let s0 = self.layer(0).run(input, steps);
        let s1 = self.layer(1).run(&s0, steps);
        let s2 = self.layer(2).run(&s1, steps);
        let flat: &[f64] = match self.dims.readout {
            Readout::Sequence => &s2,
            Readout::Final => &s2[(steps - 1) * self.dims.hidden[2]..],
        };
        let affine = |a: &AffineSlots, x: &[f64]| {
            let mut out = self.params[a.b.range()].to_vec();
            matvec_add(&self.params[a.w.range()], a.w.rows, a.w.cols, x, &mut out);
            out
        };
        let mut d0 = affine(&self.layout.dense[0], flat);
        d0.iter_mut().for_each(|v| *v = v.tanh());
        let mut d1 = affine(&self.layout.dense[1], &d0);
        d1.iter_mut().for_each(|v| *v = v.tanh());
        let logits = affine(&self.layout.head, &d1);
        let p = softmax(&logits);
        Trace { sequences: [s0, s1, s2], dense: [d0, d1], probs: [p[0], p[1]] }
    }

    /// Class probabilities `[fault, fdia]` for a normalized time-major input.
    pub fn forward(&self, input: &[f64]) -> Result<[f64; CLASSES]> {
        self.check_input(input)?;
        Ok(self.trace(input).probs)
    }

    /// Adds the gradient of `-weight * ln p_label` to `grad`; returns the
    /// unweighted loss.
    fn accumulate(&self, input: &[f64], label: u8, weight: f64, grad: &mut [f64]) -> f64 {
        let tr = self.trace(input);
        let y = label as usize;
        let loss = -tr.probs[y].max(PROB_FLOOR).ln();
        let steps = self.dims.steps;
        let p = &self.params;

        let h3 = self.dims.hidden[2];
        let flat: &[f64] = match self.dims.readout {
            Readout::Sequence => &tr.sequences[2],
            Readout::Final => &tr.sequences[2][(steps - 1) * h3..],
        };
        let mut g_out: Vec<f64> = (0..CLASSES).map(|c| weight * (tr.probs[c] - (c == y) as u8 as f64)).collect();
        let stages = [
            (&self.layout.head, &tr.dense[1][..], Some(&tr.dense[1])),
            (&self.layout.dense[1], &tr.dense[0][..], Some(&tr.dense[0])),
            (&self.layout.dense[0], flat, None),
        ];
        for (a, below, below_act) in stages {
            outer_add(&mut grad[a.w.range()], a.w.rows, a.w.cols, &g_out, below);
            for (gb, g) in grad[a.b.range()].iter_mut().zip(&g_out) {
                *gb += g;
            }
            let mut g_in = vec![0.0; a.w.cols];
            matvec_t_add(&p[a.w.range()], a.w.rows, a.w.cols, &g_out, &mut g_in);
            if let Some(act) = below_act {
                for (g, v) in g_in.iter_mut().zip(act) {
                    *g *= 1.0 - v * v;
                }
            }
            g_out = g_in;
        }

        let mut g_seq = match self.dims.readout {
            Readout::Sequence => g_out,
            Readout::Final => {
                let mut g = vec![0.0; steps * h3];
                g[(steps - 1) * h3..].copy_from_slice(&g_out);
                g
            }
        };
        for l in (0..3).rev() {
            let r = &self.layout.recurrent[l];
            let h = r.w_xh.rows;
            let n_in = r.w_xh.cols;
            let seq = &tr.sequences[l];
            let xs: &[f64] = if l == 0 { input } else { &tr.sequences[l - 1] };
            let mut g_x = if l > 0 { vec![0.0; steps * n_in] } else { Vec::new() };
            let mut carry = vec![0.0; h];
            let mut da = vec![0.0; h];
            for t in (0..steps).rev() {
                let ht = &seq[t * h..(t + 1) * h];
                for i in 0..h {
                    da[i] = (g_seq[t * h + i] + carry[i]) * (1.0 - ht[i] * ht[i]);
                }
                outer_add(&mut grad[r.w_xh.range()], h, n_in, &da, &xs[t * n_in..]);
                for (gb, g) in grad[r.b_h.range()].iter_mut().zip(&da) {
                    *gb += g;
                }
                carry.iter_mut().for_each(|c| *c = 0.0);
                if t > 0 {
                    outer_add(&mut grad[r.w_hh.range()], h, h, &da, &seq[(t - 1) * h..]);
                    matvec_t_add(&p[r.w_hh.range()], h, h, &da, &mut carry);
                }
                if l > 0 {
                    matvec_t_add(&p[r.w_xh.range()], h, n_in, &da, &mut g_x[t * n_in..(t + 1) * n_in]);
                }
            }
            g_seq = g_x;
        }
        loss
    }
}

/// Mean loss and its exact gradient over a batch, by backpropagation
/// through time across the recurrent stack.
pub fn backward_bptt(model: &RnnModel, batch: &[Example]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::invalid("gradient of an empty batch"));
    }
    let mut grad = vec![0.0; model.param_count()];
    let weight = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for ex in batch {
        model.check_input(&ex.input)?;
        if ex.label > 1 {
            return Err(Error::invalid(format!("label {} is not 0 or 1", ex.label)));
        }
        loss += model.accumulate(&ex.input, ex.label, weight, &mut grad);
    }
    Ok((loss * weight, grad))
}

/// Mean loss over a batch without gradients.
pub fn batch_loss(model: &RnnModel, batch: &[Example]) -> Result<f64> {
    let mut probs = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    for ex in batch {
        probs.push(model.forward(&ex.input)?[1]);
        labels.push(ex.label);
    }
    bce_loss(&probs, &labels)
}

/// Normalized model input from a raw window.
pub fn window_input(model: &RnnModel, window: &Window) -> Result<Vec<f64>> {
    let dims = model.dims();
    if window.steps() != dims.steps || window.channels() != dims.inputs {
        return Err(Error::Dimension {
            expected: format!("{}x{} window", dims.steps, dims.inputs),
            found: format!("{}x{}", window.steps(), window.channels()),
        });
    }
    let scale = 1.0 / model.i_nom;
    Ok(window.data().iter().map(|&v| v as f64 * scale).collect())
}

/// Model probability that the window is an FDIA.
pub fn predict_proba(model: &RnnModel, window: &Window) -> Result<f64> {
    Ok(model.forward(&window_input(model, window)?)?[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zero_model(dims: ModelDims) -> RnnModel {
        let mut m = RnnModel::init(dims, LineKind::Ac, 1.0, 0).unwrap();
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        m
    }

    fn small_dims(steps: usize, inputs: usize, h: usize, readout: Readout) -> ModelDims {
        ModelDims { steps, inputs, hidden: [h, h + 1, h], dense: [4, 3], readout }
    }

    fn random_example(rng: &mut ChaCha8Rng, dims: &ModelDims) -> Example {
        Example {
            input: (0..dims.input_len()).map(|_| rng.random_range(-1.5..1.5)).collect(),
            label: rng.random_range(0..2u8),
        }
    }

    /// Largest relative error between the analytic gradient and central differences.
    fn gradient_error(model: &RnnModel, batch: &[Example]) -> f64 {
        let (_, grad) = backward_bptt(model, batch).unwrap();
        let mut worst: f64 = 0.0;
        let step = 1e-5;
        for i in 0..model.param_count() {
            let mut plus = model.clone();
            plus.params_mut()[i] += step;
            let mut minus = model.clone();
            minus.params_mut()[i] -= step;
            let numeric = (batch_loss(&plus, batch).unwrap() - batch_loss(&minus, batch).unwrap()) / (2.0 * step);
            let err = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-6);
            worst = worst.max(err);
        }
        worst
    }

    #[test]
    fn default_dims_hit_the_parameter_budget() {
        for (t, d) in [(40, 6), (16, 4), (10, 6), (4, 4), (80, 6)] {
            let dims = ModelDims::for_window(t, d);
            let n = dims.param_count() as f64;
            assert!((n / TARGET_PARAM_COUNT as f64 - 1.0).abs() <= 0.2, "T={t} d={d}: {n}");
        }
        assert_eq!(ModelDims::for_window(40, 6).dense, [20, 32]);
        let dims = ModelDims { dense: [64, 32], ..ModelDims::for_window(10, 6) };
        assert_eq!(dims.param_count(), 13_874);
    }

    #[test]
    fn layout_is_contiguous_in_declaration_order() {
        let layout = ModelDims::for_window(16, 4).layout();
        let named = layout.named();
        assert_eq!(named.len(), 15);
        let mut next = 0;
        for (_, slot) in &named {
            assert_eq!(slot.offset, next);
            next += slot.len();
        }
        assert_eq!(next, layout.total);
        assert_eq!(layout.recurrent[0].w_xh.cols, 4);
        assert_eq!(layout.dense[0].w.cols, 16 * 16);
    }

    #[test]
    fn zero_network_is_undecided() {
        let m = zero_model(small_dims(5, 2, 3, Readout::Sequence));
        let p = m.forward(&[0.7; 10]).unwrap();
        assert_eq!(p, [0.5, 0.5]);
    }

    #[test]
    fn forward_is_bit_reproducible() {
        let dims = ModelDims::for_window(40, 6);
        let a = RnnModel::init(dims, LineKind::Ac, 0.5, 9).unwrap();
        let b = RnnModel::init(dims, LineKind::Ac, 0.5, 9).unwrap();
        let x: Vec<f64> = (0..240).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
        let c = RnnModel::init(dims, LineKind::Ac, 0.5, 10).unwrap();
        assert_ne!(a.forward(&x).unwrap(), c.forward(&x).unwrap());
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let m = RnnModel::init(small_dims(5, 2, 3, Readout::Sequence), LineKind::Ac, 1.0, 1).unwrap();
        assert!(m.forward(&[0.0; 9]).is_err());
        let mut x = vec![0.0; 10];
        x[3] = f64::NAN;
        assert!(m.forward(&x).is_err());
    }

    #[test]
    fn bce_reference_values() {
        assert!((bce_loss(&[0.5], &[1]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_loss(&[0.5], &[0]).unwrap() - 0.693147).abs() < 1e-6);
        assert!(bce_loss(&[1.0, 0.0], &[1, 0]).unwrap() < 1e-11);
        let a = bce_loss(&[0.2], &[1]).unwrap();
        let b = bce_loss(&[0.9], &[0]).unwrap();
        assert!((bce_loss(&[0.2, 0.9], &[1, 0]).unwrap() - (a + b) / 2.0).abs() < 1e-15);
        assert!(bce_loss(&[], &[]).is_err());
    }

    #[test]
    fn head_bias_gradient_is_prediction_error() {
        let dims = small_dims(4, 2, 3, Readout::Sequence);
        let m = RnnModel::init(dims, LineKind::Ac, 1.0, 3).unwrap();
        let ex = Example { input: (0..8).map(|i| i as f64 * 0.1).collect(), label: 1 };
        let p = m.forward(&ex.input).unwrap();
        let (_, g) = backward_bptt(&m, std::slice::from_ref(&ex)).unwrap();
        let b = m.layout().head.b;
        assert!((g[b.offset + 1] - (p[1] - 1.0)).abs() < 1e-15);
        assert!((g[b.offset] - p[0]).abs() < 1e-15);
    }

    #[test]
    fn symmetric_saddle_has_zero_head_gradient() {
        let m = zero_model(small_dims(3, 2, 2, Readout::Sequence));
        let x = vec![0.3, -0.2, 0.1, 0.5, 0.0, 1.0];
        let batch = [Example { input: x.clone(), label: 0 }, Example { input: x, label: 1 }];
        let (loss, g) = backward_bptt(&m, &batch).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        let head = m.layout().head;
        assert!(g[head.w.range()].iter().chain(&g[head.b.range()]).all(|v| *v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for (i, readout) in [Readout::Sequence, Readout::Final].into_iter().enumerate() {
            let dims = small_dims(5, 2, 3, readout);
            let m = RnnModel::init(dims, LineKind::Dc, 1.0, 100 + i as u64).unwrap();
            let batch: Vec<Example> = (0..3).map(|_| random_example(&mut rng, &dims)).collect();
            let err = gradient_error(&m, &batch);
            assert!(err <= 1e-4, "{readout}: {err}");
        }
    }

    #[test]
    fn duplicated_batch_has_single_example_loss() {
        let dims = small_dims(4, 3, 2, Readout::Sequence);
        let m = RnnModel::init(dims, LineKind::Ac, 1.0, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ex = random_example(&mut rng, &dims);
        let one = batch_loss(&m, std::slice::from_ref(&ex)).unwrap();
        let many = batch_loss(&m, &vec![ex; 7]).unwrap();
        assert!((one - many).abs() < 1e-14);
    }

    #[test]
    fn window_dimension_mismatch_is_explicit() {
        let m = RnnModel::init(ModelDims::for_window(16, 4), LineKind::Dc, 0.5, 1).unwrap();
        let w = Window::new(40, 6, vec![0.0; 240]).unwrap();
        let err = predict_proba(&m, &w).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
        assert!(err.to_string().contains("16x4") && err.to_string().contains("40x6"));
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(logits in proptest::collection::vec(-700.0f64..700.0, 2..6)) {
            let p = softmax(&logits);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn model_outputs_are_probabilities(seed in 0u64..1000, scale in 0.0f64..50.0) {
            let dims = small_dims(6, 2, 4, Readout::Sequence);
            let m = RnnModel::init(dims, LineKind::Ac, 1.0, seed).unwrap();
            let x: Vec<f64> = (0..12).map(|i| scale * ((i as f64) * 1.3 + seed as f64).sin()).collect();
            let p = m.forward(&x).unwrap();
            prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|v| *v >= 0.0 && *v <= 1.0));
        }

        #[test]
        fn random_small_models_pass_gradient_check(seed in 0u64..10_000, t in 2usize..=6, h in 1usize..=4) {
            let dims = ModelDims { steps: t, inputs: 2, hidden: [h, h, h], dense: [3, 2], readout: Readout::Sequence };
            let m = RnnModel::init(dims, LineKind::Ac, 1.0, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
            let batch: Vec<Example> = (0..2).map(|_| random_example(&mut rng, &dims)).collect();
            prop_assert!(gradient_error(&m, &batch) <= 1e-4);
        }
    }
}
