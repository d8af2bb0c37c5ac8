//! Single-stream recurrent next-clip selector.
//!
//! The network reads clip features `c_1, c_2, ...` and keeps a hidden state
//!
//! ```text
//! h_t = relu(W_I c_t + W_H h_{t-1}),   h_0 = 0
//! y_t = relu(W_O h_t)
//! ```
//!
//! The output `y_t` lives in feature space, and the probability that a
//! candidate clip `c` comes next is a softmax over the inner products
//! `y_t . c` taken across the candidates still available. During training the
//! candidates at step `t` are exactly the clips after position `t` of a
//! contiguous window sampled from a real video, and the weights are fitted by
//! gradient ascent on the window log-likelihood with exact BPTT gradients.

use log::{debug, warn};
use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learning rates below this end training.
pub const MIN_LEARNING_RATE: f64 = 1e-6;

/// Weights of one stream: `w_in` is `H x D`, `w_hh` is `H x H`, `w_out` is `D x H`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    pub w_in: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub w_out: Array2<f64>,
}

impl RnnParams {
    pub fn new(w_in: Array2<f64>, w_hh: Array2<f64>, w_out: Array2<f64>) -> Result<Self> {
        let (h, d) = w_in.dim();
        if d == 0 || h == 0 {
            return Err(Error::invalid("input and hidden dimensions must be positive"));
        }
        if w_hh.dim() != (h, h) {
            return Err(Error::invalid(format!("w_hh must be {h}x{h}, got {:?}", w_hh.dim())));
        }
        if w_out.dim() != (d, h) {
            return Err(Error::invalid(format!("w_out must be {d}x{h}, got {:?}", w_out.dim())));
        }
        let params = RnnParams { w_in, w_hh, w_out };
        params.check_finite()?;
        Ok(params)
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        RnnParams {
            w_in: Array2::zeros((hidden_dim, input_dim)),
            w_hh: Array2::zeros((hidden_dim, hidden_dim)),
            w_out: Array2::zeros((input_dim, hidden_dim)),
        }
    }

    /// Glorot-uniform initialisation: each matrix drawn from `U[-a, a]` with
    /// `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: rand::Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut draw = |rows: usize, cols: usize| {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..=a))
        };
        let w_in = draw(hidden_dim, input_dim);
        let w_hh = draw(hidden_dim, hidden_dim);
        let w_out = draw(input_dim, hidden_dim);
        RnnParams { w_in, w_hh, w_out }
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_in.nrows()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, m) in [("w_in", &self.w_in), ("w_hh", &self.w_hh), ("w_out", &self.w_out)] {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::numeric(format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }
}

/// Hidden states, outputs, and the pre-activations needed for backprop.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    pub hidden: Vec<Array1<f64>>,
    pub outputs: Vec<Array1<f64>>,
    pub pre_hidden: Vec<Array1<f64>>,
    pub pre_output: Vec<Array1<f64>>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.hidden.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty()
    }

    /// Last hidden state, or the zero state if nothing was consumed.
    pub fn last_hidden(&self, hidden_dim: usize) -> Array1<f64> {
        self.hidden.last().cloned().unwrap_or_else(|| Array1::zeros(hidden_dim))
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn check_vector(what: &str, v: ArrayView1<f64>, dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::invalid(format!(
            "{what} has dimension {}, expected {dim}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric(format!("{what} has non-finite entries")));
    }
    Ok(())
}

struct Step {
    pre_h: Array1<f64>,
    h: Array1<f64>,
    pre_y: Array1<f64>,
    y: Array1<f64>,
}

fn step_unchecked(params: &RnnParams, c: ArrayView1<f64>, h_prev: ArrayView1<f64>) -> Step {
    let pre_h = params.w_in.dot(&c) + params.w_hh.dot(&h_prev);
    let h = pre_h.mapv(relu);
    let pre_y = params.w_out.dot(&h);
    let y = pre_y.mapv(relu);
    Step { pre_h, h, pre_y, y }
}

/// One recurrence step. Returns `(h_t, y_t)`.
pub fn forward_step(
    params: &RnnParams,
    c_t: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    check_vector("input clip", c_t, params.input_dim())?;
    check_vector("previous hidden state", h_prev, params.hidden_dim())?;
    let s = step_unchecked(params, c_t, h_prev);
    if s.y.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("forward step overflowed"));
    }
    Ok((s.h, s.y))
}

/// Runs the recurrence over `inputs`, starting from `h_0 = 0`.
pub fn forward<S: AsRef<[f64]>>(params: &RnnParams, inputs: &[S]) -> Result<ForwardTrace> {
    let mut trace = ForwardTrace::default();
    let mut h = Array1::zeros(params.hidden_dim());
    for (t, c) in inputs.iter().enumerate() {
        let c = ArrayView1::from(c.as_ref());
        check_vector(&format!("input clip {t}"), c, params.input_dim())?;
        let s = step_unchecked(params, c, h.view());
        if s.y.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric(format!("forward pass overflowed at step {t}")));
        }
        h = s.h.clone();
        trace.pre_hidden.push(s.pre_h);
        trace.hidden.push(s.h);
        trace.pre_output.push(s.pre_y);
        trace.outputs.push(s.y);
    }
    Ok(trace)
}

fn logits<S: AsRef<[f64]>>(y: ArrayView1<f64>, candidates: &[S]) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::invalid("no remaining candidates to choose from"));
    }
    candidates
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let c = ArrayView1::from(c.as_ref());
            if c.len() != y.len() {
                return Err(Error::invalid(format!(
                    "candidate {k} has dimension {}, output has {}",
                    c.len(),
                    y.len()
                )));
            }
            let z = y.dot(&c);
            if !z.is_finite() {
                return Err(Error::numeric(format!(
                    "inner product with candidate {k} is not finite"
                )));
            }
            Ok(z)
        })
        .collect()
}

/// Softmax over `logits` with max-subtraction. Also returns `log(sum exp(z - max))`.
fn softmax(logits: &[f64]) -> (Vec<f64>, f64, f64) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (exps.into_iter().map(|e| e / sum).collect(), max, sum.ln())
}

/// Probability of each remaining candidate being the next clip, given output `y_t`.
pub fn next_clip_probs<S: AsRef<[f64]>>(y_t: ArrayView1<f64>, remaining: &[S]) -> Result<Vec<f64>> {
    let z = logits(y_t, remaining)?;
    Ok(softmax(&z).0)
}

fn check_sequence<S: AsRef<[f64]>>(params: &RnnParams, sequence: &[S]) -> Result<()> {
    if sequence.len() < 2 {
        return Err(Error::invalid(format!(
            "sequence needs at least 2 clips, got {}",
            sequence.len()
        )));
    }
    if let Some((k, c)) = sequence
        .iter()
        .enumerate()
        .find(|(_, c)| c.as_ref().len() != params.input_dim())
    {
        return Err(Error::invalid(format!(
            "clip {k} has dimension {}, model expects {}",
            c.as_ref().len(),
            params.input_dim()
        )));
    }
    Ok(())
}

/// `sum_{t=1}^{T-1} log P(c_{t+1} | c_{1..t})`, where the candidates at step `t`
/// are the clips at positions `t+1..T`.
pub fn sequence_log_likelihood<S: AsRef<[f64]>>(params: &RnnParams, sequence: &[S]) -> Result<f64> {
    check_sequence(params, sequence)?;
    let t_len = sequence.len();
    let trace = forward(params, &sequence[..t_len - 1])?;
    let mut ll = 0.0;
    for (t, y) in trace.outputs.iter().enumerate() {
        let z = logits(y.view(), &sequence[t + 1..])?;
        let (_, max, log_sum) = softmax(&z);
        ll += z[0] - max - log_sum;
    }
    Ok(ll)
}

/// Gradients of the sequence log-likelihood, shaped like [`RnnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_in: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub w_out: Array2<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &RnnParams) -> Self {
        Gradients {
            w_in: Array2::zeros(params.w_in.dim()),
            w_hh: Array2::zeros(params.w_hh.dim()),
            w_out: Array2::zeros(params.w_out.dim()),
        }
    }

    /// L2 norm over all three matrices.
    pub fn norm(&self) -> f64 {
        [&self.w_in, &self.w_hh, &self.w_out]
            .iter()
            .flat_map(|m| m.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales to norm `max_norm` when longer. Returns the norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.norm();
        if norm > max_norm {
            let k = max_norm / norm;
            for m in [&mut self.w_in, &mut self.w_hh, &mut self.w_out] {
                m.mapv_inplace(|x| x * k);
            }
        }
        norm
    }
}

fn add_outer(target: &mut Array2<f64>, col: &Array1<f64>, row: ArrayView1<f64>) {
    let col = col.view().insert_axis(Axis(1));
    let row = row.insert_axis(Axis(0));
    Zip::from(target)
        .and_broadcast(&col)
        .and_broadcast(&row)
        .for_each(|t, &a, &b| *t += a * b);
}

/// Exact gradient of [`sequence_log_likelihood`] by backpropagation through
/// time across all `T-1` prediction steps. Returns the gradients together with
/// the log-likelihood itself. The relu derivative at 0 is taken as 0.
pub fn bptt_gradients<S: AsRef<[f64]>>(params: &RnnParams, sequence: &[S]) -> Result<(Gradients, f64)> {
    check_sequence(params, sequence)?;
    let t_len = sequence.len();
    let steps = t_len - 1;
    let trace = forward(params, &sequence[..steps])?;

    let mut grads = Gradients::zeros_like(params);
    let mut ll = 0.0;
    let mut carry = Array1::<f64>::zeros(params.hidden_dim());
    let zero_h = Array1::<f64>::zeros(params.hidden_dim());

    for t in (0..steps).rev() {
        let candidates = &sequence[t + 1..];
        let z = logits(trace.outputs[t].view(), candidates)?;
        let (probs, max, log_sum) = softmax(&z);
        ll += z[0] - max - log_sum;

        // d/dy of log softmax at the target: c_target - sum_k p_k c_k
        let mut g_y = ArrayView1::from(candidates[0].as_ref()).to_owned();
        for (p, c) in probs.iter().zip(candidates) {
            g_y.scaled_add(-p, &ArrayView1::from(c.as_ref()));
        }
        let g_pre_y = Zip::from(&g_y)
            .and(&trace.pre_output[t])
            .map_collect(|&g, &a| if a > 0.0 { g } else { 0.0 });
        add_outer(&mut grads.w_out, &g_pre_y, trace.hidden[t].view());

        let g_h = params.w_out.t().dot(&g_pre_y) + &carry;
        let g_pre_h = Zip::from(&g_h)
            .and(&trace.pre_hidden[t])
            .map_collect(|&g, &a| if a > 0.0 { g } else { 0.0 });
        add_outer(&mut grads.w_in, &g_pre_h, ArrayView1::from(sequence[t].as_ref()));
        let h_prev = if t == 0 { &zero_h } else { &trace.hidden[t - 1] };
        add_outer(&mut grads.w_hh, &g_pre_h, h_prev.view());
        carry = params.w_hh.t().dot(&g_pre_h);
    }

    for (name, g) in [("w_in", &grads.w_in), ("w_hh", &grads.w_hh), ("w_out", &grads.w_out)] {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric(format!("gradient of {name} is not finite")));
        }
    }
    if !ll.is_finite() {
        return Err(Error::numeric("log-likelihood is not finite"));
    }
    Ok((grads, ll))
}

/// Training hyperparameters for one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seq_len: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub lr_decay_factor: f64,
    pub patience: usize,
    /// Largest global L2 norm of a training gradient; longer gradients are
    /// rescaled to this length. 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seq_len: 10,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 1e-7,
            epochs: 200,
            seed: 0,
            lr_decay_factor: 0.5,
            patience: 5,
            grad_clip: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seq_len < 2 {
            return Err(Error::invalid("seq_len must be at least 2"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(Error::invalid("lr_decay_factor must lie in (0, 1]"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return Err(Error::invalid("grad_clip must be a finite value >= 0"));
        }
        Ok(())
    }
}

/// Velocity buffers for momentum gradient ascent.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    pub w_in: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub w_out: Array2<f64>,
}

impl Velocity {
    pub fn zeros_like(params: &RnnParams) -> Self {
        Velocity {
            w_in: Array2::zeros(params.w_in.dim()),
            w_hh: Array2::zeros(params.w_hh.dim()),
            w_out: Array2::zeros(params.w_out.dim()),
        }
    }
}

/// Ascent step on the log-likelihood:
/// `v <- momentum * v + grad - weight_decay * w`, then `w <- w + lr * v`.
pub fn sgd_momentum_step(
    params: &mut RnnParams,
    grads: &Gradients,
    velocity: &mut Velocity,
    learning_rate: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    let pairs = [
        (&mut params.w_in, &grads.w_in, &mut velocity.w_in),
        (&mut params.w_hh, &grads.w_hh, &mut velocity.w_hh),
        (&mut params.w_out, &grads.w_out, &mut velocity.w_out),
    ];
    for (w, g, v) in pairs {
        if w.dim() != g.dim() || w.dim() != v.dim() {
            return Err(Error::invalid(format!(
                "shape mismatch: weights {:?}, gradient {:?}, velocity {:?}",
                w.dim(),
                g.dim(),
                v.dim()
            )));
        }
        Zip::from(w).and(g).and(v).for_each(|w, &g, v| {
            *v = momentum * *v + g - weight_decay * *w;
            *w += learning_rate * *v;
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_log_likelihood: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: RnnParams,
    pub history: Vec<EpochStats>,
}

/// Fits one stream on a corpus of videos, each an ordered list of clip features.
///
/// Every epoch visits the usable videos in a seeded shuffled order and takes
/// one momentum step on a random contiguous window of `seq_len` clips from
/// each. The learning rate is multiplied by `lr_decay_factor` after
/// `patience` epochs without a new best mean log-likelihood, and training
/// stops after `epochs` epochs or once the rate drops below
/// [`MIN_LEARNING_RATE`].
pub fn train<S: AsRef<[f64]>>(videos: &[Vec<S>], hidden_dim: usize, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if hidden_dim == 0 {
        return Err(Error::invalid("hidden dimension must be positive"));
    }
    let input_dim = videos
        .iter()
        .flat_map(|v| v.first())
        .map(|c| c.as_ref().len())
        .next()
        .ok_or_else(|| Error::invalid("training corpus has no clips"))?;
    for (vi, video) in videos.iter().enumerate() {
        if let Some((ci, c)) = video.iter().enumerate().find(|(_, c)| c.as_ref().len() != input_dim) {
            return Err(Error::invalid(format!(
                "video {vi} clip {ci} has dimension {}, expected {input_dim}",
                c.as_ref().len()
            )));
        }
    }

    let usable: Vec<usize> = videos
        .iter()
        .enumerate()
        .filter_map(|(i, v)| {
            if v.len() >= config.seq_len {
                Some(i)
            } else {
                warn!("skipping video {i}: {} clips, window needs {}", v.len(), config.seq_len);
                None
            }
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::invalid(format!(
            "no training video has at least {} clips",
            config.seq_len
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = RnnParams::glorot(input_dim, hidden_dim, &mut rng);
    let mut velocity = Velocity::zeros_like(&params);
    let mut lr = config.learning_rate;
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0usize;
    let mut history = Vec::with_capacity(config.epochs);
    let mut order = usable.clone();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &vi in &order {
            let video = &videos[vi];
            let start = rng.random_range(0..=video.len() - config.seq_len);
            let window = &video[start..start + config.seq_len];
            let (mut grads, ll) = bptt_gradients(&params, window).map_err(|e| match e {
                Error::Numeric(msg) => Error::numeric(format!("epoch {epoch}, video {vi}: {msg}")),
                other => other,
            })?;
            total += ll;
            if config.grad_clip > 0.0 {
                grads.clip_norm(config.grad_clip);
            }
            sgd_momentum_step(
                &mut params,
                &grads,
                &mut velocity,
                lr,
                config.momentum,
                config.weight_decay,
            )?;
        }
        let mean = total / order.len() as f64;
        if !mean.is_finite() {
            return Err(Error::numeric(format!(
                "mean log-likelihood became {mean} at epoch {epoch}"
            )));
        }
        params.check_finite()?;
        history.push(EpochStats {
            epoch,
            mean_log_likelihood: mean,
            learning_rate: lr,
        });
        debug!("epoch {epoch}: mean log-likelihood {mean:.6}, lr {lr:e}");

        if mean > best {
            best = mean;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                lr *= config.lr_decay_factor;
                stale = 0;
                debug!("no improvement for {} epochs, lr -> {lr:e}", config.patience);
            }
        }
        if lr < MIN_LEARNING_RATE {
            debug!("learning rate below {MIN_LEARNING_RATE:e}, stopping");
            break;
        }
    }

    Ok(TrainOutcome { params, history })
}
