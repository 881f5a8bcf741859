//! From-scratch feed-forward network family with exact parameter counting,
//! Adam optimization on cross-entropy, and the overfitting-based early
//! stopping rule: training ends when test loss fails to improve for a
//! patience window of consecutive epochs.
//!
//! Training is sequential and fully determined by (spec, data, config,
//! seed); the grid runner gives every cell its own derived PRNG stream, so
//! cells can train concurrently without affecting each other's results.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::ImageDataset;
use crate::matrix::Mat;
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("dataset feature dim {found} does not match model input dim {expected}")]
    InputDim { expected: usize, found: usize },
    #[error("dataset has {found} classes but model has {expected} outputs")]
    ClassCount { expected: usize, found: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}

/// Architecture of a fully connected network with rectifier hidden layers
/// and raw logits at the output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_classes: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, output_classes: usize) -> Self {
        assert!(input_dim > 0 && output_classes > 0);
        assert!(hidden_widths.iter().all(|&w| w > 0));
        MlpSpec {
            input_dim,
            hidden_widths,
            output_classes,
        }
    }

    /// (fan_in, fan_out) of every layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut prev = self.input_dim;
        for &w in &self.hidden_widths {
            dims.push((prev, w));
            prev = w;
        }
        dims.push((prev, self.output_classes));
        dims
    }

    /// Exact trainable parameter count: sum of in*out + out over layers.
    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(i, o)| i * o + o)
            .sum()
    }
}

/// A network instance: spec plus one flat parameter store laid out layer by
/// layer as weights (out x in, row-major) followed by biases.
#[derive(Clone, Debug)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
}

impl Mlp {
    /// Initialize with weights and biases drawn uniformly in
    /// +-sqrt(6 / (fan_in + fan_out)), deterministically from the seed.
    pub fn build(spec: MlpSpec, seed: u64) -> Self {
        let mut rng = Rng::stream(seed, &[0x696e6974]); // "init"
        let mut params = Vec::with_capacity(spec.param_count());
        for (fan_in, fan_out) in spec.layer_dims() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out + fan_out {
                params.push(rng.range_f64(-bound, bound));
            }
        }
        debug_assert_eq!(params.len(), spec.param_count());
        Mlp { spec, params }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Realized parameter count; equals `spec().param_count()` by
    /// construction.
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_offsets(&self) -> Vec<(usize, usize, usize)> {
        // (weight offset, bias offset, next offset) per layer
        let mut out = Vec::new();
        let mut offset = 0;
        for (fan_in, fan_out) in self.spec.layer_dims() {
            let w = offset;
            let b = offset + fan_in * fan_out;
            offset = b + fan_out;
            out.push((w, b, offset));
        }
        out
    }

    /// Logits for a single input.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.spec.input_dim);
        let dims = self.spec.layer_dims();
        let offsets = self.layer_offsets();
        let n_layers = dims.len();
        let mut act = x.to_vec();
        for (l, (&(fan_in, fan_out), &(w_off, b_off, _))) in
            dims.iter().zip(&offsets).enumerate()
        {
            let mut next = vec![0.0f64; fan_out];
            for (o, nv) in next.iter_mut().enumerate() {
                let row = &self.params[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                let mut z = self.params[b_off + o];
                for (w, a) in row.iter().zip(&act) {
                    z += w * a;
                }
                *nv = if l + 1 < n_layers { z.max(0.0) } else { z };
            }
            act = next;
        }
        act
    }

    /// Logits for every row of X.
    pub fn forward_batch(&self, x: &Mat) -> Result<Mat, TrainError> {
        if x.cols() != self.spec.input_dim {
            return Err(TrainError::InputDim {
                expected: self.spec.input_dim,
                found: x.cols(),
            });
        }
        let mut out = Mat::zeros(x.rows(), self.spec.output_classes);
        for i in 0..x.rows() {
            let logits = self.forward(x.row(i));
            out.row_mut(i).copy_from_slice(&logits);
        }
        Ok(out)
    }

    /// tanh-squashed outputs, elementwise in (-1, 1).
    pub fn predict_squashed(&self, x: &Mat) -> Result<Mat, TrainError> {
        let mut logits = self.forward_batch(x)?;
        for i in 0..logits.rows() {
            for v in logits.row_mut(i) {
                *v = v.tanh();
            }
        }
        Ok(logits)
    }

    /// Gradient of one raw logit with respect to the input, by
    /// backpropagation through the rectifier gates.
    pub fn logit_input_gradient(&self, x: &[f64], out: usize) -> Vec<f64> {
        assert_eq!(x.len(), self.spec.input_dim);
        assert!(out < self.spec.output_classes);
        let dims = self.spec.layer_dims();
        let offsets = self.layer_offsets();
        let n_layers = dims.len();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        for (l, (&(fan_in, fan_out), &(w_off, b_off, _))) in dims.iter().zip(&offsets).enumerate()
        {
            let prev = &acts[l];
            let mut next = vec![0.0f64; fan_out];
            for (o, nv) in next.iter_mut().enumerate() {
                let row = &self.params[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                let mut z = self.params[b_off + o];
                for (w, a) in row.iter().zip(prev) {
                    z += w * a;
                }
                *nv = if l + 1 < n_layers { z.max(0.0) } else { z };
            }
            acts.push(next);
        }
        let mut delta = vec![0.0f64; self.spec.output_classes];
        delta[out] = 1.0;
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = dims[l];
            let (w_off, _, _) = offsets[l];
            let prev = &acts[l];
            let mut d_prev = vec![0.0f64; fan_in];
            for (o, &d) in delta.iter().enumerate().take(fan_out) {
                if d != 0.0 {
                    let w_row = w_off + o * fan_in;
                    for (i, dp) in d_prev.iter_mut().enumerate() {
                        *dp += d * self.params[w_row + i];
                    }
                }
            }
            if l > 0 {
                for (dp, &a) in d_prev.iter_mut().zip(prev) {
                    if a <= 0.0 {
                        *dp = 0.0;
                    }
                }
            }
            delta = d_prev;
        }
        delta
    }

    /// Mean cross-entropy and its gradient over a batch of rows; also
    /// returns the number of correct argmax predictions.
    fn loss_and_grad(
        &self,
        x: &Mat,
        labels: &[u8],
        rows: &[usize],
        grad: &mut [f64],
    ) -> (f64, usize) {
        let dims = self.spec.layer_dims();
        let offsets = self.layer_offsets();
        let n_layers = dims.len();
        let batch = rows.len() as f64;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        let mut correct = 0usize;
        // per-sample activations (input + post-activation of each layer)
        for &r in rows {
            let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
            acts.push(x.row(r).to_vec());
            for (l, (&(fan_in, fan_out), &(w_off, b_off, _))) in
                dims.iter().zip(&offsets).enumerate()
            {
                let prev = &acts[l];
                let mut next = vec![0.0f64; fan_out];
                for (o, nv) in next.iter_mut().enumerate() {
                    let row = &self.params[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                    let mut z = self.params[b_off + o];
                    for (w, a) in row.iter().zip(prev) {
                        z += w * a;
                    }
                    *nv = if l + 1 < n_layers { z.max(0.0) } else { z };
                }
                acts.push(next);
            }
            let logits = &acts[n_layers];
            let target = labels[r] as usize;
            let (sample_loss, mut delta) = cross_entropy_and_dlogits(logits, target);
            loss += sample_loss;
            if argmax(logits) == target {
                correct += 1;
            }
            for d in delta.iter_mut() {
                *d /= batch;
            }
            // backward
            for l in (0..n_layers).rev() {
                let (fan_in, fan_out) = dims[l];
                let (w_off, b_off, _) = offsets[l];
                let prev = &acts[l];
                let mut d_prev = vec![0.0f64; fan_in];
                for o in 0..fan_out {
                    let d = delta[o];
                    if d != 0.0 {
                        let w_row = w_off + o * fan_in;
                        for (i, &p) in prev.iter().enumerate() {
                            grad[w_row + i] += d * p;
                            d_prev[i] += d * self.params[w_row + i];
                        }
                        grad[b_off + o] += d;
                    }
                }
                if l > 0 {
                    // gate through the rectifier: prev activation is
                    // post-ReLU, zero exactly where the unit was inactive
                    for (dp, &a) in d_prev.iter_mut().zip(prev) {
                        if a <= 0.0 {
                            *dp = 0.0;
                        }
                    }
                    delta = d_prev;
                }
            }
        }
        (loss / batch, correct)
    }

    /// Mean cross-entropy loss and accuracy over a whole dataset.
    pub fn evaluate(&self, ds: &ImageDataset) -> Result<(f64, f64), TrainError> {
        self.check_shapes(ds)?;
        let mut loss = 0.0;
        let mut correct = 0usize;
        for i in 0..ds.len() {
            let logits = self.forward(ds.row(i));
            let target = ds.labels()[i] as usize;
            let (l, _) = cross_entropy_and_dlogits(&logits, target);
            loss += l;
            if argmax(&logits) == target {
                correct += 1;
            }
        }
        let n = ds.len() as f64;
        Ok((loss / n, correct as f64 / n))
    }

    fn check_shapes(&self, ds: &ImageDataset) -> Result<(), TrainError> {
        if ds.feature_dim() != self.spec.input_dim {
            return Err(TrainError::InputDim {
                expected: self.spec.input_dim,
                found: ds.feature_dim(),
            });
        }
        if ds.num_classes() > self.spec.output_classes {
            return Err(TrainError::ClassCount {
                expected: self.spec.output_classes,
                found: ds.num_classes(),
            });
        }
        Ok(())
    }

    /// Versioned checkpoint: header, spec fields, then parameters as
    /// little-endian 64-bit floats in layer order. Reload reproduces
    /// predictions bit-exactly.
    pub fn save_checkpoint(&self, path: &Path) -> Result<(), TrainError> {
        let mut bytes = Vec::with_capacity(32 + 8 * self.params.len());
        bytes.extend_from_slice(CHECKPOINT_MAGIC);
        bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(self.spec.input_dim as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.spec.hidden_widths.len() as u32).to_le_bytes());
        for &w in &self.spec.hidden_widths {
            bytes.extend_from_slice(&(w as u32).to_le_bytes());
        }
        bytes.extend_from_slice(&(self.spec.output_classes as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for &p in &self.params {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
        let mut file = fs::File::create(path)?;
        file.write_all(&bytes)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Mlp, TrainError> {
        let bytes = fs::read(path)?;
        let mut cursor = 0usize;
        let take = |cursor: &mut usize, n: usize| -> Result<&[u8], TrainError> {
            if bytes.len() < *cursor + n {
                return Err(TrainError::BadCheckpoint("unexpected end of file".into()));
            }
            let s = &bytes[*cursor..*cursor + n];
            *cursor += n;
            Ok(s)
        };
        if take(&mut cursor, 4)? != CHECKPOINT_MAGIC {
            return Err(TrainError::BadCheckpoint("wrong magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(TrainError::BadCheckpoint(format!(
                "unsupported version {version}"
            )));
        }
        let read_u32 = |cursor: &mut usize| -> Result<u32, TrainError> {
            Ok(u32::from_le_bytes(take(cursor, 4)?.try_into().unwrap()))
        };
        let input_dim = read_u32(&mut cursor)? as usize;
        let n_hidden = read_u32(&mut cursor)? as usize;
        let mut hidden = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden.push(read_u32(&mut cursor)? as usize);
        }
        let output = read_u32(&mut cursor)? as usize;
        let count = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()) as usize;
        let spec = MlpSpec::new(input_dim, hidden, output);
        if count != spec.param_count() {
            return Err(TrainError::BadCheckpoint(format!(
                "parameter count {count} does not match spec count {}",
                spec.param_count()
            )));
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            params.push(f64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()));
        }
        if cursor != bytes.len() {
            return Err(TrainError::BadCheckpoint("trailing bytes".into()));
        }
        Ok(Mlp { spec, params })
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"RLMC";
const CHECKPOINT_VERSION: u32 = 1;

/// The trained network as a predictor over its squashed outputs: this is
/// the function the robustness theory measures, bounded in (-1, 1). No
/// exact Lipschitz bound is available for trained networks, so
/// `lipschitz_bound` stays absent and envelope searches are inner
/// approximations (projected ascent).
impl crate::robust_loss::Predictor for Mlp {
    fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    fn output_count(&self) -> usize {
        self.spec.output_classes
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).iter().map(|z| z.tanh()).collect()
    }

    fn input_gradient(&self, x: &[f64], out: usize) -> Option<Vec<f64>> {
        // d tanh(z)/dx = (1 - tanh(z)^2) dz/dx
        let z = self.forward(x)[out];
        let gate = 1.0 - z.tanh() * z.tanh();
        let mut grad = self.logit_input_gradient(x, out);
        for g in grad.iter_mut() {
            *g *= gate;
        }
        Some(grad)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable cross-entropy of raw logits against one target class,
/// plus the gradient with respect to the logits (softmax minus one-hot).
fn cross_entropy_and_dlogits(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    for &z in logits {
        denom += (z - max).exp();
    }
    let log_denom = denom.ln();
    let loss = -(logits[target] - max - log_denom);
    let mut grad = Vec::with_capacity(logits.len());
    for (i, &z) in logits.iter().enumerate() {
        let p = (z - max).exp() / denom;
        grad.push(p - if i == target { 1.0 } else { 0.0 });
    }
    (loss, grad)
}

/// Training hyperparameters. Defaults follow the experimental protocol:
/// Adam(0.9, 0.999, 1e-8) at learning rate 1e-3, batch size 128, patience
/// of 10 epochs; max_epochs caps runaway runs.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 128,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            patience: 10,
            max_epochs: 500,
            seed: 0,
        }
    }
}

/// Early-stopping rule: stop once the monitored loss has failed to improve
/// (strictly) for `patience` consecutive observations.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        assert!(patience > 0);
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
            epoch: 0,
        }
    }

    /// Feed one loss observation; returns true when training should stop.
    pub fn observe(&mut self, loss: f64) -> bool {
        self.epoch += 1;
        if loss < self.best {
            self.best = loss;
            self.best_epoch = self.epoch;
            self.since_best = 0;
            false
        } else {
            self.since_best += 1;
            self.since_best >= self.patience
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Why a training run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

/// A finished training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Mlp,
    pub history: Vec<EpochStats>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_test_loss: f64,
    pub stop_reason: StopReason,
}

impl TrainOutcome {
    pub fn final_train_loss(&self) -> f64 {
        self.history.last().map(|h| h.train_loss).unwrap_or(f64::NAN)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    fn new(p: usize) -> Self {
        Adam {
            m: vec![0.0; p],
            v: vec![0.0; p],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let b1t = 1.0 - cfg.beta1.powi(self.t as i32);
        let b2t = 1.0 - cfg.beta2.powi(self.t as i32);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / b1t;
            let v_hat = *v / b2t;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps_adam);
        }
    }
}

/// Mini-batch Adam on cross-entropy until the early-stopping rule fires or
/// `max_epochs` is reached. The per-epoch shuffle order comes from a PRNG
/// stream derived from the config seed, so the run is deterministic.
pub fn train_until_overfit(
    mut model: Mlp,
    train: &ImageDataset,
    test: &ImageDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    model.check_shapes(train)?;
    model.check_shapes(test)?;
    let mut rng = Rng::stream(cfg.seed, &[0x7368756666]); // "shuff"
    let mut adam = Adam::new(model.param_count());
    let mut grad = vec![0.0f64; model.param_count()];
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut stopped_epoch = cfg.max_epochs;

    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0usize;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let (loss, correct) =
                model.loss_and_grad(train.features(), train.labels(), batch, &mut grad);
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            epoch_correct += correct;
            adam.step(&mut model.params, &grad, cfg);
        }
        let n = train.len() as f64;
        let (test_loss, test_acc) = model.evaluate(test)?;
        if !test_loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        history.push(EpochStats {
            epoch,
            train_loss: epoch_loss / n,
            train_acc: epoch_correct as f64 / n,
            test_loss,
            test_acc,
        });
        if stopper.observe(test_loss) {
            stop_reason = StopReason::Patience;
            stopped_epoch = epoch;
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        history,
        stopped_epoch,
        best_epoch: stopper.best_epoch(),
        best_test_loss: stopper.best(),
        stop_reason,
    })
}

/// Gradient check report: analytic backprop against central finite
/// differences on a random subset of parameters.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GradCheckReport {
    pub params_checked: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
}

/// Compare analytic gradients with central finite differences (step 1e-5)
/// on at least `min_params` randomly chosen parameters. The error is scaled
/// by max(1, |analytic|, |numeric|), so it reads as a relative error for
/// O(1) gradients and an absolute one near zero.
pub fn gradient_check(
    model: &Mlp,
    x: &Mat,
    labels: &[u8],
    min_params: usize,
    seed: u64,
) -> GradCheckReport {
    let rows: Vec<usize> = (0..x.rows()).collect();
    let p = model.param_count();
    let mut grad = vec![0.0f64; p];
    model.loss_and_grad(x, labels, &rows, &mut grad);

    let mut rng = Rng::stream(seed, &[0x67726164]); // "grad"
    let n_check = min_params.min(p);
    let indices: Vec<usize> = if n_check == p {
        (0..p).collect()
    } else {
        rng.sample_indices(p, n_check)
    };

    let step = 1e-5;
    let mut probe = model.clone();
    let mut max_err = 0.0f64;
    let mut sum_err = 0.0f64;
    let mut scratch = vec![0.0f64; p];
    for &idx in &indices {
        let original = probe.params[idx];
        probe.params[idx] = original + step;
        let (loss_plus, _) = probe.loss_and_grad(x, labels, &rows, &mut scratch);
        probe.params[idx] = original - step;
        let (loss_minus, _) = probe.loss_and_grad(x, labels, &rows, &mut scratch);
        probe.params[idx] = original;
        let numeric = (loss_plus - loss_minus) / (2.0 * step);
        let analytic = grad[idx];
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
        max_err = max_err.max(err);
        sum_err += err;
    }
    GradCheckReport {
        params_checked: indices.len(),
        max_rel_error: max_err,
        mean_rel_error: sum_err / indices.len().max(1) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic_blobs;

    #[test]
    fn param_count_closed_form() {
        assert_eq!(MlpSpec::new(4, vec![3], 2).param_count(), 23);
        assert_eq!(MlpSpec::new(784, vec![64], 10).param_count(), 50_890);
        let spec = MlpSpec::new(7, vec![5, 3], 2);
        assert_eq!(spec.param_count(), 7 * 5 + 5 + 5 * 3 + 3 + 3 * 2 + 2);
        let model = Mlp::build(spec.clone(), 0);
        assert_eq!(model.param_count(), spec.param_count());
    }

    #[test]
    fn build_is_deterministic() {
        let spec = MlpSpec::new(6, vec![4], 3);
        let a = Mlp::build(spec.clone(), 42);
        let b = Mlp::build(spec.clone(), 42);
        assert_eq!(a.params(), b.params());
        let c = Mlp::build(spec, 43);
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn squashed_outputs_stay_inside_unit() {
        let spec = MlpSpec::new(3, vec![8], 4);
        let model = Mlp::build(spec, 1);
        // float tanh saturates to exactly +-1.0 for huge logits; the bound
        // is closed there and strict for moderate ones
        let x = Mat::from_rows(&[vec![0.1, -5.0, 3.0], vec![100.0, -100.0, 0.0]]);
        let out = model.predict_squashed(&x).unwrap();
        for i in 0..out.rows() {
            for &v in out.row(i) {
                assert!((-1.0..=1.0).contains(&v));
            }
        }
        let moderate = Mat::from_rows(&[vec![0.1, -0.5, 0.3]]);
        let out = model.predict_squashed(&moderate).unwrap();
        for &v in out.row(0) {
            assert!(v > -1.0 && v < 1.0);
        }
        // zero parameters give tanh(0) = 0
        let mut zeroed = Mlp::build(MlpSpec::new(3, vec![2], 2), 0);
        zeroed.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let out = zeroed.predict_squashed(&x).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        // single logit of 10 squashes to ~1 - 4e-9
        assert!((10.0f64.tanh() - 0.999_999_995_877_692_8).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_shift_invariant() {
        let logits = vec![0.3, -1.2, 2.0, 0.0];
        let (base, _) = cross_entropy_and_dlogits(&logits, 2);
        let shifted: Vec<f64> = logits.iter().map(|z| z + 17.5).collect();
        let (moved, _) = cross_entropy_and_dlogits(&shifted, 2);
        assert!((base - moved).abs() < 1e-10);
    }

    #[test]
    fn bias_gradient_closed_form_on_zero_input() {
        // zero input kills the weight path, so logits are the biases and
        // the bias gradient is softmax(b) - onehot
        let spec = MlpSpec::new(2, vec![], 3);
        let mut model = Mlp::build(spec, 3);
        let x = Mat::from_rows(&[vec![0.0, 0.0]]);
        let labels = vec![1u8];
        let mut grad = vec![0.0; model.param_count()];
        model.loss_and_grad(&x, &labels, &[0], &mut grad);
        let biases = &model.params()[6..9].to_vec();
        let (_, dlogits) = cross_entropy_and_dlogits(biases, 1);
        for (i, d) in dlogits.iter().enumerate() {
            assert!((grad[6 + i] - d).abs() < 1e-12);
        }
        // weight gradients vanish on the all-zero batch
        assert!(grad[..6].iter().all(|&g| g == 0.0));
        let _ = &mut model;
    }

    #[test]
    fn gradcheck_linear_model_squared_like() {
        // single linear layer, one sample: central differences are near
        // machine precision on the smooth cross-entropy
        let spec = MlpSpec::new(3, vec![], 2);
        let model = Mlp::build(spec, 5);
        let x = Mat::from_rows(&[vec![0.5, -1.0, 0.25]]);
        let report = gradient_check(&model, &x, &[1], 100, 0);
        assert!(report.max_rel_error <= 1e-6, "{report:?}");
    }

    #[test]
    fn gradcheck_random_mlp() {
        let spec = MlpSpec::new(5, vec![7, 6], 4);
        let model = Mlp::build(spec, 9);
        let mut rng = Rng::stream(2, &[1]);
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..5).map(|_| rng.range_f64(0.0, 1.0)).collect())
            .collect();
        let x = Mat::from_rows(&rows);
        let labels: Vec<u8> = (0..8).map(|i| (i % 4) as u8).collect();
        let report = gradient_check(&model, &x, &labels, 150, 3);
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }

    #[test]
    fn early_stopping_rule_semantics() {
        // strictly improving sequence never stops
        let mut stopper = EarlyStopping::new(10);
        for i in 0..200 {
            assert!(!stopper.observe(1.0 / (i + 1) as f64));
        }
        // flat sequence stops after exactly patience non-improvements
        let mut stopper = EarlyStopping::new(10);
        assert!(!stopper.observe(1.0));
        for _ in 0..9 {
            assert!(!stopper.observe(1.0));
        }
        assert!(stopper.observe(1.0));
        assert_eq!(stopper.best_epoch(), 1);
    }

    #[test]
    fn zero_learning_rate_stops_at_one_plus_patience() {
        let train = synthetic_blobs(4, 2, 60, 0.3, 1).unwrap();
        let test = synthetic_blobs(4, 2, 30, 0.3, 2).unwrap();
        let model = Mlp::build(MlpSpec::new(4, vec![5], 2), 0);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            patience: 10,
            max_epochs: 100,
            ..TrainConfig::default()
        };
        let outcome = train_until_overfit(model, &train, &test, &cfg).unwrap();
        assert_eq!(outcome.stopped_epoch, 11);
        assert_eq!(outcome.stop_reason, StopReason::Patience);
        assert_eq!(outcome.best_epoch, 1);
        assert!(outcome.stopped_epoch - outcome.best_epoch >= cfg.patience);
        assert_eq!(outcome.history.len(), outcome.stopped_epoch);
    }

    #[test]
    fn separable_blobs_reach_high_train_accuracy() {
        let train = synthetic_blobs(2, 2, 200, 0.05, 7).unwrap();
        let test = synthetic_blobs(2, 2, 80, 0.05, 8).unwrap();
        let model = Mlp::build(MlpSpec::new(2, vec![8], 2), 11);
        let cfg = TrainConfig {
            max_epochs: 200,
            ..TrainConfig::default()
        };
        let outcome = train_until_overfit(model, &train, &test, &cfg).unwrap();
        let last = outcome.history.last().unwrap();
        assert!(
            last.train_acc >= 0.99,
            "train accuracy {} after {} epochs",
            last.train_acc,
            outcome.stopped_epoch
        );
    }

    #[test]
    fn training_is_bit_deterministic() {
        let train = synthetic_blobs(3, 2, 64, 0.2, 4).unwrap();
        let test = synthetic_blobs(3, 2, 32, 0.2, 5).unwrap();
        let cfg = TrainConfig {
            max_epochs: 12,
            patience: 5,
            ..TrainConfig::default()
        };
        let run = |seed| {
            let model = Mlp::build(MlpSpec::new(3, vec![6], 2), seed);
            train_until_overfit(model, &train, &test, &cfg).unwrap()
        };
        let a = run(21);
        let b = run(21);
        let bits = |m: &Mlp| m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.model), bits(&b.model));
        assert_eq!(a.stopped_epoch, b.stopped_epoch);
    }

    #[test]
    fn checkpoint_round_trip_bit_exact() {
        let dir = std::env::temp_dir().join("roblab_ckpt_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.rlmc");
        let model = Mlp::build(MlpSpec::new(5, vec![4, 3], 2), 77);
        model.save_checkpoint(&path).unwrap();
        let loaded = Mlp::load_checkpoint(&path).unwrap();
        assert_eq!(model.spec(), loaded.spec());
        let bits = |m: &Mlp| m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&model), bits(&loaded));
        // predictions identical to the bit
        let x = Mat::from_rows(&[vec![0.2, 0.9, -0.3, 0.5, 0.0]]);
        let a = model.predict_squashed(&x).unwrap();
        let b = loaded.predict_squashed(&x).unwrap();
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        fs::remove_file(&path).ok();
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        use crate::robust_loss::Predictor;
        let model = Mlp::build(MlpSpec::new(6, vec![5], 1), 13);
        let mut rng = Rng::seed_from_u64(50);
        for _ in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| rng.range_f64(-1.0, 1.0)).collect();
            let grad = Predictor::input_gradient(&model, &x, 0).unwrap();
            let step = 1e-6;
            for j in 0..6 {
                let mut plus = x.clone();
                plus[j] += step;
                let mut minus = x.clone();
                minus[j] -= step;
                let numeric =
                    (Predictor::eval(&model, &plus)[0] - Predictor::eval(&model, &minus)[0])
                        / (2.0 * step);
                assert!(
                    (grad[j] - numeric).abs() <= 1e-6 * grad[j].abs().max(1.0),
                    "coordinate {j}: analytic {} vs numeric {numeric}",
                    grad[j]
                );
            }
        }
    }

    #[test]
    fn ascent_envelope_on_network_is_inner_approximation() {
        use crate::robust_loss::{envelope, Predictor, RobustnessConfig};
        let model = Mlp::build(MlpSpec::new(4, vec![6], 1), 3);
        let mut rng = Rng::seed_from_u64(60);
        for trial in 0..10 {
            let x: Vec<f64> = (0..4).map(|_| rng.next_f64()).collect();
            let rho = 0.2;
            let env = envelope(&model, &x, &RobustnessConfig::projected_ascent(rho, trial))
                .unwrap();
            let center = Predictor::eval(&model, &x)[0];
            assert!(env.lower <= center + 1e-12 && center <= env.upper + 1e-12);
            assert!(env.lower > -1.0 && env.upper < 1.0, "squashed range");
            assert!(!env.certified_exact);
            // restart streams nest, so more restarts at the same step count
            // can only widen the bracket
            let richer = RobustnessConfig {
                sup_method: crate::robust_loss::SupMethod::ProjectedAscent {
                    steps: 20,
                    restarts: 12,
                    step_size: rho / 10.0,
                    seed: trial,
                },
                ..RobustnessConfig::projected_ascent(rho, trial)
            };
            let wide = envelope(&model, &x, &richer).unwrap();
            assert!(wide.upper >= env.upper - 1e-12);
            assert!(wide.lower <= env.lower + 1e-12);
        }
    }

    #[test]
    fn corrupt_checkpoints_rejected() {
        let dir = std::env::temp_dir().join("roblab_ckpt_test2");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.rlmc");
        let model = Mlp::build(MlpSpec::new(3, vec![2], 2), 0);
        model.save_checkpoint(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        let bad_path = dir.join("bad.rlmc");
        fs::write(&bad_path, &bytes).unwrap();
        assert!(matches!(
            Mlp::load_checkpoint(&bad_path),
            Err(TrainError::BadCheckpoint(_))
        ));
        let mut truncated = fs::read(&path).unwrap();
        truncated.pop();
        fs::write(&bad_path, &truncated).unwrap();
        assert!(Mlp::load_checkpoint(&bad_path).is_err());
        fs::remove_file(&path).ok();
        fs::remove_file(&bad_path).ok();
    }
}
