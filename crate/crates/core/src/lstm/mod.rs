//! Single-layer LSTM with a dense head for direct multi-step forecasting.
//!
//! A window of `F` features is consumed as one time step from a zero hidden
//! and cell state, and the dense head maps the hidden state to all `T`
//! target steps at once:
//!
//! ```text
//! i = sigmoid(W_i [x; h0] + b_i)    f = sigmoid(W_f [x; h0] + b_f)
//! g = tanh(W_g [x; h0] + b_g)       o = sigmoid(W_o [x; h0] + b_o)
//! c = f * c0 + i * g                h = o * tanh(c)
//! y = W_d h + b_d
//! ```

mod checkpoint;
mod train;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, CheckpointMeta, CHECKPOINT_SCHEMA_VERSION,
};
pub use train::{dataset_mse, train, train_epoch, EpochRecord, Sgd, TrainConfig, TrainHistory};

use std::hash::{DefaultHasher, Hasher};

use ndarray::{s, ArrayView1, ArrayView2, ArrayViewMut2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{checksum, rng};

#[derive(Debug, Error)]
pub enum LstmError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("cache was not produced by forward on these weights and input")]
    CacheMismatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged: non-finite {0}")]
    NonFinite(&'static str),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint sidecar: {0}")]
    Sidecar(String),
}

pub type Result<T> = std::result::Result<T, LstmError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmDims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

impl LstmDims {
    pub fn new(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(LstmError::InvalidConfig(format!(
                "dims must be positive, got ({input_dim}, {hidden_dim}, {output_dim})"
            )));
        }
        Ok(LstmDims {
            input_dim,
            hidden_dim,
            output_dim,
        })
    }

    fn concat_dim(&self) -> usize {
        self.input_dim + self.hidden_dim
    }

    fn gate_weight_len(&self) -> usize {
        self.hidden_dim * self.concat_dim()
    }

    fn gate_bias_offset(&self) -> usize {
        4 * self.gate_weight_len()
    }

    fn dense_weight_offset(&self) -> usize {
        self.gate_bias_offset() + 4 * self.hidden_dim
    }

    fn dense_bias_offset(&self) -> usize {
        self.dense_weight_offset() + self.output_dim * self.hidden_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterCount {
    pub lstm: usize,
    pub dense: usize,
    pub total: usize,
}

pub fn count_parameters(dims: &LstmDims) -> ParameterCount {
    let lstm = 4 * dims.hidden_dim * (dims.input_dim + dims.hidden_dim + 1);
    let dense = dims.output_dim * (dims.hidden_dim + 1);
    ParameterCount {
        lstm,
        dense,
        total: lstm + dense,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Cell = 2,
    Output = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Cell, Gate::Output];
}

/// Every parameter of one network, stored flat in checkpoint order:
/// gate matrices i, f, g, o (each `(H, F + H)` row-major), gate biases
/// i, f, g, o, dense weight `(T, H)` row-major, dense bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    dims: LstmDims,
    params: Vec<f64>,
}

/// Gradients share the weight layout.
pub type Gradients = LstmWeights;

impl LstmWeights {
    pub fn zeros(dims: LstmDims) -> Self {
        LstmWeights {
            dims,
            params: vec![0.0; count_parameters(&dims).total],
        }
    }

    pub fn from_flat(dims: LstmDims, params: Vec<f64>) -> Result<Self> {
        let expected = count_parameters(&dims).total;
        if params.len() != expected {
            return Err(LstmError::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(LstmWeights { dims, params })
    }

    pub fn dims(&self) -> LstmDims {
        self.dims
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.params
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn checksum(&self) -> String {
        checksum::f64_digest(&self.params)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    pub fn gate_weight(&self, gate: Gate) -> ArrayView2<'_, f64> {
        let d = self.dims;
        let start = gate as usize * d.gate_weight_len();
        ArrayView2::from_shape(
            (d.hidden_dim, d.concat_dim()),
            &self.params[start..start + d.gate_weight_len()],
        )
        .expect("layout")
    }

    pub fn gate_weight_mut(&mut self, gate: Gate) -> ArrayViewMut2<'_, f64> {
        let d = self.dims;
        let start = gate as usize * d.gate_weight_len();
        ArrayViewMut2::from_shape(
            (d.hidden_dim, d.concat_dim()),
            &mut self.params[start..start + d.gate_weight_len()],
        )
        .expect("layout")
    }

    pub fn gate_bias(&self, gate: Gate) -> &[f64] {
        let start = self.dims.gate_bias_offset() + gate as usize * self.dims.hidden_dim;
        &self.params[start..start + self.dims.hidden_dim]
    }

    pub fn gate_bias_mut(&mut self, gate: Gate) -> &mut [f64] {
        let start = self.dims.gate_bias_offset() + gate as usize * self.dims.hidden_dim;
        &mut self.params[start..start + self.dims.hidden_dim]
    }

    pub fn dense_weight(&self) -> ArrayView2<'_, f64> {
        let d = self.dims;
        let start = d.dense_weight_offset();
        ArrayView2::from_shape(
            (d.output_dim, d.hidden_dim),
            &self.params[start..d.dense_bias_offset()],
        )
        .expect("layout")
    }

    pub fn dense_weight_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        let d = self.dims;
        let start = d.dense_weight_offset();
        ArrayViewMut2::from_shape(
            (d.output_dim, d.hidden_dim),
            &mut self.params[start..d.dense_bias_offset()],
        )
        .expect("layout")
    }

    pub fn dense_bias(&self) -> &[f64] {
        &self.params[self.dims.dense_bias_offset()..]
    }

    pub fn dense_bias_mut(&mut self) -> &mut [f64] {
        let start = self.dims.dense_bias_offset();
        &mut self.params[start..]
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for v in &self.params {
            h.write_u64(v.to_bits());
        }
        h.finish()
    }
}

/// Uniform `±1/sqrt(fan_in)` weights, forget bias 1, other biases 0.
pub fn init_weights(dims: &LstmDims, seed: u64) -> LstmWeights {
    let mut r = rng::seeded(seed);
    let mut w = LstmWeights::zeros(*dims);
    let gate_bound = 1.0 / (dims.concat_dim() as f64).sqrt();
    for gate in Gate::ALL {
        w.gate_weight_mut(gate)
            .iter_mut()
            .for_each(|v| *v = r.random_range(-gate_bound..=gate_bound));
    }
    w.gate_bias_mut(Gate::Forget).fill(1.0);
    let dense_bound = 1.0 / (dims.hidden_dim as f64).sqrt();
    w.dense_weight_mut()
        .iter_mut()
        .for_each(|v| *v = r.random_range(-dense_bound..=dense_bound));
    w
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intermediates retained by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    weights_fingerprint: u64,
    input_gate: Vec<f64>,
    forget_gate: Vec<f64>,
    cell_candidate: Vec<f64>,
    output_gate: Vec<f64>,
    cell: Vec<f64>,
    cell_tanh: Vec<f64>,
    hidden: Vec<f64>,
    pub prediction: Vec<f64>,
}

fn gate_preactivation(weights: &LstmWeights, gate: Gate, x: ArrayView1<f64>) -> Vec<f64> {
    let input_dim = weights.dims.input_dim;
    // h0 = 0, so the recurrent block of W contributes nothing
    let z = weights.gate_weight(gate).slice(s![.., ..input_dim]).dot(&x);
    z.iter()
        .zip(weights.gate_bias(gate))
        .map(|(a, b)| a + b)
        .collect()
}

fn forward_inner(weights: &LstmWeights, x: &[f64]) -> Result<ForwardCache> {
    let d = weights.dims;
    if x.len() != d.input_dim {
        return Err(LstmError::DimensionMismatch {
            expected: d.input_dim,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LstmError::NonFiniteInput);
    }
    let xv = ArrayView1::from(x);
    let input_gate: Vec<f64> = gate_preactivation(weights, Gate::Input, xv)
        .into_iter()
        .map(sigmoid)
        .collect();
    let forget_gate: Vec<f64> = gate_preactivation(weights, Gate::Forget, xv)
        .into_iter()
        .map(sigmoid)
        .collect();
    let cell_candidate: Vec<f64> = gate_preactivation(weights, Gate::Cell, xv)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let output_gate: Vec<f64> = gate_preactivation(weights, Gate::Output, xv)
        .into_iter()
        .map(sigmoid)
        .collect();
    // c0 = 0
    let cell: Vec<f64> = input_gate
        .iter()
        .zip(&forget_gate)
        .zip(&cell_candidate)
        .map(|((i, f), g)| f * 0.0 + i * g)
        .collect();
    let cell_tanh: Vec<f64> = cell.iter().map(|c| c.tanh()).collect();
    let hidden: Vec<f64> = output_gate
        .iter()
        .zip(&cell_tanh)
        .map(|(o, t)| o * t)
        .collect();
    let prediction: Vec<f64> = weights
        .dense_weight()
        .dot(&ArrayView1::from(hidden.as_slice()))
        .iter()
        .zip(weights.dense_bias())
        .map(|(a, b)| a + b)
        .collect();
    Ok(ForwardCache {
        input: x.to_vec(),
        weights_fingerprint: 0,
        input_gate,
        forget_gate,
        cell_candidate,
        output_gate,
        cell,
        cell_tanh,
        hidden,
        prediction,
    })
}

/// One LSTM step from zero state followed by the dense head.
pub fn forward(weights: &LstmWeights, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    let mut cache = forward_inner(weights, x)?;
    cache.weights_fingerprint = weights.fingerprint();
    Ok((cache.prediction.clone(), cache))
}

pub fn predict(weights: &LstmWeights, x: &[f64]) -> Result<Vec<f64>> {
    forward_inner(weights, x).map(|c| c.prediction)
}

/// Forward over many feature vectors, order preserved.
pub fn predict_batch<V: AsRef<[f64]>>(
    weights: &LstmWeights,
    features: &[V],
) -> Result<Vec<Vec<f64>>> {
    features
        .iter()
        .map(|x| predict(weights, x.as_ref()))
        .collect()
}

pub fn mse_loss(prediction: &[f64], target: &[f64]) -> Result<f64> {
    if prediction.len() != target.len() {
        return Err(LstmError::DimensionMismatch {
            expected: prediction.len(),
            got: target.len(),
        });
    }
    if prediction.is_empty() {
        return Ok(0.0);
    }
    Ok(prediction
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / prediction.len() as f64)
}

/// Analytic gradient of `mse_loss(forward(x), target)` for every parameter.
pub fn backward(
    weights: &LstmWeights,
    x: &[f64],
    target: &[f64],
    cache: &ForwardCache,
) -> Result<Gradients> {
    if cache.input.as_slice() != x || cache.weights_fingerprint != weights.fingerprint() {
        return Err(LstmError::CacheMismatch);
    }
    let mut grads = LstmWeights::zeros(weights.dims);
    accumulate_gradients(weights, target, cache, 1.0, &mut grads)?;
    Ok(grads)
}

/// Add `scale` times the per-sample gradient into `grads`.
pub(crate) fn accumulate_gradients(
    weights: &LstmWeights,
    target: &[f64],
    cache: &ForwardCache,
    scale: f64,
    grads: &mut Gradients,
) -> Result<()> {
    let d = weights.dims;
    if target.len() != d.output_dim {
        return Err(LstmError::DimensionMismatch {
            expected: d.output_dim,
            got: target.len(),
        });
    }
    let coef = 2.0 / d.output_dim as f64 * scale;
    let d_pred: Vec<f64> = cache
        .prediction
        .iter()
        .zip(target)
        .map(|(p, t)| coef * (p - t))
        .collect();

    {
        let mut dw = grads.dense_weight_mut();
        for (k, &dy) in d_pred.iter().enumerate() {
            for (j, &h) in cache.hidden.iter().enumerate() {
                dw[[k, j]] += dy * h;
            }
        }
    }
    for (b, dy) in grads.dense_bias_mut().iter_mut().zip(&d_pred) {
        *b += dy;
    }

    let d_hidden = weights
        .dense_weight()
        .t()
        .dot(&ArrayView1::from(d_pred.as_slice()));
    let h = d.hidden_dim;
    let mut dz = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
    for j in 0..h {
        let (i, g, o, t) = (
            cache.input_gate[j],
            cache.cell_candidate[j],
            cache.output_gate[j],
            cache.cell_tanh[j],
        );
        let dh = d_hidden[j];
        let d_out = dh * t;
        let d_cell = dh * o * (1.0 - t * t);
        dz[Gate::Input as usize][j] = d_cell * g * i * (1.0 - i);
        // dc/df = c0 = 0
        dz[Gate::Forget as usize][j] =
            d_cell * 0.0 * cache.forget_gate[j] * (1.0 - cache.forget_gate[j]);
        dz[Gate::Cell as usize][j] = d_cell * i * (1.0 - g * g);
        dz[Gate::Output as usize][j] = d_out * o * (1.0 - o);
    }
    debug_assert_eq!(cache.cell.len(), h);

    for gate in Gate::ALL {
        let dzg = &dz[gate as usize];
        {
            let mut dw = grads.gate_weight_mut(gate);
            for (j, &dzj) in dzg.iter().enumerate() {
                if dzj == 0.0 {
                    continue;
                }
                let mut row = dw.row_mut(j);
                // recurrent columns multiply h0 = 0 and stay zero
                for (w, &xv) in row.iter_mut().zip(&cache.input) {
                    *w += dzj * xv;
                }
            }
        }
        for (b, dzj) in grads.gate_bias_mut(gate).iter_mut().zip(dzg) {
            *b += dzj;
        }
    }
    Ok(())
}
