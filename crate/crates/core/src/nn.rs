//! Single-layer LSTM with a linear read-out head.
//!
//! Each step concatenates the previous hidden state with the current input,
//! `z = [h_prev, x]`, and evaluates
//!
//! ```text
//! f = sigmoid(W_f z + b_f)        forget gate
//! i = sigmoid(W_i z + b_i)        input gate
//! g = tanh(W_C z + b_C)           candidate cell
//! c = f * c_prev + i * g          cell update
//! o = sigmoid(W_o z + b_o)        output gate
//! h = o * tanh(c)
//! ```
//!
//! A window is run from a zero state and the forecast is `V . h_last + b_y`.
//! Training minimises the batch mean of the squared forecast error, with
//! gradients obtained by backpropagation through time.
//!
//! All parameters live in one flat buffer (see [`LstmParams`]) so that the
//! optimizer, gradient clipping and finite-difference checks can treat them
//! as a single vector.

use rand::Rng;

use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error("loss is not finite")]
    NonFiniteLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    Forget,
    Input,
    Candidate,
    Output,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Candidate, Gate::Output];

    fn slot(self) -> usize {
        self as usize
    }

    /// Conventional short name, used in serialized models and diagnostics.
    pub fn label(self) -> &'static str {
        match self {
            Gate::Forget => "f",
            Gate::Input => "i",
            Gate::Candidate => "C",
            Gate::Output => "o",
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Weights and biases of the cell and head.
///
/// Layout of the flat buffer: for each gate in [`Gate::ALL`] order, its
/// `H x (H + D)` weight matrix (row-major, the first `H` columns act on
/// `h_prev` and the last `D` on `x`) followed by its `H` biases; then the `H`
/// head weights and the scalar head bias.
///
/// Gradients use the same type, so `grads.weights(Gate::Forget)` is the
/// gradient of `W_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    hidden: usize,
    input_dim: usize,
    values: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(hidden: usize, input_dim: usize) -> Self {
        assert!(hidden > 0 && input_dim > 0, "hidden and input_dim must be positive");
        let len = 4 * (hidden * (hidden + input_dim) + hidden) + hidden + 1;
        Self {
            hidden,
            input_dim,
            values: vec![0.0; len],
        }
    }

    /// Weights drawn from `Uniform(-1/sqrt(H), 1/sqrt(H))`, biases zero. With
    /// `unit_forget_bias` the forget-gate biases start at 1.
    pub fn init(hidden: usize, input_dim: usize, seed: u64, unit_forget_bias: bool) -> Self {
        let mut params = Self::zeros(hidden, input_dim);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut rng = seeded(seed);
        for gate in Gate::ALL {
            for w in params.weights_mut(gate) {
                *w = bound * (2.0 * rng.gen::<f64>() - 1.0);
            }
        }
        for v in params.head_weights_mut() {
            *v = bound * (2.0 * rng.gen::<f64>() - 1.0);
        }
        if unit_forget_bias {
            params.bias_mut(Gate::Forget).fill(1.0);
        }
        params
    }

    /// Rebuilds parameters from a flat buffer in the layout described above.
    pub fn from_flat(hidden: usize, input_dim: usize, values: Vec<f64>) -> Result<Self, NnError> {
        let expected = Self::zeros(hidden, input_dim).len();
        if values.len() != expected {
            return Err(NnError::ShapeMismatch(format!(
                "expected {expected} parameters for H={hidden}, D={input_dim}, got {}",
                values.len()
            )));
        }
        Ok(Self {
            hidden,
            input_dim,
            values,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Width of the concatenated `[h_prev, x]` vector.
    pub fn concat_len(&self) -> usize {
        self.hidden + self.input_dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.hidden, self.input_dim)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.hidden == other.hidden && self.input_dim == other.input_dim
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn gate_block(&self) -> usize {
        self.hidden * self.concat_len() + self.hidden
    }

    fn weights_range(&self, gate: Gate) -> std::ops::Range<usize> {
        let start = gate.slot() * self.gate_block();
        start..start + self.hidden * self.concat_len()
    }

    fn bias_range(&self, gate: Gate) -> std::ops::Range<usize> {
        let end = (gate.slot() + 1) * self.gate_block();
        end - self.hidden..end
    }

    fn head_start(&self) -> usize {
        4 * self.gate_block()
    }

    pub fn weights(&self, gate: Gate) -> &[f64] {
        &self.values[self.weights_range(gate)]
    }

    pub fn weights_mut(&mut self, gate: Gate) -> &mut [f64] {
        let r = self.weights_range(gate);
        &mut self.values[r]
    }

    pub fn weight(&self, gate: Gate, row: usize, col: usize) -> f64 {
        self.weights(gate)[row * self.concat_len() + col]
    }

    pub fn set_weight(&mut self, gate: Gate, row: usize, col: usize, value: f64) {
        let n = self.concat_len();
        self.weights_mut(gate)[row * n + col] = value;
    }

    pub fn bias(&self, gate: Gate) -> &[f64] {
        &self.values[self.bias_range(gate)]
    }

    pub fn bias_mut(&mut self, gate: Gate) -> &mut [f64] {
        let r = self.bias_range(gate);
        &mut self.values[r]
    }

    pub fn head_weights(&self) -> &[f64] {
        let s = self.head_start();
        &self.values[s..s + self.hidden]
    }

    pub fn head_weights_mut(&mut self) -> &mut [f64] {
        let s = self.head_start();
        &mut self.values[s..s + self.hidden]
    }

    pub fn head_bias(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn set_head_bias(&mut self, value: f64) {
        let last = self.values.len() - 1;
        self.values[last] = value;
    }

    /// Human-readable name of flat coordinate `idx`, e.g. `W_f[2,3]`.
    pub fn coordinate_name(&self, idx: usize) -> String {
        for gate in Gate::ALL {
            let w = self.weights_range(gate);
            if w.contains(&idx) {
                let k = idx - w.start;
                return format!("W_{}[{},{}]", gate.label(), k / self.concat_len(), k % self.concat_len());
            }
            let b = self.bias_range(gate);
            if b.contains(&idx) {
                return format!("b_{}[{}]", gate.label(), idx - b.start);
            }
        }
        if idx + 1 == self.values.len() {
            "b_y".into()
        } else {
            format!("V[{}]", idx - self.head_start())
        }
    }
}

/// Recurrent state carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Activations of one step, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    /// Candidate cell values.
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub o: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One training or evaluation example: a flattened `w x D` input window and
/// its scalar target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<'a> {
    pub inputs: &'a [f64],
    pub target: f64,
}

fn affine(params: &LstmParams, gate: Gate, z: &[f64], out: &mut [f64]) {
    let n = z.len();
    let w = params.weights(gate);
    for (r, (o, b)) in out.iter_mut().zip(params.bias(gate)).enumerate() {
        let row = &w[r * n..(r + 1) * n];
        *o = row.iter().zip(z).map(|(a, v)| a * v).sum::<f64>() + b;
    }
}

/// Advances the cell by one input vector.
pub fn cell_forward(
    params: &LstmParams,
    x: &[f64],
    state: &LstmState,
) -> Result<(LstmState, StepCache), NnError> {
    let hd = params.hidden();
    if x.len() != params.input_dim() {
        return Err(NnError::ShapeMismatch(format!(
            "input has length {}, expected {}",
            x.len(),
            params.input_dim()
        )));
    }
    if state.h.len() != hd || state.c.len() != hd {
        return Err(NnError::ShapeMismatch(format!(
            "state has lengths ({}, {}), expected {hd}",
            state.h.len(),
            state.c.len()
        )));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(NnError::NonFiniteInput("input"));
    }
    if !state.h.iter().chain(&state.c).all(|v| v.is_finite()) {
        return Err(NnError::NonFiniteInput("state"));
    }

    let mut z = Vec::with_capacity(params.concat_len());
    z.extend_from_slice(&state.h);
    z.extend_from_slice(x);

    let mut f = vec![0.0; hd];
    let mut i = vec![0.0; hd];
    let mut g = vec![0.0; hd];
    let mut o = vec![0.0; hd];
    affine(params, Gate::Forget, &z, &mut f);
    affine(params, Gate::Input, &z, &mut i);
    affine(params, Gate::Candidate, &z, &mut g);
    affine(params, Gate::Output, &z, &mut o);
    f.iter_mut().for_each(|v| *v = sigmoid(*v));
    i.iter_mut().for_each(|v| *v = sigmoid(*v));
    g.iter_mut().for_each(|v| *v = v.tanh());
    o.iter_mut().for_each(|v| *v = sigmoid(*v));

    let c: Vec<f64> = (0..hd).map(|k| f[k] * state.c[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();

    let next = LstmState {
        h: h.clone(),
        c: c.clone(),
    };
    let cache = StepCache {
        x: x.to_vec(),
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        f,
        i,
        g,
        c,
        o,
        tanh_c,
        h,
    };
    Ok((next, cache))
}

/// Runs a window (flattened, `w x D`) from a zero state and returns the head
/// output with the per-step caches.
pub fn forward(params: &LstmParams, inputs: &[f64]) -> Result<(f64, Vec<StepCache>), NnError> {
    let d = params.input_dim();
    if inputs.is_empty() || inputs.len() % d != 0 {
        return Err(NnError::ShapeMismatch(format!(
            "window of {} values is not a positive multiple of input_dim {d}",
            inputs.len()
        )));
    }
    let mut state = LstmState::zeros(params.hidden());
    let mut caches = Vec::with_capacity(inputs.len() / d);
    for x in inputs.chunks(d) {
        let (next, cache) = cell_forward(params, x, &state)?;
        state = next;
        caches.push(cache);
    }
    let prediction = head(params, &state.h);
    Ok((prediction, caches))
}

fn head(params: &LstmParams, h: &[f64]) -> f64 {
    params
        .head_weights()
        .iter()
        .zip(h)
        .map(|(v, x)| v * x)
        .sum::<f64>()
        + params.head_bias()
}

pub fn predict(params: &LstmParams, inputs: &[f64]) -> Result<f64, NnError> {
    forward(params, inputs).map(|(p, _)| p)
}

/// Adds `d_pred * d(pred)/d(theta)` into `grads` by reverse accumulation
/// through the unrolled window.
fn backward(params: &LstmParams, caches: &[StepCache], d_pred: f64, grads: &mut LstmParams) {
    let hd = params.hidden();
    let n = params.concat_len();
    let last = caches.last().expect("forward produced no steps");

    for (gv, h) in grads.head_weights_mut().iter_mut().zip(&last.h) {
        *gv += d_pred * h;
    }
    let b_y = grads.head_bias();
    grads.set_head_bias(b_y + d_pred);

    let mut dh: Vec<f64> = params.head_weights().iter().map(|v| d_pred * v).collect();
    let mut dc_next = vec![0.0; hd];
    let mut dz = [vec![0.0; hd], vec![0.0; hd], vec![0.0; hd], vec![0.0; hd]];
    let mut concat = vec![0.0; n];

    for step in caches.iter().rev() {
        for k in 0..hd {
            let d_o = dh[k] * step.tanh_c[k];
            let dc = dc_next[k] + dh[k] * step.o[k] * (1.0 - step.tanh_c[k] * step.tanh_c[k]);
            let d_f = dc * step.c_prev[k];
            let d_i = dc * step.g[k];
            let d_g = dc * step.i[k];
            dc_next[k] = dc * step.f[k];
            dz[Gate::Forget.slot()][k] = d_f * step.f[k] * (1.0 - step.f[k]);
            dz[Gate::Input.slot()][k] = d_i * step.i[k] * (1.0 - step.i[k]);
            dz[Gate::Candidate.slot()][k] = d_g * (1.0 - step.g[k] * step.g[k]);
            dz[Gate::Output.slot()][k] = d_o * step.o[k] * (1.0 - step.o[k]);
        }

        concat[..hd].copy_from_slice(&step.h_prev);
        concat[hd..].copy_from_slice(&step.x);
        let mut dh_prev = vec![0.0; hd];
        for gate in Gate::ALL {
            let dzg = &dz[gate.slot()];
            let w = params.weights(gate);
            let gw = grads.weights_mut(gate);
            for r in 0..hd {
                let d = dzg[r];
                if d == 0.0 {
                    continue;
                }
                let row = &mut gw[r * n..(r + 1) * n];
                for (acc, z) in row.iter_mut().zip(&concat) {
                    *acc += d * z;
                }
                let wrow = &w[r * n..r * n + hd];
                for (acc, wv) in dh_prev.iter_mut().zip(wrow) {
                    *acc += d * wv;
                }
            }
            for (acc, d) in grads.bias_mut(gate).iter_mut().zip(dzg) {
                *acc += d;
            }
        }
        dh = dh_prev;
    }
}

fn check_batch(params: &LstmParams, batch: &[Sample<'_>]) -> Result<(), NnError> {
    let first = batch.first().ok_or(NnError::EmptyBatch)?;
    let len = first.inputs.len();
    if let Some(bad) = batch.iter().find(|s| s.inputs.len() != len) {
        return Err(NnError::ShapeMismatch(format!(
            "samples mix window lengths {len} and {}",
            bad.inputs.len()
        )));
    }
    if len == 0 || len % params.input_dim() != 0 {
        return Err(NnError::ShapeMismatch(format!(
            "window of {len} values does not match input_dim {}",
            params.input_dim()
        )));
    }
    Ok(())
}

/// Sum of squared errors over `batch` and its gradient, accumulated into
/// `grads`. Summing this over disjoint shards gives the whole-batch result.
pub fn accumulate_squared_error(
    params: &LstmParams,
    batch: &[Sample<'_>],
    grads: &mut LstmParams,
) -> Result<f64, NnError> {
    if !params.same_shape(grads) {
        return Err(NnError::ShapeMismatch("gradient buffer shape".into()));
    }
    check_batch(params, batch)?;
    let mut sse = 0.0;
    for s in batch {
        let (pred, caches) = forward(params, s.inputs)?;
        let err = pred - s.target;
        sse += err * err;
        backward(params, &caches, 2.0 * err, grads);
    }
    Ok(sse)
}

/// Mean squared error over the batch and its exact gradient.
pub fn loss_and_gradients(
    params: &LstmParams,
    batch: &[Sample<'_>],
) -> Result<(f64, LstmParams), NnError> {
    let mut grads = params.zeros_like();
    let sse = accumulate_squared_error(params, batch, &mut grads)?;
    let n = batch.len() as f64;
    let loss = sse / n;
    if !loss.is_finite() {
        return Err(NnError::NonFiniteLoss);
    }
    grads.as_mut_slice().iter_mut().for_each(|g| *g /= n);
    Ok((loss, grads))
}

/// Mean squared error over the batch without gradients.
pub fn batch_loss(params: &LstmParams, batch: &[Sample<'_>]) -> Result<f64, NnError> {
    check_batch(params, batch)?;
    let mut sse = 0.0;
    for s in batch {
        let err = predict(params, s.inputs)? - s.target;
        sse += err * err;
    }
    Ok(sse / batch.len() as f64)
}

/// Central finite-difference estimate of `d loss / d theta[coordinate]`.
pub fn numeric_gradient(
    params: &LstmParams,
    batch: &[Sample<'_>],
    coordinate: usize,
    step: f64,
) -> Result<f64, NnError> {
    if coordinate >= params.len() {
        return Err(NnError::ShapeMismatch(format!(
            "coordinate {coordinate} out of {}",
            params.len()
        )));
    }
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut probe = params.clone();
    let base = params.as_slice()[coordinate];
    probe.as_mut_slice()[coordinate] = base + step;
    let up = batch_loss(&probe, batch)?;
    probe.as_mut_slice()[coordinate] = base - step;
    let down = batch_loss(&probe, batch)?;
    Ok((up - down) / (2.0 * step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(inputs: &[f64], target: f64) -> Sample<'_> {
        Sample { inputs, target }
    }

    #[test]
    fn zero_weights_analytic_step() {
        let params = LstmParams::zeros(1, 1);
        let state = LstmState {
            h: vec![0.0],
            c: vec![2.0],
        };
        let (next, cache) = cell_forward(&params, &[0.3], &state).unwrap();
        assert_eq!(cache.f, vec![0.5]);
        assert_eq!(cache.i, vec![0.5]);
        assert_eq!(cache.o, vec![0.5]);
        assert_eq!(cache.g, vec![0.0]);
        assert_eq!(next.c, vec![1.0]);
        assert!((next.h[0] - 0.5 * 1f64.tanh()).abs() < 1e-15);
        assert!((next.h[0] - 0.380797).abs() < 1e-6);
    }

    #[test]
    fn saturated_forget_gate_drops_memory() {
        let mut params = LstmParams::zeros(1, 1);
        params.bias_mut(Gate::Forget)[0] = -30.0;
        let state = LstmState {
            h: vec![0.0],
            c: vec![2.0],
        };
        let (next, cache) = cell_forward(&params, &[0.0], &state).unwrap();
        assert!(cache.f[0] < 1e-12);
        assert!((next.c[0] - cache.i[0] * cache.g[0]).abs() < 1e-9);
        assert!(next.c[0].abs() < 1e-9);
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let params = LstmParams::zeros(2, 1);
        let state = LstmState::zeros(2);
        assert!(matches!(
            cell_forward(&params, &[1.0, 2.0], &state),
            Err(NnError::ShapeMismatch(_))
        ));
        assert!(matches!(
            cell_forward(&params, &[1.0], &LstmState::zeros(3)),
            Err(NnError::ShapeMismatch(_))
        ));
        assert_eq!(
            cell_forward(&params, &[f64::NAN], &state),
            Err(NnError::NonFiniteInput("input"))
        );
        assert!(matches!(forward(&params, &[]), Err(NnError::ShapeMismatch(_))));
        assert_eq!(loss_and_gradients(&params, &[]), Err(NnError::EmptyBatch));
        let a = [0.1, 0.2];
        let b = [0.1, 0.2, 0.3];
        assert!(matches!(
            loss_and_gradients(&params, &[sample(&a, 0.0), sample(&b, 0.0)]),
            Err(NnError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn dead_head_predicts_bias() {
        let mut params = LstmParams::init(5, 1, 3, false);
        params.head_weights_mut().fill(0.0);
        params.set_head_bias(0.7);
        assert_eq!(predict(&params, &[0.1, -3.0, 9.0]).unwrap(), 0.7);
    }

    #[test]
    fn single_step_window_equals_cell_plus_head() {
        let params = LstmParams::init(3, 1, 11, false);
        let (pred, caches) = forward(&params, &[0.42]).unwrap();
        let (state, _) = cell_forward(&params, &[0.42], &LstmState::zeros(3)).unwrap();
        let expected: f64 = params
            .head_weights()
            .iter()
            .zip(&state.h)
            .map(|(v, h)| v * h)
            .sum::<f64>()
            + params.head_bias();
        assert_eq!(caches.len(), 1);
        assert_eq!(pred, expected);
    }

    #[test]
    fn perfect_prediction_has_zero_loss_and_gradient() {
        let params = LstmParams::init(4, 1, 8, false);
        let windows = [[0.1, 0.5, 0.3], [0.9, 0.2, 0.4]];
        let targets: Vec<f64> = windows.iter().map(|w| predict(&params, w).unwrap()).collect();
        let batch: Vec<Sample> = windows.iter().zip(&targets).map(|(w, &t)| sample(w, t)).collect();
        let (loss, grads) = loss_and_gradients(&params, &batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn dead_head_cuts_recurrent_gradients() {
        let mut params = LstmParams::init(4, 1, 21, false);
        params.head_weights_mut().fill(0.0);
        params.set_head_bias(0.3);
        let inputs = [0.2, 0.7, 0.1, 0.5];
        let batch = [sample(&inputs, 0.9)];
        let (_, grads) = loss_and_gradients(&params, &batch).unwrap();
        for gate in Gate::ALL {
            assert!(grads.weights(gate).iter().all(|&g| g == 0.0));
            assert!(grads.bias(gate).iter().all(|&g| g == 0.0));
        }
        assert!((grads.head_bias() - 2.0 * (0.3 - 0.9)).abs() < 1e-15);
        // head weights still receive h
        assert!(grads.head_weights().iter().any(|&g| g != 0.0));

        let w_idx = 0; // W_f[0,0]
        assert!(numeric_gradient(&params, &batch, w_idx, 1e-5).unwrap().abs() < 1e-9);
    }

    #[test]
    fn numeric_gradient_of_head_bias_is_exact_for_quadratic() {
        let mut params = LstmParams::init(3, 1, 2, false);
        params.set_head_bias(0.25);
        let inputs = [0.4, 0.6];
        let batch = [sample(&inputs, 0.8)];
        let pred = predict(&params, &inputs).unwrap();
        let idx = params.len() - 1;
        let numeric = numeric_gradient(&params, &batch, idx, 1e-4).unwrap();
        assert!((numeric - 2.0 * (pred - 0.8)).abs() < 1e-9);
    }

    #[test]
    fn coordinate_names() {
        let p = LstmParams::zeros(2, 1);
        assert_eq!(p.coordinate_name(0), "W_f[0,0]");
        assert_eq!(p.coordinate_name(5), "W_f[1,2]");
        assert_eq!(p.coordinate_name(6), "b_f[0]");
        assert_eq!(p.coordinate_name(8), "W_i[0,0]");
        assert_eq!(p.coordinate_name(p.len() - 1), "b_y");
        assert_eq!(p.coordinate_name(p.len() - 2), "V[1]");
        assert_eq!(p.len(), 4 * (2 * 3 + 2) + 3);
    }

    #[test]
    fn shard_sums_match_whole_batch() {
        let params = LstmParams::init(4, 1, 17, false);
        let data: Vec<[f64; 3]> = (0..9).map(|k| [k as f64 * 0.1, 0.5, 1.0 - k as f64 * 0.05]).collect();
        let batch: Vec<Sample> = data.iter().enumerate().map(|(k, w)| sample(w, k as f64 / 9.0)).collect();
        let mut whole = params.zeros_like();
        let sse = accumulate_squared_error(&params, &batch, &mut whole).unwrap();
        let mut sharded = params.zeros_like();
        let mut sse_sharded = 0.0;
        for shard in batch.chunks(4) {
            let mut g = params.zeros_like();
            sse_sharded += accumulate_squared_error(&params, shard, &mut g).unwrap();
            for (a, b) in sharded.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a += b;
            }
        }
        assert!((sse - sse_sharded).abs() < 1e-12);
        for (a, b) in whole.as_slice().iter().zip(sharded.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_gates_preserve_cell_state() {
        let mut params = LstmParams::init(3, 1, 5, false);
        params.bias_mut(Gate::Forget).fill(40.0);
        params.bias_mut(Gate::Input).fill(-40.0);
        // keep pre-activations dominated by the biases
        for gate in [Gate::Forget, Gate::Input] {
            params.weights_mut(gate).iter_mut().for_each(|w| *w *= 1e-3);
        }
        let mut state = LstmState {
            h: vec![0.0; 3],
            c: vec![0.7, -1.2, 2.5],
        };
        let c0 = state.c.clone();
        for x in [0.3, -0.8, 1.0, 0.0, 0.5] {
            state = cell_forward(&params, &[x], &state).unwrap().0;
        }
        for (a, b) in state.c.iter().zip(&c0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn gates_stay_bounded(
            seed in any::<u64>(),
            xs in proptest::collection::vec(-5.0f64..5.0, 1..8),
        ) {
            let params = LstmParams::init(4, 1, seed, seed % 2 == 0);
            let (_, caches) = forward(&params, &xs).unwrap();
            for c in &caches {
                for k in 0..4 {
                    prop_assert!(c.f[k] > 0.0 && c.f[k] < 1.0);
                    prop_assert!(c.i[k] > 0.0 && c.i[k] < 1.0);
                    prop_assert!(c.o[k] > 0.0 && c.o[k] < 1.0);
                    prop_assert!(c.g[k] > -1.0 && c.g[k] < 1.0);
                    prop_assert!(c.h[k] > -1.0 && c.h[k] < 1.0);
                }
            }
        }

        #[test]
        fn forward_is_deterministic(seed in any::<u64>(), xs in proptest::collection::vec(-1.0f64..1.0, 1..6)) {
            let params = LstmParams::init(3, 1, seed, false);
            let a = predict(&params, &xs).unwrap();
            let b = predict(&params.clone(), &xs).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
