//! Single-sample layer operations on small shape-checked arrays.
//!
//! This is the convenient, safety-checked face of the engine: one sample
//! at a time, explicit shapes, `Result` on every mismatch. It shares its
//! numerics with the batched kernels (a single sample is a batch with one
//! lane), so values here agree with batched runs to rounding error.

use crate::error::{CoreError, Result};
use crate::math;
use crate::nn::{kernels, pool};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Dense 1-D array.
#[derive(Debug, Clone, PartialEq)]
pub struct Array1 {
    pub data: Vec<f64>,
}

impl Array1 {
    pub fn new(data: Vec<f64>) -> Self {
        Self { data }
    }
    pub fn zeros(n: usize) -> Self {
        Self { data: vec![0.0; n] }
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Dense row-major 2-D array.
#[derive(Debug, Clone, PartialEq)]
pub struct Array2 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Array2 {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::Shape(format!(
                "array2 {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Same-padded 1-D convolution layer, kernel 3, stride 1.
#[derive(Debug, Clone)]
pub struct Conv1DLayer {
    pub filters: usize,
    pub in_channels: usize,
    /// `[filters][in_channels][3]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1DLayer {
    pub fn new(filters: usize, in_channels: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != filters * in_channels * 3 {
            return Err(CoreError::Shape(format!(
                "conv weights need {} values, got {}",
                filters * in_channels * 3,
                weights.len()
            )));
        }
        if bias.len() != filters {
            return Err(CoreError::Shape(format!(
                "conv bias needs {filters} values, got {}",
                bias.len()
            )));
        }
        Ok(Self { filters, in_channels, weights, bias })
    }
}

/// Cross-correlation with zero "same" padding; output `[filters × length]`.
pub fn conv1d_forward(x: &Array2, layer: &Conv1DLayer) -> Result<Array2> {
    if x.rows != layer.in_channels {
        return Err(CoreError::Shape(format!(
            "conv expects {} input channels, got {}",
            layer.in_channels, x.rows
        )));
    }
    if x.cols < 1 {
        return Err(CoreError::Shape("conv input length must be >= 1".into()));
    }
    let len = x.cols;
    // lanes = 1: [c][len] is already the lane-minor layout; add padding.
    let mut xpad = vec![0.0; layer.in_channels * (len + 2)];
    for c in 0..layer.in_channels {
        xpad[c * (len + 2) + 1..c * (len + 2) + 1 + len].copy_from_slice(x.row(c));
    }
    let mut out = Array2::zeros(layer.filters, len);
    kernels::conv3_fwd(
        &mut out.data,
        &xpad,
        &layer.weights,
        &layer.bias,
        layer.filters,
        layer.in_channels,
        len,
        1,
    );
    Ok(out)
}

/// Non-overlapping max pool, size 2, per row; returns the pooled array and
/// the flat argmax record (0/1 per output element, first index on ties).
pub fn maxpool1d(x: &Array2) -> Result<(Array2, Vec<u8>)> {
    if x.cols < 2 {
        return Err(CoreError::Shape(format!(
            "maxpool needs length >= 2, got {}",
            x.cols
        )));
    }
    let mut out = Array2::zeros(x.rows, x.cols / 2);
    let cache = pool::maxpool2(&x.data, &mut out.data, x.rows, x.cols, 1);
    Ok((out, cache.argmax))
}

/// LSTM layer parameters for the single-sample API.
#[derive(Debug, Clone)]
pub struct LSTMLayer {
    pub units: usize,
    pub input: usize,
    /// `[4*units][input]`, gate rows i, f, g (candidate), o.
    pub wx: Vec<f64>,
    /// `[4*units][units]`, same row order.
    pub wh: Vec<f64>,
    /// `[3*units]`: biases for i, f, o; the candidate has none.
    pub bias: Vec<f64>,
}

impl LSTMLayer {
    pub fn new(units: usize, input: usize, wx: Vec<f64>, wh: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if wx.len() != 4 * units * input || wh.len() != 4 * units * units || bias.len() != 3 * units {
            return Err(CoreError::Shape(format!(
                "lstm({units} units, {input} inputs) got wx {} wh {} bias {}",
                wx.len(),
                wh.len(),
                bias.len()
            )));
        }
        Ok(Self { units, input, wx, wh, bias })
    }
}

/// One LSTM time step: returns `(h_t, c_t)`.
pub fn lstm_step(
    x_t: &Array1,
    h_prev: &Array1,
    c_prev: &Array1,
    layer: &LSTMLayer,
) -> Result<(Array1, Array1)> {
    let u = layer.units;
    if x_t.len() != layer.input || h_prev.len() != u || c_prev.len() != u {
        return Err(CoreError::Shape(format!(
            "lstm_step shapes: x {} (want {}), h {} c {} (want {u})",
            x_t.len(),
            layer.input,
            h_prev.len(),
            c_prev.len()
        )));
    }
    let pre = |row: usize| -> f64 {
        let mut s = 0.0;
        for (k, &xv) in x_t.data.iter().enumerate() {
            s += layer.wx[row * layer.input + k] * xv;
        }
        for (k, &hv) in h_prev.data.iter().enumerate() {
            s += layer.wh[row * u + k] * hv;
        }
        s
    };
    let mut h = Array1::zeros(u);
    let mut c = Array1::zeros(u);
    for j in 0..u {
        let i = math::sigmoid(pre(j) + layer.bias[j]);
        let f = math::sigmoid(pre(u + j) + layer.bias[u + j]);
        let g = math::tanh(pre(2 * u + j));
        let o = math::sigmoid(pre(3 * u + j) + layer.bias[2 * u + j]);
        c.data[j] = f * c_prev.data[j] + i * g;
        h.data[j] = o * math::tanh(c.data[j]);
    }
    Ok((h, c))
}

/// Run a whole sequence from zero state; output `[units × T]`.
pub fn lstm_forward(x: &Array2, layer: &LSTMLayer) -> Result<Array2> {
    if x.rows != layer.input {
        return Err(CoreError::Shape(format!(
            "lstm expects {} input rows, got {}",
            layer.input, x.rows
        )));
    }
    if x.cols == 0 {
        return Err(CoreError::Shape("lstm sequence is empty".into()));
    }
    let t_steps = x.cols;
    let mut h = Array1::zeros(layer.units);
    let mut c = Array1::zeros(layer.units);
    let mut out = Array2::zeros(layer.units, t_steps);
    for t in 0..t_steps {
        let x_t = Array1::new((0..layer.input).map(|r| x.get(r, t)).collect());
        let (h2, c2) = lstm_step(&x_t, &h, &c, layer)?;
        h = h2;
        c = c2;
        for j in 0..layer.units {
            out.data[j * t_steps + t] = h.data[j];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub out_dim: usize,
    pub in_dim: usize,
    /// `[out][in]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(
        out_dim: usize,
        in_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if weights.len() != out_dim * in_dim || bias.len() != out_dim {
            return Err(CoreError::Shape(format!(
                "dense({out_dim}x{in_dim}) got {} weights, {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self { out_dim, in_dim, weights, bias, activation })
    }
}

/// Affine map plus activation.
pub fn dense_forward(x: &Array1, layer: &DenseLayer) -> Result<Array1> {
    if x.len() != layer.in_dim {
        return Err(CoreError::Shape(format!(
            "dense expects {} inputs, got {}",
            layer.in_dim,
            x.len()
        )));
    }
    let mut out = Array1::new(layer.bias.clone());
    kernels::matmul_acc(&mut out.data, &layer.weights, &x.data, layer.out_dim, layer.in_dim, 1);
    if layer.activation == Activation::Relu {
        for v in out.data.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    Ok(out)
}

/// `sqrt(mean((pred - target)^2))`.
pub fn rmse_loss(pred: &Array1, target: &Array1) -> Result<f64> {
    crate::nn::loss::rmse_loss(&pred.data, &target.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn conv_hand_oracle() {
        let x = Array2::new(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let layer = Conv1DLayer::new(1, 1, vec![1.0, 0.0, -1.0], vec![0.0]).unwrap();
        let y = conv1d_forward(&x, &layer).unwrap();
        assert_eq!(y.data, vec![-2.0, -2.0, -2.0, 3.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Array2::new(1, 5, vec![4.0, -1.0, 0.5, 2.0, 9.0]).unwrap();
        let layer = Conv1DLayer::new(1, 1, vec![0.0, 1.0, 0.0], vec![0.0]).unwrap();
        assert_eq!(conv1d_forward(&x, &layer).unwrap().data, x.data);
    }

    #[test]
    fn conv_zero_weights_give_bias() {
        let x = Array2::new(2, 3, vec![1.0; 6]).unwrap();
        let layer = Conv1DLayer::new(1, 2, vec![0.0; 6], vec![7.5]).unwrap();
        assert_eq!(conv1d_forward(&x, &layer).unwrap().data, vec![7.5; 3]);
    }

    #[test]
    fn conv_channel_mismatch_is_shape_error() {
        let x = Array2::new(2, 3, vec![0.0; 6]).unwrap();
        let layer = Conv1DLayer::new(1, 1, vec![0.0; 3], vec![0.0]).unwrap();
        assert!(matches!(conv1d_forward(&x, &layer), Err(CoreError::Shape(_))));
    }

    #[test]
    fn maxpool_examples() {
        let x = Array2::new(1, 4, vec![1.0, 3.0, 2.0, 5.0]).unwrap();
        let (y, _) = maxpool1d(&x).unwrap();
        assert_eq!(y.data, vec![3.0, 5.0]);

        let tie = Array2::new(1, 2, vec![7.0, 7.0]).unwrap();
        let (y, idx) = maxpool1d(&tie).unwrap();
        assert_eq!(y.data, vec![7.0]);
        assert_eq!(idx, vec![0]);

        let short = Array2::new(1, 1, vec![5.0]).unwrap();
        assert!(matches!(maxpool1d(&short), Err(CoreError::Shape(_))));
    }

    #[test]
    fn lstm_step_zero_params_fixed_point() {
        let layer = LSTMLayer::new(2, 3, vec![0.0; 24], vec![0.0; 16], vec![0.0; 6]).unwrap();
        let (h, c) = lstm_step(
            &Array1::new(vec![1.0, -2.0, 0.5]),
            &Array1::zeros(2),
            &Array1::zeros(2),
            &layer,
        )
        .unwrap();
        assert_eq!(h.data, vec![0.0, 0.0]);
        assert_eq!(c.data, vec![0.0, 0.0]);
    }

    #[test]
    fn lstm_step_saturated_gates_carry_cell_state() {
        // f -> 1, i -> 0 via large biases: c_t ~ c_prev
        let u = 2;
        let mut bias = vec![0.0; 3 * u];
        bias[..u].fill(-40.0);
        bias[u..2 * u].fill(40.0);
        let layer = LSTMLayer::new(u, 1, vec![0.0; 8], vec![0.0; 16], bias).unwrap();
        let c_prev = Array1::new(vec![0.3, -0.8]);
        let (_, c) = lstm_step(&Array1::new(vec![5.0]), &Array1::zeros(u), &c_prev, &layer).unwrap();
        for j in 0..u {
            assert!((c.data[j] - c_prev.data[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn lstm_forward_t1_reduces_to_step() {
        let mut rng = SplitMix64::new(3);
        let (u, inp) = (3, 2);
        let layer = LSTMLayer::new(
            u,
            inp,
            (0..4 * u * inp).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            (0..4 * u * u).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            (0..3 * u).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let x = Array2::new(inp, 1, vec![0.4, -0.9]).unwrap();
        let seq = lstm_forward(&x, &layer).unwrap();
        let (h, _) = lstm_step(
            &Array1::new(vec![0.4, -0.9]),
            &Array1::zeros(u),
            &Array1::zeros(u),
            &layer,
        )
        .unwrap();
        assert_eq!(seq.data, h.data);
    }

    #[test]
    fn lstm_forward_chains_steps() {
        let mut rng = SplitMix64::new(9);
        let (u, inp, t) = (2, 2, 3);
        let layer = LSTMLayer::new(
            u,
            inp,
            (0..4 * u * inp).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            (0..4 * u * u).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            (0..3 * u).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let xs: Vec<f64> = (0..inp * t).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let x = Array2::new(inp, t, xs.clone()).unwrap();
        let seq = lstm_forward(&x, &layer).unwrap();
        let mut h = Array1::zeros(u);
        let mut c = Array1::zeros(u);
        for step in 0..t {
            let x_t = Array1::new((0..inp).map(|r| xs[r * t + step]).collect());
            let (h2, c2) = lstm_step(&x_t, &h, &c, &layer).unwrap();
            h = h2;
            c = c2;
            for j in 0..u {
                assert_eq!(seq.get(j, step), h.data[j]);
            }
        }
    }

    #[test]
    fn lstm_forward_agrees_with_batched_engine() {
        use crate::nn::lstm as blstm;
        let mut rng = SplitMix64::new(17);
        let (u, inp, t) = (4, 3, 6);
        let wx: Vec<f64> = (0..4 * u * inp).map(|_| rng.uniform(-0.7, 0.7)).collect();
        let wh: Vec<f64> = (0..4 * u * u).map(|_| rng.uniform(-0.7, 0.7)).collect();
        let bias: Vec<f64> = (0..3 * u).map(|_| rng.uniform(-0.7, 0.7)).collect();
        let layer = LSTMLayer::new(u, inp, wx.clone(), wh.clone(), bias.clone()).unwrap();
        let xs: Vec<f64> = (0..inp * t).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let x = Array2::new(inp, t, xs.clone()).unwrap();
        let seq = lstm_forward(&x, &layer).unwrap();

        let d = blstm::LstmDims { input: inp, units: u, t_steps: t, lanes: 1 };
        // batched layout is [T][input][1]
        let xb: Vec<f64> = (0..t).flat_map(|s| (0..inp).map(move |r| (r, s))).map(|(r, s)| xs[r * t + s]).collect();
        let mut cache = blstm::LstmCache::new(&d);
        blstm::forward(&d, &wx, &wh, &bias, &xb, &mut cache);
        for s in 0..t {
            for j in 0..u {
                // accumulation order differs (bias-first vs bias-last),
                // so agreement is to rounding, not bit-exact
                assert!((seq.get(j, s) - cache.h[s * u + j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn dense_identity() {
        let layer = DenseLayer::new(
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
            Activation::Linear,
        )
        .unwrap();
        let x = Array1::new(vec![3.0, -4.0]);
        assert_eq!(dense_forward(&x, &layer).unwrap().data, vec![3.0, -4.0]);
    }

    #[test]
    fn dense_relu_clips_negatives() {
        let layer = DenseLayer::new(
            1,
            1,
            vec![1.0],
            vec![-10.0],
            Activation::Relu,
        )
        .unwrap();
        assert_eq!(dense_forward(&Array1::new(vec![3.0]), &layer).unwrap().data, vec![0.0]);
    }

    #[test]
    fn dense_hand_multiplied_oracle() {
        // [[2, -1], [0.5, 3]] * [4, 2] + [1, -1] = [2*4-1*2+1, 0.5*4+3*2-1]
        let layer = DenseLayer::new(
            2,
            2,
            vec![2.0, -1.0, 0.5, 3.0],
            vec![1.0, -1.0],
            Activation::Linear,
        )
        .unwrap();
        let y = dense_forward(&Array1::new(vec![4.0, 2.0]), &layer).unwrap();
        assert_eq!(y.data, vec![7.0, 7.0]);
    }

    #[test]
    fn dense_shape_mismatch() {
        let layer = DenseLayer::new(1, 2, vec![1.0, 1.0], vec![0.0], Activation::Linear).unwrap();
        assert!(matches!(
            dense_forward(&Array1::new(vec![1.0]), &layer),
            Err(CoreError::Shape(_))
        ));
    }
}
