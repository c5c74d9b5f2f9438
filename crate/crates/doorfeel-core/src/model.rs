//! The two-stream CNN-LSTM: configuration, parameter layout, batched
//! forward/backward, training, inference and a finite-difference gradient
//! checker.
//!
//! Both streams read the same profile. The CNN stream is
//! conv(256,k3,s1) → pool2 → conv(128) → conv(128) → conv(64) → pool2 →
//! flatten (channel-major, then position). The LSTM stream is
//! lstm(128) → lstm(64) → lstm(64) → pool2 over time → flatten
//! (time-major, then unit). The concatenation feeds
//! dense 64 (ReLU) → dense 32 (ReLU) → dense 10 (linear).
//!
//! All batched buffers are lane-minor (`[feature][lane]`); training is
//! bit-reproducible for a given `(seed, data, config)` and per-sample
//! results do not depend on batch composition.

use crate::error::{CoreError, Result};
use crate::math;
use crate::nn::adam::AdamState;
use crate::nn::{kernels, loss, lstm, pool};
use crate::rng::SplitMix64;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub const REF_CONV_FILTERS: [usize; 4] = [256, 128, 128, 64];
pub const REF_LSTM_UNITS: [usize; 3] = [128, 64, 64];
pub const REF_DENSE_UNITS: [usize; 2] = [64, 32];
pub const REF_OUTPUTS: usize = 10;
pub const REF_INPUT_LEN: usize = crate::profile::PROFILE_LEN;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ModelConfig {
    pub input_len: usize,
    pub conv_filters: [usize; 4],
    pub lstm_units: [usize; 3],
    pub dense_units: [usize; 2],
    pub outputs: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` = full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Targets arrive on 0-100 and are scaled to [0,1] internally;
    /// predictions are mapped back. Disable for raw-scale experiments.
    #[cfg_attr(feature = "serde", serde(default = "default_true"))]
    pub percent_targets: bool,
    /// The reference layer sizes are enforced unless this is set.
    #[cfg_attr(feature = "serde", serde(default))]
    pub allow_custom_sizes: bool,
}

#[cfg(feature = "serde")]
fn default_true() -> bool {
    true
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_len: REF_INPUT_LEN,
            conv_filters: REF_CONV_FILTERS,
            lstm_units: REF_LSTM_UNITS,
            dense_units: REF_DENSE_UNITS,
            outputs: REF_OUTPUTS,
            learning_rate: 0.001,
            epochs: 100,
            batch_size: None,
            seed: 42,
            percent_targets: true,
            allow_custom_sizes: false,
        }
    }
}

impl ModelConfig {
    /// Small configuration for gradient checks and fast tests.
    pub fn shrunken_test_config() -> Self {
        Self {
            input_len: 40,
            conv_filters: [8, 4, 4, 4],
            lstm_units: [8, 4, 4],
            dense_units: [8, 4],
            outputs: 10,
            allow_custom_sizes: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len < 8 {
            return Err(CoreError::Validation(format!(
                "input_len {} too short for two pooling stages",
                self.input_len
            )));
        }
        if self.outputs == 0 {
            return Err(CoreError::Validation("outputs must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(CoreError::Validation(format!(
                "learning rate {} invalid",
                self.learning_rate
            )));
        }
        if self.conv_filters.iter().any(|&f| f == 0)
            || self.lstm_units.iter().any(|&u| u == 0)
            || self.dense_units.iter().any(|&u| u == 0)
        {
            return Err(CoreError::Validation("zero-sized layer".into()));
        }
        if let Some(bs) = self.batch_size {
            if bs == 0 {
                return Err(CoreError::Validation("batch_size must be >= 1".into()));
            }
        }
        if !self.allow_custom_sizes {
            let reference = self.input_len == REF_INPUT_LEN
                && self.conv_filters == REF_CONV_FILTERS
                && self.lstm_units == REF_LSTM_UNITS
                && self.dense_units == REF_DENSE_UNITS
                && self.outputs == REF_OUTPUTS;
            if !reference {
                return Err(CoreError::Validation(
                    "layer sizes differ from the reference architecture; set allow_custom_sizes to override".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Sizes derived from a config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// conv-1 output length (= input length).
    pub len0: usize,
    /// length after the first pool; conv-2..4 operate here.
    pub len1: usize,
    /// length after the second pool.
    pub len2: usize,
    /// time steps after the LSTM time pool.
    pub t2: usize,
    pub cnn_flat: usize,
    pub lstm_flat: usize,
    pub concat: usize,
}

impl ModelDims {
    pub fn from_config(c: &ModelConfig) -> Self {
        let len0 = c.input_len;
        let len1 = len0 / 2;
        let len2 = len1 / 2;
        let t2 = c.input_len / 2;
        let cnn_flat = c.conv_filters[3] * len2;
        let lstm_flat = c.lstm_units[2] * t2;
        Self {
            len0,
            len1,
            len2,
            t2,
            cnn_flat,
            lstm_flat,
            concat: cnn_flat + lstm_flat,
        }
    }
}

/// One named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ParamEntry {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ParamLayout {
    pub entries: Vec<ParamEntry>,
    pub total: usize,
}

impl ParamLayout {
    pub fn from_config(c: &ModelConfig) -> Self {
        let d = ModelDims::from_config(c);
        let mut entries = Vec::new();
        let mut offset = 0usize;
        let mut push = |name: String, shape: Vec<usize>| {
            let len: usize = shape.iter().product();
            entries.push(ParamEntry { name, offset, shape });
            offset += len;
        };
        let mut chans = 1usize;
        for (i, &f) in c.conv_filters.iter().enumerate() {
            push(format!("conv{}.w", i + 1), vec![f, chans, 3]);
            push(format!("conv{}.b", i + 1), vec![f]);
            chans = f;
        }
        let mut input = 1usize;
        for (i, &u) in c.lstm_units.iter().enumerate() {
            push(format!("lstm{}.wx", i + 1), vec![4 * u, input]);
            push(format!("lstm{}.wh", i + 1), vec![4 * u, u]);
            push(format!("lstm{}.b", i + 1), vec![3 * u]);
            input = u;
        }
        let dense_io = [
            (d.concat, c.dense_units[0]),
            (c.dense_units[0], c.dense_units[1]),
            (c.dense_units[1], c.outputs),
        ];
        for (i, &(din, dout)) in dense_io.iter().enumerate() {
            push(format!("dense{}.w", i + 1), vec![dout, din]);
            push(format!("dense{}.b", i + 1), vec![dout]);
        }
        let total = offset;
        Self { entries, total }
    }

    pub fn find(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Parameter count as a pure function of the configuration.
pub fn param_count(c: &ModelConfig) -> usize {
    ParamLayout::from_config(c).total
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ModelParams {
    pub config: ModelConfig,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn layout(&self) -> ParamLayout {
        ParamLayout::from_config(&self.config)
    }

    pub fn tensor<'a>(&'a self, layout: &ParamLayout, name: &str) -> &'a [f64] {
        let e = layout.find(name).expect("unknown tensor name");
        &self.values[e.offset..e.offset + e.len()]
    }
}

/// Deterministic initialization: He-uniform for conv/dense weights,
/// Xavier-uniform for LSTM matrices, zero biases except the forget-gate
/// bias at 1.0. Each tensor draws from its own derived RNG stream so the
/// values do not shift if an unrelated tensor changes size.
pub fn build(config: &ModelConfig) -> Result<ModelParams> {
    config.validate()?;
    let layout = ParamLayout::from_config(config);
    let mut values = vec![0.0; layout.total];
    for (stream, e) in layout.entries.iter().enumerate() {
        let mut rng = SplitMix64::derive(config.seed, stream as u64);
        let slot = &mut values[e.offset..e.offset + e.len()];
        if e.name.ends_with(".b") {
            if e.name.starts_with("lstm") {
                // bias layout i|f|o: forget section to 1.0
                let u = e.shape[0] / 3;
                slot[u..2 * u].fill(1.0);
            }
            continue;
        }
        let limit = if e.name.starts_with("conv") {
            // fan_in = in_channels * kernel
            math::sqrt(6.0 / (e.shape[1] * e.shape[2]) as f64)
        } else if e.name.starts_with("dense") {
            math::sqrt(6.0 / e.shape[1] as f64)
        } else {
            // lstm wx/wh: per-gate fan_in = cols, fan_out = units (= rows/4)
            math::sqrt(6.0 / (e.shape[1] + e.shape[0] / 4) as f64)
        };
        for v in slot.iter_mut() {
            *v = rng.uniform(-limit, limit);
        }
    }
    Ok(ModelParams {
        config: config.clone(),
        values,
    })
}

fn relu_slice(xs: &mut [f64]) {
    for x in xs.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zero the upstream gradient wherever the (post-ReLU) activation is 0.
fn relu_backward_slice(d: &mut [f64], out: &[f64]) {
    for (dv, &ov) in d.iter_mut().zip(out) {
        if ov <= 0.0 {
            *dv = 0.0;
        }
    }
}

fn lane_sums_into(gb: &mut [f64], d: &[f64], rows: usize, lanes: usize) {
    for r in 0..rows {
        let mut s = 0.0;
        for l in 0..lanes {
            s += d[r * lanes + l];
        }
        gb[r] += s;
    }
}

/// Copy `[chans][len][lanes]` into the middle of a `[chans][(len+2)][lanes]`
/// buffer whose borders are already zero.
fn copy_into_padded(dst: &mut [f64], src: &[f64], chans: usize, len: usize, lanes: usize) {
    let stride = (len + 2) * lanes;
    for c in 0..chans {
        dst[c * stride + lanes..c * stride + lanes + len * lanes]
            .copy_from_slice(&src[c * len * lanes..(c + 1) * len * lanes]);
    }
}

struct LstmLayerBufs {
    dims: lstm::LstmDims,
    cache: lstm::LstmCache,
    scratch: lstm::LstmScratch,
    dh: Vec<f64>,
    wxt: Vec<f64>,
    wht: Vec<f64>,
}

impl LstmLayerBufs {
    fn new(input: usize, units: usize, t_steps: usize, lanes: usize) -> Self {
        let dims = lstm::LstmDims { input, units, t_steps, lanes };
        Self {
            cache: lstm::LstmCache::new(&dims),
            scratch: lstm::LstmScratch::new(&dims),
            dh: vec![0.0; t_steps * units * lanes],
            wxt: vec![0.0; dims.wx_len()],
            wht: vec![0.0; dims.wh_len()],
            dims,
        }
    }
}

/// All activation, cache and scratch buffers for one batch width.
pub struct Workspace {
    lanes: usize,
    dims: ModelDims,
    // CNN stream: padded inputs of each conv layer and post-ReLU outputs.
    xpad: [Vec<f64>; 4],
    conv_out: [Vec<f64>; 4],
    pool1_out: Vec<f64>,
    pool1_cache: Option<pool::PoolCache>,
    pool2_out: Vec<f64>,
    pool2_cache: Option<pool::PoolCache>,
    // LSTM stream.
    lstm_bufs: [LstmLayerBufs; 3],
    tpool_out: Vec<f64>,
    tpool_cache: Option<pool::PoolCache>,
    x_copy: Vec<f64>,
    // Fusion head.
    concat: Vec<f64>,
    dense_out: [Vec<f64>; 3],
    // Backward scratch.
    d_a: Vec<f64>,
    d_b: Vec<f64>,
    dpad: Vec<f64>,
    conv_wt: Vec<f64>,
    dense_wt: Vec<f64>,
    act_t: Vec<f64>,
    dconcat: Vec<f64>,
    ddense: [Vec<f64>; 3],
    grads: Vec<f64>,
    forward_done: bool,
}

impl Workspace {
    pub fn new(c: &ModelConfig, lanes: usize) -> Self {
        let d = ModelDims::from_config(c);
        let b = lanes;
        let [f1, f2, f3, f4] = c.conv_filters;
        let [u1, u2, u3] = c.lstm_units;
        let t = c.input_len;
        let conv_in_chans = [1, f1, f2, f3];
        let conv_len = [d.len0, d.len1, d.len1, d.len1];
        let xpad = [
            vec![0.0; (d.len0 + 2) * b],
            vec![0.0; f1 * (d.len1 + 2) * b],
            vec![0.0; f2 * (d.len1 + 2) * b],
            vec![0.0; f3 * (d.len1 + 2) * b],
        ];
        let conv_out = [
            vec![0.0; f1 * d.len0 * b],
            vec![0.0; f2 * d.len1 * b],
            vec![0.0; f3 * d.len1 * b],
            vec![0.0; f4 * d.len1 * b],
        ];
        let d_max = conv_out.iter().map(Vec::len).max().unwrap();
        let dpad_max = (0..4)
            .map(|i| conv_in_chans[i] * (conv_len[i] + 2) * b)
            .chain([f1 * (d.len0 + 2) * b]) // d of conv1 output, padded
            .max()
            .unwrap()
            .max(f4 * (d.len1 + 2) * b);
        let conv_wt_max = [f1 * 3, f2 * f1 * 3, f3 * f2 * 3, f4 * f3 * 3]
            .into_iter()
            .max()
            .unwrap();
        let [d1, d2] = c.dense_units;
        let dense_wt_max = (d.concat * d1).max(d1 * d2).max(d2 * c.outputs);
        let act_t_max = b * d.concat.max(d1).max(d2);
        Self {
            lanes: b,
            dims: d,
            xpad,
            conv_out,
            pool1_out: vec![0.0; f1 * d.len1 * b],
            pool1_cache: None,
            pool2_out: vec![0.0; f4 * d.len2 * b],
            pool2_cache: None,
            lstm_bufs: [
                LstmLayerBufs::new(1, u1, t, b),
                LstmLayerBufs::new(u1, u2, t, b),
                LstmLayerBufs::new(u2, u3, t, b),
            ],
            tpool_out: vec![0.0; d.t2 * u3 * b],
            tpool_cache: None,
            x_copy: vec![0.0; t * b],
            concat: vec![0.0; d.concat * b],
            dense_out: [
                vec![0.0; d1 * b],
                vec![0.0; d2 * b],
                vec![0.0; c.outputs * b],
            ],
            d_a: vec![0.0; d_max],
            d_b: vec![0.0; d_max],
            dpad: vec![0.0; dpad_max],
            conv_wt: vec![0.0; conv_wt_max],
            dense_wt: vec![0.0; dense_wt_max],
            act_t: vec![0.0; act_t_max],
            dconcat: vec![0.0; d.concat * b],
            ddense: [vec![0.0; d1 * b], vec![0.0; d2 * b], vec![0.0; c.outputs * b]],
            grads: Vec::new(),
            forward_done: false,
        }
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn predictions(&self) -> &[f64] {
        &self.dense_out[2]
    }
}

/// Batched forward pass; `x` is `[input_len][lanes]` (already standardized).
/// Predictions land in `ws.predictions()` as `[outputs][lanes]` on the
/// internal scale.
pub fn forward_batch(params: &ModelParams, ws: &mut Workspace, x: &[f64]) -> Result<()> {
    let c = &params.config;
    let b = ws.lanes;
    if x.len() != c.input_len * b {
        return Err(CoreError::Shape(format!(
            "input needs {} values ({} x {b} lanes), got {}",
            c.input_len * b,
            c.input_len,
            x.len()
        )));
    }
    let layout = params.layout();
    let d = ws.dims;
    let [f1, f2, f3, f4] = c.conv_filters;
    let [u1, u2, u3] = c.lstm_units;

    ws.x_copy.copy_from_slice(x);

    // --- CNN stream ---
    copy_into_padded(&mut ws.xpad[0], x, 1, d.len0, b);
    let conv_chans = [1, f1, f2, f3];
    let conv_filters = [f1, f2, f3, f4];
    let conv_len = [d.len0, d.len1, d.len1, d.len1];
    for i in 0..4 {
        let w = params.tensor(&layout, &format!("conv{}.w", i + 1));
        let bias = params.tensor(&layout, &format!("conv{}.b", i + 1));
        kernels::conv3_fwd(
            &mut ws.conv_out[i],
            &ws.xpad[i],
            w,
            bias,
            conv_filters[i],
            conv_chans[i],
            conv_len[i],
            b,
        );
        relu_slice(&mut ws.conv_out[i]);
        match i {
            0 => {
                let cache = pool::maxpool2(&ws.conv_out[0], &mut ws.pool1_out, f1, d.len0, b);
                ws.pool1_cache = Some(cache);
                copy_into_padded(&mut ws.xpad[1], &ws.pool1_out, f1, d.len1, b);
            }
            1 => copy_into_padded(&mut ws.xpad[2], &ws.conv_out[1], f2, d.len1, b),
            2 => copy_into_padded(&mut ws.xpad[3], &ws.conv_out[2], f3, d.len1, b),
            _ => {
                let cache = pool::maxpool2(&ws.conv_out[3], &mut ws.pool2_out, f4, d.len1, b);
                ws.pool2_cache = Some(cache);
            }
        }
    }

    // --- LSTM stream (x viewed as [T][1][lanes] — same memory) ---
    for i in 0..3 {
        let wx = params.tensor(&layout, &format!("lstm{}.wx", i + 1));
        let wh = params.tensor(&layout, &format!("lstm{}.wh", i + 1));
        let bias = params.tensor(&layout, &format!("lstm{}.b", i + 1));
        // `h` of the previous layer is `[T][units][lanes]` — exactly the
        // next layer's input layout.
        let (before, rest) = ws.lstm_bufs.split_at_mut(i);
        let buf = &mut rest[0];
        let input: &[f64] = if i == 0 { &ws.x_copy } else { &before[i - 1].cache.h };
        lstm::forward(&buf.dims, wx, wh, bias, input, &mut buf.cache);
    }
    let cache = pool::maxpool2(
        &ws.lstm_bufs[2].cache.h,
        &mut ws.tpool_out,
        1,
        c.input_len,
        u3 * b,
    );
    ws.tpool_cache = Some(cache);

    // --- fusion head ---
    ws.concat[..d.cnn_flat * b].copy_from_slice(&ws.pool2_out);
    ws.concat[d.cnn_flat * b..].copy_from_slice(&ws.tpool_out);
    let dense_in_dims = [d.concat, c.dense_units[0], c.dense_units[1]];
    let dense_out_dims = [c.dense_units[0], c.dense_units[1], c.outputs];
    for i in 0..3 {
        let w = params.tensor(&layout, &format!("dense{}.w", i + 1));
        let bias = params.tensor(&layout, &format!("dense{}.b", i + 1));
        let (din, dout) = (dense_in_dims[i], dense_out_dims[i]);
        let (pre, rest) = ws.dense_out.split_at_mut(i);
        let out = &mut rest[0];
        for (r, &bv) in bias.iter().enumerate() {
            out[r * b..(r + 1) * b].fill(bv);
        }
        let input: &[f64] = if i == 0 { &ws.concat } else { &pre[i - 1] };
        kernels::matmul_acc(out, w, input, dout, din, b);
        if i < 2 {
            relu_slice(out);
        }
    }
    let _ = (u1, u2);
    ws.forward_done = true;
    Ok(())
}

/// Batched backward pass; needs the caches of the immediately preceding
/// [`forward_batch`]. `dpred` is the loss gradient on the predictions,
/// `[outputs][lanes]`. Returns the flat parameter gradient.
pub fn backward_batch<'w>(
    params: &ModelParams,
    ws: &'w mut Workspace,
    dpred: &[f64],
) -> Result<&'w [f64]> {
    if !ws.forward_done {
        return Err(CoreError::State(
            "backward_batch called before forward_batch".into(),
        ));
    }
    let c = &params.config;
    let b = ws.lanes;
    if dpred.len() != c.outputs * b {
        return Err(CoreError::Shape(format!(
            "dpred needs {} values, got {}",
            c.outputs * b,
            dpred.len()
        )));
    }
    let layout = params.layout();
    let d = ws.dims;
    let [f1, f2, f3, f4] = c.conv_filters;
    let u3 = c.lstm_units[2];
    ws.grads.clear();
    ws.grads.resize(layout.total, 0.0);
    let grads = &mut ws.grads;
    let gslice = |name: &str| -> (usize, usize) {
        let e = layout.find(name).expect("tensor");
        (e.offset, e.len())
    };

    // --- fusion head, in reverse ---
    ws.ddense[2].copy_from_slice(dpred);
    let dense_in_dims = [d.concat, c.dense_units[0], c.dense_units[1]];
    let dense_out_dims = [c.dense_units[0], c.dense_units[1], c.outputs];
    for i in (0..3).rev() {
        let (din, dout) = (dense_in_dims[i], dense_out_dims[i]);
        let dcur = &ws.ddense[i];
        let input: &[f64] = if i == 0 { &ws.concat } else { &ws.dense_out[i - 1] };
        let (wo, wl) = gslice(&format!("dense{}.w", i + 1));
        let (bo, bl) = gslice(&format!("dense{}.b", i + 1));
        kernels::transpose_lanes(&mut ws.act_t[..b * din], input, din, b);
        kernels::outer_acc(&mut grads[wo..wo + wl], dcur, &ws.act_t[..b * din], dout, din, b);
        lane_sums_into(&mut grads[bo..bo + bl], dcur, dout, b);
        // input gradient
        let w = params.tensor(&layout, &format!("dense{}.w", i + 1));
        kernels::transpose(&mut ws.dense_wt[..din * dout], w, dout, din);
        if i == 0 {
            ws.dconcat.fill(0.0);
            kernels::matmul_acc(&mut ws.dconcat, &ws.dense_wt[..din * dout], dcur, din, dout, b);
        } else {
            let (dprev, rest) = ws.ddense.split_at_mut(i);
            let dcur = &rest[0];
            let dprev = &mut dprev[i - 1];
            dprev.fill(0.0);
            kernels::matmul_acc(dprev, &ws.dense_wt[..din * dout], dcur, din, dout, b);
            relu_backward_slice(dprev, &ws.dense_out[i - 1]);
        }
    }

    // --- CNN stream backward ---
    // pool2: dconcat[..cnn_flat] -> d(conv4 out)
    let dconv4 = &mut ws.d_a[..f4 * d.len1 * b];
    pool::maxpool2_backward(
        &ws.dconcat[..d.cnn_flat * b],
        dconv4,
        ws.pool2_cache.as_ref().unwrap(),
        f4,
        d.len1,
        b,
    );
    let conv_chans = [1, f1, f2, f3];
    let conv_filters = [f1, f2, f3, f4];
    let conv_len = [d.len0, d.len1, d.len1, d.len1];
    // walk conv4 -> conv1; d_a holds d(conv_i out), d_b receives
    // d(conv_i input)
    for i in (0..4).rev() {
        let (filters, chans, len) = (conv_filters[i], conv_chans[i], conv_len[i]);
        {
            let dcur = &mut ws.d_a[..filters * len * b];
            relu_backward_slice(dcur, &ws.conv_out[i]);
            let (wo, wl) = gslice(&format!("conv{}.w", i + 1));
            let (bo, bl) = gslice(&format!("conv{}.b", i + 1));
            debug_assert_eq!(bo, wo + wl); // bias follows its weights
            let (gw, rest) = grads[wo..].split_at_mut(wl);
            kernels::conv3_grad_params(
                gw,
                &mut rest[..bl],
                dcur,
                &ws.xpad[i],
                filters,
                chans,
                len,
                b,
            );
        }
        if i == 0 {
            break; // input gradient unused
        }
        {
            let dcur = &ws.d_a[..filters * len * b];
            let dpad = &mut ws.dpad[..filters * (len + 2) * b];
            copy_into_padded(dpad, dcur, filters, len, b);
        }
        let w = params.tensor(&layout, &format!("conv{}.w", i + 1));
        kernels::transpose_conv_w(&mut ws.conv_wt[..filters * chans * 3], w, filters, chans);
        {
            let gx = &mut ws.d_b[..chans * len * b];
            kernels::conv3_grad_input(
                gx,
                &ws.dpad[..filters * (len + 2) * b],
                &ws.conv_wt[..filters * chans * 3],
                filters,
                chans,
                len,
                b,
            );
        }
        if i == 1 {
            // gx is d(pool1 out); expand through pool1 into d(conv1 out)
            let (da, db) = (&mut ws.d_a, &ws.d_b);
            pool::maxpool2_backward(
                &db[..f1 * d.len1 * b],
                &mut da[..f1 * d.len0 * b],
                ws.pool1_cache.as_ref().unwrap(),
                f1,
                d.len0,
                b,
            );
        } else {
            core::mem::swap(&mut ws.d_a, &mut ws.d_b);
        }
    }

    // --- LSTM stream backward ---
    pool::maxpool2_backward(
        &ws.dconcat[d.cnn_flat * b..],
        &mut ws.lstm_bufs[2].dh,
        ws.tpool_cache.as_ref().unwrap(),
        1,
        c.input_len,
        u3 * b,
    );
    for i in (0..3).rev() {
        let wx = params.tensor(&layout, &format!("lstm{}.wx", i + 1));
        let wh = params.tensor(&layout, &format!("lstm{}.wh", i + 1));
        let (xo, xl) = gslice(&format!("lstm{}.wx", i + 1));
        let (ho, hl) = gslice(&format!("lstm{}.wh", i + 1));
        let (bo, bl) = gslice(&format!("lstm{}.b", i + 1));
        let (before, rest) = ws.lstm_bufs.split_at_mut(i);
        let (buf, _) = rest.split_first_mut().unwrap();
        let dims = buf.dims;
        kernels::transpose(&mut buf.wxt, wx, 4 * dims.units, dims.input);
        kernels::transpose(&mut buf.wht, wh, 4 * dims.units, dims.units);
        // the input gradient of layer i is the upstream dh of layer i-1
        let (input, dx): (&[f64], Option<&mut [f64]>) = if i == 0 {
            (&ws.x_copy, None)
        } else {
            let prev = &mut before[i - 1];
            (&prev.cache.h, Some(&mut prev.dh))
        };
        let (gwx, rest) = grads[xo..].split_at_mut(xl);
        debug_assert_eq!(ho, xo + xl);
        let (gwh, rest) = rest.split_at_mut(hl);
        debug_assert_eq!(bo, ho + hl);
        let gb = &mut rest[..bl];
        lstm::backward(
            &dims,
            &buf.wxt,
            &buf.wht,
            input,
            &buf.cache,
            &mut buf.dh,
            gwx,
            gwh,
            gb,
            dx,
            &mut buf.scratch,
        );
    }

    Ok(&ws.grads)
}

/// Scalar standardization fitted on training profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct InputScaler {
    pub mean: f64,
    pub std: f64,
}

impl InputScaler {
    pub fn fit<'a>(profiles: impl Iterator<Item = &'a [f64]> + Clone) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = 0.0;
        for p in profiles.clone() {
            for &v in p {
                sum += v;
                n += 1;
            }
        }
        if n == 0 {
            return Err(CoreError::Validation("no profile values to fit scaler".into()));
        }
        let mean = sum / n as f64;
        let mut var = 0.0;
        for p in profiles {
            for &v in p {
                var += (v - mean) * (v - mean);
            }
        }
        let std = math::sqrt(var / n as f64).max(1e-9);
        Ok(Self { mean, std })
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrainedModel {
    pub params: ModelParams,
    pub scaler: InputScaler,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrainReport {
    /// Mean training loss per epoch (sample-weighted over batches).
    pub loss_history: Vec<f64>,
}

/// Pack the listed profiles into lane-minor `[rows][lanes]`; lanes past
/// `sources.len()` are zero-filled padding.
fn pack_lanes(dst: &mut [f64], rows: usize, lanes: usize, sources: &[&[f64]]) {
    let b = sources.len();
    debug_assert!(b <= lanes);
    for r in 0..rows {
        let row = &mut dst[r * lanes..(r + 1) * lanes];
        for (l, src) in sources.iter().enumerate() {
            row[l] = src[r];
        }
        row[b..].fill(0.0);
    }
}

/// Train from scratch: builds parameters from `config.seed`, fits the
/// input scaler on the given profiles, scales targets (0-100 → [0,1] when
/// `percent_targets`), and runs `epochs` of Adam on batched RMSE.
pub fn fit(
    config: &ModelConfig,
    profiles: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<(TrainedModel, TrainReport)> {
    config.validate()?;
    if profiles.is_empty() {
        return Err(CoreError::Validation("empty training set".into()));
    }
    if profiles.len() != targets.len() {
        return Err(CoreError::Validation(format!(
            "{} profiles but {} targets",
            profiles.len(),
            targets.len()
        )));
    }
    for (i, p) in profiles.iter().enumerate() {
        if p.len() != config.input_len {
            return Err(CoreError::Shape(format!(
                "profile {i} has {} values, expected {}",
                p.len(),
                config.input_len
            )));
        }
    }
    for (i, t) in targets.iter().enumerate() {
        if t.len() != config.outputs {
            return Err(CoreError::Shape(format!(
                "target {i} has {} values, expected {}",
                t.len(),
                config.outputs
            )));
        }
    }
    let scaler = InputScaler::fit(profiles.iter().map(|p| p.as_slice()))?;
    let mut params = build(config)?;

    let n = profiles.len();
    let target_div = if config.percent_targets { 100.0 } else { 1.0 };
    let scaled: Vec<Vec<f64>> = profiles
        .iter()
        .map(|p| p.iter().map(|&v| scaler.apply(v)).collect())
        .collect();
    let t_scaled: Vec<Vec<f64>> = targets
        .iter()
        .map(|t| t.iter().map(|&v| v / target_div).collect())
        .collect();

    let bs = config.batch_size.unwrap_or(n).min(n);
    // round lane counts up to the SIMD width: pad lanes carry zero inputs
    // and a zero loss gradient, so results match unpadded training while
    // every kernel stays on its full-width path
    let pad8 = |b: usize| (b + 7) & !7;
    let bsp = pad8(bs);
    let mut workspaces: Vec<(usize, Workspace)> = Vec::new();
    let mut adam = AdamState::new(config.learning_rate, params.values.len());
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    let mut xbuf = vec![0.0; config.input_len * bsp];
    let mut tbuf = vec![0.0; config.outputs * bsp];
    let mut dpred = vec![0.0; config.outputs * bsp];

    for epoch in 0..config.epochs {
        if bs < n {
            // deterministic per-epoch shuffle on a derived stream
            let mut rng = SplitMix64::derive(config.seed, 1_000_000 + epoch as u64);
            // Fisher-Yates
            for i in (1..n).rev() {
                let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                order.swap(i, j);
            }
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(bs) {
            let b = chunk.len();
            let bp = pad8(b);
            let ws = match workspaces.iter_mut().position(|(l, _)| *l == bp) {
                Some(i) => &mut workspaces[i].1,
                None => {
                    workspaces.push((bp, Workspace::new(config, bp)));
                    &mut workspaces.last_mut().unwrap().1
                }
            };
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| scaled[i].as_slice()).collect();
            let ts: Vec<&[f64]> = chunk.iter().map(|&i| t_scaled[i].as_slice()).collect();
            pack_lanes(&mut xbuf[..config.input_len * bp], config.input_len, bp, &xs);
            pack_lanes(&mut tbuf[..config.outputs * bp], config.outputs, bp, &ts);
            forward_batch(&params, ws, &xbuf[..config.input_len * bp])?;
            let l = loss::rmse_batch_padded(
                ws.predictions(),
                &tbuf[..config.outputs * bp],
                config.outputs,
                bp,
                b,
                &mut dpred[..config.outputs * bp],
            );
            epoch_loss += l * b as f64;
            let grads = backward_batch(&params, ws, &dpred[..config.outputs * bp])?;
            adam.step(&mut params.values, grads)?;
        }
        history.push(epoch_loss / n as f64);
    }

    Ok((
        TrainedModel { params, scaler },
        TrainReport { loss_history: history },
    ))
}

/// Predict ratings for one profile on the reporting scale (0-100 when
/// `percent_targets`, clamped).
pub fn predict(model: &TrainedModel, profile: &[f64]) -> Result<Vec<f64>> {
    Ok(predict_batch(model, core::iter::once(profile))?.pop().unwrap())
}

/// Predict many profiles reusing one single-lane workspace. Lane width is
/// fixed at 1 so results are independent of how profiles are grouped.
pub fn predict_batch<'a>(
    model: &TrainedModel,
    profiles: impl Iterator<Item = &'a [f64]>,
) -> Result<Vec<Vec<f64>>> {
    let c = &model.params.config;
    let mut ws = Workspace::new(c, 1);
    let mut out = Vec::new();
    let mut x = vec![0.0; c.input_len];
    for p in profiles {
        if p.len() != c.input_len {
            return Err(CoreError::Shape(format!(
                "profile has {} values, expected {}",
                p.len(),
                c.input_len
            )));
        }
        for (d, &v) in x.iter_mut().zip(p) {
            *d = model.scaler.apply(v);
        }
        forward_batch(&model.params, &mut ws, &x)?;
        let scale = if c.percent_targets { 100.0 } else { 1.0 };
        let pred: Vec<f64> = ws
            .predictions()
            .iter()
            .map(|&v| {
                let v = v * scale;
                if c.percent_targets {
                    v.clamp(0.0, 100.0)
                } else {
                    v
                }
            })
            .collect();
        out.push(pred);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub tol: f64,
    pub n_params: usize,
    pub pass: bool,
}

/// Compare the analytic gradient of `rmse(pred, target)` against central
/// finite differences over every parameter. `corrupt` doubles the largest
/// analytic gradient first — a fault-injection self-test of the checker.
pub fn gradient_check(
    config: &ModelConfig,
    seed: u64,
    eps: f64,
    tol: f64,
    corrupt: bool,
) -> Result<GradCheckReport> {
    let mut config = config.clone();
    config.seed = seed;
    let mut params = build(&config)?;
    let mut rng = SplitMix64::derive(seed, 0xC0FFEE);
    let x: Vec<f64> = (0..config.input_len).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let target: Vec<f64> = (0..config.outputs).map(|_| rng.uniform(0.0, 1.0)).collect();

    let mut ws = Workspace::new(&config, 1);
    forward_batch(&params, &mut ws, &x)?;
    let mut dpred = vec![0.0; config.outputs];
    loss::rmse_batch(ws.predictions(), &target, config.outputs, 1, &mut dpred);
    let mut analytic = backward_batch(&params, &mut ws, &dpred)?.to_vec();
    if corrupt {
        let imax = analytic
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap();
        analytic[imax] *= 2.0;
    }

    let mut max_rel = 0.0f64;
    for i in 0..params.values.len() {
        let orig = params.values[i];
        params.values[i] = orig + eps;
        forward_batch(&params, &mut ws, &x)?;
        let hi = loss::rmse_batch(ws.predictions(), &target, config.outputs, 1, &mut dpred);
        params.values[i] = orig - eps;
        forward_batch(&params, &mut ws, &x)?;
        let lo = loss::rmse_batch(ws.predictions(), &target, config.outputs, 1, &mut dpred);
        params.values[i] = orig;
        let fd = (hi - lo) / (2.0 * eps);
        let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
        max_rel = max_rel.max(((analytic[i] - fd) / denom).abs());
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        tol,
        n_params: params.values.len(),
        pass: max_rel < tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Total trainable parameters of the reference architecture, frozen
    /// as a regression constant. Derived independently:
    /// conv 1024 + 98432 + 49280 + 24640, lstm 66432 + 49344 + 32960,
    /// dense 1933376 + 2080 + 330.
    const REF_PARAM_COUNT: usize = 2_257_898;

    #[test]
    fn reference_param_count_is_frozen() {
        assert_eq!(param_count(&ModelConfig::default()), REF_PARAM_COUNT);
    }

    #[test]
    fn layout_is_contiguous_and_ordered() {
        let layout = ParamLayout::from_config(&ModelConfig::shrunken_test_config());
        let mut expect = 0;
        for e in &layout.entries {
            assert_eq!(e.offset, expect);
            expect += e.len();
        }
        assert_eq!(layout.total, expect);
    }

    #[test]
    fn builds_are_deterministic_per_seed() {
        let cfg = ModelConfig::shrunken_test_config();
        let a = build(&cfg).unwrap();
        let b = build(&cfg).unwrap();
        assert_eq!(a.values, b.values);
        let mut cfg2 = cfg.clone();
        cfg2.seed = 43;
        let c = build(&cfg2).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn forget_gate_bias_is_one() {
        let cfg = ModelConfig::shrunken_test_config();
        let p = build(&cfg).unwrap();
        let layout = p.layout();
        let b = p.tensor(&layout, "lstm1.b");
        let u = cfg.lstm_units[0];
        assert!(b[..u].iter().all(|&v| v == 0.0));
        assert!(b[u..2 * u].iter().all(|&v| v == 1.0));
        assert!(b[2 * u..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_reference_sizes_rejected_without_override() {
        let mut cfg = ModelConfig::default();
        cfg.conv_filters = [8, 4, 4, 4];
        assert!(cfg.validate().is_err());
        cfg.allow_custom_sizes = true;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn forward_emits_ten_finite_outputs() {
        let cfg = ModelConfig::shrunken_test_config();
        let p = build(&cfg).unwrap();
        let mut ws = Workspace::new(&cfg, 1);
        let x: Vec<f64> = (0..cfg.input_len).map(|i| (i as f64 * 0.13).sin()).collect();
        forward_batch(&p, &mut ws, &x).unwrap();
        assert_eq!(ws.predictions().len(), 10);
        assert!(ws.predictions().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zeroed_head_gives_all_equal_outputs() {
        // zero final dense weights and bias: outputs are exactly the bias
        let cfg = ModelConfig::shrunken_test_config();
        let mut p = build(&cfg).unwrap();
        let layout = p.layout();
        let e = layout.find("dense3.w").unwrap();
        p.values[e.offset..e.offset + e.len()].fill(0.0);
        let e = layout.find("dense3.b").unwrap();
        p.values[e.offset..e.offset + e.len()].fill(0.0);
        let mut ws = Workspace::new(&cfg, 1);
        let x: Vec<f64> = (0..cfg.input_len).map(|i| (i as f64 * 0.31).cos()).collect();
        forward_batch(&p, &mut ws, &x).unwrap();
        assert!(ws.predictions().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lanes_do_not_interact() {
        // a sample's forward result is bit-identical alone or in a batch
        let cfg = ModelConfig::shrunken_test_config();
        let p = build(&cfg).unwrap();
        let n = cfg.input_len;
        let mut rng = SplitMix64::new(77);
        let samples: Vec<Vec<f64>> =
            (0..3).map(|_| (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
        let mut xb = vec![0.0; n * 3];
        for (l, s) in samples.iter().enumerate() {
            for r in 0..n {
                xb[r * 3 + l] = s[r];
            }
        }
        let mut ws3 = Workspace::new(&cfg, 3);
        forward_batch(&p, &mut ws3, &xb).unwrap();
        for (l, s) in samples.iter().enumerate() {
            let mut ws1 = Workspace::new(&cfg, 1);
            forward_batch(&p, &mut ws1, s).unwrap();
            for j in 0..cfg.outputs {
                assert_eq!(
                    ws1.predictions()[j].to_bits(),
                    ws3.predictions()[j * 3 + l].to_bits()
                );
            }
        }
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let cfg = ModelConfig::shrunken_test_config();
        let p = build(&cfg).unwrap();
        let mut ws = Workspace::new(&cfg, 1);
        let d = vec![0.0; cfg.outputs];
        assert!(matches!(
            backward_batch(&p, &mut ws, &d),
            Err(CoreError::State(_))
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = ModelConfig::shrunken_test_config();
        let r = gradient_check(&cfg, 1, 1e-5, 1e-4, false).unwrap();
        assert!(r.pass, "max relative error {}", r.max_rel_err);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let cfg = ModelConfig::shrunken_test_config();
        let r = gradient_check(&cfg, 1, 1e-5, 1e-4, true).unwrap();
        assert!(!r.pass);
    }

    fn tiny_train_config() -> ModelConfig {
        let mut cfg = ModelConfig::shrunken_test_config();
        cfg.percent_targets = true;
        cfg
    }

    fn one_sample() -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = SplitMix64::new(5);
        let profile: Vec<f64> = (0..40).map(|_| rng.uniform(0.0, 10.0)).collect();
        let target: Vec<f64> = (0..10).map(|_| rng.uniform(10.0, 90.0)).collect();
        (vec![profile], vec![target])
    }

    #[test]
    fn overfits_a_single_sample() {
        let cfg = tiny_train_config();
        let (profiles, targets) = one_sample();
        let (_, report) = fit(&cfg, &profiles, &targets).unwrap();
        let first = report.loss_history[0];
        let last = *report.loss_history.last().unwrap();
        assert_eq!(report.loss_history.len(), cfg.epochs);
        assert!(
            last <= 0.5 * first,
            "RMSE only moved {first} -> {last} over {} epochs",
            cfg.epochs
        );
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut cfg = tiny_train_config();
        cfg.learning_rate = 0.0;
        cfg.epochs = 5;
        let (profiles, targets) = one_sample();
        let (trained, report) = fit(&cfg, &profiles, &targets).unwrap();
        let fresh = build(&cfg).unwrap();
        assert_eq!(trained.params.values, fresh.values);
        for w in report.loss_history.windows(2) {
            assert_eq!(w[0], w[1]);
        }
    }

    #[test]
    fn training_is_bit_reproducible() {
        let mut cfg = tiny_train_config();
        cfg.epochs = 8;
        cfg.batch_size = Some(2); // exercise the shuffling path
        let mut rng = SplitMix64::new(6);
        let profiles: Vec<Vec<f64>> =
            (0..5).map(|_| (0..40).map(|_| rng.uniform(0.0, 8.0)).collect()).collect();
        let targets: Vec<Vec<f64>> =
            (0..5).map(|_| (0..10).map(|_| rng.uniform(5.0, 95.0)).collect()).collect();
        let (a, ra) = fit(&cfg, &profiles, &targets).unwrap();
        let (b, rb) = fit(&cfg, &profiles, &targets).unwrap();
        assert_eq!(a.params.values, b.params.values);
        assert_eq!(ra.loss_history, rb.loss_history);
    }

    #[test]
    fn final_loss_not_above_initial_on_small_set() {
        let mut cfg = tiny_train_config();
        cfg.epochs = 30;
        let mut rng = SplitMix64::new(9);
        let profiles: Vec<Vec<f64>> =
            (0..4).map(|_| (0..40).map(|_| rng.uniform(0.0, 8.0)).collect()).collect();
        let targets: Vec<Vec<f64>> =
            (0..4).map(|_| (0..10).map(|_| rng.uniform(5.0, 95.0)).collect()).collect();
        let (_, report) = fit(&cfg, &profiles, &targets).unwrap();
        assert!(report.loss_history.last().unwrap() <= &report.loss_history[0]);
    }

    #[test]
    fn predict_clamps_to_percent_scale() {
        let cfg = tiny_train_config();
        let (profiles, targets) = one_sample();
        let (trained, _) = fit(&cfg, &profiles, &targets).unwrap();
        let pred = predict(&trained, &profiles[0]).unwrap();
        assert_eq!(pred.len(), 10);
        assert!(pred.iter().all(|&v| (0.0..=100.0).contains(&v)));
    }

    #[test]
    fn predict_rejects_wrong_length() {
        let cfg = tiny_train_config();
        let (profiles, targets) = one_sample();
        let (trained, _) = fit(&cfg, &profiles, &targets).unwrap();
        assert!(matches!(
            predict(&trained, &[1.0, 2.0]),
            Err(CoreError::Shape(_))
        ));
    }

    #[test]
    fn empty_dataset_rejected() {
        let cfg = tiny_train_config();
        assert!(matches!(
            fit(&cfg, &[], &[]),
            Err(CoreError::Validation(_))
        ));
    }

    #[test]
    fn scaler_standardizes_to_zero_mean_unit_std() {
        let data = [vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let s = InputScaler::fit(data.iter().map(|v| v.as_slice())).unwrap();
        let scaled: Vec<f64> =
            data.iter().flatten().map(|&v| s.apply(v)).collect();
        let mean = scaled.iter().sum::<f64>() / 6.0;
        let var = scaled.iter().map(|v| v * v).sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }
}
