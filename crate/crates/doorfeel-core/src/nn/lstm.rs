//! Batched LSTM layer: forward pass with full activation caching and
//! truncated-nothing backpropagation through time.
//!
//! Buffers are lane-minor like the rest of the engine. One layer owns
//! three parameter blocks:
//!
//! * `wx` `[4*units][input]` — input weights, gate rows ordered i, f, g, o
//!   (g is the tanh candidate);
//! * `wh` `[4*units][units]` — recurrent weights, same row order;
//! * `bias` `[3*units]` — biases for the i, f and o gates only. The
//!   candidate has no bias term.
//!
//! Gate math per step: `i,f,o = sigmoid(wx·x + wh·h_prev + b)`,
//! `g = tanh(wx·x + wh·h_prev)`, `c = f⊙c_prev + i⊙g`, `h = o⊙tanh(c)`.

use crate::math;
use crate::nn::kernels;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy)]
pub struct LstmDims {
    pub input: usize,
    pub units: usize,
    pub t_steps: usize,
    pub lanes: usize,
}

impl LstmDims {
    pub fn wx_len(&self) -> usize {
        4 * self.units * self.input
    }
    pub fn wh_len(&self) -> usize {
        4 * self.units * self.units
    }
    pub fn bias_len(&self) -> usize {
        3 * self.units
    }
}

/// Everything the backward pass needs, recorded during forward.
pub struct LstmCache {
    /// Activated gates `[T][4*units][lanes]`, rows i, f, g, o.
    pub gates: Vec<f64>,
    /// Cell states `[T][units][lanes]`.
    pub c: Vec<f64>,
    /// `tanh(c)` `[T][units][lanes]`.
    pub tanh_c: Vec<f64>,
    /// Hidden states `[T][units][lanes]` — the layer output.
    pub h: Vec<f64>,
}

impl LstmCache {
    pub fn new(d: &LstmDims) -> Self {
        let ub = d.units * d.lanes;
        Self {
            gates: vec![0.0; d.t_steps * 4 * ub],
            c: vec![0.0; d.t_steps * ub],
            tanh_c: vec![0.0; d.t_steps * ub],
            h: vec![0.0; d.t_steps * ub],
        }
    }
}

/// Scratch buffers reused across backward steps.
pub struct LstmScratch {
    dpre: Vec<f64>,  // [4*units][lanes]
    dc: Vec<f64>,    // [units][lanes] cell-state carry
    xt: Vec<f64>,    // [lanes][input]
    ht: Vec<f64>,    // [lanes][units]
    zeros: Vec<f64>, // [units][lanes] stand-in for c_{-1}
}

impl LstmScratch {
    pub fn new(d: &LstmDims) -> Self {
        Self {
            dpre: vec![0.0; 4 * d.units * d.lanes],
            dc: vec![0.0; d.units * d.lanes],
            xt: vec![0.0; d.lanes * d.input],
            ht: vec![0.0; d.lanes * d.units],
            zeros: vec![0.0; d.units * d.lanes],
        }
    }
}

/// Forward over the whole sequence; `x` is `[T][input][lanes]`,
/// `h_0 = c_0 = 0`.
pub fn forward(d: &LstmDims, wx: &[f64], wh: &[f64], bias: &[f64], x: &[f64], cache: &mut LstmCache) {
    let u = d.units;
    let b = d.lanes;
    let ub = u * b;
    debug_assert_eq!(wx.len(), d.wx_len());
    debug_assert_eq!(wh.len(), d.wh_len());
    debug_assert_eq!(bias.len(), d.bias_len());
    debug_assert_eq!(x.len(), d.t_steps * d.input * b);

    for t in 0..d.t_steps {
        let (head, tail) = cache.gates.split_at_mut(t * 4 * ub);
        let g_t = &mut tail[..4 * ub];
        // bias rows: i, f get bias[0..u], bias[u..2u]; g rows zero; o rows
        // get bias[2u..3u].
        for row in 0..4 * u {
            let v = match row / u {
                0 => bias[row],
                1 => bias[row],
                3 => bias[row - u],
                _ => 0.0,
            };
            g_t[row * b..(row + 1) * b].fill(v);
        }
        let x_t = &x[t * d.input * b..(t + 1) * d.input * b];
        kernels::matmul_acc(g_t, wx, x_t, 4 * u, d.input, b);
        if t > 0 {
            let h_prev = &cache.h[(t - 1) * ub..t * ub];
            kernels::matmul_acc(g_t, wh, h_prev, 4 * u, u, b);
        }
        let _ = head;
        // activate: sigmoid on i,f rows, tanh on g, sigmoid on o
        math::sigmoid_slice(&mut g_t[..2 * ub]);
        math::tanh_slice(&mut g_t[2 * ub..3 * ub]);
        math::sigmoid_slice(&mut g_t[3 * ub..4 * ub]);

        let g_t = &cache.gates[t * 4 * ub..(t + 1) * 4 * ub];
        let (i_g, rest) = g_t.split_at(ub);
        let (f_g, rest) = rest.split_at(ub);
        let (cand, o_g) = rest.split_at(ub);
        let (c_head, c_tail) = cache.c.split_at_mut(t * ub);
        let c_row = &mut c_tail[..ub];
        let tc_row = &mut cache.tanh_c[t * ub..(t + 1) * ub];
        let h_row = &mut cache.h[t * ub..(t + 1) * ub];
        let zeros = &cache.zeros_fwd;
        let cp_row: &[f64] = if t > 0 { &c_head[(t - 1) * ub..] } else { zeros };
        let mut l = 0;
        // two interleaved vectors pipeline the serial chain in tanh8
        while l + 16 <= ub {
            let c: [wide::f64x8; 2] = core::array::from_fn(|v| {
                let i = l + 8 * v;
                math::load8(f_g, i) * math::load8(cp_row, i)
                    + math::load8(i_g, i) * math::load8(cand, i)
            });
            let tc = [math::tanh8(c[0]), math::tanh8(c[1])];
            for v in 0..2 {
                let i = l + 8 * v;
                let h = math::load8(o_g, i) * tc[v];
                c_row[i..i + 8].copy_from_slice(&c[v].to_array());
                tc_row[i..i + 8].copy_from_slice(&tc[v].to_array());
                h_row[i..i + 8].copy_from_slice(&h.to_array());
            }
            l += 16;
        }
        while l + 8 <= ub {
            let c = math::load8(f_g, l) * math::load8(cp_row, l)
                + math::load8(i_g, l) * math::load8(cand, l);
            let tc = math::tanh8(c);
            let h = math::load8(o_g, l) * tc;
            c_row[l..l + 8].copy_from_slice(&c.to_array());
            tc_row[l..l + 8].copy_from_slice(&tc.to_array());
            h_row[l..l + 8].copy_from_slice(&h.to_array());
            l += 8;
        }
        while l < ub {
            let c_prev = if t > 0 { c_head[(t - 1) * ub + l] } else { 0.0 };
            let c = f_g[l] * c_prev + i_g[l] * cand[l];
            let tc = math::tanh(c);
            c_row[l] = c;
            tc_row[l] = tc;
            h_row[l] = o_g[l] * tc;
            l += 1;
        }
    }
}

/// Backpropagation through time.
///
/// `dh_seq` `[T][units][lanes]` holds the upstream gradient on every
/// hidden state and is consumed in place (recurrent carries are added
/// into earlier steps). Parameter gradients are accumulated (`+=`) into
/// `gwx`/`gwh`/`gbias`; `dx`, if given, is overwritten with the gradient
/// on the input sequence. `wxt`/`wht` are `wx`/`wh` transposed
/// (`[input][4*units]`, `[units][4*units]`).
#[allow(clippy::too_many_arguments)]
pub fn backward(
    d: &LstmDims,
    wxt: &[f64],
    wht: &[f64],
    x: &[f64],
    cache: &LstmCache,
    dh_seq: &mut [f64],
    gwx: &mut [f64],
    gwh: &mut [f64],
    gbias: &mut [f64],
    mut dx: Option<&mut [f64]>,
    scratch: &mut LstmScratch,
) {
    let u = d.units;
    let b = d.lanes;
    let ub = u * b;
    debug_assert_eq!(dh_seq.len(), d.t_steps * ub);
    debug_assert_eq!(gwx.len(), d.wx_len());
    debug_assert_eq!(gwh.len(), d.wh_len());
    debug_assert_eq!(gbias.len(), d.bias_len());

    scratch.dc.fill(0.0);
    for t in (0..d.t_steps).rev() {
        let g_t = &cache.gates[t * 4 * ub..(t + 1) * 4 * ub];
        let (i_g, rest) = g_t.split_at(ub);
        let (f_g, rest) = rest.split_at(ub);
        let (cand, o_g) = rest.split_at(ub);
        let tc = &cache.tanh_c[t * ub..(t + 1) * ub];
        let dh = &dh_seq[t * ub..(t + 1) * ub];
        let dpre = &mut scratch.dpre;
        let cp_row: &[f64] = if t > 0 { &cache.c[(t - 1) * ub..t * ub] } else { &scratch.zeros };
        let (dp_i, rest) = dpre.split_at_mut(ub);
        let (dp_f, rest) = rest.split_at_mut(ub);
        let (dp_g, dp_o) = rest.split_at_mut(ub);
        let mut l = 0;
        while l + 8 <= ub {
            use wide::f64x8;
            let one = f64x8::splat(1.0);
            let (i, f) = (math::load8(i_g, l), math::load8(f_g, l));
            let (g, o) = (math::load8(cand, l), math::load8(o_g, l));
            let (tcv, dhv) = (math::load8(tc, l), math::load8(dh, l));
            let dc_total = math::load8(&scratch.dc, l) + dhv * o * (one - tcv * tcv);
            let r_i = dc_total * g * i * (one - i);
            let r_f = dc_total * math::load8(cp_row, l) * f * (one - f);
            let r_g = dc_total * i * (one - g * g);
            let r_o = dhv * tcv * o * (one - o);
            let r_dc = dc_total * f;
            dp_i[l..l + 8].copy_from_slice(&r_i.to_array());
            dp_f[l..l + 8].copy_from_slice(&r_f.to_array());
            dp_g[l..l + 8].copy_from_slice(&r_g.to_array());
            dp_o[l..l + 8].copy_from_slice(&r_o.to_array());
            scratch.dc[l..l + 8].copy_from_slice(&r_dc.to_array());
            l += 8;
        }
        while l < ub {
            let dc_total = scratch.dc[l] + dh[l] * o_g[l] * (1.0 - tc[l] * tc[l]);
            let (i, f, g, o) = (i_g[l], f_g[l], cand[l], o_g[l]);
            dp_i[l] = dc_total * g * i * (1.0 - i);
            dp_f[l] = dc_total * cp_row[l] * f * (1.0 - f);
            dp_g[l] = dc_total * i * (1.0 - g * g);
            dp_o[l] = dh[l] * tc[l] * o * (1.0 - o);
            scratch.dc[l] = dc_total * f;
            l += 1;
        }
        // bias gradients: lane sums of the i, f, o rows
        for row in 0..3 * u {
            let src = if row < 2 * u { row } else { row + u };
            let mut s = 0.0;
            for l in 0..b {
                s += dpre[src * b + l];
            }
            gbias[row] += s;
        }
        let x_t = &x[t * d.input * b..(t + 1) * d.input * b];
        kernels::transpose_lanes(&mut scratch.xt, x_t, d.input, b);
        kernels::outer_acc(gwx, dpre, &scratch.xt, 4 * u, d.input, b);
        if t > 0 {
            let h_prev = &cache.h[(t - 1) * ub..t * ub];
            kernels::transpose_lanes(&mut scratch.ht, h_prev, u, b);
            kernels::outer_acc(gwh, dpre, &scratch.ht, 4 * u, u, b);
            // recurrent carry into the previous step's upstream gradient
            let dh_prev = &mut dh_seq[(t - 1) * ub..t * ub];
            kernels::matmul_acc(dh_prev, wht, dpre, u, 4 * u, b);
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dx_t = &mut dx[t * d.input * b..(t + 1) * d.input * b];
            dx_t.fill(0.0);
            kernels::matmul_acc(dx_t, wxt, dpre, d.input, 4 * u, b);
        }
    }
}
