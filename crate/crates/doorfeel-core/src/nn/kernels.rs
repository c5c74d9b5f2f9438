//! Hot-path linear algebra on lane-minor buffers.
//!
//! Activations are stored `[feature][lane]` with the batch lane as the
//! contiguous innermost axis, so every kernel vectorizes across the batch
//! and accumulates in registers. Lane-wise results are bitwise identical
//! for any batch size: each sample's arithmetic never crosses lanes.
//!
//! The inner blocks use explicit SIMD (`wide::f64x8` / `wide::f64x4`)
//! with fused multiply-add, because the accumulate-in-register pattern is
//! one LLVM's auto-vectorizer reliably misses. FMA is deterministic (one
//! rounding per fused op); lane counts not covered by a vector block fall
//! back to narrower vectors and finally to scalar `f64::mul_add` with the
//! same per-lane reduction order, so every lane's result is bitwise
//! identical regardless of which path computed it.
//!
//! Rows are processed four at a time (then two, then one) so each loaded
//! activation vector feeds four FMAs, and the convolutions tile positions
//! and channels to keep the streamed plane resident in L2.

use wide::{f64x4, f64x8};

/// Minimal width-generic facade over the two vector types used by the
/// blocked kernels.
trait Simd: Copy {
    const W: usize;
    fn zero() -> Self;
    fn splat(v: f64) -> Self;
    fn load(x: &[f64], i: usize) -> Self;
    fn fma(self, m: Self, a: Self) -> Self;
    /// `out[i..i+W] += self`
    fn add_to(self, out: &mut [f64], i: usize);
    /// Horizontal sum in lane order (used only where a cross-lane
    /// reduction is the kernel's contract, e.g. weight gradients).
    fn hsum(self) -> f64;
}

impl Simd for f64x4 {
    const W: usize = 4;
    #[inline(always)]
    fn zero() -> Self {
        f64x4::ZERO
    }
    #[inline(always)]
    fn splat(v: f64) -> Self {
        f64x4::splat(v)
    }
    #[inline(always)]
    fn load(x: &[f64], i: usize) -> Self {
        debug_assert!(i + 4 <= x.len());
        // bounds proven by the callers' block loops; a checked slice
        // conversion here costs ~10% of kernel time
        let a: [f64; 4] = unsafe { core::ptr::read_unaligned(x.as_ptr().add(i).cast()) };
        f64x4::from(a)
    }
    #[inline(always)]
    fn fma(self, m: Self, a: Self) -> Self {
        self.mul_add(m, a)
    }
    #[inline(always)]
    fn add_to(self, out: &mut [f64], i: usize) {
        let r = self.to_array();
        for (o, v) in out[i..i + 4].iter_mut().zip(r) {
            *o += v;
        }
    }
    #[inline(always)]
    fn hsum(self) -> f64 {
        self.to_array().iter().sum()
    }
}

impl Simd for f64x8 {
    const W: usize = 8;
    #[inline(always)]
    fn zero() -> Self {
        f64x8::splat(0.0)
    }
    #[inline(always)]
    fn splat(v: f64) -> Self {
        f64x8::splat(v)
    }
    #[inline(always)]
    fn load(x: &[f64], i: usize) -> Self {
        debug_assert!(i + 8 <= x.len());
        // bounds proven by the callers' block loops; a checked slice
        // conversion here costs ~10% of kernel time
        let a: [f64; 8] = unsafe { core::ptr::read_unaligned(x.as_ptr().add(i).cast()) };
        f64x8::from(a)
    }
    #[inline(always)]
    fn fma(self, m: Self, a: Self) -> Self {
        self.mul_add(m, a)
    }
    #[inline(always)]
    fn add_to(self, out: &mut [f64], i: usize) {
        let r = self.to_array();
        for (o, v) in out[i..i + 8].iter_mut().zip(r) {
            *o += v;
        }
    }
    #[inline(always)]
    fn hsum(self) -> f64 {
        self.to_array().iter().sum()
    }
}

/// Four-row register-blocked accumulation over `NV * V::W` lanes.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn mm_block4<V: Simd, const NV: usize>(
    o: [&mut [f64]; 4],
    w: [&[f64]; 4],
    x: &[f64],
    kr: (usize, usize),
    lanes: usize,
    b: usize,
) {
    let mut acc = [[V::zero(); NV]; 4];
    for k in kr.0..kr.1 {
        let base = k * lanes + b;
        let c = [V::splat(w[0][k]), V::splat(w[1][k]), V::splat(w[2][k]), V::splat(w[3][k])];
        for v in 0..NV {
            let xv = V::load(x, base + V::W * v);
            for r in 0..4 {
                acc[r][v] = xv.fma(c[r], acc[r][v]);
            }
        }
    }
    let [o0, o1, o2, o3] = o;
    for v in 0..NV {
        acc[0][v].add_to(o0, b + V::W * v);
        acc[1][v].add_to(o1, b + V::W * v);
        acc[2][v].add_to(o2, b + V::W * v);
        acc[3][v].add_to(o3, b + V::W * v);
    }
}

/// Two-row register-blocked accumulation over `NV * V::W` lanes.
#[inline(always)]
fn mm_block2<V: Simd, const NV: usize>(
    o0: &mut [f64],
    o1: &mut [f64],
    w0: &[f64],
    w1: &[f64],
    x: &[f64],
    kr: (usize, usize),
    lanes: usize,
    b: usize,
) {
    let mut a0 = [V::zero(); NV];
    let mut a1 = [V::zero(); NV];
    for k in kr.0..kr.1 {
        let base = k * lanes + b;
        let c0 = V::splat(w0[k]);
        let c1 = V::splat(w1[k]);
        for v in 0..NV {
            let xv = V::load(x, base + V::W * v);
            a0[v] = xv.fma(c0, a0[v]);
            a1[v] = xv.fma(c1, a1[v]);
        }
    }
    for v in 0..NV {
        a0[v].add_to(o0, b + V::W * v);
        a1[v].add_to(o1, b + V::W * v);
    }
}

/// Three-row register-blocked accumulation over `NV * 8` lanes. Used for
/// the widest single-pass blocks (NV 6-7), where four rows of accumulators
/// would spill registers.
#[inline(always)]
fn mm_block3<const NV: usize>(
    o: [&mut [f64]; 3],
    w: [&[f64]; 3],
    x: &[f64],
    kr: (usize, usize),
    lanes: usize,
    b: usize,
) {
    let mut acc = [[f64x8::splat(0.0); NV]; 3];
    for k in kr.0..kr.1 {
        let base = k * lanes + b;
        let c = [f64x8::splat(w[0][k]), f64x8::splat(w[1][k]), f64x8::splat(w[2][k])];
        for v in 0..NV {
            let xv = <f64x8 as Simd>::load(x, base + 8 * v);
            for r in 0..3 {
                acc[r][v] = xv.mul_add(c[r], acc[r][v]);
            }
        }
    }
    let [o0, o1, o2] = o;
    for v in 0..NV {
        acc[0][v].add_to(o0, b + 8 * v);
        acc[1][v].add_to(o1, b + 8 * v);
        acc[2][v].add_to(o2, b + 8 * v);
    }
}

/// Single-row accumulation over `NV * 8` lanes (remainder rows of the
/// single-pass path).
#[inline(always)]
fn mm_block1<const NV: usize>(
    o: &mut [f64],
    w: &[f64],
    x: &[f64],
    kr: (usize, usize),
    lanes: usize,
    b: usize,
) {
    let mut acc = [f64x8::splat(0.0); NV];
    for k in kr.0..kr.1 {
        let base = k * lanes + b;
        let c = f64x8::splat(w[k]);
        for v in 0..NV {
            let xv = <f64x8 as Simd>::load(x, base + 8 * v);
            acc[v] = xv.mul_add(c, acc[v]);
        }
    }
    for v in 0..NV {
        acc[v].add_to(o, b + 8 * v);
    }
}

/// One pass over `w` covering all `NV * 8` lanes at once. Multi-pass lane
/// blocking re-streams the whole weight matrix per block, which is what
/// limits the blocked path beyond 32 lanes.
fn mm_pass<const NV: usize>(
    out: &mut [f64],
    w: &[f64],
    x: &[f64],
    jdim: usize,
    kdim: usize,
    lanes: usize,
    kr: (usize, usize),
) {
    let mut j = 0;
    if NV <= 5 {
        // 4 rows x NV accumulators fit the register file through NV = 5
        while j + 4 <= jdim {
            let wr: [&[f64]; 4] = [
                &w[j * kdim..(j + 1) * kdim],
                &w[(j + 1) * kdim..(j + 2) * kdim],
                &w[(j + 2) * kdim..(j + 3) * kdim],
                &w[(j + 3) * kdim..(j + 4) * kdim],
            ];
            let rows = &mut out[j * lanes..(j + 4) * lanes];
            mm_block4::<f64x8, NV>(split4(rows, lanes), wr, x, kr, lanes, 0);
            j += 4;
        }
    } else {
        while j + 3 <= jdim {
            let wr: [&[f64]; 3] = [
                &w[j * kdim..(j + 1) * kdim],
                &w[(j + 1) * kdim..(j + 2) * kdim],
                &w[(j + 2) * kdim..(j + 3) * kdim],
            ];
            let rows = &mut out[j * lanes..(j + 3) * lanes];
            let (o0, rest) = rows.split_at_mut(lanes);
            let (o1, o2) = rest.split_at_mut(lanes);
            mm_block3::<NV>([o0, o1, o2], wr, x, kr, lanes, 0);
            j += 3;
        }
    }
    if j + 2 <= jdim {
        let w0 = &w[j * kdim..(j + 1) * kdim];
        let w1 = &w[(j + 1) * kdim..(j + 2) * kdim];
        let (o0, o1) = out[j * lanes..(j + 2) * lanes].split_at_mut(lanes);
        mm_block2::<f64x8, NV>(o0, o1, w0, w1, x, kr, lanes, 0);
        j += 2;
    }
    if j < jdim {
        let wr = &w[j * kdim..(j + 1) * kdim];
        let o = &mut out[j * lanes..(j + 1) * lanes];
        mm_block1::<NV>(o, wr, x, kr, lanes, 0);
    }
}

/// Split `rows` (a `4 * lanes` window of `out`) into four row slices.
#[inline(always)]
fn split4(rows: &mut [f64], lanes: usize) -> [&mut [f64]; 4] {
    let (o0, rest) = rows.split_at_mut(lanes);
    let (o1, rest) = rest.split_at_mut(lanes);
    let (o2, o3) = rest.split_at_mut(lanes);
    [o0, o1, o2, o3]
}

/// `out[j][lane] += sum_k w[j*kdim + k] * x[k*lanes + lane]`
///
/// `w` row-major `[jdim][kdim]`; `x`, `out` lane-minor.
pub fn matmul_acc(out: &mut [f64], w: &[f64], x: &[f64], jdim: usize, kdim: usize, lanes: usize) {
    debug_assert_eq!(out.len(), jdim * lanes);
    debug_assert_eq!(w.len(), jdim * kdim);
    debug_assert_eq!(x.len(), kdim * lanes);
    // Fixed-size k blocks keep the x window L1-resident at wide lane
    // counts. Block boundaries are the same for every lane count and every
    // dispatch path below, so each lane's value is the same ordered sum of
    // per-block FMA chains no matter how the batch is grouped.
    const MM_KB: usize = 64;
    let mut k0 = 0;
    while k0 < kdim {
        let kr = (k0, (k0 + MM_KB).min(kdim));
        matmul_pass(out, w, x, jdim, kdim, lanes, kr);
        k0 = kr.1;
    }
}

/// One k-block pass of [`matmul_acc`].
fn matmul_pass(
    out: &mut [f64],
    w: &[f64],
    x: &[f64],
    jdim: usize,
    kdim: usize,
    lanes: usize,
    kr: (usize, usize),
) {
    // single pass over `w` whenever the lane count maps onto whole
    // f64x8 vectors; training pads batches to a multiple of 8 for this
    match lanes {
        8 => return mm_pass::<1>(out, w, x, jdim, kdim, lanes, kr),
        16 => return mm_pass::<2>(out, w, x, jdim, kdim, lanes, kr),
        24 => return mm_pass::<3>(out, w, x, jdim, kdim, lanes, kr),
        32 => return mm_pass::<4>(out, w, x, jdim, kdim, lanes, kr),
        40 => return mm_pass::<5>(out, w, x, jdim, kdim, lanes, kr),
        48 => return mm_pass::<6>(out, w, x, jdim, kdim, lanes, kr),
        56 => return mm_pass::<7>(out, w, x, jdim, kdim, lanes, kr),
        _ => {}
    }
    let mut j = 0;
    while j + 4 <= jdim {
        let wr: [&[f64]; 4] = [
            &w[j * kdim..(j + 1) * kdim],
            &w[(j + 1) * kdim..(j + 2) * kdim],
            &w[(j + 2) * kdim..(j + 3) * kdim],
            &w[(j + 3) * kdim..(j + 4) * kdim],
        ];
        let rows = &mut out[j * lanes..(j + 4) * lanes];
        // descending vector widths keep every lane in SIMD code; lane
        // counts that are not multiples of 32 (e.g. a 12-wide batch)
        // would otherwise spend much of the work in the scalar tail
        let mut b = 0;
        while b + 32 <= lanes {
            mm_block4::<f64x8, 4>(split4(rows, lanes), wr, x, kr, lanes, b);
            b += 32;
        }
        if b + 16 <= lanes {
            mm_block4::<f64x8, 2>(split4(rows, lanes), wr, x, kr, lanes, b);
            b += 16;
        }
        if b + 8 <= lanes {
            mm_block4::<f64x8, 1>(split4(rows, lanes), wr, x, kr, lanes, b);
            b += 8;
        }
        if b + 4 <= lanes {
            mm_block4::<f64x4, 1>(split4(rows, lanes), wr, x, kr, lanes, b);
            b += 4;
        }
        while b < lanes {
            let mut a = [0.0f64; 4];
            for k in kr.0..kr.1 {
                let xv = x[k * lanes + b];
                for r in 0..4 {
                    a[r] = xv.mul_add(wr[r][k], a[r]);
                }
            }
            for r in 0..4 {
                rows[r * lanes + b] += a[r];
            }
            b += 1;
        }
        j += 4;
    }
    if j + 2 <= jdim {
        let w0 = &w[j * kdim..(j + 1) * kdim];
        let w1 = &w[(j + 1) * kdim..(j + 2) * kdim];
        let (o0, o1) = out[j * lanes..(j + 2) * lanes].split_at_mut(lanes);
        let mut b = 0;
        while b + 8 <= lanes {
            mm_block2::<f64x8, 1>(o0, o1, w0, w1, x, kr, lanes, b);
            b += 8;
        }
        if b + 4 <= lanes {
            mm_block2::<f64x4, 1>(o0, o1, w0, w1, x, kr, lanes, b);
            b += 4;
        }
        while b < lanes {
            let mut a0 = 0.0;
            let mut a1 = 0.0;
            for k in kr.0..kr.1 {
                let xv = x[k * lanes + b];
                a0 = xv.mul_add(w0[k], a0);
                a1 = xv.mul_add(w1[k], a1);
            }
            o0[b] += a0;
            o1[b] += a1;
            b += 1;
        }
        j += 2;
    }
    if j < jdim {
        let wr = &w[j * kdim..(j + 1) * kdim];
        let o = &mut out[j * lanes..(j + 1) * lanes];
        for b in 0..lanes {
            let mut a = 0.0;
            for k in kr.0..kr.1 {
                a = x[k * lanes + b].mul_add(wr[k], a);
            }
            o[b] += a;
        }
    }
}

/// `gw[j][k] += sum_lane d[j*lanes + lane] * xt[lane*kdim + k]`
///
/// `d` lane-minor `[jdim][lanes]`, `xt` lane-MAJOR `[lanes][kdim]`
/// (transpose of the forward activation, see [`transpose_lanes`]).
pub fn outer_acc(gw: &mut [f64], d: &[f64], xt: &[f64], jdim: usize, kdim: usize, lanes: usize) {
    debug_assert_eq!(gw.len(), jdim * kdim);
    debug_assert_eq!(d.len(), jdim * lanes);
    debug_assert_eq!(xt.len(), lanes * kdim);
    const KB: usize = 32;
    let mut j = 0;
    while j + 4 <= jdim {
        let dr: [&[f64]; 4] = [
            &d[j * lanes..(j + 1) * lanes],
            &d[(j + 1) * lanes..(j + 2) * lanes],
            &d[(j + 2) * lanes..(j + 3) * lanes],
            &d[(j + 3) * lanes..(j + 4) * lanes],
        ];
        let mut k0 = 0;
        while k0 + KB <= kdim {
            let mut acc = [[f64x8::splat(0.0); KB / 8]; 4];
            for b in 0..lanes {
                let base = b * kdim + k0;
                let s = [
                    f64x8::splat(dr[0][b]),
                    f64x8::splat(dr[1][b]),
                    f64x8::splat(dr[2][b]),
                    f64x8::splat(dr[3][b]),
                ];
                for v in 0..KB / 8 {
                    let xv = <f64x8 as Simd>::load(xt, base + 8 * v);
                    for r in 0..4 {
                        acc[r][v] = xv.mul_add(s[r], acc[r][v]);
                    }
                }
            }
            for r in 0..4 {
                for v in 0..KB / 8 {
                    acc[r][v].add_to(&mut gw[(j + r) * kdim + k0 + 8 * v..], 0);
                }
            }
            k0 += KB;
        }
        if k0 + 8 <= kdim {
            let mut acc = [f64x8::splat(0.0); 4];
            for b in 0..lanes {
                let xv = <f64x8 as Simd>::load(xt, b * kdim + k0);
                for r in 0..4 {
                    acc[r] = xv.mul_add(f64x8::splat(dr[r][b]), acc[r]);
                }
            }
            for r in 0..4 {
                acc[r].add_to(&mut gw[(j + r) * kdim + k0..], 0);
            }
            k0 += 8;
        }
        while k0 < kdim {
            let mut a = [0.0f64; 4];
            for b in 0..lanes {
                let xv = xt[b * kdim + k0];
                for r in 0..4 {
                    a[r] = xv.mul_add(dr[r][b], a[r]);
                }
            }
            for r in 0..4 {
                gw[(j + r) * kdim + k0] += a[r];
            }
            k0 += 1;
        }
        j += 4;
    }
    while j < jdim {
        let dr = &d[j * lanes..(j + 1) * lanes];
        for k in 0..kdim {
            let mut a = 0.0;
            for b in 0..lanes {
                a = xt[b * kdim + k].mul_add(dr[b], a);
            }
            gw[j * kdim + k] += a;
        }
        j += 1;
    }
}

/// `[rows][lanes]` -> `[lanes][rows]`.
pub fn transpose_lanes(dst: &mut [f64], src: &[f64], rows: usize, lanes: usize) {
    debug_assert_eq!(dst.len(), rows * lanes);
    debug_assert_eq!(src.len(), rows * lanes);
    for r in 0..rows {
        for b in 0..lanes {
            dst[b * rows + r] = src[r * lanes + b];
        }
    }
}

/// Plain matrix transpose, row-major `[rows][cols]` -> `[cols][rows]`.
pub fn transpose(dst: &mut [f64], src: &[f64], rows: usize, cols: usize) {
    debug_assert_eq!(dst.len(), rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

/// Same-padded 1D cross-correlation over lane-minor channel planes.
///
/// `xpad`: `[chans][(len + 2)][lanes]` with one zeroed position of padding
/// on each side; `w`: `[filters][chans][3]`; `out`: `[filters][len][lanes]`,
/// overwritten with `bias[f]` before accumulation.
pub fn conv3_fwd(
    out: &mut [f64],
    xpad: &[f64],
    w: &[f64],
    bias: &[f64],
    filters: usize,
    chans: usize,
    len: usize,
    lanes: usize,
) {
    let flat = len * lanes;
    let prow = (len + 2) * lanes;
    debug_assert_eq!(out.len(), filters * flat);
    debug_assert_eq!(xpad.len(), chans * prow);
    debug_assert_eq!(w.len(), filters * chans * 3);
    for (f, b) in bias.iter().enumerate().take(filters) {
        out[f * flat..(f + 1) * flat].fill(*b);
    }
    // Each (c, k) contributes a shifted contiguous view of the padded
    // plane; the accumulation is the matmul kernel with kdim = chans*3.
    conv3_accumulate(out, xpad, w, filters, chans, flat, prow, lanes, false);
}

/// Four-row conv accumulation over `NV * V::W` flat positions starting at
/// `p`, restricted to channels `[c0, ce)`.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn cv_block4<V: Simd, const NV: usize>(
    o: [&mut [f64]; 4],
    w: [&[f64]; 4],
    xpad: &[f64],
    c0: usize,
    ce: usize,
    prow: usize,
    lanes: usize,
    p: usize,
    flip: bool,
) {
    let mut acc = [[V::zero(); NV]; 4];
    for c in c0..ce {
        let base = c * prow + p;
        for k in 0..3 {
            let wi = c * 3 + if flip { 2 - k } else { k };
            let cf = [V::splat(w[0][wi]), V::splat(w[1][wi]), V::splat(w[2][wi]), V::splat(w[3][wi])];
            for v in 0..NV {
                let xv = V::load(xpad, base + k * lanes + V::W * v);
                for r in 0..4 {
                    acc[r][v] = xv.fma(cf[r], acc[r][v]);
                }
            }
        }
    }
    let [o0, o1, o2, o3] = o;
    for v in 0..NV {
        acc[0][v].add_to(o0, p + V::W * v);
        acc[1][v].add_to(o1, p + V::W * v);
        acc[2][v].add_to(o2, p + V::W * v);
        acc[3][v].add_to(o3, p + V::W * v);
    }
}

/// Two-row variant of [`cv_block4`].
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn cv_block2<V: Simd, const NV: usize>(
    o0: &mut [f64],
    o1: &mut [f64],
    w0: &[f64],
    w1: &[f64],
    xpad: &[f64],
    c0: usize,
    ce: usize,
    prow: usize,
    lanes: usize,
    p: usize,
    flip: bool,
) {
    let mut a0 = [V::zero(); NV];
    let mut a1 = [V::zero(); NV];
    for c in c0..ce {
        let base = c * prow + p;
        for k in 0..3 {
            let wi = c * 3 + if flip { 2 - k } else { k };
            let cf0 = V::splat(w0[wi]);
            let cf1 = V::splat(w1[wi]);
            for v in 0..NV {
                let xv = V::load(xpad, base + k * lanes + V::W * v);
                a0[v] = xv.fma(cf0, a0[v]);
                a1[v] = xv.fma(cf1, a1[v]);
            }
        }
    }
    for v in 0..NV {
        a0[v].add_to(o0, p + V::W * v);
        a1[v].add_to(o1, p + V::W * v);
    }
}

/// Shared accumulation loop for `conv3_fwd` (correlation) and
/// `conv3_grad_input` (flipped kernel). `flip` reverses the tap order.
///
/// Tiled `[position][channel-block][filter]` so the streamed slice of the
/// padded plane stays L2-resident while every filter consumes it. Channel
/// blocks flush partial sums to `out`; the per-element reduction order
/// over `(c, k)` is unchanged, so results match the untiled loop exactly.
#[allow(clippy::too_many_arguments)]
fn conv3_accumulate(
    out: &mut [f64],
    xpad: &[f64],
    w: &[f64],
    filters: usize,
    chans: usize,
    flat: usize,
    prow: usize,
    lanes: usize,
    flip: bool,
) {
    // tile so xpad chunk + weight block + out tile stay inside L2; wide
    // output matrices (256+ rows) need a narrower position tile
    let pb: usize = if filters >= 256 { 256 } else { 512 };
    const CB: usize = 32;
    let mut p0 = 0;
    while p0 < flat {
        let pe = (p0 + pb).min(flat);
        let mut c0 = 0;
        while c0 < chans {
            let ce = (c0 + CB).min(chans);
            let mut f = 0;
            while f + 4 <= filters {
                let wr: [&[f64]; 4] = [
                    &w[f * chans * 3..(f + 1) * chans * 3],
                    &w[(f + 1) * chans * 3..(f + 2) * chans * 3],
                    &w[(f + 2) * chans * 3..(f + 3) * chans * 3],
                    &w[(f + 3) * chans * 3..(f + 4) * chans * 3],
                ];
                let rows = &mut out[f * flat..(f + 4) * flat];
                let mut p = p0;
                while p + 32 <= pe {
                    cv_block4::<f64x8, 4>(split4(rows, flat), wr, xpad, c0, ce, prow, lanes, p, flip);
                    p += 32;
                }
                if p + 16 <= pe {
                    cv_block4::<f64x8, 2>(split4(rows, flat), wr, xpad, c0, ce, prow, lanes, p, flip);
                    p += 16;
                }
                if p + 8 <= pe {
                    cv_block4::<f64x8, 1>(split4(rows, flat), wr, xpad, c0, ce, prow, lanes, p, flip);
                    p += 8;
                }
                if p + 4 <= pe {
                    cv_block4::<f64x4, 1>(split4(rows, flat), wr, xpad, c0, ce, prow, lanes, p, flip);
                    p += 4;
                }
                while p < pe {
                    let mut a = [0.0f64; 4];
                    for c in c0..ce {
                        let base = c * prow + p;
                        for k in 0..3 {
                            let wi = c * 3 + if flip { 2 - k } else { k };
                            let xv = xpad[base + k * lanes];
                            for r in 0..4 {
                                a[r] = xv.mul_add(wr[r][wi], a[r]);
                            }
                        }
                    }
                    for r in 0..4 {
                        rows[r * flat + p] += a[r];
                    }
                    p += 1;
                }
                f += 4;
            }
            if f + 2 <= filters {
                let w0 = &w[f * chans * 3..(f + 1) * chans * 3];
                let w1 = &w[(f + 1) * chans * 3..(f + 2) * chans * 3];
                let (o0, o1) = out[f * flat..(f + 2) * flat].split_at_mut(flat);
                let mut p = p0;
                while p + 8 <= pe {
                    cv_block2::<f64x8, 1>(o0, o1, w0, w1, xpad, c0, ce, prow, lanes, p, flip);
                    p += 8;
                }
                if p + 4 <= pe {
                    cv_block2::<f64x4, 1>(o0, o1, w0, w1, xpad, c0, ce, prow, lanes, p, flip);
                    p += 4;
                }
                while p < pe {
                    let mut a0 = 0.0;
                    let mut a1 = 0.0;
                    for c in c0..ce {
                        let base = c * prow + p;
                        for k in 0..3 {
                            let wi = c * 3 + if flip { 2 - k } else { k };
                            let xv = xpad[base + k * lanes];
                            a0 = xv.mul_add(w0[wi], a0);
                            a1 = xv.mul_add(w1[wi], a1);
                        }
                    }
                    o0[p] += a0;
                    o1[p] += a1;
                    p += 1;
                }
                f += 2;
            }
            if f < filters {
                let wr = &w[f * chans * 3..(f + 1) * chans * 3];
                let o = &mut out[f * flat..(f + 1) * flat];
                for p in p0..pe {
                    let mut a = 0.0;
                    for c in c0..ce {
                        let base = c * prow + p;
                        for k in 0..3 {
                            let wi = c * 3 + if flip { 2 - k } else { k };
                            a = xpad[base + k * lanes].mul_add(wr[wi], a);
                        }
                    }
                    o[p] += a;
                }
            }
            c0 = ce;
        }
        p0 = pe;
    }
}

/// Weight and bias gradients for the same-padded conv:
/// `gw[f][c][k] += sum_flat d[f][flat] * xpad[c][flat + k*lanes]`,
/// `gb[f] += sum_flat d[f][flat]`.
///
/// Tiled over positions so the padded plane stays L2-resident while every
/// filter's delta row is correlated against it.
#[allow(clippy::too_many_arguments)]
pub fn conv3_grad_params(
    gw: &mut [f64],
    gb: &mut [f64],
    d: &[f64],
    xpad: &[f64],
    filters: usize,
    chans: usize,
    len: usize,
    lanes: usize,
) {
    let flat = len * lanes;
    let prow = (len + 2) * lanes;
    const PB: usize = 512;
    let mut p0 = 0;
    while p0 < flat {
        let pe = (p0 + PB).min(flat);
        let mut f = 0;
        // eight delta rows share every loaded input vector, so the inner
        // loop runs at FMA throughput instead of load throughput
        while f + 8 <= filters {
            let dr: [&[f64]; 8] = core::array::from_fn(|r| &d[(f + r) * flat..(f + r + 1) * flat]);
            for r in 0..8 {
                gb[f + r] += dr[r][p0..pe].iter().sum::<f64>();
            }
            for c in 0..chans {
                let xr = &xpad[c * prow..c * prow + flat + 2 * lanes];
                let mut acc = [[f64x8::splat(0.0); 3]; 8];
                let mut p = p0;
                while p + 8 <= pe {
                    let xv = [
                        <f64x8 as Simd>::load(xr, p),
                        <f64x8 as Simd>::load(xr, p + lanes),
                        <f64x8 as Simd>::load(xr, p + 2 * lanes),
                    ];
                    for r in 0..8 {
                        let dv = <f64x8 as Simd>::load(dr[r], p);
                        for k in 0..3 {
                            acc[r][k] = xv[k].mul_add(dv, acc[r][k]);
                        }
                    }
                    p += 8;
                }
                let mut sums = [[0.0f64; 3]; 8];
                for r in 0..8 {
                    for k in 0..3 {
                        sums[r][k] = Simd::hsum(acc[r][k]);
                    }
                }
                while p < pe {
                    for r in 0..8 {
                        for k in 0..3 {
                            sums[r][k] = xr[p + k * lanes].mul_add(dr[r][p], sums[r][k]);
                        }
                    }
                    p += 1;
                }
                for r in 0..8 {
                    for k in 0..3 {
                        gw[((f + r) * chans + c) * 3 + k] += sums[r][k];
                    }
                }
            }
            f += 8;
        }
        while f < filters {
            let dr = &d[f * flat..(f + 1) * flat];
            gb[f] += dr[p0..pe].iter().sum::<f64>();
            for c in 0..chans {
                let xr = &xpad[c * prow..c * prow + flat + 2 * lanes];
                let mut acc = [f64x8::splat(0.0); 3];
                let mut p = p0;
                while p + 8 <= pe {
                    let dv = <f64x8 as Simd>::load(dr, p);
                    for (k, a) in acc.iter_mut().enumerate() {
                        *a = <f64x8 as Simd>::load(xr, p + k * lanes).mul_add(dv, *a);
                    }
                    p += 8;
                }
                let mut sums = [0.0f64; 3];
                for (k, s) in sums.iter_mut().enumerate() {
                    *s = Simd::hsum(acc[k]);
                }
                while p < pe {
                    for (k, s) in sums.iter_mut().enumerate() {
                        *s = xr[p + k * lanes].mul_add(dr[p], *s);
                    }
                    p += 1;
                }
                for k in 0..3 {
                    gw[(f * chans + c) * 3 + k] += sums[k];
                }
            }
            f += 1;
        }
        p0 = pe;
    }
}

/// Input gradient of the same-padded conv: correlation of `d` (padded)
/// with the flipped kernel, channels and filters exchanged.
///
/// `wt`: `[chans][filters][3]` (weights transposed with [`transpose_conv_w`]),
/// `dpad`: `[filters][(len + 2)][lanes]`, `gx`: `[chans][len][lanes]`
/// (overwritten).
pub fn conv3_grad_input(
    gx: &mut [f64],
    dpad: &[f64],
    wt: &[f64],
    filters: usize,
    chans: usize,
    len: usize,
    lanes: usize,
) {
    let flat = len * lanes;
    let prow = (len + 2) * lanes;
    gx.fill(0.0);
    conv3_accumulate(gx, dpad, wt, chans, filters, flat, prow, lanes, true);
}

/// `[filters][chans][3]` -> `[chans][filters][3]`.
pub fn transpose_conv_w(dst: &mut [f64], src: &[f64], filters: usize, chans: usize) {
    debug_assert_eq!(dst.len(), filters * chans * 3);
    for f in 0..filters {
        for c in 0..chans {
            for k in 0..3 {
                dst[(c * filters + f) * 3 + k] = src[(f * chans + c) * 3 + k];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use alloc::vec;
    use alloc::vec::Vec;

    fn rand_vec(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
    }

    #[test]
    fn matmul_matches_naive() {
        let mut rng = SplitMix64::new(1);
        for &(j, k, b) in &[(1usize, 1usize, 1usize), (5, 7, 3), (8, 16, 16), (13, 31, 41), (64, 128, 40)] {
            let w = rand_vec(&mut rng, j * k);
            let x = rand_vec(&mut rng, k * b);
            let mut out = rand_vec(&mut rng, j * b);
            let mut expected = out.clone();
            for jj in 0..j {
                for bb in 0..b {
                    let mut a = 0.0;
                    for kk in 0..k {
                        a += w[jj * k + kk] * x[kk * b + bb];
                    }
                    expected[jj * b + bb] += a;
                }
            }
            matmul_acc(&mut out, &w, &x, j, k, b);
            for (o, e) in out.iter().zip(expected.iter()) {
                assert!((o - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn outer_matches_naive() {
        let mut rng = SplitMix64::new(2);
        for &(j, k, b) in &[(1usize, 1usize, 1usize), (3, 5, 2), (7, 16, 8), (10, 33, 40), (6, 77, 5)] {
            let d = rand_vec(&mut rng, j * b);
            let x = rand_vec(&mut rng, k * b); // lane-minor [k][b]
            let mut xt = vec![0.0; b * k];
            transpose_lanes(&mut xt, &x, k, b);
            let mut gw = rand_vec(&mut rng, j * k);
            let mut expected = gw.clone();
            for jj in 0..j {
                for kk in 0..k {
                    let mut a = 0.0;
                    for bb in 0..b {
                        a += d[jj * b + bb] * x[kk * b + bb];
                    }
                    expected[jj * k + kk] += a;
                }
            }
            outer_acc(&mut gw, &d, &xt, j, k, b);
            for (o, e) in gw.iter().zip(expected.iter()) {
                assert!((o - e).abs() < 1e-12);
            }
        }
    }

    fn naive_conv(
        x: &[f64],
        w: &[f64],
        bias: &[f64],
        filters: usize,
        chans: usize,
        len: usize,
        lanes: usize,
    ) -> Vec<f64> {
        let mut out = vec![0.0; filters * len * lanes];
        for f in 0..filters {
            for p in 0..len {
                for b in 0..lanes {
                    let mut a = bias[f];
                    for c in 0..chans {
                        for k in 0..3 {
                            let q = p as isize + k as isize - 1;
                            if q >= 0 && (q as usize) < len {
                                a += w[(f * chans + c) * 3 + k] * x[(c * len + q as usize) * lanes + b];
                            }
                        }
                    }
                    out[(f * len + p) * lanes + b] = a;
                }
            }
        }
        out
    }

    fn pad_planes(x: &[f64], chans: usize, len: usize, lanes: usize) -> Vec<f64> {
        let mut xpad = vec![0.0; chans * (len + 2) * lanes];
        for c in 0..chans {
            xpad[(c * (len + 2) + 1) * lanes..(c * (len + 2) + 1 + len) * lanes]
                .copy_from_slice(&x[c * len * lanes..(c + 1) * len * lanes]);
        }
        xpad
    }

    #[test]
    fn conv_fwd_matches_naive() {
        let mut rng = SplitMix64::new(3);
        for &(f, c, len, b) in &[
            (1usize, 1usize, 4usize, 1usize),
            (3, 2, 5, 3),
            (4, 3, 20, 16),
            (6, 5, 33, 7),
            (7, 70, 40, 3),
        ] {
            let x = rand_vec(&mut rng, c * len * b);
            let w = rand_vec(&mut rng, f * c * 3);
            let bias = rand_vec(&mut rng, f);
            let xpad = pad_planes(&x, c, len, b);
            let mut out = vec![0.0; f * len * b];
            conv3_fwd(&mut out, &xpad, &w, &bias, f, c, len, b);
            let expected = naive_conv(&x, &w, &bias, f, c, len, b);
            for (o, e) in out.iter().zip(expected.iter()) {
                assert!((o - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_hand_example() {
        // x = [1,2,3,4], kernel [1,0,-1], bias 0 -> [-2,-2,-2,3]
        let x = [1.0, 2.0, 3.0, 4.0];
        let xpad = pad_planes(&x, 1, 4, 1);
        let w = [1.0, 0.0, -1.0];
        let mut out = [0.0; 4];
        conv3_fwd(&mut out, &xpad, &w, &[0.0], 1, 1, 4, 1);
        assert_eq!(out, [-2.0, -2.0, -2.0, 3.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let x = [0.5, -1.5, 2.5, 0.0, 3.0];
        let xpad = pad_planes(&x, 1, 5, 1);
        let w = [0.0, 1.0, 0.0];
        let mut out = [0.0; 5];
        conv3_fwd(&mut out, &xpad, &w, &[0.0], 1, 1, 5, 1);
        assert_eq!(out, x);
    }

    #[test]
    fn conv_zero_weights_gives_bias() {
        let x = [1.0, 2.0, 3.0];
        let xpad = pad_planes(&x, 1, 3, 1);
        let mut out = [0.0; 3];
        conv3_fwd(&mut out, &xpad, &[0.0; 3], &[7.5], 1, 1, 3, 1);
        assert_eq!(out, [7.5, 7.5, 7.5]);
    }

    #[test]
    fn conv_grads_match_naive() {
        let mut rng = SplitMix64::new(4);
        for &(f, c, len, b) in &[(4usize, 3usize, 11usize, 5usize), (6, 4, 80, 8)] {
            let x = rand_vec(&mut rng, c * len * b);
            let w = rand_vec(&mut rng, f * c * 3);
            let d = rand_vec(&mut rng, f * len * b);
            let xpad = pad_planes(&x, c, len, b);

            let mut gw = vec![0.0; f * c * 3];
            let mut gb = vec![0.0; f];
            conv3_grad_params(&mut gw, &mut gb, &d, &xpad, f, c, len, b);

            let dpad = pad_planes(&d, f, len, b);
            let mut wt = vec![0.0; f * c * 3];
            transpose_conv_w(&mut wt, &w, f, c);
            let mut gx = vec![0.0; c * len * b];
            conv3_grad_input(&mut gx, &dpad, &wt, f, c, len, b);

            // naive grads from the definition of the forward pass
            let mut egw = vec![0.0; f * c * 3];
            let mut egb = vec![0.0; f];
            let mut egx = vec![0.0; c * len * b];
            for ff in 0..f {
                for p in 0..len {
                    for bb in 0..b {
                        let dv = d[(ff * len + p) * b + bb];
                        egb[ff] += dv;
                        for cc in 0..c {
                            for k in 0..3 {
                                let q = p as isize + k as isize - 1;
                                if q >= 0 && (q as usize) < len {
                                    egw[(ff * c + cc) * 3 + k] += dv * x[(cc * len + q as usize) * b + bb];
                                    egx[(cc * len + q as usize) * b + bb] += dv * w[(ff * c + cc) * 3 + k];
                                }
                            }
                        }
                    }
                }
            }
            for (a, e) in gw.iter().zip(egw.iter()) {
                assert!((a - e).abs() < 1e-11);
            }
            for (a, e) in gb.iter().zip(egb.iter()) {
                assert!((a - e).abs() < 1e-11);
            }
            for (a, e) in gx.iter().zip(egx.iter()) {
                assert!((a - e).abs() < 1e-11);
            }
        }
    }
}
