//! Scalar math shims and the fast exponential used by the network.
//!
//! With the `std` feature the shims forward to the hardware-backed inherent
//! methods; without it they fall back to `libm`. `fast_exp` is used on the
//! training hot path instead of either, so gate activations are identical
//! across both builds.

#[cfg(feature = "std")]
mod imp {
    #[inline(always)]
    pub fn sqrt(x: f64) -> f64 {
        x.sqrt()
    }
    #[inline(always)]
    pub fn floor(x: f64) -> f64 {
        x.floor()
    }
    #[inline(always)]
    pub fn round(x: f64) -> f64 {
        x.round()
    }
    #[inline(always)]
    pub fn exp(x: f64) -> f64 {
        x.exp()
    }
    #[inline(always)]
    pub fn ln(x: f64) -> f64 {
        x.ln()
    }
    #[inline(always)]
    pub fn sin(x: f64) -> f64 {
        x.sin()
    }
    #[inline(always)]
    pub fn cos(x: f64) -> f64 {
        x.cos()
    }
    #[inline(always)]
    pub fn atan2(y: f64, x: f64) -> f64 {
        y.atan2(x)
    }
    #[inline(always)]
    pub fn acos(x: f64) -> f64 {
        x.acos()
    }
}

#[cfg(not(feature = "std"))]
mod imp {
    #[inline(always)]
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }
    #[inline(always)]
    pub fn floor(x: f64) -> f64 {
        libm::floor(x)
    }
    #[inline(always)]
    pub fn round(x: f64) -> f64 {
        libm::round(x)
    }
    #[inline(always)]
    pub fn exp(x: f64) -> f64 {
        libm::exp(x)
    }
    #[inline(always)]
    pub fn ln(x: f64) -> f64 {
        libm::log(x)
    }
    #[inline(always)]
    pub fn sin(x: f64) -> f64 {
        libm::sin(x)
    }
    #[inline(always)]
    pub fn cos(x: f64) -> f64 {
        libm::cos(x)
    }
    #[inline(always)]
    pub fn atan2(y: f64, x: f64) -> f64 {
        libm::atan2(y, x)
    }
    #[inline(always)]
    pub fn acos(x: f64) -> f64 {
        libm::acos(x)
    }
}

pub use imp::*;

use wide::{bytemuck, f64x8, i64x8, u64x8};

const LOG2_E: f64 = core::f64::consts::LOG2_E;
const LN_2: f64 = core::f64::consts::LN_2;

/// Horner coefficients for `e^r`, highest degree first: `1/11!` down to
/// the two trailing `1.0`s for `k = 1` and `k = 0`.
const EXP_COEFFS: [f64; 11] = [
    1.0 / 3628800.0,
    1.0 / 362880.0,
    1.0 / 40320.0,
    1.0 / 5040.0,
    1.0 / 720.0,
    1.0 / 120.0,
    1.0 / 24.0,
    1.0 / 6.0,
    0.5,
    1.0,
    1.0,
];

/// Branch-free exponential, accurate to ~1e-11 relative.
///
/// Splits `x = k*ln2 + r` with `r` in `[0, ln2)`, evaluates a degree-11
/// Taylor polynomial for `e^r` (fused Horner steps), and scales by `2^k`
/// through the exponent bits. Smooth enough for finite-difference gradient
/// checks at eps 1e-5. [`fast_exp8`] is the 8-wide twin; the two produce
/// bitwise-identical results element for element.
#[inline(always)]
pub fn fast_exp(x: f64) -> f64 {
    let t = x * LOG2_E;
    // Clamp keeps the exponent-bit trick in range; deep underflow returns
    // exactly 0 below, overflow saturates at the largest finite f64.
    let t = t.clamp(-1022.0, 1023.0);
    let tf = floor(t);
    let r = (t - tf) * LN_2;
    let mut p = 1.0 / 39916800.0;
    for c in EXP_COEFFS {
        p = r.mul_add(p, c);
    }
    let bits = ((tf as i64 + 1023) << 52) as u64;
    let r = p * f64::from_bits(bits);
    // below the clamp the scaling bits bottom out at the smallest normal;
    // true exp has underflowed to zero long before that
    if x < -745.0 {
        0.0
    } else {
        r
    }
}

/// 8-wide [`fast_exp`]; same operations in the same order per element.
#[inline(always)]
pub fn fast_exp8(x: f64x8) -> f64x8 {
    let t = (x * f64x8::splat(LOG2_E)).fast_clamp(f64x8::splat(-1022.0), f64x8::splat(1023.0));
    let tf = t.floor();
    let r = (t - tf) * f64x8::splat(LN_2);
    let mut p = f64x8::splat(1.0 / 39916800.0);
    for c in EXP_COEFFS {
        p = r.mul_add(p, f64x8::splat(c));
    }
    let k = tf.trunc_int() + i64x8::splat(1023);
    let bits: u64x8 = bytemuck::cast(k);
    let scale: f64x8 = bytemuck::cast(bits << 52u32);
    let r = p * scale;
    x.simd_lt(f64x8::splat(-745.0)).select(f64x8::splat(0.0), r)
}

#[inline(always)]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + fast_exp(-x))
}

/// tanh via `fast_exp`, branch-free over the sign.
#[inline(always)]
pub fn tanh(x: f64) -> f64 {
    let a = x.abs();
    let e = fast_exp(-2.0 * a);
    let t = (1.0 - e) / (1.0 + e);
    if x < 0.0 {
        -t
    } else {
        t
    }
}

/// 8-wide [`sigmoid`]; bitwise identical to the scalar per element.
#[inline(always)]
pub fn sigmoid8(x: f64x8) -> f64x8 {
    f64x8::splat(1.0) / (f64x8::splat(1.0) + fast_exp8(-x))
}

/// 8-wide [`tanh`]; bitwise identical to the scalar per element.
#[inline(always)]
pub fn tanh8(x: f64x8) -> f64x8 {
    let a = x.abs();
    let e = fast_exp8(f64x8::splat(-2.0) * a);
    let t = (f64x8::splat(1.0) - e) / (f64x8::splat(1.0) + e);
    x.simd_lt(f64x8::splat(0.0)).select(-t, t)
}

#[inline(always)]
pub(crate) fn load8(x: &[f64], i: usize) -> f64x8 {
    debug_assert!(i + 8 <= x.len());
    // bounds proven by the callers' 8-wide loops
    let a: [f64; 8] = unsafe { core::ptr::read_unaligned(x.as_ptr().add(i).cast()) };
    f64x8::from(a)
}

/// `x^n` by squaring, exact for the small integer powers we need.
pub fn powi(x: f64, mut n: u64) -> f64 {
    let mut base = x;
    let mut acc = 1.0;
    while n > 0 {
        if n & 1 == 1 {
            acc *= base;
        }
        base *= base;
        n >>= 1;
    }
    acc
}

/// In-place sigmoid over a slice; the hot-path form used by the LSTM
/// gates. Four interleaved 8-wide vectors pipeline the serial Horner
/// chain of `fast_exp8`; results are identical to the scalar per element.
#[inline]
pub fn sigmoid_slice(xs: &mut [f64]) {
    let mut i = 0;
    while i + 32 <= xs.len() {
        let s: [f64x8; 4] = core::array::from_fn(|v| sigmoid8(load8(xs, i + 8 * v)));
        for (v, sv) in s.iter().enumerate() {
            xs[i + 8 * v..i + 8 * v + 8].copy_from_slice(&sv.to_array());
        }
        i += 32;
    }
    while i + 8 <= xs.len() {
        let s = sigmoid8(load8(xs, i));
        xs[i..i + 8].copy_from_slice(&s.to_array());
        i += 8;
    }
    for x in xs[i..].iter_mut() {
        *x = sigmoid(*x);
    }
}

/// In-place tanh over a slice. Same pipelined structure as
/// [`sigmoid_slice`].
#[inline]
pub fn tanh_slice(xs: &mut [f64]) {
    let mut i = 0;
    while i + 32 <= xs.len() {
        let t: [f64x8; 4] = core::array::from_fn(|v| tanh8(load8(xs, i + 8 * v)));
        for (v, tv) in t.iter().enumerate() {
            xs[i + 8 * v..i + 8 * v + 8].copy_from_slice(&tv.to_array());
        }
        i += 32;
    }
    while i + 8 <= xs.len() {
        let t = tanh8(load8(xs, i));
        xs[i..i + 8].copy_from_slice(&t.to_array());
        i += 8;
    }
    for x in xs[i..].iter_mut() {
        *x = tanh(*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_exp_matches_std() {
        let mut x = -30.0;
        let mut max_rel = 0.0f64;
        while x < 30.0 {
            let rel = (fast_exp(x) - x.exp()).abs() / x.exp();
            max_rel = max_rel.max(rel);
            x += 0.001;
        }
        assert!(max_rel < 5e-11, "max rel err {max_rel:e}");
    }

    #[test]
    fn fast_exp_extremes() {
        assert_eq!(fast_exp(-800.0), 0.0);
        // overflow saturates near the top of the finite range (~2^1023),
        // never NaN/inf
        assert!(fast_exp(800.0) > 1e307 && fast_exp(800.0).is_finite());
        assert_eq!(fast_exp(0.0), 1.0);
    }

    #[test]
    fn vector_paths_match_scalar_bitwise() {
        let mut i = 0i64;
        while i < 4000 {
            let xs: [f64; 8] = core::array::from_fn(|k| (i + k as i64) as f64 * 0.017 - 34.0);
            let v = f64x8::from(xs);
            let (e8, s8, t8) = (fast_exp8(v).to_array(), sigmoid8(v).to_array(), tanh8(v).to_array());
            for k in 0..8 {
                assert_eq!(e8[k].to_bits(), fast_exp(xs[k]).to_bits());
                assert_eq!(s8[k].to_bits(), sigmoid(xs[k]).to_bits());
                assert_eq!(t8[k].to_bits(), tanh(xs[k]).to_bits());
            }
            i += 8;
        }
        // extremes: deep underflow, saturation, zero
        let xs = [-800.0, 800.0, 0.0, -745.1, -744.9, 709.0, -709.0, 1.0];
        let e8 = fast_exp8(f64x8::from(xs)).to_array();
        for k in 0..8 {
            assert_eq!(e8[k].to_bits(), fast_exp(xs[k]).to_bits());
        }
    }

    #[test]
    fn tanh_sigmoid_bounds() {
        for i in -1000..1000 {
            let x = i as f64 * 0.05;
            let s = sigmoid(x);
            let t = tanh(x);
            assert!((0.0..=1.0).contains(&s));
            assert!((-1.0..=1.0).contains(&t));
            assert!((t - x.tanh()).abs() < 1e-10);
        }
    }
}
