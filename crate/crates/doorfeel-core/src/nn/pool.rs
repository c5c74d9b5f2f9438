//! Non-overlapping max pooling with pool size 2.
//!
//! Works on any buffer organized as `[groups][units][block]`: pooling pairs
//! consecutive units, each unit being `block` contiguous values. For the
//! convolution stream `units` are positions and `block` is the lane count;
//! for the LSTM stream `units` are time steps and `block` is `units*lanes`.
//! An odd trailing unit is dropped; ties keep the first index.

use alloc::vec;
use alloc::vec::Vec;

pub struct PoolCache {
    /// 0 = first element of the window won, 1 = second.
    pub argmax: Vec<u8>,
}

pub fn maxpool2(
    x: &[f64],
    out: &mut [f64],
    groups: usize,
    units: usize,
    block: usize,
) -> PoolCache {
    let pairs = units / 2;
    debug_assert_eq!(x.len(), groups * units * block);
    debug_assert_eq!(out.len(), groups * pairs * block);
    let mut argmax = vec![0u8; groups * pairs * block];
    for g in 0..groups {
        let xg = &x[g * units * block..];
        let og = &mut out[g * pairs * block..(g + 1) * pairs * block];
        let ag = &mut argmax[g * pairs * block..(g + 1) * pairs * block];
        for p in 0..pairs {
            let a = &xg[2 * p * block..(2 * p + 1) * block];
            let b = &xg[(2 * p + 1) * block..(2 * p + 2) * block];
            let o = &mut og[p * block..(p + 1) * block];
            let m = &mut ag[p * block..(p + 1) * block];
            for l in 0..block {
                // strict > keeps the first index on ties
                if b[l] > a[l] {
                    o[l] = b[l];
                    m[l] = 1;
                } else {
                    o[l] = a[l];
                    m[l] = 0;
                }
            }
        }
    }
    PoolCache { argmax }
}

/// Scatter upstream gradients back to the winning inputs; `dx` is
/// overwritten (dropped trailing units get zero gradient).
pub fn maxpool2_backward(
    d: &[f64],
    dx: &mut [f64],
    cache: &PoolCache,
    groups: usize,
    units: usize,
    block: usize,
) {
    let pairs = units / 2;
    debug_assert_eq!(d.len(), groups * pairs * block);
    debug_assert_eq!(dx.len(), groups * units * block);
    dx.fill(0.0);
    for g in 0..groups {
        for p in 0..pairs {
            let base_out = (g * pairs + p) * block;
            let base_in = (g * units + 2 * p) * block;
            for l in 0..block {
                let side = cache.argmax[base_out + l] as usize;
                dx[base_in + side * block + l] = d[base_out + l];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_pairs() {
        let x = [1.0, 3.0, 2.0, 5.0];
        let mut out = [0.0; 2];
        let c = maxpool2(&x, &mut out, 1, 4, 1);
        assert_eq!(out, [3.0, 5.0]);
        assert_eq!(c.argmax, vec![1, 1]);
    }

    #[test]
    fn tie_keeps_first() {
        let x = [7.0, 7.0];
        let mut out = [0.0; 1];
        let c = maxpool2(&x, &mut out, 1, 2, 1);
        assert_eq!(out, [7.0]);
        assert_eq!(c.argmax, vec![0]);
    }

    #[test]
    fn odd_trailing_dropped() {
        let x = [1.0, 2.0, 9.0];
        let mut out = [0.0; 1];
        maxpool2(&x, &mut out, 1, 3, 1);
        assert_eq!(out, [2.0]);
    }

    #[test]
    fn backward_scatters_to_winner() {
        let x = [1.0, 3.0, 5.0, 2.0, 4.0];
        let mut out = [0.0; 2];
        let c = maxpool2(&x, &mut out, 1, 5, 1);
        let d = [10.0, 20.0];
        let mut dx = [0.0; 5];
        maxpool2_backward(&d, &mut dx, &c, 1, 5, 1);
        assert_eq!(dx, [0.0, 10.0, 20.0, 0.0, 0.0]);
    }

    #[test]
    fn output_dominates_window() {
        let x: alloc::vec::Vec<f64> = (0..32).map(|i| ((i * 37) % 17) as f64).collect();
        let mut out = [0.0; 16];
        maxpool2(&x, &mut out, 2, 8, 2);
        for g in 0..2 {
            for p in 0..4 {
                for l in 0..2 {
                    let o = out[(g * 4 + p) * 2 + l];
                    let a = x[(g * 8 + 2 * p) * 2 + l];
                    let b = x[(g * 8 + 2 * p + 1) * 2 + l];
                    assert_eq!(o, a.max(b));
                }
            }
        }
    }
}
