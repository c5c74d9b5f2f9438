//! RMSE loss, scalar and batched with gradient.

use crate::error::{CoreError, Result};
use crate::math;
use alloc::format;

/// `sqrt(mean((pred - target)^2))` over one vector.
pub fn rmse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(CoreError::Shape(format!(
            "rmse length mismatch: {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(CoreError::Shape("rmse of empty vectors".into()));
    }
    let mut acc = 0.0;
    for (p, t) in pred.iter().zip(target) {
        let d = p - t;
        acc += d * d;
    }
    Ok(math::sqrt(acc / pred.len() as f64))
}

/// Batched RMSE over lane-minor buffers `[outputs][lanes]`.
///
/// Loss is the per-lane RMSE averaged over lanes; `dpred` receives the
/// gradient of that scalar with respect to every prediction. A lane with
/// zero error contributes zero gradient (the subgradient at the kink).
pub fn rmse_batch(
    pred: &[f64],
    target: &[f64],
    outputs: usize,
    lanes: usize,
    dpred: &mut [f64],
) -> f64 {
    rmse_batch_padded(pred, target, outputs, lanes, lanes, dpred)
}

/// [`rmse_batch`] over buffers whose lane stride exceeds the number of
/// real samples. Loss and gradient cover lanes `0..real` only and match
/// an unpadded call bit for bit; pad lanes get a zero gradient so their
/// backward contributions vanish exactly.
pub fn rmse_batch_padded(
    pred: &[f64],
    target: &[f64],
    outputs: usize,
    lanes: usize,
    real: usize,
    dpred: &mut [f64],
) -> f64 {
    debug_assert_eq!(pred.len(), outputs * lanes);
    debug_assert_eq!(target.len(), outputs * lanes);
    debug_assert_eq!(dpred.len(), outputs * lanes);
    debug_assert!(real <= lanes);
    for j in 0..outputs {
        dpred[j * lanes + real..(j + 1) * lanes].fill(0.0);
    }
    let mut total = 0.0;
    for l in 0..real {
        let mut acc = 0.0;
        for j in 0..outputs {
            let d = pred[j * lanes + l] - target[j * lanes + l];
            acc += d * d;
        }
        let rmse = math::sqrt(acc / outputs as f64);
        total += rmse;
        let scale = if rmse > 0.0 {
            1.0 / (rmse * (outputs * real) as f64)
        } else {
            0.0
        };
        for j in 0..outputs {
            let d = pred[j * lanes + l] - target[j * lanes + l];
            dpred[j * lanes + l] = d * scale;
        }
    }
    total / real as f64
}
