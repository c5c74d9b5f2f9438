//! Angle-normalized fixed-length force profiles.
//!
//! A trial becomes 63 one-degree bins, each reduced to 10 force values,
//! giving a 630-sample profile. Cars that open less than 63 degrees are
//! zero-padded at the end.

use crate::error::{CoreError, Result};
use crate::math;
use crate::series::SynchronizedTrial;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub const MAX_ANGLE_DEG: usize = 63;
pub const SAMPLES_PER_DEGREE: usize = 10;
pub const PROFILE_LEN: usize = MAX_ANGLE_DEG * SAMPLES_PER_DEGREE;

/// 630 force values, 10 per degree over 0-63 degrees.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct NormalizedProfile {
    pub car_id: String,
    pub trial_id: String,
    pub values: Vec<f64>,
}

impl NormalizedProfile {
    pub fn new(car_id: String, trial_id: String, values: Vec<f64>) -> Result<Self> {
        if values.len() != PROFILE_LEN {
            return Err(CoreError::Validation(format!(
                "profile must have {PROFILE_LEN} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::Validation(format!(
                "profile value at index {i} is not finite"
            )));
        }
        Ok(Self { car_id, trial_id, values })
    }
}

/// Split force samples into 63 one-degree bins `[k, k+1)`, keeping time
/// order inside each bin. Samples at or past 63 degrees are discarded.
pub fn bin_by_degree(trial: &SynchronizedTrial) -> Vec<Vec<f64>> {
    let mut bins = vec![Vec::new(); MAX_ANGLE_DEG];
    for s in &trial.samples {
        let k = math::floor(s.angle_deg) as isize;
        if (0..MAX_ANGLE_DEG as isize).contains(&k) {
            bins[k as usize].push(s.force_mag);
        }
    }
    bins
}

/// Reduce one degree bin to exactly `n` values.
///
/// Longer bins are decimated with endpoint-preserving uniform index
/// selection; shorter non-empty bins are linearly interpolated up to `n`;
/// empty bins become `n` zeros (the zero-padding convention for missing
/// angular coverage).
pub fn resample_bin(bin: &[f64], n: usize) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    match bin.len() {
        0 => vec![0.0; n],
        1 => vec![bin[0]; n],
        len if len >= n => (0..n)
            .map(|i| bin[math::round((i * (len - 1)) as f64 / (n - 1) as f64) as usize])
            .collect(),
        len => (0..n)
            .map(|i| {
                let pos = (i * (len - 1)) as f64 / (n - 1) as f64;
                let lo = math::floor(pos) as usize;
                let frac = pos - lo as f64;
                if lo + 1 < len {
                    bin[lo] * (1.0 - frac) + bin[lo + 1] * frac
                } else {
                    bin[lo]
                }
            })
            .collect(),
    }
}

/// Full normalization: 63 bins x 10 samples, concatenated in degree order.
pub fn build_profile(
    trial: &SynchronizedTrial,
    car_id: &str,
    trial_id: &str,
) -> Result<NormalizedProfile> {
    if trial.samples.is_empty() {
        return Err(CoreError::Validation("empty trial".into()));
    }
    let max_angle = trial
        .samples
        .iter()
        .map(|s| s.angle_deg)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_angle < 1.0 {
        return Err(CoreError::Validation(format!(
            "trial never opens past 1 degree (max {max_angle:.3}); profile would be all padding"
        )));
    }
    let mut values = Vec::with_capacity(PROFILE_LEN);
    for bin in bin_by_degree(trial) {
        values.extend(resample_bin(&bin, SAMPLES_PER_DEGREE));
    }
    NormalizedProfile::new(car_id.into(), trial_id.into(), values)
}
