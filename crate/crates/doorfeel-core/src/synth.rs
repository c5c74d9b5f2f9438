//! Synthetic force profiles and a deterministic rating oracle.
//!
//! Stands in for the proprietary recorded dataset: each synthetic car is
//! a handful of physical-ish parameters, its profiles are a smooth force
//! curve plus detent bumps and per-trial noise, and its "ground truth"
//! ratings are fixed smooth maps of noiseless profile statistics. The
//! maps are the oracle the end-to-end tests learn against; they make no
//! claim about human perception.

use crate::error::{CoreError, Result};
use crate::eval::{CarData, Dataset, CAR_LABELS};
use crate::math;
use crate::profile::{NormalizedProfile, PROFILE_LEN, SAMPLES_PER_DEGREE};
use crate::ratings::RatingVector;
use crate::rng::SplitMix64;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// A localized resistance bump from the check-strap mechanism.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Detent {
    pub center_deg: f64,
    pub width_deg: f64,
    pub height_n: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SyntheticCarSpec {
    pub car_id: String,
    pub base_force: f64,
    pub weight_amplitude: f64,
    /// N per degree, added as `slope * angle`.
    pub friction_slope: f64,
    pub detents: Vec<Detent>,
    pub noise_sigma: f64,
    pub max_angle_deg: f64,
    pub seed: u64,
}

impl SyntheticCarSpec {
    pub fn validate(&self) -> Result<()> {
        if self.detents.iter().any(|d| d.width_deg <= 0.0) {
            return Err(CoreError::Validation("detent width must be positive".into()));
        }
        if !(self.max_angle_deg > 1.0 && self.max_angle_deg <= 63.0) {
            return Err(CoreError::Validation(format!(
                "max_angle_deg {} outside (1, 63]",
                self.max_angle_deg
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(CoreError::Validation("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// Noiseless force at an opening angle.
    fn force_at(&self, theta: f64) -> f64 {
        let mut f = self.base_force
            + self.weight_amplitude * math::sin(theta * core::f64::consts::PI / 126.0)
            + self.friction_slope * theta;
        for d in &self.detents {
            let z = (theta - d.center_deg) / d.width_deg;
            f += d.height_n * math::exp(-0.5 * z * z);
        }
        f.max(0.0)
    }
}

/// One synthetic trial: samples the force law 10/degree at bin centers
/// `theta = (s + 0.5) / 10` up to `max_angle_deg`, adds Gaussian noise
/// from the `(spec.seed, trial_seed)` stream, clamps at zero and
/// zero-pads to 630.
pub fn synth_profile(spec: &SyntheticCarSpec, trial_seed: u64) -> Result<NormalizedProfile> {
    spec.validate()?;
    let mut rng = SplitMix64::derive(spec.seed, trial_seed);
    let mut values = Vec::with_capacity(PROFILE_LEN);
    for s in 0..PROFILE_LEN {
        let theta = (s as f64 + 0.5) / SAMPLES_PER_DEGREE as f64;
        if theta >= spec.max_angle_deg {
            values.push(0.0);
        } else {
            let noise = if spec.noise_sigma > 0.0 {
                spec.noise_sigma * rng.normal()
            } else {
                0.0
            };
            values.push((spec.force_at(theta) + noise).max(0.0));
        }
    }
    NormalizedProfile::new(spec.car_id.clone(), format!("synth-{trial_seed}"), values)
}

/// Profile statistics the rating oracle is built on, computed on the
/// noiseless profile's active (non-padded) region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileStats {
    /// Mean force, N.
    pub mean: f64,
    /// Peak force, N.
    pub peak: f64,
    /// Total variation: sum of |successive differences|, N.
    pub tv: f64,
    /// Mean of the last active quarter minus mean of the first — the
    /// force trend over the swing, N.
    pub trend: f64,
}

pub fn profile_stats(spec: &SyntheticCarSpec) -> Result<ProfileStats> {
    let mut noiseless = spec.clone();
    noiseless.noise_sigma = 0.0;
    let p = synth_profile(&noiseless, 0)?;
    let active = ((spec.max_angle_deg * SAMPLES_PER_DEGREE as f64) as usize).min(PROFILE_LEN);
    let v = &p.values[..active];
    let mean = v.iter().sum::<f64>() / active as f64;
    let peak = v.iter().fold(0.0f64, |a, &b| a.max(b));
    let tv = v.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
    let q = active / 4;
    let head = v[..q].iter().sum::<f64>() / q as f64;
    let tail = v[active - q..].iter().sum::<f64>() / q as f64;
    Ok(ProfileStats { mean, peak, tv, trend: tail - head })
}

fn clamp100(v: f64) -> f64 {
    v.clamp(0.0, 100.0)
}

/// The deterministic rating oracle: fixed affine maps from noiseless
/// profile statistics, clamped to [0, 100]. Coefficients are arbitrary
/// but frozen — they define the synthetic ground truth.
///
/// With mean force `M`, peak `P`, total variation `TV` and trend `G`
/// (see [`ProfileStats`]), the pairs are, in canonical pair order:
///
/// | # | pair                        | map                      |
/// |---|-----------------------------|--------------------------|
/// | 0 | Jerky / Easy-to-operate     | `100 − 9·TV`             |
/// | 1 | Smooth / Rough              | `8·TV`                   |
/// | 2 | Frictional / Frictionless   | `100 − 9·M`              |
/// | 3 | Hard-to-pull / Easy-to-open | `115 − 7·P`              |
/// | 4 | Balanced / Unstable         | `12·(P − M)`             |
/// | 5 | Soft / Hard                 | `7·P − 20`               |
/// | 6 | Cheap / Classy              | `6·M + 30 − 5·TV`        |
/// | 7 | Damped / Recoiling          | `50 + 12·G`              |
/// | 8 | Discordant / Consistent     | `100 − 6·TV`             |
/// | 9 | Heavy / Light               | `100 − 8.5·M`            |
pub fn synth_ratings(spec: &SyntheticCarSpec) -> Result<RatingVector> {
    let s = profile_stats(spec)?;
    let (m, p, tv, g) = (s.mean, s.peak, s.tv, s.trend);
    let values = [
        clamp100(100.0 - 9.0 * tv),
        clamp100(8.0 * tv),
        clamp100(100.0 - 9.0 * m),
        clamp100(115.0 - 7.0 * p),
        clamp100(12.0 * (p - m)),
        clamp100(7.0 * p - 20.0),
        clamp100(6.0 * m + 30.0 - 5.0 * tv),
        clamp100(50.0 + 12.0 * g),
        clamp100(100.0 - 6.0 * tv),
        clamp100(100.0 - 8.5 * m),
    ];
    RatingVector::new(spec.car_id.clone(), values)
}

/// The six shipped car specs, named after the study's cars and spanning
/// heavy/smooth (Genesis) to light/jerky (K3). Noise is 3% of base force.
pub fn default_car_specs(master_seed: u64) -> Vec<SyntheticCarSpec> {
    let mk = |i: usize,
              base: f64,
              amp: f64,
              slope: f64,
              detents: Vec<Detent>,
              max_angle: f64| SyntheticCarSpec {
        car_id: CAR_LABELS[i].into(),
        base_force: base,
        weight_amplitude: amp,
        friction_slope: slope,
        detents,
        noise_sigma: 0.03 * base,
        max_angle_deg: max_angle,
        seed: SplitMix64::derive(master_seed, 0x5E_ED00 + i as u64).next_u64(),
    };
    let d = |c: f64, w: f64, h: f64| Detent { center_deg: c, width_deg: w, height_n: h };
    alloc::vec![
        mk(0, 10.5, 2.4, 0.020, alloc::vec![], 63.0),
        mk(1, 9.2, 2.0, 0.012, alloc::vec![d(25.0, 4.0, 0.8)], 61.0),
        mk(2, 4.6, 1.0, -0.008, alloc::vec![d(12.0, 1.6, 2.4), d(30.0, 1.5, 2.0)], 58.0),
        mk(3, 6.2, 1.5, 0.000, alloc::vec![d(20.0, 2.2, 1.4)], 61.5),
        mk(4, 8.4, 2.2, 0.015, alloc::vec![d(15.0, 2.0, 1.9), d(35.0, 2.5, 1.6)], 63.0),
        mk(5, 7.3, 1.8, 0.010, alloc::vec![d(18.0, 2.0, 1.2), d(40.0, 2.0, 1.0)], 62.0),
    ]
}

/// Full synthetic dataset: `trials` noisy profiles per car with the
/// oracle rating as the shared target.
pub fn synth_dataset(specs: &[SyntheticCarSpec], trials: usize) -> Result<Dataset> {
    if trials == 0 {
        return Err(CoreError::Validation("trials must be >= 1".into()));
    }
    let mut cars = Vec::with_capacity(specs.len());
    for spec in specs {
        let rating = synth_ratings(spec)?;
        let mut profiles = Vec::with_capacity(trials);
        for trial in 0..trials {
            profiles.push(synth_profile(spec, trial as u64 + 1)?.values);
        }
        cars.push(CarData {
            car_id: spec.car_id.clone(),
            profiles,
            rating: rating.values,
        });
    }
    Ok(Dataset { cars })
}
