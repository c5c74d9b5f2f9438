//! Raw sensor series and timestamp synchronization.
//!
//! The force sensor samples at a nominal 1 kHz, the optical tracker at
//! 80 Hz. `synchronize` upsamples position to the force timestamps by
//! linear interpolation and converts each marker position to an opening
//! angle, producing one `(t, force magnitude, angle)` triple per force
//! sample inside the overlapping time range.

use crate::error::{CoreError, Result};
use crate::geometry::{compute_angle, HingeReference, Vec3};
use alloc::format;
use alloc::vec::Vec;

#[derive(Debug, Clone)]
pub struct RawForceSeries {
    /// `(t seconds, force vector in newtons)`, strictly increasing in `t`.
    pub samples: Vec<(f64, Vec3)>,
    pub nominal_rate: f64,
}

#[derive(Debug, Clone)]
pub struct RawPositionSeries {
    /// `(t seconds, marker position in meters)`, strictly increasing in `t`.
    pub samples: Vec<(f64, Vec3)>,
    pub nominal_rate: f64,
}

fn check_timestamps(ts: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    let mut count = 0usize;
    for (i, t) in ts.enumerate() {
        if !t.is_finite() {
            return Err(CoreError::Validation(format!(
                "{what}: non-finite timestamp at sample {i}"
            )));
        }
        if t <= prev {
            return Err(CoreError::Validation(format!(
                "{what}: timestamps not strictly increasing at sample {i} ({prev} -> {t})"
            )));
        }
        prev = t;
        count += 1;
    }
    if count < 2 {
        return Err(CoreError::Validation(format!(
            "{what}: need at least 2 samples, got {count}"
        )));
    }
    Ok(())
}

impl RawForceSeries {
    pub fn new(samples: Vec<(f64, Vec3)>, nominal_rate: f64) -> Result<Self> {
        if nominal_rate <= 0.0 {
            return Err(CoreError::Validation("nominal_rate must be positive".into()));
        }
        check_timestamps(samples.iter().map(|s| s.0), "force series")?;
        Ok(Self { samples, nominal_rate })
    }
}

impl RawPositionSeries {
    pub fn new(samples: Vec<(f64, Vec3)>, nominal_rate: f64) -> Result<Self> {
        if nominal_rate <= 0.0 {
            return Err(CoreError::Validation("nominal_rate must be positive".into()));
        }
        check_timestamps(samples.iter().map(|s| s.0), "position series")?;
        Ok(Self { samples, nominal_rate })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncSample {
    pub t: f64,
    pub force_mag: f64,
    pub angle_deg: f64,
}

/// One door-opening trial with force magnitude and opening angle on the
/// force sensor's time base.
#[derive(Debug, Clone)]
pub struct SynchronizedTrial {
    pub samples: Vec<SyncSample>,
}

/// Interpolate position linearly at the timestamp of every force sample in
/// the overlap of both streams, then reduce to `(force magnitude, angle)`.
pub fn synchronize(
    force: &RawForceSeries,
    position: &RawPositionSeries,
    reference: &HingeReference,
) -> Result<SynchronizedTrial> {
    reference.validate()?;
    let p = &position.samples;
    let t_lo = force.samples[0].0.max(p[0].0);
    let t_hi = force.samples[force.samples.len() - 1].0.min(p[p.len() - 1].0);
    if t_lo > t_hi {
        return Err(CoreError::NoTemporalOverlap);
    }

    let mut out = Vec::new();
    // Walking cursor over the position stream; force timestamps are sorted.
    let mut hi = 1usize;
    for &(t, f) in &force.samples {
        if t < t_lo || t > t_hi {
            continue;
        }
        while hi < p.len() - 1 && p[hi].0 < t {
            hi += 1;
        }
        let (t0, p0) = p[hi - 1];
        let (t1, p1) = p[hi];
        let frac = (t - t0) / (t1 - t0);
        let pos = p0.lerp(p1, frac);
        let angle_deg = compute_angle(pos, reference)?;
        out.push(SyncSample {
            t,
            force_mag: f.norm(),
            angle_deg,
        });
    }
    Ok(SynchronizedTrial { samples: out })
}
