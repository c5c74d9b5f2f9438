//! Door opening angle from tracked marker positions.

use crate::error::{CoreError, Result};
use crate::math;
use alloc::format;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub const RAD_TO_DEG: f64 = 180.0 / core::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn norm(self) -> f64 {
        math::sqrt(self.dot(self))
    }

    pub fn lerp(self, o: Vec3, t: f64) -> Vec3 {
        Vec3::new(
            self.x + (o.x - self.x) * t,
            self.y + (o.y - self.y) * t,
            self.z + (o.z - self.z) * t,
        )
    }
}

/// One-time tracked hinge position plus the marker position at the closed
/// door; defines the zero of the opening angle.
#[derive(Debug, Clone, Copy)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct HingeReference {
    pub hinge: Vec3,
    pub initial_marker: Vec3,
    pub up_axis: Vec3,
}

impl HingeReference {
    pub fn validate(&self) -> Result<()> {
        if self.initial_marker.sub(self.hinge).norm() <= 0.0 {
            return Err(CoreError::Validation(
                "initial marker coincides with the hinge".into(),
            ));
        }
        let n = self.up_axis.norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(CoreError::Validation(format!(
                "up_axis must be a unit vector (norm {n})"
            )));
        }
        Ok(())
    }
}

/// Project `v` onto the plane normal to the (unit) axis.
fn project(v: Vec3, axis: Vec3) -> Vec3 {
    v.sub(axis.scale(v.dot(axis)))
}

/// Unsigned opening angle in degrees, in `[0, 180]`.
///
/// Both the current marker and the initial marker are projected onto the
/// horizontal plane (normal to `up_axis`) before measuring the angle at the
/// hinge, so vertical marker offset does not bias the reading.
pub fn compute_angle(p: Vec3, reference: &HingeReference) -> Result<f64> {
    const EPS: f64 = 1e-12;
    let w = project(p.sub(reference.hinge), reference.up_axis);
    let w0 = project(reference.initial_marker.sub(reference.hinge), reference.up_axis);
    if w.norm() < EPS || w0.norm() < EPS {
        return Err(CoreError::DegenerateGeometry(
            "marker projects onto the hinge axis".into(),
        ));
    }
    // atan2 form of the arccos angle; well conditioned near 0 and 180 deg.
    let angle = math::atan2(w.cross(w0).norm(), w.dot(w0)) * RAD_TO_DEG;
    Ok(angle)
}
