//! Planar primitives shared by every module.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A point or displacement in the plane, meters.
pub type Vec2 = nalgebra::Vector2<f64>;

pub const TAU: f64 = std::f64::consts::TAU;

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_pi(theta: f64) -> f64 {
    let w = wrap_angle(theta);
    if w > std::f64::consts::PI {
        w - TAU
    } else {
        w
    }
}

pub fn is_finite(v: &Vec2) -> bool {
    v.x.is_finite() && v.y.is_finite()
}

/// Axis-aligned rectangle `[min.x, max.x] × [min.y, max.y]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn new(min: Vec2, max: Vec2) -> Result<Self> {
        let b = Bounds { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn square(side: f64) -> Self {
        Bounds {
            min: Vec2::zeros(),
            max: Vec2::new(side, side),
        }
    }

    /// Degenerate (zero-width or zero-height) rectangles are allowed.
    pub fn validate(&self) -> Result<()> {
        if !is_finite(&self.min) || !is_finite(&self.max) {
            return Err(Error::arg("bounds must be finite"));
        }
        if self.max.x < self.min.x || self.max.y < self.min.y {
            return Err(Error::arg(format!(
                "bounds max {:?} below min {:?}",
                self.max, self.min
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn clamp(&self, p: &Vec2) -> Vec2 {
        Vec2::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }
}

/// Number of grid nodes along an extent, inclusive of both edges when the
/// spacing divides the extent (up to rounding noise).
pub(crate) fn node_count(extent: f64, spacing: f64) -> usize {
    let ratio = extent / spacing;
    let snapped = ratio.round();
    let steps = if (ratio - snapped).abs() < 1e-9 * ratio.max(1.0) {
        snapped
    } else {
        ratio.floor()
    };
    steps as usize + 1
}

/// Row-major regular grid over `bounds` (x varies fastest).
pub fn make_eval_grid(bounds: &Bounds, spacing: f64) -> Result<Vec<Vec2>> {
    bounds.validate()?;
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::arg(format!("grid spacing must be positive, got {spacing}")));
    }
    let nx = node_count(bounds.width(), spacing);
    let ny = node_count(bounds.height(), spacing);
    let mut pts = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        let y = bounds.min.y + iy as f64 * spacing;
        for ix in 0..nx {
            pts.push(Vec2::new(bounds.min.x + ix as f64 * spacing, y));
        }
    }
    Ok(pts)
}
