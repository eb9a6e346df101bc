//! Boustrophedon (lawnmower) coverage routes.

use serde::{Deserialize, Serialize};

use super::Route;
use crate::geometry::node_count;
use crate::{Bounds, Error, Result, Vec2};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartCorner {
    #[default]
    BottomLeft,
    BottomRight,
    TopLeft,
    TopRight,
}

/// Lane heights covering `[lo, hi]` so that every point is within
/// `spacing / 2` of a lane.
fn lanes(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let h = hi - lo;
    if h <= spacing {
        return vec![lo + 0.5 * h];
    }
    let count = node_count(h, spacing).max(2);
    // node_count gives floor(h/spacing) + 1; one more lane if it does not divide
    let count = if (count - 1) as f64 * spacing < h * (1.0 - 1e-12) {
        count + 1
    } else {
        count
    };
    let gap = h / (count - 1) as f64;
    (0..count)
        .map(|i| if i + 1 == count { hi } else { lo + i as f64 * gap })
        .collect()
}

/// Horizontal sweeps across `bounds`, alternating direction, beginning at
/// `start`. Each lane contributes its two end points.
pub fn boustrophedon_path(bounds: &Bounds, lane_spacing: f64, start: StartCorner) -> Result<Route> {
    bounds.validate()?;
    if !(lane_spacing > 0.0) || !lane_spacing.is_finite() {
        return Err(Error::arg("lane spacing must be positive"));
    }
    let mut ys = lanes(bounds.min.y, bounds.max.y, lane_spacing);
    if matches!(start, StartCorner::TopLeft | StartCorner::TopRight) {
        ys.reverse();
    }
    let mut left_to_right = matches!(start, StartCorner::BottomLeft | StartCorner::TopLeft);
    let mut pts = Vec::with_capacity(ys.len() * 2);
    for y in ys {
        let (a, b) = if left_to_right {
            (bounds.min.x, bounds.max.x)
        } else {
            (bounds.max.x, bounds.min.x)
        };
        pts.push(Vec2::new(a, y));
        pts.push(Vec2::new(b, y));
        left_to_right = !left_to_right;
    }
    Route::new(pts)
}

/// Splits `bounds` into `n` equal horizontal bands and sweeps each from its
/// bottom-left corner.
pub fn boustrophedon_bands(bounds: &Bounds, n: usize, lane_spacing: f64) -> Result<Vec<Route>> {
    if n == 0 {
        return Err(Error::arg("need at least one band"));
    }
    let h = bounds.height() / n as f64;
    (0..n)
        .map(|i| {
            let lo = bounds.min.y + i as f64 * h;
            let hi = if i + 1 == n { bounds.max.y } else { lo + h };
            let band = Bounds {
                min: Vec2::new(bounds.min.x, lo),
                max: Vec2::new(bounds.max.x, hi),
            };
            boustrophedon_path(&band, lane_spacing, StartCorner::BottomLeft)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lane_distance(route: &Route, p: &Vec2) -> f64 {
        route
            .waypoints()
            .chunks(2)
            .map(|seg| {
                let (a, b) = (seg[0], seg[1]);
                let (x0, x1) = (a.x.min(b.x), a.x.max(b.x));
                let dx = if p.x < x0 { x0 - p.x } else if p.x > x1 { p.x - x1 } else { 0.0 };
                dx.hypot(p.y - a.y)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn fifty_meter_square() {
        let r = boustrophedon_path(&Bounds::square(50.0), 10.0, StartCorner::BottomLeft).unwrap();
        assert_eq!(r.len(), 12);
        assert_eq!(r.first(), Vec2::new(0.0, 0.0));
        assert_eq!(r.waypoints()[1], Vec2::new(50.0, 0.0));
        assert_eq!(r.waypoints()[2], Vec2::new(50.0, 10.0));
        assert_eq!(r.last(), Vec2::new(0.0, 50.0));
    }

    #[test]
    fn thin_strip_is_one_lane() {
        let b = Bounds::new(Vec2::new(0.0, 0.0), Vec2::new(30.0, 4.0)).unwrap();
        let r = boustrophedon_path(&b, 10.0, StartCorner::TopRight).unwrap();
        assert_eq!(r.waypoints(), &[Vec2::new(30.0, 2.0), Vec2::new(0.0, 2.0)]);
    }

    #[test]
    fn start_corners() {
        let b = Bounds::square(20.0);
        let tl = boustrophedon_path(&b, 10.0, StartCorner::TopLeft).unwrap();
        assert_eq!(tl.first(), Vec2::new(0.0, 20.0));
        let br = boustrophedon_path(&b, 10.0, StartCorner::BottomRight).unwrap();
        assert_eq!(br.first(), Vec2::new(20.0, 0.0));
        assert_eq!(br.waypoints()[1], Vec2::new(0.0, 0.0));
    }

    #[test]
    fn bands_partition_height() {
        let routes = boustrophedon_bands(&Bounds::square(60.0), 3, 10.0).unwrap();
        assert_eq!(routes.len(), 3);
        assert_eq!(routes[0].first(), Vec2::new(0.0, 0.0));
        assert_eq!(routes[1].first(), Vec2::new(0.0, 20.0));
        assert_eq!(routes[2].last().y, 60.0);
        assert!(boustrophedon_bands(&Bounds::square(60.0), 0, 10.0).is_err());
    }

    #[test]
    fn rejects_bad_spacing() {
        assert!(boustrophedon_path(&Bounds::square(5.0), 0.0, StartCorner::BottomLeft).is_err());
    }

    proptest! {
        #[test]
        fn every_point_is_covered(
            w in 1.0f64..80.0,
            h in 0.0f64..80.0,
            spacing in 0.5f64..20.0,
            probes in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 32),
        ) {
            let b = Bounds::new(Vec2::new(-3.0, 7.0), Vec2::new(-3.0 + w, 7.0 + h)).unwrap();
            let r = boustrophedon_path(&b, spacing, StartCorner::BottomLeft).unwrap();
            for (u, v) in probes {
                let p = Vec2::new(b.min.x + u * w, b.min.y + v * h);
                prop_assert!(lane_distance(&r, &p) <= spacing / 2.0 + 1e-9);
            }
        }
    }
}
