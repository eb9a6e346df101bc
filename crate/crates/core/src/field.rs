//! Synthetic ground-truth GPS bias fields.
//!
//! A field maps a true position to the offset the GPS adds to readings taken
//! there. Fields are plain values; evaluation has no side effects.

use serde::{Deserialize, Serialize};

use crate::geometry::is_finite;
use crate::{Error, Result, Vec2};

/// Slack on the interpolation grid's hull so that nodes computed as
/// `origin + i * spacing` are never rejected by rounding.
const HULL_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BiasField {
    /// The same offset everywhere.
    Constant { vector: Vec2 },
    /// Radially outward offsets with a Gaussian magnitude profile around
    /// `center`.
    GaussianRadial {
        center: Vec2,
        peak_magnitude: f64,
        sigma: f64,
    },
    /// Pointwise vector sum of the parts.
    Sum { parts: Vec<BiasField> },
    /// Bilinear interpolation of node values; `values[iy][ix]` sits at
    /// `origin + (ix, iy) * spacing`.
    GridInterp {
        origin: Vec2,
        spacing: f64,
        values: Vec<Vec<Vec2>>,
    },
}

impl BiasField {
    pub fn constant(x: f64, y: f64) -> Self {
        BiasField::Constant {
            vector: Vec2::new(x, y),
        }
    }

    /// Samples `source` on the nodes of an `nx × ny` grid.
    pub fn sampled(
        source: &BiasField,
        origin: Vec2,
        spacing: f64,
        nx: usize,
        ny: usize,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::arg("sampled grid needs at least one node per axis"));
        }
        let values = (0..ny)
            .map(|iy| {
                (0..nx)
                    .map(|ix| source.eval(&(origin + Vec2::new(ix as f64, iy as f64) * spacing)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let field = BiasField::GridInterp {
            origin,
            spacing,
            values,
        };
        field.validate()?;
        Ok(field)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BiasField::Constant { vector } => {
                if !is_finite(vector) {
                    return Err(Error::arg("constant field vector must be finite"));
                }
            }
            BiasField::GaussianRadial {
                center,
                peak_magnitude,
                sigma,
            } => {
                if !is_finite(center) {
                    return Err(Error::arg("gaussian center must be finite"));
                }
                if !(*sigma > 0.0) || !sigma.is_finite() {
                    return Err(Error::arg(format!("gaussian sigma must be > 0, got {sigma}")));
                }
                if !(*peak_magnitude >= 0.0) || !peak_magnitude.is_finite() {
                    return Err(Error::arg(format!(
                        "gaussian peak magnitude must be >= 0, got {peak_magnitude}"
                    )));
                }
            }
            BiasField::Sum { parts } => {
                for p in parts {
                    p.validate()?;
                }
            }
            BiasField::GridInterp {
                origin,
                spacing,
                values,
            } => {
                if !is_finite(origin) {
                    return Err(Error::arg("grid origin must be finite"));
                }
                if !(*spacing > 0.0) || !spacing.is_finite() {
                    return Err(Error::arg(format!("grid spacing must be > 0, got {spacing}")));
                }
                let nx = values.first().map_or(0, Vec::len);
                if nx == 0 {
                    return Err(Error::arg("grid values must be non-empty"));
                }
                if values.iter().any(|row| row.len() != nx) {
                    return Err(Error::arg("grid values must be rectangular"));
                }
                if values.iter().flatten().any(|v| !is_finite(v)) {
                    return Err(Error::arg("grid values must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Bias at `position`.
    pub fn eval(&self, position: &Vec2) -> Result<Vec2> {
        if !is_finite(position) {
            return Err(Error::arg(format!("non-finite query position {position:?}")));
        }
        self.eval_unchecked(position)
    }

    fn eval_unchecked(&self, p: &Vec2) -> Result<Vec2> {
        match self {
            BiasField::Constant { vector } => Ok(*vector),
            BiasField::GaussianRadial {
                center,
                peak_magnitude,
                sigma,
            } => {
                let d = p - center;
                let r2 = d.norm_squared();
                if r2 == 0.0 {
                    return Ok(Vec2::zeros());
                }
                let mag = peak_magnitude * (-r2 / (2.0 * sigma * sigma)).exp();
                Ok(d * (mag / r2.sqrt()))
            }
            BiasField::Sum { parts } => parts
                .iter()
                .try_fold(Vec2::zeros(), |acc, part| Ok(acc + part.eval_unchecked(p)?)),
            BiasField::GridInterp {
                origin,
                spacing,
                values,
            } => bilinear(origin, *spacing, values, p),
        }
    }
}

/// Locates `u` (in node units) on an axis with `n` nodes: returns the lower
/// node index and the fractional weight of the upper node.
fn axis_cell(u: f64, n: usize) -> Option<(usize, f64)> {
    let last = (n - 1) as f64;
    if u < -HULL_SLACK || u > last + HULL_SLACK {
        return None;
    }
    let u = u.clamp(0.0, last);
    if n == 1 {
        return Some((0, 0.0));
    }
    let i = (u.floor() as usize).min(n - 2);
    Some((i, u - i as f64))
}

fn bilinear(origin: &Vec2, spacing: f64, values: &[Vec<Vec2>], p: &Vec2) -> Result<Vec2> {
    let ny = values.len();
    let nx = values[0].len();
    let rel = (p - origin) / spacing;
    let (Some((ix, fx)), Some((iy, fy))) = (axis_cell(rel.x, nx), axis_cell(rel.y, ny)) else {
        return Err(Error::Domain([p.x, p.y]));
    };
    let at = |jx: usize, jy: usize| values[jy.min(ny - 1)][jx.min(nx - 1)];
    let bottom = at(ix, iy) * (1.0 - fx) + at(ix + 1, iy) * fx;
    let top = at(ix, iy + 1) * (1.0 - fx) + at(ix + 1, iy + 1) * fx;
    Ok(bottom * (1.0 - fy) + top * fy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn radial(peak: f64, sigma: f64) -> BiasField {
        BiasField::GaussianRadial {
            center: Vec2::new(35.0, 30.0),
            peak_magnitude: peak,
            sigma,
        }
    }

    #[test]
    fn constant_everywhere() {
        let f = BiasField::constant(2.0, 0.0);
        assert_eq!(f.eval(&Vec2::new(10.0, 10.0)).unwrap(), Vec2::new(2.0, 0.0));
    }

    #[test]
    fn radial_zero_at_center() {
        let f = radial(5.0, 10.0);
        assert_eq!(f.eval(&Vec2::new(35.0, 30.0)).unwrap(), Vec2::zeros());
    }

    #[test]
    fn radial_one_sigma_out() {
        let v = radial(5.0, 10.0).eval(&Vec2::new(45.0, 30.0)).unwrap();
        assert!((v.x - 5.0 * (-0.5f64).exp()).abs() < 1e-14);
        assert!((v.x - 3.0327).abs() < 1e-4);
        assert_eq!(v.y, 0.0);
    }

    #[test]
    fn radial_points_outward() {
        let v = radial(5.0, 10.0).eval(&Vec2::new(30.0, 25.0)).unwrap();
        assert!(v.x < 0.0 && v.y < 0.0);
        assert!((v.x - v.y).abs() < 1e-14);
    }

    #[test]
    fn grid_interp_out_of_hull_is_domain_error() {
        let g = BiasField::sampled(&radial(5.0, 10.0), Vec2::zeros(), 10.0, 6, 6).unwrap();
        assert!(matches!(g.eval(&Vec2::new(50.1, 0.0)), Err(Error::Domain(_))));
        assert!(matches!(g.eval(&Vec2::new(-0.1, 3.0)), Err(Error::Domain(_))));
        assert!(g.eval(&Vec2::new(50.0, 50.0)).is_ok());
    }

    #[test]
    fn grid_interp_single_row() {
        let g = BiasField::GridInterp {
            origin: Vec2::zeros(),
            spacing: 1.0,
            values: vec![vec![Vec2::new(0.0, 0.0), Vec2::new(2.0, 4.0)]],
        };
        assert_eq!(g.eval(&Vec2::new(0.5, 0.0)).unwrap(), Vec2::new(1.0, 2.0));
        assert!(g.eval(&Vec2::new(0.5, 0.5)).is_err());
    }

    #[test]
    fn non_finite_query_rejected() {
        let f = BiasField::constant(1.0, 1.0);
        assert!(matches!(f.eval(&Vec2::new(f64::NAN, 0.0)), Err(Error::Argument(_))));
    }

    #[test]
    fn validation() {
        assert!(radial(5.0, 0.0).validate().is_err());
        assert!(radial(-1.0, 1.0).validate().is_err());
        assert!(radial(0.0, 1.0).validate().is_ok());
        let ragged = BiasField::GridInterp {
            origin: Vec2::zeros(),
            spacing: 1.0,
            values: vec![vec![Vec2::zeros(); 2], vec![Vec2::zeros(); 3]],
        };
        assert!(ragged.validate().is_err());
        let nested = BiasField::Sum {
            parts: vec![BiasField::constant(0.0, 0.0), radial(1.0, -2.0)],
        };
        assert!(nested.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let f = BiasField::Sum {
            parts: vec![BiasField::constant(2.0, 0.0), radial(5.0, 10.0)],
        };
        let text = toml::to_string(&toml::Value::try_from(&f).unwrap()).unwrap();
        let back: BiasField = toml::from_str(&text).unwrap();
        assert_eq!(back, f);
    }

    fn arb_simple() -> impl Strategy<Value = BiasField> {
        prop_oneof![
            (-5.0..5.0f64, -5.0..5.0f64).prop_map(|(x, y)| BiasField::constant(x, y)),
            (0.0..50.0f64, 0.0..50.0f64, 0.0..8.0f64, 1.0..20.0f64).prop_map(|(cx, cy, p, s)| {
                BiasField::GaussianRadial {
                    center: Vec2::new(cx, cy),
                    peak_magnitude: p,
                    sigma: s,
                }
            }),
        ]
    }

    proptest! {
        #[test]
        fn sum_is_linear(parts in prop::collection::vec(arb_simple(), 1..5),
                         x in 0.0..50.0f64, y in 0.0..50.0f64) {
            let p = Vec2::new(x, y);
            let expected = parts.iter().fold(Vec2::zeros(), |acc, f| acc + f.eval(&p).unwrap());
            let got = BiasField::Sum { parts }.eval(&p).unwrap();
            prop_assert!((got - expected).norm() < 1e-12);
        }

        #[test]
        fn evaluation_is_deterministic(f in arb_simple(), x in 0.0..50.0f64, y in 0.0..50.0f64) {
            let p = Vec2::new(x, y);
            prop_assert_eq!(f.eval(&p).unwrap(), f.eval(&p).unwrap());
        }

        #[test]
        fn radial_magnitude_non_increasing(peak in 0.0..10.0f64, sigma in 0.5..20.0f64,
                                           angle in 0.0..std::f64::consts::TAU,
                                           r1 in 1e-6..60.0f64, dr in 0.0..30.0f64) {
            let f = BiasField::GaussianRadial { center: Vec2::new(35.0, 30.0), peak_magnitude: peak, sigma };
            let dir = Vec2::new(angle.cos(), angle.sin());
            let near = f.eval(&(Vec2::new(35.0, 30.0) + dir * r1)).unwrap().norm();
            let far = f.eval(&(Vec2::new(35.0, 30.0) + dir * (r1 + dr))).unwrap().norm();
            prop_assert!(far <= near + 1e-12);
        }

        #[test]
        fn sampled_grid_reproduces_nodes_and_bounds_error(f in arb_simple(),
                                                          fx in 0.0..1.0f64, fy in 0.0..1.0f64,
                                                          ix in 0usize..10, iy in 0usize..10) {
            let h = 5.0;
            let g = BiasField::sampled(&f, Vec2::zeros(), h, 11, 11).unwrap();
            let node = Vec2::new(ix as f64 * h, iy as f64 * h);
            prop_assert_eq!(g.eval(&node).unwrap(), f.eval(&node).unwrap());

            // bilinear error is bounded by h²/8 times the largest second
            // derivative; estimate the latter with finite differences over
            // the cell and allow a safety factor
            let q = node + Vec2::new(fx * h, fy * h);
            let err = (g.eval(&q).unwrap() - f.eval(&q).unwrap()).norm();
            let step = h / 8.0;
            let mut curv: f64 = 0.0;
            for sx in 0..=8 {
                for sy in 0..=8 {
                    let c = node + Vec2::new(sx as f64 * step, sy as f64 * step);
                    let fc = f.eval(&c).unwrap();
                    let dxx = f.eval(&(c + Vec2::new(step, 0.0))).unwrap() - fc * 2.0
                        + f.eval(&(c - Vec2::new(step, 0.0))).unwrap();
                    let dyy = f.eval(&(c + Vec2::new(0.0, step))).unwrap() - fc * 2.0
                        + f.eval(&(c - Vec2::new(0.0, step))).unwrap();
                    curv = curv.max(dxx.norm() / (step * step)).max(dyy.norm() / (step * step));
                }
            }
            // skip cells containing a radial center, where the field is not smooth
            if let BiasField::GaussianRadial { center, .. } = &f {
                if (center - q).norm() < 2.0 * h { return Ok(()); }
            }
            prop_assert!(err <= 2.0 * h * h / 4.0 * curv + 1e-12, "err {} curv {}", err, curv);
        }
    }
}
