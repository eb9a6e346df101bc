//! Variance-minimizing placement of inducing points.
//!
//! The objective is the mean posterior variance over a candidate grid after
//! hypothetical measurements (with the model's noise variance) are added at
//! the inducing points `Z`:
//!
//! ```text
//! J(Z) = mean_g [ Σ(g,g) - Σ(g,Z) (Σ(Z,Z) + σ_n² I)⁻¹ Σ(Z,g) ]
//! ```
//!
//! where `Σ` is the current posterior covariance. Only the points' columns of
//! `Σ(G,Z)` depend on `Z`, so moving one point costs one column update.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::PlannerConfig;
use crate::gpr::{rbf, GpModel};
use crate::{Error, Result, Vec2};

/// Finite-difference step for the objective gradient, as a fraction of the
/// kernel lengthscale.
const FD_STEP: f64 = 1e-4;
const MAX_HALVINGS: usize = 10;
const MAX_STEP_GROWTH: f64 = 4.0;

pub struct VarianceObjective<'a> {
    model: &'a GpModel,
    grid: Vec<Vec2>,
    /// Whitened cross-covariance `L⁻¹ k(X, G)` of the training set and grid.
    grid_w: DMatrix<f64>,
    /// Current posterior variance at each grid point.
    grid_var: Vec<f64>,
}

/// Per-point cached quantities.
#[derive(Clone)]
struct Column {
    /// `L⁻¹ k(X, z)`
    w: DVector<f64>,
    /// `Σ(G, z)`
    cross: DVector<f64>,
}

impl<'a> VarianceObjective<'a> {
    pub fn new(model: &'a GpModel, grid: Vec<Vec2>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::arg("empty candidate grid"));
        }
        let grid_w = model.whitened(&grid);
        let sf2 = model.hyperparams().signal_variance;
        let grid_var = (0..grid.len())
            .map(|g| (sf2 - grid_w.column(g).norm_squared()).max(0.0))
            .collect();
        Ok(VarianceObjective {
            model,
            grid,
            grid_w,
            grid_var,
        })
    }

    pub fn grid(&self) -> &[Vec2] {
        &self.grid
    }

    /// Posterior variance at each candidate before any new measurement.
    pub fn grid_variance(&self) -> &[f64] {
        &self.grid_var
    }

    pub fn baseline(&self) -> f64 {
        self.grid_var.iter().sum::<f64>() / self.grid.len() as f64
    }

    fn column(&self, z: &Vec2) -> Column {
        let w = self.model.whitened(std::slice::from_ref(z)).column(0).into_owned();
        let h = self.model.hyperparams();
        let cross = DVector::from_fn(self.grid.len(), |g, _| {
            rbf(&self.grid[g], z, h) - self.grid_w.column(g).dot(&w)
        });
        Column { w, cross }
    }

    fn value(&self, zs: &[Vec2], cols: &[&Column]) -> f64 {
        let m = zs.len();
        let h = self.model.hyperparams();
        let mut a = DMatrix::from_fn(m, m, |i, j| rbf(&zs[i], &zs[j], h) - cols[i].w.dot(&cols[j].w));
        for i in 0..m {
            a[(i, i)] += h.noise_variance;
        }
        // symmetric PSD plus σ_n² I; fall back to a tiny extra jitter
        let chol = a.clone().cholesky().or_else(|| {
            let mut b = a;
            for i in 0..m {
                b[(i, i)] += 1e-9 * h.signal_variance;
            }
            b.cholesky()
        });
        let Some(chol) = chol else {
            return f64::INFINITY;
        };
        let s = DMatrix::from_fn(m, self.grid.len(), |i, g| cols[i].cross[g]);
        let t = chol
            .l_dirty()
            .solve_lower_triangular(&s)
            .expect("positive Cholesky diagonal");
        let reduction = t.norm_squared();
        (self.grid_var.iter().sum::<f64>() - reduction) / self.grid.len() as f64
    }

    /// `J(Z)`.
    pub fn evaluate(&self, zs: &[Vec2]) -> f64 {
        if zs.is_empty() {
            return self.baseline();
        }
        let cols: Vec<Column> = zs.iter().map(|z| self.column(z)).collect();
        let refs: Vec<&Column> = cols.iter().collect();
        self.value(zs, &refs)
    }

    /// Central-difference gradient with one column update per probe.
    fn gradient(&self, zs: &[Vec2], cols: &[Column], h: f64) -> Vec<Vec2> {
        (0..zs.len() * 2)
            .into_par_iter()
            .map(|k| {
                let (i, axis) = (k / 2, k % 2);
                let probe = |sign: f64| {
                    let mut moved = zs.to_vec();
                    moved[i][axis] += sign * h;
                    let col = self.column(&moved[i]);
                    let refs: Vec<&Column> = cols
                        .iter()
                        .enumerate()
                        .map(|(j, c)| if j == i { &col } else { c })
                        .collect();
                    self.value(&moved, &refs)
                };
                (probe(1.0) - probe(-1.0)) / (2.0 * h)
            })
            .collect::<Vec<f64>>()
            .chunks(2)
            .map(|g| Vec2::new(g[0], g[1]))
            .collect()
    }
}

/// Highest-variance candidates, spread out by farthest-point sampling.
///
/// The pool is the top quarter of the grid by current variance (at least
/// `count` points). Sampling starts from the highest-variance candidate.
pub fn default_init(objective: &VarianceObjective, count: usize) -> Vec<Vec2> {
    let var = objective.grid_variance();
    let grid = objective.grid();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    let pool_size = (grid.len().div_ceil(4)).max(count).min(grid.len());
    let pool = &order[..pool_size];

    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    let mut nearest = vec![f64::INFINITY; pool.len()];
    for _ in 0..count {
        // pool is variance-ordered, so ties in distance favour higher variance
        let pick = (0..pool.len())
            .max_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(b.cmp(&a)))
            .expect("non-empty pool");
        chosen.push(pool[pick]);
        for (slot, &c) in pool.iter().enumerate() {
            nearest[slot] = nearest[slot].min((grid[c] - grid[pool[pick]]).norm());
        }
    }
    chosen.into_iter().map(|i| grid[i]).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct InducingResult {
    pub points: Vec<Vec2>,
    /// J at the (projected) initial points.
    pub initial: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Projected gradient descent on `J` with backtracking. Every accepted step
/// strictly lowers `J`, so the result never scores worse than the start.
pub fn optimize_inducing_points(
    objective: &VarianceObjective,
    cfg: &PlannerConfig,
    init: &[Vec2],
) -> Result<InducingResult> {
    if init.is_empty() {
        return Err(Error::arg("no initial inducing points"));
    }
    let bounds = cfg.bounds;
    let opt = cfg.optimizer;
    let fd = FD_STEP * objective.model.hyperparams().lengthscale;

    let mut zs: Vec<Vec2> = init.iter().map(|z| bounds.clamp(z)).collect();
    let mut cols: Vec<Column> = zs.iter().map(|z| objective.column(z)).collect();
    let value_of = |zs: &[Vec2], cols: &[Column]| {
        let refs: Vec<&Column> = cols.iter().collect();
        objective.value(zs, &refs)
    };
    let initial = value_of(&zs, &cols);
    let mut value = initial;
    let mut step = opt.step_size;
    let mut iterations = 0;

    while iterations < opt.max_iters {
        iterations += 1;
        let grad = objective.gradient(&zs, &cols, fd);
        let gmax = grad.iter().map(|g| g.norm()).fold(0.0, f64::max);
        if !(gmax > 0.0) || !gmax.is_finite() {
            break;
        }
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<Vec2> = zs
                .iter()
                .zip(&grad)
                .map(|(z, g)| bounds.clamp(&(z - g * (step / gmax))))
                .collect();
            let trial_cols: Vec<Column> = trial.iter().map(|z| objective.column(z)).collect();
            let v = value_of(&trial, &trial_cols);
            if v < value {
                accepted = Some((trial, trial_cols, v));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, trial_cols, v)) = accepted else {
            break;
        };
        let gain = value - v;
        zs = trial;
        cols = trial_cols;
        value = v;
        if gain < opt.tolerance {
            break;
        }
        step = (step * 1.5).min(MAX_STEP_GROWTH * opt.step_size);
    }

    Ok(InducingResult {
        points: zs,
        initial,
        value,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_eval_grid;
    use crate::gpr::{fit, Hyperparams};
    use crate::ipp::OptimizerConfig;
    use crate::Bounds;

    fn hp() -> Hyperparams {
        Hyperparams {
            lengthscale: 5.0,
            signal_variance: 4.0,
            noise_variance: 0.01,
        }
    }

    fn cfg(side: f64, spacing: f64, iters: usize) -> PlannerConfig {
        PlannerConfig {
            candidate_grid_spacing: spacing,
            optimizer: OptimizerConfig {
                step_size: 0.5,
                max_iters: iters,
                tolerance: 1e-10,
            },
            ..PlannerConfig::new(1, Bounds::square(side))
        }
    }

    /// Direct posterior-variance computation with the measurement set
    /// appended, independent of the column caching.
    fn brute_force_j(model_inputs: &[Vec2], zs: &[Vec2], grid: &[Vec2], h: &Hyperparams) -> f64 {
        let all: Vec<Vec2> = model_inputs.iter().chain(zs).copied().collect();
        let n = all.len();
        let mut k = DMatrix::from_fn(n, n, |i, j| rbf(&all[i], &all[j], h));
        for i in 0..n {
            k[(i, i)] += h.noise_variance;
        }
        let kinv = k.try_inverse().unwrap();
        grid.iter()
            .map(|g| {
                let ks = DVector::from_fn(n, |i, _| rbf(&all[i], g, h));
                h.signal_variance - ks.dot(&(&kinv * &ks))
            })
            .sum::<f64>()
            / grid.len() as f64
    }

    #[test]
    fn objective_matches_brute_force() {
        let inputs = vec![Vec2::new(2.0, 3.0), Vec2::new(8.0, 1.0), Vec2::new(5.0, 9.0)];
        let targets = vec![Vec2::new(0.1, 0.0); 3];
        let model = fit(&inputs, &targets, hp()).unwrap();
        let grid = make_eval_grid(&Bounds::square(10.0), 1.0).unwrap();
        let obj = VarianceObjective::new(&model, grid.clone()).unwrap();
        let zs = [Vec2::new(1.0, 1.0), Vec2::new(7.5, 6.0)];
        let got = obj.evaluate(&zs);
        let want = brute_force_j(&inputs, &zs, &grid, &hp());
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        assert!((obj.evaluate(&[]) - brute_force_j(&inputs, &[], &grid, &hp())).abs() < 1e-9);
    }

    #[test]
    fn single_point_converges_to_center() {
        let model = GpModel::prior(hp()).unwrap();
        let c = cfg(20.0, 1.0, 200);
        let obj = VarianceObjective::new(&model, c.candidate_grid().unwrap()).unwrap();
        let init = default_init(&obj, 1);
        let res = optimize_inducing_points(&obj, &c, &init).unwrap();
        let center = Vec2::new(10.0, 10.0);
        assert!((res.points[0] - center).norm() < 0.5, "ended at {:?}", res.points[0]);
        let j_center = obj.evaluate(&[center]);
        for w in make_eval_grid(&c.bounds, 1.0).unwrap() {
            let on_perimeter = w.x == 0.0 || w.y == 0.0 || w.x == 20.0 || w.y == 20.0;
            if on_perimeter {
                assert!(j_center < obj.evaluate(&[w]));
            }
        }
    }

    #[test]
    fn saturating_the_grid_reaches_noise_floor() {
        let model = GpModel::prior(hp()).unwrap();
        let c = cfg(8.0, 2.0, 5);
        let grid = c.candidate_grid().unwrap();
        let obj = VarianceObjective::new(&model, grid.clone()).unwrap();
        let res = optimize_inducing_points(&obj, &c, &grid).unwrap();
        assert!(res.value < hp().noise_variance, "J {}", res.value);
        assert!(res.value <= res.initial);
    }

    #[test]
    fn points_avoid_covered_half() {
        let data_grid = make_eval_grid(
            &Bounds::new(Vec2::new(0.0, 0.0), Vec2::new(20.0, 40.0)).unwrap(),
            2.0,
        )
        .unwrap();
        let targets = vec![Vec2::zeros(); data_grid.len()];
        let model = fit(&data_grid, &targets, hp()).unwrap();
        let c = PlannerConfig {
            n_drones: 3,
            points_per_drone: 2,
            ..cfg(40.0, 2.0, 50)
        };
        let obj = VarianceObjective::new(&model, c.candidate_grid().unwrap()).unwrap();
        let init = default_init(&obj, 6);
        let res = optimize_inducing_points(&obj, &c, &init).unwrap();
        assert!(res.value <= res.initial);
        for p in &res.points {
            assert!(p.x > 20.0, "point {p:?} in the covered half");
        }
    }

    #[test]
    fn init_spreads_over_ties() {
        let model = GpModel::prior(hp()).unwrap();
        let c = cfg(50.0, 2.5, 1);
        let obj = VarianceObjective::new(&model, c.candidate_grid().unwrap()).unwrap();
        let init = default_init(&obj, 4);
        for i in 0..4 {
            for j in 0..i {
                assert!((init[i] - init[j]).norm() > 10.0);
            }
        }
    }

    #[test]
    fn empty_grid_rejected() {
        let model = GpModel::prior(hp()).unwrap();
        assert!(VarianceObjective::new(&model, vec![]).is_err());
    }
}
