//! Accuracy scores against the ground-truth field.
//!
//! All RMSE values pool the two vector components: the mean runs over every
//! (point, component) pair, so `rmse = sqrt(mean |err|² / 2)` and it equals
//! `sqrt((rmse_x² + rmse_y²) / 2)`.

use serde::{Deserialize, Serialize};

use crate::field::BiasField;
use crate::gpr::GpModel;
use crate::sbe::{BiasEstimate, BiasEstimateSet};
use crate::{Error, Result, Vec2};

/// One row of a run's RMSE time series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseRecord {
    pub time: f64,
    /// `None` before the bias solver has run.
    pub solver_rmse: Option<f64>,
    pub map_rmse: f64,
    pub n_deltas: usize,
    pub n_nodes: usize,
}

/// Pooled RMSE of a set of error vectors; `None` when empty.
pub fn pooled_rmse<I: IntoIterator<Item = Vec2>>(errors: I) -> Option<f64> {
    let (sum, count) = errors
        .into_iter()
        .fold((0.0, 0usize), |(s, c), e| (s + e.norm_squared(), c + 1));
    (count > 0).then(|| (sum / (2 * count) as f64).sqrt())
}

/// Solver RMSE with the true bias of each reachable node supplied by
/// `truth_of`. Unreachable nodes are ignored.
pub fn solver_rmse_with<F>(estimates: &BiasEstimateSet, mut truth_of: F) -> Result<f64>
where
    F: FnMut(&BiasEstimate) -> Result<Vec2>,
{
    let errors = estimates
        .entries
        .iter()
        .filter_map(|e| e.bias.map(|b| truth_of(e).map(|t| b - t)))
        .collect::<Result<Vec<_>>>()?;
    pooled_rmse(errors).ok_or(Error::EmptyInput("no reachable bias estimates"))
}

/// Solver RMSE with the truth evaluated at each node's own position.
pub fn solver_rmse(estimates: &BiasEstimateSet, truth: &BiasField) -> Result<f64> {
    solver_rmse_with(estimates, |e| truth.eval(&e.position))
}

/// Map RMSE of precomputed predictive means over `grid`.
pub fn rmse_of_means(means: &[Vec2], truth: &BiasField, grid: &[Vec2]) -> Result<f64> {
    if means.len() != grid.len() {
        return Err(Error::arg("one predicted mean per grid point required"));
    }
    let errors = means
        .iter()
        .zip(grid)
        .map(|(m, p)| truth.eval(p).map(|t| m - t))
        .collect::<Result<Vec<_>>>()?;
    pooled_rmse(errors).ok_or(Error::EmptyInput("empty evaluation grid"))
}

/// Map RMSE of a model's predictive mean. A prior model scores the all-zero
/// map.
pub fn map_rmse(model: &GpModel, truth: &BiasField, grid: &[Vec2]) -> Result<f64> {
    rmse_of_means(&model.predict_mean(grid), truth, grid)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut ranks = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                ranks[k] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mean) * (b - mean)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mean).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - mean).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}
