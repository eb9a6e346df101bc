//! Minimum-cost drone-to-route assignment.

use super::Route;
use crate::{Error, Result, Vec2};

/// Relative slack used when testing whether an alternative assignment ties
/// the optimum.
const TIE_TOL: f64 = 1e-12;

/// Minimum-cost perfect matching of a square cost matrix.
///
/// Returns `perm` with `perm[row] = column`. Among optimal matchings the
/// lexicographically smallest `perm` is returned.
pub fn solve_assignment(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = cost.len();
    if cost.iter().any(|r| r.len() != n) {
        return Err(Error::arg("assignment cost matrix must be square"));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::arg("assignment costs must be finite"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let rows: Vec<usize> = (0..n).collect();
    let cols: Vec<usize> = (0..n).collect();
    let mut perm = hungarian(cost, &rows, &cols);
    let total = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>();
    let opt = total(&perm);
    let tol = TIE_TOL * (1.0 + opt.abs());

    // Fix rows in order to the smallest column that still admits an optimum.
    let mut prefix_cost = 0.0;
    for i in 0..n {
        let used = &perm[..i];
        for j in 0..perm[i] {
            if used.contains(&j) {
                continue;
            }
            let sub_rows: Vec<usize> = (i + 1..n).collect();
            let sub_cols: Vec<usize> = (0..n).filter(|c| *c != j && !used.contains(c)).collect();
            let sub = hungarian(cost, &sub_rows, &sub_cols);
            let sub_cost: f64 = sub_rows.iter().zip(&sub).map(|(&r, &c)| cost[r][c]).sum();
            if prefix_cost + cost[i][j] + sub_cost <= opt + tol {
                perm[i] = j;
                perm[i + 1..].copy_from_slice(&sub);
                break;
            }
        }
        prefix_cost += cost[i][perm[i]];
    }
    Ok(perm)
}

/// Shortest augmenting path Hungarian method on the sub-matrix
/// `cost[rows][cols]`. Returns the chosen column (global index) per row.
fn hungarian(cost: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> Vec<usize> {
    let n = rows.len();
    debug_assert_eq!(n, cols.len());
    let c = |i: usize, j: usize| cost[rows[i]][cols[j]];
    // 1-based potentials and matches; index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut match_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        match_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = match_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[match_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if match_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            match_col[j0] = match_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[match_col[j] - 1] = cols[j - 1];
    }
    out
}

/// Assigns route `perm[i]` to drone `i`, minimizing the summed distance from
/// each drone to its route's first waypoint.
pub fn assign_routes(routes: &[Route], positions: &[Vec2]) -> Result<Vec<usize>> {
    if routes.len() != positions.len() {
        return Err(Error::arg(format!(
            "{} routes for {} drones",
            routes.len(),
            positions.len()
        )));
    }
    let cost: Vec<Vec<f64>> = positions
        .iter()
        .map(|p| routes.iter().map(|r| (p - r.first()).norm()).collect())
        .collect();
    solve_assignment(&cost)
}
