//! Balanced split of inducing points into per-drone routes.

use super::Route;
use crate::{Error, Result, Vec2};

const REFINE_SWEEPS: usize = 2;

/// Splits `n·p` points into `n` routes of exactly `p` waypoints.
///
/// Clusters are seeded by farthest-point sampling, filled greedily by
/// ascending point-to-centre distance under a capacity of `p`, and refined
/// by re-centring. Each route starts at the point nearest its centroid and
/// continues by nearest neighbour.
pub fn partition_routes(points: &[Vec2], n: usize, p: usize) -> Result<Vec<Route>> {
    if n == 0 || p == 0 {
        return Err(Error::arg("partition needs n >= 1 and p >= 1"));
    }
    if points.len() != n * p {
        return Err(Error::arg(format!(
            "{} points cannot be split into {n} routes of {p}",
            points.len()
        )));
    }

    let mut centers = farthest_point_seeds(points, n);
    let mut groups = capacitated_assign(points, &centers, p);
    for _ in 0..REFINE_SWEEPS {
        centers = groups.iter().map(|g| centroid(points, g)).collect();
        groups = capacitated_assign(points, &centers, p);
    }

    groups
        .iter()
        .map(|g| Route::new(nearest_neighbour_order(points, g)))
        .collect()
}

fn centroid(points: &[Vec2], idx: &[usize]) -> Vec2 {
    idx.iter().map(|&i| points[i]).sum::<Vec2>() / idx.len() as f64
}

fn farthest_point_seeds(points: &[Vec2], n: usize) -> Vec<Vec2> {
    let all: Vec<usize> = (0..points.len()).collect();
    let c = centroid(points, &all);
    let first = argmax(points.iter().map(|q| (q - c).norm()));
    let mut seeds = vec![points[first]];
    let mut nearest: Vec<f64> = points.iter().map(|q| (q - points[first]).norm()).collect();
    while seeds.len() < n {
        let next = argmax(nearest.iter().copied());
        seeds.push(points[next]);
        for (d, q) in nearest.iter_mut().zip(points) {
            *d = d.min((q - points[next]).norm());
        }
    }
    seeds
}

/// Index of the first maximum.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn capacitated_assign(points: &[Vec2], centers: &[Vec2], cap: usize) -> Vec<Vec<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = points
        .iter()
        .enumerate()
        .flat_map(|(i, q)| centers.iter().enumerate().map(move |(c, z)| ((q - z).norm(), i, c)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut groups = vec![Vec::with_capacity(cap); centers.len()];
    let mut taken = vec![false; points.len()];
    for (_, i, c) in pairs {
        if !taken[i] && groups[c].len() < cap {
            taken[i] = true;
            groups[c].push(i);
        }
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups
}

fn nearest_neighbour_order(points: &[Vec2], idx: &[usize]) -> Vec<Vec2> {
    let c = centroid(points, idx);
    let mut left: Vec<usize> = idx.to_vec();
    let start = argmax(left.iter().map(|&i| -(points[i] - c).norm()));
    let mut cur = left.remove(start);
    let mut out = vec![points[cur]];
    while !left.is_empty() {
        let k = argmax(left.iter().map(|&i| -(points[i] - points[cur]).norm()));
        cur = left.remove(k);
        out.push(points[cur]);
    }
    out
}
