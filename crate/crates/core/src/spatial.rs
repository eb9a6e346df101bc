//! Hash-grid lookup for merging nearly coincident points.

use std::collections::HashMap;

use crate::Vec2;

const MIN_CELL: f64 = 1e-12;

/// Finds the first inserted point within a Euclidean tolerance.
pub(crate) struct PointIndex {
    tol: f64,
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    points: Vec<Vec2>,
}

impl PointIndex {
    pub fn new(tol: f64) -> Self {
        PointIndex {
            tol,
            cell: tol.max(MIN_CELL),
            buckets: HashMap::new(),
            points: Vec::new(),
        }
    }

    fn key(&self, p: &Vec2) -> (i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    /// Lowest-index stored point within `tol` of `p`.
    pub fn find(&self, p: &Vec2) -> Option<usize> {
        let (kx, ky) = self.key(p);
        let mut best: Option<usize> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(ids) = self.buckets.get(&(kx + dx, ky + dy)) else {
                    continue;
                };
                for &id in ids {
                    if (self.points[id] - p).norm() <= self.tol && best.is_none_or(|b| id < b) {
                        best = Some(id);
                    }
                }
            }
        }
        best
    }

    /// Returns the matching index, inserting `p` as a new point if none is near.
    pub fn find_or_insert(&mut self, p: Vec2) -> (usize, bool) {
        if let Some(id) = self.find(&p) {
            return (id, false);
        }
        let id = self.points.len();
        let key = self.key(&p);
        self.buckets.entry(key).or_default().push(id);
        self.points.push(p);
        (id, true)
    }

    pub fn into_points(self) -> Vec<Vec2> {
        self.points
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_within_tolerance_only() {
        let mut idx = PointIndex::new(1e-3);
        assert_eq!(idx.find_or_insert(Vec2::new(5.0, 5.0)), (0, true));
        assert_eq!(idx.find_or_insert(Vec2::new(5.0005, 5.0)), (0, false));
        assert_eq!(idx.find_or_insert(Vec2::new(5.002, 5.0)), (1, true));
        assert_eq!(idx.into_points().len(), 2);
    }

    #[test]
    fn zero_tolerance_is_exact() {
        let mut idx = PointIndex::new(0.0);
        idx.find_or_insert(Vec2::new(1.0, 2.0));
        assert_eq!(idx.find(&Vec2::new(1.0, 2.0)), Some(0));
        assert_eq!(idx.find(&Vec2::new(1.0 + 1e-15, 2.0)), None);
    }

    #[test]
    fn prefers_first_inserted_across_cells() {
        let mut idx = PointIndex::new(1.0);
        idx.find_or_insert(Vec2::new(0.95, 0.0));
        idx.find_or_insert(Vec2::new(2.5, 0.0));
        // within tol of both; index 0 wins
        assert_eq!(idx.find(&Vec2::new(1.8, 0.0)), Some(0));
    }
}
