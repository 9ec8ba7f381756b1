//! Brute-force k-nearest-neighbour attack under Euclidean distance.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KnnAttack {
    k: usize,
    points: Vec<Vec<f64>>,
    labels: Vec<bool>,
}

impl KnnAttack {
    pub fn fit(k: usize, points: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParam("knn needs k >= 1".into()));
        }
        if points.is_empty() || points.len() != labels.len() {
            return Err(Error::EmptyInput("knn training set"));
        }
        Ok(KnnAttack { k, points, labels })
    }

    /// Majority vote of the `k` nearest training points; a tie votes `false`.
    /// Equidistant neighbours are ranked by training order.
    pub fn predict(&self, x: &[f64]) -> bool {
        let mut dists: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let k = self.k.min(dists.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dists.len() {
            dists.select_nth_unstable_by(k - 1, cmp);
        }
        let positive = dists[..k].iter().filter(|(_, i)| self.labels[*i]).count();
        2 * positive > k
    }
}
