//! Discrete AdaBoost over depth-one threshold stumps.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    /// When true, inputs above the threshold are classified positive.
    pub positive_above: bool,
}

impl Stump {
    pub fn predict(&self, x: &[f64]) -> bool {
        (x[self.feature] > self.threshold) == self.positive_above
    }
}

#[derive(Debug, Clone)]
pub struct AdaBoostAttack {
    stumps: Vec<(f64, Stump)>,
}

// Weighted error floor so a perfect stump still gets a finite vote.
const MIN_ERROR: f64 = 1e-10;

/// The stump minimizing weighted error, with that error.
fn best_stump(points: &[Vec<f64>], labels: &[bool], weights: &[f64], sorted: &[Vec<usize>]) -> (Stump, f64) {
    let total_pos: f64 = labels.iter().zip(weights).filter(|(&l, _)| l).map(|(_, w)| w).sum();
    let total: f64 = weights.iter().sum();
    let total_neg = total - total_pos;
    let mut best = (
        Stump {
            feature: 0,
            threshold: f64::NEG_INFINITY,
            positive_above: true,
        },
        total_neg,
    );
    for (feature, order) in sorted.iter().enumerate() {
        // weights of positives / negatives at or below the current threshold
        let mut below_pos = 0.0;
        let mut below_neg = 0.0;
        let first = points[order[0]][feature];
        let candidates = [(true, total_neg), (false, total_pos)];
        for (positive_above, err) in candidates {
            if err < best.1 {
                best = (
                    Stump {
                        feature,
                        threshold: first - 1.0,
                        positive_above,
                    },
                    err,
                );
            }
        }
        for (pos, &i) in order.iter().enumerate() {
            if labels[i] {
                below_pos += weights[i];
            } else {
                below_neg += weights[i];
            }
            let v = points[i][feature];
            let next = order.get(pos + 1).map(|&j| points[j][feature]);
            if next == Some(v) {
                continue;
            }
            let threshold = match next {
                Some(n) => v + (n - v) / 2.0,
                None => v,
            };
            // positive above: misclassified = positives below + negatives above
            let err_above = below_pos + (total_neg - below_neg);
            let err_below = below_neg + (total_pos - below_pos);
            if err_above < best.1 {
                best = (
                    Stump {
                        feature,
                        threshold,
                        positive_above: true,
                    },
                    err_above,
                );
            }
            if err_below < best.1 {
                best = (
                    Stump {
                        feature,
                        threshold,
                        positive_above: false,
                    },
                    err_below,
                );
            }
        }
    }
    (best.0, best.1 / total)
}

impl AdaBoostAttack {
    pub fn fit(points: &[Vec<f64>], labels: &[bool], rounds: usize) -> Result<Self> {
        if points.is_empty() || points.len() != labels.len() {
            return Err(Error::EmptyInput("adaboost training set"));
        }
        let n = points.len();
        let dim = points[0].len();
        let sorted: Vec<Vec<usize>> = (0..dim)
            .map(|f| {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| points[a][f].total_cmp(&points[b][f]));
                order
            })
            .collect();
        let mut weights = vec![1.0 / n as f64; n];
        let mut stumps = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let (stump, err) = best_stump(points, labels, &weights, &sorted);
            if err >= 0.5 {
                break;
            }
            let err = err.max(MIN_ERROR);
            let alpha = 0.5 * ((1.0 - err) / err).ln();
            stumps.push((alpha, stump));
            if err <= MIN_ERROR {
                break;
            }
            for (i, w) in weights.iter_mut().enumerate() {
                let agree = stump.predict(&points[i]) == labels[i];
                *w *= if agree { (-alpha).exp() } else { alpha.exp() };
            }
            let sum: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= sum;
            }
        }
        Ok(AdaBoostAttack { stumps })
    }

    pub fn num_stumps(&self) -> usize {
        self.stumps.len()
    }

    /// Sign of the weighted stump vote; zero votes `false`.
    pub fn predict(&self, x: &[f64]) -> bool {
        let score: f64 = self
            .stumps
            .iter()
            .map(|(a, s)| if s.predict(x) { *a } else { -*a })
            .sum();
        score > 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_stump_stops_early() {
        let points: Vec<Vec<f64>> = (0..10).map(|i| vec![0.0, i as f64]).collect();
        let labels: Vec<bool> = (0..10).map(|i| i < 4).collect();
        let ab = AdaBoostAttack::fit(&points, &labels, 50).unwrap();
        assert_eq!(ab.num_stumps(), 1);
        for (p, &l) in points.iter().zip(&labels) {
            assert_eq!(ab.predict(p), l);
        }
    }

    #[test]
    fn boosting_combines_stumps() {
        // positive inside an interval: needs at least two stumps
        let points: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let labels: Vec<bool> = (0..30).map(|i| (10..20).contains(&i)).collect();
        let ab = AdaBoostAttack::fit(&points, &labels, 50).unwrap();
        assert!(ab.num_stumps() > 1);
        let correct = points.iter().zip(&labels).filter(|(p, &l)| ab.predict(p) == l).count();
        assert_eq!(correct, 30);
    }

    #[test]
    fn constant_features_vote_no() {
        let points = vec![vec![1.0]; 4];
        let ab = AdaBoostAttack::fit(&points, &[true, false, true, false], 10).unwrap();
        assert_eq!(ab.num_stumps(), 0);
        assert!(!ab.predict(&[1.0]));
    }
}
