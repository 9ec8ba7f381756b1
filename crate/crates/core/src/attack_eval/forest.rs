//! CART trees with Gini impurity and a bootstrap-aggregated random forest.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Node {
    Leaf(bool),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone)]
pub struct DecisionTree {
    root: Node,
}

fn gini(pos: f64, total: f64) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

struct TreeBuilder<'a, R: Rng> {
    points: &'a [Vec<f64>],
    labels: &'a [bool],
    max_depth: usize,
    features_per_node: usize,
    rng: &'a mut R,
}

impl<R: Rng> TreeBuilder<'_, R> {
    fn majority(&self, rows: &[usize]) -> bool {
        let pos = rows.iter().filter(|&&i| self.labels[i]).count();
        2 * pos > rows.len()
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> Node {
        let pos = rows.iter().filter(|&&i| self.labels[i]).count();
        if depth >= self.max_depth || rows.len() < 2 || pos == 0 || pos == rows.len() {
            return Node::Leaf(self.majority(&rows));
        }
        let dim = self.points[rows[0]].len();
        let m = self.features_per_node.min(dim);
        let candidates = index::sample(self.rng, dim, m).into_vec();

        let n = rows.len() as f64;
        let parent = gini(pos as f64, n);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = rows.clone();
        for feature in candidates {
            sorted.sort_by(|&a, &b| self.points[a][feature].total_cmp(&self.points[b][feature]));
            let mut left_pos = 0.0;
            for split in 1..sorted.len() {
                if self.labels[sorted[split - 1]] {
                    left_pos += 1.0;
                }
                let lo = self.points[sorted[split - 1]][feature];
                let hi = self.points[sorted[split]][feature];
                if lo == hi {
                    continue;
                }
                let nl = split as f64;
                let nr = n - nl;
                let impurity = (nl * gini(left_pos, nl) + nr * gini(pos as f64 - left_pos, nr)) / n;
                if best.is_none_or(|(b, _, _)| impurity < b) {
                    best = Some((impurity, feature, lo + (hi - lo) / 2.0));
                }
            }
        }
        match best {
            Some((impurity, feature, threshold)) if impurity < parent => {
                let (left, right): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&i| self.points[i][feature] <= threshold);
                Node::Split {
                    feature,
                    threshold,
                    left: Box::new(self.build(left, depth + 1)),
                    right: Box::new(self.build(right, depth + 1)),
                }
            }
            _ => Node::Leaf(self.majority(&rows)),
        }
    }
}

impl DecisionTree {
    /// Grows a tree on `rows` (indices into `points`, repeats allowed).
    pub fn fit<R: Rng>(
        points: &[Vec<f64>],
        labels: &[bool],
        rows: Vec<usize>,
        max_depth: usize,
        features_per_node: usize,
        rng: &mut R,
    ) -> DecisionTree {
        let mut builder = TreeBuilder {
            points,
            labels,
            max_depth,
            features_per_node: features_per_node.max(1),
            rng,
        };
        DecisionTree {
            root: builder.build(rows, 0),
        }
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomForestAttack {
    trees: Vec<DecisionTree>,
}

impl RandomForestAttack {
    /// Bootstrapped trees with `ceil(sqrt(dim))` candidate features per node.
    pub fn fit(
        points: &[Vec<f64>],
        labels: &[bool],
        num_trees: usize,
        max_depth: usize,
        seed: u64,
    ) -> Result<Self> {
        if points.is_empty() || points.len() != labels.len() {
            return Err(Error::EmptyInput("random forest training set"));
        }
        if num_trees == 0 {
            return Err(Error::InvalidParam("random forest needs at least one tree".into()));
        }
        let dim = points[0].len();
        let features = (dim as f64).sqrt().ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = points.len();
        let trees = (0..num_trees)
            .map(|_| {
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                DecisionTree::fit(points, labels, rows, max_depth, features, &mut rng)
            })
            .collect();
        Ok(RandomForestAttack { trees })
    }

    /// Majority over trees; a tie votes `false`.
    pub fn predict(&self, x: &[f64]) -> bool {
        let votes = self.trees.iter().filter(|t| t.predict(x)).count();
        2 * votes > self.trees.len()
    }
}
