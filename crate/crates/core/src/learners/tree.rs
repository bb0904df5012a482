//! CART regression tree with exhaustive variance-reduction splits.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_xy, Regressor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 6,
            min_samples_leaf: 1,
        }
    }
}

impl TreeConfig {
    pub fn new(max_depth: usize) -> Self {
        Self {
            max_depth,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::Argument("max_depth must be positive".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Argument("min_samples_leaf must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub enum Node<F> {
    Leaf {
        value: F,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: F,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct DecisionTree<F> {
    nodes: Vec<Node<F>>,
    n_features: usize,
}

impl<F: Scalar> DecisionTree<F> {
    pub fn nodes(&self) -> &[Node<F>] {
        &self.nodes
    }

    /// Depth of the deepest leaf; a lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        fn walk<F>(nodes: &[Node<F>], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

impl<F: Scalar> Regressor<F> for DecisionTree<F> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, x: &[F]) -> F {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

pub fn fit_decision_tree<F: Scalar>(x: &Matrix<F>, y: &[F], cfg: &TreeConfig) -> Result<DecisionTree<F>> {
    cfg.validate()?;
    check_xy(x, y)?;
    let rows: Vec<usize> = (0..x.rows()).collect();
    Ok(grow(x, y, rows, cfg, None::<(&mut rand_chacha::ChaCha8Rng, usize)>))
}

/// Grows a tree over `rows` (duplicates allowed, as in a bootstrap sample).
/// With `sampler = Some((rng, k))`, each split considers `k` features drawn
/// without replacement.
pub(crate) fn grow<F: Scalar, R: Rng>(
    x: &Matrix<F>,
    y: &[F],
    rows: Vec<usize>,
    cfg: &TreeConfig,
    mut sampler: Option<(&mut R, usize)>,
) -> DecisionTree<F> {
    let mut tree = DecisionTree {
        nodes: Vec::new(),
        n_features: x.cols(),
    };
    let mut features: Vec<usize> = (0..x.cols()).collect();
    // Explicit stack of (node slot, rows, depth).
    tree.nodes.push(Node::Leaf { value: F::zero() });
    let mut stack = vec![(0usize, rows, 0usize)];
    while let Some((slot, rows, depth)) = stack.pop() {
        let targets: Vec<F> = rows.iter().map(|&r| y[r]).collect();
        let value = crate::scalar::mean(&targets);
        let pure = targets.iter().all(|&t| t == targets[0]);
        if depth >= cfg.max_depth || pure || rows.len() < 2 * cfg.min_samples_leaf {
            tree.nodes[slot] = Node::Leaf { value };
            continue;
        }
        if let Some((rng, k)) = sampler.as_mut() {
            features = index::sample(&mut **rng, x.cols(), *k).into_vec();
            features.sort_unstable();
        }
        match best_split(x, y, &rows, value, &features, cfg.min_samples_leaf) {
            None => tree.nodes[slot] = Node::Leaf { value },
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, feature) <= threshold);
                let left = tree.nodes.len();
                let right = left + 1;
                tree.nodes.push(Node::Leaf { value: F::zero() });
                tree.nodes.push(Node::Leaf { value: F::zero() });
                tree.nodes[slot] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                stack.push((right, r, depth + 1));
                stack.push((left, l, depth + 1));
            }
        }
    }
    tree
}

/// Lowest child SSE over `(feature, midpoint)` candidates; ties keep the
/// earliest feature, then the smallest threshold.
fn best_split<F: Scalar>(
    x: &Matrix<F>,
    y: &[F],
    rows: &[usize],
    node_mean: F,
    features: &[usize],
    min_leaf: usize,
) -> Option<(usize, F)> {
    let n = rows.len();
    let mut best: Option<(F, usize, F)> = None;
    let mut pairs: Vec<(F, F)> = Vec::with_capacity(n);
    for &f in features {
        pairs.clear();
        // Targets centred on the node mean keep the prefix sums well conditioned.
        pairs.extend(rows.iter().map(|&r| (x.get(r, f), y[r] - node_mean)));
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let total_sum = pairs.iter().fold(F::zero(), |a, p| a + p.1);
        let total_sq = pairs.iter().fold(F::zero(), |a, p| a + p.1 * p.1);
        let mut sum_l = F::zero();
        let mut sq_l = F::zero();
        for i in 1..n {
            sum_l += pairs[i - 1].1;
            sq_l += pairs[i - 1].1 * pairs[i - 1].1;
            if pairs[i - 1].0 == pairs[i].0 || i < min_leaf || n - i < min_leaf {
                continue;
            }
            let nl = F::of_usize(i);
            let nr = F::of_usize(n - i);
            let sum_r = total_sum - sum_l;
            let sq_r = total_sq - sq_l;
            let sse = (sq_l - sum_l * sum_l / nl) + (sq_r - sum_r * sum_r / nr);
            if best.map_or(true, |(b, _, _)| sse < b) {
                let lo = pairs[i - 1].0;
                let hi = pairs[i].0;
                let mut threshold = (lo + hi) / F::of(2.0);
                if !(threshold >= lo && threshold < hi) {
                    threshold = lo;
                }
                best = Some((sse, f, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}
