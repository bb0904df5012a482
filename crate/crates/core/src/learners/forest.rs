//! Bagged regression trees with per-split feature sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, DecisionTree, TreeConfig};
use super::{check_xy, Regressor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ForestConfig<F> {
    pub n_estimators: usize,
    pub tree: TreeConfig,
    /// Share of features considered at each split, in `(0, 1]`.
    pub feature_fraction: F,
    pub bootstrap: bool,
    pub seed: u64,
}

impl<F: Scalar> Default for ForestConfig<F> {
    fn default() -> Self {
        Self {
            n_estimators: 1000,
            tree: TreeConfig::default(),
            feature_fraction: F::of(1.0 / 3.0),
            bootstrap: true,
            seed: 0,
        }
    }
}

impl<F: Scalar> ForestConfig<F> {
    pub fn validate(&self) -> Result<()> {
        self.tree.validate()?;
        if self.n_estimators == 0 {
            return Err(Error::Argument("n_estimators must be positive".into()));
        }
        if !(self.feature_fraction > F::zero() && self.feature_fraction <= F::one()) {
            return Err(Error::Argument("feature_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Features drawn per split for a table of width `p`.
    pub fn features_per_split(&self, p: usize) -> usize {
        let k = (self.feature_fraction * F::of_usize(p)).ceil().to_usize().unwrap_or(p);
        k.clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct RandomForest<F> {
    pub config: ForestConfig<F>,
    trees: Vec<DecisionTree<F>>,
    n_features: usize,
}

impl<F: Scalar> RandomForest<F> {
    pub fn trees(&self) -> &[DecisionTree<F>] {
        &self.trees
    }

    /// Assembles a forest from already fitted trees.
    pub fn from_trees(config: ForestConfig<F>, trees: Vec<DecisionTree<F>>) -> Result<Self> {
        let n_features = trees
            .first()
            .map(|t| t.n_features())
            .ok_or_else(|| Error::Argument("forest needs at least one tree".into()))?;
        if trees.iter().any(|t| t.n_features() != n_features) {
            return Err(Error::Shape("trees disagree on feature width".into()));
        }
        Ok(Self {
            config,
            trees,
            n_features,
        })
    }
}

impl<F: Scalar> Regressor<F> for RandomForest<F> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, x: &[F]) -> F {
        let sum = self.trees.iter().fold(F::zero(), |acc, t| acc + t.predict_row(x));
        sum / F::of_usize(self.trees.len())
    }
}

/// Tree `i` is grown from a generator seeded with `seed + i`, so the result
/// does not depend on how trees are scheduled across threads.
pub fn fit_random_forest<F: Scalar>(x: &Matrix<F>, y: &[F], cfg: &ForestConfig<F>) -> Result<RandomForest<F>> {
    cfg.validate()?;
    check_xy(x, y)?;
    let n = x.rows();
    let k = cfg.features_per_split(x.cols());
    let sample_features = k < x.cols();
    let trees: Vec<DecisionTree<F>> = (0..cfg.n_estimators)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
            let rows: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let sampler = sample_features.then_some((&mut rng, k));
            grow(x, y, rows, &cfg.tree, sampler)
        })
        .collect();
    RandomForest::from_trees(cfg.clone(), trees)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::tree::{fit_decision_tree, Node};

    fn data() -> (Matrix<f64>, Vec<f64>) {
        let rows: Vec<[f64; 3]> = (0..30)
            .map(|i| [i as f64, ((i * 7) % 5) as f64, ((i * 3) % 4) as f64])
            .collect();
        let y = rows.iter().map(|r| r[0] * 0.5 + r[1] * r[2]).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn degenerate_forest_is_a_tree() {
        let (x, y) = data();
        let cfg = ForestConfig {
            n_estimators: 1,
            tree: TreeConfig::new(3),
            feature_fraction: 1.0,
            bootstrap: false,
            seed: 9,
        };
        let f = fit_random_forest(&x, &y, &cfg).unwrap();
        let t = fit_decision_tree(&x, &y, &TreeConfig::new(3)).unwrap();
        assert_eq!(f.trees()[0], t);
        assert_eq!(f.predict(&x).unwrap(), t.predict(&x).unwrap());
    }

    #[test]
    fn prediction_is_member_mean() {
        let leaf = |v: f64| {
            let x = Matrix::from_rows(&[[0.0]]).unwrap();
            fit_decision_tree(&x, &[v], &TreeConfig::new(1)).unwrap()
        };
        let f = RandomForest::from_trees(ForestConfig::default(), vec![leaf(1.0), leaf(3.0)]).unwrap();
        assert_eq!(f.predict_row(&[42.0]), 2.0);
        assert!(matches!(f.trees()[0].nodes()[0], Node::Leaf { value } if value == 1.0));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let (x, y) = data();
        let cfg = ForestConfig {
            n_estimators: 25,
            tree: TreeConfig::new(4),
            feature_fraction: 0.5,
            bootstrap: true,
            seed: 3,
        };
        let a = fit_random_forest(&x, &y, &cfg).unwrap().predict(&x).unwrap();
        let b = fit_random_forest(&x, &y, &cfg).unwrap().predict(&x).unwrap();
        assert_eq!(a, b);
        let other = ForestConfig { seed: 4, ..cfg };
        let c = fit_random_forest(&x, &y, &other).unwrap().predict(&x).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn same_tree_repeated_equals_tree() {
        let (x, y) = data();
        let t = fit_decision_tree(&x, &y, &TreeConfig::new(3)).unwrap();
        let f = RandomForest::from_trees(ForestConfig::default(), vec![t.clone(); 4]).unwrap();
        let ft = f.predict(&x).unwrap();
        let tt = t.predict(&x).unwrap();
        for (a, b) in ft.iter().zip(&tt) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}
