//! Grey-box tree ensembles: bagged random forests and least-squares gradient
//! boosting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, RegressionTree, TreeParams};
use crate::error::{PrimeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub features_per_split: Option<usize>,
    #[serde(default = "default_true")]
    pub bootstrap: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<RegressionTree>,
    /// Normalized variance-reduction importances (sum to 1).
    pub importances: Vec<f64>,
}

/// Scales raw gains to sum to one; with no splits at all every feature gets
/// an equal share.
fn normalize_importances(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|g| g / total).collect()
    } else {
        let p = raw.len().max(1) as f64;
        vec![1.0 / p; raw.len()]
    }
}

fn check_shape(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() {
        return Err(PrimeError::Data(format!("{} feature rows for {} targets", x.len(), y.len())));
    }
    Ok(x[0].len())
}

impl RandomForest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Each tree draws from its own ChaCha8 stream (stream index = tree index) of
/// the master seed, so the forest is identical for any thread count.
pub fn fit_random_forest(x: &[Vec<f64>], y: &[f64], params: ForestParams, seed: u64) -> Result<RandomForest> {
    let p = check_shape(x, y)?;
    let n = x.len();
    if params.n_trees == 0 {
        return Err(PrimeError::invalid("n_trees", "forest needs at least one tree"));
    }
    if params.min_leaf >= n {
        return Err(PrimeError::invalid(
            "min_leaf",
            format!("min_leaf {} must be below the {n} training rows", params.min_leaf),
        ));
    }
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        features_per_split: params.features_per_split,
    };
    let fitted: Vec<(RegressionTree, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut gains = vec![0.0; p];
            let tree = fit_tree(x, y, &samples, tree_params, Some(&mut rng), &mut gains);
            (tree, gains)
        })
        .collect();
    let mut raw = vec![0.0; p];
    let mut trees = Vec::with_capacity(fitted.len());
    for (tree, gains) in fitted {
        for (acc, g) in raw.iter_mut().zip(&gains) {
            *acc += g;
        }
        trees.push(tree);
    }
    Ok(RandomForest {
        trees,
        importances: normalize_importances(raw),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_trees: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoostedTrees {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    pub importances: Vec<f64>,
    /// Training MSE after each stage; entry 0 is the constant base model.
    pub train_mse: Vec<f64>,
}

impl GradientBoostedTrees {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees
            .iter()
            .fold(self.base, |acc, t| acc + self.learning_rate * t.predict(x))
    }
}

/// Stagewise least-squares boosting: start from the mean, then repeatedly fit
/// a depth-limited tree to the residuals and add a shrunken copy.
pub fn fit_gbt(x: &[Vec<f64>], y: &[f64], params: GbtParams) -> Result<GradientBoostedTrees> {
    let p = check_shape(x, y)?;
    let n = x.len();
    if !(params.learning_rate > 0.0) {
        return Err(PrimeError::invalid("learning_rate", "must be positive"));
    }
    if params.min_leaf >= n {
        return Err(PrimeError::invalid(
            "min_leaf",
            format!("min_leaf {} must be below the {n} training rows", params.min_leaf),
        ));
    }
    let base = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base; n];
    let mse = |pred: &[f64]| pred.iter().zip(y).map(|(p, t)| (t - p).powi(2)).sum::<f64>() / n as f64;
    let mut train_mse = vec![mse(&pred)];
    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_leaf: params.min_leaf,
        features_per_split: None,
    };
    let samples: Vec<usize> = (0..n).collect();
    let mut raw = vec![0.0; p];
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let resid: Vec<f64> = y.iter().zip(&pred).map(|(t, p)| t - p).collect();
        let tree = fit_tree(x, &resid, &samples, tree_params, None, &mut raw);
        for (i, row) in x.iter().enumerate() {
            pred[i] += params.learning_rate * tree.predict(row);
        }
        train_mse.push(mse(&pred));
        trees.push(tree);
    }
    Ok(GradientBoostedTrees {
        base,
        learning_rate: params.learning_rate,
        trees,
        importances: normalize_importances(raw),
        train_mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 40.0, ((i * 17) % 40) as f64 / 40.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0] + 0.2 * (r[1] * 6.0).sin()).collect();
        (x, y)
    }

    #[test]
    fn single_unbootstrapped_tree_memorizes() {
        let (x, y) = data();
        let params = ForestParams { n_trees: 1, bootstrap: false, ..Default::default() };
        let f = fit_random_forest(&x, &y, params, 3).unwrap();
        for (r, t) in x.iter().zip(&y) {
            assert_eq!(f.predict(r), *t);
        }
    }

    #[test]
    fn forest_importances_sum_to_one() {
        let (x, y) = data();
        let f = fit_random_forest(&x, &y, ForestParams { n_trees: 20, ..Default::default() }, 9).unwrap();
        assert!((f.importances.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(f.importances.iter().all(|&v| v >= 0.0));
        assert!(f.importances[0] > f.importances[1]);
    }

    #[test]
    fn forest_rejects_large_min_leaf() {
        let (x, y) = data();
        let params = ForestParams { min_leaf: 40, ..Default::default() };
        assert!(fit_random_forest(&x, &y, params, 1).is_err());
    }

    #[test]
    fn gbt_depth_zero_predicts_mean() {
        let (x, y) = data();
        let params = GbtParams { n_trees: 1, learning_rate: 1.0, max_depth: 0, min_leaf: 1 };
        let g = fit_gbt(&x, &y, params).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        for r in &x {
            assert!((g.predict(r) - mean).abs() < 1e-12);
        }
        assert!((g.importances.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gbt_training_mse_never_increases() {
        let (x, y) = data();
        let g = fit_gbt(&x, &y, GbtParams { n_trees: 50, ..Default::default() }).unwrap();
        for w in g.train_mse.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{w:?}");
        }
    }
}
