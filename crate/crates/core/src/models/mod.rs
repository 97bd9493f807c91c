//! The regression zoo: white-box linear families and grey-box tree ensembles,
//! cross-validated tuning, and held-out evaluation.

pub mod ensemble;
pub mod linear;
pub mod suite;
pub mod tree;
pub mod tuning;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PrimeError, Result};
use ensemble::{fit_gbt, fit_random_forest, ForestParams, GbtParams, GradientBoostedTrees, RandomForest};
use linear::{fit_lasso, fit_ols, fit_polynomial, fit_ridge, LassoOptions, LinearModel, PolynomialModel};

pub use suite::{run_model_suite, SuiteReport, SuiteRow};
pub use tuning::{kfold_assignment, tune, CvRow, TuneResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    Ridge,
    Lasso,
    Polynomial,
    RandomForest,
    GradientBoostedTrees,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Linear,
        Family::Ridge,
        Family::Lasso,
        Family::Polynomial,
        Family::RandomForest,
        Family::GradientBoostedTrees,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Ridge => "ridge",
            Family::Lasso => "lasso",
            Family::Polynomial => "polynomial",
            Family::RandomForest => "random_forest",
            Family::GradientBoostedTrees => "gradient_boosted_trees",
        }
    }

    /// Row label used in the metric table.
    pub fn display_name(self) -> &'static str {
        match self {
            Family::Linear => "Linear Regression",
            Family::Ridge => "Ridge Regression",
            Family::Lasso => "Lasso Regression",
            Family::Polynomial => "Polynomial Regression",
            Family::RandomForest => "Random Forest Regression",
            Family::GradientBoostedTrees => "Gradient Boosted Trees Regression",
        }
    }

    pub fn is_white_box(self) -> bool {
        !matches!(self, Family::RandomForest | Family::GradientBoostedTrees)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = PrimeError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Ok(match norm.as_str() {
            "linear" | "ols" => Family::Linear,
            "ridge" => Family::Ridge,
            "lasso" => Family::Lasso,
            "polynomial" | "poly" => Family::Polynomial,
            "random_forest" | "forest" | "rf" => Family::RandomForest,
            "gradient_boosted_trees" | "gbt" | "xgboost" | "boosting" => Family::GradientBoostedTrees,
            _ => return Err(PrimeError::invalid("family", format!("unknown model family `{s}`"))),
        })
    }
}

/// One point of a family's hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HyperParams {
    Linear,
    Ridge { alpha: f64 },
    Lasso { alpha: f64 },
    Polynomial { degree: usize },
    RandomForest(ForestParams),
    GradientBoostedTrees(GbtParams),
}

impl HyperParams {
    pub fn family(&self) -> Family {
        match self {
            HyperParams::Linear => Family::Linear,
            HyperParams::Ridge { .. } => Family::Ridge,
            HyperParams::Lasso { .. } => Family::Lasso,
            HyperParams::Polynomial { .. } => Family::Polynomial,
            HyperParams::RandomForest(_) => Family::RandomForest,
            HyperParams::GradientBoostedTrees(_) => Family::GradientBoostedTrees,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub grid: Vec<HyperParams>,
    pub cv_folds: usize,
    pub seed: u64,
}

impl ModelSpec {
    /// The built-in grid for `family`, five folds.
    pub fn default_for(family: Family, seed: u64) -> Self {
        const ALPHAS: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
        let grid = match family {
            Family::Linear => vec![HyperParams::Linear],
            Family::Ridge => ALPHAS.iter().map(|&alpha| HyperParams::Ridge { alpha }).collect(),
            Family::Lasso => ALPHAS.iter().map(|&alpha| HyperParams::Lasso { alpha }).collect(),
            Family::Polynomial => (1..=3).map(|degree| HyperParams::Polynomial { degree }).collect(),
            Family::RandomForest => {
                let mut g = Vec::new();
                for n_trees in [100, 300] {
                    for max_depth in [None, Some(10)] {
                        for min_leaf in [1, 5] {
                            g.push(HyperParams::RandomForest(ForestParams {
                                n_trees,
                                max_depth,
                                min_leaf,
                                ..Default::default()
                            }));
                        }
                    }
                }
                g
            }
            Family::GradientBoostedTrees => {
                let mut g = Vec::new();
                for n_trees in [100, 300] {
                    for learning_rate in [0.05, 0.1] {
                        for max_depth in [2, 3] {
                            g.push(HyperParams::GradientBoostedTrees(GbtParams {
                                n_trees,
                                learning_rate,
                                max_depth,
                                min_leaf: 1,
                            }));
                        }
                    }
                }
                g
            }
        };
        ModelSpec {
            family,
            grid,
            cv_folds: 5,
            seed,
        }
    }

    pub fn with_grid(family: Family, grid: Vec<HyperParams>, seed: u64) -> Self {
        ModelSpec {
            family,
            grid,
            cv_folds: 5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(PrimeError::invalid("grid", format!("{} grid is empty", self.family)));
        }
        if self.cv_folds < 2 {
            return Err(PrimeError::invalid("cv_folds", "need at least 2 folds"));
        }
        if let Some(bad) = self.grid.iter().find(|h| h.family() != self.family) {
            return Err(PrimeError::invalid(
                "grid",
                format!("{} grid contains a {} point", self.family, bad.family()),
            ));
        }
        for h in &self.grid {
            match *h {
                HyperParams::Ridge { alpha } | HyperParams::Lasso { alpha } if !(alpha >= 0.0) || !alpha.is_finite() => {
                    return Err(PrimeError::invalid("alpha", format!("alpha must be finite and nonnegative, got {alpha}")));
                }
                HyperParams::Polynomial { degree: 0 } => {
                    return Err(PrimeError::invalid("degree", "degree must be at least 1"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum FittedModel {
    Linear(LinearModel),
    Polynomial(PolynomialModel),
    RandomForest(RandomForest),
    GradientBoostedTrees(GradientBoostedTrees),
}

impl FittedModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            FittedModel::Linear(m) => m.predict(x),
            FittedModel::Polynomial(m) => m.predict(x),
            FittedModel::RandomForest(m) => m.predict(x),
            FittedModel::GradientBoostedTrees(m) => m.predict(x),
        }
    }

    pub fn predict_rows(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| self.predict(r)).collect()
    }

    /// Signed coefficients for white-box models, importances for ensembles,
    /// in feature (or expanded-term) order.
    pub fn explanation(&self, names: &[String]) -> Vec<ExplanationEntry> {
        let entry = |(feature, &value): (&String, &f64), kind| ExplanationEntry {
            feature: feature.clone(),
            value,
            kind,
        };
        match self {
            FittedModel::Linear(m) => names
                .iter()
                .zip(&m.coefficients)
                .map(|e| entry(e, ExplanationKind::Coefficient))
                .collect(),
            FittedModel::Polynomial(m) => m
                .term_names(names)
                .iter()
                .zip(&m.linear.coefficients)
                .map(|e| entry(e, ExplanationKind::Coefficient))
                .collect(),
            FittedModel::RandomForest(m) => names
                .iter()
                .zip(&m.importances)
                .map(|e| entry(e, ExplanationKind::Importance))
                .collect(),
            FittedModel::GradientBoostedTrees(m) => names
                .iter()
                .zip(&m.importances)
                .map(|e| entry(e, ExplanationKind::Importance))
                .collect(),
        }
    }
}

/// Fits one grid point. `seed` only matters for forests.
pub fn fit(params: &HyperParams, x: &[Vec<f64>], y: &[f64], names: &[String], seed: u64) -> Result<FittedModel> {
    Ok(match *params {
        HyperParams::Linear => FittedModel::Linear(fit_ols(x, y, names)?),
        HyperParams::Ridge { alpha } => FittedModel::Linear(fit_ridge(x, y, alpha)?),
        HyperParams::Lasso { alpha } => FittedModel::Linear(fit_lasso(x, y, alpha, LassoOptions::default())?),
        HyperParams::Polynomial { degree } => FittedModel::Polynomial(fit_polynomial(x, y, degree, names)?),
        HyperParams::RandomForest(p) => FittedModel::RandomForest(fit_random_forest(x, y, p, seed)?),
        HyperParams::GradientBoostedTrees(p) => FittedModel::GradientBoostedTrees(fit_gbt(x, y, p)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationKind {
    Coefficient,
    Importance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationEntry {
    pub feature: String,
    pub value: f64,
    pub kind: ExplanationKind,
}

/// Orders entries by descending magnitude, name breaking ties.
pub fn sort_by_magnitude(entries: &mut [ExplanationEntry]) {
    entries.sort_by(|a, b| {
        b.value
            .abs()
            .total_cmp(&a.value.abs())
            .then_with(|| a.feature.cmp(&b.feature))
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
}

impl Metrics {
    pub fn from_predictions(pred: &[f64], truth: &[f64]) -> Result<Metrics> {
        if pred.len() != truth.len() {
            return Err(PrimeError::Data(format!("{} predictions for {} targets", pred.len(), truth.len())));
        }
        if pred.is_empty() {
            return Err(PrimeError::Empty("no rows to evaluate".into()));
        }
        let n = pred.len() as f64;
        let mut sq = 0.0;
        let mut abs = 0.0;
        for (p, t) in pred.iter().zip(truth) {
            let r = t - p;
            sq += r * r;
            abs += r.abs();
        }
        let mse = sq / n;
        Ok(Metrics {
            mse,
            rmse: mse.sqrt(),
            mae: abs / n,
        })
    }
}

pub fn evaluate(model: &FittedModel, x: &[Vec<f64>], y: &[f64]) -> Result<Metrics> {
    Metrics::from_predictions(&model.predict_rows(x), y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub family: Family,
    pub params: HyperParams,
    pub model: FittedModel,
    pub explanation: Vec<ExplanationEntry>,
    pub metrics: Metrics,
}
