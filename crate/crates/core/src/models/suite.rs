//! Tune, refit and evaluate every requested family against every target on
//! one shared train/test split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, fit, tune, Family, ModelSpec, TrainedModel, TuneResult};
use crate::error::{PrimeError, Result};
use crate::features::{split, AlignedDataset, SplitSpec};
use crate::scoring::ScoreKind;

pub const GBT_NOTE: &str = "plain least-squares gradient boosting; no second-order or regularized objective";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub target: ScoreKind,
    pub family: Family,
    pub tuning: TuneResult,
    pub trained: TrainedModel,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub split: SplitSpec,
    pub train_rows: usize,
    pub test_rows: usize,
    pub feature_names: Vec<String>,
    /// Grouped by target, then by the order of the specs.
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn row(&self, target: ScoreKind, family: Family) -> Option<&SuiteRow> {
        self.rows.iter().find(|r| r.target == target && r.family == family)
    }
}

fn take(x: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| x[i].clone()).collect()
}

/// Runs every spec against every target present in `data`.
pub fn run_model_suite(data: &AlignedDataset, specs: &[ModelSpec], split_spec: SplitSpec) -> Result<SuiteReport> {
    if specs.is_empty() {
        return Err(PrimeError::invalid("families", "no model families requested"));
    }
    for s in specs {
        s.validate()?;
    }
    let targets: Vec<ScoreKind> = ScoreKind::ALL.into_iter().filter(|k| data.targets.contains_key(k)).collect();
    if targets.is_empty() {
        return Err(PrimeError::Empty("dataset carries no target scores".into()));
    }
    let (train, test) = split(data.n_rows(), split_spec)?;
    if test.is_empty() {
        return Err(PrimeError::invalid("split_fraction", "split leaves no test rows"));
    }
    let x_train = take(&data.features, &train);
    let x_test = take(&data.features, &test);
    let names = &data.feature_names;

    let jobs: Vec<(ScoreKind, &ModelSpec)> = targets.iter().flat_map(|&t| specs.iter().map(move |s| (t, s))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(target, spec)| {
            let y = data.target(target);
            let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let y_test: Vec<f64> = test.iter().map(|&i| y[i]).collect();
            let tuning = tune(spec, &x_train, &y_train, names)?;
            let model = fit(&tuning.chosen, &x_train, &y_train, names, spec.seed)?;
            let metrics = evaluate(&model, &x_test, &y_test)?;
            let trained = TrainedModel {
                family: spec.family,
                params: tuning.chosen,
                explanation: model.explanation(names),
                model,
                metrics,
            };
            Ok(SuiteRow {
                target,
                family: spec.family,
                tuning,
                trained,
                note: (spec.family == Family::GradientBoostedTrees).then(|| GBT_NOTE.to_string()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport {
        split: split_spec,
        train_rows: train.len(),
        test_rows: test.len(),
        feature_names: names.clone(),
        rows,
    })
}
