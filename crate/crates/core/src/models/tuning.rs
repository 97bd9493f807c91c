//! k-fold grid search minimizing mean absolute error.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use super::{fit, HyperParams, Metrics, ModelSpec};
use crate::error::{PrimeError, Result};

fn null_as_infinity<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

fn nulls_as_infinity<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    let v = Vec::<Option<f64>>::deserialize(d)?;
    Ok(v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
}

/// Fold index for each of `n` rows: rows are shuffled with the seed and dealt
/// out round-robin, so fold sizes differ by at most one.
pub fn kfold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(PrimeError::invalid("cv_folds", "need at least 2 folds"));
    }
    if n < k {
        return Err(PrimeError::invalid(
            "cv_folds",
            format!("{k} folds over {n} training rows leaves a fold empty"),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % k;
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub params: HyperParams,
    /// Held-out MAE per fold; infinite (null in JSON) where the fit failed.
    #[serde(deserialize_with = "nulls_as_infinity")]
    pub fold_mae: Vec<f64>,
    #[serde(deserialize_with = "null_as_infinity")]
    pub mean_mae: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub chosen: HyperParams,
    pub chosen_index: usize,
    pub table: Vec<CvRow>,
}

fn cv_point(params: &HyperParams, x: &[Vec<f64>], y: &[f64], names: &[String], folds: &[usize], k: usize, seed: u64) -> CvRow {
    let mut fold_mae = Vec::with_capacity(k);
    let mut error = None;
    for f in 0..k {
        let (mut xt, mut yt, mut xv, mut yv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, &fi) in folds.iter().enumerate() {
            if fi == f {
                xv.push(x[i].clone());
                yv.push(y[i]);
            } else {
                xt.push(x[i].clone());
                yt.push(y[i]);
            }
        }
        let mae = fit(params, &xt, &yt, names, seed)
            .and_then(|m| Metrics::from_predictions(&m.predict_rows(&xv), &yv))
            .map(|m| m.mae);
        match mae {
            Ok(v) if v.is_finite() => fold_mae.push(v),
            Ok(v) => {
                error.get_or_insert_with(|| format!("fold {f}: non-finite MAE {v}"));
                fold_mae.push(f64::INFINITY);
            }
            Err(e) => {
                error.get_or_insert_with(|| format!("fold {f}: {e}"));
                fold_mae.push(f64::INFINITY);
            }
        }
    }
    let mean_mae = fold_mae.iter().sum::<f64>() / k as f64;
    CvRow {
        params: *params,
        fold_mae,
        mean_mae,
        error,
    }
}

/// Scores every grid point by mean fold MAE and picks the smallest, the first
/// grid point winning ties. A grid point whose fit fails scores infinity; the
/// search only errors when every point fails.
pub fn tune(spec: &ModelSpec, x: &[Vec<f64>], y: &[f64], names: &[String]) -> Result<TuneResult> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(PrimeError::Data(format!("{} feature rows for {} targets", x.len(), y.len())));
    }
    let folds = kfold_assignment(x.len(), spec.cv_folds, spec.seed)?;
    let table: Vec<CvRow> = spec
        .grid
        .par_iter()
        .map(|h| cv_point(h, x, y, names, &folds, spec.cv_folds, spec.seed))
        .collect();
    let mut best: Option<usize> = None;
    for (i, row) in table.iter().enumerate() {
        if row.mean_mae.is_finite() && best.is_none_or(|b| row.mean_mae < table[b].mean_mae) {
            best = Some(i);
        }
    }
    let Some(chosen_index) = best else {
        let why = table[0].error.clone().unwrap_or_default();
        return Err(PrimeError::Data(format!("every {} grid point failed in cross-validation; {why}", spec.family)));
    };
    Ok(TuneResult {
        chosen: table[chosen_index].params,
        chosen_index,
        table,
    })
}
