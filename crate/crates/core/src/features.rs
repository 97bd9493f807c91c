//! Modeling dataset construction: lag alignment of socioeconomic indicators to
//! score rows, feature scaling, correlation analysis, collinearity pruning and
//! the seeded train/test split.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PrimeError, Result};
use crate::ingest::{RegionCode, SocioPanel};
use crate::scoring::{min_max_normalize, Period, RegionYearScores, ScoreKind};

/// Years between the socioeconomic observation and the score it explains.
pub const FEATURE_LAG: i32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowKey {
    pub region_code: RegionCode,
    pub period: Period,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedRow {
    pub region_code: RegionCode,
    pub period: Period,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedVariable {
    pub name: String,
    /// `manual` or `collinear`.
    pub reason: String,
    /// Retained column whose correlation triggered the removal.
    pub trigger: Option<String>,
    pub r: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PruningReport {
    pub threshold: f64,
    pub removed: Vec<RemovedVariable>,
    pub retained: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub lag: i32,
    /// Indicator order at alignment time; pruning keeps the first of a
    /// correlated set in this order.
    pub column_order: Vec<String>,
    pub pruned: Vec<RemovedVariable>,
    pub scaling: Vec<ColumnScaling>,
    pub dropped_rows: Vec<DroppedRow>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedDataset {
    pub feature_names: Vec<String>,
    pub keys: Vec<RowKey>,
    /// Row-major feature values.
    pub features: Vec<Vec<f64>>,
    pub targets: BTreeMap<ScoreKind, Vec<f64>>,
    pub meta: DatasetMeta,
}

impl AlignedDataset {
    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.features.iter().map(|row| row[j]).collect()
    }

    pub fn target(&self, kind: ScoreKind) -> &[f64] {
        &self.targets[&kind]
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    fn retain_columns(&self, keep: &[usize]) -> AlignedDataset {
        AlignedDataset {
            feature_names: keep.iter().map(|&j| self.feature_names[j].clone()).collect(),
            keys: self.keys.clone(),
            features: self
                .features
                .iter()
                .map(|row| keep.iter().map(|&j| row[j]).collect())
                .collect(),
            targets: self.targets.clone(),
            meta: DatasetMeta {
                scaling: self
                    .meta
                    .scaling
                    .iter()
                    .filter(|s| keep.iter().any(|&j| self.feature_names[j] == s.name))
                    .cloned()
                    .collect(),
                ..self.meta.clone()
            },
        }
    }
}

/// Joins each score row to the socioeconomic row of the preceding year.
pub fn align(scores: &[RegionYearScores], socio: &SocioPanel) -> Result<AlignedDataset> {
    let mut data = AlignedDataset {
        feature_names: socio.indicators().to_vec(),
        keys: Vec::new(),
        features: Vec::new(),
        targets: ScoreKind::ALL.iter().map(|k| (*k, Vec::new())).collect(),
        meta: DatasetMeta {
            lag: FEATURE_LAG,
            column_order: socio.indicators().to_vec(),
            ..Default::default()
        },
    };
    for s in scores {
        let lag_year = s.period.lag_year();
        let reason = match socio.get(&s.region_code, lag_year) {
            Some(values) if values.iter().all(|v| v.is_finite()) => {
                data.keys.push(RowKey {
                    region_code: s.region_code.clone(),
                    period: s.period,
                });
                data.features.push(values.to_vec());
                for kind in ScoreKind::ALL {
                    data.targets.get_mut(&kind).expect("all kinds").push(s.score(kind));
                }
                continue;
            }
            Some(_) => format!("incomplete socioeconomic values for {lag_year}"),
            None => format!("no socioeconomic row for {lag_year}"),
        };
        data.meta.dropped_rows.push(DroppedRow {
            region_code: s.region_code.clone(),
            period: s.period,
            reason,
        });
    }
    if data.keys.is_empty() {
        return Err(PrimeError::Empty("no alignable rows".into()));
    }
    Ok(data)
}

/// Pearson correlation; `None` when either column has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Zero-variance columns left out of the matrix.
    pub dropped: Vec<String>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.values[i][j])
    }

    /// Largest |r| over distinct pairs.
    pub fn max_abs_off_diagonal(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.names.len() {
            for j in 0..i {
                m = m.max(self.values[i][j].abs());
            }
        }
        m
    }
}

pub fn correlation_matrix(data: &AlignedDataset) -> Result<CorrelationMatrix> {
    if data.n_rows() < 2 {
        return Err(PrimeError::Empty("correlation needs at least 2 rows".into()));
    }
    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut dropped = Vec::new();
    for (j, name) in data.feature_names.iter().enumerate() {
        let col = data.column(j);
        if pearson(&col, &col).is_some() {
            names.push(name.clone());
            columns.push(col);
        } else {
            dropped.push(name.clone());
        }
    }
    let k = names.len();
    let mut values = vec![vec![0.0; k]; k];
    for i in 0..k {
        values[i][i] = 1.0;
        for j in 0..i {
            let r = pearson(&columns[i], &columns[j]).expect("nonzero variance");
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix { names, values, dropped })
}

/// Removes `manual` columns, then every column whose |r| with an earlier
/// retained column exceeds `threshold`.
pub fn prune_collinear(
    data: &AlignedDataset,
    threshold: f64,
    manual: &[String],
) -> Result<(AlignedDataset, PruningReport)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(PrimeError::invalid("threshold", format!("{threshold} is not in (0, 1]")));
    }
    for name in manual {
        if data.feature_index(name).is_none() {
            return Err(PrimeError::invalid("names", format!("unknown variable `{name}`")));
        }
    }
    let mut report = PruningReport {
        threshold,
        ..Default::default()
    };
    let columns: Vec<Vec<f64>> = (0..data.n_features()).map(|j| data.column(j)).collect();
    let mut keep: Vec<usize> = Vec::new();
    for (j, name) in data.feature_names.iter().enumerate() {
        if manual.contains(name) {
            report.removed.push(RemovedVariable {
                name: name.clone(),
                reason: "manual".into(),
                trigger: None,
                r: None,
            });
            continue;
        }
        let hit = keep.iter().find_map(|&i| {
            pearson(&columns[i], &columns[j])
                .filter(|r| r.abs() > threshold)
                .map(|r| (i, r))
        });
        match hit {
            Some((i, r)) => report.removed.push(RemovedVariable {
                name: name.clone(),
                reason: "collinear".into(),
                trigger: Some(data.feature_names[i].clone()),
                r: Some(r),
            }),
            None => keep.push(j),
        }
    }
    let mut pruned = data.retain_columns(&keep);
    pruned.meta.pruned.extend(report.removed.iter().cloned());
    report.retained = pruned.feature_names.clone();
    Ok((pruned, report))
}

/// [`prune_collinear`] replayed on a finished correlation matrix, for
/// previews that only hold the matrix. Removals agree exactly; zero-variance
/// columns are never removed and are listed last in `retained`.
pub fn prune_preview(m: &CorrelationMatrix, threshold: f64, manual: &[String]) -> Result<PruningReport> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(PrimeError::invalid("threshold", format!("{threshold} is not in (0, 1]")));
    }
    for name in manual {
        if !m.names.contains(name) && !m.dropped.contains(name) {
            return Err(PrimeError::invalid("names", format!("unknown variable `{name}`")));
        }
    }
    let mut report = PruningReport {
        threshold,
        ..Default::default()
    };
    let mut keep: Vec<usize> = Vec::new();
    for (j, name) in m.names.iter().enumerate() {
        if manual.contains(name) {
            report.removed.push(RemovedVariable {
                name: name.clone(),
                reason: "manual".into(),
                trigger: None,
                r: None,
            });
            continue;
        }
        match keep.iter().map(|&i| (i, m.values[i][j])).find(|(_, r)| r.abs() > threshold) {
            Some((i, r)) => report.removed.push(RemovedVariable {
                name: name.clone(),
                reason: "collinear".into(),
                trigger: Some(m.names[i].clone()),
                r: Some(r),
            }),
            None => keep.push(j),
        }
    }
    report.retained = keep.iter().map(|&i| m.names[i].clone()).collect();
    for name in &m.dropped {
        if manual.contains(name) {
            report.removed.push(RemovedVariable {
                name: name.clone(),
                reason: "manual".into(),
                trigger: None,
                r: None,
            });
        } else {
            report.retained.push(name.clone());
        }
    }
    Ok(report)
}

/// Min-max scales every feature column to [0, 1]; targets are left untouched.
pub fn scale_features(data: &AlignedDataset) -> Result<AlignedDataset> {
    let mut out = data.clone();
    out.meta.scaling.clear();
    for (j, name) in data.feature_names.iter().enumerate() {
        let col: BTreeMap<usize, f64> = data.column(j).into_iter().enumerate().collect();
        let (lo, hi) = col
            .values()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if hi == lo {
            out.meta.warnings.push(format!("feature `{name}` is constant; scaled to 0"));
        }
        let scaled = min_max_normalize(&col)?;
        for (i, v) in scaled {
            out.features[i][j] = v;
        }
        out.meta.scaling.push(ColumnScaling {
            name: name.clone(),
            min: lo,
            max: hi,
        });
    }
    out.meta
        .warnings
        .push("feature scaling was fitted on all rows before the train/test split".into());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 42,
        }
    }
}

/// Seeded row-level split of `0..n` into sorted train and test index sets.
///
/// The shuffle uses ChaCha8 seeded from `seed`, which yields the same stream
/// on every platform.
pub fn split(n: usize, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(PrimeError::invalid(
            "split_fraction",
            format!("{} is not in (0, 1)", spec.train_fraction),
        ));
    }
    let n_train = (spec.train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(PrimeError::invalid(
            "split_fraction",
            format!("splitting {n} rows at {} leaves one side empty", spec.train_fraction),
        ));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
