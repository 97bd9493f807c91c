//! Output assembly: score tables, choropleth layers, metric tables, chart
//! data, DAG exports and the provenance manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use geojson::{Feature, FeatureCollection, GeoJson, JsonObject, JsonValue};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::causal::CausalReport;
use crate::error::{PrimeError, Result};
use crate::features::{CorrelationMatrix, PruningReport};
use crate::ingest::{GeometrySet, RegionCode};
use crate::models::tuning::CvRow;
use crate::models::{sort_by_magnitude, ExplanationEntry, ExplanationKind, Family, HyperParams, SuiteReport};
use crate::scoring::{quantile_classify, RegionSummary, RegionYearScores, ScoreClasses, ScoreKind};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// `scores.csv`: one row per region-period with raw, normalized and derived
/// scores plus quartile classes.
pub fn scores_csv(scores: &[RegionYearScores], classes: &[ScoreClasses]) -> Result<String> {
    if scores.len() != classes.len() {
        return Err(PrimeError::Data(format!("{} score rows but {} class rows", scores.len(), classes.len())));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "region_code",
        "period",
        "threat_raw",
        "damage_raw",
        "recovery_raw",
        "threat_norm",
        "damage_norm",
        "recovery_norm",
        "vulnerability",
        "adaptability",
        "resilience",
        "v_class",
        "a_class",
        "r_class",
    ])?;
    for (s, c) in scores.iter().zip(classes) {
        let nums = [
            s.threat_raw,
            s.damage_raw,
            s.recovery_raw,
            s.threat_norm,
            s.damage_norm,
            s.recovery_norm,
            s.vulnerability,
            s.adaptability,
            s.resilience,
        ];
        let mut rec = vec![s.region_code.to_string(), s.period.to_string()];
        rec.extend(nums.iter().map(|v| v.to_string()));
        rec.extend([c.v_class, c.a_class, c.r_class].iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| PrimeError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Four-bin color ramp for a layer, lowest class first. Vulnerability runs
/// blue to red as it rises; adaptability and resilience run red to blue.
pub fn color_ramp(kind: ScoreKind) -> [&'static str; 4] {
    const BLUE_TO_RED: [&str; 4] = ["#2c7bb6", "#abd9e9", "#fdae61", "#d7191c"];
    match kind {
        ScoreKind::Vulnerability => BLUE_TO_RED,
        ScoreKind::Adaptability | ScoreKind::Resilience => {
            let mut r = BLUE_TO_RED;
            r.reverse();
            r
        }
    }
}

const CLASS_LABELS: [&str; 4] = ["Low", "Moderate", "High", "Very high"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingGeometry {
    pub missing: Vec<RegionCode>,
    pub matched: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoLayers {
    pub layers: Vec<(ScoreKind, GeoJson)>,
    pub sidecar: MissingGeometry,
}

/// One feature collection per score kind over regions that have geometry.
/// Every feature carries all three scores and classes; the collection's
/// `layer` member holds the class bins and colors.
pub fn export_geolayers(summaries: &[RegionSummary], geometry: &GeometrySet) -> Result<GeoLayers> {
    let mut missing = Vec::new();
    let matched: Vec<&RegionSummary> = summaries
        .iter()
        .filter(|s| {
            let ok = geometry.get(&s.region_code).is_some();
            if !ok {
                missing.push(s.region_code.clone());
            }
            ok
        })
        .collect();
    if matched.is_empty() {
        return Err(PrimeError::Geometry("no scored region has a geometry".into()));
    }
    let value = |s: &RegionSummary, k: ScoreKind| match k {
        ScoreKind::Vulnerability => s.vulnerability,
        ScoreKind::Adaptability => s.adaptability,
        ScoreKind::Resilience => s.resilience,
    };
    let mut classifications = BTreeMap::new();
    for kind in ScoreKind::ALL {
        let map: BTreeMap<RegionCode, f64> = matched.iter().map(|s| (s.region_code.clone(), value(s, kind))).collect();
        classifications.insert(kind, quantile_classify(&map, 4)?);
    }
    let mut layers = Vec::new();
    for kind in ScoreKind::ALL {
        let ramp = color_ramp(kind);
        let cls = &classifications[&kind];
        let features = matched
            .iter()
            .map(|s| {
                let geo = geometry.get(&s.region_code).expect("filtered above");
                let class = |k: ScoreKind| classifications[&k].classes[&s.region_code];
                let mut props = JsonObject::new();
                props.insert("region_code".into(), json!(s.region_code));
                props.insert("name".into(), json!(geo.name));
                props.insert("vulnerability".into(), json!(s.vulnerability));
                props.insert("adaptability".into(), json!(s.adaptability));
                props.insert("resilience".into(), json!(s.resilience));
                props.insert("v_class".into(), json!(class(ScoreKind::Vulnerability)));
                props.insert("a_class".into(), json!(class(ScoreKind::Adaptability)));
                props.insert("r_class".into(), json!(class(ScoreKind::Resilience)));
                props.insert("periods".into(), json!(s.periods));
                props.insert("score".into(), json!(value(s, kind)));
                props.insert("class".into(), json!(class(kind)));
                props.insert("color".into(), json!(ramp[class(kind) as usize - 1]));
                Feature {
                    bbox: None,
                    geometry: Some(geo.geometry.clone()),
                    id: Some(geojson::feature::Id::String(s.region_code.to_string())),
                    properties: Some(props),
                    foreign_members: None,
                }
            })
            .collect();
        let bins: Vec<JsonValue> = (0..4)
            .map(|i| {
                json!({
                    "class": i + 1,
                    "label": CLASS_LABELS[i],
                    "color": ramp[i],
                    "upper": cls.boundaries.get(i),
                })
            })
            .collect();
        let mut layer = JsonObject::new();
        layer.insert(
            "layer".into(),
            json!({
                "kind": kind,
                "title": kind.title(),
                "hidden_by_default": true,
                "classes": bins,
                "warning": cls.warning,
            }),
        );
        layers.push((
            kind,
            GeoJson::FeatureCollection(FeatureCollection {
                bbox: None,
                features,
                foreign_members: Some(layer),
            }),
        ));
    }
    Ok(GeoLayers {
        layers,
        sidecar: MissingGeometry {
            missing,
            matched: matched.len(),
        },
    })
}

pub fn correlation_csv(m: &CorrelationMatrix) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![String::new()];
    header.extend(m.names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in m.names.iter().zip(&m.values) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| PrimeError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub family: Family,
    pub model: String,
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub params: HyperParams,
    pub cv: Vec<CvRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricGroup {
    pub target: ScoreKind,
    pub title: String,
    pub rows: Vec<MetricRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub train_fraction: f64,
    pub seed: u64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub features: Vec<String>,
    pub groups: Vec<MetricGroup>,
}

pub fn metrics_report(suite: &SuiteReport) -> MetricsReport {
    let mut groups: Vec<MetricGroup> = Vec::new();
    for row in &suite.rows {
        if groups.last().is_none_or(|g| g.target != row.target) {
            groups.push(MetricGroup {
                target: row.target,
                title: row.target.title().to_string(),
                rows: Vec::new(),
            });
        }
        let m = row.trained.metrics;
        groups.last_mut().expect("pushed above").rows.push(MetricRow {
            family: row.family,
            model: row.family.display_name().to_string(),
            mse: m.mse,
            rmse: m.rmse,
            mae: m.mae,
            params: row.trained.params,
            cv: row.tuning.table.clone(),
            note: row.note.clone(),
        });
    }
    MetricsReport {
        train_fraction: suite.split.train_fraction,
        seed: suite.split.seed,
        train_rows: suite.train_rows,
        test_rows: suite.test_rows,
        features: suite.feature_names.clone(),
        groups,
    }
}

pub const TABLE_HEADER: [&str; 4] = [
    "Machine Learning Regressors",
    "Mean Squared Error",
    "Root Mean Squared Error",
    "Mean Absolute Error",
];

/// Plain-text table: a header, then for each target a title line followed by
/// one `model | MSE | RMSE | MAE` row per family, values to five decimals.
pub fn render_metrics_text(report: &MetricsReport) -> String {
    let mut s = String::new();
    s.push_str(&TABLE_HEADER.join(" | "));
    s.push('\n');
    for g in &report.groups {
        s.push_str(&g.title);
        s.push('\n');
        for r in &g.rows {
            s.push_str(&metric_line(&r.model, r.mse, r.rmse, r.mae));
            s.push('\n');
        }
    }
    s
}

pub fn metric_line(model: &str, mse: f64, rmse: f64, mae: f64) -> String {
    format!("{model} | {mse:.5} | {rmse:.5} | {mae:.5}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationChart {
    pub target: ScoreKind,
    pub family: Family,
    pub model: String,
    pub kind: ExplanationKind,
    /// Sorted by descending magnitude.
    pub entries: Vec<ExplanationEntry>,
}

impl ExplanationChart {
    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.target.as_str(), self.family.as_str())
    }
}

pub fn explanation_charts(suite: &SuiteReport) -> Vec<ExplanationChart> {
    suite
        .rows
        .iter()
        .map(|r| {
            let mut entries = r.trained.explanation.clone();
            sort_by_magnitude(&mut entries);
            ExplanationChart {
                target: r.target,
                family: r.family,
                model: r.family.display_name().to_string(),
                kind: if r.family.is_white_box() {
                    ExplanationKind::Coefficient
                } else {
                    ExplanationKind::Importance
                },
                entries,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum CausalSection {
    #[serde(rename = "not run")]
    NotRun,
    #[serde(rename = "complete")]
    Complete { reports: Vec<CausalReport> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenParams {
    pub target: ScoreKind,
    pub family: Family,
    pub params: HyperParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub inputs: Vec<InputDigest>,
    pub filter: JsonValue,
    pub seeds: BTreeMap<String, u64>,
    pub pruning: Option<PruningReport>,
    pub hyperparameters: Vec<ChosenParams>,
    /// Digests of the analytical files written alongside the manifest.
    pub outputs: BTreeMap<String, String>,
    pub created_at: String,
    pub completed_at: Option<String>,
}

impl Manifest {
    pub fn new() -> Self {
        Manifest {
            tool_version: TOOL_VERSION.to_string(),
            created_at: now(),
            ..Default::default()
        }
    }

    pub fn add_input(&mut self, role: &str, name: &str, bytes: &[u8]) {
        self.inputs.push(InputDigest {
            role: role.to_string(),
            name: name.to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    /// Copy with timestamps blanked, for comparing runs.
    pub fn without_timestamps(&self) -> Manifest {
        Manifest {
            created_at: String::new(),
            completed_at: None,
            ..self.clone()
        }
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub metrics: MetricsReport,
    pub explanations: Vec<ExplanationChart>,
    pub causal: CausalSection,
    pub manifest: Manifest,
}

/// Bundles suite output with the optional causal stage. Chosen
/// hyperparameters are copied into the manifest.
pub fn export_report(suite: &SuiteReport, causal: Option<Vec<CausalReport>>, mut manifest: Manifest) -> ReportBundle {
    manifest.hyperparameters = suite
        .rows
        .iter()
        .map(|r| ChosenParams {
            target: r.target,
            family: r.family,
            params: r.trained.params,
        })
        .collect();
    manifest.seeds.insert("split".into(), suite.split.seed);
    ReportBundle {
        metrics: metrics_report(suite),
        explanations: explanation_charts(suite),
        causal: match causal {
            Some(reports) => CausalSection::Complete { reports },
            None => CausalSection::NotRun,
        },
        manifest,
    }
}

/// Collects files for an output directory, keyed by relative path, so that
/// the same bytes can be written to disk or served over HTTP.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputSet {
    pub files: BTreeMap<String, String>,
}

impl OutputSet {
    pub fn insert(&mut self, path: impl Into<String>, contents: String) {
        self.files.insert(path.into(), contents);
    }

    pub fn get(&self, path: &str) -> Option<&str> {
        self.files.get(path).map(String::as_str)
    }

    pub fn add_scores(&mut self, scores: &[RegionYearScores], classes: &[ScoreClasses]) -> Result<()> {
        self.insert("scores.csv", scores_csv(scores, classes)?);
        Ok(())
    }

    pub fn add_layers(&mut self, layers: &GeoLayers) -> Result<()> {
        for (kind, gj) in &layers.layers {
            self.insert(format!("layers/{}.geojson", kind.as_str()), pretty(gj)?);
        }
        self.insert("layers/missing_geometry.json", pretty(&layers.sidecar)?);
        Ok(())
    }

    pub fn add_correlation(&mut self, m: &CorrelationMatrix) -> Result<()> {
        self.insert("correlation.csv", correlation_csv(m)?);
        self.insert("correlation.json", pretty(m)?);
        Ok(())
    }

    pub fn add_pruning(&mut self, report: &PruningReport) -> Result<()> {
        self.insert("pruning.json", pretty(report)?);
        Ok(())
    }

    /// Metric tables, explanation charts and DAGs. `manifest.json` is left to
    /// [`OutputSet::finish`].
    pub fn add_bundle(&mut self, bundle: &ReportBundle) -> Result<()> {
        self.insert("metrics.json", pretty(&bundle.metrics)?);
        self.insert("metrics.txt", render_metrics_text(&bundle.metrics));
        for chart in &bundle.explanations {
            self.insert(format!("explanations/{}.json", chart.file_stem()), pretty(chart)?);
        }
        match &bundle.causal {
            CausalSection::NotRun => self.insert("dag/status.json", pretty(&bundle.causal)?),
            CausalSection::Complete { reports } => {
                for r in reports {
                    let stem = r.target.as_str();
                    self.insert(format!("dag/{stem}.json"), pretty(r)?);
                    self.insert(format!("dag/{stem}.dot"), r.dag.to_dot(r.target.title()));
                }
            }
        }
        Ok(())
    }

    /// Records digests of every file so far in `manifest` and adds
    /// `manifest.json`.
    pub fn finish(&mut self, manifest: &mut Manifest) -> Result<()> {
        manifest.outputs = self
            .files
            .iter()
            .filter(|(k, _)| k.as_str() != "manifest.json")
            .map(|(k, v)| (k.clone(), sha256_hex(v.as_bytes())))
            .collect();
        manifest.completed_at = Some(now());
        self.insert("manifest.json", pretty(manifest)?);
        Ok(())
    }

    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (rel, contents) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| PrimeError::io(parent, e))?;
            }
            fs::write(&path, contents).map_err(|e| PrimeError::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}
