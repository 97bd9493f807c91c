//! The four-step analysis pipeline shared by the command line and the HTTP
//! service: filter and score, inspect correlations, prune, train.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::causal::{causal_report, BootstrapOptions, CausalReport, PcOptions};
use crate::error::{PrimeError, Result};
use crate::features::{align, correlation_matrix, prune_collinear, scale_features, AlignedDataset, CorrelationMatrix, PruningReport, SplitSpec};
use crate::ingest::{
    interpolate_socio_panel, read_geometry, read_hazard_events, read_population, read_socio, GeometrySet, HazardEvent,
    HazardLoadOptions, InterpolationOptions, InterpolationReport, PopulationPanel, SocioPanel, ValidationReport,
};
use crate::models::{run_model_suite, Family, ModelSpec, SuiteReport};
use crate::report::{export_geolayers, export_report, GeoLayers, Manifest, OutputSet, ReportBundle};
use crate::scoring::{
    classify_scores, region_summaries, Aggregation, RegionSummary, ScoreClasses, ScoreKind, ScoreOptions, ScoreRun,
    YearWindow,
};
use crate::synth::{GEOMETRY_FILE, HAZARDS_FILE, POPULATION_FILE, SOCIO_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPaths {
    pub hazards: PathBuf,
    pub population: PathBuf,
    pub socio: PathBuf,
    pub geometry: Option<PathBuf>,
}

impl InputPaths {
    /// The standard file names inside a data directory.
    pub fn in_dir(dir: &Path) -> Self {
        let geometry = dir.join(GEOMETRY_FILE);
        InputPaths {
            hazards: dir.join(HAZARDS_FILE),
            population: dir.join(POPULATION_FILE),
            socio: dir.join(SOCIO_FILE),
            geometry: geometry.exists().then_some(geometry),
        }
    }
}

/// Parsed, validated input files plus their digests. Immutable once loaded.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub events: Vec<HazardEvent>,
    pub hazard_report: ValidationReport,
    pub population: PopulationPanel,
    pub socio: SocioPanel,
    pub geometry: Option<GeometrySet>,
    manifest: Manifest,
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

impl Inputs {
    pub fn load(paths: &InputPaths) -> Result<Self> {
        let read = |p: &Path| fs::read(p).map_err(|e| PrimeError::io(p, e));
        let hazards = read(&paths.hazards)?;
        let population = read(&paths.population)?;
        let socio = read(&paths.socio)?;
        let geometry = paths.geometry.as_deref().map(read).transpose()?;
        let mut manifest = Manifest::default();
        manifest.add_input("hazards", &file_name(&paths.hazards), &hazards);
        manifest.add_input("population", &file_name(&paths.population), &population);
        manifest.add_input("socio", &file_name(&paths.socio), &socio);
        if let (Some(p), Some(g)) = (&paths.geometry, &geometry) {
            manifest.add_input("geometry", &file_name(p), g);
        }
        let load = read_hazard_events(hazards.as_slice(), &HazardLoadOptions::default())?;
        let geometry = match geometry {
            Some(bytes) => {
                let text = String::from_utf8(bytes)
                    .map_err(|_| PrimeError::Geometry("geometry file is not valid UTF-8".into()))?;
                Some(read_geometry(&text)?)
            }
            None => None,
        };
        Ok(Inputs {
            events: load.events,
            hazard_report: load.report,
            population: read_population(population.as_slice())?,
            socio: read_socio(socio.as_slice())?,
            geometry,
            manifest,
        })
    }

    /// First and last event years.
    pub fn coverage(&self) -> Option<(i32, i32)> {
        let min = self.events.iter().map(|e| e.year).min()?;
        let max = self.events.iter().map(|e| e.year).max()?;
        Some((min, max))
    }

    pub fn hazard_types(&self) -> BTreeSet<String> {
        self.events.iter().map(|e| e.hazard_type.clone()).collect()
    }

    /// A fresh manifest carrying the input digests.
    pub fn manifest(&self) -> Manifest {
        Manifest {
            inputs: self.manifest.inputs.clone(),
            ..Manifest::new()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionFilter {
    /// Code prefixes, e.g. a two-digit state code.
    pub prefixes: Vec<String>,
    pub codes: Vec<String>,
}

impl RegionFilter {
    fn admits(&self, code: &str) -> bool {
        (self.prefixes.is_empty() && self.codes.is_empty())
            || self.prefixes.iter().any(|p| code.starts_with(p.as_str()))
            || self.codes.iter().any(|c| c == code)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub start_year: i32,
    pub end_year: i32,
    /// `None` keeps every hazard type.
    #[serde(default)]
    pub hazard_types: Option<Vec<String>>,
    #[serde(default)]
    pub regions: RegionFilter,
    /// Free text; damages arrive pre-aggregated.
    #[serde(default)]
    pub damage_note: Option<String>,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub pooled: bool,
}

impl FilterParams {
    pub fn years(start_year: i32, end_year: i32) -> Self {
        FilterParams {
            start_year,
            end_year,
            hazard_types: None,
            regions: RegionFilter::default(),
            damage_note: None,
            aggregation: Aggregation::default(),
            pooled: false,
        }
    }

    pub fn validate(&self, inputs: &Inputs) -> Result<YearWindow> {
        if self.end_year < self.start_year {
            return Err(PrimeError::invalid(
                "years",
                format!("empty year range {}-{}", self.start_year, self.end_year),
            ));
        }
        let (lo, hi) = inputs
            .coverage()
            .ok_or_else(|| PrimeError::Empty("no hazard events loaded".into()))?;
        if self.start_year < lo || self.end_year > hi {
            return Err(PrimeError::invalid(
                "years",
                format!("{}-{} falls outside the data coverage {lo}-{hi}", self.start_year, self.end_year),
            ));
        }
        if let Some(types) = &self.hazard_types {
            if types.is_empty() {
                return Err(PrimeError::invalid("hazard_types", "empty hazard type list"));
            }
            let known = inputs.hazard_types();
            if let Some(t) = types.iter().find(|t| !known.contains(*t)) {
                return Err(PrimeError::UnknownHazardType(t.clone()));
            }
        }
        YearWindow::new(self.start_year, self.end_year)
    }
}

/// Everything produced by the filter step.
#[derive(Debug, Clone)]
pub struct ScoreStage {
    pub filter: FilterParams,
    pub run: ScoreRun,
    pub classes: Vec<ScoreClasses>,
    pub class_warnings: Vec<String>,
    pub summaries: Vec<RegionSummary>,
    pub layers: Option<GeoLayers>,
    pub interpolation: InterpolationReport,
    /// Aligned and min-max scaled, before pruning.
    pub dataset: AlignedDataset,
}

pub fn score(inputs: &Inputs, filter: &FilterParams) -> Result<ScoreStage> {
    let window = filter.validate(inputs)?;
    let events: Vec<HazardEvent> = inputs
        .events
        .iter()
        .filter(|e| filter.regions.admits(e.region_code.as_str()))
        .filter(|e| filter.hazard_types.as_ref().is_none_or(|t| t.contains(&e.hazard_type)))
        .cloned()
        .collect();
    let opts = ScoreOptions {
        aggregation: filter.aggregation,
        pooled: filter.pooled,
    };
    let run = crate::scoring::score_events(&events, &inputs.population, window, opts)?;
    if run.scores.is_empty() {
        return Err(PrimeError::Empty("the filter leaves no scorable region-years".into()));
    }
    let (classes, class_warnings) = classify_scores(&run.scores)?;
    let summaries = region_summaries(&run.scores);
    let layers = inputs
        .geometry
        .as_ref()
        .map(|g| export_geolayers(&summaries, g))
        .transpose()?;
    let (socio, interpolation) = interpolate_socio_panel(
        &inputs.socio,
        window.start - 1..=window.end,
        &InterpolationOptions::default(),
    )?;
    let dataset = scale_features(&align(&run.scores, &socio)?)?;
    Ok(ScoreStage {
        filter: filter.clone(),
        run,
        classes,
        class_warnings,
        summaries,
        layers,
        interpolation,
        dataset,
    })
}

pub fn correlation(stage: &ScoreStage) -> Result<CorrelationMatrix> {
    correlation_matrix(&stage.dataset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PruneRequest {
    Threshold { threshold: f64 },
    Manual { names: Vec<String> },
}

pub fn prune(dataset: &AlignedDataset, req: &PruneRequest) -> Result<(AlignedDataset, PruningReport)> {
    match req {
        PruneRequest::Threshold { threshold } => prune_collinear(dataset, *threshold, &[]),
        PruneRequest::Manual { names } => {
            if names.is_empty() {
                return Err(PrimeError::invalid("names", "no variables named for removal"));
            }
            prune_collinear(dataset, 1.0, names)
        }
    }
}

fn default_families() -> Vec<Family> {
    Family::ALL.to_vec()
}

fn default_targets() -> Vec<ScoreKind> {
    ScoreKind::ALL.to_vec()
}

fn default_fraction() -> f64 {
    0.8
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    #[serde(default = "default_families")]
    pub families: Vec<Family>,
    #[serde(default = "default_targets")]
    pub targets: Vec<ScoreKind>,
    #[serde(default = "default_fraction")]
    pub split_fraction: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub run_causal: bool,
    /// Bootstrap replicates for the causal stage.
    #[serde(default)]
    pub causal_replicates: Option<usize>,
    #[serde(default)]
    pub causal_alpha: Option<f64>,
}

impl Default for TrainRequest {
    fn default() -> Self {
        TrainRequest {
            families: default_families(),
            targets: default_targets(),
            split_fraction: default_fraction(),
            seed: default_seed(),
            run_causal: false,
            causal_replicates: None,
            causal_alpha: None,
        }
    }
}

impl TrainRequest {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(PrimeError::invalid(
                "split_fraction",
                format!("{} is not in (0, 1)", self.split_fraction),
            ));
        }
        if self.families.is_empty() {
            return Err(PrimeError::invalid("families", "no model families requested"));
        }
        if self.targets.is_empty() {
            return Err(PrimeError::invalid("targets", "no targets requested"));
        }
        if self.causal_replicates == Some(0) {
            return Err(PrimeError::invalid("causal_replicates", "need at least one replicate"));
        }
        Ok(())
    }

    pub fn bootstrap_options(&self) -> BootstrapOptions {
        let d = BootstrapOptions::default();
        BootstrapOptions {
            replicates: self.causal_replicates.unwrap_or(d.replicates),
            seed: self.seed,
            pc: PcOptions {
                alpha: self.causal_alpha.unwrap_or(d.pc.alpha),
                ..d.pc
            },
            ..d
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub suite: SuiteReport,
    pub causal: Option<Vec<CausalReport>>,
}

pub fn train(dataset: &AlignedDataset, req: &TrainRequest) -> Result<TrainOutput> {
    req.validate()?;
    let mut data = dataset.clone();
    let wanted: BTreeSet<ScoreKind> = req.targets.iter().copied().collect();
    data.targets.retain(|k, _| wanted.contains(k));
    let mut families: Vec<Family> = Vec::new();
    for f in &req.families {
        if !families.contains(f) {
            families.push(*f);
        }
    }
    let specs: Vec<ModelSpec> = families.iter().map(|&f| ModelSpec::default_for(f, req.seed)).collect();
    let split = SplitSpec {
        train_fraction: req.split_fraction,
        seed: req.seed,
    };
    let suite = run_model_suite(&data, &specs, split)?;
    let causal = if req.run_causal {
        let opts = req.bootstrap_options();
        Some(
            ScoreKind::ALL
                .into_iter()
                .filter(|k| wanted.contains(k))
                .map(|k| causal_report(&data, k, opts))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(TrainOutput { suite, causal })
}

/// Report bundle for a finished training run, with the manifest filled from
/// the earlier steps.
pub fn bundle(
    inputs: &Inputs,
    stage: &ScoreStage,
    pruning: Option<&PruningReport>,
    req: &TrainRequest,
    out: &TrainOutput,
) -> Result<ReportBundle> {
    let mut manifest = inputs.manifest();
    manifest.filter = serde_json::to_value(&stage.filter)?;
    manifest.pruning = pruning.cloned();
    if req.run_causal {
        manifest.seeds.insert("causal".into(), req.seed);
    }
    manifest.seeds.insert("cv".into(), req.seed);
    Ok(export_report(&out.suite, out.causal.clone(), manifest))
}

/// Files for the score step: `scores.csv` and the layers when geometry was
/// loaded.
pub fn score_outputs(stage: &ScoreStage) -> Result<OutputSet> {
    let mut out = OutputSet::default();
    out.add_scores(&stage.run.scores, &stage.classes)?;
    if let Some(layers) = &stage.layers {
        out.add_layers(layers)?;
    }
    Ok(out)
}

/// Every output of a complete run, manifest included.
pub fn full_outputs(
    stage: &ScoreStage,
    corr: &CorrelationMatrix,
    pruning: Option<&PruningReport>,
    bundle: &ReportBundle,
) -> Result<OutputSet> {
    let mut out = score_outputs(stage)?;
    out.add_correlation(corr)?;
    if let Some(p) = pruning {
        out.add_pruning(p)?;
    }
    out.add_bundle(bundle)?;
    let mut manifest = bundle.manifest.clone();
    out.finish(&mut manifest)?;
    Ok(out)
}
