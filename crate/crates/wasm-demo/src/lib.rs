//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes and returns JSON text. The `*_json` functions hold the
//! logic and run natively in tests; the exported wrappers only turn errors
//! into JS exceptions.

use std::collections::BTreeMap;

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use prime_core::error::{PrimeError, Result};
use prime_core::features::{prune_preview, CorrelationMatrix};
use prime_core::ingest::{read_hazard_events, read_population, write_hazard_events, HazardLoadOptions, HazardSchema};
use prime_core::scoring::{classify_scores, quantile_classify, score_events, Period, ScoreKind, ScoreOptions, YearWindow};
use prime_core::synth::{generate, population_csv, SynthOptions};

fn period_label(p: Period) -> String {
    match p {
        Period::Year(y) => y.to_string(),
        Period::Window(a, b) => format!("{a}-{b}"),
    }
}

/// Small synthetic hazard and population tables to fill the page.
pub fn sample_inputs_json(regions: usize, seed: u64) -> Result<String> {
    let data = generate(&SynthOptions {
        regions,
        start_year: 2015,
        end_year: 2020,
        seed,
        missing_fraction: 0.0,
    })?;
    let mut hazards = Vec::new();
    write_hazard_events(&mut hazards, &data.events, &HazardSchema::default())?;
    let hazards = String::from_utf8(hazards).map_err(|e| PrimeError::Data(e.to_string()))?;
    Ok(json!({
        "hazards": hazards,
        "population": population_csv(&data.population)?,
        "start_year": 2015,
        "end_year": 2020,
    })
    .to_string())
}

/// Scores every region-year of `start..=end` from hazard and population CSV.
pub fn score_json(hazards_csv: &str, population_csv: &str, start: i32, end: i32) -> Result<String> {
    let load = read_hazard_events(hazards_csv.as_bytes(), &HazardLoadOptions::default())?;
    let population = read_population(population_csv.as_bytes())?;
    let window = YearWindow::new(start, end)?;
    let run = score_events(&load.events, &population, window, ScoreOptions::default())?;
    let (classes, warnings) = classify_scores(&run.scores)?;
    let rows: Vec<Value> = run
        .scores
        .iter()
        .zip(&classes)
        .map(|(s, c)| {
            json!({
                "region_code": s.region_code.as_str(),
                "period": period_label(s.period),
                "threat": s.threat_norm,
                "damage": s.damage_norm,
                "recovery": s.recovery_norm,
                "vulnerability": s.vulnerability,
                "adaptability": s.adaptability,
                "resilience": s.resilience,
                "classes": [c.v_class, c.a_class, c.r_class],
            })
        })
        .collect();
    Ok(json!({
        "rows": rows,
        "events_used": run.events_used,
        "rejected": load.report.rejections.len(),
        "incomplete": run.incomplete.len(),
        "warnings": warnings,
    })
    .to_string())
}

/// Quartile classes (1 = lowest) for a JSON array of numbers.
pub fn classes_json(values_json: &str) -> Result<String> {
    let values: Vec<f64> = serde_json::from_str(values_json)?;
    let keyed: BTreeMap<usize, f64> = values.into_iter().enumerate().collect();
    let c = quantile_classify(&keyed, 4)?;
    Ok(json!({
        "classes": c.classes.values().collect::<Vec<_>>(),
        "boundaries": c.boundaries,
        "warning": c.warning,
    })
    .to_string())
}

/// Which variables the threshold rule (plus any staged names) would drop.
pub fn preview_json(matrix_json: &str, threshold: f64, staged_json: &str) -> Result<String> {
    let matrix: CorrelationMatrix = serde_json::from_str(matrix_json)?;
    let staged: Vec<String> = if staged_json.trim().is_empty() {
        Vec::new()
    } else {
        serde_json::from_str(staged_json)?
    };
    Ok(serde_json::to_string(&prune_preview(&matrix, threshold, &staged)?)?)
}

fn js(r: Result<String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn sample_inputs(regions: usize, seed: u64) -> Result<String, JsError> {
    js(sample_inputs_json(regions, seed))
}

#[wasm_bindgen]
pub fn score(hazards_csv: &str, population_csv: &str, start: i32, end: i32) -> Result<String, JsError> {
    js(score_json(hazards_csv, population_csv, start, end))
}

#[wasm_bindgen]
pub fn classes(values_json: &str) -> Result<String, JsError> {
    js(classes_json(values_json))
}

#[wasm_bindgen]
pub fn pruning_preview(matrix_json: &str, threshold: f64, staged_json: &str) -> Result<String, JsError> {
    js(preview_json(matrix_json, threshold, staged_json))
}

#[wasm_bindgen]
pub fn score_kinds() -> String {
    json!(ScoreKind::ALL.map(|k| k.as_str())).to_string()
}
