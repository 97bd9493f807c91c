//! Command line and HTTP front ends for `prime-core`.

pub mod cli;
pub mod server;

use prime_core::error::PrimeError;
use prime_core::features::{AlignedDataset, CorrelationMatrix, PruningReport};
use prime_core::report::{OutputSet, ReportBundle};
use prime_core::workflow::{self, Inputs, ScoreStage, TrainRequest};

/// Trains, bundles and renders every output file. Both front ends call this,
/// so their files agree byte for byte apart from manifest timestamps.
pub fn run_training(
    inputs: &Inputs,
    stage: &ScoreStage,
    correlation: &CorrelationMatrix,
    pruned: Option<&(AlignedDataset, PruningReport)>,
    req: &TrainRequest,
) -> Result<(OutputSet, ReportBundle), PrimeError> {
    let dataset = pruned.map_or(&stage.dataset, |p| &p.0);
    let report = pruned.map(|p| &p.1);
    let out = workflow::train(dataset, req)?;
    let mut bundle = workflow::bundle(inputs, stage, report, req, &out)?;
    let files = workflow::full_outputs(stage, correlation, report, &bundle)?;
    if let Some(m) = files.get("manifest.json") {
        bundle.manifest = serde_json::from_str(m)?;
    }
    Ok((files, bundle))
}
