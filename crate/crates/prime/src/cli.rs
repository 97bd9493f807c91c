//! `prime` subcommands. Each one loads the inputs and replays the workflow
//! up to its own step, so a command line run needs no saved state.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use prime_core::error::PrimeError;
use prime_core::models::Family;
use prime_core::report::OutputSet;
use prime_core::scoring::{Aggregation, ScoreKind};
use prime_core::synth::{generate, write_fixtures, SynthOptions};
use prime_core::workflow::{self, FilterParams, InputPaths, Inputs, PruneRequest, RegionFilter, TrainRequest};

use crate::server::{self, AppState, ServerConfig};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "prime", version, about = "Resilience scores and their socioeconomic explanations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the input files and print a summary.
    Ingest {
        #[command(flatten)]
        inputs: InputArgs,
        /// Also write the summary as `ingest.json` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute scores, classes and map layers.
    Score {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlation matrix of the aligned indicators.
    Corr {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remove correlated or named indicators.
    Prune {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        prune: PruneArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune and fit the model suite, optionally learn causal graphs.
    Train {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        prune: PruneArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP session service.
    Serve {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Static files (the workbench bundle) served at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Write finished training outputs under this directory as well.
        #[arg(long)]
        spill: Option<PathBuf>,
        #[arg(long, default_value_t = 24.0)]
        ttl_hours: f64,
    },
    /// Write a synthetic dataset with known effects.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthOptions::default().regions)]
        regions: usize,
        #[arg(long, default_value_t = SynthOptions::default().start_year)]
        start: i32,
        #[arg(long, default_value_t = SynthOptions::default().end_year)]
        end: i32,
        #[arg(long, default_value_t = SynthOptions::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = SynthOptions::default().missing_fraction)]
        missing_fraction: f64,
    },
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Directory holding hazards.csv, population.csv, socio.csv and
    /// optionally counties.geojson. Individual file flags override it.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub hazards: Option<PathBuf>,
    #[arg(long)]
    pub population: Option<PathBuf>,
    #[arg(long)]
    pub socio: Option<PathBuf>,
    #[arg(long)]
    pub geometry: Option<PathBuf>,
}

impl InputArgs {
    pub fn paths(&self) -> Result<InputPaths, PrimeError> {
        let base = self.data.as_deref().map(InputPaths::in_dir);
        let pick = |flag: &Option<PathBuf>, from_dir: Option<&PathBuf>, name: &str| {
            flag.clone()
                .or_else(|| from_dir.cloned())
                .ok_or_else(|| PrimeError::invalid(name, format!("pass --{name} or --data")))
        };
        Ok(InputPaths {
            hazards: pick(&self.hazards, base.as_ref().map(|b| &b.hazards), "hazards")?,
            population: pick(&self.population, base.as_ref().map(|b| &b.population), "population")?,
            socio: pick(&self.socio, base.as_ref().map(|b| &b.socio), "socio")?,
            geometry: self.geometry.clone().or_else(|| base.and_then(|b| b.geometry)),
        })
    }

    pub fn load(&self) -> Result<Inputs, PrimeError> {
        Inputs::load(&self.paths()?)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggregationArg {
    PerYear,
    Window,
}

fn parse_years(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let year = |t: &str| t.trim().parse::<i32>().map_err(|e| format!("bad year `{t}`: {e}"));
    Ok((year(a)?, year(b)?))
}

#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    /// Inclusive year range START:END; defaults to the data coverage.
    #[arg(long, value_parser = parse_years)]
    pub years: Option<(i32, i32)>,
    /// Hazard types to keep (comma separated); all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub hazard_types: Vec<String>,
    /// Region codes (five digits) or code prefixes to keep.
    #[arg(long, value_delimiter = ',')]
    pub regions: Vec<String>,
    #[arg(long, value_enum, default_value = "per-year")]
    pub aggregation: AggregationArg,
    /// Normalize across all region-years instead of within each year.
    #[arg(long)]
    pub pooled: bool,
    #[arg(long)]
    pub damage_note: Option<String>,
}

impl FilterArgs {
    pub fn params(&self, inputs: &Inputs) -> Result<FilterParams, PrimeError> {
        let (start_year, end_year) = match self.years {
            Some(y) => y,
            None => inputs
                .coverage()
                .ok_or_else(|| PrimeError::Empty("no hazard events loaded".into()))?,
        };
        let (codes, prefixes) = self.regions.iter().cloned().partition(|r| r.len() == 5);
        Ok(FilterParams {
            start_year,
            end_year,
            hazard_types: (!self.hazard_types.is_empty()).then(|| self.hazard_types.clone()),
            regions: RegionFilter { prefixes, codes },
            damage_note: self.damage_note.clone(),
            aggregation: match self.aggregation {
                AggregationArg::PerYear => Aggregation::PerYear,
                AggregationArg::Window => Aggregation::Window,
            },
            pooled: self.pooled,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct PruneArgs {
    /// Drop every indicator whose |r| with an earlier kept one exceeds this.
    #[arg(long, conflicts_with = "drop")]
    pub threshold: Option<f64>,
    /// Indicators to drop by name (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub drop: Vec<String>,
}

impl PruneArgs {
    pub fn request(&self) -> Option<PruneRequest> {
        match (self.threshold, self.drop.is_empty()) {
            (Some(threshold), _) => Some(PruneRequest::Threshold { threshold }),
            (None, false) => Some(PruneRequest::Manual { names: self.drop.clone() }),
            (None, true) => None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Model families (comma separated), e.g. linear,ridge,lasso,polynomial,rf,gbt.
    #[arg(long, value_delimiter = ',')]
    pub families: Vec<Family>,
    /// Targets (comma separated) or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub targets: Vec<String>,
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Also learn bootstrap causal graphs.
    #[arg(long)]
    pub causal: bool,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

impl TrainArgs {
    pub fn request(&self) -> Result<TrainRequest, PrimeError> {
        let targets = if self.targets.iter().any(|t| t == "all") {
            ScoreKind::ALL.to_vec()
        } else {
            self.targets.iter().map(|t| t.parse()).collect::<Result<Vec<ScoreKind>, _>>()?
        };
        let families = if self.families.is_empty() {
            Family::ALL.to_vec()
        } else {
            self.families.clone()
        };
        let req = TrainRequest {
            families,
            targets,
            split_fraction: self.split,
            seed: self.seed,
            run_causal: self.causal,
            causal_replicates: self.replicates,
            causal_alpha: self.alpha,
        };
        req.validate()?;
        Ok(req)
    }
}

#[derive(Debug)]
pub enum CliError {
    Prime(PrimeError),
    Internal(String),
}

impl From<PrimeError> for CliError {
    fn from(e: PrimeError) -> Self {
        CliError::Prime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Prime(e) if e.is_validation() => EXIT_VALIDATION,
            CliError::Prime(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Prime(e) => write!(f, "{e}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

fn write_out(files: &OutputSet, dir: &Path) -> Result<(), CliError> {
    let written = files.write_to(dir)?;
    eprintln!("wrote {} files to {}", written.len(), dir.display());
    Ok(())
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).unwrap_or_default());
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { inputs, out } => {
            let data = inputs.load()?;
            let summary = json!({
                "coverage": data.coverage(),
                "hazard_types": data.hazard_types(),
                "events": data.events.len(),
                "population_rows": data.population.len(),
                "indicators": data.socio.indicators(),
                "geometry_features": data.geometry.as_ref().map(|g| g.len()),
                "hazard_report": data.hazard_report,
                "inputs": data.manifest().inputs,
            });
            print_json(&summary);
            if let Some(dir) = out {
                let mut files = OutputSet::default();
                files.insert("ingest.json", format!("{}\n", serde_json::to_string_pretty(&summary).unwrap_or_default()));
                write_out(&files, &dir)?;
            }
        }
        Command::Score { inputs, filter, out } => {
            let data = inputs.load()?;
            let stage = workflow::score(&data, &filter.params(&data)?)?;
            eprintln!(
                "scored {} region-periods from {} events",
                stage.run.scores.len(),
                stage.run.events_used
            );
            for w in &stage.class_warnings {
                eprintln!("warning: {w}");
            }
            write_out(&workflow::score_outputs(&stage)?, &out)?;
        }
        Command::Corr { inputs, filter, out } => {
            let data = inputs.load()?;
            let stage = workflow::score(&data, &filter.params(&data)?)?;
            let corr = workflow::correlation(&stage)?;
            let mut files = OutputSet::default();
            files.add_correlation(&corr)?;
            eprintln!("max |r| between indicators: {:.4}", corr.max_abs_off_diagonal());
            write_out(&files, &out)?;
        }
        Command::Prune { inputs, filter, prune, out } => {
            let req = prune
                .request()
                .ok_or_else(|| PrimeError::invalid("threshold", "pass --threshold or --drop"))?;
            let data = inputs.load()?;
            let stage = workflow::score(&data, &filter.params(&data)?)?;
            let (_, report) = workflow::prune(&stage.dataset, &req)?;
            for r in &report.removed {
                eprintln!("removed {} ({})", r.name, r.reason);
            }
            let mut files = OutputSet::default();
            files.add_correlation(&workflow::correlation(&stage)?)?;
            files.add_pruning(&report)?;
            write_out(&files, &out)?;
        }
        Command::Train {
            inputs,
            filter,
            prune,
            train,
            out,
        } => {
            let req = train.request()?;
            let data = inputs.load()?;
            let stage = workflow::score(&data, &filter.params(&data)?)?;
            let corr = workflow::correlation(&stage)?;
            let pruned = prune.request().map(|p| workflow::prune(&stage.dataset, &p)).transpose()?;
            let (files, _) = crate::run_training(&data, &stage, &corr, pruned.as_ref(), &req)?;
            if let Some(table) = files.get("metrics.txt") {
                print!("{table}");
            }
            write_out(&files, &out)?;
        }
        Command::Serve {
            inputs,
            port,
            host,
            static_dir,
            spill,
            ttl_hours,
        } => {
            if !(ttl_hours.is_finite() && ttl_hours > 0.0) {
                return Err(PrimeError::invalid("ttl_hours", "must be positive").into());
            }
            let data = inputs.load()?;
            let config = ServerConfig {
                ttl: Duration::from_secs_f64(ttl_hours * 3600.0),
                static_dir,
                spill_dir: spill,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
            rt.block_on(server::serve(SocketAddr::new(host, port), AppState::new(data, config)))
                .map_err(|e| CliError::Internal(e.to_string()))?;
        }
        Command::Synth {
            out,
            regions,
            start,
            end,
            seed,
            missing_fraction,
        } => {
            let opts = SynthOptions {
                regions,
                start_year: start,
                end_year: end,
                seed,
                missing_fraction,
            };
            write_fixtures(&generate(&opts)?, &out)?;
            eprintln!("wrote synthetic dataset to {}", out.display());
        }
    }
    Ok(())
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
