//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use sdmbench_core::metrics::evaluate;
use sdmbench_core::split::{spatial_block_split, Side};
use sdmbench_core::synth::SynthConfig;
use sdmbench_core::{Crs, Location, PaSurvey, SpeciesIndex};

use crate::diagnostics::{report, ReportOptions};
use crate::error::{BenchError, Result};
use crate::io::{self, PaColumns};
use crate::manifest::{RunManifest, SplitConfig};
use crate::methods::{fit, method_seed, predict_sets, MethodEntry, MethodSpec, TrainSet};
use crate::run::{run, MethodMetrics, RunOptions, SavedModel};
use crate::world::{self, Data, SynthData};

#[derive(Debug, Parser)]
#[command(name = "sdmbench", version, about = "Species composition prediction benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CrsArg {
    Planar,
    Lonlat,
}

impl From<CrsArg> for Crs {
    fn from(c: CrsArg) -> Self {
        match c {
            CrsArg::Planar => Crs::Planar,
            CrsArg::Lonlat => Crs::LonLat,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// JSON world configuration; defaults to the built-in world.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Spatial block split of a data directory's PA surveys into split.csv.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        block_size: Option<f64>,
        #[arg(long, default_value_t = 0.8)]
        test_fraction: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = CrsArg::Planar)]
        crs: CrsArg,
    },
    /// Fit a registered method on the training side of a split.
    Fit {
        /// Registry name (constant, knn_po, knn_pa, cooccurrence, maxent, forest, staged).
        method: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON method entry replacing the registry defaults.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = CrsArg::Planar)]
        crs: CrsArg,
    },
    /// Predict the test side of a split with a fitted model.
    Predict {
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = CrsArg::Planar)]
        crs: CrsArg,
    },
    /// Score a submission against long-format PA truth.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        submission: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = CrsArg::Planar)]
        crs: CrsArg,
    },
    /// Diagnostics for a completed run directory.
    Report {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
    /// Write the default synthetic benchmark manifest.
    Init {
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Execute a run manifest.
    Run {
        manifest: PathBuf,
        #[arg(long, env = "SDMBENCH_OUTPUT_DIR")]
        out: Option<PathBuf>,
        #[arg(long, env = "SDMBENCH_WORKERS")]
        workers: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
}

fn read_side(split: &Path, data: &Data, side: Side) -> Result<Vec<PaSurvey>> {
    let rows = io::read_split(split)?;
    let picked: Vec<PaSurvey> =
        data.pa.iter().filter(|s| rows.get(&s.survey_id).is_some_and(|r| r.side == side)).cloned().collect();
    if picked.is_empty() {
        return Err(BenchError::data(format!("{}: no {} surveys", split.display(), side.as_str())));
    }
    Ok(picked)
}

fn print_rejected(data: &Data) {
    if !data.rejected.is_empty() {
        eprintln!("{} input rows rejected; first: line {} ({})", data.rejected.len(), data.rejected[0].line, data.rejected[0].reason);
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, config, seed } => {
            let config: SynthConfig = match config {
                Some(p) => io::read_json(&p)?,
                None => SynthConfig::default(),
            };
            let synth = SynthData::generate(&config, seed)?;
            synth.save(&out)?;
            println!("wrote {} PO records and {} PA surveys to {}", synth.po.len(), synth.pa.len(), out.display());
        }
        Command::Split { data, out, block_size, test_fraction, seed, crs } => {
            let d = world::load_dir(&data, crs.into())?;
            print_rejected(&d);
            let cfg = SplitConfig { block_size, test_fraction, origin: None };
            let split = spatial_block_split(&d.pa, cfg.block_size_for(d.crs), test_fraction, None, seed)?;
            io::write_split(&out, &split)?;
            println!("{} blocks, test fraction {:.4}", split.blocks.len(), split.test_fraction());
        }
        Command::Fit { method, data, split, out, params, seed, crs } => {
            let entry: MethodEntry = match params {
                Some(p) => io::read_json(&p)?,
                None => MethodEntry::new(method.clone(), MethodSpec::by_name(&method)?),
            };
            let d = world::load_dir(&data, crs.into())?;
            print_rejected(&d);
            entry.validate(Some(d.species.len()))?;
            let train = read_side(&split, &d, Side::Train)?;
            let set = TrainSet { grids: &d.grids, n_species: d.species.len(), po: &d.po, pa: &train };
            let seed = method_seed(seed, &entry.name);
            let model = fit(&entry.spec, &set, seed)?;
            io::write_json(&out, &SavedModel { entry, species: d.species.ids().to_vec(), seed, model })?;
            println!("fitted on {} surveys; model written to {}", train.len(), out.display());
        }
        Command::Predict { model, data, split, out, crs } => {
            let saved: SavedModel = io::read_json(&model)?;
            let d = world::load_dir(&data, crs.into())?;
            if saved.species != d.species.ids() {
                return Err(BenchError::data("model species index does not match the data directory"));
            }
            let test = read_side(&split, &d, Side::Test)?;
            let ids: Vec<String> = test.iter().map(|s| s.survey_id.clone()).collect();
            let locs: Vec<Location> = test.iter().map(|s| s.location).collect();
            let (preds, _) = predict_sets(&saved.model, &saved.entry.rule(), &d.grids, &ids, &locs)?;
            io::write_submission(&out, &preds, &d.species)?;
            println!("{} predictions written to {}", preds.len(), out.display());
        }
        Command::Evaluate { truth, submission, out, crs } => {
            let raw = io::load_pa_csv(&truth, &PaColumns::default(), crs.into(), None)?;
            let mut ids: Vec<String> = raw.species.ids().to_vec();
            ids.extend(submission_species(&submission)?);
            let index = SpeciesIndex::build(ids)?;
            let truth = io::load_pa_csv(&truth, &PaColumns::default(), crs.into(), Some(&index))?;
            if !truth.rejected.is_empty() {
                eprintln!("{} truth rows rejected", truth.rejected.len());
            }
            let preds = io::read_submission(&submission, &index)?;
            let report = evaluate(&truth.surveys, &preds)?;
            let metrics = MethodMetrics { method: String::new(), manifest_hash: String::new(), seed: 0, metrics: report };
            match out {
                Some(p) => io::write_json(&p, &metrics.metrics)?,
                None => println!("{}", serde_json::to_string_pretty(&metrics.metrics).expect("serializable")),
            }
        }
        Command::Report { run_dir, repeats, radius } => {
            let d = report(&run_dir, &ReportOptions { accumulation_repeats: repeats, presence_radius: radius })?;
            print!("{}", crate::diagnostics::render_text(&d));
        }
        Command::Init { out, seed } => {
            io::write_json(&out, &RunManifest::default_synthetic(seed))?;
        }
        Command::Run { manifest, out, workers, quiet } => {
            let m = RunManifest::load(&manifest)?;
            let out = out
                .or_else(|| m.output_dir.clone())
                .ok_or_else(|| BenchError::config("no output directory: set output_dir, --out or SDMBENCH_OUTPUT_DIR"))?;
            let outcome = run(&m, &out, &RunOptions { workers, verbose: !quiet })?;
            for r in &outcome.leaderboard {
                match r.score {
                    Some(s) => println!("{:>3} {:<24} {s:.4}", r.rank, r.method),
                    None => println!("{:>3} {:<24} failed: {}", r.rank, r.method, r.reason),
                }
            }
        }
    }
    Ok(())
}

/// Distinct species ids named in a submission file.
fn submission_species(path: &Path) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| BenchError::Csv { path: path.to_path_buf(), source })?;
    let col = reader
        .headers()
        .map_err(|source| BenchError::Csv { path: path.to_path_buf(), source })?
        .iter()
        .position(|h| h == "speciesIds")
        .ok_or_else(|| BenchError::MissingColumn { path: path.to_path_buf(), column: "speciesIds".into() })?;
    let mut ids = std::collections::BTreeSet::new();
    for rec in reader.records() {
        let rec = rec.map_err(|source| BenchError::Csv { path: path.to_path_buf(), source })?;
        ids.extend(rec.get(col).unwrap_or("").split_whitespace().map(str::to_string));
    }
    Ok(ids.into_iter().collect())
}
