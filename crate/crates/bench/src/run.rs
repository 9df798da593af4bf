//! Running a manifest: split, fit, predict, evaluate, leaderboard.
//!
//! Run directory:
//!
//! ```text
//! manifest.json  provenance.json  split.csv  truth.csv
//! leaderboard.csv  leaderboard.json
//! data/           species.json, po.csv, pa.csv (every survey)
//! methods/<name>/ submission.csv, metrics.json [, model.json]
//! ```

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use sdmbench_core::metrics::{evaluate, MetricsReport};
use sdmbench_core::split::spatial_block_split;
use sdmbench_core::{Crs, Location, PaSurvey, PredictionSet};

use crate::error::{BenchError, Result};
use crate::io;
use crate::manifest::RunManifest;
use crate::methods::{fit, method_seed, predict_sets, FittedModel, MethodEntry, TrainSet};
use crate::world::{self, Data};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub manifest_hash: String,
    pub seed: u64,
    pub crs: Crs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub method: String,
    pub model: String,
    pub predictors: String,
    /// Micro F1.
    pub score: Option<f64>,
    /// Macro species F1.
    pub score_sp: Option<f64>,
    pub abs_error: Option<f64>,
    pub bias: Option<f64>,
    pub status: Status,
    /// Failure reason; empty on success.
    pub reason: String,
    pub manifest_hash: String,
    pub seed: u64,
}

/// `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: String,
    pub manifest_hash: String,
    pub seed: u64,
    pub metrics: MetricsReport,
}

/// `model.json`: enough to predict again without refitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub entry: MethodEntry,
    pub species: Vec<String>,
    pub seed: u64,
    pub model: FittedModel,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
    /// Progress and timings on stderr.
    pub verbose: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest_hash: String,
    pub leaderboard: Vec<LeaderboardRow>,
}

/// Result of fitting and evaluating one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub predictions: Vec<PredictionSet>,
    pub report: MetricsReport,
    pub model: FittedModel,
}

/// Fits on `train`, predicts the `test` locations and scores against `test`.
pub fn fit_and_evaluate(
    entry: &MethodEntry,
    data: &Data,
    train: &[PaSurvey],
    test: &[PaSurvey],
    seed: u64,
) -> Result<MethodResult> {
    entry.validate(Some(data.species.len()))?;
    let set = TrainSet { grids: &data.grids, n_species: data.species.len(), po: &data.po, pa: train };
    let model = fit(&entry.spec, &set, method_seed(seed, &entry.name))?;
    let ids: Vec<String> = test.iter().map(|s| s.survey_id.clone()).collect();
    let locs: Vec<Location> = test.iter().map(|s| s.location).collect();
    let (predictions, _) = predict_sets(&model, &entry.rule(), &data.grids, &ids, &locs)?;
    let report = evaluate(test, &predictions)?;
    Ok(MethodResult { predictions, report, model })
}

pub fn run(manifest: &RunManifest, out_dir: &Path, options: &RunOptions) -> Result<RunOutcome> {
    manifest.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.workers {
        if n == 0 {
            return Err(BenchError::config("worker count must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| BenchError::config(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(manifest, out_dir, options))
}

fn log(options: &RunOptions, msg: std::fmt::Arguments<'_>) {
    if options.verbose {
        let mut err = std::io::stderr().lock();
        let _ = writeln!(err, "{msg}");
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn run_in_pool(manifest: &RunManifest, out: &Path, options: &RunOptions) -> Result<RunOutcome> {
    let hash = manifest.hash();
    let seed = manifest.seed;
    let start = Instant::now();
    let data = manifest.load_data()?;
    log(options, format_args!("data: {} PO, {} PA, {} species", data.po.len(), data.pa.len(), data.species.len()));

    let split = spatial_block_split(
        &data.pa,
        manifest.split.block_size_for(data.crs),
        manifest.split.test_fraction,
        manifest.split.origin,
        seed,
    )?;
    let (train, test) = split.partition(&data.pa);
    log(options, format_args!("split: {} train, {} test surveys", train.len(), test.len()));

    std::fs::create_dir_all(out).map_err(|e| BenchError::io(out, e))?;
    let mut stored = manifest.clone();
    stored.output_dir = None;
    io::write_json(&out.join("manifest.json"), &stored)?;
    io::write_json(&out.join("provenance.json"), &Provenance { manifest_hash: hash.clone(), seed, crs: data.crs })?;
    let data_dir = out.join("data");
    world::write_species(&data_dir, &data.species)?;
    io::write_po_csv(&data_dir.join("po.csv"), &data.po, &data.species)?;
    io::write_pa_csv(&data_dir.join("pa.csv"), &data.pa, &data.species)?;
    io::write_split(&out.join("split.csv"), &split)?;
    io::write_pa_csv(&out.join("truth.csv"), &test, &data.species)?;

    let mut rows = Vec::with_capacity(manifest.methods.len());
    for entry in &manifest.methods {
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| fit_and_evaluate(entry, &data, &train, &test, seed)))
            .unwrap_or_else(|p| Err(BenchError::data(format!("method panicked: {}", panic_message(p)))));
        let dir = out.join("methods").join(&entry.name);
        let mut row = LeaderboardRow {
            rank: 0,
            method: entry.name.clone(),
            model: entry.spec.model_label(),
            predictors: entry.spec.predictors_label(),
            score: None,
            score_sp: None,
            abs_error: None,
            bias: None,
            status: Status::Failed,
            reason: String::new(),
            manifest_hash: hash.clone(),
            seed,
        };
        match result {
            Ok(r) => {
                io::write_submission(&dir.join("submission.csv"), &r.predictions, &data.species)?;
                io::write_json(
                    &dir.join("metrics.json"),
                    &MethodMetrics { method: entry.name.clone(), manifest_hash: hash.clone(), seed, metrics: r.report.clone() },
                )?;
                if manifest.save_models {
                    io::write_json(
                        &dir.join("model.json"),
                        &SavedModel {
                            entry: entry.clone(),
                            species: data.species.ids().to_vec(),
                            seed: method_seed(seed, &entry.name),
                            model: r.model,
                        },
                    )?;
                }
                row.score = Some(r.report.micro_f1);
                row.score_sp = Some(r.report.macro_species_f1);
                row.abs_error = Some(r.report.set_size.abs_error);
                row.bias = Some(r.report.set_size.bias);
                row.status = Status::Ok;
                log(options, format_args!("{}: F1 {:.4} ({:.1?})", entry.name, r.report.micro_f1, t0.elapsed()));
            }
            Err(e) => {
                row.reason = e.to_string();
                log(options, format_args!("{}: failed: {e}", entry.name));
            }
        }
        rows.push(row);
    }

    sort_leaderboard(&mut rows);
    write_leaderboard(&out.join("leaderboard.csv"), &rows)?;
    io::write_json(&out.join("leaderboard.json"), &rows)?;
    log(options, format_args!("run finished in {:.1?}", start.elapsed()));
    Ok(RunOutcome { dir: out.to_path_buf(), manifest_hash: hash, leaderboard: rows })
}

/// Successful rows by descending score (ties by name), then failed rows by name.
pub fn sort_leaderboard(rows: &mut [LeaderboardRow]) {
    rows.sort_by(|a, b| match (a.score, b.score) {
        (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.method.cmp(&b.method)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.method.cmp(&b.method),
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_leaderboard(path: &Path, rows: &[LeaderboardRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let err = |source| BenchError::Csv { path: path.to_path_buf(), source };
    w.write_record([
        "rank", "method", "model", "predictors", "score", "score_sp", "abs_error", "bias", "status", "reason",
        "manifest_hash", "seed",
    ])
    .map_err(err)?;
    for r in rows {
        let status = match r.status {
            Status::Ok => "ok",
            Status::Failed => "failed",
        };
        w.write_record([
            r.rank.to_string(),
            r.method.clone(),
            r.model.clone(),
            r.predictors.clone(),
            opt(r.score),
            opt(r.score_sp),
            opt(r.abs_error),
            opt(r.bias),
            status.to_string(),
            r.reason.clone(),
            r.manifest_hash.clone(),
            r.seed.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}
