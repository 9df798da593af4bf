//! Diagnostics for a completed run, written to `<run>/diagnostics/`:
//!
//! - `per_stratum.csv`: micro F1 per method and survey stratum.
//! - `set_size.csv`: set-size abs error and bias per method.
//! - `accumulation.csv`: species accumulation curve per test stratum.
//! - `presence_comparison.csv`, `presence_spearman.json`: per-species PA
//!   presence counts against nearby PO record counts.
//! - `summary.txt`: the same tables as plain text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sdmbench_core::metrics::{align, presence_count_comparison, species_accumulation, SetSizeReport};
use sdmbench_core::{PaSurvey, PredictionSet, SpeciesIndex};

use crate::error::{BenchError, Result};
use crate::io::{self, PaColumns};
use crate::run::{LeaderboardRow, Provenance, Status};
use crate::world;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub accumulation_repeats: usize,
    /// PO records count toward a species when within this distance of any
    /// PA survey (km for lon/lat data, coordinate units otherwise).
    pub presence_radius: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { accumulation_repeats: 20, presence_radius: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSizeRow {
    pub method: String,
    pub abs_error: f64,
    pub bias: f64,
    pub mean_predicted: f64,
    pub mean_true: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresenceSummary {
    pub radius: f64,
    pub spearman: Option<f64>,
    /// Species with at least one PA presence.
    pub n_species: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub dir: PathBuf,
    pub strata: Vec<String>,
    /// `(method, micro F1 per stratum in `strata` order)`.
    pub per_stratum: Vec<(String, Vec<Option<f64>>)>,
    pub set_size: Vec<SetSizeRow>,
    /// `(stratum, curve)`.
    pub accumulation: Vec<(String, Vec<(usize, f64)>)>,
    pub presence: PresenceSummary,
}

/// Submissions of every successful method in leaderboard order.
pub fn load_submissions(run_dir: &Path, species: &SpeciesIndex) -> Result<Vec<(String, Vec<PredictionSet>)>> {
    let rows: Vec<LeaderboardRow> = io::read_json(&run_dir.join("leaderboard.json"))?;
    let mut out = Vec::new();
    for r in rows.iter().filter(|r| r.status == Status::Ok) {
        let path = run_dir.join("methods").join(&r.method).join("submission.csv");
        if !path.is_file() {
            return Err(BenchError::data(format!("method {}: submission {} missing", r.method, path.display())));
        }
        out.push((r.method.clone(), io::read_submission(&path, species)?));
    }
    Ok(out)
}

fn mean_sizes(truth: &[PaSurvey], preds: &[PredictionSet]) -> (f64, f64) {
    let by_id: BTreeMap<&str, usize> = preds.iter().map(|p| (p.survey_id.as_str(), p.len())).collect();
    let n = truth.len() as f64;
    let predicted: usize = truth.iter().map(|s| by_id.get(s.survey_id.as_str()).copied().unwrap_or(0)).sum();
    let actual: usize = truth.iter().map(|s| s.present().len()).sum();
    (predicted as f64 / n, actual as f64 / n)
}

pub fn report(run_dir: &Path, options: &ReportOptions) -> Result<Diagnostics> {
    let prov: Provenance = io::read_json(&run_dir.join("provenance.json"))?;
    let data = world::load_dir(&run_dir.join("data"), prov.crs)?;
    let truth = io::load_pa_csv(&run_dir.join("truth.csv"), &PaColumns::default(), prov.crs, Some(&data.species))?;
    if !truth.rejected.is_empty() {
        return Err(BenchError::data(format!("truth.csv: {} rows rejected", truth.rejected.len())));
    }
    let truth = truth.surveys;
    let submissions = load_submissions(run_dir, &data.species)?;

    let strata: Vec<String> =
        truth.iter().map(|s| s.stratum_or_default().to_string()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut per_stratum = Vec::new();
    let mut set_size = Vec::new();
    for (method, preds) in &submissions {
        let aligned = align(&truth, preds)?;
        let by = aligned.per_stratum();
        per_stratum.push((method.clone(), strata.iter().map(|s| by.get(s).copied()).collect::<Vec<_>>()));
        let SetSizeReport { abs_error, bias } = aligned.set_size();
        let (mean_predicted, mean_true) = mean_sizes(&truth, preds);
        set_size.push(SetSizeRow { method: method.clone(), abs_error, bias, mean_predicted, mean_true });
    }

    let mut accumulation = Vec::new();
    for (k, stratum) in strata.iter().enumerate() {
        let group: Vec<PaSurvey> = truth.iter().filter(|s| s.stratum_or_default() == stratum).cloned().collect();
        let seed = sdmbench_core::rng::derive(prov.seed, k as u64);
        accumulation.push((stratum.clone(), species_accumulation(&group, options.accumulation_repeats, seed)?));
    }

    let comparison = presence_count_comparison(&data.pa, &data.po, options.presence_radius, data.species.len())?;
    let presence = PresenceSummary {
        radius: options.presence_radius,
        spearman: comparison.spearman,
        n_species: comparison.pa_count.iter().filter(|&&c| c > 0).count(),
    };

    let dir = run_dir.join("diagnostics");
    std::fs::create_dir_all(&dir).map_err(|e| BenchError::io(&dir, e))?;
    let csv_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| BenchError::Csv { path: p.clone(), source }
    };
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();

    let path = dir.join("per_stratum.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(std::iter::once("method").chain(strata.iter().map(String::as_str))).map_err(csv_err(&path))?;
    for (m, v) in &per_stratum {
        w.write_record(std::iter::once(m.clone()).chain(v.iter().map(|&x| opt(x)))).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| BenchError::io(&path, e))?;

    let path = dir.join("set_size.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    for r in &set_size {
        w.serialize(r).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| BenchError::io(&path, e))?;

    let path = dir.join("accumulation.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["stratum", "n", "mean_species"]).map_err(csv_err(&path))?;
    for (s, curve) in &accumulation {
        for (n, mean) in curve {
            w.write_record([s.clone(), n.to_string(), mean.to_string()]).map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(|e| BenchError::io(&path, e))?;

    let path = dir.join("presence_comparison.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["speciesId", "pa_count", "po_count"]).map_err(csv_err(&path))?;
    for (s, id) in data.species.ids().iter().enumerate() {
        w.write_record([id.clone(), comparison.pa_count[s].to_string(), comparison.po_count[s].to_string()])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| BenchError::io(&path, e))?;
    io::write_json(&dir.join("presence_spearman.json"), &presence)?;

    let diag = Diagnostics { dir: dir.clone(), strata, per_stratum, set_size, accumulation, presence };
    let summary = dir.join("summary.txt");
    std::fs::write(&summary, render_text(&diag)).map_err(|e| BenchError::io(&summary, e))?;
    Ok(diag)
}

/// Plain-text rendering of the tables, with a coarse accumulation plot.
pub fn render_text(d: &Diagnostics) -> String {
    let mut s = String::new();
    let width = d.per_stratum.iter().map(|(m, _)| m.len()).chain([6]).max().unwrap_or(6);
    let _ = writeln!(s, "micro F1 per stratum");
    let _ = write!(s, "{:width$}", "method");
    for st in &d.strata {
        let _ = write!(s, "  {st:>10}");
    }
    let _ = writeln!(s);
    for (m, v) in &d.per_stratum {
        let _ = write!(s, "{m:width$}");
        for x in v {
            match x {
                Some(x) => {
                    let _ = write!(s, "  {x:>10.4}");
                }
                None => {
                    let _ = write!(s, "  {:>10}", "-");
                }
            }
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s, "\nset size");
    let _ = writeln!(s, "{:width$}  {:>10}  {:>10}  {:>10}", "method", "abs_error", "bias", "mean_size");
    for r in &d.set_size {
        let _ = writeln!(s, "{:width$}  {:>10.3}  {:>10.3}  {:>10.3}", r.method, r.abs_error, r.bias, r.mean_predicted);
    }
    let _ = writeln!(s, "\nspecies accumulation");
    for (st, curve) in &d.accumulation {
        let Some(&(_, top)) = curve.last() else { continue };
        let _ = writeln!(s, "{st} ({} surveys, {top:.1} species)", curve.len());
        let step = (curve.len() / 10).max(1);
        for &(n, mean) in curve.iter().step_by(step) {
            let bar = if top > 0.0 { (40.0 * mean / top).round() as usize } else { 0 };
            let _ = writeln!(s, "{n:>7} {mean:>8.2} {}", "#".repeat(bar));
        }
    }
    let rho = d.presence.spearman.map_or("undefined".to_string(), |r| format!("{r:.4}"));
    let _ = writeln!(
        s,
        "\nPO vs PA presence counts (radius {}): Spearman {rho} over {} species",
        d.presence.radius, d.presence.n_species
    );
    s
}
