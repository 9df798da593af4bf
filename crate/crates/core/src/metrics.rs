//! Set-valued evaluation: survey-averaged F1, species-averaged F1, set-size
//! errors, per-stratum breakdowns and the descriptive diagnostics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::spearman;
use crate::par;
use crate::rng::{self, family};
use crate::spatial::SpatialIndex;
use crate::types::{PaSurvey, PoRecord, PredictionSet, SpeciesIdx};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyConfusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl SurveyConfusion {
    /// Counts from two ascending, duplicate-free species lists.
    pub fn from_sorted(truth: &[SpeciesIdx], pred: &[SpeciesIdx]) -> Self {
        let (mut i, mut j, mut tp) = (0, 0, 0);
        while i < truth.len() && j < pred.len() {
            match truth[i].cmp(&pred[j]) {
                core::cmp::Ordering::Equal => {
                    tp += 1;
                    i += 1;
                    j += 1;
                }
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
            }
        }
        Self { tp, fp: pred.len() - tp, fn_: truth.len() - tp }
    }

    /// `tp / (tp + (fp + fn) / 2)`, with 0/0 taken as 0.
    pub fn f1(&self) -> f64 {
        f1_score(self.tp, self.fp, self.fn_)
    }
}

pub fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = tp as f64 + (fp + fn_) as f64 / 2.0;
    if denom == 0.0 {
        0.0
    } else {
        tp as f64 / denom
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetSizeReport {
    pub abs_error: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub micro_f1: f64,
    pub macro_species_f1: f64,
    pub n_surveys: usize,
    pub per_stratum: BTreeMap<String, f64>,
    pub set_size: SetSizeReport,
    /// Truth surveys with no prediction row; scored as empty sets.
    pub missing_predictions: usize,
    /// Prediction rows whose survey id is not in the truth; ignored.
    pub unmatched_predictions: usize,
}

/// Predictions matched to truth surveys by id.
#[derive(Debug, Clone)]
pub struct Aligned<'a> {
    pub truth: &'a [PaSurvey],
    pub preds: Vec<&'a [SpeciesIdx]>,
    pub missing: usize,
    pub unmatched: usize,
}

pub fn align<'a>(truth: &'a [PaSurvey], preds: &'a [PredictionSet]) -> Result<Aligned<'a>> {
    if truth.is_empty() {
        return Err(Error::NoSurveys);
    }
    let by_id: BTreeMap<&str, &[SpeciesIdx]> =
        preds.iter().map(|p| (p.survey_id.as_str(), p.species())).collect();
    let mut missing = 0;
    let mut seen = 0;
    let aligned = truth
        .iter()
        .map(|s| match by_id.get(s.survey_id.as_str()) {
            Some(p) => {
                seen += 1;
                *p
            }
            None => {
                missing += 1;
                &[][..]
            }
        })
        .collect();
    Ok(Aligned { truth, preds: aligned, missing, unmatched: by_id.len() - seen })
}

impl Aligned<'_> {
    pub fn confusions(&self) -> Vec<SurveyConfusion> {
        par::map_range(self.truth.len(), |i| SurveyConfusion::from_sorted(self.truth[i].present(), self.preds[i]))
    }

    pub fn micro_f1(&self) -> f64 {
        let c = self.confusions();
        c.iter().map(SurveyConfusion::f1).sum::<f64>() / c.len() as f64
    }

    pub fn macro_species_f1(&self) -> f64 {
        let mut counts: BTreeMap<SpeciesIdx, (usize, usize, usize)> = BTreeMap::new();
        for (s, p) in self.truth.iter().zip(&self.preds) {
            let truth = s.present();
            for &sp in truth {
                let e = counts.entry(sp).or_default();
                if p.binary_search(&sp).is_ok() {
                    e.0 += 1;
                } else {
                    e.2 += 1;
                }
            }
            for &sp in *p {
                if truth.binary_search(&sp).is_err() {
                    counts.entry(sp).or_default().1 += 1;
                }
            }
        }
        if counts.is_empty() {
            return 0.0;
        }
        counts.values().map(|&(tp, fp, fn_)| f1_score(tp, fp, fn_)).sum::<f64>() / counts.len() as f64
    }

    pub fn set_size(&self) -> SetSizeReport {
        let n = self.truth.len() as f64;
        let (mut abs, mut sum) = (0.0, 0.0);
        for (s, p) in self.truth.iter().zip(&self.preds) {
            let e = p.len() as f64 - s.present().len() as f64;
            abs += e.abs();
            sum += e;
        }
        SetSizeReport { abs_error: abs / n, bias: sum / n }
    }

    pub fn per_stratum(&self) -> BTreeMap<String, f64> {
        let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for (c, s) in self.confusions().iter().zip(self.truth) {
            let e = acc.entry(s.stratum_or_default()).or_default();
            e.0 += c.f1();
            e.1 += 1;
        }
        acc.into_iter().map(|(k, (sum, n))| (String::from(k), sum / n as f64)).collect()
    }

    pub fn report(&self) -> MetricsReport {
        MetricsReport {
            micro_f1: self.micro_f1(),
            macro_species_f1: self.macro_species_f1(),
            n_surveys: self.truth.len(),
            per_stratum: self.per_stratum(),
            set_size: self.set_size(),
            missing_predictions: self.missing,
            unmatched_predictions: self.unmatched,
        }
    }
}

/// Mean over surveys of the per-survey F1.
pub fn micro_f1(truth: &[PaSurvey], preds: &[PredictionSet]) -> Result<f64> {
    Ok(align(truth, preds)?.micro_f1())
}

/// Mean over species of the per-species F1, counted across surveys.
///
/// The species universe is every species present in the truth or in any
/// prediction; species that are only ever predicted score 0.
pub fn macro_species_f1(truth: &[PaSurvey], preds: &[PredictionSet]) -> Result<f64> {
    Ok(align(truth, preds)?.macro_species_f1())
}

pub fn set_size_errors(truth: &[PaSurvey], preds: &[PredictionSet]) -> Result<SetSizeReport> {
    Ok(align(truth, preds)?.set_size())
}

/// Micro F1 within each stratum; an empty truth list gives an empty map.
pub fn per_stratum_micro_f1(truth: &[PaSurvey], preds: &[PredictionSet]) -> BTreeMap<String, f64> {
    align(truth, preds).map(|a| a.per_stratum()).unwrap_or_default()
}

pub fn evaluate(truth: &[PaSurvey], preds: &[PredictionSet]) -> Result<MetricsReport> {
    Ok(align(truth, preds)?.report())
}

/// Mean number of distinct species among `n` surveys drawn without
/// replacement, for `n = 1..=len`.
///
/// Each repeat draws one random permutation; its prefixes are uniform
/// subsamples of every size.
pub fn species_accumulation(surveys: &[PaSurvey], n_repeats: usize, seed: u64) -> Result<Vec<(usize, f64)>> {
    if n_repeats == 0 {
        return Err(Error::Config("species accumulation needs at least one repeat".into()));
    }
    let n = surveys.len();
    let curves = par::map_range(n_repeats, |r| {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(seed, family::ACCUMULATION, r as u64));
        let mut seen = BTreeSet::new();
        order
            .iter()
            .map(|&i| {
                seen.extend(surveys[i].present().iter().copied());
                seen.len()
            })
            .collect::<Vec<usize>>()
    });
    let mut totals = vec![0usize; n];
    for c in &curves {
        for (t, v) in totals.iter_mut().zip(c) {
            *t += v;
        }
    }
    Ok(totals.iter().enumerate().map(|(i, &t)| (i + 1, t as f64 / n_repeats as f64)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresenceComparison {
    pub pa_count: Vec<usize>,
    pub po_count: Vec<usize>,
    /// Spearman correlation over species with at least one PA presence.
    pub spearman: Option<f64>,
}

/// Per-species PA presence counts against counts of PO records lying within
/// `radius` of any PA survey.
pub fn presence_count_comparison(
    pa: &[PaSurvey],
    po: &[PoRecord],
    radius: f64,
    n_species: usize,
) -> Result<PresenceComparison> {
    if !(radius >= 0.0) {
        return Err(Error::Config(alloc::format!("radius {radius} must be non-negative")));
    }
    let mut pa_count = vec![0usize; n_species];
    for s in pa {
        s.check_species(n_species)?;
        for &sp in s.present() {
            pa_count[sp] += 1;
        }
    }
    let locs: Vec<_> = pa.iter().map(|s| s.location).collect();
    let index = SpatialIndex::new(&locs)?;
    let near = par::try_map_range(po.len(), |i| index.any_within(&po[i].location, radius))?;
    let mut po_count = vec![0usize; n_species];
    for (r, hit) in po.iter().zip(near) {
        if r.species >= n_species {
            return Err(Error::SpeciesOutOfRange { index: r.species, n_species });
        }
        if hit {
            po_count[r.species] += 1;
        }
    }
    let (a, b): (Vec<f64>, Vec<f64>) = pa_count
        .iter()
        .zip(&po_count)
        .filter(|(&p, _)| p > 0)
        .map(|(&p, &q)| (p as f64, q as f64))
        .unzip();
    Ok(PresenceComparison { spearman: spearman(&a, &b), pa_count, po_count })
}
