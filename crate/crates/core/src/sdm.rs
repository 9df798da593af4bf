//! Per-species model banks: cloglog-calibrated Poisson GLMs with predictive
//! species filtering, and per-species random forests.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::assemblage::{assemble, AssemblageRule};
use crate::error::{Error, Result};
use crate::features::{ExpansionKinds, FeatureExpansion, FeatureMatrix, DEFAULT_HINGE_QUANTILES};
use crate::forest::{fit_forest, ForestGrid, ForestModel};
use crate::glm::{fit_calibrated, GlmConfig, PoissonGlm};
use crate::metrics::{f1_score, SurveyConfusion};
use crate::par;
use crate::rng::{self, family};
use crate::types::{PaSurvey, ProbabilityVector, SpeciesIdx};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaxentConfig {
    /// The L1 penalty is `lambda_per_sample · N`.
    pub lambda_per_sample: f64,
    pub glm: GlmConfig,
    pub kinds: ExpansionKinds,
    pub hinge_quantiles: Vec<f64>,
    /// Species with fewer presences use linear features only.
    pub min_presences_full: usize,
    /// Species with fewer presences are dropped.
    pub min_presences: usize,
    pub sub_train_fraction: f64,
}

impl Default for MaxentConfig {
    fn default() -> Self {
        Self {
            lambda_per_sample: 1e-3,
            glm: GlmConfig::default(),
            kinds: ExpansionKinds::ALL,
            hinge_quantiles: DEFAULT_HINGE_QUANTILES.to_vec(),
            min_presences_full: 20,
            min_presences: 5,
            sub_train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesEntry {
    pub presences: usize,
    /// `None` when the species had too few presences to fit.
    pub model: Option<PoissonGlm>,
    /// Expanded-feature columns the model uses.
    pub columns: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
    /// F1 of this species on the filtering sub-validation set.
    pub sub_val_f1: Option<f64>,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesModelBank {
    pub expansion: FeatureExpansion,
    pub species: Vec<SpeciesEntry>,
    /// Micro F1 on the sub-validation set per prefix length, starting at 1.
    #[serde(default)]
    pub filter_curve: Vec<f64>,
}

impl SpeciesModelBank {
    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn kept(&self) -> Vec<SpeciesIdx> {
        (0..self.species.len()).filter(|&s| self.species[s].kept).collect()
    }

    pub fn n_inputs(&self) -> usize {
        self.expansion.variables.len()
    }

    /// Probability vectors for standardized inputs; unkept or unfitted
    /// species get exactly 0.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<ProbabilityVector>> {
        if x.n_cols != self.n_inputs() {
            return Err(Error::DimensionMismatch { expected: self.n_inputs(), found: x.n_cols });
        }
        let xe = self.expansion.expand(x)?;
        Ok(par::map_range(xe.n_rows, |i| {
            let row = xe.row(i);
            let mut buf = Vec::new();
            let p = self
                .species
                .iter()
                .map(|e| match (&e.model, e.kept) {
                    (Some(m), true) => {
                        buf.clear();
                        buf.extend(e.columns.iter().map(|&j| row[j]));
                        m.probability(&buf)
                    }
                    _ => 0.0,
                })
                .collect();
            ProbabilityVector::clamped(p)
        }))
    }
}

fn presence_vectors(surveys: &[&PaSurvey], n_species: usize) -> Result<Vec<Vec<f64>>> {
    let mut y = vec![vec![0.0; surveys.len()]; n_species];
    for (i, s) in surveys.iter().enumerate() {
        s.check_species(n_species)?;
        for &sp in s.present() {
            y[sp][i] = 1.0;
        }
    }
    Ok(y)
}

/// Fits every species without filtering; all fitted species are kept.
pub fn fit_maxent_bank(
    x: &FeatureMatrix,
    surveys: &[&PaSurvey],
    n_species: usize,
    config: &MaxentConfig,
) -> Result<SpeciesModelBank> {
    if x.n_rows != surveys.len() {
        return Err(Error::DimensionMismatch { expected: surveys.len(), found: x.n_rows });
    }
    if surveys.is_empty() {
        return Err(Error::EmptyData("presence-absence training"));
    }
    let expansion = FeatureExpansion::fit(x, config.kinds, &config.hinge_quantiles)?;
    let full = expansion.expand(x)?;
    let all_cols: Vec<usize> = (0..full.n_cols).collect();
    let linear_cols = expansion.linear_output_columns();
    let linear = full.select_columns(&linear_cols);
    let y = presence_vectors(surveys, n_species)?;
    let lambda = config.lambda_per_sample * surveys.len() as f64;

    let species = par::try_map_range(n_species, |s| {
        let ys = &y[s];
        let presences = ys.iter().filter(|&&v| v > 0.0).count();
        if presences < config.min_presences.max(1) {
            return Ok(SpeciesEntry {
                presences,
                model: None,
                columns: Vec::new(),
                converged: false,
                iterations: 0,
                sub_val_f1: None,
                kept: false,
            });
        }
        let (xm, columns) =
            if presences < config.min_presences_full { (&linear, linear_cols.clone()) } else { (&full, all_cols.clone()) };
        let fit = fit_calibrated(xm, ys, lambda, &config.glm)?;
        Ok::<_, Error>(SpeciesEntry {
            presences,
            model: Some(fit.model),
            columns,
            converged: fit.converged,
            iterations: fit.iterations,
            sub_val_f1: None,
            kept: true,
        })
    })?;
    Ok(SpeciesModelBank { expansion, species, filter_curve: Vec::new() })
}

/// Ranks species by sub-validation F1 from top-S sets, sweeps the number of
/// species allowed to be predicted, and keeps the best prefix.
///
/// Returns the ranking, the micro F1 per prefix length and the kept count.
pub fn filter_species_models(
    bank: &SpeciesModelBank,
    x_val: &FeatureMatrix,
    val: &[&PaSurvey],
) -> Result<(Vec<SpeciesIdx>, Vec<f64>, usize)> {
    let n_species = bank.n_species();
    let probs = bank.predict(x_val)?;
    let f1 = per_species_f1(val, &probs, n_species);
    let mut ranking: Vec<SpeciesIdx> = (0..n_species).collect();
    ranking.sort_by(|&a, &b| f1[b].total_cmp(&f1[a]).then(a.cmp(&b)));

    let curve = par::map_range(n_species, |m| {
        let r = AssemblageRule::top_s().with_kept(ranking[..m + 1].to_vec());
        let total: f64 = val
            .iter()
            .zip(&probs)
            .map(|(s, p)| SurveyConfusion::from_sorted(s.present(), assemble("", p, &r).species()).f1())
            .sum();
        total / val.len().max(1) as f64
    });
    let mut best = 0;
    for m in 1..curve.len() {
        if curve[m] > curve[best] {
            best = m;
        }
    }
    Ok((ranking, curve, best + 1))
}

/// Fits the bank with species filtering: a seeded random sub-train /
/// sub-validation split picks the kept species, then every species is refit
/// on all training surveys.
pub fn fit_maxent_filtered(
    x: &FeatureMatrix,
    surveys: &[&PaSurvey],
    n_species: usize,
    config: &MaxentConfig,
    seed: u64,
) -> Result<SpeciesModelBank> {
    let n = surveys.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, family::SUBSPLIT, 0));
    let n_sub = crate::math::round_half_away(n as f64 * config.sub_train_fraction) as usize;
    if n_sub == 0 || n_sub >= n {
        return Err(Error::Config(alloc::format!("sub-train split of {n} surveys leaves an empty side")));
    }
    let (sub_train, sub_val) = order.split_at(n_sub);
    let mut sub_train = sub_train.to_vec();
    let mut sub_val = sub_val.to_vec();
    sub_train.sort_unstable();
    sub_val.sort_unstable();
    let pick = |rows: &[usize]| rows.iter().map(|&i| surveys[i]).collect::<Vec<_>>();

    let sub_bank = fit_maxent_bank(&x.select_rows(&sub_train), &pick(&sub_train), n_species, config)?;
    let val = pick(&sub_val);
    let (ranking, curve, kept) = filter_species_models(&sub_bank, &x.select_rows(&sub_val), &val)?;

    let mut bank = fit_maxent_bank(x, surveys, n_species, config)?;
    let mut keep = vec![false; n_species];
    for &s in &ranking[..kept] {
        keep[s] = true;
    }
    let probs = sub_bank.predict(&x.select_rows(&sub_val))?;
    let sub_f1 = per_species_f1(&val, &probs, n_species);
    for (s, e) in bank.species.iter_mut().enumerate() {
        e.kept = keep[s] && e.model.is_some();
        e.sub_val_f1 = Some(sub_f1[s]);
    }
    bank.filter_curve = curve;
    Ok(bank)
}

fn per_species_f1(val: &[&PaSurvey], probs: &[ProbabilityVector], n_species: usize) -> Vec<f64> {
    let rule = AssemblageRule::top_s();
    let mut c = vec![(0usize, 0usize, 0usize); n_species];
    for (s, p) in val.iter().zip(probs) {
        let set = assemble("", p, &rule);
        for sp in 0..n_species {
            match (s.contains(sp), set.species().binary_search(&sp).is_ok()) {
                (true, true) => c[sp].0 += 1,
                (false, true) => c[sp].1 += 1,
                (true, false) => c[sp].2 += 1,
                _ => {}
            }
        }
    }
    c.iter().map(|&(tp, fp, fn_)| f1_score(tp, fp, fn_)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestBank {
    pub models: Vec<ForestModel>,
    pub single_class: Vec<bool>,
}

impl ForestBank {
    pub fn fit(
        x: &FeatureMatrix,
        surveys: &[&PaSurvey],
        n_species: usize,
        grid: &ForestGrid,
        folds: usize,
        seed: u64,
    ) -> Result<Self> {
        if x.n_rows != surveys.len() {
            return Err(Error::DimensionMismatch { expected: surveys.len(), found: x.n_rows });
        }
        let mut y = vec![vec![false; surveys.len()]; n_species];
        for (i, s) in surveys.iter().enumerate() {
            s.check_species(n_species)?;
            for &sp in s.present() {
                y[sp][i] = true;
            }
        }
        let fits = par::try_map_range(n_species, |s| fit_forest(x, &y[s], grid, folds, rng::derive(seed, s as u64)))?;
        Ok(Self {
            single_class: fits.iter().map(|f| f.single_class).collect(),
            models: fits.into_iter().map(|f| f.model).collect(),
        })
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<ProbabilityVector>> {
        let cols: Vec<Vec<f64>> = self.models.iter().map(|m| m.predict(x)).collect::<Result<_>>()?;
        Ok((0..x.n_rows).map(|i| ProbabilityVector::clamped(cols.iter().map(|c| c[i]).collect())).collect())
    }
}
