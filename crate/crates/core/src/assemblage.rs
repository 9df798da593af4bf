//! Turning per-species probabilities into predicted species sets.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::round_half_away;
use crate::metrics::f1_score;
use crate::par;
use crate::types::{PaSurvey, PredictionSet, ProbabilityVector, SpeciesIdx};

pub const DEFAULT_K_MAX: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssemblageKind {
    /// The `S` most probable species, `S` the rounded probability mass.
    TopSExpected,
    FixedThreshold { tau: f64 },
    FixedK { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblageRule {
    #[serde(flatten)]
    pub kind: AssemblageKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max: Option<usize>,
    /// Species allowed in the set; all others are treated as probability 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kept_species: Option<Vec<SpeciesIdx>>,
}

impl Default for AssemblageRule {
    fn default() -> Self {
        Self::top_s()
    }
}

impl AssemblageRule {
    pub fn top_s() -> Self {
        Self { kind: AssemblageKind::TopSExpected, s_max: None, kept_species: None }
    }

    pub fn threshold(tau: f64) -> Self {
        Self { kind: AssemblageKind::FixedThreshold { tau }, s_max: None, kept_species: None }
    }

    pub fn fixed_k(k: usize) -> Self {
        Self { kind: AssemblageKind::FixedK { k }, s_max: None, kept_species: None }
    }

    pub fn with_s_max(mut self, s_max: usize) -> Self {
        self.s_max = Some(s_max);
        self
    }

    pub fn with_kept(mut self, kept: Vec<SpeciesIdx>) -> Self {
        self.kept_species = Some(kept);
        self
    }

    pub fn validate(&self, n_species: usize) -> Result<()> {
        if let AssemblageKind::FixedThreshold { tau } = self.kind {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::Config(format!("threshold {tau} must be in (0, 1)")));
            }
        }
        if let Some(kept) = &self.kept_species {
            if let Some(&bad) = kept.iter().find(|&&s| s >= n_species) {
                return Err(Error::SpeciesOutOfRange { index: bad, n_species });
            }
        }
        Ok(())
    }

    fn mask(&self, n: usize) -> Option<Vec<bool>> {
        self.kept_species.as_ref().map(|kept| {
            let mut m = vec![false; n];
            for &s in kept {
                if s < n {
                    m[s] = true;
                }
            }
            m
        })
    }

    /// Describes the rule in leaderboard form, e.g. `top_s` or `k=20`.
    pub fn label(&self) -> String {
        let base = match self.kind {
            AssemblageKind::TopSExpected => String::from("top_s"),
            AssemblageKind::FixedThreshold { tau } => format!("p>={tau}"),
            AssemblageKind::FixedK { k } => format!("k={k}"),
        };
        match self.s_max {
            Some(m) => format!("{base},max={m}"),
            None => base,
        }
    }
}

/// Candidate species ordered by probability descending, index ascending.
fn ranked(p: &[f64], mask: Option<&[bool]>) -> Vec<SpeciesIdx> {
    let mut idx: Vec<SpeciesIdx> = (0..p.len()).filter(|&s| mask.is_none_or(|m| m[s])).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    idx
}

fn assemble_masked(p: &[f64], rule: &AssemblageRule, mask: Option<&[bool]>) -> Vec<SpeciesIdx> {
    let kept = |s: usize| mask.is_none_or(|m| m[s]);
    let cap = rule.s_max.unwrap_or(p.len()).min(p.len());
    let mut out = match rule.kind {
        AssemblageKind::TopSExpected => {
            let mass: f64 = (0..p.len()).filter(|&s| kept(s)).map(|s| p[s]).sum();
            let s = (round_half_away(mass).max(0.0) as usize).min(cap);
            let mut r = ranked(p, mask);
            r.truncate(s);
            r
        }
        AssemblageKind::FixedK { k } => {
            let mut r = ranked(p, mask);
            r.truncate(k.min(cap));
            r
        }
        AssemblageKind::FixedThreshold { tau } => {
            let mut r: Vec<SpeciesIdx> = ranked(p, mask).into_iter().take_while(|&s| p[s] >= tau).collect();
            r.truncate(cap);
            r
        }
    };
    out.sort_unstable();
    out
}

pub fn assemble(survey_id: impl Into<String>, p: &ProbabilityVector, rule: &AssemblageRule) -> PredictionSet {
    let mask = rule.mask(p.len());
    PredictionSet::new(survey_id, assemble_masked(p.values(), rule, mask.as_deref()))
}

/// Applies one rule to many surveys in parallel.
pub fn assemble_all(ids: &[String], probs: &[ProbabilityVector], rule: &AssemblageRule) -> Result<Vec<PredictionSet>> {
    if ids.len() != probs.len() {
        return Err(Error::DimensionMismatch { expected: ids.len(), found: probs.len() });
    }
    let n = probs.first().map_or(0, ProbabilityVector::len);
    let mask = rule.mask(n);
    Ok(par::map_range(ids.len(), |i| {
        PredictionSet::new(ids[i].clone(), assemble_masked(probs[i].values(), rule, mask.as_deref()))
    }))
}

/// Species ranked by presence count in `surveys`, most frequent first.
pub fn frequency_ranking(surveys: &[PaSurvey], n_species: usize) -> Result<Vec<SpeciesIdx>> {
    let mut counts = vec![0usize; n_species];
    for s in surveys {
        s.check_species(n_species)?;
        for &sp in s.present() {
            counts[sp] += 1;
        }
    }
    let mut idx: Vec<SpeciesIdx> = (0..n_species).collect();
    idx.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    Ok(idx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantK {
    pub k: usize,
    pub score: f64,
    pub ranking: Vec<SpeciesIdx>,
}

impl ConstantK {
    /// The fixed top-`k` set, ascending.
    pub fn species(&self) -> Vec<SpeciesIdx> {
        let mut s = self.ranking[..self.k.min(self.ranking.len())].to_vec();
        s.sort_unstable();
        s
    }
}

/// Picks the `K` in `1..=k_max` whose constant top-`K` frequent-species set
/// maximizes micro F1 on `validation`; ties go to the smallest `K`.
pub fn calibrate_constant_k(validation: &[PaSurvey], n_species: usize, k_max: usize) -> Result<ConstantK> {
    if validation.is_empty() {
        return Err(Error::NoSurveys);
    }
    if k_max == 0 {
        return Err(Error::Config("k_max must be at least 1".into()));
    }
    let ranking = frequency_ranking(validation, n_species)?;
    let mut rank_of = vec![0usize; n_species];
    for (r, &s) in ranking.iter().enumerate() {
        rank_of[s] = r;
    }
    let top = k_max.min(n_species.max(1));
    // score[k] accumulates the per-survey F1 of the top-k set.
    let mut best = (0usize, f64::NEG_INFINITY);
    let mut hits = vec![0usize; top + 1];
    let mut score = vec![0.0f64; top + 1];
    for s in validation {
        hits.iter_mut().for_each(|h| *h = 0);
        for &sp in s.present() {
            if rank_of[sp] < top {
                hits[rank_of[sp] + 1] += 1;
            }
        }
        let mut tp = 0;
        for k in 1..=top {
            tp += hits[k];
            score[k] += f1_score(tp, k - tp, s.present().len() - tp);
        }
    }
    for (k, &v) in score.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (k, v);
        }
    }
    let n = validation.len() as f64;
    Ok(ConstantK { k: best.0, score: best.1 / n, ranking })
}

/// Weighted mean of probability vectors; uniform weights by default.
pub fn ensemble_average(ps: &[ProbabilityVector], weights: Option<&[f64]>) -> Result<ProbabilityVector> {
    let first = ps.first().ok_or(Error::EmptyData("ensemble"))?;
    let n = first.len();
    if let Some(p) = ps.iter().find(|p| p.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: p.len() });
    }
    let uniform = vec![1.0; ps.len()];
    let w = weights.unwrap_or(&uniform);
    if w.len() != ps.len() {
        return Err(Error::DimensionMismatch { expected: ps.len(), found: w.len() });
    }
    if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::Config("ensemble weights must be finite and non-negative".into()));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("ensemble weights are all zero".into()));
    }
    let mut out = vec![0.0; n];
    for (p, &wi) in ps.iter().zip(w) {
        for (o, &v) in out.iter_mut().zip(p.values()) {
            *o += wi * v;
        }
    }
    Ok(ProbabilityVector::clamped(out.into_iter().map(|v| v / total).collect()))
}
