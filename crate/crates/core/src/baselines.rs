//! Nonparametric baselines: constant set, spatial kNN on presence-only and
//! presence-absence data, and the co-occurrence assemblage around nearby
//! presence-only records.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::assemblage::{calibrate_constant_k, frequency_ranking};
use crate::error::{Error, Result};
use crate::spatial::SpatialIndex;
use crate::types::{Location, PaSurvey, PoRecord, ProbabilityVector, SpeciesIdx};

pub const DEFAULT_KNN_K: usize = 100;

/// Predicts the same species set for every survey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantPredictor {
    pub species: Vec<SpeciesIdx>,
}

impl ConstantPredictor {
    /// Top-`k` most frequent validation species.
    pub fn with_k(validation: &[PaSurvey], n_species: usize, k: usize) -> Result<Self> {
        let ranking = frequency_ranking(validation, n_species)?;
        let mut species = ranking[..k.min(n_species)].to_vec();
        species.sort_unstable();
        Ok(Self { species })
    }

    /// K chosen by [`calibrate_constant_k`].
    pub fn calibrated(validation: &[PaSurvey], n_species: usize, k_max: usize) -> Result<Self> {
        Ok(Self { species: calibrate_constant_k(validation, n_species, k_max)?.species() })
    }

    pub fn predict(&self) -> Vec<SpeciesIdx> {
        self.species.clone()
    }
}

/// Union of species over the k nearest presence-only records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnPo {
    pub k: usize,
    index: SpatialIndex,
    species: Vec<SpeciesIdx>,
}

impl KnnPo {
    pub fn fit(po: &[PoRecord], k: usize) -> Result<Self> {
        if po.is_empty() {
            return Err(Error::EmptyData("presence-only"));
        }
        if k == 0 || k > po.len() {
            return Err(Error::InvalidK { k, n: po.len() });
        }
        let locs: Vec<Location> = po.iter().map(|r| r.location).collect();
        Ok(Self { k, index: SpatialIndex::new(&locs)?, species: po.iter().map(|r| r.species).collect() })
    }

    pub fn predict(&self, loc: &Location) -> Result<Vec<SpeciesIdx>> {
        let mut out: Vec<SpeciesIdx> =
            self.index.nearest_with_ties(loc, self.k)?.iter().map(|n| self.species[n.index]).collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}

/// Per-species presence fraction among the k nearest training surveys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnPa {
    pub k: usize,
    pub n_species: usize,
    index: SpatialIndex,
    present: Vec<Vec<SpeciesIdx>>,
}

impl KnnPa {
    pub fn fit(pa: &[PaSurvey], n_species: usize, k: usize) -> Result<Self> {
        if pa.is_empty() {
            return Err(Error::EmptyData("presence-absence"));
        }
        if k == 0 || k > pa.len() {
            return Err(Error::InvalidK { k, n: pa.len() });
        }
        for s in pa {
            s.check_species(n_species)?;
        }
        let locs: Vec<Location> = pa.iter().map(|s| s.location).collect();
        Ok(Self {
            k,
            n_species,
            index: SpatialIndex::new(&locs)?,
            present: pa.iter().map(|s| s.present().to_vec()).collect(),
        })
    }

    /// Uses exactly the k nearest surveys; distance ties at the k-th place go
    /// to the lowest training index, so the mass identity holds exactly.
    pub fn predict(&self, loc: &Location) -> Result<ProbabilityVector> {
        let neighbours = self.index.nearest_with_ties(loc, self.k)?;
        let mut p = vec![0.0; self.n_species];
        for n in neighbours.iter().take(self.k) {
            for &s in &self.present[n.index] {
                p[s] += 1.0;
            }
        }
        let k = self.k as f64;
        Ok(ProbabilityVector::clamped(p.into_iter().map(|c| c / k).collect()))
    }
}

/// Conditional presence proportions among presence-absence plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceTable {
    pub n_species: usize,
    /// Row `c`, column `s`: share of plots containing `c` that also contain `s`.
    pub cond: Vec<f64>,
    pub marginal: Vec<f64>,
}

impl CooccurrenceTable {
    pub fn build(pa: &[PaSurvey], n_species: usize) -> Result<Self> {
        if pa.is_empty() {
            return Err(Error::EmptyData("presence-absence"));
        }
        let mut joint = vec![0usize; n_species * n_species];
        let mut count = vec![0usize; n_species];
        for s in pa {
            s.check_species(n_species)?;
            for &c in s.present() {
                count[c] += 1;
                for &t in s.present() {
                    joint[c * n_species + t] += 1;
                }
            }
        }
        let mut cond = vec![0.0; n_species * n_species];
        for c in 0..n_species {
            if count[c] > 0 {
                for t in 0..n_species {
                    cond[c * n_species + t] = joint[c * n_species + t] as f64 / count[c] as f64;
                }
            }
        }
        let n = pa.len() as f64;
        Ok(Self { n_species, cond, marginal: count.iter().map(|&c| c as f64 / n).collect() })
    }

    /// `P(s | c)`.
    pub fn cond(&self, s: SpeciesIdx, given: SpeciesIdx) -> f64 {
        self.cond[given * self.n_species + s]
    }

    /// Marginal-weighted average of the conditional rows of `observed`,
    /// falling back to the marginals when nothing carries weight.
    pub fn combine(&self, observed: &[SpeciesIdx]) -> ProbabilityVector {
        let mut p = vec![0.0; self.n_species];
        let mut total = 0.0;
        for &c in observed {
            let w = self.marginal[c];
            if w > 0.0 {
                total += w;
                let row = &self.cond[c * self.n_species..(c + 1) * self.n_species];
                for (o, &v) in p.iter_mut().zip(row) {
                    *o += w * v;
                }
            }
        }
        if total == 0.0 {
            return ProbabilityVector::clamped(self.marginal.clone());
        }
        ProbabilityVector::clamped(p.into_iter().map(|v| v / total).collect())
    }
}

/// Co-occurrence table applied to the distinct PO species within a radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrencePredictor {
    pub table: CooccurrenceTable,
    pub radius: f64,
    index: SpatialIndex,
    species: Vec<SpeciesIdx>,
}

impl CooccurrencePredictor {
    pub fn fit(pa: &[PaSurvey], po: &[PoRecord], n_species: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Config(alloc::format!("radius {radius} must be positive")));
        }
        let table = CooccurrenceTable::build(pa, n_species)?;
        let locs: Vec<Location> = po.iter().map(|r| r.location).collect();
        if let Some(r) = po.iter().find(|r| r.species >= n_species) {
            return Err(Error::SpeciesOutOfRange { index: r.species, n_species });
        }
        Ok(Self { table, radius, index: SpatialIndex::new(&locs)?, species: po.iter().map(|r| r.species).collect() })
    }

    pub fn observed_near(&self, loc: &Location) -> Result<Vec<SpeciesIdx>> {
        let mut c: Vec<SpeciesIdx> =
            self.index.within_radius(loc, self.radius)?.iter().map(|n| self.species[n.index]).collect();
        c.sort_unstable();
        c.dedup();
        Ok(c)
    }

    pub fn predict(&self, loc: &Location) -> Result<ProbabilityVector> {
        Ok(self.table.combine(&self.observed_near(loc)?))
    }
}
