//! Domain types shared by every module.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense species index in `0..S`.
pub type SpeciesIdx = usize;

/// Bijection between opaque external species ids and dense indices.
///
/// Indices follow the lexicographic order of the ids, so the index does not
/// depend on the order in which ids were seen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct SpeciesIndex {
    ids: Vec<String>,
    lookup: BTreeMap<String, SpeciesIdx>,
}

impl SpeciesIndex {
    pub fn build<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut unique: Vec<String> = ids.into_iter().map(|s| s.as_ref().to_string()).collect();
        unique.sort();
        unique.dedup();
        if unique.is_empty() {
            return Err(Error::NoSpecies);
        }
        let lookup = unique
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Ok(Self { ids: unique, lookup })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<SpeciesIdx> {
        self.lookup.get(id).copied()
    }

    pub fn id_of(&self, index: SpeciesIdx) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn check(&self, index: SpeciesIdx) -> Result<()> {
        if index < self.len() {
            Ok(())
        } else {
            Err(Error::SpeciesOutOfRange { index, n_species: self.len() })
        }
    }
}

impl TryFrom<Vec<String>> for SpeciesIndex {
    type Error = Error;

    fn try_from(ids: Vec<String>) -> Result<Self> {
        let n = ids.len();
        let index = Self::build(&ids)?;
        if index.len() != n || index.ids != ids {
            return Err(Error::Config("species index must be sorted and unique".into()));
        }
        Ok(index)
    }
}

impl From<SpeciesIndex> for Vec<String> {
    fn from(index: SpeciesIndex) -> Self {
        index.ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Crs {
    /// Degrees longitude/latitude; distances are haversine kilometres.
    LonLat,
    /// Synthetic plane; distances are Euclidean in coordinate units.
    Planar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
    pub crs: Crs,
}

impl Location {
    pub fn new(x: f64, y: f64, crs: Crs) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidLocation { x, y });
        }
        if crs == Crs::LonLat && !((-180.0..=180.0).contains(&x) && (-90.0..=90.0).contains(&y)) {
            return Err(Error::InvalidLocation { x, y });
        }
        Ok(Self { x, y, crs })
    }

    pub fn planar(x: f64, y: f64) -> Self {
        Self { x, y, crs: Crs::Planar }
    }

    pub fn lonlat(lon: f64, lat: f64) -> Result<Self> {
        Self::new(lon, lat, Crs::LonLat)
    }
}

/// Checks that all locations share one CRS tag and returns it.
pub fn uniform_crs<'a, I: IntoIterator<Item = &'a Location>>(locs: I) -> Result<Option<Crs>> {
    let mut crs = None;
    for loc in locs {
        match crs {
            None => crs = Some(loc.crs),
            Some(c) if c != loc.crs => return Err(Error::MixedCrs),
            _ => {}
        }
    }
    Ok(crs)
}

/// Presence-only record: one species reported at one place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoRecord {
    pub record_id: String,
    pub location: Location,
    pub species: SpeciesIdx,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// Presence-absence survey: the complete set of species present in a plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaSurvey {
    pub survey_id: String,
    pub location: Location,
    present: Vec<SpeciesIdx>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
}

impl PaSurvey {
    /// Sorts and deduplicates `present`; rejects an empty inventory.
    pub fn new(
        survey_id: impl Into<String>,
        location: Location,
        mut present: Vec<SpeciesIdx>,
        stratum: Option<String>,
    ) -> Result<Self> {
        let survey_id = survey_id.into();
        present.sort_unstable();
        present.dedup();
        if present.is_empty() {
            return Err(Error::EmptySurvey(survey_id));
        }
        Ok(Self { survey_id, location, present, stratum })
    }

    /// Sorted, duplicate-free species set.
    pub fn present(&self) -> &[SpeciesIdx] {
        &self.present
    }

    pub fn contains(&self, s: SpeciesIdx) -> bool {
        self.present.binary_search(&s).is_ok()
    }

    pub fn stratum_or_default(&self) -> &str {
        self.stratum.as_deref().unwrap_or("all")
    }

    pub fn check_species(&self, n_species: usize) -> Result<()> {
        match self.present.last() {
            Some(&s) if s >= n_species => Err(Error::SpeciesOutOfRange { index: s, n_species }),
            _ => Ok(()),
        }
    }
}

/// Predicted species set for one survey; may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub survey_id: String,
    species: Vec<SpeciesIdx>,
}

impl PredictionSet {
    pub fn new(survey_id: impl Into<String>, mut species: Vec<SpeciesIdx>) -> Self {
        species.sort_unstable();
        species.dedup();
        Self { survey_id: survey_id.into(), species }
    }

    pub fn empty(survey_id: impl Into<String>) -> Self {
        Self { survey_id: survey_id.into(), species: Vec::new() }
    }

    /// Sorted, duplicate-free species set.
    pub fn species(&self) -> &[SpeciesIdx] {
        &self.species
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }
}

/// Per-species presence probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidProbability { index, value });
            }
        }
        Ok(Self(values))
    }

    /// Builds a vector, clamping into [0, 1]. NaN maps to 0.
    pub fn clamped(mut values: Vec<f64>) -> Self {
        for v in &mut values {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(alloc::vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Species-indexed presence-only and presence-absence data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub species: SpeciesIndex,
    pub po: Vec<PoRecord>,
    pub pa: Vec<PaSurvey>,
}

impl Dataset {
    pub fn new(species: SpeciesIndex, po: Vec<PoRecord>, pa: Vec<PaSurvey>) -> Result<Self> {
        let n = species.len();
        for r in &po {
            species.check(r.species)?;
        }
        for s in &pa {
            s.check_species(n)?;
        }
        uniform_crs(po.iter().map(|r| &r.location).chain(pa.iter().map(|s| &s.location)))?;
        Ok(Self { species, po, pa })
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn crs(&self) -> Crs {
        self.pa
            .first()
            .map(|s| s.location.crs)
            .or_else(|| self.po.first().map(|r| r.location.crs))
            .unwrap_or(Crs::Planar)
    }
}
