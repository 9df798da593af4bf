//! Spatial block hold-out of presence-absence surveys.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::floor;
use crate::rng::{self, family};
use crate::types::{Location, PaSurvey};

/// Default block size for lon/lat data, roughly 50 km in both axes.
pub const LONLAT_BLOCK_DEGREES: f64 = 0.45;

pub type BlockId = (i64, i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Train,
    Test,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Train => "train",
            Side::Test => "test",
        }
    }
}

impl core::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Side::Train),
            "test" => Ok(Side::Test),
            other => Err(Error::Config(format!("unknown split side {other:?}"))),
        }
    }
}

/// Block containing `loc`: floor of the offset from `origin` in block units.
pub fn block_id(loc: &Location, block_size: f64, origin: (f64, f64)) -> BlockId {
    (
        floor((loc.x - origin.0) / block_size) as i64,
        floor((loc.y - origin.1) / block_size) as i64,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub block_size: f64,
    pub origin: (f64, f64),
    pub blocks: BTreeMap<BlockId, Side>,
    pub surveys: BTreeMap<String, (Side, BlockId)>,
}

impl SplitAssignment {
    pub fn side_of(&self, survey_id: &str) -> Option<Side> {
        self.surveys.get(survey_id).map(|&(s, _)| s)
    }

    /// Surveys on `side`, in input order.
    pub fn select<'a>(&self, surveys: &'a [PaSurvey], side: Side) -> Vec<&'a PaSurvey> {
        surveys.iter().filter(|s| self.side_of(&s.survey_id) == Some(side)).collect()
    }

    pub fn partition(&self, surveys: &[PaSurvey]) -> (Vec<PaSurvey>, Vec<PaSurvey>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for s in surveys {
            match self.side_of(&s.survey_id) {
                Some(Side::Train) => train.push(s.clone()),
                Some(Side::Test) => test.push(s.clone()),
                None => {}
            }
        }
        (train, test)
    }

    pub fn test_fraction(&self) -> f64 {
        let n = self.surveys.len();
        let t = self.surveys.values().filter(|(s, _)| *s == Side::Test).count();
        t as f64 / n as f64
    }
}

/// Shuffles blocks by seed and assigns them to test until the
/// survey-weighted test fraction first reaches `test_fraction`.
///
/// `origin` defaults to the lower-left corner of the surveys' bounding box.
pub fn spatial_block_split(
    surveys: &[PaSurvey],
    block_size: f64,
    test_fraction: f64,
    origin: Option<(f64, f64)>,
    seed: u64,
) -> Result<SplitAssignment> {
    if !(block_size > 0.0) || !block_size.is_finite() {
        return Err(Error::Config(format!("block size {block_size} must be positive")));
    }
    if !(test_fraction > 0.0 && test_fraction <= 1.0) {
        return Err(Error::Config(format!("test fraction {test_fraction} must be in (0, 1]")));
    }
    if test_fraction >= 1.0 {
        return Err(Error::EmptyTrain);
    }
    if surveys.is_empty() {
        return Err(Error::NoSurveys);
    }
    let origin = origin.unwrap_or_else(|| {
        surveys.iter().fold((f64::INFINITY, f64::INFINITY), |(x, y), s| {
            (x.min(s.location.x), y.min(s.location.y))
        })
    });

    let mut counts: BTreeMap<BlockId, usize> = BTreeMap::new();
    let mut survey_blocks = BTreeMap::new();
    for s in surveys {
        let b = block_id(&s.location, block_size, origin);
        if survey_blocks.insert(s.survey_id.clone(), b).is_some() {
            return Err(Error::DuplicateSurvey(s.survey_id.clone()));
        }
        *counts.entry(b).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::CannotSplit);
    }

    let mut order: Vec<BlockId> = counts.keys().copied().collect();
    order.shuffle(&mut rng::stream(seed, family::SPLIT, 0));

    let n = surveys.len() as f64;
    let mut n_test = 0usize;
    let mut blocks = BTreeMap::new();
    for b in order {
        let side = if (n_test as f64) / n < test_fraction {
            n_test += counts[&b];
            Side::Test
        } else {
            Side::Train
        };
        blocks.insert(b, side);
    }
    if n_test == surveys.len() {
        return Err(Error::EmptyTrain);
    }
    let surveys = survey_blocks
        .into_iter()
        .map(|(id, b)| {
            let side = blocks[&b];
            (id, (side, b))
        })
        .collect();
    Ok(SplitAssignment { block_size, origin, blocks, surveys })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;

    fn survey(id: usize, x: f64, y: f64) -> PaSurvey {
        PaSurvey::new(format!("s{id}"), Location::planar(x, y), vec![0], None).unwrap()
    }

    #[test]
    fn block_ids_use_floor() {
        let o = (0.0, 0.0);
        assert_eq!(block_id(&Location::planar(0.0, 0.0), 50.0, o), (0, 0));
        assert_eq!(block_id(&Location::planar(50.0, 0.0), 50.0, o), (1, 0));
        assert_eq!(block_id(&Location::planar(-0.1, 49.9), 50.0, o), (-1, 0));
    }

    #[test]
    fn block_ids_match_independent_arithmetic() {
        let mut r = rng::stream(3, 0, 0);
        for _ in 0..1000 {
            let x: f64 = r.gen_range(-500.0..500.0);
            let y: f64 = r.gen_range(-500.0..500.0);
            let size = r.gen_range(1.0..80.0);
            let o = (r.gen_range(-10.0..10.0), r.gen_range(-10.0..10.0));
            // Oracle: integer division with correction for negatives.
            let oracle = |v: f64, o: f64| {
                let q = ((v - o) / size) as i64;
                if (q as f64) > (v - o) / size { q - 1 } else { q }
            };
            assert_eq!(block_id(&Location::planar(x, y), size, o), (oracle(x, o.0), oracle(y, o.1)));
        }
    }

    #[test]
    fn unit_fraction_is_empty_train() {
        let s = [survey(0, 0.0, 0.0), survey(1, 100.0, 0.0)];
        assert_eq!(spatial_block_split(&s, 50.0, 1.0, None, 0), Err(Error::EmptyTrain));
    }

    #[test]
    fn single_block_cannot_split() {
        let s = [survey(0, 0.0, 0.0), survey(1, 1.0, 1.0)];
        assert_eq!(spatial_block_split(&s, 50.0, 0.5, None, 0), Err(Error::CannotSplit));
    }

    #[test]
    fn permutation_invariant_and_deterministic() {
        let mut r = rng::stream(8, 0, 0);
        let mut s: Vec<PaSurvey> =
            (0..300).map(|i| survey(i, r.gen_range(0.0..100.0), r.gen_range(0.0..100.0))).collect();
        let a = spatial_block_split(&s, 10.0, 0.8, None, 5).unwrap();
        s.reverse();
        let b = spatial_block_split(&s, 10.0, 0.8, None, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.blocks, spatial_block_split(&s, 10.0, 0.8, None, 6).unwrap().blocks);
    }
}
