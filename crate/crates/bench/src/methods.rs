//! Method registry: configuration, fitting and prediction for every method a
//! run manifest can name.

use serde::{Deserialize, Serialize};

use sdmbench_core::assemblage::{assemble_all, ensemble_average, AssemblageRule, DEFAULT_K_MAX};
use sdmbench_core::baselines::{ConstantPredictor, CooccurrencePredictor, KnnPa, KnnPo, DEFAULT_KNN_K};
use sdmbench_core::features::{
    ExpansionKinds, FeatureExpansion, FeatureMatrix, FeaturePipeline, Predictors, DEFAULT_HINGE_QUANTILES,
};
use sdmbench_core::forest::ForestGrid;
use sdmbench_core::par;
use sdmbench_core::raster::RasterGrid;
use sdmbench_core::rng;
use sdmbench_core::sdm::{fit_maxent_bank, fit_maxent_filtered, ForestBank, MaxentConfig, SpeciesModelBank};
use sdmbench_core::staged::{
    schedule_from_label, schedule_label, train, LinearMultiLabelModel, Stage, StageTrace, TrainConfig, TrainData,
};
use sdmbench_core::{Location, PaSurvey, PoRecord, PredictionSet, ProbabilityVector};

use crate::error::{BenchError, Result};

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}
fn default_knn_k() -> usize {
    DEFAULT_KNN_K
}
fn default_radius() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_folds() -> usize {
    3
}
fn environment() -> Predictors {
    Predictors::Environment
}
fn coordinates() -> Predictors {
    Predictors::Coordinates
}
fn linear_quadratic() -> ExpansionKinds {
    ExpansionKinds::LINEAR_QUADRATIC
}

/// A stage schedule, either compact (`"PA/PO/PA"`) or as explicit stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Label(String),
    Stages(Vec<Stage>),
}

impl Schedule {
    pub fn stages(&self) -> Result<Vec<Stage>> {
        match self {
            Schedule::Label(l) => Ok(schedule_from_label(l)?),
            Schedule::Stages(s) => Ok(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodSpec {
    /// The most frequent training species; `k` fixed or calibrated up to `k_max`.
    Constant {
        #[serde(default)]
        k: Option<usize>,
        #[serde(default = "default_k_max")]
        k_max: usize,
    },
    KnnPo {
        #[serde(default = "default_knn_k")]
        k: usize,
    },
    KnnPa {
        #[serde(default = "default_knn_k")]
        k: usize,
    },
    Cooccurrence {
        #[serde(default = "default_radius")]
        radius: f64,
    },
    Maxent {
        #[serde(default = "default_true")]
        filter: bool,
        #[serde(default = "environment")]
        predictors: Predictors,
        #[serde(default)]
        config: MaxentConfig,
    },
    Forest {
        #[serde(default = "coordinates")]
        predictors: Predictors,
        #[serde(default)]
        grid: ForestGrid,
        #[serde(default = "default_folds")]
        folds: usize,
    },
    Staged {
        schedule: Schedule,
        #[serde(default)]
        train: TrainConfig,
        #[serde(default = "environment")]
        predictors: Predictors,
        #[serde(default = "linear_quadratic")]
        features: ExpansionKinds,
    },
    /// Average of the members' probability vectors.
    Ensemble {
        members: Vec<MethodEntry>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
}

/// A named method with its assemblage rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    pub name: String,
    #[serde(flatten)]
    pub spec: MethodSpec,
    /// For probability methods; defaults to top-S.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assemblage: Option<AssemblageRule>,
}

impl MethodEntry {
    pub fn new(name: impl Into<String>, spec: MethodSpec) -> Self {
        Self { name: name.into(), spec, assemblage: None }
    }

    pub fn with_assemblage(mut self, rule: AssemblageRule) -> Self {
        self.assemblage = Some(rule);
        self
    }

    pub fn rule(&self) -> AssemblageRule {
        self.assemblage.clone().unwrap_or_default()
    }

    pub fn validate(&self, n_species: Option<usize>) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(BenchError::config(format!("invalid method name {:?}", self.name)));
        }
        let bad = |m: String| Err(BenchError::config(format!("method {}: {m}", self.name)));
        if self.assemblage.is_some() && !self.spec.produces_probabilities() {
            return bad("predicts sets directly; an assemblage rule does not apply".into());
        }
        if let (Some(rule), Some(n)) = (&self.assemblage, n_species) {
            rule.validate(n)?;
        }
        match &self.spec {
            MethodSpec::KnnPo { k } | MethodSpec::KnnPa { k } if *k == 0 => bad("k must be at least 1".into()),
            MethodSpec::Cooccurrence { radius } if !(*radius > 0.0) => bad("radius must be positive".into()),
            MethodSpec::Forest { folds, .. } if *folds < 2 => bad("at least 2 cross-validation folds".into()),
            MethodSpec::Forest { grid, .. } if grid.cells().is_empty() => bad("empty forest grid".into()),
            MethodSpec::Staged { schedule, .. } => {
                sdmbench_core::staged::validate_schedule(&schedule.stages()?)?;
                Ok(())
            }
            MethodSpec::Ensemble { members, weights } => {
                if members.is_empty() {
                    return bad("ensemble without members".into());
                }
                if weights.as_ref().is_some_and(|w| w.len() != members.len()) {
                    return bad("one weight per member required".into());
                }
                for m in members {
                    if !m.spec.produces_probabilities() {
                        return bad(format!("member {} does not produce probabilities", m.name));
                    }
                    m.validate(n_species)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl MethodSpec {
    /// Registry defaults by method name.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "constant" => MethodSpec::Constant { k: None, k_max: DEFAULT_K_MAX },
            "knn_po" => MethodSpec::KnnPo { k: DEFAULT_KNN_K },
            "knn_pa" => MethodSpec::KnnPa { k: DEFAULT_KNN_K },
            "cooccurrence" => MethodSpec::Cooccurrence { radius: default_radius() },
            "maxent" => MethodSpec::Maxent { filter: true, predictors: environment(), config: MaxentConfig::default() },
            "forest" => MethodSpec::Forest { predictors: coordinates(), grid: ForestGrid::default(), folds: 3 },
            "staged" => MethodSpec::Staged {
                schedule: Schedule::Label("PA/PO/PA".into()),
                train: TrainConfig::default(),
                predictors: environment(),
                features: linear_quadratic(),
            },
            "ensemble" => return Err(BenchError::config("an ensemble needs its members listed in a manifest")),
            other => return Err(BenchError::config(format!("unknown method {other:?}"))),
        })
    }

    pub fn produces_probabilities(&self) -> bool {
        !matches!(self, MethodSpec::Constant { .. } | MethodSpec::KnnPo { .. })
    }

    /// Model family for the leaderboard.
    pub fn model_label(&self) -> String {
        match self {
            MethodSpec::Constant { .. } => "constant".into(),
            MethodSpec::KnnPo { k } | MethodSpec::KnnPa { k } => format!("knn(k={k})"),
            MethodSpec::Cooccurrence { .. } => "cooccurrence".into(),
            MethodSpec::Maxent { filter: true, .. } => "maxent(filtered)".into(),
            MethodSpec::Maxent { filter: false, .. } => "maxent(all)".into(),
            MethodSpec::Forest { .. } => "random_forest".into(),
            MethodSpec::Staged { schedule, train, .. } => {
                let label = schedule.stages().map(|s| schedule_label(&s)).unwrap_or_else(|_| "?".into());
                match train.hidden {
                    Some(h) => format!("mlp{h}[{label}]"),
                    None => format!("linear[{label}]"),
                }
            }
            MethodSpec::Ensemble { members, .. } => format!("ensemble({})", members.len()),
        }
    }

    /// Inputs used, for the leaderboard.
    pub fn predictors_label(&self) -> String {
        let p = |p: &Predictors| match p {
            Predictors::Environment => "environment",
            Predictors::Coordinates => "coordinates",
            Predictors::Both => "environment+coordinates",
        };
        match self {
            MethodSpec::Constant { .. } => "none; PA".into(),
            MethodSpec::KnnPo { .. } => "coordinates; PO".into(),
            MethodSpec::KnnPa { .. } => "coordinates; PA".into(),
            MethodSpec::Cooccurrence { .. } => "coordinates; PA+PO".into(),
            MethodSpec::Maxent { predictors, .. } | MethodSpec::Forest { predictors, .. } => {
                format!("{}; PA", p(predictors))
            }
            MethodSpec::Staged { predictors, schedule, .. } => {
                let uses_po = schedule.stages().is_ok_and(|s| s.iter().any(|s| s.data == sdmbench_core::staged::DataKind::Po));
                format!("{}; {}", p(predictors), if uses_po { "PA+PO" } else { "PA" })
            }
            MethodSpec::Ensemble { .. } => "members".into(),
        }
    }
}

/// Training inputs shared by every method.
#[derive(Debug, Clone, Copy)]
pub struct TrainSet<'a> {
    pub grids: &'a [RasterGrid],
    pub n_species: usize,
    pub po: &'a [PoRecord],
    pub pa: &'a [PaSurvey],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedMember {
    pub name: String,
    pub model: FittedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum FittedModel {
    Constant(ConstantPredictor),
    KnnPo(KnnPo),
    KnnPa(KnnPa),
    Cooccurrence(CooccurrencePredictor),
    Maxent { pipeline: FeaturePipeline, bank: SpeciesModelBank },
    Forest { pipeline: FeaturePipeline, bank: ForestBank },
    Staged {
        pipeline: FeaturePipeline,
        expansion: FeatureExpansion,
        model: LinearMultiLabelModel,
        traces: Vec<StageTrace>,
    },
    Ensemble { members: Vec<FittedMember>, weights: Option<Vec<f64>> },
}

/// What a model predicts for a batch of sites.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Sets(Vec<Vec<usize>>),
    Probabilities(Vec<ProbabilityVector>),
}

fn locations(pa: &[PaSurvey]) -> Vec<Location> {
    pa.iter().map(|s| s.location).collect()
}

fn features(pipeline: &FeaturePipeline, grids: &[RasterGrid], locs: &[Location]) -> Result<FeatureMatrix> {
    let x = pipeline.transform(grids, locs)?;
    x.ensure_finite("features")?;
    Ok(x)
}

/// Deterministic per-name seed, so adding or reordering methods does not
/// change any other method's results.
pub fn method_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    rng::derive(seed, h)
}

pub fn fit(spec: &MethodSpec, data: &TrainSet<'_>, seed: u64) -> Result<FittedModel> {
    let n_species = data.n_species;
    let pa_refs: Vec<&PaSurvey> = data.pa.iter().collect();
    Ok(match spec {
        MethodSpec::Constant { k: Some(k), .. } => {
            FittedModel::Constant(ConstantPredictor::with_k(data.pa, n_species, *k)?)
        }
        MethodSpec::Constant { k: None, k_max } => {
            FittedModel::Constant(ConstantPredictor::calibrated(data.pa, n_species, *k_max)?)
        }
        MethodSpec::KnnPo { k } => FittedModel::KnnPo(KnnPo::fit(data.po, *k)?),
        MethodSpec::KnnPa { k } => FittedModel::KnnPa(KnnPa::fit(data.pa, n_species, *k)?),
        MethodSpec::Cooccurrence { radius } => {
            FittedModel::Cooccurrence(CooccurrencePredictor::fit(data.pa, data.po, n_species, *radius)?)
        }
        MethodSpec::Maxent { filter, predictors, config } => {
            let locs = locations(data.pa);
            let pipeline = FeaturePipeline::fit(data.grids, &locs, *predictors)?;
            let x = features(&pipeline, data.grids, &locs)?;
            let bank = if *filter {
                fit_maxent_filtered(&x, &pa_refs, n_species, config, seed)?
            } else {
                fit_maxent_bank(&x, &pa_refs, n_species, config)?
            };
            FittedModel::Maxent { pipeline, bank }
        }
        MethodSpec::Forest { predictors, grid, folds } => {
            let locs = locations(data.pa);
            let pipeline = FeaturePipeline::fit(data.grids, &locs, *predictors)?;
            let x = features(&pipeline, data.grids, &locs)?;
            let bank = ForestBank::fit(&x, &pa_refs, n_species, grid, *folds, seed)?;
            FittedModel::Forest { pipeline, bank }
        }
        MethodSpec::Staged { schedule, train: config, predictors, features: kinds } => {
            let stages = schedule.stages()?;
            let pa_locs = locations(data.pa);
            let po_locs: Vec<Location> = data.po.iter().map(|r| r.location).collect();
            let all: Vec<Location> = pa_locs.iter().chain(&po_locs).copied().collect();
            let pipeline = FeaturePipeline::fit(data.grids, &all, *predictors)?;
            let expansion =
                FeatureExpansion::fit(&features(&pipeline, data.grids, &all)?, *kinds, &DEFAULT_HINGE_QUANTILES)?;
            let pa_x = expansion.expand(&features(&pipeline, data.grids, &pa_locs)?)?;
            let po_x = if po_locs.is_empty() {
                None
            } else {
                Some(expansion.expand(&features(&pipeline, data.grids, &po_locs)?)?)
            };
            let po_labels: Vec<usize> = data.po.iter().map(|r| r.species).collect();
            let pa_present: Vec<Vec<usize>> = data.pa.iter().map(|s| s.present().to_vec()).collect();
            let train_data = TrainData {
                po_x: po_x.as_ref(),
                po_labels: &po_labels,
                pa_x: (!pa_present.is_empty()).then_some(&pa_x),
                pa_present: &pa_present,
            };
            let init = LinearMultiLabelModel::init(pa_x.n_cols, n_species, config.hidden, seed);
            let (model, traces) = train(init, &stages, &train_data, config, seed)?;
            FittedModel::Staged { pipeline, expansion, model, traces }
        }
        MethodSpec::Ensemble { members, weights } => {
            let fitted = members
                .iter()
                .map(|m| {
                    Ok(FittedMember { name: m.name.clone(), model: fit(&m.spec, data, method_seed(seed, &m.name))? })
                })
                .collect::<Result<Vec<_>>>()?;
            FittedModel::Ensemble { members: fitted, weights: weights.clone() }
        }
    })
}

impl FittedModel {
    pub fn predict(&self, grids: &[RasterGrid], locs: &[Location]) -> Result<Output> {
        let probs = |f: &(dyn Fn(&Location) -> sdmbench_core::Result<ProbabilityVector> + Sync)| {
            Ok::<_, BenchError>(Output::Probabilities(par::try_map_range(locs.len(), |i| f(&locs[i]))?))
        };
        match self {
            FittedModel::Constant(c) => Ok(Output::Sets(vec![c.predict(); locs.len()])),
            FittedModel::KnnPo(m) => Ok(Output::Sets(par::try_map_range(locs.len(), |i| m.predict(&locs[i]))?)),
            FittedModel::KnnPa(m) => probs(&|l| m.predict(l)),
            FittedModel::Cooccurrence(m) => probs(&|l| m.predict(l)),
            FittedModel::Maxent { pipeline, bank } => {
                Ok(Output::Probabilities(bank.predict(&features(pipeline, grids, locs)?)?))
            }
            FittedModel::Forest { pipeline, bank } => {
                Ok(Output::Probabilities(bank.predict(&features(pipeline, grids, locs)?)?))
            }
            FittedModel::Staged { pipeline, expansion, model, .. } => {
                let x = expansion.expand(&features(pipeline, grids, locs)?)?;
                Ok(Output::Probabilities(model.predict_probs(&x)?))
            }
            FittedModel::Ensemble { members, weights } => {
                let outs = members
                    .iter()
                    .map(|m| match m.model.predict(grids, locs)? {
                        Output::Probabilities(p) => Ok(p),
                        Output::Sets(_) => {
                            Err(BenchError::config(format!("ensemble member {} does not produce probabilities", m.name)))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                let avg = par::try_map_range(locs.len(), |i| {
                    let ps: Vec<ProbabilityVector> = outs.iter().map(|o| o[i].clone()).collect();
                    ensemble_average(&ps, weights.as_deref())
                })?;
                Ok(Output::Probabilities(avg))
            }
        }
    }
}

/// Predicted sets for the given survey ids, plus the probability vectors
/// they were assembled from, if any.
pub fn predict_sets(
    model: &FittedModel,
    rule: &AssemblageRule,
    grids: &[RasterGrid],
    ids: &[String],
    locs: &[Location],
) -> Result<(Vec<PredictionSet>, Option<Vec<ProbabilityVector>>)> {
    match model.predict(grids, locs)? {
        Output::Sets(sets) => {
            Ok((ids.iter().zip(sets).map(|(id, s)| PredictionSet::new(id.clone(), s)).collect(), None))
        }
        Output::Probabilities(p) => Ok((assemble_all(ids, &p, rule)?, Some(p))),
    }
}
