//! Shallow multi-label model trained through a schedule of stages, each on
//! presence-only records (softmax cross-entropy) or presence-absence surveys
//! (per-species binary cross-entropy).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::math::{exp, logsumexp, sigmoid, softplus, sqrt};
use crate::par;
use crate::rng::{self, family};
use crate::types::{ProbabilityVector, SpeciesIdx};

/// Samples per gradient chunk. Chunks are summed in a fixed order, so the
/// result does not depend on how many workers evaluate them.
const CHUNK: usize = 32;

/// `(logsumexp(z) - z[label], softmax(z) - onehot(label))`.
pub fn loss_softmax_ce(z: &[f64], label: SpeciesIdx) -> (f64, Vec<f64>) {
    let lse = logsumexp(z);
    let mut g: Vec<f64> = z.iter().map(|&v| exp(v - lse)).collect();
    g[label] -= 1.0;
    ((lse - z[label]).max(0.0), g)
}

/// `(Σ softplus(z) - y z, sigmoid(z) - y)`: summed over species.
pub fn loss_sigmoid_bce(z: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let g = z
        .iter()
        .zip(y)
        .map(|(&zs, &ys)| {
            value += softplus(zs) - ys * zs;
            sigmoid(zs) - ys
        })
        .collect();
    (value.max(0.0), g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Po,
    Pa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    SoftmaxCe,
    SigmoidBce,
}

impl DataKind {
    pub fn loss(self) -> Loss {
        match self {
            DataKind::Po => Loss::SoftmaxCe,
            DataKind::Pa => Loss::SigmoidBce,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub data: DataKind,
    #[serde(default)]
    pub loss: Option<Loss>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_epochs() -> usize {
    30
}
fn default_lr() -> f64 {
    0.05
}
fn default_batch() -> usize {
    256
}

impl Stage {
    pub fn new(data: DataKind) -> Self {
        Self { data, loss: None, epochs: default_epochs(), learning_rate: default_lr(), batch_size: default_batch() }
    }

    pub fn loss(&self) -> Loss {
        self.loss.unwrap_or(self.data.loss())
    }
}

/// Stages from a compact label such as `"PA/PO/PA"`.
pub fn schedule_from_label(label: &str) -> Result<Vec<Stage>> {
    label
        .split(['/', ',', '-'])
        .map(|t| match t.trim().to_ascii_lowercase().as_str() {
            "po" => Ok(Stage::new(DataKind::Po)),
            "pa" => Ok(Stage::new(DataKind::Pa)),
            other => Err(Error::Config(format!("unknown stage {other:?}"))),
        })
        .collect()
}

pub fn schedule_label(stages: &[Stage]) -> alloc::string::String {
    stages
        .iter()
        .map(|s| match s.data {
            DataKind::Po => "PO",
            DataKind::Pa => "PA",
        })
        .collect::<Vec<_>>()
        .join("/")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub momentum: f64,
    /// Width of an optional ReLU hidden layer.
    pub hidden: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { momentum: 0.9, hidden: None }
    }
}

/// `z = W2 · relu(W1 x + b1) + b2` with a hidden layer, else `z = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMultiLabelModel {
    pub n_features: usize,
    pub n_species: usize,
    /// Row-major `S × D` (or `S × H` with a hidden layer).
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<HiddenLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub width: usize,
    /// Row-major `H × D`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl LinearMultiLabelModel {
    pub fn zeros(n_features: usize, n_species: usize) -> Self {
        Self { n_features, n_species, w: vec![0.0; n_species * n_features], b: vec![0.0; n_species], hidden: None }
    }

    /// Zero output layer; a hidden layer gets He-scaled uniform weights.
    pub fn init(n_features: usize, n_species: usize, hidden: Option<usize>, seed: u64) -> Self {
        let Some(h) = hidden else { return Self::zeros(n_features, n_species) };
        let mut r = rng::stream(seed, family::INIT, 0);
        let a = sqrt(6.0 / n_features.max(1) as f64);
        let w1 = (0..h * n_features).map(|_| r.gen_range(-a..a)).collect();
        let a2 = sqrt(6.0 / h.max(1) as f64);
        let w2 = (0..n_species * h).map(|_| 0.1 * r.gen_range(-a2..a2)).collect();
        Self {
            n_features,
            n_species,
            w: w2,
            b: vec![0.0; n_species],
            hidden: Some(HiddenLayer { width: h, w: w1, b: vec![0.0; h] }),
        }
    }

    fn n_params(&self) -> usize {
        self.w.len() + self.b.len() + self.hidden.as_ref().map_or(0, |h| h.w.len() + h.b.len())
    }

    fn n_in(&self) -> usize {
        self.hidden.as_ref().map_or(self.n_features, |h| h.width)
    }

    /// Hidden activations (or the input itself) and the logits.
    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let a: Vec<f64> = match &self.hidden {
            None => x.to_vec(),
            Some(h) => (0..h.width)
                .map(|k| {
                    let row = &h.w[k * self.n_features..(k + 1) * self.n_features];
                    (h.b[k] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).max(0.0)
                })
                .collect(),
        };
        let d = self.n_in();
        let z = (0..self.n_species)
            .map(|s| self.b[s] + self.w[s * d..(s + 1) * d].iter().zip(&a).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        (a, z)
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).1
    }

    /// Adds the parameter gradient for one sample into `grad`, laid out as
    /// `[w, b, hidden.w, hidden.b]`.
    fn backward(&self, x: &[f64], a: &[f64], dz: &[f64], grad: &mut [f64]) {
        let d = self.n_in();
        let (gw, rest) = grad.split_at_mut(self.w.len());
        let (gb, rest) = rest.split_at_mut(self.b.len());
        for s in 0..self.n_species {
            if dz[s] == 0.0 {
                continue;
            }
            gb[s] += dz[s];
            for (g, &v) in gw[s * d..(s + 1) * d].iter_mut().zip(a) {
                *g += dz[s] * v;
            }
        }
        if let Some(h) = &self.hidden {
            let (gw1, gb1) = rest.split_at_mut(h.w.len());
            for k in 0..h.width {
                if a[k] <= 0.0 {
                    continue;
                }
                let da: f64 = (0..self.n_species).map(|s| dz[s] * self.w[s * d + k]).sum();
                gb1[k] += da;
                for (g, &v) in gw1[k * self.n_features..(k + 1) * self.n_features].iter_mut().zip(x) {
                    *g += da * v;
                }
            }
        }
    }

    fn apply(&mut self, step: &[f64]) {
        let (sw, rest) = step.split_at(self.w.len());
        let (sb, rest) = rest.split_at(self.b.len());
        self.w.iter_mut().zip(sw).for_each(|(p, s)| *p -= s);
        self.b.iter_mut().zip(sb).for_each(|(p, s)| *p -= s);
        if let Some(h) = &mut self.hidden {
            let (sw1, sb1) = rest.split_at(h.w.len());
            h.w.iter_mut().zip(sw1).for_each(|(p, s)| *p -= s);
            h.b.iter_mut().zip(sb1).for_each(|(p, s)| *p -= s);
        }
    }

    /// Sigmoid of every logit, one vector per row.
    pub fn predict_probs(&self, x: &FeatureMatrix) -> Result<Vec<ProbabilityVector>> {
        if x.n_cols != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, found: x.n_cols });
        }
        Ok(par::map_range(x.n_rows, |i| {
            ProbabilityVector::clamped(self.logits(x.row(i)).into_iter().map(sigmoid).collect())
        }))
    }
}

/// Training inputs. PA targets are presence lists per survey row.
pub struct TrainData<'a> {
    pub po_x: Option<&'a FeatureMatrix>,
    pub po_labels: &'a [SpeciesIdx],
    pub pa_x: Option<&'a FeatureMatrix>,
    pub pa_present: &'a [Vec<SpeciesIdx>],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub data: DataKind,
    pub loss: Loss,
    /// Mean per-sample loss in each epoch, accumulated before each update.
    pub epoch_loss: Vec<f64>,
}

pub fn validate_schedule(stages: &[Stage]) -> Result<()> {
    if stages.is_empty() {
        return Err(Error::Config("empty stage schedule".into()));
    }
    for (i, s) in stages.iter().enumerate() {
        if s.loss() != s.data.loss() {
            return Err(Error::Config(format!(
                "stage {i}: {:?} data must use {:?}, not {:?}",
                s.data,
                s.data.loss(),
                s.loss()
            )));
        }
        if s.batch_size == 0 {
            return Err(Error::Config(format!("stage {i}: batch size must be positive")));
        }
        if !(s.learning_rate >= 0.0) || !s.learning_rate.is_finite() {
            return Err(Error::Config(format!("stage {i}: learning rate must be finite and non-negative")));
        }
    }
    Ok(())
}

/// Momentum SGD through every stage in order, each continuing from the
/// previous weights. Velocity restarts at each stage.
pub fn train(
    mut model: LinearMultiLabelModel,
    stages: &[Stage],
    data: &TrainData<'_>,
    config: &TrainConfig,
    seed: u64,
) -> Result<(LinearMultiLabelModel, Vec<StageTrace>)> {
    validate_schedule(stages)?;
    let mut traces = Vec::with_capacity(stages.len());
    for (si, stage) in stages.iter().enumerate() {
        let (x, n) = match stage.data {
            DataKind::Po => {
                let x = data.po_x.ok_or(Error::EmptyData("presence-only"))?;
                if x.n_rows != data.po_labels.len() {
                    return Err(Error::DimensionMismatch { expected: x.n_rows, found: data.po_labels.len() });
                }
                if let Some(&bad) = data.po_labels.iter().find(|&&l| l >= model.n_species) {
                    return Err(Error::SpeciesOutOfRange { index: bad, n_species: model.n_species });
                }
                (x, x.n_rows)
            }
            DataKind::Pa => {
                let x = data.pa_x.ok_or(Error::EmptyData("presence-absence"))?;
                if x.n_rows != data.pa_present.len() {
                    return Err(Error::DimensionMismatch { expected: x.n_rows, found: data.pa_present.len() });
                }
                (x, x.n_rows)
            }
        };
        if n == 0 {
            return Err(Error::EmptyData(if stage.data == DataKind::Po { "presence-only" } else { "presence-absence" }));
        }
        if x.n_cols != model.n_features {
            return Err(Error::DimensionMismatch { expected: model.n_features, found: x.n_cols });
        }

        let n_params = model.n_params();
        let mut velocity = vec![0.0; n_params];
        let mut order: Vec<usize> = (0..n).collect();
        let mut epoch_loss = Vec::with_capacity(stage.epochs);
        let stage_seed = rng::derive(seed, si as u64);
        for epoch in 0..stage.epochs {
            order.sort_unstable();
            order.shuffle(&mut rng::stream(stage_seed, family::TRAIN, epoch as u64));
            let mut total = 0.0;
            for batch in order.chunks(stage.batch_size) {
                let n_chunks = batch.len().div_ceil(CHUNK);
                let partial = par::map_range(n_chunks, |c| {
                    let mut g = vec![0.0; n_params];
                    let mut loss = 0.0;
                    let mut y = vec![0.0; model.n_species];
                    for &i in &batch[c * CHUNK..((c + 1) * CHUNK).min(batch.len())] {
                        let xi = x.row(i);
                        let (a, z) = model.forward(xi);
                        let (v, dz) = match stage.data {
                            DataKind::Po => loss_softmax_ce(&z, data.po_labels[i]),
                            DataKind::Pa => {
                                y.iter_mut().for_each(|v| *v = 0.0);
                                for &s in &data.pa_present[i] {
                                    y[s] = 1.0;
                                }
                                loss_sigmoid_bce(&z, &y)
                            }
                        };
                        loss += v;
                        model.backward(xi, &a, &dz, &mut g);
                    }
                    (loss, g)
                });
                let mut grad = vec![0.0; n_params];
                for (loss, g) in &partial {
                    total += loss;
                    grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
                let scale = 1.0 / batch.len() as f64;
                for (v, g) in velocity.iter_mut().zip(&grad) {
                    *v = config.momentum * *v + g * scale;
                }
                let step: Vec<f64> = velocity.iter().map(|v| stage.learning_rate * v).collect();
                model.apply(&step);
            }
            let mean = total / n as f64;
            if !mean.is_finite() || model.w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { stage: si, epoch });
            }
            epoch_loss.push(mean);
        }
        traces.push(StageTrace { data: stage.data, loss: stage.loss(), epoch_loss });
    }
    Ok((model, traces))
}

/// Mean per-sample loss of the model on one data kind.
pub fn mean_loss(model: &LinearMultiLabelModel, kind: DataKind, data: &TrainData<'_>) -> Result<f64> {
    let (x, n) = match kind {
        DataKind::Po => (data.po_x.ok_or(Error::EmptyData("presence-only"))?, data.po_labels.len()),
        DataKind::Pa => (data.pa_x.ok_or(Error::EmptyData("presence-absence"))?, data.pa_present.len()),
    };
    if n == 0 {
        return Err(Error::EmptyData("training"));
    }
    let losses = par::map_range(n, |i| {
        let z = model.logits(x.row(i));
        match kind {
            DataKind::Po => loss_softmax_ce(&z, data.po_labels[i]).0,
            DataKind::Pa => {
                let mut y = vec![0.0; model.n_species];
                for &s in &data.pa_present[i] {
                    y[s] = 1.0;
                }
                loss_sigmoid_bce(&z, &y).0
            }
        }
    });
    Ok(losses.iter().sum::<f64>() / n as f64)
}
