//! Tabular covariates: point sampling of grids, standardization and the
//! linear / quadratic / hinge expansion used by the parametric models.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{floor, sqrt};
use crate::raster::RasterGrid;
use crate::types::Location;

pub const SD_FLOOR: f64 = 1e-8;

/// Dense row-major matrix with a per-entry validity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl FeatureMatrix {
    pub fn new(n_cols: usize, names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if names.len() != n_cols {
            return Err(Error::DimensionMismatch { expected: n_cols, found: names.len() });
        }
        if n_cols == 0 || !values.len().is_multiple_of(n_cols) {
            return Err(Error::DimensionMismatch { expected: n_cols, found: values.len() });
        }
        let mask = values.iter().map(|v| v.is_finite()).collect();
        Ok(Self { n_rows: values.len() / n_cols, n_cols, names, values, mask })
    }

    /// Matrix from rows; column names default to `x0, x1, ...`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(Error::DimensionMismatch { expected: n_cols, found: r.len() });
            }
            values.extend_from_slice(r);
        }
        let names = (0..n_cols).map(|j| format!("x{j}")).collect();
        Self::new(n_cols, names, values)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_mask(&self, i: usize) -> &[bool] {
        &self.mask[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    /// Copy of the selected rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        let mut mask = Vec::with_capacity(rows.len() * self.n_cols);
        for &i in rows {
            values.extend_from_slice(self.row(i));
            mask.extend_from_slice(self.row_mask(i));
        }
        Self { n_rows: rows.len(), n_cols: self.n_cols, names: self.names.clone(), values, mask }
    }

    /// Copy of the selected columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.n_rows * cols.len());
        let mut mask = Vec::with_capacity(self.n_rows * cols.len());
        for i in 0..self.n_rows {
            for &j in cols {
                values.push(self.get(i, j));
                mask.push(self.mask[i * self.n_cols + j]);
            }
        }
        let names = cols.iter().map(|&j| self.names[j].clone()).collect();
        Self { n_rows: self.n_rows, n_cols: cols.len(), names, values, mask }
    }

    /// Column-major copy of the values.
    pub fn to_columns(&self) -> Vec<Vec<f64>> {
        (0..self.n_cols).map(|j| self.column(j)).collect()
    }

    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }
}

/// Raw sampled covariates plus the rows invalid in every grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFeatures {
    pub matrix: FeatureMatrix,
    /// Rows whose location is invalid in all grids.
    pub flagged_rows: Vec<usize>,
}

/// Samples every grid at every location. Invalid entries are NaN with a
/// false mask. Columns follow grid order, then `x`, `y` when requested.
pub fn sample_features(
    grids: &[RasterGrid],
    locs: &[Location],
    include_coords: bool,
) -> Result<SampledFeatures> {
    let mut seen = BTreeSet::new();
    for g in grids {
        if !seen.insert(g.name.as_str()) {
            return Err(Error::DuplicateGrid(g.name.clone()));
        }
    }
    let mut names: Vec<String> = grids.iter().map(|g| g.name.clone()).collect();
    if include_coords {
        names.push("x".into());
        names.push("y".into());
    }
    let n_cols = names.len();
    if n_cols == 0 {
        return Err(Error::Config("no feature columns".into()));
    }
    let mut values = Vec::with_capacity(locs.len() * n_cols);
    let mut flagged_rows = Vec::new();
    for (i, loc) in locs.iter().enumerate() {
        let mut any_valid = grids.is_empty();
        for g in grids {
            match g.sample(loc) {
                Some(v) => {
                    any_valid = true;
                    values.push(v);
                }
                None => values.push(f64::NAN),
            }
        }
        if include_coords {
            values.push(loc.x);
            values.push(loc.y);
        }
        if !any_valid {
            flagged_rows.push(i);
        }
    }
    let mut matrix = FeatureMatrix::new(n_cols, names, values)?;
    matrix.n_rows = locs.len();
    Ok(SampledFeatures { matrix, flagged_rows })
}

/// Per-column mean and standard deviation over valid training entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &FeatureMatrix) -> Self {
        let mut mean = vec![0.0; x.n_cols];
        let mut sd = vec![SD_FLOOR; x.n_cols];
        for j in 0..x.n_cols {
            let vals: Vec<f64> = (0..x.n_rows)
                .filter(|&i| x.mask[i * x.n_cols + j])
                .map(|i| x.get(i, j))
                .collect();
            if vals.is_empty() {
                continue;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
            mean[j] = m;
            sd[j] = sqrt(var).max(SD_FLOOR);
        }
        Self { names: x.names.clone(), mean, sd }
    }

    /// Standardizes with the stored statistics; invalid entries become 0
    /// (the training mean) and keep their false mask.
    pub fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.n_cols != self.mean.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), found: x.n_cols });
        }
        let mut out = x.clone();
        for i in 0..x.n_rows {
            for j in 0..x.n_cols {
                let k = i * x.n_cols + j;
                out.values[k] = if x.mask[k] { (x.values[k] - self.mean[j]) / self.sd[j] } else { 0.0 };
            }
        }
        Ok(out)
    }
}

/// Samples and standardizes training covariates, returning the fitted
/// statistics for reuse on test points.
pub fn assemble_features(
    grids: &[RasterGrid],
    locs: &[Location],
    include_coords: bool,
) -> Result<(FeatureMatrix, Standardizer, Vec<usize>)> {
    let sampled = sample_features(grids, locs, include_coords)?;
    let st = Standardizer::fit(&sampled.matrix);
    let x = st.transform(&sampled.matrix)?;
    Ok((x, st, sampled.flagged_rows))
}

/// Which predictors a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictors {
    /// Environmental grids only.
    Environment,
    /// Coordinates only.
    Coordinates,
    /// Grids followed by coordinates.
    Both,
}

/// Grid sampling plus fitted standardization; frozen after fitting so test
/// points reuse the training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub predictors: Predictors,
    pub grid_names: Vec<String>,
    pub standardizer: Standardizer,
}

impl FeaturePipeline {
    pub fn fit(grids: &[RasterGrid], locs: &[Location], predictors: Predictors) -> Result<Self> {
        let used = Self::used_grids(grids, predictors);
        let sampled = sample_features(&used, locs, predictors != Predictors::Environment)?;
        Ok(Self {
            predictors,
            grid_names: used.iter().map(|g| g.name.clone()).collect(),
            standardizer: Standardizer::fit(&sampled.matrix),
        })
    }

    fn used_grids(grids: &[RasterGrid], predictors: Predictors) -> Vec<RasterGrid> {
        match predictors {
            Predictors::Coordinates => Vec::new(),
            _ => grids.to_vec(),
        }
    }

    pub fn transform(&self, grids: &[RasterGrid], locs: &[Location]) -> Result<FeatureMatrix> {
        let mut used = Vec::with_capacity(self.grid_names.len());
        for name in &self.grid_names {
            let g = grids
                .iter()
                .find(|g| &g.name == name)
                .ok_or_else(|| Error::Config(format!("grid {name:?} not available")))?;
            used.push(g.clone());
        }
        let sampled = sample_features(&used, locs, self.predictors != Predictors::Environment)?;
        self.standardizer.transform(&sampled.matrix)
    }

    pub fn n_features(&self) -> usize {
        self.standardizer.mean.len()
    }
}

/// Transforms applied to one input variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableTransforms {
    pub linear: bool,
    pub quadratic: bool,
    /// Strictly ascending hinge knots.
    pub hinge_knots: Vec<f64>,
}

/// Which transform families to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionKinds {
    pub linear: bool,
    pub quadratic: bool,
    pub hinge: bool,
}

impl ExpansionKinds {
    pub const LINEAR: Self = Self { linear: true, quadratic: false, hinge: false };
    pub const LINEAR_QUADRATIC: Self = Self { linear: true, quadratic: true, hinge: false };
    pub const ALL: Self = Self { linear: true, quadratic: true, hinge: true };
}

impl Default for ExpansionKinds {
    fn default() -> Self {
        Self::ALL
    }
}

pub const DEFAULT_HINGE_QUANTILES: [f64; 3] = [0.25, 0.5, 0.75];

/// Per-variable feature expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExpansion {
    pub variables: Vec<VariableTransforms>,
}

/// Linear-interpolated empirical quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

impl FeatureExpansion {
    /// Validates `variables` against the training matrix: knots ascending
    /// and inside each variable's training range.
    pub fn new(variables: Vec<VariableTransforms>, training: &FeatureMatrix) -> Result<Self> {
        if variables.len() != training.n_cols {
            return Err(Error::DimensionMismatch { expected: training.n_cols, found: variables.len() });
        }
        for (j, v) in variables.iter().enumerate() {
            if v.hinge_knots.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Config(format!("hinge knots for variable {j} not strictly ascending")));
            }
            if v.hinge_knots.is_empty() {
                continue;
            }
            let col = training.column(j);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for &k in &v.hinge_knots {
                if !(k >= lo && k <= hi) {
                    return Err(Error::Config(format!(
                        "hinge knot {k} outside training range [{lo}, {hi}] of variable {j}"
                    )));
                }
            }
        }
        Ok(Self { variables })
    }

    /// Same kinds for every variable; hinge knots at training quantiles.
    pub fn fit(training: &FeatureMatrix, kinds: ExpansionKinds, quantiles: &[f64]) -> Result<Self> {
        let mut variables = Vec::with_capacity(training.n_cols);
        for j in 0..training.n_cols {
            let mut knots = Vec::new();
            if kinds.hinge && training.n_rows > 0 {
                let mut col = training.column(j);
                col.sort_by(f64::total_cmp);
                for &q in quantiles {
                    let k = quantile_sorted(&col, q);
                    if knots.last().is_none_or(|&last: &f64| k > last) {
                        knots.push(k);
                    }
                }
            }
            variables.push(VariableTransforms {
                linear: kinds.linear,
                quadratic: kinds.quadratic,
                hinge_knots: knots,
            });
        }
        Self::new(variables, training)
    }

    pub fn n_outputs(&self) -> usize {
        self.variables
            .iter()
            .map(|v| v.linear as usize + v.quadratic as usize + v.hinge_knots.len())
            .sum()
    }

    pub fn output_names(&self, input_names: &[String]) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n_outputs());
        for (v, name) in self.variables.iter().zip(input_names) {
            if v.linear {
                out.push(name.clone());
            }
            if v.quadratic {
                out.push(format!("{name}^2"));
            }
            for k in &v.hinge_knots {
                out.push(format!("hinge({name},{k})"));
            }
        }
        out
    }

    /// Expands one row into `out`.
    pub fn expand_row(&self, row: &[f64], out: &mut Vec<f64>) {
        for (v, &x) in self.variables.iter().zip(row) {
            if v.linear {
                out.push(x);
            }
            if v.quadratic {
                out.push(x * x);
            }
            for &k in &v.hinge_knots {
                out.push((x - k).max(0.0));
            }
        }
    }

    pub fn expand(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.n_cols != self.variables.len() {
            return Err(Error::DimensionMismatch { expected: self.variables.len(), found: x.n_cols });
        }
        let n_out = self.n_outputs();
        if n_out == 0 {
            return Err(Error::Config("feature expansion produces no columns".into()));
        }
        let mut values = Vec::with_capacity(x.n_rows * n_out);
        for i in 0..x.n_rows {
            self.expand_row(x.row(i), &mut values);
        }
        let mut m = FeatureMatrix::new(n_out, self.output_names(&x.names), values)?;
        m.n_rows = x.n_rows;
        Ok(m)
    }

    /// Indices of the linear outputs, in output order.
    pub fn linear_output_columns(&self) -> Vec<usize> {
        let mut cols = Vec::new();
        let mut k = 0;
        for v in &self.variables {
            if v.linear {
                cols.push(k);
                k += 1;
            }
            k += v.quadratic as usize + v.hinge_knots.len();
        }
        cols
    }
}

/// Free-function form of [`FeatureExpansion::expand`].
pub fn expand_features(x: &FeatureMatrix, spec: &FeatureExpansion) -> Result<FeatureMatrix> {
    spec.expand(x)
}

impl core::fmt::Display for Predictors {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Predictors::Environment => "environment",
            Predictors::Coordinates => "coordinates",
            Predictors::Both => "environment+coordinates",
        })
    }
}
