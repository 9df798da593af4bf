//! Binary random forests: bootstrap CART trees with Gini splits, and a
//! cross-validated grid search over tree hyperparameters.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::metrics::f1_score;
use crate::par;
use crate::rng::{self, family, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(D))`.
    #[serde(default)]
    pub features_per_split: Option<usize>,
}

impl ForestParams {
    fn mtry(&self, d: usize) -> usize {
        self.features_per_split.unwrap_or_else(|| libm::ceil(crate::math::sqrt(d as f64)) as usize).clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestGrid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub min_leaf: Vec<usize>,
    pub features_per_split: Option<usize>,
}

impl Default for ForestGrid {
    fn default() -> Self {
        Self { n_trees: vec![50, 200], max_depth: vec![4, 8, 16], min_leaf: vec![1, 5], features_per_split: None }
    }
}

impl ForestGrid {
    /// Cells in `n_trees`, `max_depth`, `min_leaf` nesting order.
    pub fn cells(&self) -> Vec<ForestParams> {
        let mut out = Vec::new();
        for &n_trees in &self.n_trees {
            for &max_depth in &self.max_depth {
                for &min_leaf in &self.min_leaf {
                    out.push(ForestParams { n_trees, max_depth, min_leaf, features_per_split: self.features_per_split });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf { vote: bool },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn vote(&self, x: &[f64]) -> bool {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { vote } => return vote,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForestModel {
    /// Fitted when the response has a single class.
    Constant { n_features: usize, probability: f64 },
    Trees { n_features: usize, params: ForestParams, trees: Vec<Tree> },
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        match self {
            ForestModel::Constant { n_features, .. } | ForestModel::Trees { n_features, .. } => *n_features,
        }
    }

    /// Fraction of trees voting presence.
    pub fn probability(&self, x: &[f64]) -> f64 {
        match self {
            ForestModel::Constant { probability, .. } => *probability,
            ForestModel::Trees { trees, .. } => {
                trees.iter().filter(|t| t.vote(x)).count() as f64 / trees.len() as f64
            }
        }
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.n_cols != self.n_features() {
            return Err(Error::DimensionMismatch { expected: self.n_features(), found: x.n_cols });
        }
        Ok((0..x.n_rows).map(|i| self.probability(x.row(i))).collect())
    }
}

struct Builder<'a> {
    cols: &'a [Vec<f64>],
    y: &'a [bool],
    rows: Vec<usize>,
    /// Per feature, bootstrap positions sorted by that feature's value.
    order: Vec<Vec<usize>>,
    goes_left: Vec<bool>,
    scratch: Vec<usize>,
    params: ForestParams,
    mtry: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn value(&self, f: usize, pos: usize) -> f64 {
        self.cols[f][self.rows[pos]]
    }

    fn label(&self, pos: usize) -> bool {
        self.y[self.rows[pos]]
    }

    fn build(&mut self, lo: usize, hi: usize, depth: usize, rng: &mut StreamRng) -> usize {
        let id = self.nodes.len();
        let n = hi - lo;
        let pos = self.order[0][lo..hi].iter().filter(|&&p| self.label(p)).count();
        self.nodes.push(Node::Leaf { vote: 2 * pos > n });
        if depth >= self.params.max_depth || pos == 0 || pos == n || n < 2 * self.params.min_leaf.max(1) {
            return id;
        }
        let d = self.cols.len();
        let features = index::sample(rng, d, self.mtry);
        let parent = 2.0 * pos as f64 * (n - pos) as f64 / n as f64;
        let mut best: Option<(f64, usize, usize)> = None;
        let min_leaf = self.params.min_leaf.max(1);
        for f in features.iter() {
            let mut left_pos = 0usize;
            for k in 0..n - 1 {
                let p = self.order[f][lo + k];
                if self.label(p) {
                    left_pos += 1;
                }
                let nl = k + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                if self.value(f, p) == self.value(f, self.order[f][lo + k + 1]) {
                    continue;
                }
                let right_pos = pos - left_pos;
                let imp = 2.0 * left_pos as f64 * (nl - left_pos) as f64 / nl as f64
                    + 2.0 * right_pos as f64 * (nr - right_pos) as f64 / nr as f64;
                if best.is_none_or(|(b, _, _)| imp < b) {
                    best = Some((imp, f, nl));
                }
            }
        }
        let Some((imp, f, nl)) = best else { return id };
        if imp >= parent - 1e-12 {
            return id;
        }
        let a = self.value(f, self.order[f][lo + nl - 1]);
        let b = self.value(f, self.order[f][lo + nl]);
        let mut threshold = a + (b - a) / 2.0;
        if !(threshold < b) {
            threshold = a;
        }
        for k in 0..n {
            let p = self.order[f][lo + k];
            self.goes_left[p] = k < nl;
        }
        for g in 0..d {
            self.scratch.clear();
            let seg = &mut self.order[g][lo..hi];
            let mut w = 0;
            for k in 0..n {
                let p = seg[k];
                if self.goes_left[p] {
                    seg[w] = p;
                    w += 1;
                } else {
                    self.scratch.push(p);
                }
            }
            seg[w..].copy_from_slice(&self.scratch);
        }
        let left = self.build(lo, lo + nl, depth + 1, rng);
        let right = self.build(lo + nl, hi, depth + 1, rng);
        self.nodes[id] = Node::Split { feature: f, threshold, left, right };
        id
    }
}

/// Grows one tree on a bootstrap sample of `rows`.
fn grow_tree(cols: &[Vec<f64>], y: &[bool], rows: &[usize], params: ForestParams, rng: &mut StreamRng) -> Tree {
    let n = rows.len();
    let boot: Vec<usize> = (0..n).map(|_| rows[rng.gen_range(0..n)]).collect();
    let order: Vec<Vec<usize>> = cols
        .iter()
        .map(|c| {
            let mut o: Vec<usize> = (0..n).collect();
            o.sort_by(|&a, &b| c[boot[a]].total_cmp(&c[boot[b]]).then(a.cmp(&b)));
            o
        })
        .collect();
    let mut b = Builder {
        cols,
        y,
        rows: boot,
        order,
        goes_left: vec![false; n],
        scratch: Vec::with_capacity(n),
        params,
        mtry: params.mtry(cols.len()),
        nodes: Vec::new(),
    };
    b.build(0, n, 0, rng);
    Tree { nodes: b.nodes }
}

fn grow_forest(cols: &[Vec<f64>], y: &[bool], rows: &[usize], params: ForestParams, seed: u64) -> Vec<Tree> {
    par::map_range(params.n_trees, |t| {
        let mut rng = rng::stream(seed, family::FOREST, t as u64);
        grow_tree(cols, y, rows, params, &mut rng)
    })
}

fn validate(x: &FeatureMatrix, y: &[bool]) -> Result<()> {
    if y.len() != x.n_rows {
        return Err(Error::DimensionMismatch { expected: x.n_rows, found: y.len() });
    }
    if x.n_rows == 0 {
        return Err(Error::EmptyData("training"));
    }
    x.ensure_finite("features")
}

/// Fits a forest with fixed hyperparameters.
pub fn fit_forest_params(x: &FeatureMatrix, y: &[bool], params: ForestParams, seed: u64) -> Result<ForestModel> {
    validate(x, y)?;
    if params.n_trees == 0 {
        return Err(Error::Config("a forest needs at least one tree".into()));
    }
    let pos = y.iter().filter(|&&v| v).count();
    if pos == 0 || pos == y.len() {
        return Ok(ForestModel::Constant { n_features: x.n_cols, probability: pos as f64 / y.len() as f64 });
    }
    let cols = x.to_columns();
    let rows: Vec<usize> = (0..x.n_rows).collect();
    Ok(ForestModel::Trees { n_features: x.n_cols, params, trees: grow_forest(&cols, y, &rows, params, seed) })
}

/// Fold label per row: a seeded shuffle dealt round-robin.
pub fn cv_folds(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, family::CV, 0));
    let mut fold = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        fold[i] = k % folds;
    }
    fold
}

/// Mean over folds of the held-out F1 at threshold 0.5.
pub fn cv_score(x: &FeatureMatrix, y: &[bool], params: ForestParams, folds: usize, seed: u64) -> Result<f64> {
    validate(x, y)?;
    let cols = x.to_columns();
    let fold = cv_folds(x.n_rows, folds, seed);
    let mut total = 0.0;
    for k in 0..folds {
        let train: Vec<usize> = (0..x.n_rows).filter(|&i| fold[i] != k).collect();
        let test: Vec<usize> = (0..x.n_rows).filter(|&i| fold[i] == k).collect();
        let pos = train.iter().filter(|&&i| y[i]).count();
        let predict: Vec<bool> = if pos == 0 || pos == train.len() {
            vec![pos > 0; test.len()]
        } else {
            let trees = grow_forest(&cols, y, &train, params, rng::derive(seed, 1 + k as u64));
            test.iter()
                .map(|&i| {
                    let xi: Vec<f64> = cols.iter().map(|c| c[i]).collect();
                    2 * trees.iter().filter(|t| t.vote(&xi)).count() >= trees.len() && !trees.is_empty()
                })
                .collect()
        };
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (&i, &p) in test.iter().zip(&predict) {
            match (y[i], p) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        total += f1_score(tp, fp, fn_);
    }
    Ok(total / folds as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestFit {
    pub model: ForestModel,
    pub best: Option<ForestParams>,
    pub cv_scores: Vec<(ForestParams, f64)>,
    /// True when the response had one class and a constant model was used.
    pub single_class: bool,
}

/// Exhaustive grid search on mean CV F1 (first cell wins ties), then a refit
/// of the winning cell on all rows.
pub fn fit_forest(x: &FeatureMatrix, y: &[bool], grid: &ForestGrid, folds: usize, seed: u64) -> Result<ForestFit> {
    validate(x, y)?;
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(Error::Config("empty forest grid".into()));
    }
    if folds < 2 {
        return Err(Error::Config(alloc::format!("{folds} CV folds; need at least 2")));
    }
    let pos = y.iter().filter(|&&v| v).count();
    if pos == 0 || pos == y.len() {
        return Ok(ForestFit {
            model: ForestModel::Constant { n_features: x.n_cols, probability: pos as f64 / y.len() as f64 },
            best: None,
            cv_scores: Vec::new(),
            single_class: true,
        });
    }
    let mut cv_scores = Vec::with_capacity(cells.len());
    let mut best = (cells[0], f64::NEG_INFINITY);
    for &c in &cells {
        let s = cv_score(x, y, c, folds, seed)?;
        if s > best.1 {
            best = (c, s);
        }
        cv_scores.push((c, s));
    }
    let model = fit_forest_params(x, y, best.0, rng::derive(seed, 0))?;
    Ok(ForestFit { model, best: Some(best.0), cv_scores, single_class: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn separable_threshold_is_learned() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).chain((100..150).map(|i| vec![i as f64])).collect();
        let y: Vec<bool> = (0..100).map(|i| i >= 50).collect();
        let params = ForestParams { n_trees: 25, max_depth: 1, min_leaf: 1, features_per_split: None };
        let m = fit_forest_params(&matrix(&rows), &y, params, 7).unwrap();
        let p = m.predict(&matrix(&rows)).unwrap();
        for (pi, &yi) in p.iter().zip(&y) {
            assert_eq!(*pi > 0.5, yi);
        }
        let ForestModel::Trees { trees, .. } = &m else { panic!("expected trees") };
        assert!(trees.iter().all(|t| t.depth() <= 1));
    }

    #[test]
    fn constant_response() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 1.0]).collect();
        let fit = fit_forest(&matrix(&rows), &[true; 10], &ForestGrid::default(), 3, 0).unwrap();
        assert!(fit.single_class);
        assert!(fit.model.predict(&matrix(&rows)).unwrap().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn order_free_and_deterministic() {
        let mut r = rng::stream(9, 0, 0);
        let rows: Vec<Vec<f64>> = (0..120).map(|_| vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)]).collect();
        let y: Vec<bool> = rows.iter().map(|v| v[0] * v[0] + v[1] * v[1] < 0.5).collect();
        let params = ForestParams { n_trees: 20, max_depth: 6, min_leaf: 2, features_per_split: None };
        let a = fit_forest_params(&matrix(&rows), &y, params, 3).unwrap();
        let b = fit_forest_params(&matrix(&rows), &y, params, 3).unwrap();
        assert_eq!(a, b);
        let ForestModel::Trees { mut trees, n_features, params } = a.clone() else { panic!() };
        trees.reverse();
        let rev = ForestModel::Trees { trees, n_features, params };
        let x = matrix(&rows);
        assert_eq!(a.predict(&x).unwrap(), rev.predict(&x).unwrap());
    }

    #[test]
    fn grid_argmax_matches_reevaluation() {
        let mut r = rng::stream(10, 0, 0);
        let rows: Vec<Vec<f64>> = (0..90).map(|_| vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)]).collect();
        let y: Vec<bool> = rows.iter().map(|v| v[0] + 0.5 * v[1] > 0.2 || r.gen_bool(0.1)).collect();
        let grid = ForestGrid { n_trees: vec![5, 15], max_depth: vec![2, 6], min_leaf: vec![1, 5], features_per_split: None };
        let x = matrix(&rows);
        let fit = fit_forest(&x, &y, &grid, 3, 4).unwrap();
        let mut best = (grid.cells()[0], f64::NEG_INFINITY);
        for c in grid.cells() {
            let s = cv_score(&x, &y, c, 3, 4).unwrap();
            if s > best.1 {
                best = (c, s);
            }
        }
        assert_eq!(fit.best, Some(best.0));
    }
}
