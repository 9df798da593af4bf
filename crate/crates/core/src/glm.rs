//! L1-penalized Poisson regression by cyclic coordinate descent, and the
//! complementary log-log calibration from intensity to presence probability.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::math::{exp, expm1, ln};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlmConfig {
    pub tolerance: f64,
    pub max_iter: usize,
    pub intercept_floor: f64,
}

impl Default for GlmConfig {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iter: 500, intercept_floor: -20.0 }
    }
}

/// Intensity `exp(intercept + w·x)` with presence probability
/// `1 - exp(-c · intensity)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonGlm {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub l1_lambda: f64,
    pub cloglog_c: f64,
}

impl PoissonGlm {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn intensity(&self, x: &[f64]) -> f64 {
        exp(self.linear_predictor(x))
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        cloglog(self.cloglog_c, self.intensity(x))
    }

    pub fn n_nonzero(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0.0).count()
    }
}

/// `1 - exp(-c λ)`, clamped to `[0, 1]`.
pub fn cloglog(c: f64, intensity: f64) -> f64 {
    let p = -expm1(-c * intensity);
    if p.is_nan() {
        0.0
    } else {
        p.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub model: PoissonGlm,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized objective after each sweep, starting with the initial point.
    pub objective: Vec<f64>,
}

/// `Σ exp(η) - y η + λ ‖β‖₁`; the intercept is not penalized.
pub fn poisson_objective(x: &FeatureMatrix, y: &[f64], intercept: f64, beta: &[f64], lambda: f64) -> f64 {
    let mut total = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let eta = intercept + x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
        total += exp(eta) - yi * eta;
    }
    total + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Gradient of the unpenalized objective: `(d/d intercept, d/d β)`.
pub fn poisson_gradient(x: &FeatureMatrix, y: &[f64], intercept: f64, beta: &[f64]) -> (f64, Vec<f64>) {
    let mut gb = 0.0;
    let mut g = vec![0.0; beta.len()];
    for (i, &yi) in y.iter().enumerate() {
        let row = x.row(i);
        let eta = intercept + row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
        let r = exp(eta) - yi;
        gb += r;
        for (gj, &xj) in g.iter_mut().zip(row) {
            *gj += r * xj;
        }
    }
    (gb, g)
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Moves the intercept to its closed-form optimum `ln(Σy / Σexp(η - b))`,
/// floored; returns the size of the move.
fn update_intercept(b: &mut f64, eta: &mut [f64], mu: &mut [f64], y_sum: f64, floor: f64) -> f64 {
    let mass: f64 = mu.iter().sum::<f64>() * exp(-*b);
    let new_b = if y_sum > 0.0 { (ln(y_sum) - ln(mass)).max(floor) } else { floor };
    if !new_b.is_finite() || new_b == *b {
        return 0.0;
    }
    let shift = new_b - *b;
    for (e, m) in eta.iter_mut().zip(mu.iter_mut()) {
        *e += shift;
        *m = exp(*e);
    }
    *b = new_b;
    shift.abs()
}

/// Minimizes the penalized Poisson objective over `(intercept, β)`.
///
/// Each sweep sets the intercept to its closed-form optimum, then takes one
/// proximal Newton step per coefficient with backtracking, so the objective
/// never increases. Converged when no parameter moves by `tolerance` or more.
pub fn fit_poisson_l1(x: &FeatureMatrix, y: &[f64], lambda: f64, config: &GlmConfig) -> Result<GlmFit> {
    if y.len() != x.n_rows {
        return Err(Error::DimensionMismatch { expected: x.n_rows, found: y.len() });
    }
    x.ensure_finite("features")?;
    if y.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NonFinite("response"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Config(alloc::format!("l1 lambda {lambda} must be non-negative")));
    }
    let (n, d) = (x.n_rows, x.n_cols);
    let cols = x.to_columns();
    let y_sum: f64 = y.iter().sum();
    let floor = config.intercept_floor;

    let mut beta = vec![0.0; d];
    let mut b = if y_sum > 0.0 { ln(y_sum / n as f64).max(floor) } else { floor };
    let mut eta = vec![b; n];
    let mut mu: Vec<f64> = eta.iter().map(|&e| exp(e)).collect();
    let penalized = |mu: &[f64], eta: &[f64], beta: &[f64]| {
        mu.iter().zip(eta).zip(y).map(|((m, e), yi)| m - yi * e).sum::<f64>()
            + lambda * beta.iter().map(|v| v.abs()).sum::<f64>()
    };
    let mut objective = vec![penalized(&mu, &eta, &beta)];
    let mut trial = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        let mut max_change = update_intercept(&mut b, &mut eta, &mut mu, y_sum, floor);

        for j in 0..d {
            let col = &cols[j];
            let (mut g, mut h) = (0.0, 0.0);
            for i in 0..n {
                g += (mu[i] - y[i]) * col[i];
                h += mu[i] * col[i] * col[i];
            }
            if h <= 1e-300 {
                continue;
            }
            let old = beta[j];
            let target = soft_threshold(old - g / h, lambda / h);
            let mut delta = target - old;
            if delta == 0.0 {
                continue;
            }
            let base: f64 = mu.iter().zip(&eta).zip(y).map(|((m, e), yi)| m - yi * e).sum::<f64>() + lambda * old.abs();
            let mut accepted = false;
            for _ in 0..40 {
                let cand = old + delta;
                let mut val = lambda * cand.abs();
                for i in 0..n {
                    trial[i] = eta[i] + delta * col[i];
                    val += exp(trial[i]) - y[i] * trial[i];
                }
                if val.is_finite() && val <= base {
                    accepted = true;
                    break;
                }
                delta *= 0.5;
            }
            if !accepted {
                continue;
            }
            beta[j] = old + delta;
            for i in 0..n {
                eta[i] = trial[i];
                mu[i] = exp(eta[i]);
            }
            max_change = max_change.max(delta.abs());
        }

        objective.push(penalized(&mu, &eta, &beta));
        if max_change < config.tolerance {
            converged = true;
            break;
        }
    }
    // Leaves the intercept optimal for the final coefficients.
    if update_intercept(&mut b, &mut eta, &mut mu, y_sum, floor) > 0.0 {
        objective.push(penalized(&mu, &eta, &beta));
    }

    Ok(GlmFit {
        model: PoissonGlm { weights: beta, intercept: b, l1_lambda: lambda, cloglog_c: 1.0 },
        iterations,
        converged,
        objective,
    })
}

pub const CLOGLOG_C_MIN: f64 = 1e-9;
pub const CLOGLOG_C_MAX: f64 = 1e9;

/// Finds `c` with `Σ (1 - exp(-c λᵢ)) = Σ yᵢ` by bisection on `log c`.
///
/// With no presences there is no root. When the target cannot be reached
/// inside `[1e-9, 1e9]` the nearer bound is returned.
pub fn calibrate_cloglog(intensities: &[f64], y: &[f64]) -> Result<f64> {
    if intensities.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), found: intensities.len() });
    }
    let target: f64 = y.iter().sum();
    if !(target > 0.0) {
        return Err(Error::NoPresences(0));
    }
    let mass = |c: f64| intensities.iter().map(|&l| cloglog(c, l)).sum::<f64>();
    if mass(CLOGLOG_C_MAX) <= target {
        return Ok(CLOGLOG_C_MAX);
    }
    if mass(CLOGLOG_C_MIN) >= target {
        return Ok(CLOGLOG_C_MIN);
    }
    let (mut lo, mut hi) = (ln(CLOGLOG_C_MIN), ln(CLOGLOG_C_MAX));
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if mass(exp(mid)) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(exp(0.5 * (lo + hi)))
}

/// Fits the GLM, then calibrates its cloglog coefficient on the same data.
pub fn fit_calibrated(x: &FeatureMatrix, y: &[f64], lambda: f64, config: &GlmConfig) -> Result<GlmFit> {
    let mut fit = fit_poisson_l1(x, y, lambda, config)?;
    let lam: Vec<f64> = (0..x.n_rows).map(|i| fit.model.intensity(x.row(i))).collect();
    fit.model.cloglog_c = calibrate_cloglog(&lam, y)?;
    Ok(fit)
}
