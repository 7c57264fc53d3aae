//! Accuracy analysis for binary tasks whose per-expert log-posterior ratios
//! `L ∈ ℝᵐ` are jointly Gaussian `N(μ̄, Σ)` or multivariate Cauchy with
//! location `μ̄` and scatter `Σ`.
//!
//! Under weights `ω` the fused ratio `Z = ωᵀL` has location `μ = ωᵀμ̄` and
//! scale `σ = √(ωᵀΣω)`; every accuracy below is a function of `μ/σ`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::math;
use crate::pool::WeightVector;
use crate::rng::{RngSeed, SlopRng};

pub const SYMMETRY_TOL: f64 = 1e-12;

/// Trials per Monte Carlo shard. Shards are seeded independently and summed
/// in shard order, so results do not depend on the worker count.
const SHARD: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct GaussianScoreModel {
    mean: Vec<f64>,
    covariance: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl TryFrom<ModelFile> for GaussianScoreModel {
    type Error = Error;
    fn try_from(f: ModelFile) -> Result<Self> {
        GaussianScoreModel::new(f.mean, linalg::matrix_from_rows(&f.covariance)?)
    }
}

impl From<GaussianScoreModel> for ModelFile {
    fn from(m: GaussianScoreModel) -> Self {
        ModelFile {
            covariance: linalg::matrix_to_rows(&m.covariance),
            mean: m.mean,
        }
    }
}

impl GaussianScoreModel {
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if m == 0 {
            return Err(Error::invalid("model needs at least one expert"));
        }
        check_len("covariance rows", m, covariance.nrows())?;
        check_len("covariance columns", m, covariance.ncols())?;
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("model entries must be finite"));
        }
        let asym = linalg::max_asymmetry(&covariance);
        if asym > SYMMETRY_TOL {
            return Err(Error::invalid(format!("covariance is not symmetric (max |Σᵢⱼ − Σⱼᵢ| = {asym:e})")));
        }
        let lo = linalg::smallest_eigenvalue(&covariance);
        if !(lo > 0.0) {
            return Err(Error::NotPositiveDefinite {
                smallest_eigenvalue: lo,
            });
        }
        Ok(Self { mean, covariance })
    }

    pub fn experts(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// `μ̄ᵀΣ⁻¹μ̄`.
    pub fn margin_sq(&self) -> Result<f64> {
        let x = self.inverse_times_mean()?;
        Ok(math::dot(x.as_slice(), &self.mean).max(0.0))
    }

    /// Largest achievable detection margin `√(μ̄ᵀΣ⁻¹μ̄)`.
    pub fn optimal_margin(&self) -> Result<f64> {
        Ok(self.margin_sq()?.sqrt())
    }

    fn inverse_times_mean(&self) -> Result<DVector<f64>> {
        linalg::spd_solve(&self.covariance, &DVector::from_column_slice(&self.mean))
    }

    /// Draws `L ∼ N(μ̄, Σ)` through the symmetric square root of `Σ`.
    pub fn sampler(&self) -> GaussianSampler {
        GaussianSampler {
            mean: DVector::from_column_slice(&self.mean),
            factor: linalg::symmetric_sqrt(&self.covariance),
        }
    }
}

pub struct GaussianSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.mean + &self.factor * z).iter().copied().collect()
    }
}

/// `Σ = σ₀²((1−η)I + η𝟏𝟏ᵀ)` with `μ̄ = 𝟏`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquicorrelatedSpec {
    pub m: usize,
    pub sigma0_sq: f64,
    pub eta: f64,
}

impl EquicorrelatedSpec {
    pub fn new(m: usize, sigma0_sq: f64, eta: f64) -> Result<Self> {
        let spec = Self { m, sigma0_sq, eta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("m must be at least 1"));
        }
        if !(self.sigma0_sq > 0.0) || !self.sigma0_sq.is_finite() {
            return Err(Error::invalid("sigma0_sq must be positive"));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(Error::invalid("eta must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |i, j| {
            self.sigma0_sq * if i == j { 1.0 } else { self.eta }
        })
    }

    pub fn model(&self) -> Result<GaussianScoreModel> {
        self.validate()?;
        GaussianScoreModel::new(vec![1.0; self.m], self.covariance())
    }
}

pub fn equicorrelated_margin_sq(spec: &EquicorrelatedSpec) -> Result<f64> {
    spec.validate()?;
    let m = spec.m as f64;
    Ok(m / (spec.sigma0_sq * (1.0 + spec.eta * (m - 1.0))))
}

/// `(ωᵀμ̄, √(ωᵀΣω))`.
pub fn fused_statistics(model: &GaussianScoreModel, omega: &WeightVector) -> Result<(f64, f64)> {
    check_len("weights", model.experts(), omega.len())?;
    let w = omega.as_slice();
    if w.iter().all(|v| *v == 0.0) {
        return Err(Error::domain("detection margin is undefined for zero weights"));
    }
    let wv = DVector::from_column_slice(w);
    let var = (wv.transpose() * &model.covariance * &wv)[(0, 0)];
    Ok((math::dot(w, &model.mean), var.max(0.0).sqrt()))
}

/// `μ/σ` under weights `ω`.
pub fn detection_margin(model: &GaussianScoreModel, omega: &WeightVector) -> Result<f64> {
    let (mu, sigma) = fused_statistics(model, omega)?;
    Ok(mu / sigma)
}

/// `cΣ⁻¹μ̄`.
pub fn optimal_weights(model: &GaussianScoreModel, c: f64) -> Result<WeightVector> {
    check_scale(c)?;
    let x = model.inverse_times_mean()?;
    WeightVector::new(x.iter().map(|v| c * v).collect())
}

fn check_scale(c: f64) -> Result<()> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::invalid("scale c must be positive"));
    }
    Ok(())
}

/// `Φ(μ/√(8/π + σ²))`, the classical probit approximation of
/// `E[sigmoid(Z)]` for `Z ∼ N(μ, σ²)`.
pub fn probit_accuracy_approx(mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::domain("sigma must be non-negative"));
    }
    Ok(math::normal_cdf(mu / (8.0 / PI + sigma * sigma).sqrt()))
}

/// `Pr[ωᵀL > 0] = Φ(μ/σ)`.
pub fn hard_decision_accuracy(model: &GaussianScoreModel, omega: &WeightVector) -> Result<f64> {
    Ok(math::normal_cdf(detection_margin(model, omega)?))
}

/// `Φ(√(μ̄ᵀΣ⁻¹μ̄))`: the probit approximation at `ω = cΣ⁻¹μ̄` as `c → ∞`.
pub fn sampled_accuracy_limit(model: &GaussianScoreModel) -> Result<f64> {
    Ok(math::normal_cdf(model.optimal_margin()?))
}

/// `½ + arctan(μ/σ)/π`, the probability that a Cauchy(μ, σ) variable is
/// positive.
pub fn cauchy_accuracy(mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::domain("Cauchy scale must be positive"));
    }
    Ok(0.5 + (mu / sigma).atan() / PI)
}

/// Margin-maximizing weights for a Cauchy location/scatter pair.
///
/// In whitened coordinates `u = Σ^{1/2}ω` the margin is `uᵀν/‖u‖` with
/// `ν = Σ^{-1/2}μ̄`, maximized by `u ∝ ν` (Cauchy–Schwarz).
pub fn cauchy_optimal_weights(model: &GaussianScoreModel, c: f64) -> Result<WeightVector> {
    check_scale(c)?;
    let r = linalg::symmetric_inv_sqrt(&model.covariance)?;
    let nu = &r * DVector::from_column_slice(&model.mean);
    let w = &r * nu;
    WeightVector::new(w.iter().map(|v| c * v).collect())
}

fn sharded_mean<F>(trials: usize, seed: RngSeed, draw: F) -> Result<f64>
where
    F: Fn(&mut SlopRng) -> f64 + Sync,
{
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let shards = trials.div_ceil(SHARD);
    let sums: Vec<f64> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = seed.derive(s as u64).rng();
            let count = SHARD.min(trials - s * SHARD);
            (0..count).map(|_| draw(&mut rng)).sum()
        })
        .collect();
    Ok(sums.iter().sum::<f64>() / trials as f64)
}

/// Monte Carlo `E[sigmoid(ωᵀL)]`, `L ∼ N(μ̄, Σ)`.
pub fn mc_expected_gold_reward(
    model: &GaussianScoreModel,
    omega: &WeightVector,
    trials: usize,
    seed: RngSeed,
) -> Result<f64> {
    check_len("weights", model.experts(), omega.len())?;
    let sampler = model.sampler();
    let w = omega.as_slice();
    sharded_mean(trials, seed, |rng| math::sigmoid(math::dot(w, &sampler.sample(rng))))
}

/// Monte Carlo `Pr[ωᵀL > 0]`, `L ∼ N(μ̄, Σ)`.
pub fn mc_hard_decision_accuracy(
    model: &GaussianScoreModel,
    omega: &WeightVector,
    trials: usize,
    seed: RngSeed,
) -> Result<f64> {
    check_len("weights", model.experts(), omega.len())?;
    let sampler = model.sampler();
    let w = omega.as_slice();
    sharded_mean(trials, seed, |rng| {
        f64::from(u8::from(math::dot(w, &sampler.sample(rng)) > 0.0))
    })
}

/// Monte Carlo `E[sigmoid(Z)]`, `Z ∼ N(μ, σ²)`.
pub fn mc_sigmoid_mean(mu: f64, sigma: f64, trials: usize, seed: RngSeed) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::domain("sigma must be non-negative"));
    }
    sharded_mean(trials, seed, |rng| {
        let z: f64 = rng.sample(StandardNormal);
        math::sigmoid(mu + sigma * z)
    })
}

/// Monte Carlo `Pr[Z > 0]`, `Z ∼ Cauchy(μ, σ)`.
pub fn mc_cauchy_positive_rate(mu: f64, sigma: f64, trials: usize, seed: RngSeed) -> Result<f64> {
    let law = Cauchy::new(mu, sigma).map_err(|e| Error::domain(e.to_string()))?;
    sharded_mean(trials, seed, |rng| f64::from(u8::from(law.sample(rng) > 0.0)))
}
