#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use slopkit::scoremodel::GaussianScoreModel;

/// Random positive-definite model: `Σ = AAᵀ/m + ridge·I`, standard normal
/// mean.
pub fn random_model(rng: &mut impl Rng, m: usize, ridge: f64) -> GaussianScoreModel {
    let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut s = &a * a.transpose() / m as f64 + DMatrix::identity(m, m) * ridge;
    s = (&s + s.transpose()) * 0.5;
    let mean = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    GaussianScoreModel::new(mean, s).unwrap()
}

/// Model with correlation built from a random factor, unit-ish scales and a
/// positive mean, as a stand-in for a pool of informative experts.
pub fn informative_model(rng: &mut impl Rng, m: usize) -> GaussianScoreModel {
    let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let c = &a * a.transpose() / m as f64 + DMatrix::identity(m, m) * 0.5;
    let d: Vec<f64> = (0..m).map(|i| c[(i, i)].sqrt()).collect();
    let scale: Vec<f64> = (0..m).map(|_| rng.random_range(0.8..1.5)).collect();
    let mut s = DMatrix::from_fn(m, m, |i, j| c[(i, j)] / (d[i] * d[j]) * scale[i] * scale[j]);
    s = (&s + s.transpose()) * 0.5;
    let mean = (0..m).map(|_| rng.random_range(0.3..1.2)).collect();
    GaussianScoreModel::new(mean, s).unwrap()
}
