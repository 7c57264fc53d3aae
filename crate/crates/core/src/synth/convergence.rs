//! How fast pooled soft Best-of-N approaches the pooled distribution.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::pool::{kl_divergence, slop_distribution, DiscreteDistribution, OutputSpace, ScoreMatrix, WeightVector};
use crate::rng::RngSeed;
use crate::samplers::exact_selection_distribution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    /// `(n, KL(π_ω ‖ law of the n-candidate selector))`.
    pub points: Vec<(usize, f64)>,
    /// Least-squares slope of `ln KL` against `ln n`; `None` when fewer than
    /// two points or some KL is zero.
    pub slope: Option<f64>,
}

impl KlReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1 < w[0].1)
    }
}

pub fn kl_convergence_experiment(
    reference: &DiscreteDistribution,
    scores: &ScoreMatrix,
    omega: &WeightVector,
    n_values: &[usize],
) -> Result<KlReport> {
    if n_values.is_empty() {
        return Err(Error::invalid("need at least one candidate count"));
    }
    let target = slop_distribution(scores, omega)?;
    let points = n_values
        .iter()
        .map(|&n| {
            let law = exact_selection_distribution(reference, scores, omega, n)?;
            Ok((n, kl_divergence(&target, &law)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let slope = math::log_log_slope(&points.iter().map(|&(n, kl)| (n as f64, kl)).collect::<Vec<_>>());
    Ok(KlReport { points, slope })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KlInstance {
    pub reference: DiscreteDistribution,
    pub scores: ScoreMatrix,
    pub omega: WeightVector,
}

/// Random instance over `labels` outputs with `experts` experts: reference
/// logits and non-reference scores are standard normal, weights uniform on
/// `[−1, 2]`.
pub fn random_instance(labels: usize, experts: usize, seed: RngSeed) -> Result<KlInstance> {
    if experts == 0 {
        return Err(Error::invalid("need at least one expert"));
    }
    let space = OutputSpace::letters(labels)?;
    let mut rng = seed.rng();
    let mut normal = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.sample(StandardNormal)).collect() };
    let logits = normal(labels);
    let lse = math::log_sum_exp(&logits);
    let log_p: Vec<f64> = logits.iter().map(|l| l - lse).collect();
    let mut rows = vec![log_p.clone()];
    for _ in 1..experts {
        rows.push(normal(labels));
    }
    let omega = (0..experts).map(|_| rng.random_range(-1.0..2.0)).collect();
    Ok(KlInstance {
        reference: DiscreteDistribution::from_logits(space.clone(), &log_p)?,
        scores: ScoreMatrix::new(space, rows)?,
        omega: WeightVector::new(omega)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_weights_give_constant_kl() {
        let inst = random_instance(3, 2, RngSeed(4)).unwrap();
        let w = WeightVector::reference_only(2);
        let r = kl_convergence_experiment(&inst.reference, &inst.scores, &w, &[1, 2, 3, 4]).unwrap();
        // target is the reference itself and every selector returns a reference draw
        assert!(r.points.iter().all(|&(_, kl)| kl.abs() < 1e-14));
    }

    #[test]
    fn single_candidate_is_the_reference() {
        let inst = random_instance(3, 3, RngSeed(9)).unwrap();
        let r = kl_convergence_experiment(&inst.reference, &inst.scores, &inst.omega, &[1]).unwrap();
        let target = slop_distribution(&inst.scores, &inst.omega).unwrap();
        let direct = kl_divergence(&target, &inst.reference).unwrap();
        assert!((r.points[0].1 - direct).abs() < 1e-14);
        assert_eq!(r.slope, None);
    }

    #[test]
    fn budget_is_enforced() {
        let inst = random_instance(5, 2, RngSeed(1)).unwrap();
        assert!(matches!(
            kl_convergence_experiment(&inst.reference, &inst.scores, &inst.omega, &[9]),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
