//! Binary worlds drawn from a Gaussian score model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{PromptRecord, ScoreTable, TableCandidate};
use crate::error::{check_len, Error, Result};
use crate::math;
use crate::pool::WeightVector;
use crate::rng::RngSeed;
use crate::samplers::{slop_hard_select, slop_mode_select, CandidateSet};
use crate::scoremodel::GaussianScoreModel;

/// Score table for `k` binary prompts with `n` candidates each.
///
/// Per prompt the ratio vector `L ∼ N(μ̄, Σ)` fixes every expert's binary
/// distribution: `sₗ(correct) = log σ(Lₗ)` and `sₗ(incorrect) = log σ(−Lₗ)`.
/// Candidates are drawn from expert 0, so the correct answer appears with
/// probability `σ(L₀)`.
pub fn gaussian_world_table(model: &GaussianScoreModel, k: usize, n: usize, seed: RngSeed) -> Result<ScoreTable> {
    if k == 0 || n == 0 {
        return Err(Error::invalid("need at least one prompt and one candidate"));
    }
    let sampler = model.sampler();
    let prompts = (0..k)
        .map(|i| {
            let mut rng = seed.derive(i as u64).rng();
            let l = sampler.sample(&mut rng);
            let right: Vec<f64> = l.iter().map(|&v| math::log_sigmoid(v)).collect();
            let wrong: Vec<f64> = l.iter().map(|&v| math::log_sigmoid(-v)).collect();
            let p_right = right[0].exp();
            let candidates = (0..n)
                .map(|_| {
                    let correct = rng.random::<f64>() < p_right;
                    TableCandidate {
                        scores: if correct { right.clone() } else { wrong.clone() },
                        gold: if correct { 1.0 } else { 0.0 },
                        correct: Some(correct),
                    }
                })
                .collect();
            PromptRecord {
                prompt_id: format!("g{i:05}"),
                candidates,
            }
        })
        .collect();
    ScoreTable::new(prompts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// `argmax Σωs − s₁`.
    Hard,
    /// `argmax Σωs`.
    Mode,
}

/// Mean gold reward of the candidate each prompt's rule selects.
pub fn selection_accuracy(table: &ScoreTable, omega: &WeightVector, rule: SelectionRule) -> Result<f64> {
    check_len("weights", table.experts(), omega.len())?;
    let mut total = 0.0;
    for p in table.prompts() {
        let set = CandidateSet::from_scores(p.candidates.iter().map(|c| c.scores.clone()).collect())?;
        let j = match rule {
            SelectionRule::Hard => slop_hard_select(&set, omega)?,
            SelectionRule::Mode => slop_mode_select(&set, omega)?,
        };
        total += p.candidates[j].gold;
    }
    Ok(total / table.len() as f64)
}
