//! Best-of-N family selectors over candidates drawn from the reference
//! expert (always expert index 0).
//!
//! Ties are broken by lowest candidate position everywhere.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Poisson;

use crate::error::{check_len, Error, Result};
use crate::math;
use crate::pool::{DiscreteDistribution, ScoreMatrix, WeightVector};

/// Maximum number of candidate tuples [`exact_selection_distribution`] will
/// enumerate.
pub const ENUMERATION_BUDGET: u64 = 1_000_000;

const REFERENCE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub label_index: usize,
    pub expert_scores: Vec<f64>,
}

/// `n ≥ 1` candidates sharing the same expert count `m`. Expert 0 is the
/// reference the candidates were drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    candidates: Vec<Candidate>,
    experts: usize,
}

impl CandidateSet {
    pub fn new(candidates: Vec<Candidate>) -> Result<Self> {
        let first = candidates
            .first()
            .ok_or_else(|| Error::invalid("a candidate set needs at least one candidate"))?;
        let experts = first.expert_scores.len();
        if experts == 0 {
            return Err(Error::invalid("candidates need at least one expert score"));
        }
        for c in &candidates {
            check_len("candidate scores", experts, c.expert_scores.len())?;
            if c.expert_scores.iter().any(|s| !s.is_finite()) {
                return Err(Error::invalid("candidate scores must be finite"));
            }
        }
        Ok(Self {
            candidates,
            experts,
        })
    }

    /// Candidates given only by their score vectors (label = position).
    pub fn from_scores(scores: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            scores
                .into_iter()
                .enumerate()
                .map(|(label_index, expert_scores)| Candidate {
                    label_index,
                    expert_scores,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn experts(&self) -> usize {
        self.experts
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn get(&self, j: usize) -> &Candidate {
        &self.candidates[j]
    }

    fn expert_column(&self, expert: usize) -> Result<Vec<f64>> {
        if expert >= self.experts {
            return Err(Error::invalid(format!(
                "expert index {expert} out of range for {} experts",
                self.experts
            )));
        }
        Ok(self
            .candidates
            .iter()
            .map(|c| c.expert_scores[expert])
            .collect())
    }
}

/// Checks that score row 0 equals `log(reference)` on the reference support.
fn check_reference(reference: &DiscreteDistribution, scores: &ScoreMatrix) -> Result<()> {
    check_len("score columns", reference.len(), scores.space().len())?;
    if reference.space() != scores.space() {
        return Err(Error::invalid("reference and scores use different output spaces"));
    }
    for (y, (&p, &s)) in reference.probs().iter().zip(scores.row(0)).enumerate() {
        if p > 0.0 && (p.ln() - s).abs() > REFERENCE_TOL {
            return Err(Error::Consistency(format!(
                "score row 1 at label {:?} is {s}, expected log p = {}",
                reference.space().labels()[y],
                p.ln()
            )));
        }
    }
    Ok(())
}

/// Draw `n` i.i.d. labels from `reference`; each candidate carries its label's
/// score column.
pub fn draw_candidates<R: Rng + ?Sized>(
    reference: &DiscreteDistribution,
    scores: &ScoreMatrix,
    n: usize,
    rng: &mut R,
) -> Result<CandidateSet> {
    if n == 0 {
        return Err(Error::invalid("need at least one candidate"));
    }
    check_reference(reference, scores)?;
    let index = WeightedIndex::new(reference.probs())
        .map_err(|e| Error::invalid(format!("reference is not sampleable: {e}")))?;
    let columns: Vec<Vec<f64>> = (0..reference.len()).map(|y| scores.column(y)).collect();
    let candidates = (0..n)
        .map(|_| {
            let label_index = index.sample(rng);
            Candidate {
                label_index,
                expert_scores: columns[label_index].clone(),
            }
        })
        .collect();
    CandidateSet::new(candidates)
}

/// Position of the candidate with the highest `reward_expert` score.
pub fn best_of_n(candidates: &CandidateSet, reward_expert: usize) -> Result<usize> {
    let rewards = candidates.expert_column(reward_expert)?;
    Ok(math::argmax_first(&rewards).unwrap_or(0))
}

/// Best-of-N with `N ~ Poisson(rate)`, clamped to at least one sample.
/// Returns the selected label.
pub fn best_of_poisson<R: Rng + ?Sized>(
    reference: &DiscreteDistribution,
    scores: &ScoreMatrix,
    rate: f64,
    reward_expert: usize,
    rng: &mut R,
) -> Result<usize> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::invalid(format!("Poisson rate must be positive, got {rate}")));
    }
    let poisson = Poisson::new(rate).map_err(|e| Error::invalid(e.to_string()))?;
    let n = (poisson.sample(rng) as usize).max(1);
    let cands = draw_candidates(reference, scores, n, rng)?;
    let j = best_of_n(&cands, reward_expert)?;
    Ok(cands.get(j).label_index)
}

/// Selection probabilities `softmax(β r_j)` used by [`soft_best_of_n`].
pub fn soft_best_of_n_probs(
    candidates: &CandidateSet,
    reward_expert: usize,
    beta: f64,
) -> Result<Vec<f64>> {
    let logits: Vec<f64> = candidates
        .expert_column(reward_expert)?
        .into_iter()
        .map(|r| beta * r)
        .collect();
    math::softmax_normalize(&logits)
}

/// Sample a candidate position with probability `∝ exp(β r_j)`.
pub fn soft_best_of_n<R: Rng + ?Sized>(
    candidates: &CandidateSet,
    reward_expert: usize,
    beta: f64,
    rng: &mut R,
) -> Result<usize> {
    sample_index(&soft_best_of_n_probs(candidates, reward_expert, beta)?, rng)
}

/// Pseudo-reward `(ω₁ − 1)s₁ + Σ_{i≥2} ωᵢ sᵢ` per candidate.
pub fn slop_pseudo_reward(candidates: &CandidateSet, omega: &WeightVector) -> Result<Vec<f64>> {
    check_len("weights", candidates.experts(), omega.len())?;
    let w = omega.as_slice();
    Ok(candidates
        .candidates()
        .iter()
        .map(|c| pseudo_reward(w, &c.expert_scores))
        .collect())
}

#[inline]
pub(crate) fn pseudo_reward(w: &[f64], s: &[f64]) -> f64 {
    let mut acc = (w[0] - 1.0) * s[0];
    for (wi, si) in w[1..].iter().zip(&s[1..]) {
        acc += wi * si;
    }
    acc
}

pub fn slop_sbon_probs(candidates: &CandidateSet, omega: &WeightVector) -> Result<Vec<f64>> {
    math::softmax_normalize(&slop_pseudo_reward(candidates, omega)?)
}

/// Soft selection among candidates with logits `Σᵢ ωᵢ sᵢ − s₁`.
pub fn slop_sbon_select<R: Rng + ?Sized>(
    candidates: &CandidateSet,
    omega: &WeightVector,
    rng: &mut R,
) -> Result<usize> {
    sample_index(&slop_sbon_probs(candidates, omega)?, rng)
}

/// Hard selection: `argmax_j Σᵢ ωᵢ sᵢ(y_j) − s₁(y_j)`.
pub fn slop_hard_select(candidates: &CandidateSet, omega: &WeightVector) -> Result<usize> {
    let r = slop_pseudo_reward(candidates, omega)?;
    Ok(math::argmax_first(&r).unwrap_or(0))
}

/// Mode of the pool restricted to the candidates: `argmax_j Σᵢ ωᵢ sᵢ(y_j)`,
/// without the reference offset. On a candidate set that covers every label
/// this is the hard decision `argmax_y π_ω(y)`.
pub fn slop_mode_select(candidates: &CandidateSet, omega: &WeightVector) -> Result<usize> {
    check_len("weights", candidates.experts(), omega.len())?;
    let w = omega.as_slice();
    let logits: Vec<f64> = candidates
        .candidates()
        .iter()
        .map(|c| math::dot(w, &c.expert_scores))
        .collect();
    Ok(math::argmax_first(&logits).unwrap_or(0))
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    let index = WeightedIndex::new(probs)
        .map_err(|e| Error::invalid(format!("selection weights: {e}")))?;
    Ok(index.sample(rng))
}

/// Exact law of the label returned by [`slop_sbon_select`] on `n` i.i.d.
/// reference candidates, by enumerating every candidate tuple.
pub fn exact_selection_distribution(
    reference: &DiscreteDistribution,
    scores: &ScoreMatrix,
    omega: &WeightVector,
    n: usize,
) -> Result<DiscreteDistribution> {
    if n == 0 {
        return Err(Error::invalid("need at least one candidate"));
    }
    check_reference(reference, scores)?;
    check_len("weights", scores.experts(), omega.len())?;
    let ny = reference.len();
    let tuples = (ny as f64).powi(n as i32);
    if tuples > ENUMERATION_BUDGET as f64 {
        return Err(Error::BudgetExceeded {
            tuples,
            budget: ENUMERATION_BUDGET,
        });
    }

    let w = omega.as_slice();
    let reward: Vec<f64> = (0..ny)
        .map(|y| pseudo_reward(w, &scores.column(y)))
        .collect();
    let support: Vec<usize> = (0..ny).filter(|&y| reference.probs()[y] > 0.0).collect();
    let p = reference.probs();

    let mut out = vec![0.0; ny];
    let mut digits = vec![0usize; n];
    let mut logits = vec![0.0; n];
    loop {
        let labels = digits.iter().map(|&d| support[d]);
        let weight: f64 = labels.clone().map(|y| p[y]).product();
        for (l, y) in logits.iter_mut().zip(labels) {
            *l = reward[y];
        }
        math::softmax_in_place(&mut logits)?;
        for (&d, &sel) in digits.iter().zip(&logits) {
            out[support[d]] += weight * sel;
        }

        // odometer increment
        let mut pos = 0;
        loop {
            if pos == n {
                let total: f64 = out.iter().sum();
                for v in out.iter_mut() {
                    *v /= total;
                }
                return DiscreteDistribution::new(reference.space().clone(), out);
            }
            digits[pos] += 1;
            if digits[pos] < support.len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::{kl_divergence, slop_distribution, OutputSpace};
    use crate::rng::RngSeed;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn space(n: usize) -> OutputSpace {
        OutputSpace::letters(n).unwrap()
    }

    fn world(p: &[f64], extra: Vec<Vec<f64>>) -> (DiscreteDistribution, ScoreMatrix) {
        let reference = DiscreteDistribution::new(space(p.len()), p.to_vec()).unwrap();
        let row0: Vec<f64> = p.iter().map(|x| if *x > 0.0 { x.ln() } else { -50.0 }).collect();
        let mut rows = vec![row0];
        rows.extend(extra);
        let scores = ScoreMatrix::new(space(p.len()), rows).unwrap();
        (reference, scores)
    }

    fn rewards(r: &[f64]) -> CandidateSet {
        CandidateSet::from_scores(r.iter().map(|&x| vec![0.0, x]).collect()).unwrap()
    }

    #[test]
    fn deterministic_reference_draws_one_label() {
        let (p, s) = world(&[1.0, 0.0], vec![vec![0.3, 0.9]]);
        let c = draw_candidates(&p, &s, 50, &mut RngSeed(3).rng()).unwrap();
        assert!(c.candidates().iter().all(|c| c.label_index == 0));
        assert_eq!(c.get(0).expert_scores, vec![0.0, 0.3]);
    }

    #[test]
    fn draw_frequency_matches_reference() {
        let (p, s) = world(&[0.7, 0.3], vec![]);
        let c = draw_candidates(&p, &s, 100_000, &mut RngSeed(11).rng()).unwrap();
        let zeros = c.candidates().iter().filter(|c| c.label_index == 0).count();
        assert!((zeros as f64 / 1e5 - 0.7).abs() < 0.01);
    }

    #[test]
    fn draw_is_seed_deterministic() {
        let (p, s) = world(&[0.2, 0.5, 0.3], vec![vec![1.0, 2.0, 3.0]]);
        let a = draw_candidates(&p, &s, 20, &mut RngSeed(5).rng()).unwrap();
        let b = draw_candidates(&p, &s, 20, &mut RngSeed(5).rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn draw_rejects_inconsistent_reference_row() {
        let p = DiscreteDistribution::new(space(2), vec![0.5, 0.5]).unwrap();
        let s = ScoreMatrix::new(space(2), vec![vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            draw_candidates(&p, &s, 3, &mut RngSeed(0).rng()),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn best_of_n_examples() {
        assert_eq!(best_of_n(&rewards(&[0.1, 0.9, 0.5]), 1).unwrap(), 1);
        assert_eq!(best_of_n(&rewards(&[0.4, 0.4, 0.4]), 1).unwrap(), 0);
        assert_eq!(best_of_n(&rewards(&[-3.0]), 1).unwrap(), 0);
        assert!(best_of_n(&rewards(&[1.0]), 2).is_err());
    }

    #[test]
    fn best_of_poisson_examples() {
        let (p, s) = world(&[1.0, 0.0], vec![vec![0.0, 1.0]]);
        let mut rng = RngSeed(1).rng();
        for _ in 0..20 {
            assert_eq!(best_of_poisson(&p, &s, 5.0, 1, &mut rng).unwrap(), 0);
        }
        assert!(best_of_poisson(&p, &s, 0.0, 1, &mut rng).is_err());
        assert!(best_of_poisson(&p, &s, -1.0, 1, &mut rng).is_err());

        // tiny rate: N clamps to 1, so the result is a plain reference sample
        let (p, s) = world(&[0.7, 0.3], vec![vec![0.0, 10.0]]);
        let hits = (0..20_000)
            .filter(|_| best_of_poisson(&p, &s, 1e-9, 1, &mut rng).unwrap() == 0)
            .count();
        assert!((hits as f64 / 20_000.0 - 0.7).abs() < 0.015);

        let (p, s) = world(&[0.5, 0.5], vec![vec![0.0, 1.0]]);
        let wins = (0..10_000)
            .filter(|_| best_of_poisson(&p, &s, 20.0, 1, &mut rng).unwrap() == 1)
            .count();
        assert!(wins as f64 / 10_000.0 >= 0.999);
    }

    #[test]
    fn soft_best_of_n_examples() {
        let c = rewards(&[0.3, -2.0, 1.0, 0.0]);
        let u = soft_best_of_n_probs(&c, 1, 0.0).unwrap();
        assert!(u.iter().all(|p| (p - 0.25).abs() < 1e-15));
        let sharp = soft_best_of_n_probs(&c, 1, 1e4).unwrap();
        assert_eq!(math::argmax_first(&sharp), Some(best_of_n(&c, 1).unwrap()));
        assert!(sharp[2] > 1.0 - 1e-12);

        let c = rewards(&[0.0, 3f64.ln()]);
        let probs = soft_best_of_n_probs(&c, 1, 1.0).unwrap();
        assert_abs_diff_eq!(probs[1], 0.75, epsilon = 1e-15);
        let mut rng = RngSeed(2).rng();
        let ones = (0..10_000)
            .filter(|_| soft_best_of_n(&c, 1, 1.0, &mut rng).unwrap() == 1)
            .count();
        assert!((ones as f64 / 1e4 - 0.75).abs() < 0.02);
    }

    #[test]
    fn pseudo_reward_examples() {
        let c = CandidateSet::from_scores(vec![vec![-1.0, 2.0, 0.5], vec![-0.2, -1.0, 3.0]]).unwrap();
        let r = slop_pseudo_reward(&c, &WeightVector::reference_only(3)).unwrap();
        assert_eq!(r, vec![0.0, 0.0]);

        let single = CandidateSet::from_scores(vec![vec![-0.7], vec![-1.3]]).unwrap();
        let r = slop_pseudo_reward(&single, &WeightVector::new(vec![2.0]).unwrap()).unwrap();
        assert_eq!(r, vec![-0.7, -1.3]);

        assert!(slop_pseudo_reward(&c, &WeightVector::ones(2)).is_err());
    }

    #[test]
    fn sbon_reference_only_is_uniform() {
        let c = CandidateSet::from_scores(vec![vec![-1.0, 4.0], vec![-0.1, -4.0], vec![-2.0, 0.0]]).unwrap();
        let probs = slop_sbon_probs(&c, &WeightVector::reference_only(2)).unwrap();
        assert!(probs.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn sbon_empirical_frequencies() {
        let c = CandidateSet::from_scores(vec![vec![-1.0, 0.5], vec![-0.5, -0.5], vec![-2.0, 1.0]]).unwrap();
        let w = WeightVector::new(vec![0.5, 1.5]).unwrap();
        let probs = slop_sbon_probs(&c, &w).unwrap();
        let mut counts = [0usize; 3];
        let mut rng = RngSeed(17).rng();
        for _ in 0..10_000 {
            counts[slop_sbon_select(&c, &w, &mut rng).unwrap()] += 1;
        }
        for (k, p) in counts.iter().zip(&probs) {
            assert!((*k as f64 / 1e4 - p).abs() < 0.02);
        }
    }

    #[test]
    fn hard_select_examples() {
        let c = CandidateSet::from_scores(vec![vec![-1.0, 0.5], vec![-0.5, 2.0], vec![-2.0, 1.0]]).unwrap();
        let w = WeightVector::new(vec![0.3, 1.0]).unwrap();
        let probs = slop_sbon_probs(&c, &w).unwrap();
        assert_eq!(Some(slop_hard_select(&c, &w).unwrap()), math::argmax_first(&probs));

        let one = CandidateSet::from_scores(vec![vec![-0.3, 9.0]]).unwrap();
        assert_eq!(slop_hard_select(&one, &w).unwrap(), 0);

        let tied = CandidateSet::from_scores(vec![vec![-1.0, 1.0], vec![-1.0, 1.0]]).unwrap();
        assert_eq!(slop_hard_select(&tied, &w).unwrap(), 0);
    }

    #[test]
    fn mode_select_ignores_reference_offset() {
        let c = CandidateSet::from_scores(vec![vec![-0.1, 0.0], vec![-3.0, 1.0]]).unwrap();
        let w = WeightVector::new(vec![1.0, 1.0]).unwrap();
        // pooled: -0.1 vs -2.0 ; offset: 0.0 vs 1.0
        assert_eq!(slop_mode_select(&c, &w).unwrap(), 0);
        assert_eq!(slop_hard_select(&c, &w).unwrap(), 1);
    }

    #[test]
    fn exact_selection_trivial_cases() {
        let (p, s) = world(&[0.2, 0.5, 0.3], vec![vec![1.0, -1.0, 0.5]]);
        let w = WeightVector::new(vec![0.4, 2.0]).unwrap();
        let one = exact_selection_distribution(&p, &s, &w, 1).unwrap();
        assert!(one.total_variation(&p) < 1e-15);
        for n in 1..6 {
            let d = exact_selection_distribution(&p, &s, &WeightVector::reference_only(2), n).unwrap();
            assert!(d.total_variation(&p) < 1e-12);
        }
        assert!(matches!(
            exact_selection_distribution(&p, &s, &w, 13),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn exact_selection_matches_closed_form_for_two_candidates() {
        // n = 2: P(y) = p(y)^2 + 2 Σ_{z≠y} p(y)p(z) e^{r_y}/(e^{r_y}+e^{r_z})
        let (p, s) = world(&[0.2, 0.5, 0.3], vec![vec![1.0, -1.0, 0.5]]);
        let w = WeightVector::new(vec![0.4, 2.0]).unwrap();
        let r: Vec<f64> = (0..3).map(|y| pseudo_reward(w.as_slice(), &s.column(y))).collect();
        let pr = p.probs();
        let expected: Vec<f64> = (0..3)
            .map(|y| {
                pr[y] * pr[y]
                    + (0..3)
                        .filter(|&z| z != y)
                        .map(|z| 2.0 * pr[y] * pr[z] * r[y].exp() / (r[y].exp() + r[z].exp()))
                        .sum::<f64>()
            })
            .collect();
        let d = exact_selection_distribution(&p, &s, &w, 2).unwrap();
        for (a, b) in d.probs().iter().zip(&expected) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn exact_selection_kl_decreases_on_fixed_instance() {
        let (p, s) = world(&[0.6, 0.3, 0.1], vec![vec![0.2, -0.4, 1.1], vec![-0.5, 0.8, 0.3]]);
        let w = WeightVector::new(vec![0.7, 1.2, -0.6]).unwrap();
        let target = slop_distribution(&s, &w).unwrap();
        let kls: Vec<f64> = (1..=5)
            .map(|n| kl_divergence(&target, &exact_selection_distribution(&p, &s, &w, n).unwrap()).unwrap())
            .collect();
        assert!(kls.windows(2).all(|k| k[1] < k[0]), "{kls:?}");
    }

    proptest! {
        #[test]
        fn sbon_two_experts_equals_soft_best_of_n(
            scores in prop::collection::vec((-5.0..0.0f64, -3.0..3.0f64), 1..8),
            beta in -4.0..4.0f64,
        ) {
            let c = CandidateSet::from_scores(scores.iter().map(|&(a, b)| vec![a, b]).collect()).unwrap();
            let w = WeightVector::new(vec![1.0, beta]).unwrap();
            prop_assert_eq!(slop_sbon_probs(&c, &w).unwrap(), soft_best_of_n_probs(&c, 1, beta).unwrap());
        }

        #[test]
        fn hard_select_invariant_to_logit_scaling(
            scores in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 3), 1..8),
            w in prop::collection::vec(-2.0..2.0f64, 3),
            c in 0.001..100.0f64,
        ) {
            let cands = CandidateSet::from_scores(scores).unwrap();
            let omega = WeightVector::new(w).unwrap();
            let r = slop_pseudo_reward(&cands, &omega).unwrap();
            let scaled: Vec<f64> = r.iter().map(|x| c * x).collect();
            prop_assert_eq!(math::argmax_first(&scaled), Some(slop_hard_select(&cands, &omega).unwrap()));
        }

        #[test]
        fn pseudo_reward_identity(
            scores in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 4), 1..6),
            w in prop::collection::vec(-2.0..2.0f64, 4),
        ) {
            let cands = CandidateSet::from_scores(scores.clone()).unwrap();
            let r = slop_pseudo_reward(&cands, &WeightVector::new(w.clone()).unwrap()).unwrap();
            for (rj, s) in r.iter().zip(&scores) {
                prop_assert!((rj - (math::dot(&w, s) - s[0])).abs() < 1e-12);
            }
        }

        #[test]
        fn samplers_deterministic_per_seed(seed in any::<u64>()) {
            let c = CandidateSet::from_scores(vec![vec![-1.0, 0.5], vec![-0.5, -0.5], vec![-2.0, 1.0]]).unwrap();
            let w = WeightVector::new(vec![0.5, 1.5]).unwrap();
            let a = slop_sbon_select(&c, &w, &mut RngSeed(seed).rng()).unwrap();
            let b = slop_sbon_select(&c, &w, &mut RngSeed(seed).rng()).unwrap();
            prop_assert_eq!(a, b);
            let a = soft_best_of_n(&c, 1, 0.7, &mut RngSeed(seed).rng()).unwrap();
            let b = soft_best_of_n(&c, 1, 0.7, &mut RngSeed(seed).rng()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
