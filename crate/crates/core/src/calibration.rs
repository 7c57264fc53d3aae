//! Calibrating pool weights against gold rewards.
//!
//! The empirical objective for a score table is
//!
//! ```text
//! J(ω) = (1/k) Σᵢ Σⱼ πᵢⱼ gᵢⱼ − λ‖ω‖²,   πᵢ· = softmax_j(aᵢⱼ)
//! ```
//!
//! with candidate logits `aᵢⱼ = Σₗ ωₗ sₗᵢⱼ − s₁ᵢⱼ` when candidates were
//! sampled from the reference ([`SelectionLaw::Sampled`]), or `Σₗ ωₗ sₗᵢⱼ`
//! when each prompt lists its full answer set ([`SelectionLaw::Exact`]).
//! The gradient has the closed form
//!
//! ```text
//! ∂J/∂ωₗ = (1/k) Σᵢ Cov_πᵢ(g, sₗ) − 2λωₗ
//! ```
//!
//! which both laws share since the reference offset does not depend on ω.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::math;
use crate::pool::WeightVector;

/// Weight norm above which calibration is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;

/// Condition number above which the diagonal covariance variant is
/// recommended over the full inverse.
pub const DIAGONAL_RECOMMENDATION_CONDITION: f64 = 1e3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableCandidate {
    pub scores: Vec<f64>,
    pub gold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt_id: String,
    pub candidates: Vec<TableCandidate>,
}

/// Expert scores and gold rewards for `k` prompts. Expert 0 is the reference
/// log-likelihood. Candidate counts may differ between prompts.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    experts: usize,
    prompts: Vec<PromptRecord>,
}

impl ScoreTable {
    pub fn new(prompts: Vec<PromptRecord>) -> Result<Self> {
        let experts = prompts
            .first()
            .and_then(|p| p.candidates.first())
            .map(|c| c.scores.len())
            .ok_or_else(|| Error::invalid("score table needs at least one prompt with candidates"))?;
        if experts == 0 {
            return Err(Error::invalid("candidates need at least one expert score"));
        }
        for p in &prompts {
            validate_prompt(p, experts)?;
        }
        Ok(Self { experts, prompts })
    }

    pub fn experts(&self) -> usize {
        self.experts
    }

    pub fn prompts(&self) -> &[PromptRecord] {
        &self.prompts
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    /// Split into the first `at` prompts and the rest.
    pub fn split_at(&self, at: usize) -> Result<(ScoreTable, ScoreTable)> {
        if at == 0 || at >= self.prompts.len() {
            return Err(Error::invalid("split must leave both halves non-empty"));
        }
        let (a, b) = self.prompts.split_at(at);
        Ok((
            ScoreTable {
                experts: self.experts,
                prompts: a.to_vec(),
            },
            ScoreTable {
                experts: self.experts,
                prompts: b.to_vec(),
            },
        ))
    }
}

pub(crate) fn validate_prompt(p: &PromptRecord, experts: usize) -> Result<()> {
    if p.candidates.is_empty() {
        return Err(Error::invalid(format!("prompt {:?} has no candidates", p.prompt_id)));
    }
    for c in &p.candidates {
        check_len("candidate scores", experts, c.scores.len())?;
        if c.scores.iter().any(|s| !s.is_finite()) || !c.gold.is_finite() {
            return Err(Error::invalid(format!(
                "prompt {:?} has a non-finite score or gold reward",
                p.prompt_id
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionLaw {
    /// Candidates drawn from the reference; logits carry the `−s₁` offset.
    #[default]
    Sampled,
    /// Each prompt enumerates its answer set; logits are the pooled scores.
    Exact,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    PlainAscent,
    #[default]
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Projection applied after every update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    #[default]
    Free,
    /// `ω₁ ≡ 1`, `ω₂ ≥ 0`, two experts only.
    Hedge,
    /// `ω₂, …, ωₘ ≥ 0`.
    NonnegBeta,
    /// `ω₁ ≡ 1`, the rest free.
    PinReference,
}

impl Constraint {
    pub fn project(self, w: &mut [f64]) {
        match self {
            Constraint::Free => {}
            Constraint::Hedge => {
                w[0] = 1.0;
                for v in &mut w[1..] {
                    *v = v.max(0.0);
                }
            }
            Constraint::NonnegBeta => {
                for v in &mut w[1..] {
                    *v = v.max(0.0);
                }
            }
            Constraint::PinReference => w[0] = 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub adam: AdamParams,
    pub constraint: Constraint,
    /// Starting weights; all-ones when absent.
    pub init: Option<WeightVector>,
    pub law: SelectionLaw,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            learning_rate: 0.05,
            weight_decay: 0.0,
            optimizer: OptimizerKind::Adam,
            adam: AdamParams::default(),
            constraint: Constraint::Free,
            init: None,
            law: SelectionLaw::Sampled,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self, experts: usize) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::invalid("weight decay must be non-negative"));
        }
        if self.constraint == Constraint::Hedge && experts != 2 {
            return Err(Error::invalid(format!(
                "hedge constraint needs exactly two experts, table has {experts}"
            )));
        }
        if let Some(init) = &self.init {
            check_len("initial weights", experts, init.len())?;
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
            return Err(Error::invalid("adam parameters must satisfy 0 ≤ β < 1 and ε > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub final_weights: WeightVector,
    /// `J(ω⁽ᵗ⁾)` for `t = 0..=T`.
    pub objective_trace: Vec<f64>,
    /// `ω⁽ᵗ⁾` for `t = 0..=T`.
    pub weight_trace: Vec<Vec<f64>>,
}

/// Objective and (optionally) gradient in one pass over the table. Prompts
/// are reduced in index order.
fn evaluate(
    table: &ScoreTable,
    omega: &[f64],
    lambda: f64,
    law: SelectionLaw,
    grad: Option<&mut [f64]>,
) -> f64 {
    let m = table.experts;
    let mut total = 0.0;
    let mut acc = vec![0.0; m];
    let want_grad = grad.is_some();
    let mut pi = Vec::new();
    let mut e_gs = vec![0.0; m];
    let mut e_s = vec![0.0; m];

    for prompt in &table.prompts {
        pi.clear();
        pi.extend(prompt.candidates.iter().map(|c| {
            let pooled = math::dot(omega, &c.scores);
            match law {
                SelectionLaw::Sampled => pooled - c.scores[0],
                SelectionLaw::Exact => pooled,
            }
        }));
        math::softmax_in_place(&mut pi).expect("finite logits");

        let e_g: f64 = pi.iter().zip(&prompt.candidates).map(|(p, c)| p * c.gold).sum();
        total += e_g;

        if want_grad {
            // Gold shifted by the first candidate's value, so a constant gold
            // gives an exactly zero covariance.
            let g0 = prompt.candidates[0].gold;
            let mut e_d = 0.0;
            e_gs.iter_mut().for_each(|v| *v = 0.0);
            e_s.iter_mut().for_each(|v| *v = 0.0);
            for (p, c) in pi.iter().zip(&prompt.candidates) {
                let d = c.gold - g0;
                e_d += p * d;
                for l in 0..m {
                    e_gs[l] += p * d * c.scores[l];
                    e_s[l] += p * c.scores[l];
                }
            }
            for l in 0..m {
                acc[l] += e_gs[l] - e_d * e_s[l];
            }
        }
    }

    let k = table.prompts.len() as f64;
    if let Some(g) = grad {
        for l in 0..m {
            g[l] = acc[l] / k - 2.0 * lambda * omega[l];
        }
    }
    total / k - lambda * math::dot(omega, omega)
}

fn check_weights(table: &ScoreTable, omega: &WeightVector) -> Result<()> {
    check_len("weights", table.experts, omega.len())
}

/// Empirical calibration objective under sampled-candidate selection.
pub fn empirical_objective(table: &ScoreTable, omega: &WeightVector, lambda: f64) -> Result<f64> {
    objective_with_law(table, omega, lambda, SelectionLaw::Sampled)
}

pub fn objective_with_law(
    table: &ScoreTable,
    omega: &WeightVector,
    lambda: f64,
    law: SelectionLaw,
) -> Result<f64> {
    check_weights(table, omega)?;
    Ok(evaluate(table, omega.as_slice(), lambda, law, None))
}

/// Analytic gradient of [`empirical_objective`].
pub fn objective_gradient(table: &ScoreTable, omega: &WeightVector, lambda: f64) -> Result<Vec<f64>> {
    gradient_with_law(table, omega, lambda, SelectionLaw::Sampled)
}

pub fn gradient_with_law(
    table: &ScoreTable,
    omega: &WeightVector,
    lambda: f64,
    law: SelectionLaw,
) -> Result<Vec<f64>> {
    check_weights(table, omega)?;
    let mut g = vec![0.0; table.experts];
    evaluate(table, omega.as_slice(), lambda, law, Some(&mut g));
    Ok(g)
}

/// Projected gradient ascent on the calibration objective.
pub fn calibrate_weights(table: &ScoreTable, config: &CalibrationConfig) -> Result<CalibrationResult> {
    let m = table.experts;
    config.validate(m)?;
    let lambda = config.weight_decay;
    let mut w = config
        .init
        .clone()
        .unwrap_or_else(|| WeightVector::ones(m))
        .into_inner();
    config.constraint.project(&mut w);

    let mut grad = vec![0.0; m];
    let mut first = vec![0.0; m];
    let mut second = vec![0.0; m];
    let mut objective_trace = Vec::with_capacity(config.steps + 1);
    let mut weight_trace = Vec::with_capacity(config.steps + 1);

    let mut objective = evaluate(table, &w, lambda, config.law, Some(&mut grad));
    objective_trace.push(objective);
    weight_trace.push(w.clone());

    for step in 1..=config.steps {
        match config.optimizer {
            OptimizerKind::PlainAscent => {
                for (wi, gi) in w.iter_mut().zip(&grad) {
                    *wi += config.learning_rate * gi;
                }
            }
            OptimizerKind::Adam => {
                let AdamParams {
                    beta1,
                    beta2,
                    epsilon,
                } = config.adam;
                let c1 = 1.0 - beta1.powi(step as i32);
                let c2 = 1.0 - beta2.powi(step as i32);
                for l in 0..m {
                    first[l] = beta1 * first[l] + (1.0 - beta1) * grad[l];
                    second[l] = beta2 * second[l] + (1.0 - beta2) * grad[l] * grad[l];
                    let m_hat = first[l] / c1;
                    let v_hat = second[l] / c2;
                    w[l] += config.learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
        config.constraint.project(&mut w);

        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step,
                reason: "weights became non-finite".into(),
            });
        }
        let norm = math::norm(&w);
        if norm > DIVERGENCE_NORM {
            return Err(Error::Divergence {
                step,
                reason: format!("weight norm {norm:e} exceeds {DIVERGENCE_NORM:e}"),
            });
        }
        objective = evaluate(table, &w, lambda, config.law, Some(&mut grad));
        if !objective.is_finite() {
            return Err(Error::Divergence {
                step,
                reason: "objective is not finite".into(),
            });
        }
        objective_trace.push(objective);
        weight_trace.push(w.clone());
    }

    Ok(CalibrationResult {
        final_weights: WeightVector::new(w)?,
        objective_trace,
        weight_trace,
    })
}

fn is_correct(c: &TableCandidate) -> Option<bool> {
    c.correct.or(if c.gold == 1.0 {
        Some(true)
    } else if c.gold == 0.0 {
        Some(false)
    } else {
        None
    })
}

/// Score differences `s(correct) − s(incorrect)` over every such pair within
/// each prompt, pooled across prompts in table order.
///
/// Correctness comes from the candidate's `correct` flag, or from a binary
/// gold reward when the flag is absent.
pub fn relative_score_pairs(table: &ScoreTable) -> Result<Vec<Vec<f64>>> {
    let mut pairs = Vec::new();
    for prompt in &table.prompts {
        let mut correct = Vec::new();
        let mut incorrect = Vec::new();
        for c in &prompt.candidates {
            match is_correct(c) {
                Some(true) => correct.push(&c.scores),
                Some(false) => incorrect.push(&c.scores),
                None => {
                    return Err(Error::invalid(format!(
                        "prompt {:?}: candidate has no correct flag and non-binary gold {}",
                        prompt.prompt_id, c.gold
                    )))
                }
            }
        }
        for c in &correct {
            for w in &incorrect {
                pairs.push(c.iter().zip(w.iter()).map(|(a, b)| a - b).collect());
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoPairs);
    }
    Ok(pairs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Largest over smallest eigenvalue; `+inf` when singular.
    pub condition_number: f64,
}

impl Moments {
    pub fn recommends_diagonal(&self) -> bool {
        !(self.condition_number <= DIAGONAL_RECOMMENDATION_CONDITION)
    }
}

/// Sample mean and covariance (denominator `count − 1`) of the pairs.
pub fn estimate_moments(pairs: &[Vec<f64>]) -> Result<Moments> {
    let m = pairs.first().map(Vec::len).unwrap_or(0);
    if m == 0 {
        return Err(Error::InsufficientData { needed: 2, got: 0 });
    }
    if pairs.len() < m + 1 {
        return Err(Error::InsufficientData {
            needed: m + 1,
            got: pairs.len(),
        });
    }
    for p in pairs {
        check_len("relative score pair", m, p.len())?;
    }
    let n = pairs.len() as f64;
    let mut mean = vec![0.0; m];
    for p in pairs {
        for (a, b) in mean.iter_mut().zip(p) {
            *a += b;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);

    let mut cov = DMatrix::zeros(m, m);
    for p in pairs {
        for i in 0..m {
            let di = p[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (p[j] - mean[j]);
            }
        }
    }
    for i in 0..m {
        for j in 0..=i {
            let v = cov[(i, j)] / (n - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let condition_number = linalg::condition_number(&cov);
    Ok(Moments {
        mean,
        covariance: cov,
        condition_number,
    })
}

/// `ω = (Σ + ridge·I)⁻¹ μ̄` by Cholesky solve.
pub fn inverse_covariance_weights(
    mean: &[f64],
    covariance: &DMatrix<f64>,
    ridge: f64,
) -> Result<WeightVector> {
    let m = mean.len();
    check_len("covariance", m, covariance.nrows())?;
    check_len("covariance", m, covariance.ncols())?;
    if !(ridge >= 0.0) {
        return Err(Error::invalid("ridge must be non-negative"));
    }
    let a = covariance + DMatrix::identity(m, m) * ridge;
    let x = linalg::spd_solve(&a, &DVector::from_column_slice(mean)).map_err(|e| {
        Error::Singular(format!(
            "{e}; add a ridge term or use the diagonal covariance weights"
        ))
    })?;
    WeightVector::new(x.iter().copied().collect())
}

/// `ωᵢ = μ̄ᵢ / Σᵢᵢ`, ignoring off-diagonal covariance.
pub fn diag_covariance_weights(mean: &[f64], covariance: &DMatrix<f64>) -> Result<WeightVector> {
    let m = mean.len();
    check_len("covariance", m, covariance.nrows())?;
    let mut w = Vec::with_capacity(m);
    for (i, mu) in mean.iter().enumerate() {
        let d = covariance[(i, i)];
        if !(d > 0.0) {
            return Err(Error::Singular(format!("diagonal entry {i} is {d}")));
        }
        w.push(mu / d);
    }
    WeightVector::new(w)
}

pub fn fixed_weights(m: usize) -> Result<WeightVector> {
    if m == 0 {
        return Err(Error::invalid("need at least one expert"));
    }
    Ok(WeightVector::ones(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn cand(scores: &[f64], gold: f64) -> TableCandidate {
        TableCandidate {
            scores: scores.to_vec(),
            gold,
            correct: None,
        }
    }

    fn table(prompts: Vec<Vec<TableCandidate>>) -> ScoreTable {
        ScoreTable::new(
            prompts
                .into_iter()
                .enumerate()
                .map(|(i, candidates)| PromptRecord {
                    prompt_id: format!("p{i}"),
                    candidates,
                })
                .collect(),
        )
        .unwrap()
    }

    fn random_table(rng: &mut impl Rng, k: usize, n: usize, m: usize) -> ScoreTable {
        table(
            (0..k)
                .map(|_| {
                    (0..n)
                        .map(|_| {
                            let s: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
                            cand(&s, rng.random_range(-3.0..3.0))
                        })
                        .collect()
                })
                .collect(),
        )
    }

    #[test]
    fn table_validation() {
        assert!(ScoreTable::new(vec![]).is_err());
        let bad = vec![PromptRecord {
            prompt_id: "x".into(),
            candidates: vec![cand(&[0.0, 1.0], 1.0), cand(&[0.0], 0.0)],
        }];
        assert!(ScoreTable::new(bad).is_err());
        let nan = vec![PromptRecord {
            prompt_id: "x".into(),
            candidates: vec![cand(&[f64::NAN], 1.0)],
        }];
        assert!(ScoreTable::new(nan).is_err());
    }

    #[test]
    fn reference_only_weights_give_uniform_average() {
        let t = table(vec![
            vec![cand(&[-1.0, 2.0], 1.0), cand(&[-0.2, 0.1], 0.0)],
            vec![cand(&[-0.5, 0.0], 1.0), cand(&[-3.0, 1.0], 1.0), cand(&[-1.0, 1.0], 0.0)],
        ]);
        let j = empirical_objective(&t, &WeightVector::reference_only(2), 0.0).unwrap();
        assert_abs_diff_eq!(j, (0.5 + 2.0 / 3.0) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_weights_hand_evaluation() {
        // logits = -s1 = [1, 2] → π = [1, e]/(1+e); gold = [1, 0]
        let t = table(vec![vec![cand(&[-1.0, 5.0], 1.0), cand(&[-2.0, 7.0], 0.0)]]);
        let j = empirical_objective(&t, &WeightVector::new(vec![0.0, 0.0]).unwrap(), 0.3).unwrap();
        assert_abs_diff_eq!(j, 1.0 / (1.0 + std::f64::consts::E), epsilon = 1e-15);
    }

    #[test]
    fn objective_invariant_to_per_prompt_shifts() {
        let mut rng = RngSeed(4).rng();
        let t = random_table(&mut rng, 4, 5, 3);
        let w = WeightVector::new(vec![0.3, -1.2, 2.0]).unwrap();
        let j = empirical_objective(&t, &w, 0.01).unwrap();
        let mut prompts = t.prompts().to_vec();
        for (i, p) in prompts.iter_mut().enumerate() {
            let expert = i % 3;
            for c in &mut p.candidates {
                c.scores[expert] += 7.5 * (i as f64 + 1.0);
            }
        }
        let shifted = ScoreTable::new(prompts).unwrap();
        assert_abs_diff_eq!(j, empirical_objective(&shifted, &w, 0.01).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn constant_gold_has_zero_gradient() {
        let mut rng = RngSeed(8).rng();
        let mut t = random_table(&mut rng, 3, 4, 3).prompts().to_vec();
        for (i, p) in t.iter_mut().enumerate() {
            for c in &mut p.candidates {
                c.gold = i as f64;
            }
        }
        let t = ScoreTable::new(t).unwrap();
        let g = objective_gradient(&t, &WeightVector::new(vec![0.2, 0.5, -1.0]).unwrap(), 0.0).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12), "{g:?}");
    }

    #[test]
    fn decay_only_gradient() {
        let mut rng = RngSeed(9).rng();
        let mut t = random_table(&mut rng, 2, 3, 2).prompts().to_vec();
        t.iter_mut().flat_map(|p| p.candidates.iter_mut()).for_each(|c| c.gold = 0.0);
        let t = ScoreTable::new(t).unwrap();
        let w = WeightVector::new(vec![0.7, -2.0]).unwrap();
        let g = objective_gradient(&t, &w, 0.25).unwrap();
        assert_abs_diff_eq!(g[0], -0.35, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 1.0, epsilon = 1e-15);
    }

    fn central_difference(t: &ScoreTable, w: &[f64], lambda: f64, law: SelectionLaw) -> Vec<f64> {
        let h = 1e-5;
        (0..w.len())
            .map(|l| {
                let mut up = w.to_vec();
                let mut dn = w.to_vec();
                up[l] += h;
                dn[l] -= h;
                let f = |v: Vec<f64>| {
                    objective_with_law(t, &WeightVector::new(v).unwrap(), lambda, law).unwrap()
                };
                (f(up) - f(dn)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = RngSeed(21).rng();
        for law in [SelectionLaw::Sampled, SelectionLaw::Exact] {
            for _ in 0..20 {
                let k = rng.random_range(1..=5);
                let n = rng.random_range(1..=6);
                let m = rng.random_range(1..=4);
                let t = random_table(&mut rng, k, n, m);
                let w: Vec<f64> = (0..m).map(|_| rng.random_range(-1.5..1.5)).collect();
                let lambda = rng.random_range(0.0..0.1);
                let analytic = gradient_with_law(&t, &WeightVector::new(w.clone()).unwrap(), lambda, law).unwrap();
                let numeric = central_difference(&t, &w, lambda, law);
                for (a, b) in analytic.iter().zip(&numeric) {
                    assert!((a - b).abs() <= 1e-5, "{analytic:?} vs {numeric:?}");
                }
            }
        }
    }

    #[test]
    fn constant_gold_leaves_init_unchanged() {
        let mut rng = RngSeed(2).rng();
        let mut t = random_table(&mut rng, 4, 3, 3).prompts().to_vec();
        t.iter_mut().flat_map(|p| p.candidates.iter_mut()).for_each(|c| c.gold = 1.0);
        let t = ScoreTable::new(t).unwrap();
        for optimizer in [OptimizerKind::Adam, OptimizerKind::PlainAscent] {
            let cfg = CalibrationConfig {
                steps: 50,
                optimizer,
                ..Default::default()
            };
            let res = calibrate_weights(&t, &cfg).unwrap();
            assert_eq!(res.final_weights, WeightVector::ones(3));
            assert_eq!(res.objective_trace.len(), 51);
            assert_eq!(res.weight_trace.len(), 51);
        }
    }

    #[test]
    fn perfect_expert_weight_grows_monotonically() {
        let mut rng = RngSeed(13).rng();
        let prompts = (0..20)
            .map(|_| {
                (0..4)
                    .map(|_| {
                        let g: f64 = rng.random_range(0.0..1.0);
                        cand(&[rng.random_range(-2.0..0.0), g, rng.random_range(-1.0..1.0)], g)
                    })
                    .collect()
            })
            .collect();
        let t = table(prompts);
        let cfg = CalibrationConfig {
            steps: 100,
            ..Default::default()
        };
        let res = calibrate_weights(&t, &cfg).unwrap();
        assert!(res.weight_trace.windows(2).all(|w| w[1][1] > w[0][1]));
    }

    #[test]
    fn hedge_mode_pins_reference_weight() {
        let mut rng = RngSeed(6).rng();
        let t = random_table(&mut rng, 5, 4, 2);
        let cfg = CalibrationConfig {
            steps: 200,
            constraint: Constraint::Hedge,
            ..Default::default()
        };
        let res = calibrate_weights(&t, &cfg).unwrap();
        assert!(res.weight_trace.iter().all(|w| w[0] == 1.0 && w[1] >= 0.0));

        let t3 = random_table(&mut rng, 2, 2, 3);
        assert!(calibrate_weights(&t3, &cfg).is_err());
    }

    #[test]
    fn nonneg_beta_mode_clips() {
        let mut rng = RngSeed(16).rng();
        let t = random_table(&mut rng, 5, 4, 3);
        let cfg = CalibrationConfig {
            steps: 100,
            constraint: Constraint::NonnegBeta,
            ..Default::default()
        };
        let res = calibrate_weights(&t, &cfg).unwrap();
        assert!(res.weight_trace.iter().all(|w| w[1] >= 0.0 && w[2] >= 0.0));
    }

    #[test]
    fn divergence_is_reported_with_step() {
        // single expert that perfectly ranks gold: the objective has no finite maximizer
        let t = table(vec![vec![cand(&[1.0], 1.0), cand(&[-1.0], 0.0)]]);
        let cfg = CalibrationConfig {
            steps: 10,
            learning_rate: 1e7,
            optimizer: OptimizerKind::PlainAscent,
            ..Default::default()
        };
        match calibrate_weights(&t, &cfg) {
            Err(Error::Divergence { step, .. }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let t = table(vec![vec![cand(&[0.0], 1.0)]]);
        for cfg in [
            CalibrationConfig { steps: 0, ..Default::default() },
            CalibrationConfig { learning_rate: 0.0, ..Default::default() },
            CalibrationConfig { weight_decay: -1.0, ..Default::default() },
        ] {
            assert!(calibrate_weights(&t, &cfg).is_err());
        }
    }

    fn flagged(scores: &[f64], correct: bool) -> TableCandidate {
        TableCandidate {
            scores: scores.to_vec(),
            gold: if correct { 1.0 } else { 0.0 },
            correct: Some(correct),
        }
    }

    #[test]
    fn pair_counts() {
        let t = table(vec![vec![flagged(&[1.0, 2.0], true), flagged(&[0.5, 0.0], false)]]);
        assert_eq!(relative_score_pairs(&t).unwrap(), vec![vec![0.5, 2.0]]);

        let t = table(vec![
            vec![
                flagged(&[1.0], true),
                flagged(&[2.0], true),
                flagged(&[0.0], false),
                flagged(&[0.1], false),
                flagged(&[0.2], false),
            ],
            vec![flagged(&[1.0], true), flagged(&[3.0], true)],
        ]);
        assert_eq!(relative_score_pairs(&t).unwrap().len(), 6);

        let t = table(vec![vec![flagged(&[1.0], true)]]);
        assert!(matches!(relative_score_pairs(&t), Err(Error::NoPairs)));
    }

    #[test]
    fn moments_examples() {
        let same = vec![vec![1.0, -2.0]; 5];
        let mo = estimate_moments(&same).unwrap();
        assert_eq!(mo.mean, vec![1.0, -2.0]);
        assert!(mo.covariance.iter().all(|v| *v == 0.0));
        assert_eq!(mo.condition_number, f64::INFINITY);

        let cross = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let mo = estimate_moments(&cross).unwrap();
        assert_eq!(mo.mean, vec![0.0, 0.0]);
        assert_abs_diff_eq!(mo.covariance[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mo.covariance[(1, 1)], 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(mo.covariance[(0, 1)], 0.0);
        assert_abs_diff_eq!(mo.condition_number, 1.0, epsilon = 1e-12);

        assert!(matches!(
            estimate_moments(&cross[..2]),
            Err(Error::InsufficientData { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn inverse_covariance_examples() {
        let w = inverse_covariance_weights(&[1.0; 3], &DMatrix::identity(3, 3), 0.0).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 1.0, 1.0]);

        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0, 0.5]));
        let w = inverse_covariance_weights(&[1.0, 2.0, 3.0], &d, 0.0).unwrap();
        for (a, b) in w.as_slice().iter().zip([0.5, 0.5, 6.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
        let wd = diag_covariance_weights(&[1.0, 2.0, 3.0], &d).unwrap();
        for (a, b) in w.as_slice().iter().zip(wd.as_slice()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-14);
        }

        // equicorrelated with equal means: all-equal weights
        let eta = 0.6;
        let m = 5;
        let s = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { eta });
        let w = inverse_covariance_weights(&[1.0; 5], &s, 0.0).unwrap();
        let expected = 1.0 / (1.0 + eta * (m as f64 - 1.0));
        assert!(w.as_slice().iter().all(|v| (v - expected).abs() < 1e-12));

        let singular = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(
            inverse_covariance_weights(&[1.0, 1.0], &singular, 0.0),
            Err(Error::Singular(_))
        ));
        assert!(inverse_covariance_weights(&[1.0, 1.0], &singular, 0.1).is_ok());
    }

    #[test]
    fn diag_weights_examples() {
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0]));
        assert_eq!(diag_covariance_weights(&[2.0], &c).unwrap().as_slice(), &[0.5]);
        let z = DMatrix::zeros(2, 2);
        assert!(diag_covariance_weights(&[1.0, 1.0], &z).is_err());

        let eps = 1e-13;
        let near = DMatrix::from_row_slice(2, 2, &[1.0, 1.0 - eps, 1.0 - eps, 1.0]);
        let w = diag_covariance_weights(&[1.0, 0.5], &near).unwrap();
        assert!(w.as_slice().iter().all(|v| v.is_finite()));
        assert!(estimate_moments(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]])
            .unwrap()
            .recommends_diagonal());
    }

    #[test]
    fn fixed_weights_examples() {
        assert_eq!(fixed_weights(4).unwrap().as_slice(), &[1.0; 4]);
        assert_eq!(fixed_weights(1).unwrap().as_slice(), &[1.0]);
        assert!(fixed_weights(0).is_err());
    }
}
