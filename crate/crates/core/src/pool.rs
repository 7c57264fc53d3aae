//! Exact tilted, tempered-tilted and pooled distributions over a finite
//! output space.
//!
//! Everything is combined in log space and normalized with a stabilized
//! softmax. Rewards and scores are in nats; a reward expert contributes its
//! raw reward row as its log-score (the alignment distribution's normalizer
//! cancels in the softmax).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::math;

/// Tolerance for `sum(probs) == 1`.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Ordered, distinct labels. Cheap to clone.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputSpace {
    labels: Arc<[String]>,
}

impl OutputSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::invalid("an output space needs at least two labels"));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::invalid(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self {
            labels: labels.into(),
        })
    }

    /// Letter labels `A, B, C, ...` (up to 26).
    pub fn letters(size: usize) -> Result<Self> {
        if size > 26 {
            return Err(Error::invalid("at most 26 letter labels"));
        }
        Self::new((0..size).map(|i| ((b'A' + i as u8) as char).to_string()))
    }

    /// Labels `0, 1, ..., size-1`.
    pub fn indexed(size: usize) -> Result<Self> {
        Self::new((0..size).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// A normalized probability vector over an [`OutputSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    space: OutputSpace,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(space: OutputSpace, probs: Vec<f64>) -> Result<Self> {
        check_len("distribution", space.len(), probs.len())?;
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { space, probs })
    }

    /// Softmax of `logits` (`-inf` allowed for zero-mass labels).
    pub fn from_logits(space: OutputSpace, logits: &[f64]) -> Result<Self> {
        check_len("logits", space.len(), logits.len())?;
        let probs = math::softmax_normalize(logits)?;
        Ok(Self { space, probs })
    }

    pub fn uniform(space: OutputSpace) -> Self {
        let n = space.len();
        Self {
            space,
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn space(&self) -> &OutputSpace {
        &self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Entrywise natural log (`-inf` on zero mass).
    pub fn log_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.ln()).collect()
    }

    pub fn mode(&self) -> usize {
        math::argmax_first(&self.probs).unwrap_or(0)
    }

    pub fn total_variation(&self, other: &Self) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    fn check_same_space(&self, other: &Self) -> Result<()> {
        check_len("distribution", self.len(), other.len())?;
        if self.space != other.space {
            return Err(Error::invalid("distributions are over different output spaces"));
        }
        Ok(())
    }
}

/// Per-expert log-scores for one prompt: `m` rows, one column per label.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    space: OutputSpace,
    rows: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn new(space: OutputSpace, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("a score matrix needs at least one expert"));
        }
        for row in &rows {
            check_len("score row", space.len(), row.len())?;
            if row.iter().any(|s| !s.is_finite()) {
                return Err(Error::invalid("scores must be finite"));
            }
        }
        Ok(Self { space, rows })
    }

    pub fn space(&self) -> &OutputSpace {
        &self.space
    }

    pub fn experts(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, expert: usize) -> &[f64] {
        &self.rows[expert]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// The `m` expert scores of one label.
    pub fn column(&self, label: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[label]).collect()
    }

    /// `Σᵢ ωᵢ sᵢ(y)` for each label.
    pub fn pooled_logits(&self, omega: &WeightVector) -> Result<Vec<f64>> {
        check_len("weights", self.experts(), omega.len())?;
        let mut out = vec![0.0; self.space.len()];
        for (w, row) in omega.as_slice().iter().zip(&self.rows) {
            for (o, s) in out.iter_mut().zip(row) {
                *o += w * s;
            }
        }
        Ok(out)
    }
}

/// Real-valued ensemble weights; any sign allowed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("weight vector is empty"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights must be finite"));
        }
        Ok(Self(weights))
    }

    pub fn ones(m: usize) -> Self {
        Self(vec![1.0; m.max(1)])
    }

    /// `(1, 0, ..., 0)`: the reference expert alone.
    pub fn reference_only(m: usize) -> Self {
        let mut w = vec![0.0; m.max(1)];
        w[0] = 1.0;
        Self(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|w| c * w).collect())
    }

    pub fn norm(&self) -> f64 {
        math::norm(&self.0)
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

fn check_rewards(p: &DiscreteDistribution, r: &[f64]) -> Result<()> {
    check_len("reward vector", p.len(), r.len())?;
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("rewards must be finite"));
    }
    Ok(())
}

/// `π(y) ∝ p(y) exp(β r(y))`.
pub fn tilted_distribution(
    p: &DiscreteDistribution,
    r: &[f64],
    beta: f64,
) -> Result<DiscreteDistribution> {
    tempered_tilted(p, r, 1.0, beta)
}

/// `π(y) ∝ p(y)^α exp(β r(y))`.
///
/// Zero-mass labels stay at zero for `α > 0`; for `α ≤ 0` they are a domain
/// error. `α = 1, β = 0` returns `p` unchanged.
pub fn tempered_tilted(
    p: &DiscreteDistribution,
    r: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<DiscreteDistribution> {
    check_rewards(p, r)?;
    if !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::invalid("alpha and beta must be finite"));
    }
    if alpha == 1.0 && beta == 0.0 {
        return Ok(p.clone());
    }
    let mut logits = Vec::with_capacity(p.len());
    for (&pi, &ri) in p.probs().iter().zip(r) {
        if pi == 0.0 {
            if alpha <= 0.0 {
                return Err(Error::domain(format!(
                    "zero reference probability raised to alpha = {alpha}"
                )));
            }
            logits.push(f64::NEG_INFINITY);
        } else {
            logits.push(alpha * pi.ln() + beta * ri);
        }
    }
    DiscreteDistribution::from_logits(p.space().clone(), &logits)
}

/// Pooled distribution `softmax(Σᵢ ωᵢ sᵢ(·))`.
pub fn slop_distribution(
    scores: &ScoreMatrix,
    omega: &WeightVector,
) -> Result<DiscreteDistribution> {
    let logits = scores.pooled_logits(omega)?;
    DiscreteDistribution::from_logits(scores.space().clone(), &logits)
}

/// `KL(P ‖ Q) = Σ P log(P/Q)` in nats, with `0 log 0 = 0`.
pub fn kl_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    p.check_same_space(q)?;
    let mut total = 0.0;
    for (i, (&a, &b)) in p.probs().iter().zip(q.probs()).enumerate() {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(Error::domain(format!(
                "KL support violation at label {:?}",
                p.space().labels()[i]
            )));
        }
        total += a * (a / b).ln();
    }
    Ok(total.max(0.0))
}

/// `E_π[β r + (α−1) log p] − KL(π ‖ p)`.
pub fn regularized_objective(
    pi: &DiscreteDistribution,
    p: &DiscreteDistribution,
    r: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    check_rewards(p, r)?;
    let kl = kl_divergence(pi, p)?;
    let gain: f64 = pi
        .probs()
        .iter()
        .zip(p.probs())
        .zip(r)
        .filter(|((&a, _), _)| a > 0.0)
        .map(|((&a, &b), &ri)| a * (beta * ri + (alpha - 1.0) * b.ln()))
        .sum();
    Ok(gain - kl)
}

pub fn expected_reward(pi: &DiscreteDistribution, g: &[f64]) -> Result<f64> {
    check_len("reward vector", pi.len(), g.len())?;
    Ok(math::dot(pi.probs(), g))
}

/// Shannon entropy in nats.
pub fn entropy(pi: &DiscreteDistribution) -> f64 {
    -pi.probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}
