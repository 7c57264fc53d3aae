//! Multiple-choice tasks, a stand-in reference model with tunable skill and
//! a proxy reward with tunable accuracy.
//!
//! Every task owns two seed streams derived from the run seed: one for its
//! reference noise and one for its proxy realization. The proxy stream does
//! not depend on the proxy accuracy, so sweeps over accuracy reuse the same
//! uniforms (common random numbers) and curves are smooth in `a`.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_weights, objective_with_law, CalibrationConfig, Constraint, PromptRecord, ScoreTable,
    SelectionLaw, TableCandidate,
};
use crate::error::{Error, Result};
use crate::math;
use crate::pool::{DiscreteDistribution, OutputSpace};
use crate::rng::RngSeed;

pub const MIN_OPTIONS: usize = 2;
pub const MAX_OPTIONS: usize = 5;

const REFERENCE_STREAM: u64 = 1;
const PROXY_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTask {
    pub task_id: String,
    pub space: OutputSpace,
    pub correct_index: usize,
}

impl SyntheticTask {
    pub fn new(task_id: impl Into<String>, options: usize, correct_index: usize) -> Result<Self> {
        if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&options) {
            return Err(Error::invalid(format!(
                "tasks have {MIN_OPTIONS} to {MAX_OPTIONS} options, got {options}"
            )));
        }
        if correct_index >= options {
            return Err(Error::invalid("correct index out of range"));
        }
        Ok(Self {
            task_id: task_id.into(),
            space: OutputSpace::letters(options)?,
            correct_index,
        })
    }

    pub fn options(&self) -> usize {
        self.space.len()
    }
}

/// `count` tasks whose option counts are drawn from the weighted `sizes`
/// and whose correct answer is uniform over the options.
pub fn gen_tasks(count: usize, sizes: &[(usize, f64)], seed: RngSeed) -> Result<Vec<SyntheticTask>> {
    if count == 0 {
        return Err(Error::invalid("task count must be at least 1"));
    }
    if sizes.is_empty() {
        return Err(Error::invalid("option sizes must not be empty"));
    }
    for &(s, w) in sizes {
        if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&s) || !(w >= 0.0) || !w.is_finite() {
            return Err(Error::invalid(format!("bad option size entry ({s}, {w})")));
        }
    }
    let index = WeightedIndex::new(sizes.iter().map(|&(_, w)| w))
        .map_err(|e| Error::invalid(format!("option size weights: {e}")))?;
    let mut rng = seed.rng();
    (0..count)
        .map(|i| {
            let options = sizes[index.sample(&mut rng)].0;
            let correct = rng.random_range(0..options);
            SyntheticTask::new(format!("t{i:05}"), options, correct)
        })
        .collect()
}

/// Option logits are log-Gamma(`concentration`) draws, i.e. the reference is
/// a Dirichlet(`concentration`) draw, tilted by `correct_bias` toward the
/// correct option.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSkillSpec {
    pub concentration: f64,
    pub correct_bias: f64,
}

impl Default for ReferenceSkillSpec {
    fn default() -> Self {
        Self {
            concentration: 1.0,
            correct_bias: 0.0,
        }
    }
}

impl ReferenceSkillSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.concentration > 0.0) || !self.concentration.is_finite() {
            return Err(Error::invalid("concentration must be positive"));
        }
        if !(self.correct_bias >= 0.0) || !self.correct_bias.is_finite() {
            return Err(Error::invalid("correct bias must be non-negative"));
        }
        Ok(())
    }
}

/// Normalized log-probabilities of the synthetic reference. Computed in log
/// space so tiny probabilities stay finite.
pub(crate) fn reference_log_probs(
    task: &SyntheticTask,
    skill: &ReferenceSkillSpec,
    seed: RngSeed,
) -> Result<Vec<f64>> {
    skill.validate()?;
    let gamma = Gamma::new(skill.concentration, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = seed.rng();
    let mut logits: Vec<f64> = (0..task.options())
        .map(|_| gamma.sample(&mut rng).max(f64::MIN_POSITIVE).ln())
        .collect();
    logits[task.correct_index] += skill.correct_bias;
    let lse = math::log_sum_exp(&logits);
    Ok(logits.iter().map(|l| l - lse).collect())
}

pub fn synthetic_reference(
    task: &SyntheticTask,
    skill: &ReferenceSkillSpec,
    seed: RngSeed,
) -> Result<DiscreteDistribution> {
    let lp = reference_log_probs(task, skill, seed)?;
    DiscreteDistribution::from_logits(task.space.clone(), &lp)
}

/// Probability of drawing the correct answer from the reference, and of the
/// reference mode being correct, averaged over `samples` random tasks with
/// `options` choices.
pub fn reference_accuracy(
    skill: &ReferenceSkillSpec,
    options: usize,
    samples: usize,
    seed: RngSeed,
) -> Result<(f64, f64)> {
    let tasks = gen_tasks(samples, &[(options, 1.0)], seed.derive(0))?;
    let mut sampled = 0.0;
    let mut greedy = 0.0;
    for (j, t) in tasks.iter().enumerate() {
        let lp = reference_log_probs(t, skill, seed.derive(REFERENCE_STREAM).derive(j as u64))?;
        sampled += lp[t.correct_index].exp();
        if math::argmax_first(&lp) == Some(t.correct_index) {
            greedy += 1.0;
        }
    }
    let n = samples as f64;
    Ok((sampled / n, greedy / n))
}

/// Smallest bias whose sampled reference accuracy reaches `target`, by
/// bisection with the reference noise held fixed.
pub fn tune_correct_bias(
    concentration: f64,
    options: usize,
    target: f64,
    samples: usize,
    seed: RngSeed,
) -> Result<f64> {
    let chance = 1.0 / options as f64;
    if !(target > chance && target < 1.0) {
        return Err(Error::invalid(format!(
            "target accuracy must lie in ({chance}, 1), got {target}"
        )));
    }
    let acc = |bias: f64| -> Result<f64> {
        let skill = ReferenceSkillSpec {
            concentration,
            correct_bias: bias,
        };
        Ok(reference_accuracy(&skill, options, samples, seed)?.0)
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while acc(hi)? < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::domain("target accuracy is not reachable"));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if acc(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProxySpec {
    pub target_accuracy: f64,
}

impl SyntheticProxySpec {
    pub fn new(target_accuracy: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&target_accuracy) {
            return Err(Error::invalid("proxy accuracy must lie in [0, 1]"));
        }
        Ok(Self { target_accuracy })
    }
}

/// One-hot proxy reward: the correct option with probability `a`, otherwise
/// a uniformly chosen incorrect option.
pub fn synthetic_proxy_reward(
    task: &SyntheticTask,
    spec: &SyntheticProxySpec,
    seed: RngSeed,
) -> Result<Vec<f64>> {
    let spec = SyntheticProxySpec::new(spec.target_accuracy)?;
    let mut rng = seed.rng();
    let k = task.options();
    let hit = rng.random::<f64>() < spec.target_accuracy;
    let miss = (task.correct_index + rng.random_range(1..k)) % k;
    let mut r = vec![0.0; k];
    r[if hit { task.correct_index } else { miss }] = 1.0;
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMethod {
    /// Both weights free.
    Optimized,
    /// `α = 1`, `β ≥ 0`.
    Hedge,
    /// `β ≥ 0`.
    NonnegBeta,
    /// `α = 1`.
    AlphaOne,
}

impl SweepMethod {
    pub fn name(self) -> &'static str {
        match self {
            SweepMethod::Optimized => "optimized",
            SweepMethod::Hedge => "hedge",
            SweepMethod::NonnegBeta => "nonneg-beta",
            SweepMethod::AlphaOne => "alpha-one",
        }
    }

    pub fn constraint(self) -> Constraint {
        match self {
            SweepMethod::Optimized => Constraint::Free,
            SweepMethod::Hedge => Constraint::Hedge,
            SweepMethod::NonnegBeta => Constraint::NonnegBeta,
            SweepMethod::AlphaOne => Constraint::PinReference,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Optimized, Self::Hedge, Self::NonnegBeta, Self::AlphaOne]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

pub const BASELINE_REFERENCE: &str = "reference";
pub const BASELINE_GREEDY: &str = "greedy";
pub const BASELINE_PROXY: &str = "proxy";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub skill: ReferenceSkillSpec,
    pub proxy_accuracies: Vec<f64>,
    pub methods: Vec<SweepMethod>,
    pub calib_count: usize,
    pub eval_count: usize,
    pub calibration: CalibrationConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            skill: ReferenceSkillSpec::default(),
            proxy_accuracies: (1..=20).map(|i| i as f64 / 20.0).collect(),
            methods: vec![SweepMethod::Optimized, SweepMethod::Hedge],
            calib_count: 200,
            eval_count: 2000,
            calibration: CalibrationConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub proxy_accuracy: f64,
    pub method: String,
    pub eval_accuracy: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn find(&self, proxy_accuracy: f64, method: &str) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && (r.proxy_accuracy - proxy_accuracy).abs() < 1e-12)
    }
}

fn task_table(tasks: &[SyntheticTask], log_probs: &[Vec<f64>], proxies: &[Vec<f64>]) -> Result<ScoreTable> {
    let prompts = tasks
        .iter()
        .zip(log_probs)
        .zip(proxies)
        .map(|((t, lp), r)| PromptRecord {
            prompt_id: t.task_id.clone(),
            candidates: (0..t.options())
                .map(|y| TableCandidate {
                    scores: vec![lp[y], r[y]],
                    gold: if y == t.correct_index { 1.0 } else { 0.0 },
                    correct: Some(y == t.correct_index),
                })
                .collect(),
        })
        .collect();
    ScoreTable::new(prompts)
}

fn world_log_probs(tasks: &[SyntheticTask], skill: &ReferenceSkillSpec, seed: RngSeed) -> Result<Vec<Vec<f64>>> {
    let stream = seed.derive(REFERENCE_STREAM);
    tasks
        .iter()
        .enumerate()
        .map(|(j, t)| reference_log_probs(t, skill, stream.derive(j as u64)))
        .collect()
}

fn world_proxies(tasks: &[SyntheticTask], a: f64, seed: RngSeed) -> Result<Vec<Vec<f64>>> {
    let spec = SyntheticProxySpec::new(a)?;
    let stream = seed.derive(PROXY_STREAM);
    tasks
        .iter()
        .enumerate()
        .map(|(j, t)| synthetic_proxy_reward(t, &spec, stream.derive(j as u64)))
        .collect()
}

/// Full-option score table `[log p(y), r(y)]` for every task at proxy
/// accuracy `a`, using the same seed streams as [`run_accuracy_sweep`].
pub fn sweep_table(
    tasks: &[SyntheticTask],
    skill: &ReferenceSkillSpec,
    proxy_accuracy: f64,
    seed: RngSeed,
) -> Result<ScoreTable> {
    let lp = world_log_probs(tasks, skill, seed)?;
    task_table(tasks, &lp, &world_proxies(tasks, proxy_accuracy, seed)?)
}

/// Calibrates each method on the first `calib_count` tasks and scores it on
/// the next `eval_count` by exact expected gold reward.
///
/// Rows are grouped by proxy accuracy in grid order; within a group the
/// baselines come first, then the methods in the order given.
pub fn run_accuracy_sweep(tasks: &[SyntheticTask], spec: &SweepSpec, seed: RngSeed) -> Result<SweepResult> {
    let needed = spec.calib_count + spec.eval_count;
    if spec.calib_count == 0 || spec.eval_count == 0 {
        return Err(Error::invalid("calibration and evaluation counts must be positive"));
    }
    if tasks.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: tasks.len(),
        });
    }
    if spec.proxy_accuracies.is_empty() {
        return Err(Error::invalid("proxy accuracy grid is empty"));
    }
    let tasks = &tasks[..needed];
    let log_probs = world_log_probs(tasks, &spec.skill, seed)?;

    let groups: Vec<Vec<SweepRow>> = spec
        .proxy_accuracies
        .par_iter()
        .map(|&a| -> Result<Vec<SweepRow>> {
            let proxies = world_proxies(tasks, a, seed)?;
            let (calib, eval) = task_table(tasks, &log_probs, &proxies)?.split_at(spec.calib_count)?;
            let held_out = &tasks[spec.calib_count..];

            let reference = mean(held_out.iter().zip(&log_probs[spec.calib_count..]).map(|(t, lp)| lp[t.correct_index].exp()));
            let greedy = mean(held_out.iter().zip(&log_probs[spec.calib_count..]).map(|(t, lp)| {
                f64::from(u8::from(math::argmax_first(lp) == Some(t.correct_index)))
            }));
            let proxy = mean(held_out.iter().zip(&proxies[spec.calib_count..]).map(|(t, r)| r[t.correct_index]));
            let baseline = |method: &str, eval_accuracy: f64, alpha: Option<f64>, beta: Option<f64>| SweepRow {
                proxy_accuracy: a,
                method: method.into(),
                eval_accuracy,
                alpha,
                beta,
            };
            let mut rows = vec![
                baseline(BASELINE_REFERENCE, reference, Some(1.0), Some(0.0)),
                baseline(BASELINE_GREEDY, greedy, None, None),
                baseline(BASELINE_PROXY, proxy, None, None),
            ];

            let fitted: Vec<SweepRow> = spec
                .methods
                .par_iter()
                .map(|&method| -> Result<SweepRow> {
                    let config = CalibrationConfig {
                        constraint: method.constraint(),
                        law: SelectionLaw::Exact,
                        ..spec.calibration.clone()
                    };
                    let w = calibrate_weights(&calib, &config)?.final_weights;
                    let acc = objective_with_law(&eval, &w, 0.0, SelectionLaw::Exact)?;
                    Ok(baseline(method.name(), acc, Some(w.as_slice()[0]), Some(w.as_slice()[1])))
                })
                .collect::<Result<_>>()?;
            rows.extend(fitted);
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    Ok(SweepResult {
        rows: groups.into_iter().flatten().collect(),
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}
