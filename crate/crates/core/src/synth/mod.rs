//! Synthetic worlds and experiment drivers.
//!
//! - [`tasks`]: multiple-choice tasks with a tunable reference model and a
//!   proxy reward of given accuracy, and the accuracy sweep over proxy
//!   accuracies.
//! - [`gaussian`]: binary score tables whose log-posterior ratios are drawn
//!   from a Gaussian score model.
//! - [`convergence`]: KL between the pooled distribution and the exact law
//!   of pooled soft Best-of-N as `n` grows.
//! - [`single_expert`]: the three regimes of a one-expert binary world where
//!   the best weight may be finite, constant or divergent.

pub mod convergence;
pub mod gaussian;
pub mod single_expert;
pub mod tasks;

pub use convergence::{kl_convergence_experiment, random_instance, KlInstance, KlReport};
pub use gaussian::{gaussian_world_table, selection_accuracy, SelectionRule};
pub use single_expert::{single_expert_cases, SingleExpertReport};
pub use tasks::{
    gen_tasks, run_accuracy_sweep, sweep_table, synthetic_proxy_reward, synthetic_reference,
    tune_correct_bias, ReferenceSkillSpec, SweepMethod, SweepResult, SweepRow, SweepSpec,
    SyntheticProxySpec, SyntheticTask,
};
