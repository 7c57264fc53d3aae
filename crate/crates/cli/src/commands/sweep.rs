use std::fs;

use clap::Args;
use serde::{Deserialize, Serialize};
use slopkit::io::{sweep_csv, write_score_table};
use slopkit::synth::tasks::{reference_accuracy, BASELINE_GREEDY, BASELINE_PROXY, BASELINE_REFERENCE};
use slopkit::synth::{gen_tasks, run_accuracy_sweep, sweep_table, tune_correct_bias, SweepMethod, SweepResult, SweepSpec};
use slopkit::RngSeed;

use crate::common::*;
use crate::svg::{line_chart, Series};

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of generated tasks (default: calibration + evaluation count).
    #[arg(long)]
    pub tasks: Option<usize>,
    #[arg(long)]
    pub calib: Option<usize>,
    #[arg(long)]
    pub eval: Option<usize>,
    /// Proxy accuracies, comma separated.
    #[arg(long)]
    pub grid: Option<String>,
    /// Methods, comma separated: optimized, hedge, nonneg-beta, alpha-one.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub concentration: Option<f64>,
    /// Fixed correct-answer bias; disables tuning.
    #[arg(long)]
    pub bias: Option<f64>,
    /// Reference accuracy the bias is tuned to.
    #[arg(long)]
    pub target_accuracy: Option<f64>,
    /// Also write the score table of every grid point as JSON lines.
    #[arg(long)]
    pub write_tables: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub seed: u64,
    pub task_count: Option<usize>,
    /// `(options, weight)` pairs.
    pub option_sizes: Vec<(usize, f64)>,
    /// When set, `sweep.skill.correct_bias` is tuned to reach this accuracy.
    pub target_reference_accuracy: Option<f64>,
    pub tuning_samples: usize,
    pub sweep: SweepSpec,
    pub write_tables: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            task_count: None,
            option_sizes: vec![(4, 1.0)],
            target_reference_accuracy: Some(0.634),
            tuning_samples: 20_000,
            sweep: SweepSpec::default(),
            write_tables: false,
        }
    }
}

fn resolve(args: &SweepArgs) -> CliResult<SweepConfig> {
    let mut cfg: SweepConfig = args.common.load()?;
    set(&mut cfg.seed, args.common.seed);
    if args.tasks.is_some() {
        cfg.task_count = args.tasks;
    }
    let s = &mut cfg.sweep;
    set(&mut s.calib_count, args.calib);
    set(&mut s.eval_count, args.eval);
    set(&mut s.proxy_accuracies, floats_flag("grid", &args.grid)?);
    if let Some(m) = &args.methods {
        s.methods = m
            .split(',')
            .map(|name| {
                SweepMethod::parse(name.trim()).ok_or_else(|| CliError::config(format!("unknown method {name:?}")))
            })
            .collect::<CliResult<_>>()?;
    }
    set(&mut s.calibration.steps, args.steps);
    set(&mut s.calibration.learning_rate, args.learning_rate);
    set(&mut s.calibration.weight_decay, args.weight_decay);
    set(&mut s.skill.concentration, args.concentration);
    if let Some(b) = args.bias {
        s.skill.correct_bias = b;
        cfg.target_reference_accuracy = None;
    }
    if args.target_accuracy.is_some() {
        cfg.target_reference_accuracy = args.target_accuracy;
    }
    cfg.write_tables |= args.write_tables;
    Ok(cfg)
}

fn main_option_count(cfg: &SweepConfig) -> CliResult<usize> {
    cfg.option_sizes
        .iter()
        .fold(None, |best: Option<(usize, f64)>, &(k, w)| match best {
            Some((_, bw)) if bw >= w => best,
            _ => Some((k, w)),
        })
        .map(|(k, _)| k)
        .ok_or_else(|| CliError::config("option_sizes is empty"))
}

pub fn run(args: SweepArgs) -> CliResult<()> {
    let mut cfg = resolve(&args)?;
    let seed = RngSeed(cfg.seed);
    let options = main_option_count(&cfg)?;
    let out = args.common.prepare_out()?;
    write_resolved(out, &cfg)?;

    if let Some(target) = cfg.target_reference_accuracy {
        cfg.sweep.skill.correct_bias =
            tune_correct_bias(cfg.sweep.skill.concentration, options, target, cfg.tuning_samples, seed.derive(1))?;
    }
    let count = cfg.task_count.unwrap_or(cfg.sweep.calib_count + cfg.sweep.eval_count);
    let tasks = gen_tasks(count, &cfg.option_sizes, seed.derive(0))?;
    let result = run_accuracy_sweep(&tasks, &cfg.sweep, seed.derive(2))?;

    let csv = sweep_csv(&result);
    write_text(out, "sweep.csv", &csv)?;
    write_text(out, "accuracy.svg", &accuracy_plot(&result, &csv))?;
    write_text(out, "weights.svg", &weights_plot(&result, &csv))?;
    write_text(out, "reference_curve.csv", &reference_curve(&cfg, options, seed)?)?;

    if cfg.write_tables {
        let dir = out.join("tables");
        fs::create_dir_all(&dir)?;
        for &a in &cfg.sweep.proxy_accuracies {
            let table = sweep_table(&tasks[..cfg.sweep.calib_count + cfg.sweep.eval_count], &cfg.sweep.skill, a, seed.derive(2))?;
            let mut buf = Vec::new();
            write_score_table(&mut buf, &table)?;
            fs::write(dir.join(format!("proxy_{a}.jsonl")), buf)?;
        }
    }
    println!(
        "reference bias={} rows={} out={}",
        cfg.sweep.skill.correct_bias,
        result.rows.len(),
        out.display()
    );
    Ok(())
}

fn reference_curve(cfg: &SweepConfig, options: usize, seed: RngSeed) -> CliResult<String> {
    let mut text = String::from("correct_bias,sampled_accuracy,greedy_accuracy\n");
    let samples = (cfg.tuning_samples / 4).max(1);
    let mut biases: Vec<f64> = (0..=24).map(|i| i as f64 * 0.25).collect();
    biases.push(cfg.sweep.skill.correct_bias);
    biases.sort_by(f64::total_cmp);
    for b in biases {
        let skill = slopkit::synth::ReferenceSkillSpec { correct_bias: b, ..cfg.sweep.skill };
        let (s, g) = reference_accuracy(&skill, options, samples, seed.derive(1))?;
        text.push_str(&format!("{b},{s},{g}\n"));
    }
    Ok(text)
}

fn methods_in(result: &SweepResult) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for r in &result.rows {
        if !names.contains(&r.method) {
            names.push(r.method.clone());
        }
    }
    names
}

fn accuracy_plot(result: &SweepResult, csv: &str) -> String {
    let baselines = [BASELINE_REFERENCE, BASELINE_GREEDY, BASELINE_PROXY];
    let series: Vec<Series> = methods_in(result)
        .into_iter()
        .map(|m| Series {
            points: result
                .rows
                .iter()
                .filter(|r| r.method == m)
                .map(|r| (r.proxy_accuracy, r.eval_accuracy))
                .collect(),
            dashed: baselines.contains(&m.as_str()),
            name: m,
        })
        .collect();
    line_chart("Held-out accuracy", "proxy reward accuracy", "accuracy", &series, csv)
}

fn weights_plot(result: &SweepResult, csv: &str) -> String {
    let mut series = Vec::new();
    for m in methods_in(result) {
        let rows: Vec<_> = result.rows.iter().filter(|r| r.method == m && r.beta.is_some()).collect();
        if rows.is_empty() || m == BASELINE_REFERENCE {
            continue;
        }
        series.push(Series {
            name: format!("{m} alpha"),
            points: rows.iter().map(|r| (r.proxy_accuracy, r.alpha.unwrap_or(f64::NAN))).collect(),
            dashed: true,
        });
        series.push(Series {
            name: format!("{m} beta"),
            points: rows.iter().map(|r| (r.proxy_accuracy, r.beta.unwrap_or(f64::NAN))).collect(),
            dashed: false,
        });
    }
    line_chart("Calibrated weights", "proxy reward accuracy", "weight", &series, csv)
}
