use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use slopkit::math::normal_cdf;
use slopkit::scoremodel::*;
use slopkit::RngSeed;

use crate::common::*;

#[derive(Args, Debug)]
pub struct GaussianArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// JSON file with `mean` and `covariance`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Equicorrelated pool size.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub sigma0_sq: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Scale c of the optimal weights cΣ⁻¹μ̄.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Monte Carlo trials for an empirical hard-decision check (0 skips it).
    #[arg(long)]
    pub mc_trials: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianConfig {
    pub seed: u64,
    pub model: Option<GaussianScoreModel>,
    pub model_file: Option<PathBuf>,
    pub equicorrelated: Option<EquicorrelatedSpec>,
    pub scale: f64,
    pub mc_trials: usize,
    pub table_m: Vec<usize>,
    pub table_eta: Vec<f64>,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: None,
            model_file: None,
            equicorrelated: None,
            scale: 1.0,
            mc_trials: 0,
            table_m: vec![1, 2, 4, 8, 16, 32, 64],
            table_eta: vec![0.0, 0.25, 0.5, 0.75, 0.9],
        }
    }
}

#[derive(Serialize)]
struct Report {
    experts: usize,
    optimal_weights: Vec<f64>,
    margin: f64,
    margin_sq: f64,
    closed_form_margin_sq: Option<f64>,
    hard_accuracy: f64,
    sampled_accuracy_limit: f64,
    probit_accuracy_at_scale: f64,
    cauchy_accuracy: f64,
    mc_hard_accuracy: Option<f64>,
}

fn resolve(args: &GaussianArgs) -> CliResult<GaussianConfig> {
    let mut cfg: GaussianConfig = args.common.load()?;
    set(&mut cfg.seed, args.common.seed);
    set(&mut cfg.scale, args.scale);
    set(&mut cfg.mc_trials, args.mc_trials);
    if args.model.is_some() {
        cfg.model_file = args.model.clone();
        cfg.equicorrelated = None;
    }
    if args.m.is_some() || args.sigma0_sq.is_some() || args.eta.is_some() {
        let base = cfg.equicorrelated.unwrap_or(EquicorrelatedSpec { m: 4, sigma0_sq: 1.0, eta: 0.0 });
        cfg.equicorrelated = Some(EquicorrelatedSpec {
            m: args.m.unwrap_or(base.m),
            sigma0_sq: args.sigma0_sq.unwrap_or(base.sigma0_sq),
            eta: args.eta.unwrap_or(base.eta),
        });
        cfg.model = None;
        cfg.model_file = None;
    }
    Ok(cfg)
}

fn load_model(cfg: &GaussianConfig) -> CliResult<GaussianScoreModel> {
    if let Some(spec) = &cfg.equicorrelated {
        return Ok(spec.model()?);
    }
    if let Some(m) = &cfg.model {
        return Ok(m.clone());
    }
    let path = cfg
        .model_file
        .as_ref()
        .ok_or_else(|| CliError::config("give --model or equicorrelated flags (--m, --sigma0-sq, --eta)"))?;
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn run(args: GaussianArgs) -> CliResult<()> {
    let cfg = resolve(&args)?;
    let model = load_model(&cfg)?;
    if cfg.scale.is_nan() || cfg.scale <= 0.0 {
        return Err(CliError::config("scale must be positive"));
    }
    let out = args.common.prepare_out()?;
    write_resolved(out, &cfg)?;

    let weights = optimal_weights(&model, cfg.scale)?;
    let margin_sq = model.margin_sq()?;
    let margin = margin_sq.sqrt();
    // at ω = cΣ⁻¹μ̄: μ = c·margin², σ = c·margin
    let c = cfg.scale;
    let report = Report {
        experts: model.experts(),
        optimal_weights: weights.as_slice().to_vec(),
        margin,
        margin_sq,
        closed_form_margin_sq: cfg.equicorrelated.as_ref().map(equicorrelated_margin_sq).transpose()?,
        hard_accuracy: normal_cdf(margin),
        sampled_accuracy_limit: sampled_accuracy_limit(&model)?,
        probit_accuracy_at_scale: probit_accuracy_approx(c * margin_sq, c * margin)?,
        cauchy_accuracy: 0.5 + margin.atan() / std::f64::consts::PI,
        mc_hard_accuracy: if cfg.mc_trials > 0 && margin > 0.0 {
            Some(mc_hard_decision_accuracy(&model, &weights, cfg.mc_trials, RngSeed(cfg.seed))?)
        } else {
            None
        },
    };

    let mut summary = String::from("metric,value\n");
    let mut line = |k: &str, v: f64| {
        summary.push_str(&format!("{k},{v}\n"));
        println!("{k:<26} {v}");
    };
    line("margin", report.margin);
    line("margin_sq", report.margin_sq);
    if let Some(v) = report.closed_form_margin_sq {
        line("closed_form_margin_sq", v);
    }
    line("hard_accuracy", report.hard_accuracy);
    line("sampled_accuracy_limit", report.sampled_accuracy_limit);
    line("probit_accuracy_at_scale", report.probit_accuracy_at_scale);
    line("cauchy_accuracy", report.cauchy_accuracy);
    if let Some(v) = report.mc_hard_accuracy {
        line("mc_hard_accuracy", v);
    }
    println!("{:<26} {:?}", "optimal_weights", report.optimal_weights);
    write_text(out, "summary.csv", &summary)?;
    write_text(out, "report.json", &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;

    if let Some(spec) = &cfg.equicorrelated {
        let mut table = String::from("m,eta,margin_sq,hard_accuracy,cauchy_accuracy\n");
        for &m in &cfg.table_m {
            for &eta in &cfg.table_eta {
                let s = EquicorrelatedSpec::new(m, spec.sigma0_sq, eta)?;
                let q = equicorrelated_margin_sq(&s)?;
                let acc = normal_cdf(q.sqrt());
                let cauchy = cauchy_accuracy(q.sqrt(), 1.0)?;
                table.push_str(&format!("{m},{eta},{q},{acc},{cauchy}\n"));
            }
        }
        write_text(out, "accuracy_table.csv", &table)?;
    }
    Ok(())
}
