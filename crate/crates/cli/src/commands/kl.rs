use clap::Args;
use serde::{Deserialize, Serialize};
use slopkit::synth::{kl_convergence_experiment, random_instance, KlInstance};
use slopkit::{DiscreteDistribution, OutputSpace, RngSeed, ScoreMatrix, WeightVector};

use crate::common::*;

#[derive(Args, Debug)]
pub struct KlArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Candidate counts, comma separated.
    #[arg(long)]
    pub n: Option<String>,
    /// Output-space size of the random instance.
    #[arg(long)]
    pub labels: Option<usize>,
    /// Expert count of the random instance.
    #[arg(long)]
    pub experts: Option<usize>,
    /// Weights, comma separated; replaces the instance's weights.
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<String>,
    /// Exit with status 4 unless the fitted slope lies in the band.
    #[arg(long = "assert")]
    pub assert_band: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExplicitInstance {
    pub reference: Vec<f64>,
    /// All expert rows; row 0 must be the log reference.
    pub scores: Vec<Vec<f64>>,
    pub omega: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct KlConfig {
    pub seed: u64,
    pub n_values: Vec<usize>,
    pub labels: usize,
    pub experts: usize,
    pub omega: Option<Vec<f64>>,
    pub instance: Option<ExplicitInstance>,
    pub slope_band: [f64; 2],
    pub assert_band: bool,
}

impl Default for KlConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_values: (1..=6).collect(),
            labels: 3,
            experts: 3,
            omega: None,
            instance: None,
            slope_band: [-1.6, -0.6],
            assert_band: false,
        }
    }
}

fn instance(cfg: &KlConfig) -> CliResult<KlInstance> {
    let mut inst = match &cfg.instance {
        None => random_instance(cfg.labels, cfg.experts, RngSeed(cfg.seed))?,
        Some(e) => {
            let space = OutputSpace::letters(e.reference.len())?;
            KlInstance {
                reference: DiscreteDistribution::new(space.clone(), e.reference.clone())?,
                scores: ScoreMatrix::new(space, e.scores.clone())?,
                omega: WeightVector::new(e.omega.clone())?,
            }
        }
    };
    if let Some(w) = &cfg.omega {
        inst.omega = WeightVector::new(w.clone())?;
    }
    Ok(inst)
}

pub fn run(args: KlArgs) -> CliResult<()> {
    let mut cfg: KlConfig = args.common.load()?;
    set(&mut cfg.seed, args.common.seed);
    set(&mut cfg.n_values, usizes_flag("n", &args.n)?);
    set(&mut cfg.labels, args.labels);
    set(&mut cfg.experts, args.experts);
    if let Some(w) = floats_flag("omega", &args.omega)? {
        cfg.omega = Some(w);
    }
    cfg.assert_band |= args.assert_band;

    let inst = instance(&cfg)?;
    let out = args.common.prepare_out()?;
    write_resolved(out, &cfg)?;

    let report = kl_convergence_experiment(&inst.reference, &inst.scores, &inst.omega, &cfg.n_values)?;
    let mut csv = String::from("n,kl\n");
    for (n, kl) in &report.points {
        csv.push_str(&format!("{n},{kl}\n"));
    }
    write_text(out, "kl.csv", &csv)?;

    let slope = report.slope.map_or_else(|| "NA".to_string(), |s| s.to_string());
    println!("slope={slope} decreasing={}", report.strictly_decreasing());

    if cfg.assert_band {
        let [lo, hi] = cfg.slope_band;
        match report.slope {
            Some(s) if (lo..=hi).contains(&s) => {}
            _ => return Err(CliError::assertion(format!("slope {slope} outside [{lo}, {hi}]"))),
        }
    }
    Ok(())
}
