use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::{Deserialize, Serialize};
use slopkit::calibration::{calibrate_weights, CalibrationConfig};
use slopkit::io::{read_score_table, trace_csv, CalibrationReport};
use slopkit::WeightVector;

use crate::common::*;

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Score table, one JSON prompt record per line.
    pub table: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// adam | plain-ascent
    #[arg(long)]
    pub optimizer: Option<String>,
    /// free | hedge | nonneg-beta | pin-reference
    #[arg(long)]
    pub constraint: Option<String>,
    /// sampled | exact
    #[arg(long)]
    pub law: Option<String>,
    /// Initial weights, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub init: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrateConfig {
    pub seed: u64,
    pub table: Option<PathBuf>,
    pub calibration: CalibrationConfig,
}

pub fn run(args: CalibrateArgs) -> CliResult<()> {
    let mut cfg: CalibrateConfig = args.common.load()?;
    set(&mut cfg.seed, args.common.seed);
    if args.table.is_some() {
        cfg.table = args.table.clone();
    }
    let c = &mut cfg.calibration;
    set(&mut c.steps, args.steps);
    set(&mut c.learning_rate, args.learning_rate);
    set(&mut c.weight_decay, args.weight_decay);
    if let Some(s) = &args.optimizer {
        c.optimizer = parse_name("optimizer", s)?;
    }
    if let Some(s) = &args.constraint {
        c.constraint = parse_name("constraint", s)?;
    }
    if let Some(s) = &args.law {
        c.law = parse_name("selection law", s)?;
    }
    if let Some(w) = floats_flag("init", &args.init)? {
        c.init = Some(WeightVector::new(w)?);
    }

    let path = cfg
        .table
        .clone()
        .ok_or_else(|| CliError::config("no score table given"))?;
    let bytes = fs::read(&path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let table = read_score_table(bytes.as_slice()).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })?;

    let out = args.common.prepare_out()?;
    write_resolved(out, &cfg)?;

    let start = Instant::now();
    let result = calibrate_weights(&table, &cfg.calibration)?;
    let elapsed = start.elapsed().as_secs_f64();

    let report = CalibrationReport::new(&result, &cfg.calibration, &bytes);
    write_text(out, "calibration.json", &report.to_json())?;
    write_text(out, "trace.csv", &trace_csv(&result))?;
    println!(
        "weights={:?} objective={} wall_time={elapsed:.3}s",
        report.weights, report.final_objective
    );
    Ok(())
}
