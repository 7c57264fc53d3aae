use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use slopkit::io::read_candidates;
use slopkit::samplers::{best_of_n, slop_hard_select, slop_sbon_probs, soft_best_of_n_probs};
use slopkit::{RngSeed, WeightVector};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::common::*;

#[derive(Args, Debug)]
pub struct SelectArgs {
    /// Candidates, one `{"id": .., "scores": [..]}` object per line.
    pub candidates: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
    /// bon | sbon | slop-sbon | hard
    #[arg(long)]
    pub mode: Option<String>,
    /// Pool weights, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<String>,
    /// Expert index (0-based) used as reward by bon and sbon.
    #[arg(long)]
    pub reward_expert: Option<usize>,
    /// Inverse temperature of sbon.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Bon,
    Sbon,
    SlopSbon,
    Hard,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectConfig {
    pub seed: u64,
    pub candidates: Option<PathBuf>,
    pub mode: Mode,
    pub omega: Option<Vec<f64>>,
    pub reward_expert: usize,
    pub beta: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            candidates: None,
            mode: Mode::Hard,
            omega: None,
            reward_expert: 1,
            beta: 1.0,
        }
    }
}

pub fn run(args: SelectArgs) -> CliResult<()> {
    let mut cfg: SelectConfig = args.common.load()?;
    set(&mut cfg.seed, args.common.seed);
    if args.candidates.is_some() {
        cfg.candidates = args.candidates.clone();
    }
    if let Some(m) = &args.mode {
        cfg.mode = parse_name("mode", m)?;
    }
    if let Some(w) = floats_flag("omega", &args.omega)? {
        cfg.omega = Some(w);
    }
    set(&mut cfg.reward_expert, args.reward_expert);
    set(&mut cfg.beta, args.beta);

    let path = cfg.candidates.clone().ok_or_else(|| CliError::config("no candidate file given"))?;
    let file = File::open(&path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let (ids, set) = read_candidates(BufReader::new(file)).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })?;
    let omega = || -> CliResult<WeightVector> {
        let w = cfg.omega.clone().ok_or_else(|| CliError::config("this mode needs --omega"))?;
        Ok(WeightVector::new(w)?)
    };

    // hard modes pick the first index among ties
    let (selected, probs) = match cfg.mode {
        Mode::Bon => (best_of_n(&set, cfg.reward_expert)?, None),
        Mode::Hard => (slop_hard_select(&set, &omega()?)?, None),
        Mode::Sbon | Mode::SlopSbon => {
            let probs = if cfg.mode == Mode::Sbon {
                soft_best_of_n_probs(&set, cfg.reward_expert, cfg.beta)?
            } else {
                slop_sbon_probs(&set, &omega()?)?
            };
            let index = WeightedIndex::new(&probs).map_err(|e| CliError::config(e.to_string()))?;
            (index.sample(&mut RngSeed(cfg.seed).rng()), Some(probs))
        }
    };

    let out = args.common.prepare_out()?;
    write_resolved(out, &cfg)?;
    let mut csv = String::from("id,probability,selected\n");
    for (j, id) in ids.iter().enumerate() {
        let p = probs.as_ref().map(|p| p[j].to_string()).unwrap_or_default();
        csv.push_str(&format!("{id},{p},{}\n", u8::from(j == selected)));
    }
    write_text(out, "selection.csv", &csv)?;

    println!("selected={}", ids[selected]);
    if let Some(p) = probs {
        for (id, q) in ids.iter().zip(p) {
            println!("{id}\t{q}");
        }
    }
    Ok(())
}
