//! File formats: score tables and candidate lists as JSON lines, calibration
//! results as JSON, and CSV writers for traces and sweeps.
//!
//! Floats are written with Rust's shortest round-trip formatting, which is
//! locale independent, so identical runs give identical bytes.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{validate_prompt, CalibrationConfig, CalibrationResult, PromptRecord, ScoreTable};
use crate::error::{Error, Result};
use crate::samplers::CandidateSet;
use crate::synth::SweepResult;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One [`PromptRecord`] per non-blank line. Errors carry 1-based line
/// numbers.
pub fn read_score_table(reader: impl BufRead) -> Result<ScoreTable> {
    let mut prompts = Vec::new();
    let mut experts = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let record: PromptRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n,
            message: e.to_string(),
        })?;
        let m = *experts.get_or_insert_with(|| record.candidates.first().map_or(0, |c| c.scores.len()));
        validate_prompt(&record, m).map_err(|e| Error::Parse {
            line: n,
            message: e.to_string(),
        })?;
        prompts.push(record);
    }
    if prompts.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "score table is empty".into(),
        });
    }
    ScoreTable::new(prompts)
}

pub fn write_score_table(mut writer: impl Write, table: &ScoreTable) -> Result<()> {
    for p in table.prompts() {
        serde_json::to_writer(&mut writer, p).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: String,
    pub scores: Vec<f64>,
}

/// Candidate list for selection, one `{"id", "scores"}` object per line.
pub fn read_candidates(reader: impl BufRead) -> Result<(Vec<String>, CandidateSet)> {
    let mut ids = Vec::new();
    let mut scores = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CandidateRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(first) = scores.first().map(Vec::len) {
            if rec.scores.len() != first {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {first} scores, got {}", rec.scores.len()),
                });
            }
        }
        ids.push(rec.id);
        scores.push(rec.scores);
    }
    let set = CandidateSet::from_scores(scores)?;
    Ok((ids, set))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub weights: Vec<f64>,
    pub final_objective: f64,
    pub objective_trace: Vec<f64>,
    pub weight_trace: Vec<Vec<f64>>,
    pub config: CalibrationConfig,
    pub input_sha256: String,
}

impl CalibrationReport {
    pub fn new(result: &CalibrationResult, config: &CalibrationConfig, input: &[u8]) -> Self {
        Self {
            weights: result.final_weights.as_slice().to_vec(),
            final_objective: *result.objective_trace.last().expect("trace has the initial point"),
            objective_trace: result.objective_trace.clone(),
            weight_trace: result.weight_trace.clone(),
            config: config.clone(),
            input_sha256: sha256_hex(input),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `step,objective,w1,…,wm`.
pub fn trace_csv(result: &CalibrationResult) -> String {
    let m = result.final_weights.len();
    let mut out = String::from("step,objective");
    for l in 1..=m {
        write!(out, ",w{l}").unwrap();
    }
    out.push('\n');
    for (t, (j, w)) in result.objective_trace.iter().zip(&result.weight_trace).enumerate() {
        write!(out, "{t},{j}").unwrap();
        for v in w {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub const SWEEP_CSV_HEADER: &str = "proxy_accuracy,method,eval_accuracy,alpha,beta";

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for r in &result.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.proxy_accuracy,
            r.method,
            r.eval_accuracy,
            opt(r.alpha),
            opt(r.beta)
        )
        .unwrap();
    }
    out
}

/// Parses [`sweep_csv`] output back into rows.
pub fn parse_sweep_csv(text: &str) -> Result<SweepResult> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SWEEP_CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {SWEEP_CSV_HEADER:?}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let bad = |message: String| Error::Parse { line: i + 1, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let opt_num = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        rows.push(crate::synth::SweepRow {
            proxy_accuracy: num(f[0])?,
            method: f[1].to_string(),
            eval_accuracy: num(f[2])?,
            alpha: opt_num(f[3])?,
            beta: opt_num(f[4])?,
        });
    }
    Ok(SweepResult { rows })
}
