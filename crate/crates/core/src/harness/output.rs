use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::run::RunTrace;
use crate::table::QSnapshot;

pub const ROLLOUT_HEADER: &str = "trial,episode,agent,gamma,M,deficit";
pub const REGRET_HEADER: &str = "trial,episode,gamma,M,group_regret";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn rollouts_csv(traces: &[RunTrace]) -> String {
    let mut out = String::from(ROLLOUT_HEADER);
    out.push('\n');
    for run in traces {
        for trial in &run.trials {
            for row in &trial.rollouts {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    trial.trial,
                    row.episode,
                    row.agent,
                    run.effective_gamma,
                    run.num_agents(),
                    format_float(row.deficit)
                );
            }
        }
    }
    out
}

pub fn regret_csv(traces: &[RunTrace]) -> String {
    let mut out = String::from(REGRET_HEADER);
    out.push('\n');
    for run in traces {
        for trial in &run.trials {
            for (k, regret) in trial.group_regret.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    trial.trial,
                    k + 1,
                    run.effective_gamma,
                    run.num_agents(),
                    format_float(*regret)
                );
            }
        }
    }
    out
}

#[derive(Serialize)]
struct Meta<'a> {
    runs: &'a [RunTrace],
}

#[derive(Serialize)]
struct QDump<'a> {
    gamma: usize,
    #[serde(rename = "M")]
    num_agents: usize,
    trial: usize,
    agents: &'a [QSnapshot],
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `rollouts.csv`, `regret.csv` and `meta.json` into `out_dir`, plus
/// `q_dump.json` when any trial carries final Q-tables.
pub fn emit_results(traces: &[RunTrace], out_dir: &Path) -> Result<()> {
    if traces.is_empty() {
        return Err(Error::param("no traces to write"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(&out_dir.join("rollouts.csv"), &rollouts_csv(traces))?;
    write(&out_dir.join("regret.csv"), &regret_csv(traces))?;
    let meta = serde_json::to_string_pretty(&Meta { runs: traces })?;
    write(&out_dir.join("meta.json"), &meta)?;

    let dumps: Vec<QDump> = traces
        .iter()
        .flat_map(|run| {
            run.trials.iter().filter_map(move |t| {
                t.final_q.as_deref().map(|agents| QDump {
                    gamma: run.effective_gamma,
                    num_agents: run.num_agents(),
                    trial: t.trial,
                    agents,
                })
            })
        })
        .collect();
    if !dumps.is_empty() {
        write(&out_dir.join("q_dump.json"), &serde_json::to_string(&dumps)?)?;
    }
    Ok(())
}
