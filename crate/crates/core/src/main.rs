use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use marl_core::harness::validate::validate_config;
use marl_core::harness::{
    emit_results, run_experiment_gamma_sweep, run_experiment_m_sweep, run_single_with, EvalMode, Reference, RunConfig,
    RunOptions, RunTrace,
};

#[derive(Parser)]
#[command(name = "marl", version, about = "Multi-agent UCB Q-learning with hop-limited message passing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single configuration.
    Run(Common),
    /// Sweep the message life over a list of values.
    SweepGamma {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        gammas: Vec<usize>,
    },
    /// Sweep the number of agents (network rebuilt for each).
    SweepM {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10")]
        ms: Vec<usize>,
    },
    /// Check invariants of the objects a configuration builds.
    Validate(Common),
}

#[derive(Copy, Clone, ValueEnum)]
enum ReferenceArg {
    Dp,
    Offline,
}

#[derive(Args)]
struct Common {
    /// JSON file with RunConfig fields; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Write every delivery to <out>/messages.jsonl.
    #[arg(long)]
    trace_messages: bool,
    /// Write final Q-tables to <out>/q_dump.json.
    #[arg(long)]
    dump_q: bool,
    #[arg(long, value_enum)]
    eval_mode: Option<EvalMode>,
    #[arg(long, value_enum)]
    reference: Option<ReferenceArg>,
}

impl Common {
    fn config(&self, default: RunConfig) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => default,
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = self.eval_mode {
            cfg.eval_mode = mode;
        }
        if let Some(r) = self.reference {
            cfg.reference = match r {
                ReferenceArg::Dp => Reference::DpOracle,
                ReferenceArg::Offline => Reference::OfflineBaseline,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run_all(common: &Common, configs: Vec<RunConfig>) -> anyhow::Result<Vec<RunTrace>> {
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    let mut trace_file = if common.trace_messages {
        let path = common.out.join("messages.jsonl");
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Some(BufWriter::new(f))
    } else {
        None
    };
    let mut traces = Vec::with_capacity(configs.len());
    for cfg in configs {
        let options = RunOptions {
            message_trace: trace_file.as_mut().map(|w| w as &mut dyn Write),
            dump_q: common.dump_q,
        };
        traces.push(run_single_with(&cfg, options)?);
    }
    if let Some(mut w) = trace_file {
        w.flush()?;
    }
    Ok(traces)
}

fn report(traces: &[RunTrace]) {
    let tail = |t: &RunTrace| t.config.episodes.saturating_sub(100);
    for t in traces {
        println!(
            "gamma={} M={} cliques={} final-window deficit={:.4} group regret={:.2}",
            t.effective_gamma,
            t.num_agents(),
            t.num_cliques,
            t.mean_deficit_after(tail(t)),
            t.trials.iter().map(|tr| tr.final_regret()).sum::<f64>() / t.trials.len() as f64,
        );
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.config(RunConfig::default())?;
            let traces = run_all(&common, vec![cfg])?;
            emit_results(&traces, &common.out)?;
            report(&traces);
        }
        Command::SweepGamma { common, gammas } => {
            let base = common.config(RunConfig::gamma_sweep_default())?;
            let traces = if common.trace_messages || common.dump_q {
                run_all(&common, gammas.iter().map(|&gamma| RunConfig { gamma, ..base.clone() }).collect())?
            } else {
                run_experiment_gamma_sweep(&base, &gammas)?
            };
            emit_results(&traces, &common.out)?;
            report(&traces);
        }
        Command::SweepM { common, ms } => {
            let base = common.config(RunConfig::agent_sweep_default())?;
            let traces = if common.trace_messages || common.dump_q {
                run_all(&common, ms.iter().map(|&num_agents| RunConfig { num_agents, ..base.clone() }).collect())?
            } else {
                run_experiment_m_sweep(&base, &ms)?
            };
            emit_results(&traces, &common.out)?;
            report(&traces);
        }
        Command::Validate(common) => {
            let cfg = common.config(RunConfig::default())?;
            let results = validate_config(&cfg);
            let mut failed = 0;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                bail!("{failed} invariant check(s) failed");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
