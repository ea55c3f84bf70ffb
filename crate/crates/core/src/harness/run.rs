//! The simulation loop: environment → agents → message bus → oracle.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::agent::{log_confidence, AgentState, LearnerParams};
use crate::bus::{write_trace, BusStats, MessageBus, SampleMsg};
use crate::error::{Error, Result};
use crate::graph::{closed_neighborhood_sizes, greedy_clique_cover, power_graph, CliqueCover, CommGraph, CoverDocument};
use crate::harness::config::{EvalMode, Reference, RunConfig};
use crate::mdp::{generate_random_mdp, EpisodicMdp};
use crate::oracle::{
    evaluate_policy, greedy_policy_of, offline_baseline, optimal_values, policy_value_from, rollout_return,
    OptimalSolution, RegretLedger,
};
use crate::rng::EnvRng;
use crate::table::QSnapshot;

const MDP_STREAM: u64 = 0;
const AGENT_STREAM_BASE: u64 = 1;
const ROLLOUT_STREAM_BASE: u64 = 1 << 32;
const OFFLINE_STREAM: u64 = 1 << 48;

/// Agent `m`'s environment stream for a trial seed.
pub fn agent_env_rng(trial_seed: u64, agent: usize) -> EnvRng {
    EnvRng::with_stream(trial_seed, AGENT_STREAM_BASE + agent as u64)
}

pub fn mdp_rng(trial_seed: u64) -> EnvRng {
    EnvRng::with_stream(trial_seed, MDP_STREAM)
}

pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(trial as u64)
}

/// Draws the trial's MDP. `S = 1` admits a single transition law, so it is
/// built directly with random rewards.
pub fn build_mdp(config: &RunConfig, seed: u64) -> Result<EpisodicMdp> {
    let mut rng = mdp_rng(seed);
    let mdp = if config.num_states == 1 {
        let rewards = vec![vec![(0..config.num_actions).map(|_| rng.uniform()).collect()]; config.horizon];
        EpisodicMdp::from_tables(
            vec![vec![vec![vec![1.0]; config.num_actions]]; config.horizon],
            rewards,
            config.time_varying,
        )?
    } else {
        generate_random_mdp(
            config.num_states,
            config.num_actions,
            config.horizon,
            config.rho,
            config.time_varying,
            &mut rng,
        )?
    };
    mdp.with_nominal_initial_state(config.nominal_initial_state)
}

/// Clamps γ to `min(D(G), H)`, warning when the request exceeds it.
pub fn effective_gamma(requested: usize, graph: &CommGraph, horizon: usize) -> usize {
    let ceiling = graph.diameter().min(horizon);
    if requested > ceiling {
        log::warn!("gamma {requested} exceeds min(D(G) = {}, H = {horizon}); using {ceiling}", graph.diameter());
        ceiling
    } else {
        requested
    }
}

/// What one episode produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// One-based episode number.
    pub episode: usize,
    pub gaps: Vec<f64>,
    pub group_regret: f64,
    /// Per-agent deficits when this episode is a checkpoint.
    pub deficits: Option<Vec<f64>>,
    /// Q-updates per agent during the episode.
    pub updates: Vec<u64>,
    /// Samples delivered to each agent during the episode.
    pub delivered: Vec<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OptimismTally {
    /// `(m, h, x, a, k)` cells with `Q^k < Q*`.
    pub below: u64,
    pub total: u64,
}

impl OptimismTally {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.below as f64 / self.total as f64
        }
    }
}

/// One trial of one configuration, advanced an episode at a time.
pub struct Simulation {
    config: RunConfig,
    seed: u64,
    mdp: Arc<EpisodicMdp>,
    graph: Arc<CommGraph>,
    gamma: usize,
    cover: CliqueCover,
    effective_degree: Option<f64>,
    iota: f64,
    optimal: OptimalSolution,
    reference_value: f64,
    offline_value: Option<f64>,
    agents: Vec<AgentState>,
    bus: MessageBus,
    env_rngs: Vec<EnvRng>,
    rollout_rngs: Vec<EnvRng>,
    ledger: RegretLedger,
    optimism: OptimismTally,
    episode: usize,
}

impl Simulation {
    pub fn new(config: &RunConfig, trial: usize) -> Result<Self> {
        config.validate()?;
        let seed = trial_seed(config.seed, trial);
        let mdp = Arc::new(build_mdp(config, seed)?);
        let graph = Arc::new(config.graph_spec.build(config.num_agents)?);
        let gamma = effective_gamma(config.gamma, &graph, config.horizon);
        let g_gamma = power_graph(&graph, gamma);
        let cover = greedy_clique_cover(&g_gamma);
        let effective_degree = cover.effective_degree(&g_gamma);
        let scale = if config.clique_knowledge {
            cover.clique_size.clone()
        } else {
            closed_neighborhood_sizes(&g_gamma)
        };
        let iota = log_confidence(
            config.num_states,
            config.num_actions,
            config.total_steps(),
            config.num_agents,
            config.p,
        );
        let params = LearnerParams {
            num_states: config.num_states,
            num_actions: config.num_actions,
            horizon: config.horizon,
            bonus_scale: config.c,
            iota,
        };
        let agents = scale
            .iter()
            .enumerate()
            .map(|(m, &size)| AgentState::new(m, params, size))
            .collect::<Result<Vec<_>>>()?;

        let optimal = optimal_values(&mdp);
        let x_nom = mdp.nominal_initial_state();
        let (reference_value, offline_value) = match config.reference {
            Reference::DpOracle => (optimal.v.get(0, x_nom), None),
            Reference::OfflineBaseline => {
                let mut rng = EnvRng::with_stream(seed, OFFLINE_STREAM);
                let q = offline_baseline(
                    &mdp,
                    config.offline_iters,
                    config.offline_epsilon,
                    config.offline_discount,
                    &mut rng,
                )?;
                let value = policy_value_from(&mdp, &greedy_policy_of(&q), x_nom)?;
                log::info!(
                    "trial {trial}: offline baseline value {value:.6} vs DP optimum {:.6} at x_nom",
                    optimal.v.get(0, x_nom)
                );
                (value, Some(value))
            }
        };

        let m = config.num_agents;
        Ok(Self {
            config: config.clone(),
            seed,
            bus: MessageBus::new(graph.clone(), gamma),
            env_rngs: (0..m).map(|i| agent_env_rng(seed, i)).collect(),
            rollout_rngs: (0..m)
                .map(|i| EnvRng::with_stream(seed, ROLLOUT_STREAM_BASE + i as u64))
                .collect(),
            ledger: RegretLedger::new(&optimal),
            mdp,
            graph,
            gamma,
            cover,
            effective_degree,
            iota,
            optimal,
            reference_value,
            offline_value,
            agents,
            optimism: OptimismTally::default(),
            episode: 0,
        })
    }

    pub fn mdp(&self) -> &EpisodicMdp {
        &self.mdp
    }

    pub fn graph(&self) -> &CommGraph {
        &self.graph
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn cover(&self) -> &CliqueCover {
        &self.cover
    }

    pub fn iota(&self) -> f64 {
        self.iota
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn bus(&self) -> &MessageBus {
        &self.bus
    }

    pub fn ledger(&self) -> &RegretLedger {
        &self.ledger
    }

    pub fn optimal(&self) -> &OptimalSolution {
        &self.optimal
    }

    pub fn optimism(&self) -> OptimismTally {
        self.optimism
    }

    pub fn episodes_done(&self) -> usize {
        self.episode
    }

    pub fn enable_message_trace(&mut self) {
        self.bus.enable_trace();
    }

    /// Writes and clears the deliveries recorded so far.
    pub fn flush_message_trace<W: Write + ?Sized>(&mut self, out: &mut W) -> std::io::Result<()> {
        write_trace(out, &self.bus.take_trace())
    }

    fn tally_optimism(&mut self) {
        let q_star = &self.optimal.q;
        for agent in &self.agents {
            for (q, qs) in agent.q_table().as_slice().iter().zip(q_star.as_slice()) {
                self.optimism.total += 1;
                self.optimism.below += u64::from(q < qs);
            }
        }
    }

    fn initial_states(&mut self) -> Vec<usize> {
        let s = self.config.num_states;
        if self.config.fixed_initial_state {
            vec![self.mdp.nominal_initial_state(); self.agents.len()]
        } else {
            self.env_rngs.iter_mut().map(|rng| rng.index(s)).collect()
        }
    }

    /// Rollout deficit of every agent's current greedy policy from `x_nom`.
    pub fn deficits(&mut self) -> Result<Vec<f64>> {
        let x_nom = self.mdp.nominal_initial_state();
        let mut out = Vec::with_capacity(self.agents.len());
        for (agent, rng) in self.agents.iter().zip(&mut self.rollout_rngs) {
            let policy = greedy_policy_of(agent.q_table());
            let value = match self.config.eval_mode {
                EvalMode::Exact => evaluate_policy(&self.mdp, &policy)?.get(0, x_nom),
                EvalMode::Sampled => rollout_return(&self.mdp, &policy, x_nom, rng)?,
            };
            out.push(self.reference_value - value);
        }
        Ok(out)
    }

    /// Plays one episode for all agents.
    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        if self.episode >= self.config.episodes {
            return Err(Error::param("all episodes already played"));
        }
        let k = self.episode;
        let horizon = self.config.horizon;
        let mut states = self.initial_states();

        // Within an episode, updates only touch steps already played, so the
        // greedy policy at episode start is the policy actually executed.
        self.tally_optimism();
        self.ledger.record_episode(&self.mdp, &self.agents, &states)?;

        let updates_before: Vec<u64> = self.agents.iter().map(AgentState::updates).collect();
        let received_before = self.bus.received().to_vec();
        let mut own = Vec::with_capacity(self.agents.len());
        for h in 0..horizon {
            own.clear();
            for (m, agent) in self.agents.iter().enumerate() {
                let x = states[m];
                let a = agent.select_action(h, x);
                let (r, x2) = self.mdp.step(h, x, a, &mut self.env_rngs[m])?;
                let msg = SampleMsg {
                    step: h,
                    episode: k,
                    origin: m,
                    state: x,
                    action: a,
                    next_state: x2,
                    reward: r,
                    hops_remaining: self.gamma,
                };
                self.bus.broadcast(msg);
                own.push(msg);
                states[m] = x2;
            }
            let delivered = self.bus.step_exchange();
            for ((agent, mine), theirs) in self.agents.iter_mut().zip(&own).zip(&delivered) {
                agent.process_step(mine, theirs)?;
            }
        }
        self.bus.end_episode();
        self.episode += 1;

        let deficits = if self.episode.is_multiple_of(self.config.rollout_interval) {
            Some(self.deficits()?)
        } else {
            None
        };
        Ok(EpisodeRecord {
            episode: self.episode,
            gaps: self.ledger.per_episode().last().cloned().unwrap_or_default(),
            group_regret: self.ledger.total(),
            deficits,
            updates: self
                .agents
                .iter()
                .zip(&updates_before)
                .map(|(a, before)| a.updates() - before)
                .collect(),
            delivered: self
                .bus
                .received()
                .iter()
                .zip(&received_before)
                .map(|(now, before)| now - before)
                .collect(),
        })
    }

    pub fn q_snapshots(&self) -> Vec<QSnapshot> {
        self.agents
            .iter()
            .map(|a| QSnapshot {
                agent: a.id(),
                q: a.q_table().to_nested(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloutRow {
    pub episode: usize,
    pub agent: usize,
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialTrace {
    pub trial: usize,
    pub seed: u64,
    #[serde(skip)]
    pub rollouts: Vec<RolloutRow>,
    /// Cumulative group regret after each episode.
    #[serde(skip)]
    pub group_regret: Vec<f64>,
    /// `[k][m]` regret gaps.
    #[serde(skip)]
    pub gaps: Vec<Vec<f64>>,
    pub bus: BusStats,
    pub optimism: OptimismTally,
    pub dp_value: f64,
    pub reference_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offline_value: Option<f64>,
    pub resampled_dirichlet_rows: usize,
    #[serde(skip)]
    pub final_q: Option<Vec<QSnapshot>>,
}

impl TrialTrace {
    pub fn final_regret(&self) -> f64 {
        self.group_regret.last().copied().unwrap_or(0.0)
    }

    /// Mean deficit over checkpoints with episode > `after`.
    pub fn mean_deficit_after(&self, after: usize) -> f64 {
        let rows: Vec<f64> = self.rollouts.iter().filter(|r| r.episode > after).map(|r| r.deficit).collect();
        rows.iter().sum::<f64>() / rows.len().max(1) as f64
    }
}

/// All trials of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub config: RunConfig,
    pub effective_gamma: usize,
    pub diameter: usize,
    pub iota: f64,
    pub clique_cover: CoverDocument,
    pub num_cliques: usize,
    /// `null` when some clique has max degree equal to its size.
    pub effective_degree: Option<f64>,
    pub trials: Vec<TrialTrace>,
}

impl RunTrace {
    pub fn num_agents(&self) -> usize {
        self.config.num_agents
    }

    /// Mean deficit over checkpoints after `after`, averaged over trials and agents.
    pub fn mean_deficit_after(&self, after: usize) -> f64 {
        self.trials.iter().map(|t| t.mean_deficit_after(after)).sum::<f64>() / self.trials.len() as f64
    }

    pub fn optimism(&self) -> OptimismTally {
        self.trials.iter().fold(OptimismTally::default(), |acc, t| OptimismTally {
            below: acc.below + t.optimism.below,
            total: acc.total + t.optimism.total,
        })
    }

    pub fn dropped_messages(&self) -> u64 {
        self.trials.iter().map(|t| t.bus.dropped).sum()
    }
}

/// Side outputs for a run.
#[derive(Default)]
pub struct RunOptions<'a> {
    pub message_trace: Option<&'a mut dyn Write>,
    pub dump_q: bool,
}

pub fn run_single(config: &RunConfig) -> Result<RunTrace> {
    run_single_with(config, RunOptions::default())
}

pub fn run_single_with(config: &RunConfig, mut options: RunOptions<'_>) -> Result<RunTrace> {
    config.validate()?;
    let mut trials = Vec::with_capacity(config.trials);
    let mut summary = None;
    for trial in 0..config.trials {
        let mut sim = Simulation::new(config, trial)?;
        if options.message_trace.is_some() {
            sim.enable_message_trace();
        }
        let mut rollouts = Vec::new();
        let mut group_regret = Vec::with_capacity(config.episodes);
        for _ in 0..config.episodes {
            let rec = sim.run_episode()?;
            group_regret.push(rec.group_regret);
            if let Some(deficits) = rec.deficits {
                rollouts.extend(deficits.into_iter().enumerate().map(|(agent, deficit)| RolloutRow {
                    episode: rec.episode,
                    agent,
                    deficit,
                }));
            }
            if let Some(out) = options.message_trace.as_deref_mut() {
                sim.flush_message_trace(out).map_err(|e| Error::io("<message trace>", e))?;
            }
        }
        if summary.is_none() {
            summary = Some((
                sim.gamma(),
                sim.graph().diameter(),
                sim.iota(),
                sim.cover().to_document(),
                sim.cover().num_cliques(),
                sim.effective_degree,
            ));
        }
        trials.push(TrialTrace {
            trial,
            seed: sim.seed(),
            rollouts,
            group_regret,
            gaps: sim.ledger().per_episode().to_vec(),
            bus: sim.bus().stats(),
            optimism: sim.optimism(),
            dp_value: sim.optimal().v.get(0, sim.mdp().nominal_initial_state()),
            reference_value: sim.reference_value,
            offline_value: sim.offline_value,
            resampled_dirichlet_rows: sim.mdp().resampled_rows(),
            final_q: options.dump_q.then(|| sim.q_snapshots()),
        });
    }
    let (effective_gamma, diameter, iota, clique_cover, num_cliques, effective_degree) =
        summary.expect("trials >= 1 checked by validate");
    Ok(RunTrace {
        config: config.clone(),
        effective_gamma,
        diameter,
        iota,
        clique_cover,
        num_cliques,
        effective_degree,
        trials,
    })
}

/// One run per γ. Every run shares the base seed, so trial `i` sees the same
/// MDP and environment streams at every sweep point.
pub fn run_experiment_gamma_sweep(base: &RunConfig, gammas: &[usize]) -> Result<Vec<RunTrace>> {
    gammas
        .iter()
        .map(|&gamma| run_single(&RunConfig { gamma, ..base.clone() }))
        .collect()
}

/// One run per agent count, rebuilding the network for each `M` and keeping
/// the base γ (clamped per network).
pub fn run_experiment_m_sweep(base: &RunConfig, ms: &[usize]) -> Result<Vec<RunTrace>> {
    ms.iter()
        .map(|&num_agents| run_single(&RunConfig { num_agents, ..base.clone() }))
        .collect()
}
