//! Exact dynamic programming on a known MDP: optimal values, policy
//! evaluation, regret bookkeeping, and the offline ε-greedy reference learner.

use crate::agent::{argmax, AgentState};
use crate::error::{Error, Result};
use crate::mdp::EpisodicMdp;
use crate::rng::EnvRng;
use crate::table::QTable;

/// Deterministic step-dependent policy `π[h][x]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    num_states: usize,
    actions: Vec<usize>,
}

impl Policy {
    /// `actions` is `[h][x]` row-major.
    pub fn new(horizon: usize, num_states: usize, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != horizon * num_states {
            return Err(Error::param(format!(
                "policy has {} entries, expected {}",
                actions.len(),
                horizon * num_states
            )));
        }
        Ok(Self { num_states, actions })
    }

    pub fn horizon(&self) -> usize {
        self.actions.len() / self.num_states
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn action(&self, h: usize, x: usize) -> usize {
        self.actions[h * self.num_states + x]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    fn check(&self, mdp: &EpisodicMdp) -> Result<()> {
        if self.num_states != mdp.num_states() || self.horizon() != mdp.horizon() {
            return Err(Error::param("policy shape does not match the MDP"));
        }
        if let Some(&a) = self.actions.iter().find(|&&a| a >= mdp.num_actions()) {
            return Err(Error::param(format!("policy action {a} out of range")));
        }
        Ok(())
    }
}

/// Value table with `H + 1` rows; row `H` is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    num_states: usize,
    values: Vec<f64>,
}

impl ValueTable {
    fn zeros(horizon: usize, num_states: usize) -> Self {
        Self {
            num_states,
            values: vec![0.0; (horizon + 1) * num_states],
        }
    }

    #[inline]
    pub fn get(&self, h: usize, x: usize) -> f64 {
        self.values[h * self.num_states + x]
    }

    #[inline]
    fn set(&mut self, h: usize, x: usize, v: f64) {
        self.values[h * self.num_states + x] = v;
    }

    pub fn row(&self, h: usize) -> &[f64] {
        &self.values[h * self.num_states..(h + 1) * self.num_states]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    pub v: ValueTable,
    pub q: QTable,
    pub policy: Policy,
}

fn expected_next(mdp: &EpisodicMdp, h: usize, x: usize, a: usize, next: &[f64]) -> f64 {
    mdp.transition_row(h, x, a).iter().zip(next).map(|(p, v)| p * v).sum()
}

/// Backward induction for `V*`, `Q*` and the lowest-index optimal policy.
pub fn optimal_values(mdp: &EpisodicMdp) -> OptimalSolution {
    let (s, a, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut v = ValueTable::zeros(horizon, s);
    let mut q = QTable::filled(horizon, s, a, 0.0);
    let mut actions = vec![0; horizon * s];
    for h in (0..horizon).rev() {
        let next = v.row(h + 1).to_vec();
        for x in 0..s {
            for act in 0..a {
                q.set(h, x, act, mdp.reward(h, x, act) + expected_next(mdp, h, x, act, &next));
            }
            let best = argmax(q.row(h, x));
            actions[h * s + x] = best;
            v.set(h, x, q.get(h, x, best));
        }
    }
    OptimalSolution {
        v,
        q,
        policy: Policy { num_states: s, actions },
    }
}

/// Exact expected return of `policy` from every `(h, x)`.
pub fn evaluate_policy(mdp: &EpisodicMdp, policy: &Policy) -> Result<ValueTable> {
    policy.check(mdp)?;
    let (s, horizon) = (mdp.num_states(), mdp.horizon());
    let mut v = ValueTable::zeros(horizon, s);
    for h in (0..horizon).rev() {
        let next = v.row(h + 1).to_vec();
        for x in 0..s {
            let a = policy.action(h, x);
            v.set(h, x, mdp.reward(h, x, a) + expected_next(mdp, h, x, a, &next));
        }
    }
    Ok(v)
}

/// Expected return of `policy` from state `x` at step 0 only.
pub fn policy_value_from(mdp: &EpisodicMdp, policy: &Policy, x: usize) -> Result<f64> {
    Ok(evaluate_policy(mdp, policy)?.get(0, x))
}

/// Lowest-index greedy policy of a Q-table.
pub fn greedy_policy_of(q: &QTable) -> Policy {
    let (horizon, s) = (q.horizon(), q.num_states());
    let actions = (0..horizon)
        .flat_map(|h| (0..s).map(move |x| (h, x)))
        .map(|(h, x)| argmax(q.row(h, x)))
        .collect();
    Policy { num_states: s, actions }
}

/// Samples one `H`-step return of `policy` from `x`.
pub fn rollout_return(mdp: &EpisodicMdp, policy: &Policy, x: usize, rng: &mut EnvRng) -> Result<f64> {
    policy.check(mdp)?;
    let mut state = x;
    let mut total = 0.0;
    for h in 0..mdp.horizon() {
        let (r, next) = mdp.step(h, state, policy.action(h, state), rng)?;
        total += r;
        state = next;
    }
    Ok(total)
}

/// Per-agent, per-episode gaps `V*_1(x_1) − V^π_1(x_1)` and their running
/// group total.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretLedger {
    v_star_initial: Vec<f64>,
    per_episode: Vec<Vec<f64>>,
    cumulative_group: Vec<f64>,
}

impl RegretLedger {
    pub fn new(optimal: &OptimalSolution) -> Self {
        Self {
            v_star_initial: optimal.v.row(0).to_vec(),
            per_episode: Vec::new(),
            cumulative_group: Vec::new(),
        }
    }

    /// Appends one episode: each agent's greedy policy is evaluated exactly
    /// from its own initial state.
    pub fn record_episode(&mut self, mdp: &EpisodicMdp, agents: &[AgentState], initial_states: &[usize]) -> Result<()> {
        if agents.len() != initial_states.len() {
            return Err(Error::param("one initial state per agent required"));
        }
        let gaps = agents
            .iter()
            .zip(initial_states)
            .map(|(agent, &x)| {
                let policy = greedy_policy_of(agent.q_table());
                Ok(self.v_star_initial[x] - policy_value_from(mdp, &policy, x)?)
            })
            .collect::<Result<Vec<_>>>()?;
        self.push_gaps(gaps);
        Ok(())
    }

    pub fn push_gaps(&mut self, gaps: Vec<f64>) {
        let prev = self.cumulative_group.last().copied().unwrap_or(0.0);
        self.cumulative_group.push(prev + gaps.iter().sum::<f64>());
        self.per_episode.push(gaps);
    }

    pub fn per_episode(&self) -> &[Vec<f64>] {
        &self.per_episode
    }

    pub fn cumulative_group(&self) -> &[f64] {
        &self.cumulative_group
    }

    pub fn total(&self) -> f64 {
        self.cumulative_group.last().copied().unwrap_or(0.0)
    }
}

/// Offline ε-greedy tabular Q-learning with discount `gamma_d` and step size
/// `1 / n(h, x, a)`. Episodes start at a uniformly drawn state so every
/// first-step state is trained.
pub fn offline_baseline(mdp: &EpisodicMdp, iters: usize, epsilon: f64, gamma_d: f64, rng: &mut EnvRng) -> Result<QTable> {
    if iters == 0 {
        return Err(Error::param("offline baseline needs at least one iteration"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::param(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if !(gamma_d > 0.0 && gamma_d <= 1.0) {
        return Err(Error::param(format!("discount {gamma_d} outside (0, 1]")));
    }
    let (s, a, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut q = QTable::filled(horizon, s, a, 0.0);
    let mut counts = vec![0u64; horizon * s * a];
    for _ in 0..iters {
        let mut x = rng.index(s);
        for h in 0..horizon {
            let act = if rng.uniform() < epsilon {
                rng.index(a)
            } else {
                argmax(q.row(h, x))
            };
            let (r, next) = mdp.step(h, x, act, rng)?;
            let future = if h + 1 < horizon {
                q.row(h + 1, next).iter().copied().fold(f64::NEG_INFINITY, f64::max)
            } else {
                0.0
            };
            let i = q.index(h, x, act);
            counts[i] += 1;
            let alpha = 1.0 / counts[i] as f64;
            let old = q.get(h, x, act);
            q.set(h, x, act, old + alpha * (r + gamma_d * future - old));
            x = next;
        }
    }
    Ok(q)
}
