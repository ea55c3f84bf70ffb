//! Per-agent optimistic Q-learning with Hoeffding-style bonuses.

use serde::{Deserialize, Serialize};

use crate::bus::SampleMsg;
use crate::error::{Error, Result};
use crate::table::QTable;

/// Step size `(H + 1) / (H + t)` after the `t`-th observation of a cell.
pub fn learning_rate(t: u64, horizon: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::param("learning rate needs t >= 1"));
    }
    let h = horizon as f64;
    Ok((h + 1.0) / (h + t as f64))
}

/// Bonus `c * sqrt(H^3 * iota / (clique_size * t))`.
pub fn exploration_bonus(bonus_scale: f64, iota: f64, horizon: usize, clique_size: usize, t: u64) -> Result<f64> {
    if t == 0 {
        return Err(Error::param("exploration bonus needs t >= 1"));
    }
    if clique_size == 0 {
        return Err(Error::param("clique size must be positive"));
    }
    let h = horizon as f64;
    Ok(bonus_scale * (h * h * h * iota / (clique_size as f64 * t as f64)).sqrt())
}

/// `ln(S * A * T * M / p)`.
pub fn log_confidence(
    num_states: usize,
    num_actions: usize,
    total_steps: usize,
    num_agents: usize,
    p: f64,
) -> f64 {
    (num_states as f64 * num_actions as f64 * total_steps as f64 * num_agents as f64 / p).ln()
}

/// Run-wide learner constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub bonus_scale: f64,
    pub iota: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    id: usize,
    params: LearnerParams,
    clique_size: usize,
    q: QTable,
    v: Vec<f64>,
    obs_count: Vec<u64>,
    visit_count: Vec<u64>,
    updates: u64,
}

impl AgentState {
    pub fn new(id: usize, params: LearnerParams, clique_size: usize) -> Result<Self> {
        let LearnerParams {
            num_states: s,
            num_actions: a,
            horizon: h,
            ..
        } = params;
        if s == 0 || a == 0 || h == 0 {
            return Err(Error::param("S, A and H must be positive"));
        }
        if clique_size == 0 {
            return Err(Error::param("clique size must be positive"));
        }
        if !(params.bonus_scale > 0.0) {
            return Err(Error::param("bonus scale must be positive"));
        }
        let hf = h as f64;
        let mut v = vec![hf; (h + 1) * s];
        v[h * s..].fill(0.0);
        Ok(Self {
            id,
            params,
            clique_size,
            q: QTable::filled(h, s, a, hf),
            v,
            obs_count: vec![0; h * s * a],
            visit_count: vec![0; h * s * a],
            updates: 0,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn params(&self) -> &LearnerParams {
        &self.params
    }

    pub fn clique_size(&self) -> usize {
        self.clique_size
    }

    #[inline]
    fn cell(&self, h: usize, x: usize, a: usize) -> usize {
        (h * self.params.num_states + x) * self.params.num_actions + a
    }

    /// Action values `Q[h][x][·]`.
    pub fn q_row(&self, h: usize, x: usize) -> &[f64] {
        self.q.row(h, x)
    }

    pub fn q(&self, h: usize, x: usize, a: usize) -> f64 {
        self.q.get(h, x, a)
    }

    /// `V[h][x]` for `h` in `0..=H`; row `H` is identically zero.
    pub fn v(&self, h: usize, x: usize) -> f64 {
        self.v[h * self.params.num_states + x]
    }

    pub fn obs_count(&self, h: usize, x: usize, a: usize) -> u64 {
        self.obs_count[self.cell(h, x, a)]
    }

    pub fn visit_count(&self, h: usize, x: usize, a: usize) -> u64 {
        self.visit_count[self.cell(h, x, a)]
    }

    /// Total Q-updates applied so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    /// Lowest-index greedy action.
    pub fn select_action(&self, h: usize, x: usize) -> usize {
        argmax(self.q_row(h, x))
    }

    pub fn bonus(&self, t: u64) -> Result<f64> {
        exploration_bonus(self.params.bonus_scale, self.params.iota, self.params.horizon, self.clique_size, t)
    }

    /// Folds one `(r, x′)` sample for cell `(h, x, a)` into the tables.
    pub fn apply_sample(&mut self, h: usize, x: usize, a: usize, r: f64, x2: usize) -> Result<()> {
        let p = self.params;
        if h >= p.horizon || x >= p.num_states || a >= p.num_actions || x2 >= p.num_states {
            return Err(Error::param(format!(
                "sample (h={h}, x={x}, a={a}, x2={x2}) out of bounds"
            )));
        }
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::param(format!("reward {r} outside [0, 1]")));
        }
        let cell = self.cell(h, x, a);
        self.obs_count[cell] += 1;
        let t = self.obs_count[cell];
        let alpha = learning_rate(t, p.horizon)?;
        let bonus = self.bonus(t)?;
        let target = r + self.v(h + 1, x2) + bonus;
        let q = &mut self.q.as_mut_slice()[cell];
        *q = (1.0 - alpha) * *q + alpha * target;

        let best = self.q_row(h, x).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.v[h * p.num_states + x] = best.min(p.horizon as f64);
        self.updates += 1;
        Ok(())
    }

    /// Applies the agent's own sample, then every delivered sample in the
    /// order given.
    pub fn process_step(&mut self, own: &SampleMsg, delivered: &[SampleMsg]) -> Result<()> {
        if own.origin != self.id {
            return Err(Error::param(format!(
                "agent {} handed a sample from agent {}",
                self.id, own.origin
            )));
        }
        self.apply_sample(own.step, own.state, own.action, own.reward, own.next_state)?;
        let cell = self.cell(own.step, own.state, own.action);
        self.visit_count[cell] += 1;
        for m in delivered {
            self.apply_sample(m.step, m.state, m.action, m.reward, m.next_state)?;
        }
        Ok(())
    }
}

/// Index of the first maximum; comparison is strict so earlier entries win ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &q) in values.iter().enumerate().skip(1) {
        if q > values[best] {
            best = i;
        }
    }
    best
}
