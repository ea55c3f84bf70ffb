use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_r_ary_tree, complete_graph, path_graph, CommGraph};

/// Communication network family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSpec {
    RAryTree { r: usize },
    Complete,
    Path,
    /// Edge-list file; its agent count must equal `M`.
    EdgeList(PathBuf),
}

impl GraphSpec {
    pub fn build(&self, num_agents: usize) -> Result<CommGraph> {
        match self {
            GraphSpec::RAryTree { r } => build_r_ary_tree(num_agents, *r),
            GraphSpec::Complete => complete_graph(num_agents),
            GraphSpec::Path => path_graph(num_agents),
            GraphSpec::EdgeList(path) => {
                let g = CommGraph::load_edge_list(path)?;
                if g.num_agents() != num_agents {
                    return Err(Error::param(format!(
                        "{} describes {} agents but M = {num_agents}",
                        path.display(),
                        g.num_agents()
                    )));
                }
                Ok(g)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Exact policy evaluation by backward induction.
    Exact,
    /// One sampled H-step rollout per checkpoint.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    DpOracle,
    OfflineBaseline,
}

/// Everything that determines a run. Serialized as the `--config` JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "K")]
    pub episodes: usize,
    #[serde(rename = "M")]
    pub num_agents: usize,
    pub gamma: usize,
    pub rho: f64,
    pub c: f64,
    pub p: f64,
    pub seed: u64,
    pub graph_spec: GraphSpec,
    pub fixed_initial_state: bool,
    pub nominal_initial_state: usize,
    pub rollout_interval: usize,
    pub trials: usize,
    pub clique_knowledge: bool,
    pub time_varying: bool,
    pub eval_mode: EvalMode,
    pub reference: Reference,
    pub offline_iters: usize,
    pub offline_epsilon: f64,
    pub offline_discount: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            num_states: 10,
            num_actions: 2,
            horizon: 5,
            episodes: 1000,
            num_agents: 13,
            gamma: 2,
            rho: 0.01,
            c: 1.0,
            p: 0.05,
            seed: 0,
            graph_spec: GraphSpec::RAryTree { r: 3 },
            fixed_initial_state: true,
            nominal_initial_state: 0,
            rollout_interval: 10,
            trials: 5,
            clique_knowledge: true,
            time_varying: false,
            eval_mode: EvalMode::Exact,
            reference: Reference::DpOracle,
            offline_iters: 1000,
            offline_epsilon: 0.2,
            offline_discount: 0.95,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("S", self.num_states),
            ("A", self.num_actions),
            ("H", self.horizon),
            ("K", self.episodes),
            ("M", self.num_agents),
            ("rollout_interval", self.rollout_interval),
            ("trials", self.trials),
            ("offline_iters", self.offline_iters),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::param(format!("{name} must be positive")));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::param(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::param(format!("c must be positive, got {}", self.c)));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::param(format!("p must lie in (0, 1), got {}", self.p)));
        }
        if self.nominal_initial_state >= self.num_states {
            return Err(Error::param(format!(
                "nominal_initial_state {} out of range for S = {}",
                self.nominal_initial_state, self.num_states
            )));
        }
        if let GraphSpec::RAryTree { r: 0 } = self.graph_spec {
            return Err(Error::param("tree branching factor must be positive"));
        }
        if !(0.0..=1.0).contains(&self.offline_epsilon) {
            return Err(Error::param("offline_epsilon must lie in [0, 1]"));
        }
        if !(self.offline_discount > 0.0 && self.offline_discount <= 1.0) {
            return Err(Error::param("offline_discount must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Total steps per agent, `T = K * H`.
    pub fn total_steps(&self) -> usize {
        self.episodes * self.horizon
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// 13 agents on a ternary tree.
    pub fn gamma_sweep_default() -> Self {
        Self::default()
    }

    /// Message life fixed at 2.
    pub fn agent_sweep_default() -> Self {
        Self {
            gamma: 2,
            ..Self::default()
        }
    }
}
