//! Decentralized multi-agent episodic Q-learning.
//!
//! Every agent runs optimistic tabular Q-learning (UCB-Hoeffding bonuses) on
//! its own copy of a shared finite-horizon MDP and floods its transition
//! samples to the agents within `gamma` hops of it on a communication
//! graph. The exact dynamic-programming oracle in [`oracle`] measures
//! regret, and [`harness`] runs the γ-sweep and agent-count-sweep
//! experiments.

pub mod agent;
pub mod bus;
pub mod error;
pub mod graph;
pub mod harness;
pub mod mdp;
pub mod oracle;
pub mod rng;
pub mod table;

pub use agent::{exploration_bonus, learning_rate, AgentState, LearnerParams};
pub use bus::{Delivery, MessageBus, MessageId, SampleMsg};
pub use error::{Error, Result};
pub use graph::{build_graph, build_r_ary_tree, greedy_clique_cover, power_graph, CliqueCover, CommGraph};
pub use mdp::{generate_random_mdp, EpisodicMdp};
pub use oracle::{
    evaluate_policy, greedy_policy_of, offline_baseline, optimal_values, OptimalSolution, Policy,
    RegretLedger,
};
pub use rng::EnvRng;
pub use table::{QSnapshot, QTable};
