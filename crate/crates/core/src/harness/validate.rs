//! Invariant checks behind the `validate` subcommand, plus the step-size
//! weight identities they rely on.

use std::sync::Arc;

use crate::agent::learning_rate;
use crate::bus::{MessageBus, SampleMsg};
use crate::graph::{greedy_clique_cover, power_graph, CommGraph};
use crate::harness::config::RunConfig;
use crate::harness::run::{build_mdp, effective_gamma, run_single, trial_seed};
use crate::oracle::{evaluate_policy, greedy_policy_of, optimal_values, Policy};
use crate::rng::EnvRng;

/// Weights `α_t^i` for `i = 1..=t` (index `i - 1`), built by the recursion
/// `α_t^i = α_{t-1}^i (1 − α_t)`, `α_t^t = α_t`.
pub fn step_weights(t: u64, horizon: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(t as usize);
    for s in 1..=t {
        let alpha = learning_rate(s, horizon).expect("s >= 1");
        for x in &mut w {
            *x *= 1.0 - alpha;
        }
        w.push(alpha);
    }
    w
}

/// `Σ_{t=i}^{t_max} α_t^i`.
pub fn weight_tail_sum(i: u64, horizon: usize, t_max: u64) -> f64 {
    let mut w = learning_rate(i, horizon).expect("i >= 1");
    let mut total = 0.0;
    let mut t = i;
    loop {
        total += w;
        if t == t_max {
            return total;
        }
        t += 1;
        w *= 1.0 - learning_rate(t, horizon).expect("t >= 1");
    }
}

/// First violation of the weight bounds for `t <= t_max`:
/// `1/√t ≤ Σ α_t^i/√i ≤ 2/√t`, `max_i α_t^i ≤ 2H/t`, `Σ (α_t^i)² ≤ 2H/t`.
pub fn check_weight_bounds(horizon: usize, t_max: u64) -> Result<(), String> {
    let h = horizon as f64;
    let mut w: Vec<f64> = Vec::new();
    for t in 1..=t_max {
        let alpha = learning_rate(t, horizon).expect("t >= 1");
        for x in &mut w {
            *x *= 1.0 - alpha;
        }
        w.push(alpha);
        let tf = t as f64;
        let scaled: f64 = w.iter().enumerate().map(|(i, a)| a / ((i + 1) as f64).sqrt()).sum();
        if scaled < 1.0 / tf.sqrt() || scaled > 2.0 / tf.sqrt() {
            return Err(format!("H={horizon}, t={t}: Σ α/√i = {scaled}"));
        }
        let max = w.iter().copied().fold(0.0, f64::max);
        if max > 2.0 * h / tf {
            return Err(format!("H={horizon}, t={t}: max α = {max}"));
        }
        let sq: f64 = w.iter().map(|a| a * a).sum();
        if sq > 2.0 * h / tf {
            return Err(format!("H={horizon}, t={t}: Σ α² = {sq}"));
        }
        let norm: f64 = w.iter().sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(format!("H={horizon}, t={t}: weights sum to {norm}"));
        }
    }
    Ok(())
}

/// Exhaustive flood check on `graph`: a sample created by `u` at step `h`
/// reaches `v` iff `d(u, v) <= gamma` and `h + d < horizon`, exactly once,
/// during the exchange of step `h + d`. Returns the number of
/// `(origin, target, step)` cases checked.
pub fn check_reachability(graph: &CommGraph, gamma: usize, horizon: usize) -> Result<usize, String> {
    let graph = Arc::new(graph.clone());
    let n = graph.num_agents();
    let mut cases = 0;
    for origin in 0..n {
        for created in 0..horizon {
            let mut bus = MessageBus::new(graph.clone(), gamma);
            let mut arrivals = vec![Vec::new(); n];
            for round in 0..horizon {
                if round == created {
                    bus.broadcast(SampleMsg {
                        step: created,
                        episode: 0,
                        origin,
                        state: 0,
                        action: 0,
                        next_state: 0,
                        reward: 0.0,
                        hops_remaining: gamma,
                    });
                }
                for (target, got) in bus.step_exchange().into_iter().enumerate() {
                    for msg in got {
                        if msg.origin == origin && msg.step == created {
                            arrivals[target].push(round);
                        }
                    }
                }
            }
            bus.end_episode();
            for (target, rounds) in arrivals.iter().enumerate() {
                cases += 1;
                if target == origin {
                    if !rounds.is_empty() {
                        return Err(format!("origin {origin} received its own sample"));
                    }
                    continue;
                }
                let expected = graph
                    .distance(origin, target)
                    .filter(|&d| d <= gamma && created + d < horizon)
                    .map(|d| created + d);
                let ok = match expected {
                    Some(at) => rounds.as_slice() == [at],
                    None => rounds.is_empty(),
                };
                if !ok {
                    return Err(format!(
                        "gamma={gamma}, origin={origin}, target={target}, created at step {created}: arrivals {rounds:?}, expected {expected:?}"
                    ));
                }
            }
        }
    }
    Ok(cases)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, result: Result<String, String>) -> CheckResult {
    match result {
        Ok(detail) => CheckResult { name, passed: true, detail },
        Err(detail) => CheckResult { name, passed: false, detail },
    }
}

/// Runs the invariant suite against the objects `config` would build.
pub fn validate_config(config: &RunConfig) -> Vec<CheckResult> {
    let mut results = Vec::new();
    if let Err(e) = config.validate() {
        results.push(check("config", Err(e.to_string())));
        return results;
    }
    results.push(check("config", Ok("valid".into())));

    let seed = trial_seed(config.seed, 0);
    let mdp = build_mdp(config, seed);
    results.push(check(
        "mdp",
        mdp.as_ref().map(|m| format!("S={} A={} H={}", m.num_states(), m.num_actions(), m.horizon())).map_err(|e| e.to_string()),
    ));

    match config.graph_spec.build(config.num_agents) {
        Ok(graph) => {
            let gamma = effective_gamma(config.gamma, &graph, config.horizon);
            results.push(check("graph-metric", graph_metric(&graph)));
            results.push(check("clique-cover", cover_valid(&graph, gamma)));
            results.push(check(
                "flood-reachability",
                check_reachability(&graph, gamma, config.horizon).map(|n| format!("{n} cases")),
            ));
        }
        Err(e) => results.push(check("graph", Err(e.to_string()))),
    }

    results.push(check(
        "step-weights",
        check_weight_bounds(config.horizon, 1000).map(|_| "t <= 1000".into()),
    ));

    if let Ok(mdp) = &mdp {
        results.push(check("dp-optimality", dp_dominates(mdp, seed)));
    }

    let short = RunConfig {
        episodes: config.episodes.min(20),
        trials: 1,
        rollout_interval: config.rollout_interval.min(config.episodes.min(20)),
        ..config.clone()
    };
    let det = match (run_single(&short), run_single(&short)) {
        (Ok(a), Ok(b)) if a == b => Ok(format!("{} episodes replayed identically", short.episodes)),
        (Ok(_), Ok(_)) => Err("replay diverged".into()),
        (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
    };
    results.push(check("determinism", det));
    results
}

fn graph_metric(g: &CommGraph) -> Result<String, String> {
    let n = g.num_agents();
    for u in 0..n {
        if g.distance(u, u) != Some(0) {
            return Err(format!("d({u},{u}) != 0"));
        }
        for v in 0..n {
            if g.distance(u, v) != g.distance(v, u) {
                return Err(format!("d({u},{v}) asymmetric"));
            }
            for w in 0..n {
                if let (Some(a), Some(b)) = (g.distance(u, w), g.distance(w, v)) {
                    if g.distance(u, v).is_none_or(|d| d > a + b) {
                        return Err(format!("triangle inequality fails at ({u},{w},{v})"));
                    }
                }
            }
        }
    }
    Ok(format!("M={n}, D(G)={}", g.diameter()))
}

fn cover_valid(g: &CommGraph, gamma: usize) -> Result<String, String> {
    let cover = greedy_clique_cover(&power_graph(g, gamma));
    let mut count = vec![0; g.num_agents()];
    for clique in &cover.cliques {
        for &a in clique {
            count[a] += 1;
            for &b in clique {
                if a != b && !matches!(g.distance(a, b), Some(d) if d <= gamma) {
                    return Err(format!("agents {a} and {b} share a clique at distance > {gamma}"));
                }
            }
        }
    }
    if count.iter().any(|&c| c != 1) {
        return Err("cover is not a partition".into());
    }
    Ok(format!("gamma={gamma}, {} cliques", cover.num_cliques()))
}

fn dp_dominates(mdp: &crate::mdp::EpisodicMdp, seed: u64) -> Result<String, String> {
    let sol = optimal_values(mdp);
    let (s, a, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let v = evaluate_policy(mdp, &greedy_policy_of(&sol.q)).map_err(|e| e.to_string())?;
    let mut rng = EnvRng::with_stream(seed, u64::MAX);
    for h in 0..horizon {
        for x in 0..s {
            if (v.get(h, x) - sol.v.get(h, x)).abs() > 1e-12 {
                return Err(format!("greedy(Q*) differs from V* at ({h},{x})"));
            }
        }
    }
    for _ in 0..100 {
        let actions = (0..horizon * s).map(|_| rng.index(a)).collect();
        let policy = Policy::new(horizon, s, actions).map_err(|e| e.to_string())?;
        let vp = evaluate_policy(mdp, &policy).map_err(|e| e.to_string())?;
        for h in 0..horizon {
            for x in 0..s {
                if vp.get(h, x) > sol.v.get(h, x) + 1e-9 {
                    return Err(format!("random policy beats V* at ({h},{x})"));
                }
            }
        }
    }
    Ok("V* dominates 100 random policies".into())
}
