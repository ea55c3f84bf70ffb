//! Finite-horizon tabular MDPs.
//!
//! Steps are zero-based internally: `h` ranges over `0..horizon`. Tables are
//! stored flat in row-major `[h][x][a]` order (transitions carry one more
//! trailing axis over next states).

use std::path::Path;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::EnvRng;

const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    time_varying: bool,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    nominal_initial_state: usize,
    resampled_rows: usize,
}

impl EpisodicMdp {
    /// Builds an MDP from nested `[h][x][a]` tables, checking every invariant.
    pub fn from_tables(
        transitions: Vec<Vec<Vec<Vec<f64>>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        time_varying: bool,
    ) -> Result<Self> {
        let horizon = transitions.len();
        if horizon == 0 || rewards.len() != horizon {
            return Err(Error::param("transition and reward tables need the same positive horizon"));
        }
        let num_states = transitions[0].len();
        let num_actions = transitions[0].first().map_or(0, Vec::len);
        if num_states == 0 || num_actions == 0 {
            return Err(Error::param("MDP needs at least one state and one action"));
        }

        let mut flat_p = Vec::with_capacity(horizon * num_states * num_actions * num_states);
        let mut flat_r = Vec::with_capacity(horizon * num_states * num_actions);
        for (h, (p_h, r_h)) in transitions.iter().zip(&rewards).enumerate() {
            if p_h.len() != num_states || r_h.len() != num_states {
                return Err(Error::param(format!("step {h}: expected {num_states} state rows")));
            }
            for (x, (p_hx, r_hx)) in p_h.iter().zip(r_h).enumerate() {
                if p_hx.len() != num_actions || r_hx.len() != num_actions {
                    return Err(Error::param(format!("step {h}, state {x}: expected {num_actions} actions")));
                }
                for (a, row) in p_hx.iter().enumerate() {
                    if row.len() != num_states {
                        return Err(Error::param(format!(
                            "P[{h}][{x}][{a}] has {} entries, expected {num_states}",
                            row.len()
                        )));
                    }
                    check_row(row).map_err(|e| Error::param(format!("P[{h}][{x}][{a}]: {e}")))?;
                    flat_p.extend_from_slice(row);
                }
                for (a, &r) in r_hx.iter().enumerate() {
                    if !(0.0..=1.0).contains(&r) {
                        return Err(Error::param(format!("r[{h}][{x}][{a}] = {r} outside [0, 1]")));
                    }
                    flat_r.push(r);
                }
            }
        }

        Ok(Self {
            num_states,
            num_actions,
            horizon,
            time_varying,
            transitions: flat_p,
            rewards: flat_r,
            nominal_initial_state: 0,
            resampled_rows: 0,
        })
    }

    pub fn with_nominal_initial_state(mut self, x: usize) -> Result<Self> {
        if x >= self.num_states {
            return Err(Error::param(format!("nominal state {x} out of range (S = {})", self.num_states)));
        }
        self.nominal_initial_state = x;
        Ok(self)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn time_varying(&self) -> bool {
        self.time_varying
    }

    pub fn nominal_initial_state(&self) -> usize {
        self.nominal_initial_state
    }

    /// Rows whose Gamma draws all underflowed to zero during generation and
    /// had to be drawn again.
    pub fn resampled_rows(&self) -> usize {
        self.resampled_rows
    }

    #[inline]
    fn cell(&self, h: usize, x: usize, a: usize) -> usize {
        (h * self.num_states + x) * self.num_actions + a
    }

    /// Next-state distribution `P[h][x][a]`. Indices are not checked beyond
    /// slice bounds; use [`EpisodicMdp::step`] for validated access.
    #[inline]
    pub fn transition_row(&self, h: usize, x: usize, a: usize) -> &[f64] {
        let start = self.cell(h, x, a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    #[inline]
    pub fn reward(&self, h: usize, x: usize, a: usize) -> f64 {
        self.rewards[self.cell(h, x, a)]
    }

    pub fn check_indices(&self, h: usize, x: usize, a: usize) -> Result<()> {
        if h >= self.horizon || x >= self.num_states || a >= self.num_actions {
            return Err(Error::param(format!(
                "index (h={h}, x={x}, a={a}) out of bounds for H={}, S={}, A={}",
                self.horizon, self.num_states, self.num_actions
            )));
        }
        Ok(())
    }

    /// Takes action `a` in state `x` at step `h`, returning the reward and a
    /// next state drawn from `P[h][x][a]`.
    pub fn step(&self, h: usize, x: usize, a: usize, rng: &mut EnvRng) -> Result<(f64, usize)> {
        self.check_indices(h, x, a)?;
        let next = sample_index(self.transition_row(h, x, a), rng.uniform());
        Ok((self.reward(h, x, a), next))
    }

    pub fn to_json(&self) -> MdpDocument {
        let (s, a, h) = (self.num_states, self.num_actions, self.horizon);
        let transitions = (0..h)
            .map(|hh| {
                (0..s)
                    .map(|x| (0..a).map(|aa| self.transition_row(hh, x, aa).to_vec()).collect())
                    .collect()
            })
            .collect();
        let rewards = (0..h)
            .map(|hh| (0..s).map(|x| (0..a).map(|aa| self.reward(hh, x, aa)).collect()).collect())
            .collect();
        MdpDocument {
            num_states: s,
            num_actions: a,
            horizon: h,
            time_varying: self.time_varying,
            transitions,
            rewards,
            nominal_initial_state: Some(self.nominal_initial_state),
        }
    }

    pub fn from_json(doc: MdpDocument) -> Result<Self> {
        if doc.transitions.len() != doc.horizon
            || doc.transitions.first().map_or(0, Vec::len) != doc.num_states
            || doc.transitions.first().and_then(|p| p.first()).map_or(0, Vec::len) != doc.num_actions
        {
            return Err(Error::Parse("declared S/A/H disagree with table shapes".into()));
        }
        let mdp = Self::from_tables(doc.transitions, doc.rewards, doc.time_varying)?;
        mdp.with_nominal_initial_state(doc.nominal_initial_state.unwrap_or(0))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_json())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(serde_json::from_str(&text)?)
    }
}

/// On-disk form of an [`EpisodicMdp`], nested `[h][x][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpDocument {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub time_varying: bool,
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    pub rewards: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_initial_state: Option<usize>,
}

fn check_row(row: &[f64]) -> std::result::Result<(), String> {
    if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(format!("entry {p} is not a nonnegative probability"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(format!("row sums to {sum}"));
    }
    Ok(())
}

/// Inverse-CDF lookup in ascending index order. Thresholds use strict `<`,
/// so an index with zero mass is never returned.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut cumulative = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    // Rounding left the total just under u: fall back to the last supported index.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Draws a random MDP: every transition row is symmetric-Dirichlet(`rho`) over
/// the `num_states` outcomes, every reward is Uniform[0, 1]. With
/// `time_varying == false` the step-0 tables are copied to every step.
pub fn generate_random_mdp(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    rho: f64,
    time_varying: bool,
    rng: &mut EnvRng,
) -> Result<EpisodicMdp> {
    if num_states < 2 {
        return Err(Error::param(format!("need S >= 2, got {num_states}")));
    }
    if num_actions == 0 || horizon == 0 {
        return Err(Error::param("A and H must be positive"));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param(format!("Dirichlet shape must be positive, got {rho}")));
    }
    let gamma = Gamma::new(rho, 1.0).map_err(|e| Error::param(e.to_string()))?;

    let drawn_steps = if time_varying { horizon } else { 1 };
    let cells = num_states * num_actions;
    let mut transitions = Vec::with_capacity(horizon * cells * num_states);
    let mut rewards = Vec::with_capacity(horizon * cells);
    let mut resampled_rows = 0;

    for _ in 0..drawn_steps {
        for _ in 0..cells {
            loop {
                let row: Vec<f64> = (0..num_states).map(|_| gamma.sample(rng)).collect();
                let total: f64 = row.iter().sum();
                if total > 0.0 && total.is_finite() {
                    transitions.extend(row.iter().map(|g| g / total));
                    break;
                }
                resampled_rows += 1;
            }
        }
        for _ in 0..cells {
            rewards.push(rng.uniform());
        }
    }
    if !time_varying {
        let p0 = transitions.clone();
        let r0 = rewards.clone();
        for _ in 1..horizon {
            transitions.extend_from_slice(&p0);
            rewards.extend_from_slice(&r0);
        }
    }
    if resampled_rows > 0 {
        log::debug!("redrew {resampled_rows} Dirichlet rows after Gamma underflow");
    }

    Ok(EpisodicMdp {
        num_states,
        num_actions,
        horizon,
        time_varying,
        transitions,
        rewards,
        nominal_initial_state: 0,
        resampled_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_det() -> EpisodicMdp {
        EpisodicMdp::from_tables(
            vec![vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]]],
            vec![vec![vec![0.25], vec![0.75]]],
            false,
        )
        .unwrap()
    }

    #[test]
    fn rows_are_stochastic() {
        let mut rng = EnvRng::new(7);
        let mdp = generate_random_mdp(10, 2, 5, 0.01, true, &mut rng).unwrap();
        for h in 0..5 {
            for x in 0..10 {
                for a in 0..2 {
                    let row = mdp.transition_row(h, x, a);
                    assert!(row.iter().all(|&p| p >= 0.0));
                    assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                    assert!((0.0..=1.0).contains(&mdp.reward(h, x, a)));
                }
            }
        }
    }

    #[test]
    fn time_invariant_copies_step_zero() {
        let mut rng = EnvRng::new(3);
        let mdp = generate_random_mdp(4, 3, 6, 0.5, false, &mut rng).unwrap();
        for h in 1..6 {
            for x in 0..4 {
                for a in 0..3 {
                    assert_eq!(mdp.transition_row(h, x, a), mdp.transition_row(0, x, a));
                    assert_eq!(mdp.reward(h, x, a), mdp.reward(0, x, a));
                }
            }
        }
    }

    // The Dirichlet(0.01) figure below was established independently with
    // numpy/scipy (log-Gamma sampling, 4e5 rows):
    // P(max entry > 0.9) = 0.8208, P(max entry > 0.5) = 0.9947.
    #[test]
    fn small_rho_is_near_deterministic() {
        let mut rng = EnvRng::new(11);
        let mdp = generate_random_mdp(10, 2, 500, 0.01, true, &mut rng).unwrap();
        let mut above_09 = 0usize;
        let mut above_05 = 0usize;
        let mut rows = 0usize;
        for h in 0..500 {
            for x in 0..10 {
                for a in 0..2 {
                    let max = mdp.transition_row(h, x, a).iter().cloned().fold(0.0, f64::max);
                    above_09 += usize::from(max > 0.9);
                    above_05 += usize::from(max > 0.5);
                    rows += 1;
                }
            }
        }
        let f09 = above_09 as f64 / rows as f64;
        let f05 = above_05 as f64 / rows as f64;
        // 3-sigma binomial band around the reference fractions at n = 1e4.
        assert!((f09 - 0.8208).abs() < 3.0 * (0.8208f64 * 0.1792 / rows as f64).sqrt(), "{f09}");
        assert!((f05 - 0.9947).abs() < 3.0 * (0.9947f64 * 0.0053 / rows as f64).sqrt(), "{f05}");
    }

    #[test]
    fn large_rho_is_near_uniform() {
        let mut rng = EnvRng::new(5);
        let mdp = generate_random_mdp(2, 1, 1, 1e6, false, &mut rng).unwrap();
        for &p in mdp.transition_row(0, 0, 0) {
            assert!((p - 0.5).abs() < 1e-2);
        }
    }

    #[test]
    fn same_seed_same_mdp() {
        let a = generate_random_mdp(6, 3, 4, 0.1, true, &mut EnvRng::new(99)).unwrap();
        let b = generate_random_mdp(6, 3, 4, 0.1, true, &mut EnvRng::new(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = EnvRng::new(0);
        assert!(generate_random_mdp(1, 2, 5, 0.1, false, &mut rng).is_err());
        assert!(generate_random_mdp(3, 0, 5, 0.1, false, &mut rng).is_err());
        assert!(generate_random_mdp(3, 2, 0, 0.1, false, &mut rng).is_err());
        assert!(generate_random_mdp(3, 2, 5, 0.0, false, &mut rng).is_err());
        assert!(generate_random_mdp(3, 2, 5, -1.0, false, &mut rng).is_err());
    }

    #[test]
    fn deterministic_row_always_taken() {
        let mdp = two_state_det();
        let mut rng = EnvRng::new(1);
        for _ in 0..1000 {
            assert_eq!(mdp.step(0, 0, 0, &mut rng).unwrap(), (0.25, 1));
            assert_eq!(mdp.step(0, 1, 0, &mut rng).unwrap(), (0.75, 0));
        }
    }

    #[test]
    fn step_rejects_bad_indices() {
        let mdp = two_state_det();
        let mut rng = EnvRng::new(1);
        assert!(mdp.step(1, 0, 0, &mut rng).is_err());
        assert!(mdp.step(0, 2, 0, &mut rng).is_err());
        assert!(mdp.step(0, 0, 1, &mut rng).is_err());
    }

    #[test]
    fn zero_mass_never_selected() {
        let probs = [0.0, 0.5, 0.0, 0.5, 0.0];
        for u in [0.0, 1e-300, 0.25, 0.5, 0.999_999_999, 1.0 - f64::EPSILON] {
            let i = sample_index(&probs, u);
            assert!(probs[i] > 0.0, "u={u} picked {i}");
        }
        // u at or beyond the rounded total falls back to the last supported state.
        assert_eq!(sample_index(&probs, 1.0), 3);
    }

    #[test]
    fn empirical_frequencies_match_row() {
        let mut rng = EnvRng::new(21);
        let mdp = generate_random_mdp(5, 1, 1, 1.0, false, &mut rng).unwrap();
        let row = mdp.transition_row(0, 2, 0).to_vec();
        let n = 100_000;
        let mut counts = vec![0usize; 5];
        for _ in 0..n {
            counts[mdp.step(0, 2, 0, &mut rng).unwrap().1] += 1;
        }
        for (c, p) in counts.iter().zip(&row) {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() <= 3.0 * sigma + 1e-9, "{counts:?} vs {row:?}");
        }
    }

    #[test]
    fn from_tables_validates() {
        let bad_sum = EpisodicMdp::from_tables(vec![vec![vec![vec![0.5, 0.4]]; 2]], vec![vec![vec![0.1]; 2]], false);
        assert!(bad_sum.is_err());
        let bad_reward = EpisodicMdp::from_tables(vec![vec![vec![vec![0.5, 0.5]]; 2]], vec![vec![vec![1.5]; 2]], false);
        assert!(bad_reward.is_err());
        let negative = EpisodicMdp::from_tables(vec![vec![vec![vec![1.5, -0.5]]; 2]], vec![vec![vec![0.1]; 2]], false);
        assert!(negative.is_err());
    }

    #[test]
    fn json_round_trip() {
        let mdp = generate_random_mdp(3, 2, 2, 0.3, true, &mut EnvRng::new(4))
            .unwrap()
            .with_nominal_initial_state(2)
            .unwrap();
        let text = serde_json::to_string(&mdp.to_json()).unwrap();
        assert!(text.contains("\"S\":3") && text.contains("\"time_varying\":true"));
        let back = EpisodicMdp::from_json(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.to_json(), mdp.to_json());
        assert_eq!(back.nominal_initial_state(), 2);
    }
}
