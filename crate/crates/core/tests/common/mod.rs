#![allow(dead_code)]

use marl_core::{EnvRng, EpisodicMdp};

/// Single-agent UCB-Hoeffding learner that only reads the MDP tables.
pub struct ReferenceLearner {
    s: usize,
    a: usize,
    h: usize,
    c: f64,
    iota: f64,
    q: Vec<f64>,
    v: Vec<f64>,
    n: Vec<u64>,
}

impl ReferenceLearner {
    pub fn new(s: usize, a: usize, h: usize, c: f64, iota: f64) -> Self {
        let hf = h as f64;
        let mut v = vec![hf; (h + 1) * s];
        for x in 0..s {
            v[h * s + x] = 0.0;
        }
        Self {
            s,
            a,
            h,
            c,
            iota,
            q: vec![hf; h * s * a],
            v,
            n: vec![0; h * s * a],
        }
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn act(&self, h: usize, x: usize) -> usize {
        let base = (h * self.s + x) * self.a;
        let mut best = 0;
        for b in 1..self.a {
            if self.q[base + b] > self.q[base + best] {
                best = b;
            }
        }
        best
    }

    pub fn update(&mut self, h: usize, x: usize, a: usize, r: f64, x2: usize) {
        let hf = self.h as f64;
        let i = (h * self.s + x) * self.a + a;
        self.n[i] += 1;
        let t = self.n[i] as f64;
        let alpha = (hf + 1.0) / (hf + t);
        let bonus = self.c * (hf * hf * hf * self.iota / t).sqrt();
        self.q[i] = (1.0 - alpha) * self.q[i] + alpha * (r + self.v[(h + 1) * self.s + x2] + bonus);
        let base = (h * self.s + x) * self.a;
        let mut best = self.q[base];
        for b in 1..self.a {
            if self.q[base + b] > best {
                best = self.q[base + b];
            }
        }
        self.v[h * self.s + x] = if best < hf { best } else { hf };
    }
}

/// Inverse-CDF draw with strict thresholds.
pub fn draw_next(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap()
}

/// Plays `episodes` episodes and hands the Q-table to `observe` after each.
pub fn run_reference(
    mdp: &EpisodicMdp,
    c: f64,
    iota: f64,
    episodes: usize,
    start: Option<usize>,
    rng: &mut EnvRng,
    mut observe: impl FnMut(usize, &[f64]),
) {
    let (s, a, h) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut learner = ReferenceLearner::new(s, a, h, c, iota);
    for k in 0..episodes {
        let mut x = match start {
            Some(x) => x,
            None => rng.index(s),
        };
        for step in 0..h {
            let act = learner.act(step, x);
            let x2 = draw_next(mdp.transition_row(step, x, act), rng.uniform());
            learner.update(step, x, act, mdp.reward(step, x, act), x2);
            x = x2;
        }
        observe(k, learner.q());
    }
}

/// Expected return of a deterministic policy from `(h, x)`, summed over every
/// trajectory forward in time.
pub fn forward_value(mdp: &EpisodicMdp, policy: &[usize], h: usize, x: usize) -> f64 {
    fn walk(mdp: &EpisodicMdp, policy: &[usize], h: usize, x: usize, prob: f64, ret: f64, acc: &mut f64) {
        if h == mdp.horizon() {
            *acc += prob * ret;
            return;
        }
        let a = policy[h * mdp.num_states() + x];
        let r = mdp.reward(h, x, a);
        for (x2, &p) in mdp.transition_row(h, x, a).iter().enumerate() {
            if p > 0.0 {
                walk(mdp, policy, h + 1, x2, prob * p, ret + r, acc);
            }
        }
    }
    let mut acc = 0.0;
    walk(mdp, policy, h, x, 1.0, 0.0, &mut acc);
    acc
}

/// Best value at every `(h, x)` over all `A^(S·H)` deterministic Markov policies.
pub fn brute_force_optimum(mdp: &EpisodicMdp) -> Vec<f64> {
    let (s, a, h) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let cells = s * h;
    let count = a.pow(cells as u32);
    let mut best = vec![f64::NEG_INFINITY; cells];
    let mut policy = vec![0; cells];
    for code in 0..count {
        let mut rest = code;
        for slot in policy.iter_mut() {
            *slot = rest % a;
            rest /= a;
        }
        for step in 0..h {
            for x in 0..s {
                let v = forward_value(mdp, &policy, step, x);
                let cell = &mut best[step * s + x];
                if v > *cell {
                    *cell = v;
                }
            }
        }
    }
    best
}

/// Shapes `(S, A, H)` with `S >= 2` and `S·A·H <= 8`.
pub fn small_shapes() -> Vec<(usize, usize, usize)> {
    let mut shapes = Vec::new();
    for s in 2..=8 {
        for a in 1..=4 {
            for h in 1..=4 {
                if s * a * h <= 8 {
                    shapes.push((s, a, h));
                }
            }
        }
    }
    shapes
}

/// Compares backward induction with policy enumeration on `instances` random
/// small MDPs; returns the largest absolute difference.
pub fn dp_vs_enumeration(instances: usize, seed: u64) -> Result<f64, String> {
    use marl_core::{evaluate_policy, generate_random_mdp, optimal_values};
    let shapes = small_shapes();
    let mut rng = EnvRng::new(seed);
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let (s, a, h) = shapes[i % shapes.len()];
        let rho = [0.1, 1.0, 10.0][i % 3];
        let mdp = generate_random_mdp(s, a, h, rho, i % 2 == 0, &mut rng).map_err(|e| e.to_string())?;
        let sol = optimal_values(&mdp);
        let brute = brute_force_optimum(&mdp);
        let v = evaluate_policy(&mdp, &sol.policy).map_err(|e| e.to_string())?;
        for step in 0..h {
            for x in 0..s {
                let dp = sol.v.get(step, x);
                let err = (dp - brute[step * s + x]).abs().max((v.get(step, x) - dp).abs());
                if err > 1e-12 {
                    return Err(format!("instance {i} (S={s}, A={a}, H={h}) at ({step},{x}): error {err:e}"));
                }
                worst = worst.max(err);
            }
        }
    }
    Ok(worst)
}

/// Monte-Carlo check of exact policy evaluation; returns the largest
/// `|mean − exact| / se` over the instances.
pub fn evaluation_vs_monte_carlo(instances: u64, rollouts: usize) -> Result<f64, String> {
    use marl_core::oracle::rollout_return;
    use marl_core::{evaluate_policy, generate_random_mdp, Policy};
    let mut worst: f64 = 0.0;
    for inst in 0..instances {
        let mut rng = EnvRng::new(700 + inst);
        let mdp = generate_random_mdp(6, 3, 4, 0.3, inst % 2 == 1, &mut rng).map_err(|e| e.to_string())?;
        let actions = (0..24).map(|_| rng.index(3)).collect();
        let policy = Policy::new(4, 6, actions).map_err(|e| e.to_string())?;
        let exact = evaluate_policy(&mdp, &policy).map_err(|e| e.to_string())?.get(0, 0);
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..rollouts {
            let g = rollout_return(&mdp, &policy, 0, &mut rng).map_err(|e| e.to_string())?;
            sum += g;
            sq += g * g;
        }
        let n = rollouts as f64;
        let mean = sum / n;
        let var = (sq / n - mean * mean).max(0.0) * n / (n - 1.0);
        let se = (var / n).sqrt();
        let z = if se > 0.0 { (mean - exact).abs() / se } else { 0.0 };
        if z > 3.0 || (se == 0.0 && (mean - exact).abs() > 1e-12) {
            return Err(format!("instance {inst}: mc {mean} vs exact {exact} (se {se:e})"));
        }
        worst = worst.max(z);
    }
    Ok(worst)
}
