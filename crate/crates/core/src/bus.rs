//! Hop-limited flooding of transition samples.
//!
//! A sample broadcast at step `h` reaches an agent at hop distance `d` during
//! the exchange of step `h + d`, provided `d <= gamma` and the episode has not
//! ended. Each agent receives a given sample at most once per episode.

use std::collections::HashSet;
use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::graph::CommGraph;

/// One transition observed by one agent: `⟨h, k, m, x, a, x′, r⟩` plus the
/// number of further forwards it may take.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMsg {
    pub step: usize,
    pub episode: usize,
    pub origin: usize,
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: f64,
    pub hops_remaining: usize,
}

/// Network-wide identity of a sample. Field order gives the canonical
/// delivery order `(origin, step, episode)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MessageId {
    pub origin: usize,
    pub step: usize,
    pub episode: usize,
}

impl SampleMsg {
    pub fn id(&self) -> MessageId {
        MessageId {
            origin: self.origin,
            step: self.step,
            episode: self.episode,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Envelope {
    target: usize,
    sender: usize,
    msg: SampleMsg,
}

/// One delivery event, as written to the message trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Delivery {
    pub k: usize,
    pub h: usize,
    pub origin: usize,
    pub target: usize,
    pub x: usize,
    pub a: usize,
    pub x2: usize,
    pub r: f64,
    pub hops_left: usize,
    /// Step during whose exchange the sample arrived.
    pub delivered_at: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BusStats {
    pub deliveries: u64,
    pub duplicates: u64,
    /// Pending deliveries discarded at episode boundaries.
    pub dropped: u64,
}

#[derive(Debug, Clone)]
pub struct MessageBus {
    graph: Arc<CommGraph>,
    gamma: usize,
    staged: Vec<Envelope>,
    in_flight: Vec<Envelope>,
    seen: Vec<HashSet<MessageId>>,
    round: usize,
    stats: BusStats,
    received: Vec<u64>,
    trace: Option<Vec<Delivery>>,
}

impl MessageBus {
    pub fn new(graph: Arc<CommGraph>, gamma: usize) -> Self {
        let m = graph.num_agents();
        Self {
            graph,
            gamma,
            staged: Vec::new(),
            in_flight: Vec::new(),
            seen: vec![HashSet::new(); m],
            round: 0,
            stats: BusStats::default(),
            received: vec![0; m],
            trace: None,
        }
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn graph(&self) -> &CommGraph {
        &self.graph
    }

    pub fn stats(&self) -> BusStats {
        self.stats
    }

    /// Cumulative number of samples delivered to each agent (own samples excluded).
    pub fn received(&self) -> &[u64] {
        &self.received
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<Delivery> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Queues copies of a freshly observed sample for the origin's direct
    /// neighbors. The origin keeps its own sample, so it is marked seen there.
    pub fn broadcast(&mut self, mut msg: SampleMsg) {
        debug_assert!(msg.origin < self.seen.len());
        msg.hops_remaining = self.gamma;
        self.seen[msg.origin].insert(msg.id());
        if self.gamma == 0 {
            return;
        }
        let fwd = SampleMsg {
            hops_remaining: self.gamma - 1,
            ..msg
        };
        for &nb in self.graph.neighbors(msg.origin) {
            self.staged.push(Envelope {
                target: nb,
                sender: msg.origin,
                msg: fwd,
            });
        }
    }

    /// Runs one exchange round: delivers everything queued in earlier steps,
    /// forwards first-time arrivals that still have hops left, then promotes
    /// this step's broadcasts to in-flight. Returns each agent's new samples
    /// sorted by `(origin, step, episode)`.
    pub fn step_exchange(&mut self) -> Vec<Vec<SampleMsg>> {
        let m = self.seen.len();
        let mut delivered = vec![Vec::new(); m];
        let arriving = std::mem::take(&mut self.in_flight);
        let mut next = Vec::new();

        for env in arriving {
            if !self.seen[env.target].insert(env.msg.id()) {
                self.stats.duplicates += 1;
                continue;
            }
            self.stats.deliveries += 1;
            self.received[env.target] += 1;
            delivered[env.target].push(env.msg);
            if let Some(trace) = self.trace.as_mut() {
                trace.push(Delivery {
                    k: env.msg.episode,
                    h: env.msg.step,
                    origin: env.msg.origin,
                    target: env.target,
                    x: env.msg.state,
                    a: env.msg.action,
                    x2: env.msg.next_state,
                    r: env.msg.reward,
                    hops_left: env.msg.hops_remaining,
                    delivered_at: self.round,
                });
            }
            if env.msg.hops_remaining >= 1 {
                let fwd = SampleMsg {
                    hops_remaining: env.msg.hops_remaining - 1,
                    ..env.msg
                };
                for &nb in self.graph.neighbors(env.target) {
                    if nb != env.sender {
                        next.push(Envelope {
                            target: nb,
                            sender: env.target,
                            msg: fwd,
                        });
                    }
                }
            }
        }

        next.append(&mut self.staged);
        self.in_flight = next;
        self.round += 1;
        for list in &mut delivered {
            list.sort_by_key(SampleMsg::id);
        }
        delivered
    }

    /// Drops whatever is still pending and forgets the episode's seen sets.
    pub fn end_episode(&mut self) {
        let mut lost = HashSet::new();
        for env in self.in_flight.drain(..).chain(self.staged.drain(..)) {
            if !self.seen[env.target].contains(&env.msg.id()) {
                lost.insert((env.target, env.msg.id()));
            }
        }
        self.stats.dropped += lost.len() as u64;
        for s in &mut self.seen {
            s.clear();
        }
        self.round = 0;
    }

    pub fn pending(&self) -> usize {
        self.in_flight.len() + self.staged.len()
    }
}

/// Writes deliveries as line-delimited JSON.
pub fn write_trace<W: Write + ?Sized>(out: &mut W, deliveries: &[Delivery]) -> std::io::Result<()> {
    for d in deliveries {
        serde_json::to_writer(&mut *out, d)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, build_r_ary_tree, path_graph};

    fn msg(origin: usize, step: usize, episode: usize) -> SampleMsg {
        SampleMsg {
            step,
            episode,
            origin,
            state: 0,
            action: 0,
            next_state: 0,
            reward: 0.5,
            hops_remaining: 0,
        }
    }

    fn bus(g: CommGraph, gamma: usize) -> MessageBus {
        MessageBus::new(Arc::new(g), gamma)
    }

    #[test]
    fn gamma_zero_queues_nothing() {
        let mut b = bus(build_r_ary_tree(13, 3).unwrap(), 0);
        b.broadcast(msg(0, 0, 0));
        assert_eq!(b.pending(), 0);
        assert!(b.step_exchange().iter().all(Vec::is_empty));
        assert!(b.step_exchange().iter().all(Vec::is_empty));
    }

    #[test]
    fn star_center_reaches_leaves_next_step() {
        let mut b = bus(build_r_ary_tree(4, 3).unwrap(), 1);
        b.broadcast(msg(0, 0, 0));
        assert!(b.step_exchange().iter().all(Vec::is_empty));
        let got = b.step_exchange();
        assert!(got[0].is_empty());
        for leaf in 1..4 {
            assert_eq!(got[leaf].len(), 1);
            assert_eq!(got[leaf][0].hops_remaining, 0);
        }
        assert_eq!(b.pending(), 0);
    }

    #[test]
    fn path_two_hops_arrives_two_steps_later() {
        let mut b = bus(path_graph(3).unwrap(), 2);
        b.broadcast(msg(0, 0, 0));
        let rounds: Vec<_> = (0..4).map(|_| b.step_exchange()).collect();
        assert!(rounds[0].iter().all(Vec::is_empty));
        assert_eq!(rounds[1][1].len(), 1);
        assert!(rounds[1][2].is_empty());
        assert_eq!(rounds[2][2].len(), 1);
        assert_eq!(rounds[2][2][0].hops_remaining, 0);
        // Nothing bounces back to the origin or re-delivers.
        assert!(rounds.iter().all(|r| r[0].is_empty()));
        assert!(rounds[3].iter().all(Vec::is_empty));
    }

    #[test]
    fn beyond_gamma_never_delivered() {
        let mut b = bus(path_graph(4).unwrap(), 1);
        b.broadcast(msg(0, 0, 0));
        for _ in 0..5 {
            let got = b.step_exchange();
            assert!(got[2].is_empty() && got[3].is_empty());
        }
    }

    #[test]
    fn equal_length_paths_deliver_once() {
        // 0-1-3 and 0-2-3: two disjoint routes of length 2.
        let g = build_graph(&[(0, 1), (0, 2), (1, 3), (2, 3)], 4).unwrap();
        let mut b = bus(g, 3);
        b.broadcast(msg(0, 0, 0));
        let mut total_at_3 = 0;
        for _ in 0..5 {
            total_at_3 += b.step_exchange()[3].len();
        }
        assert_eq!(total_at_3, 1);
        assert!(b.stats().duplicates >= 1);
    }

    #[test]
    fn deliveries_are_canonically_sorted() {
        let mut b = bus(build_r_ary_tree(4, 3).unwrap(), 1);
        for origin in [3, 1, 2] {
            b.broadcast(msg(origin, 0, 0));
        }
        b.step_exchange();
        let got = b.step_exchange();
        let origins: Vec<_> = got[0].iter().map(|m| m.origin).collect();
        assert_eq!(origins, vec![1, 2, 3]);
    }

    #[test]
    fn end_episode_drops_pending() {
        let mut b = bus(path_graph(3).unwrap(), 2);
        // Created at the last step: the exchange of that step only promotes it.
        b.broadcast(msg(0, 4, 0));
        b.step_exchange();
        assert_eq!(b.pending(), 1);
        b.end_episode();
        assert_eq!(b.pending(), 0);
        assert_eq!(b.stats().dropped, 1);
        assert!(b.step_exchange().iter().all(Vec::is_empty));
        assert_eq!(b.stats().deliveries, 0);
    }

    #[test]
    fn end_episode_on_idle_bus_is_noop() {
        let mut b = bus(path_graph(3).unwrap(), 2);
        b.end_episode();
        assert_eq!(b.stats(), BusStats::default());
    }

    #[test]
    fn seen_resets_between_episodes() {
        let mut b = bus(path_graph(2).unwrap(), 1);
        b.broadcast(msg(0, 0, 0));
        b.step_exchange();
        assert_eq!(b.step_exchange()[1].len(), 1);
        b.end_episode();
        b.broadcast(msg(0, 0, 1));
        b.step_exchange();
        assert_eq!(b.step_exchange()[1][0].episode, 1);
    }

    #[test]
    fn trace_lines_carry_all_fields() {
        let mut b = bus(path_graph(2).unwrap(), 1);
        b.enable_trace();
        b.broadcast(SampleMsg {
            state: 3,
            action: 1,
            next_state: 2,
            reward: 0.25,
            ..msg(0, 0, 7)
        });
        b.step_exchange();
        b.step_exchange();
        let mut buf = Vec::new();
        write_trace(&mut buf, &b.take_trace()).unwrap();
        let line = String::from_utf8(buf).unwrap();
        assert_eq!(
            line.trim(),
            r#"{"k":7,"h":0,"origin":0,"target":1,"x":3,"a":1,"x2":2,"r":0.25,"hops_left":0,"delivered_at":1}"#
        );
    }
}
