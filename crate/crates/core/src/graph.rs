//! Communication networks, their γ-power graphs, and clique covers.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNREACHABLE: u32 = u32::MAX;

/// Undirected agent network with all-pairs hop distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    num_agents: usize,
    neighbors: Vec<Vec<usize>>,
    dist: Vec<u32>,
    diameter: usize,
    hop_radius: usize,
}

impl CommGraph {
    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    /// Direct neighbors of `m` in ascending order.
    pub fn neighbors(&self, m: usize) -> &[usize] {
        &self.neighbors[m]
    }

    pub fn degree(&self, m: usize) -> usize {
        self.neighbors[m].len()
    }

    pub fn is_adjacent(&self, u: usize, v: usize) -> bool {
        self.neighbors[u].binary_search(&v).is_ok()
    }

    /// Hop distance, `None` when `u` and `v` are disconnected.
    pub fn distance(&self, u: usize, v: usize) -> Option<usize> {
        match self.dist[u * self.num_agents + v] {
            UNREACHABLE => None,
            d => Some(d as usize),
        }
    }

    /// Largest finite pairwise distance.
    pub fn diameter(&self) -> usize {
        self.diameter
    }

    /// Distance threshold this graph was built with: 1 for a plain network,
    /// γ for the output of [`power_graph`].
    pub fn hop_radius(&self) -> usize {
        self.hop_radius
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.num_agents)
            .flat_map(|u| self.neighbors[u].iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
            .collect()
    }

    /// Parses the edge-list text format: first line `M`, then one `u v` pair
    /// per line. Blank lines are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let m: usize = header
            .parse()
            .map_err(|_| Error::Parse(format!("first line must be the agent count, got {header:?}")))?;
        let mut edges = Vec::new();
        for line in lines {
            let mut parts = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<usize> {
                s.and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad edge line {line:?}")))
            };
            let u = parse(parts.next())?;
            let v = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::Parse(format!("bad edge line {line:?}")));
            }
            edges.push((u, v));
        }
        build_graph(&edges, m)
    }

    pub fn load_edge_list(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_edge_list(&text)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.num_agents);
        for (u, v) in self.edges() {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }
}

/// Builds a graph from an edge list. Duplicate and reversed pairs collapse;
/// self-loops are dropped.
pub fn build_graph(edges: &[(usize, usize)], num_agents: usize) -> Result<CommGraph> {
    if num_agents == 0 {
        return Err(Error::param("graph needs at least one agent"));
    }
    let mut neighbors = vec![Vec::new(); num_agents];
    for &(u, v) in edges {
        if u >= num_agents || v >= num_agents {
            return Err(Error::param(format!("edge ({u}, {v}) out of range for M = {num_agents}")));
        }
        if u != v {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
        list.dedup();
    }
    Ok(with_distances(neighbors, 1))
}

fn with_distances(neighbors: Vec<Vec<usize>>, hop_radius: usize) -> CommGraph {
    let n = neighbors.len();
    let mut dist = vec![UNREACHABLE; n * n];
    let mut queue = VecDeque::new();
    for src in 0..n {
        let row = &mut dist[src * n..(src + 1) * n];
        row[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &v in &neighbors[u] {
                if row[v] == UNREACHABLE {
                    row[v] = row[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    let diameter = dist.iter().filter(|&&d| d != UNREACHABLE).max().copied().unwrap_or(0) as usize;
    CommGraph {
        num_agents: n,
        neighbors,
        dist,
        diameter,
        hop_radius,
    }
}

/// Complete `r`-ary tree in breadth-first order: node `i > 0` hangs off
/// `(i - 1) / r`.
pub fn build_r_ary_tree(num_agents: usize, branching: usize) -> Result<CommGraph> {
    if num_agents == 0 {
        return Err(Error::param("tree needs at least one agent"));
    }
    if branching == 0 {
        return Err(Error::param("branching factor must be positive"));
    }
    let edges: Vec<_> = (1..num_agents).map(|i| ((i - 1) / branching, i)).collect();
    build_graph(&edges, num_agents)
}

pub fn complete_graph(num_agents: usize) -> Result<CommGraph> {
    let edges: Vec<_> = (0..num_agents)
        .flat_map(|u| (u + 1..num_agents).map(move |v| (u, v)))
        .collect();
    build_graph(&edges, num_agents)
}

pub fn path_graph(num_agents: usize) -> Result<CommGraph> {
    let edges: Vec<_> = (1..num_agents).map(|i| (i - 1, i)).collect();
    build_graph(&edges, num_agents)
}

/// `G_γ`: `u` and `v` are adjacent iff `0 < d(u, v) <= gamma` in `g`.
pub fn power_graph(g: &CommGraph, gamma: usize) -> CommGraph {
    let n = g.num_agents;
    let neighbors = (0..n)
        .map(|u| {
            (0..n)
                .filter(|&v| matches!(g.distance(u, v), Some(d) if d > 0 && d <= gamma))
                .collect()
        })
        .collect();
    with_distances(neighbors, gamma)
}

/// Partition of the agents into cliques of a power graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliqueCover {
    pub gamma: usize,
    /// Clique id of each agent.
    pub assignment: Vec<usize>,
    /// `C(m)`: size of agent `m`'s clique.
    pub clique_size: Vec<usize>,
    /// Members of each clique, ascending.
    pub cliques: Vec<Vec<usize>>,
}

impl CliqueCover {
    pub fn num_cliques(&self) -> usize {
        self.cliques.len()
    }

    pub fn to_document(&self) -> CoverDocument {
        CoverDocument {
            gamma: self.gamma,
            cliques: self.cliques.clone(),
        }
    }

    /// `d_eff = 1 / Σ_C 1 / (d*_C − |C|)` where `d*_C` is the largest
    /// `G_γ`-degree inside clique `C`. `None` when some clique has
    /// `d*_C == |C|`.
    pub fn effective_degree(&self, g_gamma: &CommGraph) -> Option<f64> {
        let mut total = 0.0;
        for clique in &self.cliques {
            let d_star = clique.iter().map(|&m| g_gamma.degree(m)).max().unwrap_or(0) as f64;
            let gap = d_star - clique.len() as f64;
            if gap == 0.0 {
                return None;
            }
            total += 1.0 / gap;
        }
        if total == 0.0 {
            None
        } else {
            Some(1.0 / total)
        }
    }
}

/// JSON form of a clique cover: `{"gamma": …, "cliques": [[…], …]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverDocument {
    pub gamma: usize,
    pub cliques: Vec<Vec<usize>>,
}

/// Lowest-index-first greedy clique partition: seed a clique at the smallest
/// unassigned agent, then sweep the remaining unassigned agents in ascending
/// order and keep each one adjacent to every member so far.
pub fn greedy_clique_cover(g_gamma: &CommGraph) -> CliqueCover {
    let n = g_gamma.num_agents;
    let mut assignment = vec![usize::MAX; n];
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    for seed in 0..n {
        if assignment[seed] != usize::MAX {
            continue;
        }
        let id = cliques.len();
        let mut members = vec![seed];
        assignment[seed] = id;
        for cand in seed + 1..n {
            if assignment[cand] == usize::MAX && members.iter().all(|&m| g_gamma.is_adjacent(m, cand)) {
                members.push(cand);
                assignment[cand] = id;
            }
        }
        cliques.push(members);
    }
    let clique_size = assignment.iter().map(|&c| cliques[c].len()).collect();
    CliqueCover {
        gamma: g_gamma.hop_radius,
        assignment,
        clique_size,
        cliques,
    }
}

/// Closed γ-hop neighborhood sizes `|N_γ(m)| + 1`, used in place of clique
/// sizes when the cover is not known to the agents.
pub fn closed_neighborhood_sizes(g_gamma: &CommGraph) -> Vec<usize> {
    (0..g_gamma.num_agents).map(|m| g_gamma.degree(m) + 1).collect()
}
