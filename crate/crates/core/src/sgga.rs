//! Stochastic graph genetic algorithm over a finished search tree.
//!
//! Linking the four head nodes into a complete ring turns the tree into a
//! graph. Candidates are drawn from a repository by softmax over `obj`, walk
//! one biased random step each, and merge when they land on the same node.
//! The run stops once some action node has been landed on
//! `2^(H_max − height + 1)` times.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::board::Move;
use crate::search::{NodeId, SearchTree};

pub const DEFAULT_SIGMA: f64 = 0.8;
pub const MAX_GENERATIONS: u32 = 50_000;
pub const MAX_ENTRIES: usize = 50_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SggaError {
    #[error("the tree holds no action nodes")]
    EmptyTree,
    #[error("node {0} is a head node and has no move")]
    TargetIsHead(NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    Child,
    Parent,
    Peer,
}

/// The search tree seen as a graph: tree edges plus a complete ring on the heads.
#[derive(Clone, Copy)]
pub struct GraphView<'a> {
    pub tree: &'a SearchTree,
}

impl<'a> GraphView<'a> {
    pub fn new(tree: &'a SearchTree) -> Self {
        GraphView { tree }
    }

    pub fn ring_peers(&self, id: NodeId) -> Vec<NodeId> {
        if !self.tree.node(id).is_head() {
            return Vec::new();
        }
        self.tree.heads().iter().copied().filter(|&h| h != id).collect()
    }

    pub fn neighbors(&self, id: NodeId) -> Vec<NodeId> {
        let node = self.tree.node(id);
        let mut out = node.children.clone();
        out.extend(node.parent);
        out.extend(self.ring_peers(id));
        out
    }

    /// One biased random-walk step: to a random child with probability
    /// `sigma`, otherwise upwards (a ring peer for heads). A direction with
    /// no target falls back to the other one.
    pub fn mutate(&self, id: NodeId, sigma: f64, rng: &mut impl Rng) -> (NodeId, Step) {
        let node = self.tree.node(id);
        let up: Vec<(NodeId, Step)> = match node.parent {
            Some(p) => vec![(p, Step::Parent)],
            None => self.ring_peers(id).into_iter().map(|p| (p, Step::Peer)).collect(),
        };
        let down = &node.children;
        let want_child = rng.random::<f64>() < sigma;
        if (want_child && !down.is_empty()) || up.is_empty() {
            if down.is_empty() {
                return (id, Step::Child);
            }
            (down[rng.random_range(0..down.len())], Step::Child)
        } else {
            up[rng.random_range(0..up.len())]
        }
    }
}

/// `2^(H_max − height + 1)`.
pub fn termination_threshold(h_max: u32, height: u32) -> u64 {
    1u64 << (h_max + 1 - height)
}

/// Multiset of node ids with per-node landing counts.
#[derive(Clone, Debug)]
pub struct GeneticRepository {
    multiplicity: Vec<u32>,
    entries: usize,
    node_count: Vec<u64>,
    counter: u32,
}

impl GeneticRepository {
    /// Seeds the two highest-`obj` action nodes, or one node twice.
    pub fn init(tree: &SearchTree) -> Result<GeneticRepository, SggaError> {
        let mut actions: Vec<NodeId> = tree.nodes().iter().filter(|n| !n.is_head()).map(|n| n.id).collect();
        if actions.is_empty() {
            return Err(SggaError::EmptyTree);
        }
        actions.sort_by(|&a, &b| tree.node(b).obj.total_cmp(&tree.node(a).obj).then(a.cmp(&b)));
        let mut repo = GeneticRepository {
            multiplicity: vec![0; tree.len()],
            entries: 0,
            node_count: vec![0; tree.len()],
            counter: 0,
        };
        let second = actions.get(1).copied().unwrap_or(actions[0]);
        repo.push(actions[0]);
        repo.push(second);
        Ok(repo)
    }

    fn push(&mut self, id: NodeId) {
        if self.entries < MAX_ENTRIES {
            self.multiplicity[id] += 1;
            self.entries += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries == 0
    }

    pub fn multiplicity(&self, id: NodeId) -> u32 {
        self.multiplicity[id]
    }

    pub fn node_count(&self, id: NodeId) -> u64 {
        self.node_count[id]
    }

    pub fn total_node_count(&self) -> u64 {
        self.node_count.iter().sum()
    }

    pub fn counter(&self) -> u32 {
        self.counter
    }

    /// Distinct entries in id order.
    pub fn distinct(&self) -> Vec<NodeId> {
        (0..self.multiplicity.len()).filter(|&i| self.multiplicity[i] > 0).collect()
    }

    /// Draws one entry with probability proportional to `exp(obj)`.
    pub fn sample(&self, tree: &SearchTree, rng: &mut impl Rng) -> NodeId {
        let ids = self.distinct();
        let max = ids.iter().map(|&i| tree.node(i).obj).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = ids
            .iter()
            .map(|&i| f64::from(self.multiplicity[i]) * (tree.node(i).obj - max).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut x = rng.random_range(0.0..total);
        for (&id, w) in ids.iter().zip(&weights) {
            if x < *w {
                return id;
            }
            x -= w;
        }
        *ids.last().expect("repository is never empty")
    }

    /// Two independent draws with replacement.
    pub fn select_pair(&self, tree: &SearchTree, rng: &mut impl Rng) -> (NodeId, NodeId) {
        (self.sample(tree, rng), self.sample(tree, rng))
    }

    fn land(&mut self, id: NodeId) {
        self.node_count[id] += 1;
        self.push(id);
    }

    /// Adds one extra entry when both candidates sit on the same node.
    pub fn crossover(&mut self, c1: NodeId, c2: NodeId) -> Option<NodeId> {
        if c1 != c2 {
            return None;
        }
        self.node_count[c1] += 1;
        self.push(c1);
        Some(c1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceLine {
    pub counter: u32,
    pub candidates: (NodeId, NodeId),
    pub landed: (NodeId, NodeId),
    pub steps: (Step, Step),
    pub crossover: bool,
}

#[derive(Clone, Debug)]
pub struct SggaOutcome {
    pub target: Option<NodeId>,
    pub generations: u32,
    pub repository: GeneticRepository,
    pub trace: Vec<TraceLine>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SggaConfig {
    pub sigma: f64,
    pub max_generations: u32,
    pub keep_trace: bool,
}

impl Default for SggaConfig {
    fn default() -> Self {
        SggaConfig {
            sigma: DEFAULT_SIGMA,
            max_generations: MAX_GENERATIONS,
            keep_trace: false,
        }
    }
}

/// Runs generations until an action node reaches its landing threshold or
/// the generation cap is hit (target `None`).
pub fn run_sgga(tree: &SearchTree, config: &SggaConfig, rng: &mut impl Rng) -> Result<SggaOutcome, SggaError> {
    let graph = GraphView::new(tree);
    let mut repo = GeneticRepository::init(tree)?;
    let h_max = tree.h_max();
    let reached = |repo: &GeneticRepository, id: NodeId| {
        let node = tree.node(id);
        !node.is_head() && repo.node_count(id) >= termination_threshold(h_max, node.height)
    };
    let mut trace = Vec::new();
    let cap = config.max_generations.min(MAX_GENERATIONS);
    while repo.counter < cap {
        repo.counter += 1;
        let (c1, c2) = repo.select_pair(tree, rng);
        let (m1, s1) = graph.mutate(c1, config.sigma, rng);
        let (m2, s2) = graph.mutate(c2, config.sigma, rng);
        repo.land(m1);
        repo.land(m2);
        let crossed = repo.crossover(m1, m2).is_some();
        if config.keep_trace {
            trace.push(TraceLine {
                counter: repo.counter,
                candidates: (c1, c2),
                landed: (m1, m2),
                steps: (s1, s2),
                crossover: crossed,
            });
        }
        if let Some(t) = [m1, m2].into_iter().find(|&m| reached(&repo, m)) {
            return Ok(SggaOutcome {
                target: Some(t),
                generations: repo.counter,
                repository: repo,
                trace,
            });
        }
    }
    Ok(SggaOutcome {
        target: None,
        generations: repo.counter,
        repository: repo,
        trace,
    })
}

/// First action on the path from the heads to `target`.
pub fn trace_trajectory(tree: &SearchTree, target: NodeId) -> Result<Move, SggaError> {
    tree.first_action(target).ok_or(SggaError::TargetIsHead(target))
}
