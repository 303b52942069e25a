//! UCT search with autoencoder-shaped node values.
//!
//! The tree hangs off four head nodes, one per amazon of the side to move;
//! every other node is a full action (move plus arrow). A new node is valued
//! by the mixed, squashed scores of the two autoencoders instead of a random
//! playout, and visit counts are backed up along the selected path. Once the
//! budget is spent, [`SearchTree::propagate_values`] applies the two-pass
//! depth-normalised value update.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{BoardState, GameStatus, Move, Side, PIECES_PER_SIDE};
use crate::eval::{measures, territory, DistanceMode, MeasureVector};
use crate::neuralkit::{squash, ModelBundle, AE_INPUT};

pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchError {
    #[error("no legal moves in the root position")]
    NoLegalMoves,
    #[error("values were already propagated on this tree")]
    AlreadyPropagated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rollout {
    None,
    /// Up to `k` uniformly random plies, scored by adjacency territory.
    Random(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Number of action nodes to create.
    pub budget: usize,
    pub time_limit: Option<Duration>,
    /// Weight of the movement autoencoder in the node value.
    pub alpha: f64,
    /// Softmax temperature of child selection; 0 means argmax.
    pub temperature: f64,
    pub rollout: Rollout,
    /// A node may hold at most `ceil(widening * sqrt(visits))` children
    /// (at least one) before selection descends into them.
    pub widening: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: 20,
            time_limit: None,
            alpha: 0.5,
            temperature: 0.1,
            rollout: Rollout::None,
            widening: 2.0,
        }
    }
}

impl SearchConfig {
    /// Settings used while generating training data.
    pub fn training(budget: usize) -> Self {
        SearchConfig {
            budget,
            temperature: 1.0,
            ..Default::default()
        }
    }
}

/// Scores measure vectors with the two autoencoders.
#[derive(Clone, Copy)]
pub struct Evaluator<'a> {
    pub models: &'a ModelBundle,
    pub alpha: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(models: &'a ModelBundle, alpha: f64) -> Self {
        Evaluator { models, alpha }
    }

    /// AE₁(v)·W₁.
    pub fn movement_score(&self, v: &MeasureVector) -> f64 {
        self.models.movement.raw_score(&v.to_array())
    }

    /// AE₂(v)·W₂.
    pub fn placement_score(&self, v: &MeasureVector) -> f64 {
        self.models.placement.raw_score(&v.to_array())
    }

    /// `α·f(s₁) + (1 − α)·f(s₂)` with `f(s) = (tanh s + 1) / 2`; lies in `[0, 1]`.
    pub fn model_value(&self, v: &MeasureVector) -> f64 {
        self.alpha * squash(self.movement_score(v)) + (1.0 - self.alpha) * squash(self.placement_score(v))
    }

    /// Mixed autoencoder outputs, the per-node features of the graph model.
    pub fn features(&self, v: &MeasureVector) -> [f64; AE_INPUT] {
        let a = v.to_array();
        let m = self.models.movement.ae.trace(&a).output;
        let p = self.models.placement.ae.trace(&a).output;
        std::array::from_fn(|k| self.alpha * m[k] + (1.0 - self.alpha) * p[k])
    }
}

/// `sqrt(2 ln n / (n_j + 1))`.
pub fn exploration(total_visits: u32, visits: u32) -> f64 {
    let n = f64::from(total_visits.max(1));
    (2.0 * n.ln() / (f64::from(visits) + 1.0)).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Head { piece_index: usize },
    Action { mv: Move },
}

#[derive(Clone, Debug)]
pub struct SearchNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Position after this node's action (the root position for heads).
    pub state: BoardState,
    /// Objective value; the model value until propagation rewrites it.
    pub obj: f64,
    /// Model value at creation, kept after propagation.
    pub model_value: f64,
    /// Raw movement score used as the UCB exploitation term.
    pub movement_score: f64,
    pub visits: u32,
    pub height: u32,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub measures: Option<MeasureVector>,
    untried: Option<Vec<Move>>,
}

impl SearchNode {
    pub fn is_head(&self) -> bool {
        matches!(self.kind, NodeKind::Head { .. })
    }

    pub fn action(&self) -> Option<Move> {
        match self.kind {
            NodeKind::Action { mv } => Some(mv),
            NodeKind::Head { .. } => None,
        }
    }

    /// Side that played this node's action.
    pub fn owner(&self) -> Side {
        self.state.side_to_move().opponent()
    }
}

/// Bookkeeping of one propagation run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PassStats {
    pub h_max: u32,
    pub pass1_updates: usize,
    pub pass2_updates: usize,
}

/// Two-pass value propagation over a forest given by parent links.
///
/// Pass I walks bottom-up: each internal node takes the mean `v̄` of its
/// children's values and adds `v̄` at even height or `2^(−v̄)` at odd height.
/// Pass II walks top-down and divides every value by `H_max + 1 − height`.
/// Roots have height 1.
pub fn two_pass_propagate(obj: &mut [f64], parent: &[Option<usize>]) -> PassStats {
    two_pass_propagate_from(obj, parent, 1)
}

/// Heads group the mover's actions, so propagation counts heights from the
/// first move: the mover's actions are odd and take `2^(−v̄)` over replies.
pub const MOVE_DEPTH_OF_HEADS: u32 = 0;

/// As [`two_pass_propagate`] with roots at `root_height`; the reported
/// `h_max` is still the layer count. Pass II only sees
/// height differences, so the offset changes nothing but the Pass I parity.
pub fn two_pass_propagate_from(obj: &mut [f64], parent: &[Option<usize>], root_height: u32) -> PassStats {
    let n = obj.len();
    assert_eq!(parent.len(), n);
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut roots = Vec::new();
    for (i, p) in parent.iter().enumerate() {
        match p {
            Some(p) => children[*p].push(i),
            None => roots.push(i),
        }
    }
    // Pre-order from the roots; reversed it is a valid bottom-up order.
    let mut order = Vec::with_capacity(n);
    let mut height = vec![0u32; n];
    let mut stack: Vec<usize> = roots.iter().rev().copied().collect();
    for &r in &roots {
        height[r] = root_height;
    }
    while let Some(v) = stack.pop() {
        order.push(v);
        for &c in children[v].iter().rev() {
            height[c] = height[v] + 1;
            stack.push(c);
        }
    }
    assert_eq!(order.len(), n, "parent links must form a forest");
    let h_max = height.iter().copied().max().unwrap_or(0);
    let mut stats = PassStats {
        h_max: h_max + 1 - root_height,
        ..Default::default()
    };

    for &v in order.iter().rev() {
        if children[v].is_empty() {
            continue;
        }
        let mean = children[v].iter().map(|&c| obj[c]).sum::<f64>() / children[v].len() as f64;
        obj[v] += if height[v] % 2 == 0 { mean } else { (-mean).exp2() };
        stats.pass1_updates += 1;
    }
    for &v in &order {
        obj[v] /= f64::from(h_max + 1 - height[v]);
        stats.pass2_updates += 1;
    }
    stats
}

#[derive(Clone, Debug)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
    heads: [NodeId; PIECES_PER_SIDE],
    root_state: BoardState,
    total_visits: u32,
    propagated: Option<PassStats>,
    alpha: f64,
}

/// One node of a tree dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub kind: String,
    #[serde(rename = "move")]
    pub mv: Option<String>,
    pub height: u32,
    pub visits: u32,
    pub obj: f64,
    pub measures: Option<[f64; 5]>,
}

impl SearchTree {
    fn new(root: &BoardState, alpha: f64) -> SearchTree {
        let nodes: Vec<SearchNode> = (0..PIECES_PER_SIDE)
            .map(|i| SearchNode {
                id: i,
                kind: NodeKind::Head { piece_index: i },
                state: root.clone(),
                obj: 0.0,
                model_value: 0.0,
                movement_score: 0.0,
                visits: 0,
                height: 1,
                parent: None,
                children: Vec::new(),
                measures: None,
                untried: None,
            })
            .collect();
        SearchTree {
            nodes,
            heads: [0, 1, 2, 3],
            root_state: root.clone(),
            total_visits: 0,
            propagated: None,
            alpha,
        }
    }

    pub fn nodes(&self) -> &[SearchNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn heads(&self) -> &[NodeId; PIECES_PER_SIDE] {
        &self.heads
    }

    pub fn root_state(&self) -> &BoardState {
        &self.root_state
    }

    pub fn total_visits(&self) -> u32 {
        self.total_visits
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn action_count(&self) -> usize {
        self.nodes.len() - PIECES_PER_SIDE
    }

    pub fn h_max(&self) -> u32 {
        self.nodes.iter().map(|n| n.height).max().unwrap_or(0)
    }

    pub fn propagation(&self) -> Option<PassStats> {
        self.propagated
    }

    /// Action nodes directly under the heads: the candidate moves of this turn.
    pub fn root_actions(&self) -> impl Iterator<Item = &SearchNode> {
        self.heads.iter().flat_map(move |&h| self.nodes[h].children.iter().map(move |&c| &self.nodes[c]))
    }

    /// UCB of a node: movement score (mean over children for heads) plus the
    /// exploration bonus.
    pub fn ucb(&self, id: NodeId) -> f64 {
        let node = &self.nodes[id];
        let exploit = if node.is_head() {
            if node.children.is_empty() {
                0.0
            } else {
                node.children.iter().map(|&c| self.nodes[c].movement_score).sum::<f64>() / node.children.len() as f64
            }
        } else {
            node.movement_score
        };
        exploit + exploration(self.total_visits.max(1), node.visits)
    }

    /// Model value plus exploration.
    pub fn node_value(&self, id: NodeId) -> f64 {
        let node = &self.nodes[id];
        node.model_value + exploration(self.total_visits.max(1), node.visits)
    }

    /// Applies the two-pass update to every node's `obj`. Refuses to run twice.
    pub fn propagate_values(&mut self) -> Result<PassStats, SearchError> {
        if self.propagated.is_some() {
            return Err(SearchError::AlreadyPropagated);
        }
        let mut obj: Vec<f64> = self.nodes.iter().map(|n| n.obj).collect();
        let parent: Vec<Option<usize>> = self.nodes.iter().map(|n| n.parent).collect();
        let stats = two_pass_propagate_from(&mut obj, &parent, MOVE_DEPTH_OF_HEADS);
        for (n, v) in self.nodes.iter_mut().zip(obj) {
            n.obj = v;
        }
        self.propagated = Some(stats);
        Ok(stats)
    }

    /// Walks up to the height-2 ancestor and returns its action.
    pub fn first_action(&self, id: NodeId) -> Option<Move> {
        let mut cur = &self.nodes[id];
        if cur.is_head() {
            return None;
        }
        while let Some(p) = cur.parent {
            if self.nodes[p].is_head() {
                return cur.action();
            }
            cur = &self.nodes[p];
        }
        None
    }

    pub fn dump(&self) -> Vec<NodeRecord> {
        self.nodes
            .iter()
            .map(|n| NodeRecord {
                id: n.id,
                parent: n.parent,
                kind: if n.is_head() { "head".into() } else { "action".into() },
                mv: n.action().map(|m| m.to_string()),
                height: n.height,
                visits: n.visits,
                obj: n.obj,
                measures: n.measures.map(|m| m.to_array()),
            })
            .collect()
    }

    fn can_expand(&self, id: NodeId, widening: f64) -> bool {
        let node = &self.nodes[id];
        let has_untried = node.untried.as_ref().is_none_or(|u| !u.is_empty());
        if !has_untried || node.state.status() != GameStatus::Ongoing {
            return false;
        }
        let limit = (widening * f64::from(node.visits).sqrt()).ceil().max(1.0) as usize;
        node.children.len() < limit
    }

    fn expand(&mut self, id: NodeId, eval: &Evaluator, rollout: Rollout, rng: &mut impl Rng) -> Option<NodeId> {
        if self.nodes[id].untried.is_none() {
            let node = &self.nodes[id];
            let mut moves = match node.kind {
                NodeKind::Head { piece_index } => node.state.piece_moves(piece_index),
                NodeKind::Action { .. } => node.state.legal_moves(),
            };
            moves.shuffle(rng);
            self.nodes[id].untried = Some(moves);
        }
        let mv = self.nodes[id].untried.as_mut().and_then(Vec::pop)?;
        let parent = &self.nodes[id];
        let state = parent.state.apply_unchecked(&mv);
        let m = measures(&parent.state, &mv, &state);
        let mut value = eval.model_value(&m);
        if let Rollout::Random(k) = rollout {
            value = 0.5 * value + 0.5 * random_rollout(&state, state.side_to_move().opponent(), k, rng);
        }
        let new_id = self.nodes.len();
        let height = parent.height + 1;
        self.nodes.push(SearchNode {
            id: new_id,
            kind: NodeKind::Action { mv },
            state,
            obj: value,
            model_value: value,
            movement_score: eval.movement_score(&m),
            visits: 0,
            height,
            parent: Some(id),
            children: Vec::new(),
            measures: Some(m),
            untried: None,
        });
        self.nodes[id].children.push(new_id);
        Some(new_id)
    }
}

fn random_rollout(state: &BoardState, owner: Side, plies: u32, rng: &mut impl Rng) -> f64 {
    let mut s = state.clone();
    for _ in 0..plies {
        if let Some(w) = s.status().winner() {
            return if w == owner { 1.0 } else { 0.0 };
        }
        let moves = s.legal_moves();
        s = s.apply_unchecked(&moves[rng.random_range(0..moves.len())]);
    }
    match s.status().winner() {
        Some(w) => f64::from(u8::from(w == owner)),
        None => territory(&s, owner, DistanceMode::KingMove),
    }
}

/// Samples an index with probability `softmax(scores / temperature)`.
/// A temperature of zero picks the first maximum.
pub fn softmax_sample(scores: &[f64], temperature: f64, rng: &mut impl Rng) -> usize {
    assert!(!scores.is_empty());
    if scores.len() == 1 {
        return 0;
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if temperature <= 0.0 {
        return scores.iter().position(|&s| s == max).expect("max exists");
    }
    let weights: Vec<f64> = scores.iter().map(|&s| ((s - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut x = rng.random_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).expect("some weight is positive")
}

/// Picks a child of `node` by softmax over UCB scores.
pub fn select_child(tree: &SearchTree, node: NodeId, temperature: f64, rng: &mut impl Rng) -> NodeId {
    let children = &tree.nodes[node].children;
    let scores: Vec<f64> = children.iter().map(|&c| tree.ucb(c)).collect();
    children[softmax_sample(&scores, temperature, rng)]
}

/// Grows a tree of at most `config.budget` action nodes from `state`.
pub fn run_search(state: &BoardState, models: &ModelBundle, config: &SearchConfig, rng: &mut impl Rng) -> Result<SearchTree, SearchError> {
    if state.status() != GameStatus::Ongoing {
        return Err(SearchError::NoLegalMoves);
    }
    let eval = Evaluator::new(models, config.alpha);
    let mut tree = SearchTree::new(state, config.alpha);
    let start = Instant::now();
    let max_iterations = config.budget.max(1) * 50;
    let mut created = 0;
    for _ in 0..max_iterations {
        if created >= config.budget || config.time_limit.is_some_and(|t| start.elapsed() >= t) {
            break;
        }
        let eligible: Vec<NodeId> = tree
            .heads
            .iter()
            .copied()
            .filter(|&h| !tree.nodes[h].children.is_empty() || tree.can_expand(h, config.widening))
            .collect();
        if eligible.is_empty() {
            break;
        }
        // The virtual root counts as visited before the heads are scored.
        tree.total_visits += 1;
        let head_scores: Vec<f64> = eligible.iter().map(|&h| tree.ucb(h)).collect();
        let mut cur = eligible[softmax_sample(&head_scores, config.temperature, rng)];
        let mut path = vec![cur];
        loop {
            if tree.can_expand(cur, config.widening) {
                if let Some(new) = tree.expand(cur, &eval, config.rollout, rng) {
                    path.push(new);
                    created += 1;
                }
                break;
            }
            if tree.nodes[cur].children.is_empty() {
                break;
            }
            cur = select_child(&tree, cur, config.temperature, rng);
            path.push(cur);
        }
        for id in path {
            tree.nodes[id].visits += 1;
        }
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralkit::GatArch;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn models(seed: u64) -> ModelBundle {
        ModelBundle::random(GatArch::default(), &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn exploration_arithmetic() {
        assert_eq!(exploration(1, 0), 0.0);
        let e2 = std::f64::consts::E.powi(2);
        // ln(e²) = 2, so sqrt(4 / 1) = 2 once n is rounded to an integer count;
        // check the formula itself at the real-valued point.
        assert!(((2.0 * e2.ln() / 1.0_f64).sqrt() - 2.0).abs() < 1e-12);
        for n in [2u32, 10, 100] {
            let mut last = f64::INFINITY;
            for nj in 0..20 {
                let e = exploration(n, nj);
                assert!(e < last);
                last = e;
            }
        }
    }

    #[test]
    fn worked_propagation_example() {
        let mut obj = vec![0.5, 0.2, 0.4];
        let stats = two_pass_propagate(&mut obj, &[None, Some(0), Some(0)]);
        assert_eq!(stats.h_max, 2);
        let root = (0.5 + (-0.3f64).exp2()) / 2.0;
        assert!((obj[0] - root).abs() < 1e-12);
        assert!((obj[0] - 0.656_126_2).abs() < 1e-7);
        assert_eq!(&obj[1..], &[0.2, 0.4]);
        assert_eq!(stats.pass1_updates, 1);
        assert_eq!(stats.pass2_updates, 3);
    }

    #[test]
    fn head_offset_flips_parity_only() {
        // head 0.0 -> action 0.6 -> reply 0.4, heads counted as layer 0.
        let mut obj = vec![0.0, 0.6, 0.4];
        let stats = two_pass_propagate_from(&mut obj, &[None, Some(0), Some(1)], MOVE_DEPTH_OF_HEADS);
        assert_eq!(stats.h_max, 3);
        let action = 0.6 + (-0.4f64).exp2();
        assert!((obj[1] - action / 2.0).abs() < 1e-12);
        assert!((obj[0] - action / 3.0).abs() < 1e-12);
        assert_eq!(obj[2], 0.4);
    }

    #[test]
    fn zero_mean_children_give_full_reward() {
        let mut obj = vec![0.0, 0.0];
        two_pass_propagate(&mut obj, &[None, Some(1 - 1)]);
        // 0 + 2⁰ = 1, halved by Pass II.
        assert_eq!(obj[0], 0.5);
    }

    #[test]
    fn single_node_is_identity() {
        let mut obj = vec![0.37];
        two_pass_propagate(&mut obj, &[None]);
        assert_eq!(obj, vec![0.37]);
    }

    #[test]
    fn budget_one_creates_one_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tree = run_search(&BoardState::initial(), &models(1), &SearchConfig { budget: 1, ..Default::default() }, &mut rng).unwrap();
        assert_eq!(tree.action_count(), 1);
        assert_eq!(tree.root_actions().count(), 1);
    }

    #[test]
    fn budget_twenty_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let root = BoardState::initial();
        let tree = run_search(&root, &models(2), &SearchConfig::default(), &mut rng).unwrap();
        assert!(tree.len() <= 24);
        assert_eq!(tree.action_count(), 20);
        for n in tree.nodes() {
            n.state.validate().unwrap();
            if let Some(p) = n.parent {
                let parent = tree.node(p);
                assert_eq!(n.height, parent.height + 1);
                assert!(parent.state.is_legal(&n.action().unwrap()));
            } else {
                assert_eq!(n.height, 1);
            }
            let child_visits: u32 = n.children.iter().map(|&c| tree.node(c).visits).sum();
            assert!(n.visits >= child_visits);
            assert!((0.0..=1.0).contains(&n.obj));
        }
        for a in tree.root_actions() {
            assert!(root.is_legal(&a.action().unwrap()));
        }
    }

    #[test]
    fn search_is_deterministic() {
        let m = models(3);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            run_search(&BoardState::initial(), &m, &SearchConfig::default(), &mut rng).unwrap().dump()
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn terminal_root_is_rejected() {
        let sq = |s: &str| s.parse().unwrap();
        let s = BoardState::from_pieces(
            [sq("a1"), sq("j1"), sq("a10"), sq("j10")],
            [sq("e5"), sq("e6"), sq("f5"), sq("f6")],
            &[sq("a2"), sq("b1"), sq("b2"), sq("i1"), sq("i2"), sq("j2"), sq("a9"), sq("b9"), sq("b10"), sq("i9"), sq("i10"), sq("j9")],
            Side::White,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(run_search(&s, &models(0), &SearchConfig::default(), &mut rng).unwrap_err(), SearchError::NoLegalMoves);
    }

    #[test]
    fn propagation_runs_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tree = run_search(&BoardState::initial(), &models(4), &SearchConfig::default(), &mut rng).unwrap();
        let stats = tree.propagate_values().unwrap();
        assert_eq!(stats.pass2_updates, tree.len());
        assert_eq!(stats.h_max, tree.h_max());
        assert_eq!(tree.propagate_values(), Err(SearchError::AlreadyPropagated));
    }

    #[test]
    fn node_value_alpha_boundaries() {
        let m = models(6);
        let v = MeasureVector::from_array([0.4, 0.6, 0.5, 0.3, 0.7]);
        let s1 = squash(Evaluator::new(&m, 1.0).movement_score(&v));
        let s2 = squash(Evaluator::new(&m, 0.0).placement_score(&v));
        assert_eq!(Evaluator::new(&m, 1.0).model_value(&v), s1);
        assert_eq!(Evaluator::new(&m, 0.0).model_value(&v), s2);
        let mut same = m.clone();
        same.placement = same.movement.clone();
        let s = squash(Evaluator::new(&same, 0.5).movement_score(&v));
        assert!((Evaluator::new(&same, 0.5).model_value(&v) - s).abs() < 1e-15);
    }

    #[test]
    fn softmax_sampling_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(softmax_sample(&[3.0], 1.0, &mut rng), 0);
        for _ in 0..10_000 {
            assert_eq!(softmax_sample(&[0.1, 0.5, 0.3], 1e-6, &mut rng), 1);
        }
        let mut ones = 0;
        for _ in 0..10_000 {
            ones += softmax_sample(&[0.25, 0.25], 1.0, &mut rng);
        }
        // 3σ of Binomial(10⁴, ½) is 150.
        assert!((ones as i64 - 5000).abs() < 150, "{ones}");
    }
}
