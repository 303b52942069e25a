//! One full engine turn: search, propagate, walk the graph, re-rank with
//! graph attention and pick between the two candidate moves.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{BoardState, Move};
use crate::neuralkit::{GatNetwork, Matrix, ModelBundle, NeuralError, AE_INPUT};
use crate::search::{run_search, softmax_sample, Evaluator, NodeId, SearchConfig, SearchError, SearchTree};
use crate::sgga::{run_sgga, trace_trajectory, SggaConfig};

pub const SUBGRAPH_CAP: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum HybridError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("the tree holds no action nodes")]
    EmptyTree,
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// Node features and adjacency handed to the graph network. Row 0 is the
/// super-node standing for the four heads.
#[derive(Clone, Debug)]
pub struct Subgraph {
    pub x: Matrix,
    pub adj: Matrix,
    /// Tree node behind each row; `None` for the super-node.
    pub node_map: Vec<Option<NodeId>>,
    pub super_node: usize,
}

impl Subgraph {
    pub fn len(&self) -> usize {
        self.node_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_map.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        let n = self.len();
        let mut e = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if self.adj.get(i, j) != 0.0 {
                    e += 1;
                }
            }
        }
        e
    }
}

/// Feature and adjacency matrices for the action nodes `picked` of a tree
/// given by parent links (heads have no parent and no features). Row 0 is the
/// super-node: the mean over heads of each head's mean child feature.
pub fn assemble_subgraph(parent: &[Option<usize>], features: &[Option<[f64; AE_INPUT]>], picked: &[usize]) -> (Matrix, Matrix) {
    let n = picked.len() + 1;
    let mut row_of = vec![usize::MAX; parent.len()];
    for (r, &id) in picked.iter().enumerate() {
        row_of[id] = r + 1;
    }
    let mut x = Matrix::zeros(n, AE_INPUT);
    let mut adj = Matrix::zeros(n, n);
    for i in 0..n {
        adj.set(i, i, 1.0);
    }
    let mut head_sum: Vec<([f64; AE_INPUT], usize)> = vec![([0.0; AE_INPUT], 0); parent.len()];
    for (id, p) in parent.iter().enumerate() {
        if let (Some(p), Some(f)) = (p, features[id]) {
            if parent[*p].is_none() {
                let e = &mut head_sum[*p];
                e.0.iter_mut().zip(f).for_each(|(a, v)| *a += v);
                e.1 += 1;
            }
        }
    }
    for (r, &id) in picked.iter().enumerate() {
        let f = features[id].expect("action nodes carry features");
        for (k, v) in f.iter().enumerate() {
            x.set(r + 1, k, *v);
        }
        let p = parent[id].expect("actions have parents");
        let pr = if parent[p].is_none() { 0 } else { row_of[p] };
        if pr != usize::MAX {
            adj.set(r + 1, pr, 1.0);
            adj.set(pr, r + 1, 1.0);
        }
    }
    let heads: Vec<&([f64; AE_INPUT], usize)> = head_sum.iter().filter(|e| e.1 > 0).collect();
    for k in 0..AE_INPUT {
        let mean = heads.iter().map(|e| e.0[k] / e.1 as f64).sum::<f64>() / heads.len().max(1) as f64;
        x.set(0, k, mean);
    }
    (x, adj)
}

/// Builds the graph-model input. With a target, rows are the actions on the
/// path to it, their children and every first-level action; without one,
/// the whole tree. At most [`SUBGRAPH_CAP`] rows, super-node included.
pub fn extract_subgraph(tree: &SearchTree, target: Option<NodeId>, models: &ModelBundle) -> Result<Subgraph, HybridError> {
    if tree.action_count() == 0 {
        return Err(HybridError::EmptyTree);
    }
    let eval = Evaluator::new(models, tree.alpha());
    let mut picked: Vec<NodeId> = Vec::new();
    let mut seen = vec![false; tree.len()];
    let mut take = |id: NodeId, picked: &mut Vec<NodeId>| {
        if !seen[id] && !tree.node(id).is_head() {
            seen[id] = true;
            picked.push(id);
        }
    };
    match target {
        Some(t) => {
            let mut path = Vec::new();
            let mut cur = Some(t);
            while let Some(c) = cur {
                path.push(c);
                cur = tree.node(c).parent;
            }
            for &p in path.iter().rev() {
                take(p, &mut picked);
            }
            for &p in path.iter().rev() {
                for &c in &tree.node(p).children {
                    take(c, &mut picked);
                }
            }
            for a in tree.root_actions() {
                take(a.id, &mut picked);
            }
        }
        None => {
            // Ids grow with creation order, so any prefix is parent-closed.
            for n in tree.nodes() {
                take(n.id, &mut picked);
            }
        }
    }
    picked.truncate(SUBGRAPH_CAP - 1);
    let parent: Vec<Option<NodeId>> = tree.nodes().iter().map(|n| n.parent).collect();
    let features: Vec<Option<[f64; AE_INPUT]>> = tree
        .nodes()
        .iter()
        .map(|n| n.measures.map(|m| eval.features(&m)))
        .collect();
    let (x, adj) = assemble_subgraph(&parent, &features, &picked);
    let mut node_map = vec![None];
    node_map.extend(picked.into_iter().map(Some));
    Ok(Subgraph {
        x,
        adj,
        node_map,
        super_node: 0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatRanking {
    pub best: NodeId,
    /// (tree node, score) for every scored row except the super-node.
    pub scores: Vec<(NodeId, f64)>,
}

/// Scores every row and returns the best action row among those passing
/// `keep` (all action rows when `None`). Ties go to the lowest node id.
pub fn gat_rank(sub: &Subgraph, gat: &GatNetwork, keep: Option<&dyn Fn(NodeId) -> bool>) -> Result<GatRanking, HybridError> {
    let out = gat.forward(&sub.x, &sub.adj)?;
    let mut scores = Vec::new();
    let mut best: Option<(NodeId, f64)> = None;
    for (row, id) in sub.node_map.iter().enumerate() {
        let Some(id) = *id else { continue };
        let s = out.scores[row];
        scores.push((id, s));
        if keep.is_some_and(|f| !f(id)) {
            continue;
        }
        let better = match best {
            None => true,
            Some((bid, bs)) => s > bs || (s == bs && id < bid),
        };
        if better {
            best = Some((id, s));
        }
    }
    let (best, _) = best.ok_or(HybridError::EmptyTree)?;
    Ok(GatRanking { best, scores })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionStrategy {
    Argmax,
    Softmax,
    AlwaysSgga,
}

impl std::str::FromStr for DecisionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "argmax" => Ok(DecisionStrategy::Argmax),
            "softmax" => Ok(DecisionStrategy::Softmax),
            "always-sgga" => Ok(DecisionStrategy::AlwaysSgga),
            _ => Err(format!("unknown decision strategy '{s}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    UctArgmax,
    SggaGat,
    Fallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    #[serde(rename = "move")]
    pub mv: Move,
    pub obj: f64,
    pub node: NodeId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnDecision {
    pub chosen: Move,
    pub source: Source,
    pub uct_candidate: Candidate,
    pub sgga_candidate: Option<Candidate>,
    pub gat_scores: Vec<(NodeId, f64)>,
    pub sgga_generations: u32,
    pub tree_size: usize,
}

/// Chooses between the search's best move and the graph pick.
pub fn decide(uct: Candidate, sgga: Option<Candidate>, strategy: DecisionStrategy, rng: &mut impl Rng) -> (Move, Source) {
    let Some(s) = sgga else {
        return (uct.mv, Source::Fallback);
    };
    let take_sgga = match strategy {
        DecisionStrategy::AlwaysSgga => true,
        DecisionStrategy::Argmax => s.obj > uct.obj,
        DecisionStrategy::Softmax => softmax_sample(&[uct.obj, s.obj], 1.0, rng) == 1,
    };
    if take_sgga {
        (s.mv, Source::SggaGat)
    } else {
        (uct.mv, Source::UctArgmax)
    }
}

/// First-level action with the highest model value.
pub fn uct_candidate(tree: &SearchTree) -> Option<Candidate> {
    tree.root_actions()
        .max_by(|a, b| a.model_value.total_cmp(&b.model_value).then(b.id.cmp(&a.id)))
        .map(|n| Candidate {
            mv: n.action().expect("root actions carry moves"),
            obj: n.obj,
            node: n.id,
        })
}

fn candidate_for(tree: &SearchTree, node: NodeId) -> Option<Candidate> {
    let mv = trace_trajectory(tree, node).ok()?;
    let first = tree.root_actions().find(|a| a.action() == Some(mv))?;
    Some(Candidate {
        mv,
        obj: first.obj,
        node: first.id,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    pub search: SearchConfig,
    pub sigma: f64,
    pub strategy: DecisionStrategy,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            search: SearchConfig::default(),
            sigma: crate::sgga::DEFAULT_SIGMA,
            strategy: DecisionStrategy::Softmax,
        }
    }
}

/// Ranks the subgraph around `target` and returns the move leading to the
/// best-scored node played by the side to move.
pub fn sgga_gat_candidate(tree: &SearchTree, target: Option<NodeId>, models: &ModelBundle) -> Result<(Option<Candidate>, Vec<(NodeId, f64)>), HybridError> {
    let sub = extract_subgraph(tree, target, models)?;
    let own = |id: NodeId| tree.node(id).height % 2 == 0;
    let ranking = gat_rank(&sub, &models.gat, Some(&own))?;
    Ok((candidate_for(tree, ranking.best), ranking.scores))
}

/// Runs a full turn and also returns the propagated tree.
pub fn play_turn_with_tree(state: &BoardState, config: &HybridConfig, models: &ModelBundle, rng: &mut impl Rng) -> Result<(TurnDecision, SearchTree), HybridError> {
    let mut tree = run_search(state, models, &config.search, rng)?;
    let uct = uct_candidate(&tree).ok_or(HybridError::EmptyTree)?;
    tree.propagate_values()?;
    let uct = Candidate {
        obj: tree.node(uct.node).obj,
        ..uct
    };
    let sgga = run_sgga(
        &tree,
        &SggaConfig {
            sigma: config.sigma,
            ..Default::default()
        },
        rng,
    )
    .map_err(|_| HybridError::EmptyTree)?;
    let (sgga_candidate, gat_scores) = match sgga.target {
        Some(t) => sgga_gat_candidate(&tree, Some(t), models)?,
        None => (None, Vec::new()),
    };
    let (mut chosen, mut source) = decide(uct, sgga_candidate, config.strategy, rng);
    if !state.is_legal(&chosen) {
        (chosen, source) = (uct.mv, Source::Fallback);
    }
    let decision = TurnDecision {
        chosen,
        source,
        uct_candidate: uct,
        sgga_candidate,
        gat_scores,
        sgga_generations: sgga.generations,
        tree_size: tree.len(),
    };
    Ok((decision, tree))
}

pub fn play_turn(state: &BoardState, config: &HybridConfig, models: &ModelBundle, rng: &mut impl Rng) -> Result<TurnDecision, HybridError> {
    play_turn_with_tree(state, config, models, rng).map(|(d, _)| d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::board::{Side, Square};
    use crate::neuralkit::GatArch;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(budget: usize, seed: u64) -> (SearchTree, ModelBundle) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models = ModelBundle::random(GatArch::default(), &mut rng);
        let mut tree = run_search(
            &BoardState::initial(),
            &models,
            &SearchConfig {
                budget,
                ..Default::default()
            },
            &mut rng,
        )
        .unwrap();
        tree.propagate_values().unwrap();
        (tree, models)
    }

    #[test]
    fn one_action_gives_two_by_two() {
        let (tree, models) = setup(1, 1);
        let sub = extract_subgraph(&tree, None, &models).unwrap();
        assert_eq!(sub.adj, Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap());
        assert_eq!(sub.node_map, vec![None, Some(4)]);
        // One head with one child: the super-node copies that child's features.
        assert_eq!(sub.x.row(0), sub.x.row(1));
    }

    #[test]
    fn adjacency_shape() {
        for seed in 0..10 {
            let (tree, models) = setup(30, seed);
            let sub = extract_subgraph(&tree, None, &models).unwrap();
            let n = sub.len();
            assert_eq!(n, tree.action_count() + 1);
            let nonzero = sub.adj.data().iter().filter(|&&v| v != 0.0).count();
            assert_eq!(nonzero, 2 * sub.edge_count() + n);
            // A tree on n rows has n − 1 edges.
            assert_eq!(sub.edge_count(), n - 1);
            for id in sub.node_map.iter().flatten() {
                assert!(!tree.node(*id).is_head());
            }
        }
    }

    #[test]
    fn targeted_subgraph_contains_path() {
        let (tree, models) = setup(30, 3);
        let deepest = tree.nodes().iter().max_by_key(|n| (n.height, n.id)).unwrap().id;
        let sub = extract_subgraph(&tree, Some(deepest), &models).unwrap();
        let mut cur = Some(deepest);
        while let Some(c) = cur {
            if !tree.node(c).is_head() {
                assert!(sub.node_map.contains(&Some(c)));
            }
            cur = tree.node(c).parent;
        }
        assert!(sub.len() <= SUBGRAPH_CAP);
    }

    #[test]
    fn zero_network_ties_break_by_id() {
        let (tree, _) = setup(10, 4);
        let models = ModelBundle::zeros(GatArch::default());
        let sub = extract_subgraph(&tree, None, &models).unwrap();
        let r = gat_rank(&sub, &models.gat, None).unwrap();
        assert!(r.scores.iter().all(|&(_, s)| s == 0.5));
        assert_eq!(r.best, 4);
    }

    #[test]
    fn padding_row_does_not_change_argmax() {
        let (tree, models) = setup(20, 5);
        let sub = extract_subgraph(&tree, None, &models).unwrap();
        let base = gat_rank(&sub, &models.gat, None).unwrap();
        let n = sub.len();
        let mut x = Matrix::zeros(n + 1, AE_INPUT);
        let mut adj = Matrix::zeros(n + 1, n + 1);
        for i in 0..n {
            for k in 0..AE_INPUT {
                x.set(i, k, sub.x.get(i, k));
            }
            for j in 0..n {
                adj.set(i, j, sub.adj.get(i, j));
            }
        }
        for k in 0..AE_INPUT {
            x.set(n, k, 10.0);
        }
        let pad_id = usize::MAX;
        let mut node_map = sub.node_map.clone();
        node_map.push(Some(pad_id));
        let padded = Subgraph { x, adj, node_map, super_node: 0 };
        let keep = |id: NodeId| id != pad_id;
        let r = gat_rank(&padded, &models.gat, Some(&keep)).unwrap();
        assert_eq!(r.best, base.best);
    }

    #[test]
    fn decide_without_sgga_falls_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mv: Move = "d1-d7/g7".parse().unwrap();
        let c = Candidate { mv, obj: 0.3, node: 4 };
        for s in [DecisionStrategy::Argmax, DecisionStrategy::Softmax, DecisionStrategy::AlwaysSgga] {
            assert_eq!(decide(c, None, s, &mut rng), (mv, Source::Fallback));
        }
    }

    #[test]
    fn decide_softmax_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Candidate { mv: "d1-d7/g7".parse().unwrap(), obj: 0.4, node: 4 };
        let b = Candidate { mv: "g1-g7/d7".parse().unwrap(), obj: 0.4, node: 5 };
        let sg = (0..10_000).filter(|_| decide(a, Some(b), DecisionStrategy::Softmax, &mut rng).1 == Source::SggaGat).count();
        assert!((sg as i64 - 5000).abs() < 150);
        let hi = Candidate { obj: 20.4, ..b };
        let sg = (0..10_000).filter(|_| decide(a, Some(hi), DecisionStrategy::Softmax, &mut rng).1 == Source::SggaGat).count();
        assert!(sg > 9_900);
    }

    #[test]
    fn play_turn_is_legal_and_reproducible() {
        let models = ModelBundle::random(GatArch::default(), &mut ChaCha8Rng::seed_from_u64(9));
        let state = BoardState::initial();
        let cfg = HybridConfig::default();
        let a = play_turn(&state, &cfg, &models, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = play_turn(&state, &cfg, &models, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(state.is_legal(&a.chosen));
        assert_eq!(state, BoardState::initial());
    }

    #[test]
    fn terminal_state_is_rejected() {
        let sq = |s: &str| s.parse::<Square>().unwrap();
        let s = BoardState::from_pieces(
            [sq("a1"), sq("j1"), sq("a10"), sq("j10")],
            [sq("e5"), sq("e6"), sq("f5"), sq("f6")],
            &[sq("a2"), sq("b1"), sq("b2"), sq("i1"), sq("i2"), sq("j2"), sq("a9"), sq("b9"), sq("b10"), sq("i9"), sq("i10"), sq("j9")],
            Side::White,
        )
        .unwrap();
        let models = ModelBundle::zeros(GatArch::default());
        let err = play_turn(&s, &HybridConfig::default(), &models, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert_eq!(err, HybridError::Search(SearchError::NoLegalMoves));
    }
}
