//! Checks shared by the integration tests and the acceptance runner. Each
//! returns a one-line summary of what it measured, or what went wrong.

#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use amazons_core::board::*;
use amazons_core::datagen::{
    build_prompt, generate_dataset, parse_scores, ChatContext, ChatProvider, DatagenConfig, DatagenError, MockProvider, ProviderConfig, RatingRequest,
    RatingService, ReplyCache,
};
use amazons_core::neuralkit::*;
use amazons_core::search::{exploration, run_search, two_pass_propagate, SearchConfig, SearchTree};
use amazons_core::sgga::{run_sgga, termination_threshold, trace_trajectory, GraphView, SggaConfig, Step};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Counts moves by walking rays over the raw grid, without the move generator.
pub fn naive_move_count(state: &BoardState) -> usize {
    let empty = |sq: Square, vacated: Option<Square>| state.is_empty(sq) || Some(sq) == vacated;
    let ray = |from: Square, vacated: Option<Square>| {
        let mut out = Vec::new();
        for (df, dr) in DIRECTIONS {
            let mut cur = from;
            while let Some(next) = cur.offset(df, dr) {
                if !empty(next, vacated) {
                    break;
                }
                out.push(next);
                cur = next;
            }
        }
        out
    };
    state
        .pieces(state.side_to_move())
        .iter()
        .map(|&from| ray(from, None).into_iter().map(|to| ray(to, Some(from)).len()).sum::<usize>())
        .sum()
}

pub fn random_position(rng: &mut impl Rng, max_plies: usize) -> BoardState {
    let mut s = BoardState::initial();
    for _ in 0..rng.random_range(0..=max_plies) {
        let moves = s.legal_moves();
        if moves.is_empty() {
            break;
        }
        s = s.apply_move(&moves[rng.random_range(0..moves.len())]).unwrap();
    }
    s
}

pub fn rules() -> Check {
    let initial = BoardState::initial().legal_moves().len();
    ensure!(initial == 2176, "initial position has {initial} moves");
    let oracle = naive_move_count(&BoardState::initial());
    ensure!(oracle == 2176, "ray oracle counts {oracle} moves");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let s = random_position(&mut rng, 60);
        let (ours, theirs) = (s.legal_moves().len(), naive_move_count(&s));
        ensure!(ours == theirs, "generator {ours} vs oracle {theirs} at {}", s.encode_grid());
    }
    let (mut plies, mut games, mut longest) = (0, 0, 0);
    while plies < 100_000 {
        let mut s = BoardState::initial();
        let mut game_plies = 0;
        while s.status() == GameStatus::Ongoing {
            let moves = s.legal_moves();
            let mv = moves[rng.random_range(0..moves.len())];
            let next = s.apply_move(&mv).map_err(|e| format!("generated move {mv} rejected: {e}"))?;
            BoardState::from_grid(*next.grid(), next.side_to_move(), next.turn()).map_err(|e| format!("invalid state after {mv}: {e}"))?;
            s = next;
            game_plies += 1;
        }
        ensure!(game_plies <= 92, "game lasted {game_plies} plies");
        longest = longest.max(game_plies);
        plies += game_plies;
        games += 1;
    }
    Ok(format!("2176 moves (oracle agrees on 201 positions); {plies} random plies in {games} games all legal; longest game {longest} plies"))
}

fn close_all(obj: &[f64], expected: &[f64], label: &str) -> Result<(), String> {
    for (i, (a, b)) in obj.iter().zip(expected).enumerate() {
        ensure!((a - b).abs() < 1e-9, "{label}: node {i} is {a}, expected {b}");
    }
    Ok(())
}

pub fn propagation_fixtures() -> Check {
    let mut obj = vec![0.5, 0.2, 0.4];
    two_pass_propagate(&mut obj, &[None, Some(0), Some(0)]);
    let root = (0.5 + (-0.3f64).exp2()) / 2.0;
    close_all(&obj, &[root, 0.2, 0.4], "worked example")?;

    let cases: Vec<(&str, Vec<f64>, Vec<Option<usize>>, Vec<f64>)> = {
        let z = 0.6 + 0.5f64.sqrt();
        let x = 0.2 + z;
        let r = 0.5 + (-(x + 0.4) / 2.0).exp2();
        vec![
            ("depth 1", vec![0.3, 0.8], vec![None, None], vec![0.3, 0.8]),
            ("depth 2", vec![0.1, 0.6], vec![None, Some(0)], vec![(0.1 + (-0.6f64).exp2()) / 2.0, 0.6]),
            (
                "depth 3",
                vec![0.2, 0.5, 0.4, 0.8, 0.9],
                vec![None, Some(0), Some(1), Some(1), Some(0)],
                vec![0.7 / 3.0, 0.55, 0.4, 0.8, 0.45],
            ),
            (
                "depth 4 chain",
                vec![0.0, 0.0, 0.0, 1.0],
                vec![None, Some(0), Some(1), Some(2)],
                vec![0.5f64.sqrt() / 4.0, 0.5 / 3.0, 0.25, 1.0],
            ),
            (
                "depth 4 branching",
                vec![0.5, 0.2, 0.4, 0.6, 0.0, 1.0],
                vec![None, Some(0), Some(0), Some(1), Some(3), Some(3)],
                vec![r / 4.0, x / 3.0, 0.4 / 3.0, z / 2.0, 0.0, 1.0],
            ),
        ]
    };
    for (label, mut obj, parent, expected) in cases {
        two_pass_propagate(&mut obj, &parent);
        close_all(&obj, &expected, label)?;
    }
    Ok(format!("worked example root {root:.9} (0.65615 as printed, which rounds an intermediate), 0.2, 0.4; five hand-derived trees match to 1e-9"))
}

pub fn ucb_and_thresholds() -> Check {
    let mut cells = 0;
    for n in [1u32, 2, 3, 7, 10, 100, 1000, 65_535] {
        for nj in [0u32, 1, 2, 5, 9, 99, 999] {
            let expected = (2.0 * f64::from(n).ln() / (f64::from(nj) + 1.0)).sqrt();
            let got = exploration(n, nj);
            ensure!((got - expected).abs() < 1e-12, "n {n} n_j {nj}: {got} vs {expected}");
            cells += 1;
        }
    }
    let (a, b) = (termination_threshold(5, 5), termination_threshold(5, 1));
    ensure!(a == 2 && b == 32, "thresholds {a} and {b}");
    Ok(format!("{cells} grid points to 1e-12; thresholds h=H_max -> {a}, h=1 with H_max=5 -> {b}"))
}

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-4 * analytic.abs().max(numeric.abs()) + 1e-8
}

/// Central differences for every scalar of every parameter matrix.
fn check_gradients<M: Trainable + Clone>(model: &M, batch: &[M::Sample], kind: LossKind, label: &str) -> Result<usize, String> {
    const STEP: f64 = 1e-6;
    let (_, grads) = model.loss_and_grad(batch, kind).map_err(|e| e.to_string())?;
    let n_params = model.parameters().len();
    ensure!(grads.len() == n_params, "{label}: {} gradients for {n_params} parameters", grads.len());
    let mut checked = 0;
    for p in 0..n_params {
        for k in 0..grads[p].data().len() {
            let eval = |delta: f64| {
                let mut m = model.clone();
                m.parameters_mut()[p].data_mut()[k] += delta;
                m.loss_and_grad(batch, kind).map(|r| r.0).unwrap_or(f64::NAN)
            };
            let numeric = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
            let analytic = grads[p].data()[k];
            ensure!(close(analytic, numeric), "{label}: parameter {p}[{k}] analytic {analytic} numeric {numeric}");
            checked += 1;
        }
    }
    Ok(checked)
}

pub fn random_graph(n: usize, density: f64, rng: &mut impl Rng) -> Matrix {
    let mut adj = Matrix::zeros(n, n);
    for i in 0..n {
        adj.set(i, i, 1.0);
        for j in i + 1..n {
            if rng.random_bool(density) {
                adj.set(i, j, 1.0);
                adj.set(j, i, 1.0);
            }
        }
    }
    adj
}

pub fn random_features(n: usize, d: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Autoencoder with its head and the graph network, under both losses.
pub fn gradient_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    for config in 0..100 {
        let kind = if config % 2 == 0 { LossKind::Mse } else { LossKind::SmoothL1 };

        let ae = ScoredAutoencoder::new(Autoencoder::random(&mut rng), ValueHead::random(&mut rng), rng.random_range(0.0..1.0));
        let batch: Vec<ScoreSample> = (0..rng.random_range(1..6))
            .map(|_| ScoreSample {
                measures: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
                label: rng.random_range(0.0..1.0),
            })
            .collect();
        checked += check_gradients(&ae, &batch, kind, &format!("autoencoder config {config}"))?;

        let arch = GatArch {
            input: 5,
            heads: rng.random_range(1..5),
            head_dim: rng.random_range(1..5),
        };
        let gat = GatNetwork::random(arch, &mut rng);
        let graphs: Vec<GraphSample> = (0..rng.random_range(1..3))
            .map(|_| {
                let n = rng.random_range(1..9);
                GraphSample {
                    x: random_features(n, 5, &mut rng),
                    adj: random_graph(n, 0.4, &mut rng),
                    labels: (0..n).map(|_| rng.random_range(0.0..1.0)).collect(),
                    mask: rng.random_bool(0.5).then(|| (0..n).map(|i| i == 0 || rng.random_bool(0.6)).collect()),
                }
            })
            .collect();
        checked += check_gradients(&gat, &graphs, kind, &format!("graph network config {config}"))?;
    }
    Ok(format!("{checked} parameter gradients over 100 configurations within 1e-4 relative"))
}

pub fn gat_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_row: f64 = 0.0;
    let mut worst_perm: f64 = 0.0;
    for g in 0..50 {
        let n = rng.random_range(1..=64);
        let gat = GatNetwork::random(GatArch::default(), &mut rng);
        let x = random_features(n, 5, &mut rng);
        let adj = random_graph(n, rng.random_range(0.05..0.5), &mut rng);
        let out = gat.forward(&x, &adj).map_err(|e| e.to_string())?;
        for att in &out.attention {
            for i in 0..n {
                worst_row = worst_row.max((att.row(i).iter().sum::<f64>() - 1.0).abs());
                for j in 0..n {
                    ensure!(adj.get(i, j) != 0.0 || att.get(i, j) == 0.0, "graph {g}: attention on a non-edge");
                }
            }
        }
        ensure!(out.scores.iter().all(|&s| s > 0.0 && s < 1.0), "graph {g}: score outside (0, 1)");

        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let mut px = Matrix::zeros(n, 5);
        let mut padj = Matrix::zeros(n, n);
        for i in 0..n {
            for c in 0..5 {
                px.set(i, c, x.get(perm[i], c));
            }
            for j in 0..n {
                padj.set(i, j, adj.get(perm[i], perm[j]));
            }
        }
        let permuted = gat.forward(&px, &padj).map_err(|e| e.to_string())?;
        for i in 0..n {
            worst_perm = worst_perm.max((permuted.logits[i] - out.logits[perm[i]]).abs());
        }
    }
    ensure!(worst_row < 1e-9, "attention row sum off by {worst_row:e}");
    // Permuting changes the summation order, so only rounding may differ.
    ensure!(worst_perm < 1e-12, "permuted outputs differ by {worst_perm:e}");
    Ok(format!(
        "50 graphs up to 64 nodes: worst row-sum error {worst_row:.1e}, scores in (0, 1), worst permutation difference {worst_perm:.1e}"
    ))
}

pub fn random_tree(seed: u64) -> (BoardState, SearchTree) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models = ModelBundle::random(GatArch::default(), &mut rng);
    let state = loop {
        let s = random_position(&mut rng, 30);
        if s.status() == GameStatus::Ongoing {
            break s;
        }
    };
    let config = SearchConfig {
        budget: rng.random_range(1..=40),
        ..Default::default()
    };
    let mut tree = run_search(&state, &models, &config, &mut rng).unwrap();
    tree.propagate_values().unwrap();
    (state, tree)
}

pub fn sgga_statistics() -> Check {
    let (_, tree) = random_tree(3);
    // From a head with children both directions always have a target.
    let head = tree.heads().iter().copied().find(|&h| !tree.node(h).children.is_empty()).unwrap();
    let view = GraphView::new(&tree);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let steps = 10_000;
    let children = (0..steps).filter(|_| view.mutate(head, 0.8, &mut rng).1 == Step::Child).count();
    let sd = (steps as f64 * 0.8 * 0.2).sqrt();
    let z = (children as f64 - 0.8 * steps as f64) / sd;
    ensure!(z.abs() < 3.0, "child fraction {} is {z:.2} sigma from 0.8", children as f64 / steps as f64);

    let mut max_generations = 0;
    for seed in 0..100 {
        let (state, tree) = random_tree(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = run_sgga(&tree, &SggaConfig::default(), &mut rng).map_err(|e| e.to_string())?;
        let target = out.target.ok_or_else(|| format!("tree {seed}: no target"))?;
        let mv = trace_trajectory(&tree, target).map_err(|e| format!("tree {seed}: {e}"))?;
        ensure!(state.is_legal(&mv), "tree {seed}: trajectory move {mv} is illegal");
        max_generations = max_generations.max(out.generations);
    }
    Ok(format!(
        "child fraction {:.4} ({z:+.2} sigma); 100/100 trees terminate (at most {max_generations} generations) with legal root moves",
        children as f64 / steps as f64
    ))
}

struct Counting {
    calls: Arc<AtomicUsize>,
}

impl ChatProvider for Counting {
    fn name(&self) -> &str {
        "counting"
    }

    fn chat(&self, _prompt: &str, _ctx: ChatContext<'_>) -> Result<String, DatagenError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok("[0.62 0.48]".to_owned())
    }
}

pub fn golden_request() -> (RatingRequest, BoardState) {
    let mv: Move = "d1-d7/g7".parse().unwrap();
    let after = BoardState::initial().apply_move(&mv).unwrap();
    (RatingRequest::new(&after, Side::White, &mv), after)
}

pub fn datagen() -> Check {
    let golden = include_str!("../golden/rating_prompt_white.txt");
    ensure!(build_prompt(&golden_request().0) == golden, "prompt differs from the golden file");

    let strict = parse_scores("[0.62 0.48]").map_err(|e| e.to_string())?;
    let lenient = parse_scores("0.9 1.0").map_err(|e| e.to_string())?;
    ensure!(strict == (0.62, 0.48) && lenient == (0.9, 1.0), "parsed {strict:?} and {lenient:?}");
    ensure!(parse_scores("the move is strong").is_err(), "prose parsed as scores");

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let calls = Arc::new(AtomicUsize::new(0));
    let quiet = ProviderConfig {
        requests_per_minute: u32::MAX,
        backoff: std::time::Duration::ZERO,
        ..Default::default()
    };
    let cache = ReplyCache::open(&dir.path().join("cache")).map_err(|e| e.to_string())?;
    let service = RatingService::new(Box::new(Counting { calls: calls.clone() }), Some(cache), &quiet);
    let (req, after) = golden_request();
    for _ in 0..3 {
        service.rate(&req, &after).map_err(|e| e.to_string())?;
    }
    let n_calls = calls.load(Ordering::SeqCst);
    ensure!(n_calls == 1, "{n_calls} provider calls for three identical requests");

    let config = DatagenConfig {
        games: 3,
        seed: 5,
        workers: 2,
        ..Default::default()
    };
    let models = ModelBundle::zeros(GatArch::default());
    let mut files = Vec::new();
    for run in 0..2 {
        let path = dir.path().join(format!("run{run}.ndjson"));
        generate_dataset(&config, &models, &RatingService::mock(MockProvider::default()), &path).map_err(|e| e.to_string())?;
        files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure!(files[0] == files[1], "two runs with the same seed differ");
    Ok(format!(
        "golden prompt matches; strict, lenient and error parses behave; 1 provider call for 3 requests; two seeded runs identical ({} bytes)",
        files[0].len()
    ))
}
