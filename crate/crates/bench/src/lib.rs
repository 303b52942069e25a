//! Fixtures shared by the benchmarks.

use amazons_core::hybrid::assemble_subgraph;
use amazons_core::neuralkit::Matrix;
use amazons_core::BoardState;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Position reached by `plies` uniformly random moves.
pub fn random_position(plies: usize, seed: u64) -> BoardState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = BoardState::initial();
    for _ in 0..plies {
        let moves = state.legal_moves();
        let Some(mv) = moves.choose(&mut rng) else { break };
        state = state.apply_move(mv).unwrap();
    }
    state
}

/// Features and adjacency of a random single-head tree: `n` rows counting
/// the super-node.
pub fn random_graph(n: usize, seed: u64) -> (Matrix, Matrix) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parent: Vec<Option<usize>> = (0..n).map(|i| if i == 0 { None } else { Some(rng.random_range(0..i)) }).collect();
    let features: Vec<Option<[f64; 5]>> = (0..n)
        .map(|i| (i > 0).then(|| std::array::from_fn(|_| rng.random_range(-1.0..1.0))))
        .collect();
    let picked: Vec<usize> = (1..n).collect();
    assemble_subgraph(&parent, &features, &picked)
}
