//! Game of the Amazons engine: rules, handcrafted evaluation, autoencoder
//! reshaped UCT search, a stochastic graph genetic algorithm over the search
//! tree, graph-attention re-ranking, LLM-labelled training data and a match
//! arena.

pub mod arena;
pub mod board;
pub mod datagen;
pub mod eval;
pub mod neuralkit;
pub mod hybrid;
pub mod search;
pub mod sgga;
pub mod train;

pub use board::{BoardError, BoardState, Cell, GameStatus, Move, Side, Square};
pub use eval::{measures, DistanceMode, MeasureVector};
pub use search::{run_search, SearchConfig, SearchError, SearchTree};
pub use sgga::{run_sgga, trace_trajectory, SggaConfig, SggaError};
pub use hybrid::{play_turn, DecisionStrategy, HybridConfig, Source, TurnDecision};
pub use datagen::{generate_dataset, DatagenConfig, DatagenError, Dataset, MockProvider, RatingService};
pub use arena::{run_match, win_rate_ci, AgentKind, AgentSpec};
pub use train::{train_gat_ae, train_uct_ae, TrainConfig};
