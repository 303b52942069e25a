//! Labelled training data from self-play.
//!
//! Each executed ply is rated by a chat provider (or the offline mock) with
//! the fixed rating prompt. Alongside every rating the search tree of that
//! ply is stored with the nodes the graph walk touched, which later become
//! the graph model's targets.

mod prompt;
mod provider;

use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{BoardState, GameStatus, Move, Side, MAX_PLIES};
use crate::eval::measures;
use crate::hybrid::uct_candidate;
use crate::neuralkit::{squash, ModelBundle};
use crate::search::{run_search, SearchConfig, SearchError, SearchTree};
use crate::sgga::{run_sgga, trace_trajectory, SggaConfig};

pub use prompt::{build_move_prompt, build_prompt, parse_move_reply, parse_scores, RatingRequest};
pub use provider::{
    prompt_hash, ApiProvider, CacheEntry, ChatContext, ChatProvider, MockProvider, ProviderConfig, RatingResponse, RatingService, ReplyCache,
    TokenBucket,
};

pub const DATASET_FORMAT: &str = "amazons-dataset";
pub const DATASET_VERSION: u32 = 1;
pub const DEFAULT_GAMES: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatagenError {
    #[error("could not parse scores from reply: {0:?}")]
    Parse(String),
    #[error("reply scores are outside [0, 1]: {0:?}")]
    OutOfRange(String),
    #[error("rating unavailable after retries: {0}")]
    RatingUnavailable(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited by provider")]
    RateLimited,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error(transparent)]
    Search(#[from] SearchError),
}

impl DatagenError {
    fn io(e: std::io::Error) -> DatagenError {
        DatagenError::Io(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MovementSelection {
    /// Movement of the graph walk's target trajectory.
    Sgga,
    /// Movement of the search's best first-level action.
    Argmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementSelection {
    /// Arrow drawn with probability proportional to the squashed placement score.
    WeightedRandom,
    Argmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatagenConfig {
    pub games: usize,
    pub seed: u64,
    pub search: SearchConfig,
    pub movement: MovementSelection,
    pub placement: PlacementSelection,
    /// Games generated concurrently.
    pub workers: usize,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        DatagenConfig {
            games: DEFAULT_GAMES,
            seed: 0,
            search: SearchConfig::training(20),
            movement: MovementSelection::Sgga,
            placement: PlacementSelection::WeightedRandom,
            workers: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub provider: String,
    pub budget: usize,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlyRecord {
    pub game: usize,
    pub ply: usize,
    pub grid: String,
    pub mover: Side,
    #[serde(rename = "move")]
    pub mv: Move,
    pub measures: [f64; 5],
    pub move_score: f64,
    pub place_score: f64,
}

/// Search tree of one ply: parent links, measures (absent for heads) and
/// whether the graph walk touched the node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub game: usize,
    pub ply: usize,
    pub parent: Vec<Option<usize>>,
    pub measures: Vec<Option<[f64; 5]>>,
    pub visited: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameEnd {
    pub game: usize,
    pub plies: usize,
    pub winner: Option<Side>,
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DatasetLine {
    Header(Header),
    Ply(PlyRecord),
    Graph(GraphRecord),
    GameEnd(GameEnd),
}

impl DatasetLine {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("records serialise");
        s.push('\n');
        s
    }

    pub fn parse(line: &str) -> Result<DatasetLine, DatagenError> {
        serde_json::from_str(line).map_err(|e| DatagenError::Format(e.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub header: Option<Header>,
    pub plies: Vec<PlyRecord>,
    pub graphs: Vec<GraphRecord>,
    pub games: Vec<GameEnd>,
}

impl Dataset {
    /// Loads complete games only; a trailing partial game is ignored.
    pub fn load(path: &Path) -> Result<Dataset, DatagenError> {
        let text = fs::read_to_string(path).map_err(DatagenError::io)?;
        let mut ds = Dataset::default();
        let mut pending_plies = Vec::new();
        let mut pending_graphs = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match DatasetLine::parse(line)? {
                DatasetLine::Header(h) => ds.header = Some(h),
                DatasetLine::Ply(p) => pending_plies.push(p),
                DatasetLine::Graph(g) => pending_graphs.push(g),
                DatasetLine::GameEnd(e) => {
                    ds.plies.append(&mut pending_plies);
                    ds.graphs.append(&mut pending_graphs);
                    ds.games.push(e);
                }
            }
        }
        Ok(ds)
    }

    pub fn is_empty(&self) -> bool {
        self.plies.is_empty()
    }
}

/// Tree of a record rebuilt into the form the propagation expects.
impl GraphRecord {
    pub fn from_tree(game: usize, ply: usize, tree: &SearchTree, visited: Vec<bool>) -> GraphRecord {
        GraphRecord {
            game,
            ply,
            parent: tree.nodes().iter().map(|n| n.parent).collect(),
            measures: tree.nodes().iter().map(|n| n.measures.map(|m| m.to_array())).collect(),
            visited,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatagenSummary {
    pub games_written: usize,
    pub games_skipped_existing: usize,
    pub plies: usize,
    pub ratings_skipped: usize,
}

fn game_seed(seed: u64, game: usize) -> u64 {
    seed ^ (game as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn choose_arrow(state: &BoardState, from: crate::board::Square, to: crate::board::Square, models: &ModelBundle, mode: PlacementSelection, rng: &mut impl Rng) -> Move {
    let options: Vec<Move> = state
        .queen_reachable(to, Some(from))
        .into_iter()
        .map(|arrow| Move { from, to, arrow })
        .collect();
    let weights: Vec<f64> = options
        .iter()
        .map(|mv| {
            let after = state.apply_unchecked(mv);
            squash(models.placement.raw_score(&measures(state, mv, &after).to_array()))
        })
        .collect();
    match mode {
        PlacementSelection::Argmax => {
            let best = (0..options.len()).max_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(b.cmp(&a))).expect("a moved amazon can always shoot back");
            options[best]
        }
        PlacementSelection::WeightedRandom => {
            let total: f64 = weights.iter().sum();
            let mut x = rng.random_range(0.0..total);
            for (mv, w) in options.iter().zip(&weights) {
                if x < *w {
                    return *mv;
                }
                x -= w;
            }
            *options.last().expect("nonempty")
        }
    }
}

/// Plays and labels one game; returns its lines and rating skips.
pub fn generate_game(game: usize, config: &DatagenConfig, models: &ModelBundle, service: &RatingService) -> Result<(Vec<DatasetLine>, usize), DatagenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(game_seed(config.seed, game));
    let mut state = BoardState::initial();
    let mut lines = Vec::new();
    let mut skipped = 0;
    let mut ply = 0;
    while state.status() == GameStatus::Ongoing && ply < MAX_PLIES {
        let mut tree = run_search(&state, models, &config.search, &mut rng)?;
        let uct = uct_candidate(&tree).expect("ongoing positions have actions").mv;
        tree.propagate_values()?;
        let walk = run_sgga(&tree, &SggaConfig::default(), &mut rng).expect("tree has actions");
        let visited: Vec<bool> = (0..tree.len())
            .map(|i| walk.repository.node_count(i) > 0 || walk.repository.multiplicity(i) > 0)
            .collect();
        let movement = match (config.movement, walk.target) {
            (MovementSelection::Sgga, Some(t)) => trace_trajectory(&tree, t).unwrap_or(uct),
            _ => uct,
        };
        let mv = choose_arrow(&state, movement.from, movement.to, models, config.placement, &mut rng);
        let mover = state.side_to_move();
        let after = state.apply_move(&mv).expect("generated moves are legal");
        let m = measures(&state, &mv, &after).to_array();
        match service.rate(&RatingRequest::new(&after, mover, &mv), &after) {
            Ok(r) => lines.push(DatasetLine::Ply(PlyRecord {
                game,
                ply,
                grid: after.encode_grid(),
                mover,
                mv,
                measures: m,
                move_score: r.move_score,
                place_score: r.place_score,
            })),
            Err(DatagenError::RatingUnavailable(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
        lines.push(DatasetLine::Graph(GraphRecord::from_tree(game, ply, &tree, visited)));
        state = after;
        ply += 1;
    }
    lines.push(DatasetLine::GameEnd(GameEnd {
        game,
        plies: ply,
        winner: state.status().winner(),
        skipped,
    }));
    Ok((lines, skipped))
}

/// Truncates a trailing partial game and returns the completed game ids.
fn prepare_resume(path: &Path) -> Result<(bool, BTreeSet<usize>), DatagenError> {
    let Ok(text) = fs::read_to_string(path) else {
        return Ok((false, BTreeSet::new()));
    };
    let mut done = BTreeSet::new();
    let mut keep = 0;
    let mut has_header = false;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        offset += line.len();
        if !line.ends_with('\n') {
            break;
        }
        match DatasetLine::parse(line.trim_end()) {
            Ok(DatasetLine::Header(_)) => {
                has_header = true;
                keep = offset;
            }
            Ok(DatasetLine::GameEnd(e)) => {
                done.insert(e.game);
                keep = offset;
            }
            Ok(_) => {}
            Err(_) => break,
        }
    }
    if keep < text.len() {
        let f = OpenOptions::new().write(true).open(path).map_err(DatagenError::io)?;
        f.set_len(keep as u64).map_err(DatagenError::io)?;
    }
    Ok((has_header, done))
}

/// Generates `config.games` games into `out`, appending to and resuming an
/// existing file. Games are written whole, in id order.
pub fn generate_dataset(config: &DatagenConfig, models: &ModelBundle, service: &RatingService, out: &Path) -> Result<DatagenSummary, DatagenError> {
    let (has_header, done) = prepare_resume(out)?;
    let mut file = OpenOptions::new().create(true).append(true).open(out).map_err(DatagenError::io)?;
    if !has_header {
        let header = DatasetLine::Header(Header {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            seed: config.seed,
            provider: service.provider_name().to_owned(),
            budget: config.search.budget,
            alpha: config.search.alpha,
        });
        file.write_all(header.to_line().as_bytes()).map_err(DatagenError::io)?;
    }
    let todo: Vec<usize> = (0..config.games).filter(|g| !done.contains(g)).collect();
    let mut summary = DatagenSummary {
        games_skipped_existing: config.games - todo.len(),
        ..Default::default()
    };
    for chunk in todo.chunks(config.workers.max(1)) {
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|&g| s.spawn(move || generate_game(g, config, models, service))).collect();
            handles.into_iter().map(|h| h.join().expect("generator thread panicked")).collect()
        });
        for r in results {
            let (lines, skipped) = r?;
            let text: String = lines.iter().map(DatasetLine::to_line).collect();
            file.write_all(text.as_bytes()).map_err(DatagenError::io)?;
            summary.games_written += 1;
            summary.ratings_skipped += skipped;
            summary.plies += lines.iter().filter(|l| matches!(l, DatasetLine::Graph(_))).count();
        }
    }
    file.flush().map_err(DatagenError::io)?;
    Ok(summary)
}
