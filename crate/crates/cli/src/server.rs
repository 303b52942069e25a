//! JSON service for the browser client: game sessions, human and engine
//! moves, and the last search tree for analysis overlays.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use amazons_core::arena::{choose_move, AgentContext, AgentKind, AgentSpec};
use amazons_core::hybrid::{play_turn_with_tree, HybridConfig};
use amazons_core::neuralkit::ModelBundle;
use amazons_core::search::{NodeRecord, SearchConfig};
use amazons_core::{BoardState, DecisionStrategy, GameStatus, Move, Side, Source, Square, TurnDecision};
use axum::body::Bytes;
use axum::extract::{FromRequest, Path as UrlPath, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const MAX_BUDGET: usize = 500;

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn unprocessable(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed_body", message)
    }

    fn conflict(code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::CONFLICT, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

/// JSON body whose every failure, syntax or shape, is a 422.
pub struct JsonBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e| ApiError::unprocessable(e.to_string()))?;
        let body = if bytes.iter().all(u8::is_ascii_whitespace) { &b"{}"[..] } else { &bytes[..] };
        serde_json::from_slice(body).map(JsonBody).map_err(|e| ApiError::unprocessable(e.to_string()))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateGame {
    #[serde(default = "default_engine")]
    pub engine: AgentKind,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_human")]
    pub human_color: Side,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_strategy")]
    pub strategy: DecisionStrategy,
}

fn default_engine() -> AgentKind {
    AgentKind::Hybrid
}
fn default_budget() -> usize {
    20
}
fn default_human() -> Side {
    Side::White
}
fn default_strategy() -> DecisionStrategy {
    DecisionStrategy::Softmax
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanMove {
    pub from: Square,
    pub to: Square,
    pub arrow: Square,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub ply: usize,
    pub side: Side,
    #[serde(rename = "move")]
    pub mv: Move,
    pub notation: String,
    pub by: Player,
    pub source: Option<Source>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    Human,
    Engine,
}

#[derive(Clone, Debug, Serialize)]
pub struct StateView {
    pub side_to_move: Side,
    pub turn: u32,
    pub status: &'static str,
    pub winner: Option<Side>,
    pub white: Vec<Square>,
    pub black: Vec<Square>,
    pub arrows: Vec<Square>,
    /// Ten rows of cell codes, top rank first.
    pub grid: Vec<String>,
    pub legal_moves: Vec<Move>,
}

impl StateView {
    pub fn of(s: &BoardState) -> StateView {
        StateView {
            side_to_move: s.side_to_move(),
            turn: s.turn(),
            status: status_name(s.status()),
            winner: s.status().winner(),
            white: s.pieces(Side::White).to_vec(),
            black: s.pieces(Side::Black).to_vec(),
            arrows: s.arrows().to_vec(),
            grid: s.encode_grid().lines().map(str::to_owned).collect(),
            legal_moves: if s.status() == GameStatus::Ongoing { s.legal_moves() } else { Vec::new() },
        }
    }
}

fn status_name(s: GameStatus) -> &'static str {
    match s {
        GameStatus::Ongoing => "ongoing",
        GameStatus::WhiteWins => "white_wins",
        GameStatus::BlackWins => "black_wins",
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisNode {
    #[serde(flatten)]
    pub node: NodeRecord,
    pub gat_score: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Analysis {
    pub ply: usize,
    pub decision: TurnDecision,
    pub nodes: Vec<AnalysisNode>,
}

pub struct GameSession {
    pub id: String,
    pub config: CreateGame,
    pub state: BoardState,
    pub history: Vec<HistoryEntry>,
    pub analysis: Option<Analysis>,
}

impl GameSession {
    fn view(&self) -> serde_json::Value {
        serde_json::json!({
            "id": self.id,
            "engine": self.config.engine,
            "budget": self.config.budget,
            "human_color": self.config.human_color,
            "seed": self.config.seed,
            "status": status_name(self.state.status()),
            "state": StateView::of(&self.state),
            "history": self.history,
        })
    }

    fn push(&mut self, mv: Move, by: Player, source: Option<Source>) {
        let side = self.state.side_to_move();
        self.state = self.state.apply_move(&mv).expect("legality checked by caller");
        self.history.push(HistoryEntry {
            ply: self.history.len(),
            side,
            mv,
            notation: mv.to_string(),
            by,
            source,
        });
    }

    fn ensure_ongoing(&self) -> Result<(), ApiError> {
        if self.state.status() != GameStatus::Ongoing {
            return Err(ApiError::conflict("game_over", format!("game {} is over", self.id)));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum JournalLine {
    Create { id: String, config: CreateGame },
    Move { id: String, notation: String, by: Player, source: Option<Source> },
}

pub struct AppState {
    models: Arc<ModelBundle>,
    sessions: RwLock<HashMap<String, Arc<Mutex<GameSession>>>>,
    next_id: AtomicU64,
    journal: Option<Mutex<File>>,
}

impl AppState {
    pub fn new(models: ModelBundle) -> AppState {
        AppState {
            models: Arc::new(models),
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            journal: None,
        }
    }

    /// Replays an existing journal, then appends to it.
    pub fn with_journal(models: ModelBundle, path: &Path) -> anyhow::Result<AppState> {
        let mut app = AppState::new(models);
        if path.exists() {
            for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: JournalLine = serde_json::from_str(&line).map_err(|e| anyhow::anyhow!("journal line {}: {e}", n + 1))?;
                app.replay(entry).map_err(|e| anyhow::anyhow!("journal line {}: {e}", n + 1))?;
            }
        }
        app.journal = Some(Mutex::new(OpenOptions::new().create(true).append(true).open(path)?));
        Ok(app)
    }

    fn replay(&mut self, entry: JournalLine) -> Result<(), String> {
        match entry {
            JournalLine::Create { id, config } => {
                let n: u64 = id.trim_start_matches('g').parse().map_err(|_| format!("bad id {id}"))?;
                self.next_id.fetch_max(n + 1, Ordering::SeqCst);
                self.insert(GameSession {
                    id: id.clone(),
                    config,
                    state: BoardState::initial(),
                    history: Vec::new(),
                    analysis: None,
                });
            }
            JournalLine::Move { id, notation, by, source } => {
                let session = self.get(&id).map_err(|e| e.message)?;
                let mut s = session.lock().unwrap();
                let mv: Move = notation.parse().map_err(|e| format!("{e}"))?;
                if !s.state.is_legal(&mv) {
                    return Err(format!("illegal move {notation} in game {id}"));
                }
                s.push(mv, by, source);
            }
        }
        Ok(())
    }

    fn insert(&self, session: GameSession) -> Arc<Mutex<GameSession>> {
        let id = session.id.clone();
        let arc = Arc::new(Mutex::new(session));
        self.sessions.write().unwrap().insert(id, arc.clone());
        arc
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<GameSession>>, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_game", format!("no game with id {id}")))
    }

    fn log(&self, line: &JournalLine) {
        if let Some(j) = &self.journal {
            let mut f = j.lock().unwrap();
            // The journal is a convenience; a failed write never fails the request.
            let _ = writeln!(f, "{}", serde_json::to_string(line).expect("journal lines serialise"));
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/games", post(create_game))
        .route("/games/{id}", get(get_game))
        .route("/games/{id}/move", post(human_move))
        .route("/games/{id}/engine-move", post(engine_move))
        .route("/games/{id}/analysis", get(analysis))
        .with_state(state)
}

async fn create_game(State(app): State<Arc<AppState>>, JsonBody(config): JsonBody<CreateGame>) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    if !(1..=MAX_BUDGET).contains(&config.budget) {
        return Err(ApiError::unprocessable(format!("budget must be between 1 and {MAX_BUDGET}")));
    }
    if config.engine == AgentKind::Llm {
        return Err(ApiError::unprocessable("the language-model engine is not served"));
    }
    let id = format!("g{}", app.next_id.fetch_add(1, Ordering::SeqCst));
    app.log(&JournalLine::Create {
        id: id.clone(),
        config: config.clone(),
    });
    let session = app.insert(GameSession {
        id: id.clone(),
        config,
        state: BoardState::initial(),
        history: Vec::new(),
        analysis: None,
    });
    let body = session.lock().unwrap().view();
    Ok((StatusCode::CREATED, Json(body)))
}

async fn get_game(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let session = app.get(&id)?;
    let body = session.lock().unwrap().view();
    Ok(Json(body))
}

async fn human_move(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    JsonBody(body): JsonBody<HumanMove>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let session = app.get(&id)?;
    let mut s = session.lock().unwrap();
    for sq in [body.from, body.to, body.arrow] {
        if Square::new(sq.file, sq.rank).is_none() {
            return Err(ApiError::unprocessable(format!("square ({}, {}) is off the board", sq.file, sq.rank)));
        }
    }
    s.ensure_ongoing()?;
    if s.state.side_to_move() != s.config.human_color {
        return Err(ApiError::conflict("not_your_turn", "it is the engine's turn"));
    }
    let mv = Move {
        from: body.from,
        to: body.to,
        arrow: body.arrow,
    };
    if !s.state.is_legal(&mv) {
        return Err(ApiError::conflict("illegal_move", format!("{mv} is not legal here")));
    }
    s.push(mv, Player::Human, None);
    app.log(&JournalLine::Move {
        id: id.clone(),
        notation: mv.to_string(),
        by: Player::Human,
        source: None,
    });
    Ok(Json(s.view()))
}

/// Deterministic per game and ply, so a replayed journal reproduces play.
fn engine_rng(seed: u64, ply: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (ply as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

async fn engine_move(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let session = app.get(&id)?;
    let worker_app = app.clone();
    tokio::task::spawn_blocking(move || {
        let mut s = session.lock().unwrap();
        s.ensure_ongoing()?;
        if s.state.side_to_move() == s.config.human_color {
            return Err(ApiError::conflict("not_engine_turn", "it is the human's turn"));
        }
        let ply = s.history.len();
        let mut rng = engine_rng(s.config.seed, ply);
        let models = worker_app.models.clone();
        let (mv, source, decision) = if s.config.engine == AgentKind::Hybrid {
            let cfg = HybridConfig {
                search: SearchConfig {
                    budget: s.config.budget,
                    ..Default::default()
                },
                strategy: s.config.strategy,
                ..Default::default()
            };
            let (decision, tree) = play_turn_with_tree(&s.state, &cfg, &models, &mut rng)
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "engine_failure", e.to_string()))?;
            let scores: HashMap<usize, f64> = decision.gat_scores.iter().copied().collect();
            let nodes = tree
                .dump()
                .into_iter()
                .map(|node| AnalysisNode {
                    gat_score: scores.get(&node.id).copied(),
                    node,
                })
                .collect();
            s.analysis = Some(Analysis {
                ply,
                decision: decision.clone(),
                nodes,
            });
            (decision.chosen, Some(decision.source), Some(decision))
        } else {
            let spec = AgentSpec {
                strategy: s.config.strategy,
                ..AgentSpec::new(s.config.engine, s.config.budget)
            };
            let ctx = AgentContext { models, service: None };
            let (mv, source) = choose_move(&spec, &ctx, &s.state, &mut rng)
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "engine_failure", e.to_string()))?;
            s.analysis = None;
            (mv, source, None)
        };
        if !s.state.is_legal(&mv) {
            return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "engine_failure", format!("engine produced illegal {mv}")));
        }
        s.push(mv, Player::Engine, source);
        worker_app.log(&JournalLine::Move {
            id: s.id.clone(),
            notation: mv.to_string(),
            by: Player::Engine,
            source,
        });
        let mut body = s.view();
        body["decision"] = serde_json::json!({
            "move": mv,
            "notation": mv.to_string(),
            "source": source,
            "uct_candidate": decision.as_ref().map(|d| d.uct_candidate),
            "sgga_candidate": decision.as_ref().and_then(|d| d.sgga_candidate),
            "gat_scores": decision.as_ref().map(|d| d.gat_scores.clone()),
            "tree_size": decision.as_ref().map(|d| d.tree_size),
        });
        Ok(Json(body))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "engine_failure", e.to_string()))?
}

async fn analysis(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<Analysis>, ApiError> {
    let session = app.get(&id)?;
    let s = session.lock().unwrap();
    s.analysis
        .clone()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_analysis", "no engine search has run in this game yet"))
}

pub async fn serve(app: Arc<AppState>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(app)).await?;
    Ok(())
}
