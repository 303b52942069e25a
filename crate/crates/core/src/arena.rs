//! Agent-versus-agent matches with alternating colours, binomial
//! confidence intervals and CSV reports.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{BoardState, GameStatus, Move, Side, MAX_PLIES};
use crate::datagen::{build_move_prompt, parse_move_reply, ChatContext, RatingService};
use crate::eval::{territory, DistanceMode};
use crate::hybrid::{gat_rank, extract_subgraph, play_turn, uct_candidate, DecisionStrategy, HybridConfig, Source};
use crate::neuralkit::ModelBundle;
use crate::search::{run_search, SearchConfig};
use crate::sgga::{run_sgga, trace_trajectory, SggaConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArenaError {
    #[error("agent failed: {0}")]
    AgentFailure(String),
    #[error("a match needs at least one game")]
    NoGames,
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Hybrid,
    UctAe,
    Sgga,
    GatAe,
    Llm,
    Random,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Hybrid => "hybrid",
            AgentKind::UctAe => "uct-ae",
            AgentKind::Sgga => "sgga",
            AgentKind::GatAe => "gat-ae",
            AgentKind::Llm => "llm",
            AgentKind::Random => "random",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "hybrid" => AgentKind::Hybrid,
            "uct-ae" => AgentKind::UctAe,
            "sgga" => AgentKind::Sgga,
            "gat-ae" => AgentKind::GatAe,
            "llm" => AgentKind::Llm,
            "random" => AgentKind::Random,
            _ => return Err(format!("unknown agent '{s}'")),
        })
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub kind: AgentKind,
    pub budget: usize,
    pub strategy: DecisionStrategy,
}

impl AgentSpec {
    pub fn new(kind: AgentKind, budget: usize) -> AgentSpec {
        AgentSpec {
            kind,
            budget,
            strategy: DecisionStrategy::Softmax,
        }
    }
}

/// Shared read-only resources of a match.
#[derive(Clone)]
pub struct AgentContext {
    pub models: Arc<ModelBundle>,
    /// Needed only by the language-model player.
    pub service: Option<Arc<RatingService>>,
}

pub const LLM_REPROMPTS: usize = 3;

/// Highest adjacency-territory legal move; first in generation order on ties.
pub fn best_territory_move(state: &BoardState) -> Option<Move> {
    let me = state.side_to_move();
    let mut best: Option<(f64, Move)> = None;
    for mv in state.legal_moves() {
        let t = territory(&state.apply_unchecked(&mv), me, DistanceMode::KingMove);
        if best.is_none_or(|(b, _)| t > b) {
            best = Some((t, mv));
        }
    }
    best.map(|(_, m)| m)
}

/// One move for `state` from the agent described by `spec`.
pub fn choose_move(spec: &AgentSpec, ctx: &AgentContext, state: &BoardState, rng: &mut ChaCha8Rng) -> Result<(Move, Option<Source>), ArenaError> {
    let fail = |e: &dyn std::fmt::Display| ArenaError::AgentFailure(e.to_string());
    let search = SearchConfig {
        budget: spec.budget,
        ..Default::default()
    };
    let models = ctx.models.as_ref();
    match spec.kind {
        AgentKind::Random => {
            let moves = state.legal_moves();
            if moves.is_empty() {
                return Err(ArenaError::AgentFailure("no legal moves".into()));
            }
            Ok((moves[rng.random_range(0..moves.len())], None))
        }
        AgentKind::Hybrid => {
            let cfg = HybridConfig {
                search,
                strategy: spec.strategy,
                ..Default::default()
            };
            let d = play_turn(state, &cfg, models, rng).map_err(|e| fail(&e))?;
            Ok((d.chosen, Some(d.source)))
        }
        AgentKind::UctAe => {
            let tree = run_search(state, models, &search, rng).map_err(|e| fail(&e))?;
            let c = uct_candidate(&tree).ok_or_else(|| fail(&"empty tree"))?;
            Ok((c.mv, Some(Source::UctArgmax)))
        }
        AgentKind::Sgga => {
            let mut tree = run_search(state, models, &search, rng).map_err(|e| fail(&e))?;
            let fallback = uct_candidate(&tree).ok_or_else(|| fail(&"empty tree"))?.mv;
            tree.propagate_values().map_err(|e| fail(&e))?;
            let out = run_sgga(&tree, &SggaConfig::default(), rng).map_err(|e| fail(&e))?;
            match out.target.and_then(|t| trace_trajectory(&tree, t).ok()) {
                Some(mv) => Ok((mv, Some(Source::SggaGat))),
                None => Ok((fallback, Some(Source::Fallback))),
            }
        }
        AgentKind::GatAe => {
            let mut tree = run_search(state, models, &search, rng).map_err(|e| fail(&e))?;
            tree.propagate_values().map_err(|e| fail(&e))?;
            let sub = extract_subgraph(&tree, None, models).map_err(|e| fail(&e))?;
            let own = |id: usize| tree.node(id).height % 2 == 0;
            let r = gat_rank(&sub, &models.gat, Some(&own)).map_err(|e| fail(&e))?;
            let mv = trace_trajectory(&tree, r.best).map_err(|e| fail(&e))?;
            Ok((mv, Some(Source::SggaGat)))
        }
        AgentKind::Llm => {
            let service = ctx.service.as_ref().ok_or_else(|| fail(&"language-model player needs a provider"))?;
            let prompt = build_move_prompt(state);
            for _ in 0..LLM_REPROMPTS {
                let reply = service.chat(&prompt, ChatContext::MovePick { state }).map_err(|e| fail(&e))?;
                if let Some(mv) = parse_move_reply(&reply).filter(|m| state.is_legal(m)) {
                    return Ok((mv, None));
                }
            }
            best_territory_move(state)
                .map(|m| (m, Some(Source::Fallback)))
                .ok_or_else(|| fail(&"no legal moves"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Seat {
    A,
    B,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub game: usize,
    pub a_color: Side,
    pub winner: Seat,
    pub plies: usize,
    pub moves: Vec<Move>,
    pub sources: Vec<Option<Source>>,
    /// Seat whose agent failed, with the error.
    pub failure: Option<(Seat, String)>,
    pub wall_ms: u64,
}

pub fn game_seed(seed: u64, game: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ (game as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Plays one game; every move is re-checked here before it is applied.
pub fn play_game(a: &AgentSpec, b: &AgentSpec, ctx: &AgentContext, a_color: Side, game: usize, seed: u64) -> MatchRecord {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(game_seed(seed, game));
    let mut state = BoardState::initial();
    let mut moves = Vec::new();
    let mut sources = Vec::new();
    let seat_of = |side: Side| if side == a_color { Seat::A } else { Seat::B };
    let mut failure = None;
    while state.status() == GameStatus::Ongoing && moves.len() < MAX_PLIES {
        let seat = seat_of(state.side_to_move());
        let spec = if seat == Seat::A { a } else { b };
        match choose_move(spec, ctx, &state, &mut rng) {
            Ok((mv, src)) if state.is_legal(&mv) => {
                state = state.apply_move(&mv).expect("checked legal");
                moves.push(mv);
                sources.push(src);
            }
            Ok((mv, _)) => {
                failure = Some((seat, format!("illegal move {mv}")));
                break;
            }
            Err(e) => {
                failure = Some((seat, e.to_string()));
                break;
            }
        }
    }
    let winner = match &failure {
        Some((Seat::A, _)) => Seat::B,
        Some((Seat::B, _)) => Seat::A,
        None => seat_of(state.status().winner().expect("game ended")),
    };
    MatchRecord {
        game,
        a_color,
        winner,
        plies: moves.len(),
        moves,
        sources,
        failure,
        wall_ms: start.elapsed().as_millis() as u64,
    }
}

/// `(p, lo, hi)` with half-width `z·sqrt(p(1 − p)/n)`, clamped to `[0, 1]`.
pub fn win_rate_ci(wins: usize, n: usize, z: f64) -> (f64, f64, f64) {
    assert!(n >= 1 && wins <= n);
    let p = wins as f64 / n as f64;
    let half = z * (p * (1.0 - p) / n as f64).sqrt();
    (p, (p - half).max(0.0), (p + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchSummary {
    pub a: AgentKind,
    pub b: AgentKind,
    pub budget_a: usize,
    pub budget_b: usize,
    pub games: usize,
    pub wins_a: usize,
    pub wins_b: usize,
    pub failures_a: usize,
    pub failures_b: usize,
    pub a_as_white: usize,
    pub win_rate_a: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Running win rate of A after each game.
    pub curve: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub summary: MatchSummary,
    pub records: Vec<MatchRecord>,
}

/// Plays `n_games` in parallel; A takes white in even-numbered games.
pub fn run_match(a: &AgentSpec, b: &AgentSpec, ctx: &AgentContext, n_games: usize, seed: u64) -> Result<MatchReport, ArenaError> {
    if n_games == 0 {
        return Err(ArenaError::NoGames);
    }
    let records: Vec<MatchRecord> = (0..n_games)
        .into_par_iter()
        .map(|g| {
            let color = if g % 2 == 0 { Side::White } else { Side::Black };
            play_game(a, b, ctx, color, g, seed)
        })
        .collect();
    Ok(MatchReport {
        summary: summarize(a, b, &records),
        records,
    })
}

pub fn summarize(a: &AgentSpec, b: &AgentSpec, records: &[MatchRecord]) -> MatchSummary {
    let mut wins_a = 0;
    let mut curve = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if r.winner == Seat::A {
            wins_a += 1;
        }
        curve.push(wins_a as f64 / (i + 1) as f64);
    }
    let games = records.len();
    let (p, lo, hi) = win_rate_ci(wins_a, games.max(1), 1.96);
    let failed = |s: Seat| records.iter().filter(|r| matches!(&r.failure, Some((x, _)) if *x == s)).count();
    MatchSummary {
        a: a.kind,
        b: b.kind,
        budget_a: a.budget,
        budget_b: b.budget,
        games,
        wins_a,
        wins_b: games - wins_a,
        failures_a: failed(Seat::A),
        failures_b: failed(Seat::B),
        a_as_white: records.iter().filter(|r| r.a_color == Side::White).count(),
        win_rate_a: p,
        ci_lo: lo,
        ci_hi: hi,
        curve,
    }
}

fn pairing(s: &MatchSummary) -> String {
    format!("{}@{}-vs-{}@{}", s.a, s.budget_a, s.b, s.budget_b)
}

/// Writes `curves.csv`, `ci.csv` and `games.csv` into `out_dir`.
pub fn emit_report(reports: &[MatchReport], out_dir: &Path) -> Result<(), ArenaError> {
    let io = |e: &dyn std::fmt::Display| ArenaError::Io(e.to_string());
    std::fs::create_dir_all(out_dir).map_err(|e| io(&e))?;
    let mut curves = csv::Writer::from_path(out_dir.join("curves.csv")).map_err(|e| io(&e))?;
    let mut ci = csv::Writer::from_path(out_dir.join("ci.csv")).map_err(|e| io(&e))?;
    let mut games = csv::Writer::from_path(out_dir.join("games.csv")).map_err(|e| io(&e))?;
    curves.write_record(["pairing", "game", "wins_a", "win_rate_a"]).map_err(|e| io(&e))?;
    ci.write_record(["pairing", "games", "wins_a", "win_rate_a", "lo", "hi", "failures_a", "failures_b"]).map_err(|e| io(&e))?;
    games
        .write_record(["pairing", "game", "a_color", "winner", "plies", "failure", "wall_ms", "moves"])
        .map_err(|e| io(&e))?;
    for rep in reports {
        let s = &rep.summary;
        let name = pairing(s);
        let mut wins = 0;
        for (i, r) in rep.records.iter().enumerate() {
            wins += usize::from(r.winner == Seat::A);
            curves
                .write_record([name.clone(), r.game.to_string(), wins.to_string(), format!("{:.6}", s.curve[i])])
                .map_err(|e| io(&e))?;
            let moves: Vec<String> = r.moves.iter().map(Move::to_string).collect();
            games
                .write_record([
                    name.clone(),
                    r.game.to_string(),
                    r.a_color.name().to_owned(),
                    format!("{:?}", r.winner),
                    r.plies.to_string(),
                    r.failure.as_ref().map(|(seat, m)| format!("{seat:?}: {m}")).unwrap_or_default(),
                    r.wall_ms.to_string(),
                    moves.join(" "),
                ])
                .map_err(|e| io(&e))?;
        }
        ci.write_record([
            name,
            s.games.to_string(),
            s.wins_a.to_string(),
            format!("{:.6}", s.win_rate_a),
            format!("{:.6}", s.ci_lo),
            format!("{:.6}", s.ci_hi),
            s.failures_a.to_string(),
            s.failures_b.to_string(),
        ])
        .map_err(|e| io(&e))?;
    }
    for w in [&mut curves, &mut ci, &mut games] {
        w.flush().map_err(|e| io(&e))?;
    }
    Ok(())
}
