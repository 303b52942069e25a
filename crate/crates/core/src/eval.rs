//! Handcrafted evaluation measures.
//!
//! Every measure is reported from the point of view of the player who just
//! moved, so a search node can be scored by the side that owns it.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::board::{BoardState, Move, Side, Square, CELLS, DIRECTIONS};

/// Sentinel for squares no piece of the side can reach.
pub const UNREACHABLE: u8 = u8::MAX;
/// Largest queen reach of a single amazon on an empty board.
pub const MAX_SINGLE_REACH: f64 = 35.0;
/// Last ply (inclusive) at which the position measure uses queen distances.
pub const POSITION_QUEEN_PHASE_END: u32 = 30;
/// Bound on the per-square exponent of the position sum.
pub const POSITION_EXPONENT_CLAMP: i32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistanceMode {
    /// One step is a full queen slide.
    QueenMove,
    /// One step is a single king step.
    KingMove,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceField {
    d: [u8; CELLS],
    pub mode: DistanceMode,
    pub side: Side,
}

impl DistanceField {
    #[inline]
    pub fn get(&self, sq: Square) -> Option<u8> {
        let v = self.d[sq.index()];
        (v != UNREACHABLE).then_some(v)
    }

    pub fn raw(&self) -> &[u8; CELLS] {
        &self.d
    }
}

/// Multi-source BFS from the four pieces of `side`. Pieces of both colours
/// and arrows block movement.
pub fn distance_field(state: &BoardState, side: Side, mode: DistanceMode) -> DistanceField {
    let mut d = [UNREACHABLE; CELLS];
    let mut queue = VecDeque::with_capacity(CELLS);
    for &p in state.pieces(side) {
        d[p.index()] = 0;
        queue.push_back(p);
    }
    while let Some(cur) = queue.pop_front() {
        let next = d[cur.index()] + 1;
        for &(df, dr) in &DIRECTIONS {
            let mut sq = cur;
            while let Some(s) = sq.offset(df, dr) {
                if !state.is_empty(s) {
                    break;
                }
                if d[s.index()] == UNREACHABLE {
                    d[s.index()] = next;
                    queue.push_back(s);
                }
                if mode == DistanceMode::KingMove {
                    break;
                }
                sq = s;
            }
        }
    }
    DistanceField { d, mode, side }
}

/// Both sides' fields under one metric.
#[derive(Clone, Debug)]
pub struct FieldPair {
    pub white: DistanceField,
    pub black: DistanceField,
}

impl FieldPair {
    pub fn compute(state: &BoardState, mode: DistanceMode) -> FieldPair {
        FieldPair {
            white: distance_field(state, Side::White, mode),
            black: distance_field(state, Side::Black, mode),
        }
    }

    pub fn of(&self, side: Side) -> &DistanceField {
        match side {
            Side::White => &self.white,
            Side::Black => &self.black,
        }
    }
}

/// Share of contested empty squares that `side` reaches strictly first.
/// Ties and squares neither side reaches are ignored; 0.5 when nothing is
/// counted.
pub fn territory(state: &BoardState, side: Side, mode: DistanceMode) -> f64 {
    territory_from_fields(state, &FieldPair::compute(state, mode), side)
}

pub fn territory_from_fields(state: &BoardState, fields: &FieldPair, side: Side) -> f64 {
    let me = fields.of(side).raw();
    let opp = fields.of(side.opponent()).raw();
    let (mut n_me, mut n_opp) = (0u32, 0u32);
    for idx in 0..CELLS {
        if !state.is_empty(Square::from_index(idx)) {
            continue;
        }
        // UNREACHABLE is the largest u8, so plain comparison orders it last.
        match me[idx].cmp(&opp[idx]) {
            std::cmp::Ordering::Less => n_me += 1,
            std::cmp::Ordering::Greater => n_opp += 1,
            std::cmp::Ordering::Equal => {}
        }
    }
    if n_me + n_opp == 0 {
        0.5
    } else {
        f64::from(n_me) / f64::from(n_me + n_opp)
    }
}

/// Empty king-neighbours of the moved piece, over 8.
pub fn one_mobility(state_after_move: &BoardState, moved_to: Square) -> f64 {
    let free = moved_to.neighbors().filter(|&n| state_after_move.is_empty(n)).count();
    free as f64 / 8.0
}

/// Total queen reach of the side's four pieces, scaled into `[0, 1]` by the
/// four-piece ceiling of 4 × 35.
pub fn line_mobility(state_after_arrow: &BoardState, side: Side) -> f64 {
    let total: usize = state_after_arrow
        .pieces(side)
        .iter()
        .map(|&p| state_after_arrow.queen_reach_count(p, None))
        .sum();
    total as f64 / 4.0 / MAX_SINGLE_REACH
}

/// Raw position sum `Σ 2^(d_side − d_opp)` with the exponent clamped, plus
/// the number of squares that entered the sum.
pub fn position_raw(state: &BoardState, fields: &FieldPair, side: Side) -> (f64, usize) {
    let me = fields.of(side).raw();
    let opp = fields.of(side.opponent()).raw();
    let clamp = POSITION_EXPONENT_CLAMP;
    let mut p = 0.0;
    let mut counted = 0;
    for idx in 0..CELLS {
        if !state.is_empty(Square::from_index(idx)) {
            continue;
        }
        let exp = match (me[idx], opp[idx]) {
            (UNREACHABLE, UNREACHABLE) => continue,
            (UNREACHABLE, _) => clamp,
            (_, UNREACHABLE) => -clamp,
            (a, b) => (i32::from(a) - i32::from(b)).clamp(-clamp, clamp),
        };
        p += f64::powi(2.0, exp);
        counted += 1;
    }
    (p, counted)
}

/// Position measure for `side`, mapped to `(0, 1)` by `1 / (1 + p / n)`.
/// Queen distances are used up to ply 30, king distances after.
pub fn position_score(state: &BoardState, turn: u32, side: Side) -> f64 {
    let mode = if turn <= POSITION_QUEEN_PHASE_END {
        DistanceMode::QueenMove
    } else {
        DistanceMode::KingMove
    };
    position_from_fields(state, &FieldPair::compute(state, mode), side)
}

fn position_from_fields(state: &BoardState, fields: &FieldPair, side: Side) -> f64 {
    let (p, n) = position_raw(state, fields, side);
    if n == 0 {
        0.5
    } else {
        1.0 / (1.0 + p / n as f64)
    }
}

/// The five evaluation measures of a completed action.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureVector {
    pub adjacency_territory: f64,
    pub line_territory: f64,
    pub one_mobility: f64,
    pub line_mobility: f64,
    pub position: f64,
}

impl MeasureVector {
    pub const LEN: usize = 5;

    pub fn to_array(&self) -> [f64; 5] {
        [
            self.adjacency_territory,
            self.line_territory,
            self.one_mobility,
            self.line_mobility,
            self.position,
        ]
    }

    pub fn from_array(a: [f64; 5]) -> MeasureVector {
        MeasureVector {
            adjacency_territory: a[0],
            line_territory: a[1],
            one_mobility: a[2],
            line_mobility: a[3],
            position: a[4],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.to_array()
            .iter()
            .all(|v| v.is_finite() && (0.0..=1.0).contains(v))
    }
}

/// Measures of `mv` for the player who made it. `state_after` must be
/// `state_before` with `mv` applied.
pub fn measures(state_before: &BoardState, mv: &Move, state_after: &BoardState) -> MeasureVector {
    let mover = state_before.side_to_move();
    let king = FieldPair::compute(state_after, DistanceMode::KingMove);
    let queen = FieldPair::compute(state_after, DistanceMode::QueenMove);
    let position_fields = if state_after.turn() <= POSITION_QUEEN_PHASE_END {
        &queen
    } else {
        &king
    };
    MeasureVector {
        adjacency_territory: territory_from_fields(state_after, &king, mover),
        line_territory: territory_from_fields(state_after, &queen, mover),
        one_mobility: one_mobility(state_after, mv.to),
        line_mobility: line_mobility(state_after, mover),
        position: position_from_fields(state_after, position_fields, mover),
    }
}
