//! Amazons rules engine on the standard 10×10 board.
//!
//! Squares are addressed by `(file, rank)` with `(0, 0)` at `a1`. A position
//! keeps a cell grid plus the two piece lists and the arrow set; all three
//! views are kept consistent by construction. Piece lists are stored sorted
//! by square index so that a position has exactly one representation.
//!
//! ```text
//! rank 9  . . . 2 . . 2 . . .      White: d1 g1 a4 j4
//!         . . . . . . . . . .      Black: a7 j7 d10 g10
//! rank 6  2 . . . . . . . . 2
//!         . . . . . . . . . .
//!         . . . . . . . . . .
//! rank 3  1 . . . . . . . . 1
//!         . . . . . . . . . .
//!         . . . . . . . . . .
//! rank 0  . . . 1 . . 1 . . .
//!         file 0 ........ file 9
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SIZE: usize = 10;
pub const CELLS: usize = SIZE * SIZE;
pub const PIECES_PER_SIDE: usize = 4;
/// Upper bound on game length: one arrow per ply on the 92 free squares.
pub const MAX_PLIES: usize = CELLS - 2 * PIECES_PER_SIDE;

/// The eight queen directions as `(dfile, drank)`.
pub const DIRECTIONS: [(i8, i8); 8] = [
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BoardError {
    #[error("illegal move {0}")]
    IllegalMove(Move),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("inconsistent position: {0}")]
    Inconsistent(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Square {
    pub file: u8,
    pub rank: u8,
}

impl Square {
    pub fn new(file: u8, rank: u8) -> Option<Square> {
        (usize::from(file) < SIZE && usize::from(rank) < SIZE).then_some(Square { file, rank })
    }

    #[inline]
    pub fn index(self) -> usize {
        usize::from(self.rank) * SIZE + usize::from(self.file)
    }

    #[inline]
    pub fn from_index(idx: usize) -> Square {
        debug_assert!(idx < CELLS);
        Square {
            file: (idx % SIZE) as u8,
            rank: (idx / SIZE) as u8,
        }
    }

    #[inline]
    pub fn offset(self, df: i8, dr: i8) -> Option<Square> {
        let f = self.file as i8 + df;
        let r = self.rank as i8 + dr;
        if (0..SIZE as i8).contains(&f) && (0..SIZE as i8).contains(&r) {
            Some(Square {
                file: f as u8,
                rank: r as u8,
            })
        } else {
            None
        }
    }

    /// King-move neighbours in direction order.
    pub fn neighbors(self) -> impl Iterator<Item = Square> {
        DIRECTIONS
            .iter()
            .filter_map(move |&(df, dr)| self.offset(df, dr))
    }

    /// 180° rotation of the board.
    pub fn rotated(self) -> Square {
        Square {
            file: (SIZE - 1) as u8 - self.file,
            rank: (SIZE - 1) as u8 - self.rank,
        }
    }
}

impl fmt::Display for Square {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", (b'a' + self.file) as char, self.rank + 1)
    }
}

impl FromStr for Square {
    type Err = BoardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let mut chars = s.chars();
        let letter = chars
            .next()
            .ok_or_else(|| BoardError::Parse("empty square".into()))?
            .to_ascii_lowercase();
        if !('a'..='j').contains(&letter) {
            return Err(BoardError::Parse(format!("bad file in {s:?}")));
        }
        let rank: u8 = chars
            .as_str()
            .parse()
            .map_err(|_| BoardError::Parse(format!("bad rank in {s:?}")))?;
        if !(1..=10).contains(&rank) {
            return Err(BoardError::Parse(format!("rank out of range in {s:?}")));
        }
        Ok(Square {
            file: letter as u8 - b'a',
            rank: rank - 1,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Empty,
    White,
    Black,
    Arrow,
}

impl Cell {
    pub fn encode(self) -> u8 {
        match self {
            Cell::Empty => 0,
            Cell::White => 1,
            Cell::Black => 2,
            Cell::Arrow => 3,
        }
    }

    pub fn decode(code: u8) -> Option<Cell> {
        match code {
            0 => Some(Cell::Empty),
            1 => Some(Cell::White),
            2 => Some(Cell::Black),
            3 => Some(Cell::Arrow),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    White,
    Black,
}

impl Side {
    pub fn opponent(self) -> Side {
        match self {
            Side::White => Side::Black,
            Side::Black => Side::White,
        }
    }

    pub fn cell(self) -> Cell {
        match self {
            Side::White => Cell::White,
            Side::Black => Cell::Black,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::White => "white",
            Side::Black => "black",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Side {
    type Err = BoardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "white" | "w" => Ok(Side::White),
            "black" | "b" => Ok(Side::Black),
            other => Err(BoardError::Parse(format!("unknown side {other:?}"))),
        }
    }
}

/// One full turn: move an amazon, then shoot an arrow from its new square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Move {
    pub from: Square,
    pub to: Square,
    pub arrow: Square,
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}/{}", self.from, self.to, self.arrow)
    }
}

impl FromStr for Move {
    type Err = BoardError;

    /// Parses `from-to/arrow`, e.g. `d1-d7/g7`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (from, rest) = s
            .split_once('-')
            .ok_or_else(|| BoardError::Parse(format!("missing '-' in {s:?}")))?;
        let (to, arrow) = rest
            .split_once('/')
            .ok_or_else(|| BoardError::Parse(format!("missing '/' in {s:?}")))?;
        Ok(Move {
            from: from.parse()?,
            to: to.parse()?,
            arrow: arrow.parse()?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GameStatus {
    Ongoing,
    WhiteWins,
    BlackWins,
}

impl GameStatus {
    pub fn winner(self) -> Option<Side> {
        match self {
            GameStatus::Ongoing => None,
            GameStatus::WhiteWins => Some(Side::White),
            GameStatus::BlackWins => Some(Side::Black),
        }
    }

    fn won_by(side: Side) -> GameStatus {
        match side {
            Side::White => GameStatus::WhiteWins,
            Side::Black => GameStatus::BlackWins,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoardState {
    grid: [Cell; CELLS],
    white: [Square; PIECES_PER_SIDE],
    black: [Square; PIECES_PER_SIDE],
    arrows: Vec<Square>,
    side_to_move: Side,
    turn: u32,
}

impl Default for BoardState {
    fn default() -> Self {
        Self::initial()
    }
}

impl BoardState {
    /// Standard tournament setup, White to move.
    pub fn initial() -> BoardState {
        let sq = |f, r| Square { file: f, rank: r };
        Self::from_pieces(
            [sq(3, 0), sq(6, 0), sq(0, 3), sq(9, 3)],
            [sq(0, 6), sq(9, 6), sq(3, 9), sq(6, 9)],
            &[],
            Side::White,
        )
        .expect("initial setup is consistent")
    }

    /// Builds a position from explicit piece and arrow placements. `turn` is
    /// set to the arrow count.
    pub fn from_pieces(
        white: [Square; PIECES_PER_SIDE],
        black: [Square; PIECES_PER_SIDE],
        arrows: &[Square],
        side_to_move: Side,
    ) -> Result<BoardState, BoardError> {
        let mut grid = [Cell::Empty; CELLS];
        let mut place = |sq: Square, cell: Cell| {
            if grid[sq.index()] != Cell::Empty {
                return Err(BoardError::Inconsistent(format!("square {sq} used twice")));
            }
            grid[sq.index()] = cell;
            Ok(())
        };
        for &s in &white {
            place(s, Cell::White)?;
        }
        for &s in &black {
            place(s, Cell::Black)?;
        }
        for &s in arrows {
            place(s, Cell::Arrow)?;
        }
        Self::from_grid(grid, side_to_move, arrows.len() as u32)
    }

    /// Builds a position from a cell grid, validating piece counts and that
    /// `turn` equals the number of arrows.
    pub fn from_grid(grid: [Cell; CELLS], side_to_move: Side, turn: u32) -> Result<BoardState, BoardError> {
        let mut white = Vec::with_capacity(PIECES_PER_SIDE);
        let mut black = Vec::with_capacity(PIECES_PER_SIDE);
        let mut arrows = Vec::new();
        for (idx, cell) in grid.iter().enumerate() {
            match cell {
                Cell::White => white.push(Square::from_index(idx)),
                Cell::Black => black.push(Square::from_index(idx)),
                Cell::Arrow => arrows.push(Square::from_index(idx)),
                Cell::Empty => {}
            }
        }
        if white.len() != PIECES_PER_SIDE || black.len() != PIECES_PER_SIDE {
            return Err(BoardError::Inconsistent(format!(
                "expected 4 pieces per side, found {} white and {} black",
                white.len(),
                black.len()
            )));
        }
        if arrows.len() != turn as usize {
            return Err(BoardError::Inconsistent(format!(
                "{} arrows but turn {}",
                arrows.len(),
                turn
            )));
        }
        Ok(BoardState {
            grid,
            white: white.try_into().expect("length checked"),
            black: black.try_into().expect("length checked"),
            arrows,
            side_to_move,
            turn,
        })
    }

    #[inline]
    pub fn cell(&self, sq: Square) -> Cell {
        self.grid[sq.index()]
    }

    #[inline]
    pub fn is_empty(&self, sq: Square) -> bool {
        self.grid[sq.index()] == Cell::Empty
    }

    pub fn grid(&self) -> &[Cell; CELLS] {
        &self.grid
    }

    pub fn pieces(&self, side: Side) -> &[Square; PIECES_PER_SIDE] {
        match side {
            Side::White => &self.white,
            Side::Black => &self.black,
        }
    }

    pub fn arrows(&self) -> &[Square] {
        &self.arrows
    }

    pub fn side_to_move(&self) -> Side {
        self.side_to_move
    }

    pub fn turn(&self) -> u32 {
        self.turn
    }

    /// Squares reachable by one queen move from `origin`, walking direction
    /// by direction and outward within a direction. `ignore` is treated as
    /// empty.
    pub fn queen_reachable(&self, origin: Square, ignore: Option<Square>) -> Vec<Square> {
        let mut out = Vec::with_capacity(35);
        self.for_each_queen_target(origin, ignore, |sq| out.push(sq));
        out
    }

    #[inline]
    pub(crate) fn for_each_queen_target(&self, origin: Square, ignore: Option<Square>, mut f: impl FnMut(Square)) {
        for &(df, dr) in &DIRECTIONS {
            let mut cur = origin;
            while let Some(next) = cur.offset(df, dr) {
                if !self.is_empty(next) && Some(next) != ignore {
                    break;
                }
                f(next);
                cur = next;
            }
        }
    }

    pub fn queen_reach_count(&self, origin: Square, ignore: Option<Square>) -> usize {
        let mut n = 0;
        self.for_each_queen_target(origin, ignore, |_| n += 1);
        n
    }

    /// All legal moves for the side to move, ordered by piece index, then
    /// destination, then arrow (each in ray-walk order).
    pub fn legal_moves(&self) -> Vec<Move> {
        let mut out = Vec::new();
        for i in 0..PIECES_PER_SIDE {
            self.piece_moves_into(i, &mut out);
        }
        out
    }

    /// Legal moves of the `piece_index`-th amazon of the side to move.
    pub fn piece_moves(&self, piece_index: usize) -> Vec<Move> {
        let mut out = Vec::new();
        self.piece_moves_into(piece_index, &mut out);
        out
    }

    fn piece_moves_into(&self, piece_index: usize, out: &mut Vec<Move>) {
        let from = self.pieces(self.side_to_move)[piece_index];
        self.for_each_queen_target(from, None, |to| {
            self.for_each_queen_target(to, Some(from), |arrow| out.push(Move { from, to, arrow }));
        });
    }

    /// Whether `mv` is legal here, checked directly from the rules rather than
    /// by searching the generated move list.
    pub fn is_legal(&self, mv: &Move) -> bool {
        if self.cell(mv.from) != self.side_to_move.cell() || mv.from == mv.to || mv.to == mv.arrow {
            return false;
        }
        clear_line(self, mv.from, mv.to, None) && clear_line(self, mv.to, mv.arrow, Some(mv.from))
    }

    /// Returns the position after `mv`; `self` is left untouched.
    pub fn apply_move(&self, mv: &Move) -> Result<BoardState, BoardError> {
        if !self.is_legal(mv) {
            return Err(BoardError::IllegalMove(*mv));
        }
        Ok(self.apply_unchecked(mv))
    }

    pub(crate) fn apply_unchecked(&self, mv: &Move) -> BoardState {
        let mut next = self.clone();
        let mover = self.side_to_move;
        next.grid[mv.from.index()] = Cell::Empty;
        next.grid[mv.to.index()] = mover.cell();
        next.grid[mv.arrow.index()] = Cell::Arrow;
        let pieces = match mover {
            Side::White => &mut next.white,
            Side::Black => &mut next.black,
        };
        if let Some(p) = pieces.iter_mut().find(|p| **p == mv.from) {
            *p = mv.to;
        }
        pieces.sort_by_key(|s| s.index());
        let pos = next.arrows.binary_search_by_key(&mv.arrow.index(), |s| s.index()).unwrap_or_else(|e| e);
        next.arrows.insert(pos, mv.arrow);
        next.side_to_move = mover.opponent();
        next.turn += 1;
        next
    }

    /// True when `side` has at least one legal move. Any amazon with an empty
    /// neighbour can step there and shoot back at the square it left.
    pub fn has_moves(&self, side: Side) -> bool {
        self.pieces(side)
            .iter()
            .any(|p| p.neighbors().any(|n| self.is_empty(n)))
    }

    pub fn status(&self) -> GameStatus {
        if self.has_moves(self.side_to_move) {
            GameStatus::Ongoing
        } else {
            GameStatus::won_by(self.side_to_move.opponent())
        }
    }

    /// Ten lines of ten digits, top rank first.
    pub fn encode_grid(&self) -> String {
        let mut s = String::with_capacity(CELLS + SIZE);
        for rank in (0..SIZE).rev() {
            for file in 0..SIZE {
                s.push((b'0' + self.grid[rank * SIZE + file].encode()) as char);
            }
            s.push('\n');
        }
        s
    }

    /// Inverse of [`encode_grid`](Self::encode_grid); side to move and turn
    /// are not part of the grid text.
    pub fn parse_grid(text: &str, side_to_move: Side, turn: u32) -> Result<BoardState, BoardError> {
        let grid = parse_grid_cells(text)?;
        Self::from_grid(grid, side_to_move, turn)
    }

    /// Checks the grid / piece list / arrow set consistency invariants.
    pub fn validate(&self) -> Result<(), BoardError> {
        let rebuilt = Self::from_grid(self.grid, self.side_to_move, self.turn)?;
        if rebuilt.white != self.white || rebuilt.black != self.black || rebuilt.arrows != self.arrows {
            return Err(BoardError::Inconsistent("piece lists disagree with grid".into()));
        }
        Ok(())
    }

    /// 180° rotation with colours swapped. The side to move is swapped too,
    /// so the result is the same game seen from the other chair.
    pub fn rotated_color_swap(&self) -> BoardState {
        let mut grid = [Cell::Empty; CELLS];
        for (idx, &cell) in self.grid.iter().enumerate() {
            let target = Square::from_index(idx).rotated().index();
            grid[target] = match cell {
                Cell::White => Cell::Black,
                Cell::Black => Cell::White,
                c => c,
            };
        }
        Self::from_grid(grid, self.side_to_move.opponent(), self.turn).expect("rotation preserves consistency")
    }
}

pub fn parse_grid_cells(text: &str) -> Result<[Cell; CELLS], BoardError> {
    let lines: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
    if lines.len() != SIZE {
        return Err(BoardError::Parse(format!("expected 10 lines, found {}", lines.len())));
    }
    let mut grid = [Cell::Empty; CELLS];
    for (row, line) in lines.iter().enumerate() {
        let bytes = line.as_bytes();
        if bytes.len() != SIZE {
            return Err(BoardError::Parse(format!(
                "line {} has {} characters, expected 10",
                row + 1,
                bytes.len()
            )));
        }
        let rank = SIZE - 1 - row;
        for (file, &b) in bytes.iter().enumerate() {
            let cell = b
                .checked_sub(b'0')
                .and_then(Cell::decode)
                .ok_or_else(|| BoardError::Parse(format!("bad digit {:?} on line {}", b as char, row + 1)))?;
            grid[rank * SIZE + file] = cell;
        }
    }
    Ok(grid)
}

/// True when `to` lies on a queen line from `from` with every square strictly
/// between them, and `to` itself, empty (or equal to `ignore`).
fn clear_line(state: &BoardState, from: Square, to: Square, ignore: Option<Square>) -> bool {
    let df = to.file as i8 - from.file as i8;
    let dr = to.rank as i8 - from.rank as i8;
    if (df, dr) == (0, 0) || !(df == 0 || dr == 0 || df.abs() == dr.abs()) {
        return false;
    }
    let (sf, sr) = (df.signum(), dr.signum());
    let mut cur = from;
    loop {
        cur = match cur.offset(sf, sr) {
            Some(s) => s,
            None => return false,
        };
        if !state.is_empty(cur) && Some(cur) != ignore {
            return false;
        }
        if cur == to {
            return true;
        }
    }
}
