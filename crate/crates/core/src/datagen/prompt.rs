//! Rating prompt and reply parsing.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::DatagenError;
use crate::board::{BoardState, Move, Side, Square};

/// The position after a move together with the move that produced it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRequest {
    pub grid_text: String,
    pub chess: Side,
    pub step_from: Square,
    pub step_to: Square,
    pub put: Square,
}

impl RatingRequest {
    pub fn new(after: &BoardState, mover: Side, mv: &Move) -> RatingRequest {
        RatingRequest {
            grid_text: after.encode_grid(),
            chess: mover,
            step_from: mv.from,
            step_to: mv.to,
            put: mv.arrow,
        }
    }

    /// 1 for white, 2 for black, matching the grid digits.
    pub fn target(&self) -> u8 {
        match self.chess {
            Side::White => 1,
            Side::Black => 2,
        }
    }
}

const RULES: &str = "Amazon is a two-player abstract strategy game that combines elements of strategy and board games. Below are the basic rules of Amazon:

1.Board and Pieces
Board: Amazon is played on a 10\u{d7}10 grid.
Pieces: Each player has four \u{201c}Amazons\u{201d}, typically distinguished by color (e.g., White vs. Black).

2.Objective
Players aim to occupy as much space as possible by moving their Amazons and firing arrows, while simultaneously blocking the opponent\u{2019}s mobility.

3.Rules of Play
Initial Setup: Each player\u{2019}s four Amazons are placed on predetermined squares of the first and last ranks.
Turn Sequence: Players alternate turns. On your turn, you perform two actions in order:
    Move: Choose one of your Amazons and move it along any straight line\u{2014}horizontal, vertical, or diagonal\u{2014}for any number of empty squares, without jumping over other pieces.
    Shoot: After moving, choose a target square along another straight line from that Amazon\u{2019}s new location; that square becomes permanently blocked and cannot be occupied or traversed.
Restrictions: You may not move into or shoot at squares that are already occupied or already blocked.

4.Additional Rule
Players must ensure they follow the movement and shooting rules at every step.

Please review the above rules. Now you are a professional Amazon player, and the current position is:
";

pub fn build_prompt(req: &RatingRequest) -> String {
    let mut s = String::with_capacity(2400);
    s.push_str(RULES);
    s.push('\n');
    s.push_str(req.grid_text.trim_end());
    s.push_str("\n\n");
    s.push_str(&format!(
        "Here, 1 represents White Amazons, 2 represents Black Amazons, and 3 represents blocked squares. \
         You are to evaluate the move just played by player {} (ID {}): they moved the Amazon with index {} to square {}, \
         then place an obstacle at {}. Based on both the current and potential future positions, \
         score this turn using two values (each between 0 and 1):\n\n",
        req.chess.name(),
        req.target(),
        req.step_from,
        req.step_to,
        req.put
    ));
    s.push_str("[move_score place_score]\n\n");
    s.push_str("A score closer to 1 favors the player; closer to 0 favors the opponent.\n\n");
    s.push_str("Please output exactly the above format and no other text.\n");
    s
}

/// Prompt asking for a whole move, used by the language-model player.
pub fn build_move_prompt(state: &BoardState) -> String {
    let side = state.side_to_move();
    let mut s = String::with_capacity(2400);
    s.push_str(RULES);
    s.push('\n');
    s.push_str(state.encode_grid().trim_end());
    s.push_str("\n\n");
    s.push_str(&format!(
        "Here, 1 represents White Amazons, 2 represents Black Amazons, and 3 represents blocked squares. \
         The top line is rank 10 and the bottom line is rank 1; files run a to j from left to right. \
         You play {} (ID {}). Choose your next turn and write it as FROM-TO/ARROW, for example d1-d7/g7.\n\n",
        side.name(),
        match side {
            Side::White => 1,
            Side::Black => 2,
        }
    ));
    s.push_str("Please output exactly the above format and no other text.\n");
    s
}

static STRICT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[?\s*(\d+(?:\.\d+)?)\s+(\d+(?:\.\d+)?)\s*\]?$").expect("valid pattern"));
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d+(?:\.\d+)?").expect("valid pattern"));

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Reads `[move_score place_score]`. A strict single-line match is tried
/// first, then the first two numbers in `[0, 1]` anywhere in the text.
pub fn parse_scores(text: &str) -> Result<(f64, f64), DatagenError> {
    let trimmed = text.trim();
    if let Some(c) = STRICT.captures(trimmed) {
        let a: f64 = c[1].parse().expect("digits");
        let b: f64 = c[2].parse().expect("digits");
        if in_unit(a) && in_unit(b) {
            return Ok((a, b));
        }
    }
    let numbers: Vec<f64> = NUMBER.find_iter(trimmed).filter_map(|m| m.as_str().parse().ok()).collect();
    let valid: Vec<f64> = numbers.iter().copied().filter(|&x| in_unit(x)).collect();
    match valid.as_slice() {
        [a, b, ..] => Ok((*a, *b)),
        [] if !numbers.is_empty() => Err(DatagenError::OutOfRange(trimmed.chars().take(80).collect())),
        _ => Err(DatagenError::Parse(trimmed.chars().take(80).collect())),
    }
}

/// Extracts the first `xx-yy/zz` token from a reply.
pub fn parse_move_reply(text: &str) -> Option<Move> {
    static MOVE: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"[a-jA-J](?:10|[1-9])\s*-\s*[a-jA-J](?:10|[1-9])\s*/\s*[a-jA-J](?:10|[1-9])").expect("valid pattern"));
    let m = MOVE.find(text)?;
    let compact: String = m.as_str().chars().filter(|c| !c.is_whitespace()).collect();
    compact.to_ascii_lowercase().parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(side: Side) -> RatingRequest {
        let s = BoardState::initial();
        let mv: Move = "d1-d7/g7".parse().unwrap();
        RatingRequest::new(&s.apply_move(&mv).unwrap(), side, &mv)
    }

    #[test]
    fn strict_and_lenient() {
        assert_eq!(parse_scores("[0.62 0.48]").unwrap(), (0.62, 0.48));
        assert_eq!(parse_scores("0.9 1.0").unwrap(), (0.9, 1.0));
        assert_eq!(parse_scores("  [1 0]\n").unwrap(), (1.0, 0.0));
        assert_eq!(parse_scores("Scores: move 0.7, place 0.35.").unwrap(), (0.7, 0.35));
        assert_eq!(parse_scores("[7 0.2 0.4]").unwrap(), (0.2, 0.4));
    }

    #[test]
    fn failures() {
        assert!(matches!(parse_scores("the move is strong"), Err(DatagenError::Parse(_))));
        assert!(matches!(parse_scores("[0.5]"), Err(DatagenError::Parse(_))));
        assert!(matches!(parse_scores("[7 12]"), Err(DatagenError::OutOfRange(_))));
        assert!(matches!(parse_scores("[-0.5 3.2]"), Err(DatagenError::OutOfRange(_))));
    }

    #[test]
    fn prompt_substitutions() {
        let w = build_prompt(&request(Side::White));
        assert!(w.contains("player white (ID 1)"));
        assert!(w.contains("index d1 to square d7, then place an obstacle at g7."));
        let b = build_prompt(&request(Side::Black));
        assert!(b.contains("player black (ID 2)"));
        assert_eq!(w, build_prompt(&request(Side::White)));
    }

    #[test]
    fn put_changes_one_spot() {
        let a = request(Side::White);
        let b = RatingRequest {
            put: "h8".parse().unwrap(),
            ..a.clone()
        };
        let (pa, pb) = (build_prompt(&a), build_prompt(&b));
        let diff: Vec<usize> = pa.bytes().zip(pb.bytes()).enumerate().filter(|(_, (x, y))| x != y).map(|(i, _)| i).collect();
        assert_eq!(pa.len(), pb.len());
        assert_eq!(diff.len(), 2);
        assert_eq!(&pa[diff[0]..=diff[1]], "g7");
    }

    #[test]
    fn move_reply() {
        assert_eq!(parse_move_reply("I play D1-D7/G7."), Some("d1-d7/g7".parse().unwrap()));
        assert_eq!(parse_move_reply("j10 - j9 / a10"), Some("j10-j9/a10".parse().unwrap()));
        assert_eq!(parse_move_reply("pass"), None);
    }
}
