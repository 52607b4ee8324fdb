//! Board geometry in the top-down `(x, z)` plane.
//!
//! The board spans `[-1, 1]` on both `x` (left to right) and `z` (bottom to
//! top); `y` is height and never takes part in regions or directions.
//! Coordinates on a boundary line belong to the right / top side.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BOARD_MIN: f64 = -1.0;
pub const BOARD_MAX: f64 = 1.0;
pub const MAX_BLOCKS: usize = 20;
/// Side of a quadrant, used for input-specific regions.
pub const QUADRANT_SIDE: f64 = 1.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Coordinate {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_f32(v: &[f32]) -> Self {
        Self::new(f64::from(v[0]), f64::from(v[1]), f64::from(v[2]))
    }

    pub fn to_f32(self) -> [f32; 3] {
        [self.x as f32, self.y as f32, self.z as f32]
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Coordinate) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn plane_distance(&self, other: &Coordinate) -> f64 {
        (self.x - other.x).hypot(self.z - other.z)
    }

    pub fn clamped_to_board(self) -> Self {
        Self {
            x: self.x.clamp(BOARD_MIN, BOARD_MAX),
            y: self.y,
            z: self.z.clamp(BOARD_MIN, BOARD_MAX),
        }
    }

    pub fn on_board(&self) -> bool {
        (BOARD_MIN..=BOARD_MAX).contains(&self.x) && (BOARD_MIN..=BOARD_MAX).contains(&self.z)
    }
}

impl From<[f64; 3]> for Coordinate {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoardState {
    pub blocks: Vec<Coordinate>,
    pub block_length: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("board must hold 1..={MAX_BLOCKS} blocks, got {0}")]
    BlockCount(usize),
    #[error("block length must be positive, got {0}")]
    BlockLength(f64),
    #[error("prediction and gold coincide in the x-z plane; no direction to give")]
    NoDirection,
    #[error("invalid region: {0}")]
    Region(String),
}

impl BoardState {
    pub fn new(blocks: Vec<Coordinate>, block_length: f64) -> Result<Self, WorldError> {
        if blocks.is_empty() || blocks.len() > MAX_BLOCKS {
            return Err(WorldError::BlockCount(blocks.len()));
        }
        // also rejects NaN
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(block_length > 0.0) {
            return Err(WorldError::BlockLength(block_length));
        }
        Ok(Self {
            blocks,
            block_length,
        })
    }

    /// Pairs of blocks closer than one block length in the x-z plane.
    pub fn overlapping_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.blocks.len() {
            for j in i + 1..self.blocks.len() {
                if self.blocks[i].plane_distance(&self.blocks[j]) < self.block_length {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Fixed 60-float encoding: 20 slots of `(x, y, z)`, empty slots zero.
    pub fn encode(&self) -> Vec<f32> {
        let mut v = vec![0f32; MAX_BLOCKS * 3];
        for (i, b) in self.blocks.iter().take(MAX_BLOCKS).enumerate() {
            v[i * 3..i * 3 + 3].copy_from_slice(&b.to_f32());
        }
        v
    }
}

/// Which of the two predicted coordinates something refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Source,
    Target,
}

impl Head {
    pub const BOTH: [Head; 2] = [Head::Source, Head::Target];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Head::Source => "source",
            Head::Target => "target",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrant {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Quadrant {
    /// Fixed order, also the tie-break order for classifier outputs.
    pub const ALL: [Quadrant; 4] = [
        Quadrant::TopLeft,
        Quadrant::TopRight,
        Quadrant::BottomLeft,
        Quadrant::BottomRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_left(self) -> bool {
        matches!(self, Quadrant::TopLeft | Quadrant::BottomLeft)
    }

    pub fn is_top(self) -> bool {
        matches!(self, Quadrant::TopLeft | Quadrant::TopRight)
    }

    pub fn region(self) -> Region {
        quadrant_region(self)
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quadrant::TopLeft => "top left",
            Quadrant::TopRight => "top right",
            Quadrant::BottomLeft => "lower left",
            Quadrant::BottomRight => "lower right",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Half {
    Left,
    Right,
    Top,
    Bottom,
}

impl Half {
    pub const ALL: [Half; 4] = [Half::Left, Half::Right, Half::Top, Half::Bottom];

    pub fn region(self) -> Region {
        match self {
            Half::Left => Region::new(-1.0, 0.0, -1.0, 1.0),
            Half::Right => Region::new(0.0, 1.0, -1.0, 1.0),
            Half::Top => Region::new(-1.0, 1.0, 0.0, 1.0),
            Half::Bottom => Region::new(-1.0, 1.0, -1.0, 0.0),
        }
    }

    /// The half covered by two edge-adjacent quadrants, if they are adjacent.
    pub fn from_adjacent(a: Quadrant, b: Quadrant) -> Option<Half> {
        if a == b {
            return None;
        }
        if a.is_left() == b.is_left() {
            Some(if a.is_left() { Half::Left } else { Half::Right })
        } else if a.is_top() == b.is_top() {
            Some(if a.is_top() { Half::Top } else { Half::Bottom })
        } else {
            None
        }
    }
}

impl fmt::Display for Half {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Half::Left => "left half",
            Half::Right => "right half",
            Half::Top => "top half",
            Half::Bottom => "bottom half",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn word(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    /// Whether moving from `from` to `to` strictly follows this direction.
    pub fn satisfied(self, from: &Coordinate, to: &Coordinate) -> bool {
        match self {
            Direction::Up => to.z > from.z,
            Direction::Down => to.z < from.z,
            Direction::Left => to.x < from.x,
            Direction::Right => to.x > from.x,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

/// Closed axis-aligned rectangle in the `(x, z)` plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Region {
    pub const BOARD: Region = Region {
        x_min: BOARD_MIN,
        x_max: BOARD_MAX,
        z_min: BOARD_MIN,
        z_max: BOARD_MAX,
    };

    pub const fn new(x_min: f64, x_max: f64, z_min: f64, z_max: f64) -> Self {
        Self {
            x_min,
            x_max,
            z_min,
            z_max,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let ok = self.x_min < self.x_max
            && self.z_min < self.z_max
            && self.x_min >= BOARD_MIN
            && self.z_min >= BOARD_MIN
            && self.x_max <= BOARD_MAX
            && self.z_max <= BOARD_MAX;
        if ok {
            Ok(())
        } else {
            Err(WorldError::Region(format!("{self:?}")))
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.z_max - self.z_min)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.z_min + self.z_max),
        )
    }

    pub fn contains(&self, c: &Coordinate) -> bool {
        region_contains(self, c)
    }

    pub fn within_board(&self) -> bool {
        self.x_min >= BOARD_MIN && self.z_min >= BOARD_MIN && self.x_max <= BOARD_MAX && self.z_max <= BOARD_MAX
    }
}

pub fn quadrant_of(c: &Coordinate) -> Quadrant {
    match (c.x >= 0.0, c.z >= 0.0) {
        (false, true) => Quadrant::TopLeft,
        (true, true) => Quadrant::TopRight,
        (false, false) => Quadrant::BottomLeft,
        (true, false) => Quadrant::BottomRight,
    }
}

pub fn quadrant_region(q: Quadrant) -> Region {
    match q {
        Quadrant::TopLeft => Region::new(-1.0, 0.0, 0.0, 1.0),
        Quadrant::TopRight => Region::new(0.0, 1.0, 0.0, 1.0),
        Quadrant::BottomLeft => Region::new(-1.0, 0.0, -1.0, 0.0),
        Quadrant::BottomRight => Region::new(0.0, 1.0, -1.0, 0.0),
    }
}

/// Direction that moves `pred` toward `gold` along the axis with the larger
/// error; equal errors resolve to the x axis.
pub fn direction_of(pred: &Coordinate, gold: &Coordinate) -> Result<Direction, WorldError> {
    let dx = gold.x - pred.x;
    let dz = gold.z - pred.z;
    if dx.abs() <= 1e-9 && dz.abs() <= 1e-9 {
        return Err(WorldError::NoDirection);
    }
    Ok(if dx.abs() >= dz.abs() {
        if dx < 0.0 {
            Direction::Left
        } else {
            Direction::Right
        }
    } else if dz < 0.0 {
        Direction::Down
    } else {
        Direction::Up
    })
}

/// A `side × side` square centered on `center`, slid (never shrunk) back onto
/// the board when it overhangs an edge.
pub fn centered_region(center: &Coordinate, side: f64) -> Region {
    let side = side.clamp(f64::MIN_POSITIVE, BOARD_MAX - BOARD_MIN);
    let place = |c: f64| {
        let lo = (c - 0.5 * side).clamp(BOARD_MIN, BOARD_MAX - side);
        (lo, lo + side)
    };
    let (x_min, x_max) = place(center.x);
    let (z_min, z_max) = place(center.z);
    Region::new(x_min, x_max, z_min, z_max)
}

pub fn region_contains(r: &Region, c: &Coordinate) -> bool {
    r.x_min <= c.x && c.x <= r.x_max && r.z_min <= c.z && c.z <= r.z_max
}

/// Euclidean 3-D distance in block lengths.
pub fn normalized_error(pred: &Coordinate, gold: &Coordinate, block_length: f64) -> f64 {
    pred.distance(gold) / block_length
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_table_quadrant() {
        assert_eq!(quadrant_of(&Coordinate::new(-0.5, 0.5, 0.5)), Quadrant::TopLeft);
        assert_eq!(quadrant_of(&Coordinate::new(0.0, 0.3, 0.0)), Quadrant::TopRight);
    }

    #[test]
    fn quadrant_regions_tile_the_board() {
        assert_eq!(quadrant_region(Quadrant::TopLeft), Region::new(-1.0, 0.0, 0.0, 1.0));
        let total: f64 = Quadrant::ALL.iter().map(|q| q.region().area()).sum();
        assert_eq!(total, 4.0);
    }

    #[test]
    fn example_table_direction() {
        let pred = Coordinate::new(-0.5, 0.5, 0.9);
        let gold = Coordinate::new(-0.5, 0.5, 0.5);
        assert_eq!(direction_of(&pred, &gold), Ok(Direction::Down));
        let d = direction_of(&Coordinate::new(0.0, 0.0, 0.0), &Coordinate::new(0.4, 0.0, 0.1));
        assert_eq!(d, Ok(Direction::Right));
    }

    #[test]
    fn direction_ties_go_to_x_and_zero_offset_errors() {
        let d = direction_of(&Coordinate::new(0.0, 0.0, 0.0), &Coordinate::new(-0.3, 0.0, 0.3));
        assert_eq!(d, Ok(Direction::Left));
        let same = Coordinate::new(0.2, 0.1, 0.2);
        let lifted = Coordinate::new(0.2, 0.9, 0.2);
        assert_eq!(direction_of(&same, &lifted), Err(WorldError::NoDirection));
    }

    #[test]
    fn centered_region_examples() {
        let r = centered_region(&Coordinate::new(0.0, 0.0, 0.0), 1.0);
        assert_eq!(r, Region::new(-0.5, 0.5, -0.5, 0.5));
        let r = centered_region(&Coordinate::new(0.9, 0.0, 0.9), 1.0);
        assert_eq!(r, Region::new(0.0, 1.0, 0.0, 1.0));
        let full = centered_region(&Coordinate::new(0.3, 0.0, -0.7), 2.0);
        assert_eq!(full, Region::BOARD);
    }

    #[test]
    fn region_bounds_are_closed() {
        let r = quadrant_region(Quadrant::TopLeft);
        assert!(r.contains(&Coordinate::new(-0.5, 0.5, 0.5)));
        assert!(r.contains(&Coordinate::new(-1.0, 0.0, 1.0)));
        assert!(r.contains(&Coordinate::new(0.0, 0.0, 0.0)));
        assert!(!r.contains(&Coordinate::new(0.01, 0.0, 0.5)));
    }

    #[test]
    fn normalized_error_in_block_lengths() {
        let a = Coordinate::new(0.2, 0.05, -0.3);
        assert_eq!(normalized_error(&a, &a, 0.1), 0.0);
        let b = Coordinate::new(0.3, 0.05, -0.3);
        assert!((normalized_error(&a, &b, 0.1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adjacent_quadrants_make_halves() {
        use Quadrant::*;
        assert_eq!(Half::from_adjacent(TopLeft, BottomLeft), Some(Half::Left));
        assert_eq!(Half::from_adjacent(BottomRight, BottomLeft), Some(Half::Bottom));
        assert_eq!(Half::from_adjacent(TopLeft, BottomRight), None);
        assert_eq!(Half::from_adjacent(TopLeft, TopLeft), None);
    }

    #[test]
    fn board_encoding_pads_with_zeros() {
        let b = BoardState::new(vec![Coordinate::new(0.5, 0.05, -0.5)], 0.1).unwrap();
        let e = b.encode();
        assert_eq!(e.len(), 60);
        assert_eq!(&e[..3], &[0.5, 0.05, -0.5]);
        assert!(e[3..].iter().all(|&v| v == 0.0));
        assert!(BoardState::new(vec![], 0.1).is_err());
        assert!(BoardState::new(vec![Coordinate::default(); 21], 0.1).is_err());
    }
}
