//! DeepSeaTreasure.
//!
//! The submarine starts in the top-left corner and moves on an 11x11 grid
//! until it enters a treasure cell. Reward is `(treasure value, -1)` per
//! step. Moves into the boundary or the seabed leave the position unchanged.
//! The default map is the one shipped by MO-Gymnasium.

use std::fmt;
use std::str::FromStr;

use crate::error::{MorlError, Result};
use crate::mdp::{EnvSpec, Environment, State, StateEncoding};
use crate::rng::StreamRng;

pub const DEFAULT_HORIZON: usize = 100;
const DEFAULT_MAP: &str = include_str!("../../data/deep_sea_treasure.txt");

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Water,
    Seabed,
    Treasure(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DstAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl DstAction {
    pub const ALL: [DstAction; 4] = [
        DstAction::Up,
        DstAction::Down,
        DstAction::Left,
        DstAction::Right,
    ];

    fn delta(self) -> (isize, isize) {
        match self {
            DstAction::Up => (-1, 0),
            DstAction::Down => (1, 0),
            DstAction::Left => (0, -1),
            DstAction::Right => (0, 1),
        }
    }

    pub fn from_index(a: usize) -> Option<Self> {
        Self::ALL.get(a).copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DstLayout {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    start: (usize, usize),
}

impl DstLayout {
    pub fn default_map() -> Self {
        DEFAULT_MAP.parse().expect("bundled map parses")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn start(&self) -> (usize, usize) {
        self.start
    }

    pub fn cell(&self, pos: (usize, usize)) -> Cell {
        self.cells[pos.0 * self.cols + pos.1]
    }

    pub fn index(&self, pos: (usize, usize)) -> usize {
        pos.0 * self.cols + pos.1
    }

    /// Treasures in row-major order with their positions.
    pub fn treasures(&self) -> Vec<((usize, usize), f64)> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .filter_map(|p| match self.cell(p) {
                Cell::Treasure(v) => Some((p, v)),
                _ => None,
            })
            .collect()
    }

    pub fn max_treasure(&self) -> f64 {
        self.treasures().iter().map(|t| t.1).fold(0.0, f64::max)
    }
}

impl FromStr for DstLayout {
    type Err = MorlError;

    /// One row per line, whitespace separated tokens: `.` water, `#` seabed,
    /// `T<value>` treasure, `S` start (water).
    fn from_str(s: &str) -> Result<Self> {
        let mut cells = Vec::new();
        let mut start = None;
        let mut cols = None;
        let mut rows = 0;
        for (r, line) in s.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            let mut width = 0;
            for (c, tok) in line.split_whitespace().enumerate() {
                let cell = match tok {
                    "." => Cell::Water,
                    "#" => Cell::Seabed,
                    "S" => {
                        if start.replace((r, c)).is_some() {
                            return Err(MorlError::Config("layout has two start cells".into()));
                        }
                        Cell::Water
                    }
                    t if t.starts_with('T') => {
                        let v: f64 = t[1..].parse().map_err(|_| {
                            MorlError::Config(format!("bad treasure token {t:?} at row {r}"))
                        })?;
                        if !(v > 0.0) {
                            return Err(MorlError::Config(format!(
                                "treasure at row {r} must be positive, got {v}"
                            )));
                        }
                        Cell::Treasure(v)
                    }
                    other => {
                        return Err(MorlError::Config(format!(
                            "unknown layout token {other:?} at row {r}"
                        )))
                    }
                };
                cells.push(cell);
                width += 1;
            }
            match cols {
                None => cols = Some(width),
                Some(w) if w != width => {
                    return Err(MorlError::Config(format!(
                        "row {r} has {width} cells, expected {w}"
                    )))
                }
                _ => {}
            }
            rows += 1;
        }
        let cols = cols
            .filter(|&c| c > 0)
            .ok_or_else(|| MorlError::Config("empty layout".into()))?;
        let start = start.ok_or_else(|| MorlError::Config("layout has no start cell".into()))?;
        Ok(DstLayout {
            rows,
            cols,
            cells,
            start,
        })
    }
}

impl fmt::Display for DstLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|c| match self.cell((r, c)) {
                    _ if (r, c) == self.start => "S".to_string(),
                    Cell::Water => ".".to_string(),
                    Cell::Seabed => "#".to_string(),
                    Cell::Treasure(v) => format!("T{v:.1}"),
                })
                .collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DeepSeaTreasure {
    layout: DstLayout,
    spec: EnvSpec,
}

impl DeepSeaTreasure {
    pub fn new(layout: DstLayout, horizon: usize, gamma: f64) -> Result<Self> {
        let spec = EnvSpec {
            num_objectives: 2,
            gamma,
            horizon,
            // zero is included in the time-penalty range for absorbed steps
            reward_bounds: vec![(0.0, layout.max_treasure()), (-1.0, 0.0)],
            encoding: StateEncoding::Tabular {
                states: layout.cells(),
            },
        };
        spec.validate()?;
        Ok(Self { layout, spec })
    }

    pub fn layout(&self) -> &DstLayout {
        &self.layout
    }

    /// One transition from a water cell. Returns `(next, reward, done)`.
    pub fn dst_step(
        &self,
        pos: (usize, usize),
        action: DstAction,
    ) -> ((usize, usize), [f64; 2], bool) {
        let (dr, dc) = action.delta();
        let r = pos.0 as isize + dr;
        let c = pos.1 as isize + dc;
        let inside =
            r >= 0 && c >= 0 && (r as usize) < self.layout.rows && (c as usize) < self.layout.cols;
        let next = if inside && self.layout.cell((r as usize, c as usize)) != Cell::Seabed {
            (r as usize, c as usize)
        } else {
            pos
        };
        match self.layout.cell(next) {
            Cell::Treasure(v) => (next, [v, -1.0], true),
            _ => (next, [0.0, -1.0], false),
        }
    }
}

impl Environment for DeepSeaTreasure {
    type Internal = (usize, usize);

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn reset(&self, _rng: &mut StreamRng) -> (usize, usize) {
        self.layout.start
    }

    fn observe(&self, pos: &(usize, usize)) -> State {
        State::Index(self.layout.index(*pos))
    }

    fn step(
        &self,
        pos: &mut (usize, usize),
        action: usize,
        _rng: &mut StreamRng,
        reward: &mut [f64],
    ) -> bool {
        let action = DstAction::from_index(action).expect("DST has four actions");
        let (next, r, done) = self.dst_step(*pos, action);
        *pos = next;
        reward.copy_from_slice(&r);
        done
    }
}
