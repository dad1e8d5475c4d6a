use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::trace::{ActionId, StateId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("map is empty")]
    Empty,
    #[error("line {line}: expected {expected} cells, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("line {line}, column {column}: unknown map character `{ch}`")]
    UnknownChar { line: usize, column: usize, ch: char },
    #[error("map has no start cell `S`")]
    MissingStart,
    #[error("line {line}, column {column}: second start cell")]
    DuplicateStart { line: usize, column: usize },
}

/// The four grid moves. Ids are stable and used in trace files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    pub fn id(self) -> ActionId {
        self as ActionId
    }

    pub fn from_id(id: ActionId) -> Option<Action> {
        Action::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        }
    }
}

/// A rectangular grid loaded from ASCII.
///
/// `#` is a wall, `.` an empty cell, `S` the start cell, and any other letter
/// or `*` a labelled cell. Cell ids are `y * width + x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: u32,
    height: u32,
    walls: Vec<bool>,
    labels: Vec<Option<char>>,
    start: StateId,
}

impl GridMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn num_cells(&self) -> usize {
        self.walls.len()
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn cell(&self, x: u32, y: u32) -> StateId {
        y * self.width + x
    }

    pub fn coords(&self, cell: StateId) -> (u32, u32) {
        (cell % self.width, cell / self.width)
    }

    pub fn is_wall(&self, cell: StateId) -> bool {
        self.walls[cell as usize]
    }

    pub fn label(&self, cell: StateId) -> Option<char> {
        self.labels[cell as usize]
    }

    /// Every open cell carrying `symbol`.
    pub fn cells_with(&self, symbol: char) -> Vec<StateId> {
        (0..self.num_cells() as StateId).filter(|&c| self.label(c) == Some(symbol)).collect()
    }

    pub fn open_cells(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.num_cells() as StateId).filter(|&c| !self.is_wall(c))
    }

    /// Deterministic move; walls and the border leave the agent in place.
    pub fn neighbor(&self, cell: StateId, action: Action) -> StateId {
        let (x, y) = self.coords(cell);
        let (nx, ny) = match action {
            Action::Up if y > 0 => (x, y - 1),
            Action::Down if y + 1 < self.height => (x, y + 1),
            Action::Left if x > 0 => (x - 1, y),
            Action::Right if x + 1 < self.width => (x + 1, y),
            _ => return cell,
        };
        let next = self.cell(nx, ny);
        if self.is_wall(next) {
            cell
        } else {
            next
        }
    }

    /// Human-readable names for open cells, e.g. `6,1:c`.
    pub fn state_names(&self) -> BTreeMap<StateId, String> {
        self.open_cells()
            .map(|cell| {
                let (x, y) = self.coords(cell);
                let name = match self.label(cell) {
                    Some(symbol) => format!("{x},{y}:{symbol}"),
                    None => format!("{x},{y}"),
                };
                (cell, name)
            })
            .collect()
    }

    pub fn action_names() -> BTreeMap<ActionId, String> {
        Action::ALL.iter().map(|a| (a.id(), a.name().to_string())).collect()
    }
}

impl FromStr for GridMap {
    type Err = MapError;

    fn from_str(text: &str) -> Result<Self, MapError> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let width = rows.first().ok_or(MapError::Empty)?.chars().count();
        let mut walls = Vec::with_capacity(width * rows.len());
        let mut labels = Vec::with_capacity(width * rows.len());
        let mut start = None;
        for (y, row) in rows.iter().enumerate() {
            let found = row.chars().count();
            if found != width {
                return Err(MapError::Ragged { line: y + 1, expected: width, found });
            }
            for (x, ch) in row.chars().enumerate() {
                let (wall, label) = match ch {
                    '#' => (true, None),
                    '.' => (false, None),
                    'S' => {
                        if start.is_some() {
                            return Err(MapError::DuplicateStart { line: y + 1, column: x + 1 });
                        }
                        start = Some((y * width + x) as StateId);
                        (false, None)
                    }
                    '*' => (false, Some('*')),
                    c if c.is_ascii_alphabetic() => (false, Some(c)),
                    ch => return Err(MapError::UnknownChar { line: y + 1, column: x + 1, ch }),
                };
                walls.push(wall);
                labels.push(label);
            }
        }
        Ok(GridMap {
            width: width as u32,
            height: rows.len() as u32,
            walls,
            labels,
            start: start.ok_or(MapError::MissingStart)?,
        })
    }
}

impl fmt::Display for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for y in 0..self.height {
            for x in 0..self.width {
                let cell = self.cell(x, y);
                let ch = if self.is_wall(cell) {
                    '#'
                } else if cell == self.start {
                    'S'
                } else {
                    self.label(cell).unwrap_or('.')
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "#####\n#cSg#\n#####\n";

    #[test]
    fn parses_and_prints_back() {
        let map: GridMap = SMALL.parse().unwrap();
        assert_eq!((map.width(), map.height()), (5, 3));
        assert_eq!(map.start(), map.cell(2, 1));
        assert_eq!(map.label(map.cell(1, 1)), Some('c'));
        assert_eq!(map.to_string(), SMALL);
    }

    #[test]
    fn walls_block_moves() {
        let map: GridMap = SMALL.parse().unwrap();
        let start = map.start();
        assert_eq!(map.neighbor(start, Action::Up), start);
        assert_eq!(map.neighbor(start, Action::Left), map.cell(1, 1));
        assert_eq!(map.neighbor(map.cell(3, 1), Action::Right), map.cell(3, 1));
    }

    #[test]
    fn border_without_walls_blocks_moves() {
        let map: GridMap = "S.".parse().unwrap();
        assert_eq!(map.neighbor(0, Action::Left), 0);
        assert_eq!(map.neighbor(0, Action::Up), 0);
        assert_eq!(map.neighbor(1, Action::Right), 1);
    }

    #[test]
    fn rejects_bad_maps() {
        assert_eq!("".parse::<GridMap>(), Err(MapError::Empty));
        assert_eq!("#S#\n##\n".parse::<GridMap>(), Err(MapError::Ragged { line: 2, expected: 3, found: 2 }));
        assert_eq!("#?#".parse::<GridMap>(), Err(MapError::UnknownChar { line: 1, column: 2, ch: '?' }));
        assert_eq!("#.#".parse::<GridMap>(), Err(MapError::MissingStart));
        assert_eq!("SS".parse::<GridMap>(), Err(MapError::DuplicateStart { line: 1, column: 2 }));
    }

    #[test]
    fn names_open_cells_only() {
        let map: GridMap = SMALL.parse().unwrap();
        let names = map.state_names();
        assert_eq!(names.len(), 3);
        assert_eq!(names[&map.cell(1, 1)], "1,1:c");
        assert_eq!(names[&map.start()], "2,1");
    }
}
