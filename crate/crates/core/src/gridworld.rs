//! Deterministic 11x11 grid environment: map generation, movement, field of
//! view, and the observation model that induces partial observability.
//!
//! Coordinate convention: row 0 is the top row and north decreases the row
//! index. All border cells are walls, so the playable interior is 9x9.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::rng;

/// Grid side length.
pub const GRID: usize = 11;
/// Total cell count.
pub const CELLS: usize = GRID * GRID;
/// Field-of-view radius in Chebyshev distance (a 5x5 window).
pub const FOV_RADIUS: usize = 2;
/// Objects whose identity is disclosed lie within this Chebyshev distance.
pub const REVEAL_RADIUS: usize = 1;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("map generation failed after {0} attempts (wall density too high)")]
    GenerationExhausted(usize),
    #[error("map has {0} free cells, need at least {1}")]
    TooFewFreeCells(usize, usize),
    #[error("invalid map text: {0}")]
    BadMapText(String),
}

/// A cell coordinate on the 11x11 grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Position {
    pub row: usize,
    pub col: usize,
}

impl Position {
    pub fn new(row: usize, col: usize) -> Self {
        debug_assert!(row < GRID && col < GRID);
        Position { row, col }
    }

    /// Row-major cell id in 0..121.
    pub fn cell(self) -> usize {
        self.row * GRID + self.col
    }

    pub fn from_cell(cell: usize) -> Self {
        debug_assert!(cell < CELLS);
        Position { row: cell / GRID, col: cell % GRID }
    }

    pub fn chebyshev(self, other: Position) -> usize {
        let dr = self.row.abs_diff(other.row);
        let dc = self.col.abs_diff(other.col);
        dr.max(dc)
    }
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// The nine movement actions. Integer ids are stable across the whole
/// pipeline: encoders, planners, and network heads all use this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Action {
    North = 0,
    East = 1,
    South = 2,
    West = 3,
    NorthEast = 4,
    NorthWest = 5,
    SouthEast = 6,
    SouthWest = 7,
    Stay = 8,
}

impl Action {
    pub const COUNT: usize = 9;
    pub const ALL: [Action; 9] = [
        Action::North,
        Action::East,
        Action::South,
        Action::West,
        Action::NorthEast,
        Action::NorthWest,
        Action::SouthEast,
        Action::SouthWest,
        Action::Stay,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Action> {
        Action::ALL.get(id).copied()
    }

    /// (row, col) displacement.
    pub fn delta(self) -> (i8, i8) {
        match self {
            Action::North => (-1, 0),
            Action::East => (0, 1),
            Action::South => (1, 0),
            Action::West => (0, -1),
            Action::NorthEast => (-1, 1),
            Action::NorthWest => (-1, -1),
            Action::SouthEast => (1, 1),
            Action::SouthWest => (1, -1),
            Action::Stay => (0, 0),
        }
    }
}

/// Parameters for random map generation.
#[derive(Debug, Clone, Copy)]
pub struct MapConfig {
    /// Fraction of the 81 interior cells turned into wall segments, in [0, 0.35].
    pub wall_density: f64,
    /// Number of isolated single-cell columns, in 0..=8.
    pub column_count: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig { wall_density: 0.12, column_count: 3 }
    }
}

/// An 11x11 wall/free layout. Border cells are always walls and the free
/// cells form a single 8-connected component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    walls: [bool; CELLS],
    pub map_id: u64,
    pub gen_seed: u64,
    /// neighbors[cell][action] = destination cell (blocked moves stay put).
    neighbors: [[u8; Action::COUNT]; CELLS],
}

impl GridMap {
    /// Builds a map from an explicit wall mask, validating the invariants.
    pub fn from_walls(walls: [bool; CELLS], map_id: u64, gen_seed: u64) -> Result<Self, GridError> {
        for i in 0..GRID {
            for &cell in &[i, (GRID - 1) * GRID + i, i * GRID, i * GRID + GRID - 1] {
                if !walls[cell] {
                    return Err(GridError::BadMapText(format!(
                        "border cell {} is not a wall",
                        cell
                    )));
                }
            }
        }
        let free: Vec<usize> = (0..CELLS).filter(|&c| !walls[c]).collect();
        if free.is_empty() {
            return Err(GridError::TooFewFreeCells(0, 1));
        }
        if !connected(&walls) {
            return Err(GridError::BadMapText("free cells are not 8-connected".into()));
        }
        let mut map = GridMap { walls, map_id, gen_seed, neighbors: [[0; Action::COUNT]; CELLS] };
        map.rebuild_neighbors();
        Ok(map)
    }

    fn rebuild_neighbors(&mut self) {
        for cell in 0..CELLS {
            let pos = Position::from_cell(cell);
            for a in Action::ALL {
                let (dr, dc) = a.delta();
                let nr = pos.row as i32 + dr as i32;
                let nc = pos.col as i32 + dc as i32;
                let dest = if nr < 0 || nr >= GRID as i32 || nc < 0 || nc >= GRID as i32 {
                    cell
                } else {
                    let d = nr as usize * GRID + nc as usize;
                    if self.walls[d] {
                        cell
                    } else {
                        d
                    }
                };
                self.neighbors[cell][a.id()] = dest as u8;
            }
        }
    }

    pub fn is_wall(&self, pos: Position) -> bool {
        self.walls[pos.cell()]
    }

    pub fn is_wall_cell(&self, cell: usize) -> bool {
        self.walls[cell]
    }

    pub fn wall_count(&self) -> usize {
        self.walls.iter().filter(|&&w| w).count()
    }

    pub fn free_cells(&self) -> Vec<Position> {
        (0..CELLS).filter(|&c| !self.walls[c]).map(Position::from_cell).collect()
    }

    /// Destination cell id for (cell, action), with blocked moves staying put.
    pub fn step_cell(&self, cell: usize, a: Action) -> usize {
        self.neighbors[cell][a.id()] as usize
    }

    /// Renders the map text format: 11 lines of `#` (wall) and `.` (free).
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(CELLS + GRID);
        for r in 0..GRID {
            for c in 0..GRID {
                s.push(if self.walls[r * GRID + c] { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }

    /// Parses the map text format produced by [`GridMap::to_text`].
    pub fn from_text(text: &str, map_id: u64, gen_seed: u64) -> Result<Self, GridError> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() != GRID {
            return Err(GridError::BadMapText(format!("expected {} lines, got {}", GRID, lines.len())));
        }
        let mut walls = [false; CELLS];
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != GRID {
                return Err(GridError::BadMapText(format!("line {} has wrong length", r)));
            }
            for (c, ch) in line.chars().enumerate() {
                walls[r * GRID + c] = match ch {
                    '#' => true,
                    '.' => false,
                    other => {
                        return Err(GridError::BadMapText(format!("bad character {:?}", other)))
                    }
                };
            }
        }
        GridMap::from_walls(walls, map_id, gen_seed)
    }
}

/// Target and distractor locations for one trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectPlacement {
    pub target: Position,
    pub distractors: [Position; 3],
}

impl ObjectPlacement {
    /// All four object positions, target first.
    pub fn all(&self) -> [Position; 4] {
        [self.target, self.distractors[0], self.distractors[1], self.distractors[2]]
    }

    pub fn object_at(&self, pos: Position) -> bool {
        self.all().contains(&pos)
    }
}

/// Disclosed identity of an object the observer stands next to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Identity {
    Target,
    Distractor,
}

/// What one cell inside the field of view contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Content {
    Empty,
    Object,
}

/// One observation from a cell: the 5x5 window tagged empty/object, plus
/// identities for objects within Chebyshev distance 1. Wall cells are not
/// listed (the actor already knows the walls). Cell lists are sorted by
/// row-major id so observations serialize canonically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub seen_cells: Vec<(Position, Content)>,
    pub revealed: Vec<(Position, Identity)>,
}

impl Observation {
    /// Positions seen with content = object.
    pub fn object_cells(&self) -> impl Iterator<Item = Position> + '_ {
        self.seen_cells
            .iter()
            .filter(|(_, c)| *c == Content::Object)
            .map(|(p, _)| *p)
    }

    pub fn revealed_target(&self) -> Option<Position> {
        self.revealed
            .iter()
            .find(|(_, id)| *id == Identity::Target)
            .map(|(p, _)| *p)
    }
}

/// Generates a random map: border walls, `column_count` single-cell columns,
/// then straight wall segments until `wall_density` of the 81 interior cells
/// is blocked. Regenerates internally until the free cells form a single
/// 8-connected component; deterministic in `gen_seed`.
pub fn generate_map(gen_seed: u64, config: &MapConfig, map_id: u64) -> Result<GridMap, GridError> {
    assert!(
        (0.0..=0.35).contains(&config.wall_density),
        "wall density outside [0, 0.35]"
    );
    assert!(config.column_count <= 8, "column count outside 0..=8");
    const MAX_ATTEMPTS: usize = 1000;
    let mut rng = rng::stream(gen_seed, "mapgen", map_id);
    let interior = (GRID - 2) * (GRID - 2);
    let budget = (config.wall_density * interior as f64).round() as usize;

    for _ in 0..MAX_ATTEMPTS {
        let mut walls = [false; CELLS];
        for i in 0..GRID {
            walls[i] = true;
            walls[(GRID - 1) * GRID + i] = true;
            walls[i * GRID] = true;
            walls[i * GRID + GRID - 1] = true;
        }
        // Isolated columns first, then straight segments up to the density budget.
        let mut placed = 0;
        for _ in 0..config.column_count {
            let r = rng.gen_range(1..GRID - 1);
            let c = rng.gen_range(1..GRID - 1);
            let cell = r * GRID + c;
            if !walls[cell] {
                walls[cell] = true;
            }
        }
        while placed < budget {
            let r = rng.gen_range(1..GRID - 1);
            let c = rng.gen_range(1..GRID - 1);
            let horizontal = rng.gen_bool(0.5);
            let len = rng.gen_range(2..=5usize);
            for k in 0..len {
                let (rr, cc) = if horizontal { (r, c + k) } else { (r + k, c) };
                if rr >= GRID - 1 || cc >= GRID - 1 {
                    break;
                }
                let cell = rr * GRID + cc;
                if !walls[cell] {
                    walls[cell] = true;
                    placed += 1;
                    if placed >= budget {
                        break;
                    }
                }
            }
        }
        if (0..CELLS).any(|c| !walls[c]) && connected(&walls) {
            return GridMap::from_walls(walls, map_id, gen_seed);
        }
    }
    Err(GridError::GenerationExhausted(MAX_ATTEMPTS))
}

/// Flood fill over 8-connected free cells; true if one component covers them all.
fn connected(walls: &[bool; CELLS]) -> bool {
    let start = match (0..CELLS).find(|&c| !walls[c]) {
        Some(c) => c,
        None => return false,
    };
    let mut seen = [false; CELLS];
    let mut stack = vec![start];
    seen[start] = true;
    let mut count = 0;
    while let Some(cell) = stack.pop() {
        count += 1;
        let pos = Position::from_cell(cell);
        for a in Action::ALL.iter().take(8) {
            let (dr, dc) = a.delta();
            let nr = pos.row as i32 + dr as i32;
            let nc = pos.col as i32 + dc as i32;
            if nr < 0 || nr >= GRID as i32 || nc < 0 || nc >= GRID as i32 {
                continue;
            }
            let n = nr as usize * GRID + nc as usize;
            if !walls[n] && !seen[n] {
                seen[n] = true;
                stack.push(n);
            }
        }
    }
    count == walls.iter().filter(|&&w| !w).count()
}

/// Moves `pos` by `a`; walls and grid edges block, blocked moves are no-ops.
pub fn apply_action(map: &GridMap, pos: Position, a: Action) -> Position {
    Position::from_cell(map.step_cell(pos.cell(), a))
}

/// All cells within Chebyshev distance 2 of `pos`, clipped at the grid edge.
/// Walls do not occlude the window.
pub fn field_of_view(pos: Position) -> Vec<Position> {
    let r0 = pos.row.saturating_sub(FOV_RADIUS);
    let r1 = (pos.row + FOV_RADIUS).min(GRID - 1);
    let c0 = pos.col.saturating_sub(FOV_RADIUS);
    let c1 = (pos.col + FOV_RADIUS).min(GRID - 1);
    let mut cells = Vec::with_capacity((r1 - r0 + 1) * (c1 - c0 + 1));
    for r in r0..=r1 {
        for c in c0..=c1 {
            cells.push(Position::new(r, c));
        }
    }
    cells
}

/// Observes from `pos`: FOV cells tagged empty/object, identities disclosed
/// for objects within Chebyshev distance 1.
pub fn observe(map: &GridMap, placement: &ObjectPlacement, pos: Position) -> Observation {
    let mut seen_cells = Vec::new();
    let mut revealed = Vec::new();
    for cell in field_of_view(pos) {
        if map.is_wall(cell) {
            continue;
        }
        let content = if placement.object_at(cell) { Content::Object } else { Content::Empty };
        seen_cells.push((cell, content));
        if content == Content::Object && pos.chebyshev(cell) <= REVEAL_RADIUS {
            let id = if cell == placement.target { Identity::Target } else { Identity::Distractor };
            revealed.push((cell, id));
        }
    }
    Observation { seen_cells, revealed }
}

/// Draws 5 distinct free cells uniformly without replacement: one target,
/// three distractors, and the actor start.
pub fn place_objects(
    map: &GridMap,
    seed: u64,
) -> Result<(ObjectPlacement, Position), GridError> {
    let free = map.free_cells();
    if free.len() < 5 {
        return Err(GridError::TooFewFreeCells(free.len(), 5));
    }
    let mut rng = rng::stream(seed, "placement", map.map_id);
    let chosen: Vec<Position> = free.choose_multiple(&mut rng, 5).copied().collect();
    let placement = ObjectPlacement {
        target: chosen[0],
        distractors: [chosen[1], chosen[2], chosen[3]],
    };
    Ok((placement, chosen[4]))
}

/// BFS distance over the 8 movement actions; `None` if unreachable.
pub fn bfs_distance(map: &GridMap, from: Position, to: Position) -> Option<usize> {
    if map.is_wall(from) || map.is_wall(to) {
        return None;
    }
    let mut dist = [usize::MAX; CELLS];
    dist[from.cell()] = 0;
    let mut queue = std::collections::VecDeque::from([from.cell()]);
    while let Some(cell) = queue.pop_front() {
        if cell == to.cell() {
            return Some(dist[cell]);
        }
        for a in Action::ALL.iter().take(8) {
            let n = map.step_cell(cell, *a);
            if dist[n] == usize::MAX {
                dist[n] = dist[cell] + 1;
                queue.push_back(n);
            }
        }
    }
    None
}

/// BFS distances from `from` to every reachable cell.
pub fn bfs_distances(map: &GridMap, from: Position) -> [usize; CELLS] {
    let mut dist = [usize::MAX; CELLS];
    if map.is_wall(from) {
        return dist;
    }
    dist[from.cell()] = 0;
    let mut queue = std::collections::VecDeque::from([from.cell()]);
    while let Some(cell) = queue.pop_front() {
        for a in Action::ALL.iter().take(8) {
            let n = map.step_cell(cell, *a);
            if dist[n] == usize::MAX {
                dist[n] = dist[cell] + 1;
                queue.push_back(n);
            }
        }
    }
    dist
}

/// An all-free map (every interior cell open). Handy in tests.
pub fn open_map(map_id: u64) -> GridMap {
    generate_map(0, &MapConfig { wall_density: 0.0, column_count: 0 }, map_id)
        .expect("open map always generates")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_density_gives_81_free_interior_cells() {
        let map = open_map(0);
        assert_eq!(map.free_cells().len(), 81);
        assert_eq!(map.wall_count(), CELLS - 81);
    }

    #[test]
    fn same_seed_gives_identical_maps() {
        let cfg = MapConfig::default();
        let a = generate_map(99, &cfg, 7).unwrap();
        let b = generate_map(99, &cfg, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn seed_42_default_config_is_connected() {
        let map = generate_map(42, &MapConfig::default(), 0).unwrap();
        // Flood-fill oracle: walk from the first free cell and count.
        let free = map.free_cells();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![free[0]];
        seen.insert(free[0]);
        while let Some(p) = stack.pop() {
            for a in Action::ALL.iter().take(8) {
                let n = apply_action(&map, p, *a);
                if n != p && seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        assert_eq!(seen.len(), free.len());
    }

    #[test]
    fn stay_is_identity() {
        let map = open_map(0);
        let p = Position::new(5, 5);
        assert_eq!(apply_action(&map, p, Action::Stay), p);
    }

    #[test]
    fn northeast_coordinate_convention() {
        let map = open_map(0);
        assert_eq!(apply_action(&map, Position::new(5, 5), Action::NorthEast), Position::new(4, 6));
    }

    #[test]
    fn blocked_move_is_noop() {
        let map = open_map(0);
        let p = Position::new(1, 1);
        assert_eq!(apply_action(&map, p, Action::North), p);
        assert_eq!(apply_action(&map, p, Action::NorthWest), p);
    }

    #[test]
    fn fov_center_is_5x5() {
        let cells = field_of_view(Position::new(5, 5));
        assert_eq!(cells.len(), 25);
        for r in 3..=7 {
            for c in 3..=7 {
                assert!(cells.contains(&Position::new(r, c)));
            }
        }
    }

    #[test]
    fn fov_corner_clips_to_9() {
        let cells = field_of_view(Position::new(0, 0));
        assert_eq!(cells.len(), 9);
    }

    #[test]
    fn fov_membership_is_chebyshev() {
        for pr in 0..GRID {
            for pc in 0..GRID {
                let p = Position::new(pr, pc);
                let fov = field_of_view(p);
                for r in 0..GRID {
                    for c in 0..GRID {
                        let q = Position::new(r, c);
                        assert_eq!(fov.contains(&q), p.chebyshev(q) <= 2);
                    }
                }
            }
        }
    }

    #[test]
    fn observe_discloses_identity_only_when_adjacent() {
        let map = open_map(0);
        let placement = ObjectPlacement {
            target: Position::new(5, 7),
            distractors: [Position::new(1, 1), Position::new(9, 9), Position::new(1, 9)],
        };
        // Target at Chebyshev distance 2: content listed, no identity.
        let obs = observe(&map, &placement, Position::new(5, 5));
        assert!(obs.object_cells().any(|p| p == placement.target));
        assert!(obs.revealed.is_empty());
        // Target at Chebyshev distance 1: identity disclosed.
        let obs = observe(&map, &placement, Position::new(5, 6));
        assert_eq!(obs.revealed, vec![(placement.target, Identity::Target)]);
        // Nothing in view: all seen cells empty.
        let obs = observe(&map, &placement, Position::new(7, 3));
        assert!(obs.revealed.is_empty());
        assert!(obs.object_cells().next().is_none());
    }

    #[test]
    fn place_objects_is_deterministic_and_distinct() {
        let map = generate_map(3, &MapConfig::default(), 1).unwrap();
        let (p1, s1) = place_objects(&map, 11).unwrap();
        let (p2, s2) = place_objects(&map, 11).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
        let mut cells: Vec<usize> = p1.all().iter().map(|p| p.cell()).collect();
        cells.push(s1.cell());
        cells.sort_unstable();
        cells.dedup();
        assert_eq!(cells.len(), 5);
        for &c in &cells {
            assert!(!map.is_wall_cell(c));
        }
    }

    #[test]
    fn placement_frequencies_are_uniform() {
        // 10,000 draws on the open map: each free cell hosts the target with
        // frequency 1/81 within 3 sigma of the binomial.
        let map = open_map(0);
        let free = map.free_cells();
        let n = 10_000usize;
        let mut counts = vec![0usize; CELLS];
        for i in 0..n {
            let (p, _) = place_objects(&map, 100_000 + i as u64).unwrap();
            counts[p.target.cell()] += 1;
        }
        let q = 1.0 / free.len() as f64;
        let sigma = (n as f64 * q * (1.0 - q)).sqrt();
        for cell in free {
            let c = counts[cell.cell()] as f64;
            assert!(
                (c - n as f64 * q).abs() <= 3.0 * sigma,
                "cell {} count {} outside 3 sigma",
                cell,
                c
            );
        }
    }

    #[test]
    fn map_text_round_trip() {
        let map = generate_map(5, &MapConfig::default(), 2).unwrap();
        let text = map.to_text();
        let parsed = GridMap::from_text(&text, map.map_id, map.gen_seed).unwrap();
        assert_eq!(map, parsed);
    }

    #[test]
    fn apply_action_never_lands_on_wall() {
        for seed in 0..20u64 {
            let map = generate_map(seed, &MapConfig { wall_density: 0.3, column_count: 8 }, seed)
                .unwrap();
            for p in map.free_cells() {
                for a in Action::ALL {
                    assert!(!map.is_wall(apply_action(&map, p, a)));
                }
            }
        }
    }
}
