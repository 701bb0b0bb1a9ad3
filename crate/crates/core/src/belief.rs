//! Exact discrete Bayesian filter over the target's position.
//!
//! The filter is both the actor's state estimate for planning and the
//! ground-truth label for the belief prediction head. Its generative model
//! treats the unidentified distractors as independently uniform over the
//! remaining candidate cells, which yields a closed-form likelihood for
//! ambiguous sightings: seeing an unidentified object at `c` multiplies
//! every other candidate's mass by `q = 1 - (1 - 1/F)^D` where `F` counts
//! candidates after this step's exclusions and `D` the distractors not yet
//! identified. Simultaneous sightings extend this by inclusion-exclusion
//! over the sighted cells, which keeps the update exact under the same
//! model (the single-sighting case reduces to the `q` factor).

use thiserror::Error;

use crate::gridworld::{Content, GridMap, Observation, Position, CELLS};

/// Probability below which a renormalized cell is snapped to exact zero.
/// Mass only ever leaves a cell through exact multiplicative zeros, so no
/// tolerance is needed; this constant exists for documentation.
const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("observation contradicts belief: {0}")]
    Contradiction(String),
}

/// Set of cell ids on the 11x11 grid, packed into a u128 bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CellSet(u128);

impl CellSet {
    pub fn insert(&mut self, cell: usize) {
        debug_assert!(cell < CELLS);
        self.0 |= 1u128 << cell;
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.0 & (1u128 << cell) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..CELLS).filter(move |&c| self.contains(c))
    }

    pub fn is_superset(&self, other: &CellSet) -> bool {
        self.0 & other.0 == other.0
    }
}

/// Posterior over the target's cell, plus the evidence bookkeeping that
/// drives future updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    /// Row-major probability per cell; non-negative, sums to 1.
    pub probs: Vec<f64>,
    /// Cells proven not to hold the target.
    pub excluded: CellSet,
    /// Cells where an object was identified as a distractor.
    pub identified_distractors: CellSet,
    /// Cell of the identified target, once revealed.
    pub target_found: Option<Position>,
    /// Total distractors in the task (identified or not).
    pub total_distractors: usize,
}

impl Belief {
    /// Uniform prior over free cells, excluding the actor's start cell.
    pub fn init(map: &GridMap, actor_start: Position) -> Belief {
        Belief::init_with_distractors(map, actor_start, 3)
    }

    /// As [`Belief::init`] for tasks with a different distractor count.
    pub fn init_with_distractors(
        map: &GridMap,
        actor_start: Position,
        total_distractors: usize,
    ) -> Belief {
        let mut probs = vec![0.0; CELLS];
        let mut excluded = CellSet::default();
        excluded.insert(actor_start.cell());
        let candidates: Vec<usize> = (0..CELLS)
            .filter(|&c| !map.is_wall_cell(c) && c != actor_start.cell())
            .collect();
        let p = 1.0 / candidates.len() as f64;
        for &c in &candidates {
            probs[c] = p;
        }
        Belief {
            probs,
            excluded,
            identified_distractors: CellSet::default(),
            target_found: None,
            total_distractors,
        }
    }

    /// Number of distractors not yet identified.
    pub fn unidentified_distractors(&self) -> usize {
        self.total_distractors - self.identified_distractors.len()
    }

    /// Cells that can still hold the target.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        (0..CELLS).filter(move |&c| self.probs[c] > 0.0)
    }

    pub fn support_size(&self) -> usize {
        self.support().count()
    }

    /// Simplex and support invariants; used by tests and debug assertions.
    pub fn validate(&self, map: &GridMap) -> Result<(), String> {
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(format!("probabilities sum to {}", sum));
        }
        for c in 0..CELLS {
            if self.probs[c] < 0.0 {
                return Err(format!("negative probability at cell {}", c));
            }
            if self.probs[c] > 0.0 && map.is_wall_cell(c) {
                return Err(format!("mass on wall cell {}", c));
            }
            if self.probs[c] > 0.0 && self.excluded.contains(c) {
                return Err(format!("mass on excluded cell {}", c));
            }
            if self.probs[c] > 0.0 && self.identified_distractors.contains(c) {
                return Err(format!("mass on identified distractor at {}", c));
            }
        }
        Ok(())
    }
}

/// Cell of maximal probability, ties broken by lowest row-major index.
pub fn argmax_belief(b: &Belief) -> Position {
    let mut best = 0;
    for c in 1..CELLS {
        if b.probs[c] > b.probs[best] {
            best = c;
        }
    }
    Position::from_cell(best)
}

/// Folds one observation into the belief.
///
/// Update order: identity reveals, then empty-cell exclusions, then the
/// ambiguous-sighting likelihood, then one renormalization.
pub fn update_belief(b: &Belief, obs: &Observation) -> Result<Belief, BeliefError> {
    let mut nb = b.clone();

    // Identity reveals.
    let mut revealed_target: Option<usize> = nb.target_found.map(|p| p.cell());
    for &(pos, id) in &obs.revealed {
        let cell = pos.cell();
        match id {
            crate::gridworld::Identity::Target => {
                if let Some(prev) = revealed_target {
                    if prev != cell {
                        return Err(BeliefError::Contradiction(format!(
                            "target revealed at {} after identification at cell {}",
                            pos, prev
                        )));
                    }
                } else if nb.probs[cell] == 0.0 {
                    return Err(BeliefError::Contradiction(format!(
                        "target revealed at excluded cell {}",
                        pos
                    )));
                }
                revealed_target = Some(cell);
                nb.target_found = Some(pos);
            }
            crate::gridworld::Identity::Distractor => {
                if revealed_target == Some(cell) {
                    return Err(BeliefError::Contradiction(format!(
                        "distractor revealed where target was identified: {}",
                        pos
                    )));
                }
                if !nb.identified_distractors.contains(cell) {
                    nb.identified_distractors.insert(cell);
                    nb.excluded.insert(cell);
                }
            }
        }
    }

    // Empty-cell exclusions.
    for &(pos, content) in &obs.seen_cells {
        if content == Content::Empty {
            let cell = pos.cell();
            if revealed_target == Some(cell) {
                return Err(BeliefError::Contradiction(format!(
                    "identified target cell {} seen empty",
                    pos
                )));
            }
            nb.excluded.insert(cell);
        }
    }

    // A revealed target collapses the posterior to a delta.
    if let Some(cell) = revealed_target {
        nb.probs.iter_mut().for_each(|p| *p = 0.0);
        nb.probs[cell] = 1.0;
        return Ok(nb);
    }

    for c in nb.excluded.iter() {
        nb.probs[c] = 0.0;
    }

    // Ambiguous sightings: unidentified objects in view.
    let sighted: Vec<usize> = obs
        .object_cells()
        .map(|p| p.cell())
        .filter(|&c| !nb.identified_distractors.contains(c))
        .collect();
    if !sighted.is_empty() {
        let candidates = nb.probs.iter().filter(|&&p| p > 0.0).count();
        let d = nb.unidentified_distractors();
        for c in 0..CELLS {
            if nb.probs[c] > 0.0 {
                nb.probs[c] *= coverage_likelihood(&sighted, c, candidates, d);
            }
        }
    }

    let total: f64 = nb.probs.iter().sum();
    if total <= 0.0 {
        return Err(BeliefError::Contradiction(
            "observation excludes every candidate cell".into(),
        ));
    }
    nb.probs.iter_mut().for_each(|p| *p /= total);
    Ok(nb)
}

/// Probability that `d` distractors, independently uniform over `candidates`
/// cells, cover every sighted cell other than `hypothesis`. Computed by
/// inclusion-exclusion over the cells that must be covered.
fn coverage_likelihood(sighted: &[usize], hypothesis: usize, candidates: usize, d: usize) -> f64 {
    let m = sighted.iter().filter(|&&s| s != hypothesis).count();
    if m == 0 {
        return 1.0;
    }
    if d < m {
        return 0.0;
    }
    let f = candidates as f64;
    let mut total = 0.0;
    let mut binom = 1.0; // C(m, j)
    for j in 0..=m {
        let term = binom * ((f - j as f64) / f).powi(d as i32);
        total += if j % 2 == 0 { term } else { -term };
        binom = binom * (m - j) as f64 / (j + 1) as f64;
    }
    total.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{
        self, open_map, Action, Identity, MapConfig, ObjectPlacement, Observation,
    };

    fn delta_at(map: &GridMap, cell: Position) -> Belief {
        let mut b = Belief::init(map, Position::new(1, 1));
        b.probs.iter_mut().for_each(|p| *p = 0.0);
        b.probs[cell.cell()] = 1.0;
        b.target_found = Some(cell);
        b
    }

    #[test]
    fn init_is_uniform_without_start_cell() {
        let map = open_map(0);
        let start = Position::new(5, 5);
        let b = Belief::init(&map, start);
        assert_eq!(b.probs[start.cell()], 0.0);
        let expected = 1.0 / 80.0;
        for c in 0..CELLS {
            if map.is_wall_cell(c) || c == start.cell() {
                assert_eq!(b.probs[c], 0.0);
            } else {
                assert!((b.probs[c] - expected).abs() < 1e-15);
            }
        }
        b.validate(&map).unwrap();
    }

    #[test]
    fn init_ignores_map_id() {
        let mut m1 = open_map(1);
        let m2 = open_map(2);
        m1.map_id = 1;
        let b1 = Belief::init(&m1, Position::new(3, 3));
        let b2 = Belief::init(&m2, Position::new(3, 3));
        assert_eq!(b1.probs, b2.probs);
    }

    #[test]
    fn exclusion_renormalizes_uniformly() {
        // Uniform over 10 cells, 4 seen empty -> remaining 6 at 1/6.
        let map = open_map(0);
        let mut b = Belief::init(&map, Position::new(1, 1));
        b.probs.iter_mut().for_each(|p| *p = 0.0);
        let cells: Vec<Position> = (0..10).map(|i| Position::new(5, 1 + i)).collect();
        for p in &cells {
            b.probs[p.cell()] = 0.1;
        }
        let obs = Observation {
            seen_cells: cells[..4].iter().map(|&p| (p, Content::Empty)).collect(),
            revealed: vec![],
        };
        let nb = update_belief(&b, &obs).unwrap();
        for p in &cells[..4] {
            assert_eq!(nb.probs[p.cell()], 0.0);
        }
        for p in &cells[4..] {
            assert!((nb.probs[p.cell()] - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn target_reveal_collapses_to_delta() {
        let map = open_map(0);
        let b = Belief::init(&map, Position::new(1, 1));
        let target = Position::new(4, 4);
        let obs = Observation {
            seen_cells: vec![(target, Content::Object)],
            revealed: vec![(target, Identity::Target)],
        };
        let nb = update_belief(&b, &obs).unwrap();
        assert_eq!(nb.probs[target.cell()], 1.0);
        assert_eq!(nb.probs.iter().sum::<f64>(), 1.0);
        assert_eq!(argmax_belief(&nb), target);
    }

    #[test]
    fn q_factor_matches_closed_form() {
        // Uniform prior over 50 candidates, one unidentified object, D = 3:
        // posterior(c) / posterior(c') = 1 / (1 - (49/50)^3) ~= 17.0.
        let map = open_map(0);
        let mut b = Belief::init(&map, Position::new(1, 1));
        b.probs.iter_mut().for_each(|p| *p = 0.0);
        let candidates: Vec<usize> = (0..CELLS)
            .filter(|&c| !map.is_wall_cell(c) && c != Position::new(1, 1).cell())
            .take(50)
            .collect();
        for &c in &candidates {
            b.probs[c] = 1.0 / 50.0;
        }
        let sight = Position::from_cell(candidates[10]);
        let obs = Observation {
            seen_cells: vec![(sight, Content::Object)],
            revealed: vec![],
        };
        let nb = update_belief(&b, &obs).unwrap();
        let q = 1.0 - (49.0f64 / 50.0).powi(3);
        let ratio = nb.probs[candidates[10]] / nb.probs[candidates[0]];
        assert!((ratio - 1.0 / q).abs() < 1e-9, "ratio {} vs {}", ratio, 1.0 / q);
    }

    #[test]
    fn argmax_tie_breaks_by_lowest_index() {
        let map = open_map(0);
        let mut b = Belief::init(&map, Position::new(1, 1));
        b.probs.iter_mut().for_each(|p| *p = 0.0);
        for &c in &[5usize, 9, 17] {
            b.probs[c] = 1.0 / 3.0;
        }
        assert_eq!(argmax_belief(&b).cell(), 5);
    }

    #[test]
    fn contradiction_when_target_moves() {
        let map = open_map(0);
        let b = delta_at(&map, Position::new(4, 4));
        let elsewhere = Position::new(6, 6);
        let obs = Observation {
            seen_cells: vec![(elsewhere, Content::Object)],
            revealed: vec![(elsewhere, Identity::Target)],
        };
        assert!(update_belief(&b, &obs).is_err());
    }

    #[test]
    fn delta_absorbs_consistent_updates() {
        let map = open_map(0);
        let target = Position::new(4, 4);
        let b = delta_at(&map, target);
        let obs = Observation {
            seen_cells: vec![
                (Position::new(5, 5), Content::Empty),
                (target, Content::Object),
            ],
            revealed: vec![(target, Identity::Target)],
        };
        let nb = update_belief(&b, &obs).unwrap();
        assert_eq!(nb.probs[target.cell()], 1.0);
    }

    #[test]
    fn monotone_exclusion_over_random_walks() {
        let map = gridworld::generate_map(7, &MapConfig::default(), 3).unwrap();
        let (placement, start) = gridworld::place_objects(&map, 5).unwrap();
        let mut b = Belief::init(&map, start);
        let mut pos = start;
        let mut rng = crate::rng::stream(13, "walk", 0);
        use rand::seq::SliceRandom;
        let mut excluded_so_far = b.excluded;
        for _ in 0..60 {
            let a = *Action::ALL[..8].choose(&mut rng).unwrap();
            pos = gridworld::apply_action(&map, pos, a);
            let obs = gridworld::observe(&map, &placement, pos);
            b = update_belief(&b, &obs).unwrap();
            b.validate(&map).unwrap();
            assert!(b.excluded.is_superset(&excluded_so_far));
            excluded_so_far = b.excluded;
            for c in b.excluded.iter() {
                assert_eq!(b.probs[c], 0.0);
            }
            if b.target_found.is_some() {
                break;
            }
        }
    }
}
