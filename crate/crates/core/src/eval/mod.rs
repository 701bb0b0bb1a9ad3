//! Evaluation protocol: per-condition target-prediction accuracy, aligned
//! trial construction, seed-sweep aggregation with significance tests, and
//! table rendering.

pub mod report;
pub mod stats;

pub use report::{build_report, CellStats, EvalReport, ReportRow, RunResult};
pub use stats::{paired_t_test_greater, welch_t_test};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::datagen::{
    build_from_placements, classify_window, generate_maps, ConditionFlags, Dataset, DatasetError,
    DatasetRole, DatasetSpec,
};
use crate::gridworld::{bfs_distances, Action, GridMap, ObjectPlacement, Position, CELLS};
use crate::planner::Trajectory;
use crate::rng;
use crate::sps::train::accuracy_on;
use crate::sps::SpsModel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no feasible aligned trial with k={k} after {attempts} draws")]
    NoAlignedTrial { k: usize, attempts: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Membership predicates over test samples. A table cell is a conjunction
/// of conditions (for example `[Neglected(3), TargetVisible]`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalCondition {
    Global,
    TargetHidden,
    TargetVisible,
    Neglected(u8),
    Aligned(u8),
    Budget(u32),
}

impl EvalCondition {
    pub fn matches(&self, flags: ConditionFlags, dataset: &Dataset) -> bool {
        match *self {
            EvalCondition::Global => true,
            EvalCondition::TargetHidden => flags.target_hidden,
            EvalCondition::TargetVisible => !flags.target_hidden,
            EvalCondition::Neglected(n) => flags.neglected == n,
            EvalCondition::Aligned(k) => flags.aligned == k,
            EvalCondition::Budget(b) => dataset_budget(dataset) == b,
        }
    }
}

fn dataset_budget(dataset: &Dataset) -> u32 {
    match dataset.role {
        DatasetRole::BudgetTest { budget } => budget,
        _ => dataset.spec.planner_cfg.sample_budget as u32,
    }
}

/// Sample indices matching every condition in the conjunction.
pub fn filter_indices(dataset: &Dataset, conds: &[EvalCondition]) -> Vec<usize> {
    (0..dataset.n_samples())
        .filter(|&i| conds.iter().all(|c| c.matches(dataset.samples[i].flags, dataset)))
        .collect()
}

/// Target-prediction accuracy (percent) over samples matching `conds`;
/// `None` when the filtered set is empty (undefined, not zero).
pub fn evaluate(
    model: &mut SpsModel,
    testset: &Dataset,
    conds: &[EvalCondition],
) -> Option<f64> {
    let indices = filter_indices(testset, conds);
    accuracy_on(model, testset, &indices)
}

/// Condition flags for the window at step `t` of a trajectory.
pub fn classify_sample(traj: &Trajectory, t: usize) -> ConditionFlags {
    classify_window(traj, t)
}

const ALIGNED_ATTEMPTS: usize = 1000;

/// Builds one aligned trial: `k` distractors on distinct interior cells of
/// a BFS shortest path from the actor start to the target, the remaining
/// `3 - k` placed uniformly elsewhere.
pub fn make_aligned_trials(
    map: &GridMap,
    k: usize,
    seed: u64,
) -> Result<(ObjectPlacement, Position), EvalError> {
    assert!(k <= 3, "at most 3 distractors can be aligned");
    let mut rng = rng::stream(seed, "aligned-trial", map.map_id);
    let free = map.free_cells();
    for _ in 0..ALIGNED_ATTEMPTS {
        let pair: Vec<Position> = free.choose_multiple(&mut rng, 2).copied().collect();
        let (start, target) = (pair[0], pair[1]);
        let dist = bfs_distances(map, start);
        let d = dist[target.cell()];
        if d == usize::MAX || d + 1 < k + 2 {
            continue;
        }
        let path = shortest_path(map, start, target, &dist);
        let interior = &path[1..path.len() - 1];
        if interior.len() < k {
            continue;
        }
        let mut aligned: Vec<Position> =
            interior.choose_multiple(&mut rng, k).copied().collect();
        let mut used: Vec<Position> = vec![start, target];
        used.extend_from_slice(&aligned);
        let rest: Vec<Position> =
            free.iter().copied().filter(|p| !used.contains(p)).collect();
        if rest.len() < 3 - k {
            continue;
        }
        let mut others: Vec<Position> =
            rest.choose_multiple(&mut rng, 3 - k).copied().collect();
        aligned.append(&mut others);
        let placement = ObjectPlacement {
            target,
            distractors: [aligned[0], aligned[1], aligned[2]],
        };
        return Ok((placement, start));
    }
    Err(EvalError::NoAlignedTrial { k, attempts: ALIGNED_ATTEMPTS })
}

/// One BFS shortest path from `start` to `target`, walking the distance
/// field backward with ties broken by lowest action id.
fn shortest_path(
    map: &GridMap,
    start: Position,
    target: Position,
    dist_from_start: &[usize; CELLS],
) -> Vec<Position> {
    let mut path = vec![target];
    let mut cur = target;
    while cur != start {
        let d = dist_from_start[cur.cell()];
        for a in Action::ALL.iter().take(8) {
            let n = map.step_cell(cur.cell(), *a);
            if dist_from_start[n] + 1 == d {
                cur = Position::from_cell(n);
                break;
            }
        }
        path.push(cur);
    }
    path.reverse();
    path
}

/// An aligned-k test corpus over the standard test maps.
pub fn build_aligned_testset(spec: &DatasetSpec, k: usize) -> Result<Dataset, EvalError> {
    let role = DatasetRole::AlignedTest { k: k as u8 };
    let maps = generate_maps(spec, role)?;
    let mut trials = Vec::new();
    for (map_index, map) in maps.iter().enumerate() {
        for traj_id in 0..spec.trajectories_per_map {
            let idx = (map_index * spec.trajectories_per_map + traj_id) as u64;
            let seed = rng::child_seed(spec.master_seed, "aligned-placement", idx);
            let (placement, start) = make_aligned_trials(map, k, seed)?;
            trials.push((map_index, placement, start));
        }
    }
    Ok(build_from_placements(spec, role, maps, trials, &spec.planner_cfg)?)
}

/// Helper for accuracy over an arbitrary per-sample predictor; the network
/// path uses [`evaluate`]. Used to pin the counting semantics in tests.
pub fn accuracy_with<F: FnMut(usize) -> usize>(
    dataset: &Dataset,
    indices: &[usize],
    mut predict: F,
) -> Option<f64> {
    if indices.is_empty() {
        return None;
    }
    let correct = indices
        .iter()
        .filter(|&&i| {
            let s = dataset.samples[i];
            let rec = &dataset.trajectories[s.traj_index];
            predict(i) == rec.traj.placement.target.cell()
        })
        .count();
    Some(100.0 * correct as f64 / indices.len() as f64)
}

/// Draws a uniform cell among the four object cells; the chance baseline
/// for the hidden-target condition.
pub fn object_cell_baseline<R: Rng>(dataset: &Dataset, index: usize, rng: &mut R) -> usize {
    let s = dataset.samples[index];
    let rec = &dataset.trajectories[s.traj_index];
    let objects = rec.traj.placement.all();
    objects[rng.gen_range(0..4)].cell()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{build_test_dataset, build_train_dataset};
    use crate::gridworld::{bfs_distance, generate_map, MapConfig};

    fn tiny_spec() -> DatasetSpec {
        let mut spec = DatasetSpec::new(2, 31);
        spec.trajectories_per_map = 4;
        spec.planner_cfg.sample_budget = 40;
        spec
    }

    #[test]
    fn hidden_and_visible_partition_all_samples() {
        let d = build_test_dataset(&tiny_spec()).unwrap();
        let hidden = filter_indices(&d, &[EvalCondition::TargetHidden]);
        let visible = filter_indices(&d, &[EvalCondition::TargetVisible]);
        assert_eq!(hidden.len() + visible.len(), d.n_samples());
        let mut all: Vec<usize> = hidden.into_iter().chain(visible).collect();
        all.sort_unstable();
        assert_eq!(all, (0..d.n_samples()).collect::<Vec<_>>());
    }

    #[test]
    fn oracle_predictor_scores_100() {
        let d = build_test_dataset(&tiny_spec()).unwrap();
        let idx = filter_indices(&d, &[EvalCondition::Global]);
        let acc = accuracy_with(&d, &idx, |i| {
            let s = d.samples[i];
            d.trajectories[s.traj_index].traj.placement.target.cell()
        })
        .unwrap();
        assert_eq!(acc, 100.0);
    }

    #[test]
    fn object_cell_baseline_is_near_chance_on_hidden() {
        // Uniform guessing among the 4 object cells gives ~25% under the
        // hidden-target condition.
        let mut spec = tiny_spec();
        spec.trajectories_per_map = 30;
        spec.n_test_maps = 4;
        let d = build_test_dataset(&spec).unwrap();
        let idx = filter_indices(&d, &[EvalCondition::TargetHidden]);
        assert!(idx.len() > 200, "need enough hidden samples, got {}", idx.len());
        let mut rng = rng::stream(5, "baseline", 0);
        let acc = accuracy_with(&d, &idx, |i| object_cell_baseline(&d, i, &mut rng)).unwrap();
        assert!((acc - 25.0).abs() < 6.0, "baseline accuracy {}", acc);
    }

    #[test]
    fn empty_condition_is_undefined() {
        let d = build_test_dataset(&tiny_spec()).unwrap();
        // No aligned samples exist in a random test set.
        let idx = filter_indices(&d, &[EvalCondition::Aligned(3)]);
        assert!(idx.is_empty());
        assert_eq!(accuracy_with(&d, &idx, |_| 0), None);
    }

    #[test]
    fn aligned_trials_sit_on_a_shortest_path() {
        for seed in 0..20u64 {
            let map = generate_map(seed, &MapConfig::default(), seed).unwrap();
            for k in 0..=3usize {
                let (placement, start) = match make_aligned_trials(&map, k, 1000 + seed) {
                    Ok(v) => v,
                    Err(EvalError::NoAlignedTrial { .. }) => continue,
                    Err(e) => panic!("{e}"),
                };
                let d_full = bfs_distance(&map, start, placement.target).unwrap();
                // BFS path-membership oracle: cell c is on some shortest path
                // iff d(start,c) + d(c,target) == d(start,target).
                let mut on_path = 0;
                for &dp in &placement.distractors {
                    let d1 = bfs_distance(&map, start, dp).unwrap();
                    let d2 = bfs_distance(&map, dp, placement.target).unwrap();
                    if d1 + d2 == d_full && dp != start && dp != placement.target {
                        on_path += 1;
                    }
                }
                assert!(on_path >= k, "k={} but only {} distractors on a shortest path", k, on_path);
                // All five cells distinct and free.
                let mut cells: Vec<usize> =
                    placement.all().iter().map(|p| p.cell()).collect();
                cells.push(start.cell());
                cells.sort_unstable();
                cells.dedup();
                assert_eq!(cells.len(), 5);
            }
        }
    }

    #[test]
    fn aligned_k0_is_plain_random_placement() {
        let map = generate_map(3, &MapConfig::default(), 9).unwrap();
        let (placement, start) = make_aligned_trials(&map, 0, 7).unwrap();
        assert!(placement.all().iter().all(|p| !map.is_wall(*p)));
        assert!(!map.is_wall(start));
    }

    #[test]
    fn corridor_forces_aligned_distractors_between_endpoints() {
        // A single-corridor map: aligned distractors must sit strictly
        // between start and target on the row.
        use crate::gridworld::{GRID};
        let mut walls = [true; CELLS];
        for c in 1..10 {
            walls[5 * GRID + c] = false;
        }
        let map = GridMap::from_walls(walls, 77, 0).unwrap();
        let (placement, start) = make_aligned_trials(&map, 3, 21).unwrap();
        let (a, b) = (start.col.min(placement.target.col), start.col.max(placement.target.col));
        for d in placement.distractors {
            assert_eq!(d.row, 5);
            assert!(d.col > a && d.col < b, "distractor {} not strictly between", d);
        }
    }

    #[test]
    fn budget_condition_keys_on_dataset_role() {
        let spec = tiny_spec();
        let d = build_train_dataset(&spec).unwrap();
        assert!(EvalCondition::Budget(40).matches(ConditionFlags::default(), &d));
        assert!(!EvalCondition::Budget(25).matches(ConditionFlags::default(), &d));
    }

    #[test]
    fn aligned_dataset_samples_carry_the_k_flag() {
        let mut spec = tiny_spec();
        spec.n_test_maps = 2;
        spec.trajectories_per_map = 2;
        let d = build_aligned_testset(&spec, 2).unwrap();
        assert!(d.n_samples() > 0);
        assert!(d.samples.iter().all(|s| s.flags.aligned == 2));
        assert_eq!(filter_indices(&d, &[EvalCondition::Aligned(2)]).len(), d.n_samples());
    }
}
