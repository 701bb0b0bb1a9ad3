//! ASCII trajectory renders: `#` wall, `.` free, `T` target, `d` distractor,
//! `A` actor's final position, `*` visited cells.

use sps_core::gridworld::{GridMap, CELLS, GRID};
use sps_core::planner::Trajectory;

pub fn render_trajectory(map: &GridMap, traj: &Trajectory) -> String {
    let mut chars = vec!['.'; CELLS];
    for c in 0..CELLS {
        if map.is_wall_cell(c) {
            chars[c] = '#';
        }
    }
    for step in &traj.steps {
        chars[step.pos.cell()] = '*';
    }
    for d in traj.placement.distractors {
        chars[d.cell()] = 'd';
    }
    chars[traj.placement.target.cell()] = 'T';
    if let Some(last) = traj.steps.last() {
        chars[last.pos.cell()] = 'A';
    }
    let mut out = String::with_capacity(CELLS + GRID);
    for r in 0..GRID {
        for c in 0..GRID {
            out.push(chars[r * GRID + c]);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use sps_core::datagen::{build_train_dataset, DatasetSpec};

    #[test]
    fn render_marks_all_roles() {
        let mut spec = DatasetSpec::new(1, 5);
        spec.trajectories_per_map = 1;
        spec.planner_cfg.sample_budget = 40;
        let d = build_train_dataset(&spec).unwrap();
        let rec = &d.trajectories[0];
        let text = render_trajectory(&d.maps[rec.map_index], &rec.traj);
        assert_eq!(text.lines().count(), GRID);
        assert!(text.contains('A'));
        assert!(text.contains('T') || rec.traj.reached_target);
        assert!(text.contains('#'));
        for line in text.lines() {
            assert_eq!(line.chars().count(), GRID);
        }
    }
}
