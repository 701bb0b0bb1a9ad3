//! Corpus construction: runs planner episodes over generated maps, windows
//! the trajectories, applies the spatialisation-concatenation encoding, and
//! persists datasets in a checksummed binary format.
//!
//! Input tensor layout (20 planes of 11x11, plane-major):
//!   0..9   last action, one-hot tiled over all cells (zero at t = 0)
//!   9..13  one object instance each, order randomized per trajectory
//!   13..18 actor position at lags 1..5 (zero-padded)
//!   18     walls
//!   19     current actor position

use rayon::prelude::*;
use thiserror::Error;

use crate::gridworld::{
    self, Content, GridMap, Identity, MapConfig, Observation, ObjectPlacement, Position, CELLS,
};
use crate::io::{self, FormatError, Reader, Writer};
use crate::planner::{run_episode, PlanError, PlannerConfig, Step, Trajectory};
use crate::rng;

/// Number of input planes.
pub const PLANES: usize = 20;
/// Flattened input length.
pub const INPUT_LEN: usize = PLANES * CELLS;

const PLANE_ACTIONS: usize = 0;
const PLANE_OBJECTS: usize = 9;
const PLANE_LAGS: usize = 13;
const PLANE_WALLS: usize = 18;
const PLANE_SELF: usize = 19;
/// History depth encoded in the lag planes.
pub const WINDOW: usize = 5;

const MAGIC: [u8; 4] = *b"TOMG";
const VERSION: u32 = 1;
/// Map ids for test maps start here so train and test id sets are disjoint.
const TEST_MAP_ID_BASE: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Grid(#[from] gridworld::GridError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("invalid dataset spec: {0}")]
    BadSpec(String),
}

/// What a dataset was generated for. Affects seed streams, map ids, and the
/// per-sample condition flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetRole {
    Train,
    Test,
    /// Test trials with k distractors placed on a shortest path to the target.
    AlignedTest { k: u8 },
    /// Test trials generated by an actor with a reduced planning budget.
    BudgetTest { budget: u32 },
}

impl DatasetRole {
    fn tag(self) -> u8 {
        match self {
            DatasetRole::Train => 0,
            DatasetRole::Test => 1,
            DatasetRole::AlignedTest { .. } => 2,
            DatasetRole::BudgetTest { .. } => 3,
        }
    }

    fn aux(self) -> u32 {
        match self {
            DatasetRole::Train | DatasetRole::Test => 0,
            DatasetRole::AlignedTest { k } => k as u32,
            DatasetRole::BudgetTest { budget } => budget,
        }
    }

    fn from_parts(tag: u8, aux: u32) -> Result<Self, FormatError> {
        Ok(match tag {
            0 => DatasetRole::Train,
            1 => DatasetRole::Test,
            2 => DatasetRole::AlignedTest { k: aux as u8 },
            3 => DatasetRole::BudgetTest { budget: aux },
            other => return Err(FormatError::Malformed(format!("unknown role tag {}", other))),
        })
    }

    /// Seed-stream tag; test-like roles share placement streams so budget
    /// variants replay the same trials with a different actor.
    fn seed_tag(self) -> &'static str {
        match self {
            DatasetRole::Train => "train",
            DatasetRole::Test | DatasetRole::BudgetTest { .. } => "test",
            DatasetRole::AlignedTest { .. } => "aligned",
        }
    }
}

/// Corpus parameters. `n_train_maps` takes the canonical values
/// 5, 10, 15, 20, 25, 30, 60, 120 or 300; the test set is always 10 maps.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub n_train_maps: usize,
    pub n_test_maps: usize,
    pub trajectories_per_map: usize,
    pub window: usize,
    pub planner_cfg: PlannerConfig,
    pub map_cfg: MapConfig,
    pub master_seed: u64,
}

impl DatasetSpec {
    pub fn new(n_train_maps: usize, master_seed: u64) -> Self {
        DatasetSpec {
            n_train_maps,
            n_test_maps: 10,
            trajectories_per_map: 30,
            window: WINDOW,
            planner_cfg: PlannerConfig::default(),
            map_cfg: MapConfig::default(),
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.n_train_maps == 0 {
            return Err(DatasetError::BadSpec("n_train_maps must be positive".into()));
        }
        if self.window != WINDOW {
            return Err(DatasetError::BadSpec(format!(
                "window must be {} (fixed by the 20-plane input layout)",
                WINDOW
            )));
        }
        if self.trajectories_per_map == 0 {
            return Err(DatasetError::BadSpec("trajectories_per_map must be positive".into()));
        }
        Ok(())
    }
}

/// Evaluation-condition membership of one sample, fixed at encoding time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConditionFlags {
    /// True when the target cell never entered the actor's FOV at any step <= t.
    pub target_hidden: bool,
    /// Distractors whose identity was revealed at some step <= t.
    pub neglected: u8,
    /// Number of aligned distractors in the trial (0 for random placements).
    pub aligned: u8,
}

/// A trajectory as stored in a dataset: the episode itself plus the
/// per-trajectory randomized object-plane order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajRecord {
    pub map_index: usize,
    pub traj_id: usize,
    /// plane_order[i] = object instance shown on plane 9+i (0 = target).
    pub plane_order: [u8; 4],
    pub traj: Trajectory,
}

/// Index entry for one training window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    pub traj_index: usize,
    pub t: usize,
    pub flags: ConditionFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub map_id: u64,
    pub trajectory_id: usize,
    pub t: usize,
    pub flags: ConditionFlags,
}

/// One encoded window: the 11x11x20 input and the four supervision labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub input: Vec<f64>,
    pub label_target: usize,
    pub label_action: usize,
    pub label_state: usize,
    pub label_belief: Vec<f64>,
    pub meta: SampleMeta,
}

/// A corpus: maps, trajectories, and the window index. Inputs are encoded
/// on demand from the trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub role: DatasetRole,
    pub maps: Vec<GridMap>,
    pub trajectories: Vec<TrajRecord>,
    pub samples: Vec<SampleRef>,
}

impl PartialEq for DatasetSpec {
    fn eq(&self, other: &Self) -> bool {
        self.n_train_maps == other.n_train_maps
            && self.n_test_maps == other.n_test_maps
            && self.trajectories_per_map == other.trajectories_per_map
            && self.window == other.window
            && self.master_seed == other.master_seed
            && self.map_cfg.wall_density == other.map_cfg.wall_density
            && self.map_cfg.column_count == other.map_cfg.column_count
            && planner_cfg_eq(&self.planner_cfg, &other.planner_cfg)
    }
}

fn planner_cfg_eq(a: &PlannerConfig, b: &PlannerConfig) -> bool {
    a.sample_budget == b.sample_budget
        && a.ucb_constant == b.ucb_constant
        && a.discount == b.discount
        && a.rollout_depth == b.rollout_depth
        && a.step_reward == b.step_reward
        && a.goal_reward == b.goal_reward
        && a.max_episode_steps == b.max_episode_steps
        && a.seed == b.seed
}

/// Condition flags for the window at step `t`: has the target entered the
/// FOV yet, and how many distractors has the actor already identified.
pub fn classify_window(traj: &Trajectory, t: usize) -> ConditionFlags {
    let mut target_seen = false;
    let mut revealed = [false; 3];
    for step in &traj.steps[..=t] {
        if step.pos.chebyshev(traj.placement.target) <= gridworld::FOV_RADIUS {
            target_seen = true;
        }
        for (pos, id) in &step.obs.revealed {
            if *id == Identity::Distractor {
                for (i, d) in traj.placement.distractors.iter().enumerate() {
                    if d == pos {
                        revealed[i] = true;
                    }
                }
            }
        }
    }
    ConditionFlags {
        target_hidden: !target_seen,
        neglected: revealed.iter().filter(|&&r| r).count() as u8,
        aligned: 0,
    }
}

/// Fills `out` (length [`INPUT_LEN`]) with the input planes for window `t`.
pub fn encode_input_into(rec: &TrajRecord, t: usize, out: &mut [f64], map: &GridMap) {
    assert_eq!(out.len(), INPUT_LEN);
    out.fill(0.0);
    let steps: &[Step] = &rec.traj.steps;
    // Last action, tiled over the grid; zero-padded at t = 0.
    if t > 0 {
        let plane = PLANE_ACTIONS + steps[t - 1].action.id();
        out[plane * CELLS..(plane + 1) * CELLS].fill(1.0);
    }
    // One plane per object instance in the trajectory's randomized order.
    let objects = rec.traj.placement.all();
    for (i, &inst) in rec.plane_order.iter().enumerate() {
        let plane = PLANE_OBJECTS + i;
        out[plane * CELLS + objects[inst as usize].cell()] = 1.0;
    }
    // Actor position at lags 1..=5.
    for lag in 1..=WINDOW {
        if t >= lag {
            let plane = PLANE_LAGS + lag - 1;
            out[plane * CELLS + steps[t - lag].pos.cell()] = 1.0;
        }
    }
    for c in 0..CELLS {
        if map.is_wall_cell(c) {
            out[PLANE_WALLS * CELLS + c] = 1.0;
        }
    }
    out[PLANE_SELF * CELLS + steps[t].pos.cell()] = 1.0;
}

/// Encodes the window predicting step `t + 1`. Requires `t < len - 1`.
pub fn encode_window(
    rec: &TrajRecord,
    map: &GridMap,
    t: usize,
    flags: ConditionFlags,
) -> EncodedSample {
    assert!(t + 1 < rec.traj.len(), "window {} out of range for length {}", t, rec.traj.len());
    let mut input = vec![0.0; INPUT_LEN];
    encode_input_into(rec, t, &mut input, map);
    let steps = &rec.traj.steps;
    EncodedSample {
        input,
        label_target: rec.traj.placement.target.cell(),
        label_action: steps[t].action.id(),
        label_state: steps[t + 1].pos.cell(),
        label_belief: steps[t].belief_after.clone(),
        meta: SampleMeta {
            map_id: rec.traj.map_id,
            trajectory_id: rec.traj_id,
            t,
            flags,
        },
    }
}

impl Dataset {
    pub fn encode_sample(&self, index: usize) -> EncodedSample {
        let s = self.samples[index];
        let rec = &self.trajectories[s.traj_index];
        encode_window(rec, &self.maps[rec.map_index], s.t, s.flags)
    }

    pub fn map_of(&self, rec: &TrajRecord) -> &GridMap {
        &self.maps[rec.map_index]
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }
}

/// Draws the per-trajectory object-plane permutation.
fn draw_plane_order(seed: u64) -> [u8; 4] {
    use rand::seq::SliceRandom;
    let mut order = [0u8, 1, 2, 3];
    let mut rng = rng::stream(seed, "planes", 0);
    order.shuffle(&mut rng);
    order
}

/// Generates the map set for a role: train maps get ids 0.., test-like maps
/// ids 1_000_000.. so the id sets are disjoint.
pub fn generate_maps(spec: &DatasetSpec, role: DatasetRole) -> Result<Vec<GridMap>, DatasetError> {
    let (count, base, tag) = match role {
        DatasetRole::Train => (spec.n_train_maps, 0, "train-map"),
        _ => (spec.n_test_maps, TEST_MAP_ID_BASE, "test-map"),
    };
    (0..count)
        .map(|i| {
            let seed = rng::child_seed(spec.master_seed, tag, i as u64);
            Ok(gridworld::generate_map(seed, &spec.map_cfg, base + i as u64)?)
        })
        .collect()
}

/// Builds a dataset from explicit per-trial placements; episodes run in
/// parallel with per-trial seed streams and assemble in canonical order.
pub fn build_from_placements(
    spec: &DatasetSpec,
    role: DatasetRole,
    maps: Vec<GridMap>,
    trials: Vec<(usize, ObjectPlacement, Position)>,
    planner_cfg: &PlannerConfig,
) -> Result<Dataset, DatasetError> {
    let tag = role.seed_tag();
    let records: Result<Vec<TrajRecord>, DatasetError> = trials
        .into_par_iter()
        .enumerate()
        .map(|(i, (map_index, placement, start))| {
            let per_map = spec.trajectories_per_map;
            let traj_id = i % per_map;
            let episode_seed =
                rng::child_seed(spec.master_seed, &format!("{}-episode", tag), i as u64);
            let cfg = planner_cfg.with_seed(episode_seed);
            let traj = run_episode(&maps[map_index], &placement, start, &cfg)?;
            let plane_seed =
                rng::child_seed(spec.master_seed, &format!("{}-planes", tag), i as u64);
            Ok(TrajRecord {
                map_index,
                traj_id,
                plane_order: draw_plane_order(plane_seed),
                traj,
            })
        })
        .collect();
    let records = records?;
    let mut samples = Vec::new();
    for (traj_index, rec) in records.iter().enumerate() {
        let aligned = match role {
            DatasetRole::AlignedTest { k } => k,
            _ => 0,
        };
        for t in 0..rec.traj.len() - 1 {
            let mut flags = classify_window(&rec.traj, t);
            flags.aligned = aligned;
            samples.push(SampleRef { traj_index, t, flags });
        }
    }
    Ok(Dataset { spec: spec.clone(), role, maps, trajectories: records, samples })
}

fn build_role(spec: &DatasetSpec, role: DatasetRole) -> Result<Dataset, DatasetError> {
    spec.validate()?;
    let maps = generate_maps(spec, role)?;
    let tag = role.seed_tag();
    let mut trials = Vec::with_capacity(maps.len() * spec.trajectories_per_map);
    for (map_index, map) in maps.iter().enumerate() {
        for traj_id in 0..spec.trajectories_per_map {
            let idx = (map_index * spec.trajectories_per_map + traj_id) as u64;
            let seed = rng::child_seed(spec.master_seed, &format!("{}-placement", tag), idx);
            let (placement, start) = gridworld::place_objects(map, seed)?;
            trials.push((map_index, placement, start));
        }
    }
    let planner_cfg = match role {
        DatasetRole::BudgetTest { budget } => spec.planner_cfg.with_budget(budget as usize),
        _ => spec.planner_cfg.clone(),
    };
    build_from_placements(spec, role, maps, trials, &planner_cfg)
}

/// The training corpus: `n_train_maps` maps x `trajectories_per_map` episodes.
pub fn build_train_dataset(spec: &DatasetSpec) -> Result<Dataset, DatasetError> {
    build_role(spec, DatasetRole::Train)
}

/// The held-out test corpus: 10 maps with their own placement streams.
pub fn build_test_dataset(spec: &DatasetSpec) -> Result<Dataset, DatasetError> {
    build_role(spec, DatasetRole::Test)
}

/// Test trials replayed with an actor running a different planning budget.
pub fn build_budget_test_dataset(
    spec: &DatasetSpec,
    budget: u32,
) -> Result<Dataset, DatasetError> {
    build_role(spec, DatasetRole::BudgetTest { budget })
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

fn write_spec(w: &mut Writer, spec: &DatasetSpec) {
    w.u32(spec.n_train_maps as u32);
    w.u32(spec.n_test_maps as u32);
    w.u32(spec.trajectories_per_map as u32);
    w.u32(spec.window as u32);
    w.u64(spec.master_seed);
    let p = &spec.planner_cfg;
    w.u32(p.sample_budget as u32);
    w.f64(p.ucb_constant);
    w.f64(p.discount);
    w.u32(p.rollout_depth as u32);
    w.f64(p.step_reward);
    w.f64(p.goal_reward);
    w.u32(p.max_episode_steps as u32);
    w.u64(p.seed);
    w.f64(spec.map_cfg.wall_density);
    w.u32(spec.map_cfg.column_count as u32);
}

fn read_spec(r: &mut Reader) -> Result<DatasetSpec, FormatError> {
    Ok(DatasetSpec {
        n_train_maps: r.u32()? as usize,
        n_test_maps: r.u32()? as usize,
        trajectories_per_map: r.u32()? as usize,
        window: r.u32()? as usize,
        master_seed: r.u64()?,
        planner_cfg: PlannerConfig {
            sample_budget: r.u32()? as usize,
            ucb_constant: r.f64()?,
            discount: r.f64()?,
            rollout_depth: r.u32()? as usize,
            step_reward: r.f64()?,
            goal_reward: r.f64()?,
            max_episode_steps: r.u32()? as usize,
            seed: r.u64()?,
        },
        map_cfg: MapConfig { wall_density: r.f64()?, column_count: r.u32()? as usize },
    })
}

/// Serializes the dataset: magic + version, then header, maps, trajectory,
/// and sample-index sections, each length-prefixed with a CRC32.
pub fn dataset_to_bytes(d: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());

    let mut header = Writer::new();
    header.u8(d.role.tag());
    header.u32(d.role.aux());
    write_spec(&mut header, &d.spec);
    io::write_section(&mut out, &header.finish());

    let mut maps = Writer::new();
    maps.u32(d.maps.len() as u32);
    for m in &d.maps {
        maps.u64(m.map_id);
        maps.u64(m.gen_seed);
        for c in 0..CELLS {
            maps.u8(m.is_wall_cell(c) as u8);
        }
    }
    io::write_section(&mut out, &maps.finish());

    let mut trajs = Writer::new();
    trajs.u32(d.trajectories.len() as u32);
    for rec in &d.trajectories {
        trajs.u32(rec.map_index as u32);
        trajs.u32(rec.traj_id as u32);
        trajs.bytes(&rec.plane_order);
        for p in rec.traj.placement.all() {
            trajs.u8(p.cell() as u8);
        }
        trajs.u8(rec.traj.start.cell() as u8);
        trajs.u8(rec.traj.reached_target as u8);
        trajs.u32(rec.traj.len() as u32);
        for step in &rec.traj.steps {
            trajs.u8(step.pos.cell() as u8);
            trajs.u8(step.action.id() as u8);
            trajs.u8(step.obs.seen_cells.len() as u8);
            for (pos, content) in &step.obs.seen_cells {
                trajs.u8(pos.cell() as u8);
                trajs.u8(matches!(content, Content::Object) as u8);
            }
            trajs.u8(step.obs.revealed.len() as u8);
            for (pos, id) in &step.obs.revealed {
                trajs.u8(pos.cell() as u8);
                trajs.u8(matches!(id, Identity::Target) as u8);
            }
            for &p in &step.belief_after {
                trajs.f64(p);
            }
        }
    }
    io::write_section(&mut out, &trajs.finish());

    let mut index = Writer::new();
    index.u32(d.samples.len() as u32);
    for s in &d.samples {
        index.u32(s.traj_index as u32);
        index.u32(s.t as u32);
        index.u8(s.flags.target_hidden as u8);
        index.u8(s.flags.neglected);
        index.u8(s.flags.aligned);
    }
    io::write_section(&mut out, &index.finish());
    out
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset, FormatError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(FormatError::BadMagic { expected: MAGIC });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::Version { found: version, supported: VERSION });
    }

    let mut header = r.section()?;
    let tag = header.u8()?;
    let aux = header.u32()?;
    let role = DatasetRole::from_parts(tag, aux)?;
    let spec = read_spec(&mut header)?;

    let mut maps_r = r.section()?;
    let n_maps = maps_r.u32()? as usize;
    let mut maps = Vec::with_capacity(n_maps);
    for _ in 0..n_maps {
        let map_id = maps_r.u64()?;
        let gen_seed = maps_r.u64()?;
        let mut walls = [false; CELLS];
        for w in walls.iter_mut() {
            *w = maps_r.u8()? != 0;
        }
        maps.push(
            GridMap::from_walls(walls, map_id, gen_seed)
                .map_err(|e| FormatError::Malformed(e.to_string()))?,
        );
    }

    let mut tr = r.section()?;
    let n_trajs = tr.u32()? as usize;
    let mut trajectories = Vec::with_capacity(n_trajs);
    for _ in 0..n_trajs {
        let map_index = tr.u32()? as usize;
        if map_index >= maps.len() {
            return Err(FormatError::Malformed(format!("map index {} out of range", map_index)));
        }
        let traj_id = tr.u32()? as usize;
        let mut plane_order = [0u8; 4];
        plane_order.copy_from_slice(tr.take(4)?);
        let cell = |r: &mut Reader| -> Result<Position, FormatError> {
            let c = r.u8()? as usize;
            if c >= CELLS {
                return Err(FormatError::Malformed(format!("cell id {} out of range", c)));
            }
            Ok(Position::from_cell(c))
        };
        let target = cell(&mut tr)?;
        let d0 = cell(&mut tr)?;
        let d1 = cell(&mut tr)?;
        let d2 = cell(&mut tr)?;
        let start = cell(&mut tr)?;
        let reached_target = tr.u8()? != 0;
        let n_steps = tr.u32()? as usize;
        let mut steps = Vec::with_capacity(n_steps);
        for t in 0..n_steps {
            let pos = cell(&mut tr)?;
            let action = gridworld::Action::from_id(tr.u8()? as usize)
                .ok_or_else(|| FormatError::Malformed("bad action id".into()))?;
            let n_seen = tr.u8()? as usize;
            let mut seen_cells = Vec::with_capacity(n_seen);
            for _ in 0..n_seen {
                let p = cell(&mut tr)?;
                let content = if tr.u8()? != 0 { Content::Object } else { Content::Empty };
                seen_cells.push((p, content));
            }
            let n_rev = tr.u8()? as usize;
            let mut revealed = Vec::with_capacity(n_rev);
            for _ in 0..n_rev {
                let p = cell(&mut tr)?;
                let id = if tr.u8()? != 0 { Identity::Target } else { Identity::Distractor };
                revealed.push((p, id));
            }
            let mut belief_after = Vec::with_capacity(CELLS);
            for _ in 0..CELLS {
                belief_after.push(tr.f64()?);
            }
            steps.push(Step {
                t,
                pos,
                action,
                obs: Observation { seen_cells, revealed },
                belief_after,
            });
        }
        trajectories.push(TrajRecord {
            map_index,
            traj_id,
            plane_order,
            traj: Trajectory {
                map_id: maps[map_index].map_id,
                placement: ObjectPlacement { target, distractors: [d0, d1, d2] },
                start,
                steps,
                reached_target,
            },
        });
    }

    let mut ir = r.section()?;
    let n_samples = ir.u32()? as usize;
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let traj_index = ir.u32()? as usize;
        if traj_index >= trajectories.len() {
            return Err(FormatError::Malformed(format!(
                "trajectory index {} out of range",
                traj_index
            )));
        }
        let t = ir.u32()? as usize;
        let flags = ConditionFlags {
            target_hidden: ir.u8()? != 0,
            neglected: ir.u8()?,
            aligned: ir.u8()?,
        };
        samples.push(SampleRef { traj_index, t, flags });
    }
    let expected: usize = trajectories.iter().map(|r| r.traj.len() - 1).sum();
    if n_samples != expected {
        return Err(FormatError::Malformed(format!(
            "sample index has {} entries, trajectories imply {}",
            n_samples, expected
        )));
    }
    Ok(Dataset { spec, role, maps, trajectories, samples })
}

/// Human-readable sidecar describing the dataset.
fn sidecar_text(d: &Dataset) -> String {
    let lens: Vec<usize> = d.trajectories.iter().map(|r| r.traj.len()).collect();
    let mean_len = lens.iter().sum::<usize>() as f64 / lens.len().max(1) as f64;
    format!(
        "role: {:?}\nmaps: {}\ntrajectories: {}\nsamples: {}\nmean episode length: {:.2}\n\
         master_seed: {}\nplanner budget: {}\nwall_density: {}\ncolumns: {}\n",
        d.role,
        d.maps.len(),
        d.trajectories.len(),
        d.samples.len(),
        mean_len,
        d.spec.master_seed,
        d.spec.planner_cfg.sample_budget,
        d.spec.map_cfg.wall_density,
        d.spec.map_cfg.column_count,
    )
}

/// Writes the dataset and its sidecar atomically.
pub fn save_dataset(d: &Dataset, path: &std::path::Path) -> Result<(), DatasetError> {
    io::atomic_write(path, &dataset_to_bytes(d)).map_err(FormatError::Io)?;
    let sidecar = path.with_extension("txt");
    io::atomic_write(&sidecar, sidecar_text(d).as_bytes()).map_err(FormatError::Io)?;
    Ok(())
}

pub fn load_dataset(path: &std::path::Path) -> Result<Dataset, DatasetError> {
    let bytes = std::fs::read(path).map_err(FormatError::Io)?;
    Ok(dataset_from_bytes(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::Action;

    fn tiny_spec() -> DatasetSpec {
        let mut spec = DatasetSpec::new(2, 77);
        spec.trajectories_per_map = 3;
        spec.planner_cfg.sample_budget = 40;
        spec
    }

    #[test]
    fn trajectory_counts_match_spec() {
        let spec = tiny_spec();
        let d = build_train_dataset(&spec).unwrap();
        assert_eq!(d.trajectories.len(), 2 * 3);
        assert_eq!(d.maps.len(), 2);
        let expected: usize = d.trajectories.iter().map(|r| r.traj.len() - 1).sum();
        assert_eq!(d.samples.len(), expected);
        // Map id sets disjoint between train and test.
        let test = build_test_dataset(&spec).unwrap();
        for m in &test.maps {
            assert!(d.maps.iter().all(|tm| tm.map_id != m.map_id));
        }
    }

    #[test]
    fn build_is_deterministic() {
        let spec = tiny_spec();
        let a = build_train_dataset(&spec).unwrap();
        let b = build_train_dataset(&spec).unwrap();
        assert_eq!(dataset_to_bytes(&a), dataset_to_bytes(&b));
    }

    #[test]
    fn plane_layout_constraints() {
        let spec = tiny_spec();
        let d = build_train_dataset(&spec).unwrap();
        let map_walls: Vec<usize> = d.maps.iter().map(|m| m.wall_count()).collect();
        for i in 0..d.n_samples() {
            let s = d.encode_sample(i);
            let plane = |p: usize| &s.input[p * CELLS..(p + 1) * CELLS];
            let action_sum: f64 = (0..9).map(|p| plane(p).iter().sum::<f64>()).sum();
            assert!(action_sum == 0.0 || action_sum == CELLS as f64);
            for p in PLANE_OBJECTS..PLANE_OBJECTS + 4 {
                assert_eq!(plane(p).iter().sum::<f64>(), 1.0);
            }
            for p in PLANE_LAGS..PLANE_LAGS + WINDOW {
                let sum: f64 = plane(p).iter().sum();
                assert!(sum == 0.0 || sum == 1.0);
            }
            let rec = &d.trajectories[d.samples[i].traj_index];
            assert_eq!(
                plane(PLANE_WALLS).iter().sum::<f64>(),
                map_walls[rec.map_index] as f64
            );
            assert_eq!(plane(PLANE_SELF).iter().sum::<f64>(), 1.0);
            // Belief label is on the simplex.
            let bsum: f64 = s.label_belief.iter().sum();
            assert!((bsum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn first_window_has_no_history_planes() {
        let spec = tiny_spec();
        let d = build_train_dataset(&spec).unwrap();
        let rec = &d.trajectories[0];
        let s = encode_window(rec, d.map_of(rec), 0, ConditionFlags::default());
        for p in 0..9 {
            assert!(s.input[p * CELLS..(p + 1) * CELLS].iter().all(|&v| v == 0.0));
        }
        for p in PLANE_LAGS..PLANE_LAGS + WINDOW {
            assert!(s.input[p * CELLS..(p + 1) * CELLS].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn last_action_tiles_one_plane() {
        let spec = tiny_spec();
        let d = build_train_dataset(&spec).unwrap();
        let rec = &d.trajectories[0];
        if rec.traj.len() < 3 {
            return;
        }
        let s = encode_window(rec, d.map_of(rec), 1, ConditionFlags::default());
        let prev = rec.traj.steps[0].action.id();
        for a in 0..9 {
            let plane = &s.input[a * CELLS..(a + 1) * CELLS];
            let expect = if a == prev { CELLS as f64 } else { 0.0 };
            assert_eq!(plane.iter().sum::<f64>(), expect);
        }
    }

    #[test]
    fn labels_reference_next_step() {
        let spec = tiny_spec();
        let d = build_train_dataset(&spec).unwrap();
        for i in 0..d.n_samples() {
            let sref = d.samples[i];
            let rec = &d.trajectories[sref.traj_index];
            let s = d.encode_sample(i);
            assert_eq!(s.label_target, rec.traj.placement.target.cell());
            assert_eq!(s.label_action, rec.traj.steps[sref.t].action.id());
            assert_eq!(s.label_state, rec.traj.steps[sref.t + 1].pos.cell());
            assert_eq!(s.label_belief, rec.traj.steps[sref.t].belief_after);
        }
    }

    #[test]
    fn target_plane_index_is_uniform() {
        // The target's plane slot should be uniform over the 4 object planes.
        let mut counts = [0usize; 4];
        let n = 4000;
        for seed in 0..n as u64 {
            let order = draw_plane_order(seed);
            let slot = order.iter().position(|&o| o == 0).unwrap();
            counts[slot] += 1;
        }
        let expect = n as f64 / 4.0;
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for &c in &counts {
            assert!((c as f64 - expect).abs() < 4.0 * sigma, "counts {:?}", counts);
        }
    }

    #[test]
    fn classify_marks_hidden_until_fov_contact() {
        let spec = tiny_spec();
        let d = build_train_dataset(&spec).unwrap();
        for rec in &d.trajectories {
            let mut seen = false;
            for t in 0..rec.traj.len() - 1 {
                let flags = classify_window(&rec.traj, t);
                let in_fov = rec.traj.steps[t].pos.chebyshev(rec.traj.placement.target) <= 2;
                if in_fov {
                    seen = true;
                }
                assert_eq!(flags.target_hidden, !seen);
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let spec = tiny_spec();
        let d = build_train_dataset(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.tomg");
        save_dataset(&d, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(d, loaded);
        assert!(path.with_extension("txt").exists());
    }

    #[test]
    fn corrupted_file_fails_to_load() {
        let spec = tiny_spec();
        let d = build_train_dataset(&spec).unwrap();
        let mut bytes = dataset_to_bytes(&d);
        let n = bytes.len();
        bytes[n / 2] ^= 0x55;
        assert!(dataset_from_bytes(&bytes).is_err());
    }

    #[test]
    fn empty_file_is_a_format_error() {
        assert!(matches!(
            dataset_from_bytes(&[]),
            Err(FormatError::Truncated { .. })
        ));
    }

    #[test]
    fn stay_heavy_trajectories_encode() {
        // Degenerate window where the last action is stay: plane 8 tiles.
        let spec = tiny_spec();
        let d = build_train_dataset(&spec).unwrap();
        let mut rec = d.trajectories[0].clone();
        let origin = rec.traj.steps[0].pos;
        for s in rec.traj.steps.iter_mut() {
            s.action = Action::Stay;
            s.pos = origin;
        }
        let map = d.map_of(&d.trajectories[0]).clone();
        if rec.traj.len() >= 3 {
            let s = encode_window(&rec, &map, 1, ConditionFlags::default());
            let plane8: f64 = s.input[8 * CELLS..9 * CELLS].iter().sum();
            assert_eq!(plane8, CELLS as f64);
        }
    }
}
