//! Experiment configuration: a TOML file with `[dataset]`, `[train]`,
//! `[eval]`, and `[output]` sections. Unknown keys are rejected so typos
//! fail loudly at startup.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sps_core::datagen::DatasetSpec;
use sps_core::gridworld::MapConfig;
use sps_core::planner::PlannerConfig;
use sps_core::sps::{SpsConfig, Variant};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub train_maps: usize,
    #[serde(default = "default_trajectories")]
    pub trajectories_per_map: usize,
    #[serde(default = "default_density")]
    pub wall_density: f64,
    #[serde(default = "default_columns")]
    pub columns: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub planner: PlannerSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    #[serde(default = "default_budget")]
    pub sample_budget: usize,
    #[serde(default = "default_ucb")]
    pub ucb_constant: f64,
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default = "default_rollout")]
    pub rollout_depth: usize,
    #[serde(default = "default_step_reward")]
    pub step_reward: f64,
    #[serde(default = "default_goal_reward")]
    pub goal_reward: f64,
    #[serde(default = "default_max_steps")]
    pub max_episode_steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub variants: Vec<String>,
    pub learning_rates: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_l1")]
    pub l1: f64,
    #[serde(default = "default_l2")]
    pub l2: f64,
    #[serde(default = "default_milestones")]
    pub milestones: Vec<usize>,
    #[serde(default = "default_gamma")]
    pub lr_gamma: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub early_stop_patience: usize,
    #[serde(default = "default_val_fraction")]
    pub validation_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Reduced actor budgets for the generalization table; empty disables it.
    #[serde(default)]
    pub budgets: Vec<u32>,
    /// Aligned-object counts for the alignment table; empty disables it.
    #[serde(default)]
    pub aligned: Vec<usize>,
    /// Whether to evaluate the neglected-object conditions.
    #[serde(default = "default_true")]
    pub neglected: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// How many training trajectories to render as ASCII maps.
    #[serde(default = "default_renders")]
    pub renders: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_out_dir(), renders: default_renders() }
    }
}

fn default_trajectories() -> usize { 30 }
fn default_density() -> f64 { 0.12 }
fn default_columns() -> usize { 3 }
fn default_budget() -> usize { 250 }
fn default_ucb() -> f64 { 0.35 }
fn default_discount() -> f64 { 0.95 }
fn default_rollout() -> usize { 20 }
fn default_step_reward() -> f64 { -0.01 }
fn default_goal_reward() -> f64 { 1.0 }
fn default_max_steps() -> usize { 100 }
fn default_batch() -> usize { 32 }
fn default_l1() -> f64 { 0.005 }
fn default_l2() -> f64 { 0.001 }
fn default_milestones() -> Vec<usize> { vec![30, 60, 80, 160] }
fn default_gamma() -> f64 { 0.5 }
fn default_max_epochs() -> usize { 200 }
fn default_patience() -> usize { 20 }
fn default_val_fraction() -> f64 { 0.1 }
fn default_true() -> bool { true }
fn default_out_dir() -> PathBuf { PathBuf::from("out") }
fn default_renders() -> usize { 6 }

impl Default for PlannerSection {
    fn default() -> Self {
        PlannerSection {
            sample_budget: default_budget(),
            ucb_constant: default_ucb(),
            discount: default_discount(),
            rollout_depth: default_rollout(),
            step_reward: default_step_reward(),
            goal_reward: default_goal_reward(),
            max_episode_steps: default_max_steps(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates; error messages name the offending key.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.train_maps == 0 {
            bail!("dataset.train_maps must be positive");
        }
        if !(0.0..=0.35).contains(&self.dataset.wall_density) {
            bail!("dataset.wall_density {} outside [0, 0.35]", self.dataset.wall_density);
        }
        if self.dataset.columns > 8 {
            bail!("dataset.columns {} outside 0..=8", self.dataset.columns);
        }
        if self.train.variants.is_empty() {
            bail!("train.variants must list at least one variant");
        }
        for v in &self.train.variants {
            if Variant::parse(v).is_none() {
                bail!("unknown variant `{}` in train.variants (expected bel or nobel)", v);
            }
        }
        if self.train.seeds.is_empty() {
            bail!("train.seeds must list at least one seed");
        }
        for &lr in &self.train.learning_rates {
            if !(0.00015..=0.001).contains(&lr) {
                bail!("train.learning_rates value {} outside [0.00015, 0.001]", lr);
            }
        }
        if self.train.batch_size == 0 {
            bail!("train.batch_size must be positive");
        }
        if !(0.0..0.9).contains(&self.train.validation_fraction) {
            bail!("train.validation_fraction {} outside [0, 0.9)", self.train.validation_fraction);
        }
        for &k in &self.eval.aligned {
            if k == 0 || k > 3 {
                bail!("eval.aligned value {} outside 1..=3", k);
            }
        }
        Ok(())
    }

    /// Dataset spec with the CLI master-seed override applied.
    pub fn dataset_spec(&self, seed_override: Option<u64>) -> DatasetSpec {
        let d = &self.dataset;
        let mut spec = DatasetSpec::new(d.train_maps, seed_override.unwrap_or(d.master_seed));
        spec.trajectories_per_map = d.trajectories_per_map;
        spec.map_cfg = MapConfig { wall_density: d.wall_density, column_count: d.columns };
        spec.planner_cfg = PlannerConfig {
            sample_budget: d.planner.sample_budget,
            ucb_constant: d.planner.ucb_constant,
            discount: d.planner.discount,
            rollout_depth: d.planner.rollout_depth,
            step_reward: d.planner.step_reward,
            goal_reward: d.planner.goal_reward,
            max_episode_steps: d.planner.max_episode_steps,
            seed: 0,
        };
        spec
    }

    /// All (variant, lr, seed) run combinations.
    pub fn runs(&self) -> Vec<(Variant, f64, u64)> {
        let mut out = Vec::new();
        for v in &self.train.variants {
            let variant = Variant::parse(v).expect("validated");
            for &lr in &self.train.learning_rates {
                for &seed in &self.train.seeds {
                    out.push((variant, lr, seed));
                }
            }
        }
        out
    }

    pub fn sps_config(&self, variant: Variant, lr: f64, seed: u64) -> SpsConfig {
        let t = &self.train;
        let mut cfg = SpsConfig::new(variant, lr, seed);
        cfg.batch_size = t.batch_size;
        cfg.l1 = t.l1;
        cfg.l2 = t.l2;
        cfg.milestones = t.milestones.clone();
        cfg.lr_gamma = t.lr_gamma;
        cfg.max_epochs = t.max_epochs;
        cfg.early_stop_patience = t.early_stop_patience;
        cfg.validation_fraction = t.validation_fraction;
        cfg
    }

    /// Output directory after `--out` and environment override. The
    /// environment variable is the only env-based configuration.
    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Ok(env) = std::env::var("SPS_OUT_DIR") {
            if !env.is_empty() {
                return PathBuf::from(env);
            }
        }
        self.output.dir.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[dataset]
train_maps = 2
master_seed = 7

[train]
variants = ["bel", "nobel"]
learning_rates = [0.001]
seeds = [1]
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.dataset.trajectories_per_map, 30);
        assert_eq!(cfg.train.milestones, vec![30, 60, 80, 160]);
        assert_eq!(cfg.runs().len(), 2);
        let spec = cfg.dataset_spec(None);
        assert_eq!(spec.n_test_maps, 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = format!("{}\n[dataset2]\nx = 1\n", MINIMAL);
        assert!(toml::from_str::<ExperimentConfig>(&bad).is_err());
        let bad_key = MINIMAL.replace("train_maps", "train_mapz");
        let err = toml::from_str::<ExperimentConfig>(&bad_key).unwrap_err();
        assert!(err.to_string().contains("train_mapz"), "{}", err);
    }

    #[test]
    fn unknown_variant_is_named_in_the_error() {
        let bad = MINIMAL.replace("\"nobel\"", "\"XYZ\"");
        let cfg: ExperimentConfig = toml::from_str(&bad).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("XYZ"), "{}", err);
    }

    #[test]
    fn seed_override_applies() {
        let cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.dataset_spec(Some(99)).master_seed, 99);
        assert_eq!(cfg.dataset_spec(None).master_seed, 7);
    }
}
