//! Pipeline stages: dataset generation, training sweep, evaluation, and
//! report emission. Every stage writes its artifacts atomically and records
//! them in the run manifest; `--resume` skips hash-verified stages.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sps_core::datagen::{
    build_budget_test_dataset, build_test_dataset, build_train_dataset, load_dataset,
    save_dataset, Dataset,
};
use sps_core::eval::report::{build_report, condition_key, render_csv, render_markdown};
use sps_core::eval::{build_aligned_testset, evaluate, EvalCondition, RunResult};
use sps_core::io::atomic_write;
use sps_core::sps::checkpoint::{load_checkpoint, save_checkpoint};
use sps_core::sps::{train, SpsModel, Variant};

use crate::config::ExperimentConfig;
use crate::manifest::RunManifest;
use crate::render::render_trajectory;

pub struct Pipeline {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub seed_override: Option<u64>,
    pub resume: bool,
}

/// Serialized evaluation results, one entry per trained run.
#[derive(Debug, Serialize, Deserialize)]
pub struct StoredRun {
    pub maps: usize,
    pub variant: String,
    pub lr: f64,
    pub seed: u64,
    pub accuracies: BTreeMap<String, Option<f64>>,
}

impl Pipeline {
    fn dataset_dir(&self) -> PathBuf {
        self.out_dir.join("datasets")
    }

    fn checkpoint_path(&self, variant: Variant, lr: f64, seed: u64) -> PathBuf {
        self.out_dir
            .join("checkpoints")
            .join(format!("{}_lr{}_seed{}.sps", variant.name(), lr, seed))
    }

    fn budget_sets(&self) -> Vec<u32> {
        let canonical = self.config.dataset.planner.sample_budget as u32;
        self.config.eval.budgets.iter().copied().filter(|&b| b != canonical).collect()
    }

    /// Stage `gen`: maps, datasets (train, test, aligned, budget variants),
    /// and ASCII renders.
    pub fn stage_gen(&self, manifest: &mut RunManifest) -> Result<()> {
        if self.resume && manifest.stage_verified(&self.out_dir, "gen") {
            eprintln!("gen: verified complete, skipping");
            return Ok(());
        }
        let spec = self.config.dataset_spec(self.seed_override);
        let mut artifacts = Vec::new();
        let dd = self.dataset_dir();
        std::fs::create_dir_all(&dd)?;

        let train_set = build_train_dataset(&spec).context("building training dataset")?;
        let test_set = build_test_dataset(&spec).context("building test dataset")?;
        for (name, ds) in [("train.tomg", &train_set), ("test.tomg", &test_set)] {
            let path = dd.join(name);
            save_dataset(ds, &path).with_context(|| format!("writing {}", path.display()))?;
            artifacts.push(path);
        }
        for &b in &self.budget_sets() {
            let ds = build_budget_test_dataset(&spec, b)
                .with_context(|| format!("building budget-{} test set", b))?;
            let path = dd.join(format!("budget_{}.tomg", b));
            save_dataset(&ds, &path)?;
            artifacts.push(path);
        }
        for &k in &self.config.eval.aligned {
            let ds = build_aligned_testset(&spec, k)
                .with_context(|| format!("building aligned-{} test set", k))?;
            let path = dd.join(format!("aligned_{}.tomg", k));
            save_dataset(&ds, &path)?;
            artifacts.push(path);
        }

        // Map text files.
        let maps_dir = self.out_dir.join("maps");
        std::fs::create_dir_all(&maps_dir)?;
        for map in train_set.maps.iter().chain(test_set.maps.iter()) {
            let path = maps_dir.join(format!("map_{}.txt", map.map_id));
            atomic_write(&path, map.to_text().as_bytes())?;
            artifacts.push(path);
        }

        // A few example trajectory renders.
        let renders_dir = self.out_dir.join("renders");
        std::fs::create_dir_all(&renders_dir)?;
        for (i, rec) in train_set.trajectories.iter().take(self.config.output.renders).enumerate()
        {
            let text = render_trajectory(&train_set.maps[rec.map_index], &rec.traj);
            let path = renders_dir.join(format!("traj_{:03}.txt", i));
            atomic_write(&path, text.as_bytes())?;
            artifacts.push(path);
        }

        manifest.record_stage(&self.out_dir, "gen", &artifacts)?;
        eprintln!(
            "gen: {} train / {} test samples written",
            train_set.n_samples(),
            test_set.n_samples()
        );
        Ok(())
    }

    /// Stage `train`: one checkpoint per (variant, lr, seed), in parallel.
    pub fn stage_train(&self, manifest: &mut RunManifest) -> Result<()> {
        if self.resume && manifest.stage_verified(&self.out_dir, "train") {
            eprintln!("train: verified complete, skipping");
            return Ok(());
        }
        let train_set =
            Arc::new(load_dataset(&self.dataset_dir().join("train.tomg")).context("loading train.tomg")?);
        std::fs::create_dir_all(self.out_dir.join("checkpoints"))?;
        std::fs::create_dir_all(self.out_dir.join("curves"))?;
        let runs = self.config.runs();
        let results: Result<Vec<Vec<PathBuf>>> = runs
            .par_iter()
            .map(|&(variant, lr, seed)| {
                let cfg = self.config.sps_config(variant, lr, seed);
                let (model, curves) = train(&train_set, &cfg)
                    .with_context(|| format!("training {} lr={} seed={}", variant.name(), lr, seed))?;
                let ckpt = self.checkpoint_path(variant, lr, seed);
                save_checkpoint(&model, None, &ckpt)?;
                let curve_path = self
                    .out_dir
                    .join("curves")
                    .join(format!("{}_lr{}_seed{}.csv", variant.name(), lr, seed));
                let mut csv = String::from(
                    "epoch,lr,train_total,train_target,train_action,train_state,train_belief,val_total\n",
                );
                for e in &curves.epochs {
                    csv.push_str(&format!(
                        "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
                        e.epoch,
                        e.lr,
                        e.train.total,
                        e.train.ce_target,
                        e.train.ce_action,
                        e.train.ce_state,
                        e.train.kl_belief,
                        e.val.as_ref().map(|v| format!("{:.6}", v.total)).unwrap_or_default(),
                    ));
                }
                atomic_write(&curve_path, csv.as_bytes())?;
                eprintln!(
                    "train: {} lr={} seed={} done ({} epochs, best {})",
                    variant.name(),
                    lr,
                    seed,
                    curves.epochs.len(),
                    curves.best_epoch
                );
                Ok(vec![ckpt, curve_path])
            })
            .collect();
        let artifacts: Vec<PathBuf> = results?.into_iter().flatten().collect();
        manifest.record_stage(&self.out_dir, "train", &artifacts)?;
        Ok(())
    }

    /// The conditions evaluated on the main test set.
    fn main_conditions(&self) -> Vec<Vec<EvalCondition>> {
        let mut conds = vec![
            vec![EvalCondition::Global],
            vec![EvalCondition::TargetHidden],
            vec![EvalCondition::TargetVisible],
        ];
        if self.config.eval.neglected {
            for n in 1..=3u8 {
                conds.push(vec![EvalCondition::Neglected(n), EvalCondition::TargetVisible]);
                conds.push(vec![EvalCondition::Neglected(n), EvalCondition::TargetHidden]);
            }
        }
        if self.config.eval.budgets.contains(&(self.config.dataset.planner.sample_budget as u32)) {
            conds.push(vec![EvalCondition::Budget(
                self.config.dataset.planner.sample_budget as u32,
            )]);
        }
        conds
    }

    /// Stage `eval`: every checkpoint against every test corpus/condition.
    pub fn stage_eval(&self, manifest: &mut RunManifest) -> Result<()> {
        if self.resume && manifest.stage_verified(&self.out_dir, "eval") {
            eprintln!("eval: verified complete, skipping");
            return Ok(());
        }
        let dd = self.dataset_dir();
        let test_set = Arc::new(load_dataset(&dd.join("test.tomg")).context("loading test.tomg")?);
        let budget_sets: Vec<(u32, Arc<Dataset>)> = self
            .budget_sets()
            .iter()
            .map(|&b| {
                Ok((b, Arc::new(load_dataset(&dd.join(format!("budget_{}.tomg", b)))?)))
            })
            .collect::<Result<_>>()?;
        let aligned_sets: Vec<(usize, Arc<Dataset>)> = self
            .config
            .eval
            .aligned
            .iter()
            .map(|&k| {
                Ok((k, Arc::new(load_dataset(&dd.join(format!("aligned_{}.tomg", k)))?)))
            })
            .collect::<Result<_>>()?;

        let maps = self.config.dataset.train_maps;
        let runs = self.config.runs();
        let stored: Result<Vec<StoredRun>> = runs
            .par_iter()
            .map(|&(variant, lr, seed)| {
                let ckpt = self.checkpoint_path(variant, lr, seed);
                let (mut model, _) = load_checkpoint(&ckpt)
                    .with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
                let mut accuracies = BTreeMap::new();
                for conds in self.main_conditions() {
                    accuracies
                        .insert(condition_key(&conds), evaluate(&mut model, &test_set, &conds));
                }
                for (b, ds) in &budget_sets {
                    let conds = vec![EvalCondition::Budget(*b)];
                    accuracies.insert(condition_key(&conds), evaluate(&mut model, ds, &conds));
                }
                for (k, ds) in &aligned_sets {
                    for vis in [EvalCondition::TargetVisible, EvalCondition::TargetHidden] {
                        let conds = vec![EvalCondition::Aligned(*k as u8), vis];
                        accuracies.insert(condition_key(&conds), evaluate(&mut model, ds, &conds));
                    }
                }
                Ok(StoredRun {
                    maps,
                    variant: variant.name().to_string(),
                    lr,
                    seed,
                    accuracies,
                })
            })
            .collect();
        let stored = stored?;
        let path = self.out_dir.join("eval").join("results.json");
        std::fs::create_dir_all(path.parent().unwrap())?;
        atomic_write(&path, serde_json::to_string_pretty(&stored)?.as_bytes())?;
        manifest.record_stage(&self.out_dir, "eval", &[path])?;
        eprintln!("eval: {} runs evaluated", stored.len());
        Ok(())
    }

    /// Stage `report`: aggregate results into the table schemas.
    pub fn stage_report(&self, manifest: &mut RunManifest) -> Result<()> {
        if self.resume && manifest.stage_verified(&self.out_dir, "report") {
            eprintln!("report: verified complete, skipping");
            return Ok(());
        }
        let path = self.out_dir.join("eval").join("results.json");
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let stored: Vec<StoredRun> = serde_json::from_str(&text)?;
        let results: Vec<RunResult> = stored
            .iter()
            .map(|s| RunResult {
                maps: s.maps,
                variant: Variant::parse(&s.variant).expect("stored variant"),
                lr: s.lr,
                seed: s.seed,
                accuracies: s.accuracies.clone(),
            })
            .collect();
        let report = build_report(&results);
        let csv_path = self.out_dir.join("report.csv");
        let md_path = self.out_dir.join("report.md");
        atomic_write(&csv_path, render_csv(&report).as_bytes())?;
        atomic_write(&md_path, render_markdown(&report).as_bytes())?;
        manifest.record_stage(&self.out_dir, "report", &[csv_path, md_path])?;
        eprintln!("report: {} rows", report.rows.len());
        Ok(())
    }

    /// Renders trajectories from a dataset file to stdout.
    pub fn render_dataset(&self, dataset: &str, count: usize) -> Result<String> {
        let ds = load_dataset(&self.dataset_dir().join(dataset))
            .with_context(|| format!("loading {}", dataset))?;
        let mut out = String::new();
        for rec in ds.trajectories.iter().take(count) {
            out.push_str(&format!(
                "map {} trajectory {} ({} steps, reached={})\n",
                ds.maps[rec.map_index].map_id,
                rec.traj_id,
                rec.traj.len(),
                rec.traj.reached_target
            ));
            out.push_str(&render_trajectory(&ds.maps[rec.map_index], &rec.traj));
            out.push('\n');
        }
        Ok(out)
    }

    /// Loads an existing manifest or starts a fresh one; a changed config
    /// invalidates any previous manifest.
    pub fn manifest(&self, config_text: &str) -> Result<RunManifest> {
        let hash = crate::manifest::sha256_hex(config_text.as_bytes());
        match RunManifest::load(&self.out_dir)? {
            Some(m) if m.config_hash == hash => Ok(m),
            Some(_) if self.resume => anyhow::bail!(
                "config changed since the last run in {}; refusing to resume",
                self.out_dir.display()
            ),
            _ => Ok(RunManifest::new(hash)),
        }
    }

    pub fn run_all(&self, manifest: &mut RunManifest) -> Result<()> {
        self.stage_gen(manifest).context("stage gen")?;
        self.stage_train(manifest).context("stage train")?;
        self.stage_eval(manifest).context("stage eval")?;
        self.stage_report(manifest).context("stage report")?;
        Ok(())
    }
}

/// Dummy model accessor used by integration tests to confirm checkpoints
/// load back into usable models.
pub fn checkpoint_variant(path: &std::path::Path) -> Result<SpsModel> {
    Ok(load_checkpoint(path)?.0)
}
