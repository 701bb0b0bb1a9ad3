//! Seed-sweep aggregation and table rendering.
//!
//! Each trained run contributes per-condition accuracies; the report picks
//! the best learning rate per (condition, map count, variant) by mean
//! accuracy, compares the variants with Welch's test, and renders the five
//! table schemas as Markdown plus a flat CSV.

use std::collections::{BTreeMap, BTreeSet};

use super::stats::{mean_var, welch_t_test};
use super::EvalCondition;
use crate::sps::Variant;

/// Canonical string key for a condition conjunction.
pub fn condition_key(conds: &[EvalCondition]) -> String {
    if conds.is_empty() || conds == [EvalCondition::Global] {
        return "global".to_string();
    }
    conds
        .iter()
        .map(|c| match c {
            EvalCondition::Global => "global".to_string(),
            EvalCondition::TargetHidden => "hidden".to_string(),
            EvalCondition::TargetVisible => "visible".to_string(),
            EvalCondition::Neglected(n) => format!("neglected{}", n),
            EvalCondition::Aligned(k) => format!("aligned{}", k),
            EvalCondition::Budget(b) => format!("budget{}", b),
        })
        .collect::<Vec<_>>()
        .join("+")
}

/// One trained network's evaluation results.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub maps: usize,
    pub variant: Variant,
    pub lr: f64,
    pub seed: u64,
    /// condition key -> accuracy; `None` marks an undefined (empty) cell.
    pub accuracies: BTreeMap<String, Option<f64>>,
}

/// Aggregated accuracy for one (condition, maps, variant) cell at its best
/// learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub lr: f64,
    /// Per-seed accuracies in seed order.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub condition: String,
    pub maps: usize,
    pub bel: Option<CellStats>,
    pub nobel: Option<CellStats>,
    /// mean(BEL) - mean(NoBEL) when both cells exist.
    pub diff: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

fn f64_key(x: f64) -> u64 {
    x.to_bits()
}

/// Best-LR cell statistics for one (condition, maps, variant) group.
fn best_cell(results: &[&RunResult], key: &str) -> Option<CellStats> {
    let mut by_lr: BTreeMap<u64, Vec<(u64, f64)>> = BTreeMap::new();
    for r in results {
        if let Some(Some(acc)) = r.accuracies.get(key) {
            by_lr.entry(f64_key(r.lr)).or_default().push((r.seed, *acc));
        }
    }
    let mut best: Option<CellStats> = None;
    for (lr_bits, mut seed_accs) in by_lr {
        seed_accs.sort_by_key(|(seed, _)| *seed);
        let accs: Vec<f64> = seed_accs.iter().map(|(_, a)| *a).collect();
        let (mean, var, _) = mean_var(&accs);
        let cell = CellStats { lr: f64::from_bits(lr_bits), accuracies: accs, mean, var };
        let better = match &best {
            None => true,
            Some(b) => cell.mean > b.mean,
        };
        if better {
            best = Some(cell);
        }
    }
    best
}

/// Aggregates a sweep. Missing variant cells stay present with `None`
/// statistics so gaps are visible in the rendered tables.
pub fn build_report(results: &[RunResult]) -> EvalReport {
    let mut conditions: BTreeSet<String> = BTreeSet::new();
    let mut map_counts: BTreeSet<usize> = BTreeSet::new();
    for r in results {
        map_counts.insert(r.maps);
        for key in r.accuracies.keys() {
            conditions.insert(key.clone());
        }
    }
    let mut rows = Vec::new();
    for condition in &conditions {
        for &maps in &map_counts {
            let group: Vec<&RunResult> = results.iter().filter(|r| r.maps == maps).collect();
            let bel: Vec<&RunResult> =
                group.iter().copied().filter(|r| r.variant == Variant::Bel).collect();
            let nobel: Vec<&RunResult> =
                group.iter().copied().filter(|r| r.variant == Variant::NoBel).collect();
            if bel.is_empty() && nobel.is_empty() {
                continue;
            }
            let bel_cell = best_cell(&bel, condition);
            let nobel_cell = best_cell(&nobel, condition);
            let (diff, p_value) = match (&bel_cell, &nobel_cell) {
                (Some(b), Some(n)) => {
                    let diff = Some(b.mean - n.mean);
                    let p = if b.accuracies.len() >= 2 && n.accuracies.len() >= 2 {
                        Some(welch_t_test(&b.accuracies, &n.accuracies).1)
                    } else {
                        None
                    };
                    (diff, p)
                }
                _ => (None, None),
            };
            rows.push(ReportRow {
                condition: condition.clone(),
                maps,
                bel: bel_cell,
                nobel: nobel_cell,
                diff,
                p_value,
            });
        }
    }
    EvalReport { rows }
}

fn fmt_opt(x: Option<f64>, digits: usize) -> String {
    match x {
        Some(v) => format!("{:.*}", digits, v),
        None => "-".to_string(),
    }
}

fn fmt_p(p: Option<f64>) -> String {
    match p {
        Some(p) if p < 0.001 => "<.001".to_string(),
        Some(p) => format!("{:.3}", p),
        None => "-".to_string(),
    }
}

/// Flat CSV: one line per (condition, maps, variant) cell.
pub fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from("condition,maps,variant,lr,mean,var,diff,p\n");
    for row in &report.rows {
        for (variant, cell) in [("bel", &row.bel), ("nobel", &row.nobel)] {
            match cell {
                Some(c) => {
                    out.push_str(&format!(
                        "{},{},{},{},{:.4},{:.4},{},{}\n",
                        row.condition,
                        row.maps,
                        variant,
                        c.lr,
                        c.mean,
                        c.var,
                        fmt_opt(row.diff, 4),
                        fmt_opt(row.p_value, 6),
                    ));
                }
                None => {
                    out.push_str(&format!(
                        "{},{},{},missing,,,{},{}\n",
                        row.condition,
                        row.maps,
                        variant,
                        fmt_opt(row.diff, 4),
                        fmt_opt(row.p_value, 6),
                    ));
                }
            }
        }
    }
    out
}

/// Which table schema a condition key belongs to.
fn table_of(condition: &str) -> usize {
    if condition == "global" {
        1
    } else if condition == "hidden" || condition == "visible" {
        2
    } else if condition.starts_with("neglected") {
        3
    } else if condition.starts_with("aligned") {
        4
    } else {
        5
    }
}

const TABLE_TITLES: [&str; 5] = [
    "Table 1: target prediction accuracy (whole test set)",
    "Table 2: target prediction accuracy by target visibility",
    "Table 3: accuracy by number of neglected objects",
    "Table 4: accuracy by number of aligned objects",
    "Table 5: accuracy under reduced actor planning budgets",
];

/// Markdown rendering mirroring the five table schemas.
pub fn render_markdown(report: &EvalReport) -> String {
    let mut out = String::new();
    for (i, title) in TABLE_TITLES.iter().enumerate() {
        let table = i + 1;
        let rows: Vec<&ReportRow> =
            report.rows.iter().filter(|r| table_of(&r.condition) == table).collect();
        if rows.is_empty() {
            continue;
        }
        out.push_str(&format!("## {}\n\n", title));
        out.push_str(
            "| condition | maps | BEL lr | BEL acc | BEL var | NoBEL lr | NoBEL acc | NoBEL var | Bel-NoBel | p |\n",
        );
        out.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
        for row in rows {
            let (blr, bacc, bvar) = match &row.bel {
                Some(c) => (format!("{}", c.lr), format!("{:.2}", c.mean), format!("{:.2}", c.var)),
                None => ("-".into(), "missing".into(), "-".into()),
            };
            let (nlr, nacc, nvar) = match &row.nobel {
                Some(c) => (format!("{}", c.lr), format!("{:.2}", c.mean), format!("{:.2}", c.var)),
                None => ("-".into(), "missing".into(), "-".into()),
            };
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
                row.condition,
                row.maps,
                blr,
                bacc,
                bvar,
                nlr,
                nacc,
                nvar,
                fmt_opt(row.diff, 2),
                fmt_p(row.p_value),
            ));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(
        maps: usize,
        variant: Variant,
        lr: f64,
        seed: u64,
        entries: &[(&str, f64)],
    ) -> RunResult {
        RunResult {
            maps,
            variant,
            lr,
            seed,
            accuracies: entries
                .iter()
                .map(|(k, v)| (k.to_string(), Some(*v)))
                .collect(),
        }
    }

    #[test]
    fn diff_is_the_mean_difference() {
        // Means 69.45 and 67.57 give a computed difference of 1.88.
        let mut results = Vec::new();
        for (i, acc) in [69.40, 69.50].iter().enumerate() {
            results.push(run(25, Variant::Bel, 0.001, i as u64, &[("global", *acc)]));
        }
        for (i, acc) in [67.52, 67.62].iter().enumerate() {
            results.push(run(25, Variant::NoBel, 0.001, i as u64, &[("global", *acc)]));
        }
        let report = build_report(&results);
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        assert!((row.bel.as_ref().unwrap().mean - 69.45).abs() < 1e-12);
        assert!((row.nobel.as_ref().unwrap().mean - 67.57).abs() < 1e-12);
        assert!((row.diff.unwrap() - 1.88).abs() < 1e-9);
        assert!(row.p_value.is_some());
    }

    #[test]
    fn single_variant_sweep_has_no_diff_columns() {
        let results = vec![
            run(10, Variant::Bel, 0.001, 0, &[("global", 65.0)]),
            run(10, Variant::Bel, 0.001, 1, &[("global", 66.0)]),
        ];
        let report = build_report(&results);
        let row = &report.rows[0];
        assert!(row.bel.is_some());
        assert!(row.nobel.is_none());
        assert_eq!(row.diff, None);
        assert_eq!(row.p_value, None);
        // The missing cell is flagged in renders, not dropped.
        assert!(render_csv(&report).contains("nobel,missing"));
        assert!(render_markdown(&report).contains("missing"));
    }

    #[test]
    fn best_lr_selection_is_per_variant() {
        let mut results = Vec::new();
        for seed in 0..3u64 {
            results.push(run(25, Variant::Bel, 0.001, seed, &[("global", 60.0 + seed as f64)]));
            results.push(run(25, Variant::Bel, 0.0005, seed, &[("global", 70.0 + seed as f64)]));
            results.push(run(25, Variant::NoBel, 0.001, seed, &[("global", 68.0)]));
            results.push(run(25, Variant::NoBel, 0.0005, seed, &[("global", 62.0)]));
        }
        let report = build_report(&results);
        let row = &report.rows[0];
        assert_eq!(row.bel.as_ref().unwrap().lr, 0.0005);
        assert_eq!(row.nobel.as_ref().unwrap().lr, 0.001);
    }

    #[test]
    fn aggregation_commutes_with_result_order() {
        let mut results = Vec::new();
        for seed in 0..4u64 {
            results.push(run(25, Variant::Bel, 0.001, seed, &[("global", 65.0 + seed as f64)]));
            results.push(run(25, Variant::NoBel, 0.001, seed, &[("global", 64.0 + seed as f64)]));
        }
        let a = build_report(&results);
        results.reverse();
        let b = build_report(&results);
        assert_eq!(a, b);
        assert_eq!(render_csv(&a), render_csv(&b));
        assert_eq!(render_markdown(&a), render_markdown(&b));
    }

    #[test]
    fn condition_keys_are_canonical() {
        assert_eq!(condition_key(&[EvalCondition::Global]), "global");
        assert_eq!(
            condition_key(&[EvalCondition::Neglected(3), EvalCondition::TargetVisible]),
            "neglected3+visible"
        );
        assert_eq!(condition_key(&[EvalCondition::Budget(150)]), "budget150");
    }
}
