//! Solver-comparison runs: every setup of a [`BenchConfig`] over a range of
//! seeds.
use crate::config::{build_manager, BenchConfig, ConfigError};
use crate::format::float;
use crate::manager::ManagerError;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] ManagerError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub setup: String,
    pub seed: u64,
    /// Best successful objective, `None` when every evaluation failed.
    pub best: Option<f64>,
    pub evaluations: usize,
    pub wall_ms: u128,
}

pub fn run_bench(cfg: &BenchConfig, base_dir: &Path, seeds: u64) -> Result<Vec<BenchRow>, BenchError> {
    cfg.check()?;
    let objective = cfg.objective.build(&cfg.search_space, base_dir).map_err(ConfigError::from)?;
    let mut rows = Vec::new();
    for setup in &cfg.setups {
        let budget_spec = setup.budget.unwrap_or(cfg.budget);
        for i in 0..seeds {
            let seed = cfg.seed.wrapping_add(i);
            let mut manager = build_manager(&cfg.search_space, &setup.solvers, budget_spec.evaluations, seed)?;
            let start = Instant::now();
            let h = manager.run(objective.as_ref(), budget_spec.to_budget()?, seed)?;
            rows.push(BenchRow {
                setup: setup.name.clone(),
                seed,
                best: h.best_objective(),
                evaluations: h.records.len(),
                wall_ms: start.elapsed().as_millis(),
            });
            log::info!("{} seed {seed}: best {:?}", setup.name, h.best_objective());
        }
    }
    Ok(rows)
}

fn best_field(b: Option<f64>) -> String {
    b.map(float).unwrap_or_default()
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["solver", "seed", "best_objective", "evaluations", "wall_time_ms"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.setup.clone(),
            r.seed.to_string(),
            best_field(r.best),
            r.evaluations.to_string(),
            r.wall_ms.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetupStats {
    pub setup: String,
    pub runs: usize,
    pub mean_best: Option<f64>,
    pub median_best: Option<f64>,
    pub mean_evaluations: f64,
}

/// Per-setup statistics in first-appearance order. Runs without any
/// successful evaluation are left out of the best-objective statistics.
pub fn summarize(rows: &[BenchRow]) -> Vec<SetupStats> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.setup.as_str()) {
            names.push(&r.setup);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let mine: Vec<&BenchRow> = rows.iter().filter(|r| r.setup == name).collect();
            let bests: Vec<f64> = mine.iter().filter_map(|r| r.best).collect();
            SetupStats {
                setup: name.to_owned(),
                runs: mine.len(),
                mean_best: (!bests.is_empty()).then(|| bests.iter().sum::<f64>() / bests.len() as f64),
                median_best: median(&bests),
                mean_evaluations: mine.iter().map(|r| r.evaluations as f64).sum::<f64>() / mine.len() as f64,
            }
        })
        .collect()
}

pub fn summary_table(stats: &[SetupStats]) -> String {
    let width = stats.iter().map(|s| s.setup.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    writeln!(out, "{:<width$} {:>5} {:>24} {:>24} {:>10}", "setup", "runs", "mean_best", "median_best", "mean_evals").unwrap();
    for s in stats {
        writeln!(
            out,
            "{:<width$} {:>5} {:>24} {:>24} {:>10}",
            s.setup,
            s.runs,
            best_field(s.mean_best),
            best_field(s.median_best),
            float(s.mean_evaluations)
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bench(setups: &str) -> BenchConfig {
        serde_json::from_str(&format!(
            r#"{{
                "search_space": [
                    {{"name": "a", "type": "continuous", "bounds": [-5.12, 5.12]}},
                    {{"name": "b", "type": "continuous", "bounds": [-5.12, 5.12]}}
                ],
                "objective": {{"type": "builtin", "function": {{"name": "rastrigin"}}}},
                "budget": {{"evaluations": 30, "concurrency": 2}},
                "setups": {setups}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn rows_per_setup_and_seed() {
        let cfg = bench(r#"[{"name": "hybrid", "solvers": [{"type": "hybrid"}]}, {"name": "random", "solvers": [{"type": "random"}]}]"#);
        let rows = run_bench(&cfg, Path::new("."), 3).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(bench_csv(&rows).lines().count(), 7);
        let stats = summarize(&rows);
        assert_eq!(stats.len(), 2);
        assert!(stats.iter().all(|s| s.runs == 3 && s.median_best.is_some()));
        assert!(summary_table(&stats).contains("median_best"));
    }

    #[test]
    fn duplicated_setups_agree() {
        let cfg = bench(r#"[{"name": "x", "solvers": [{"type": "bayes"}]}, {"name": "y", "solvers": [{"type": "bayes"}]}]"#);
        let rows = run_bench(&cfg, Path::new("."), 2).unwrap();
        assert_eq!(rows[0].best, rows[2].best);
        assert_eq!(rows[1].best, rows[3].best);
    }

    #[test]
    fn needs_two_setups() {
        let cfg = bench(r#"[{"name": "x", "solvers": [{"type": "random"}]}]"#);
        assert!(matches!(run_bench(&cfg, Path::new("."), 1), Err(BenchError::Config(_))));
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
    }
}
