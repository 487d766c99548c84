//! JSON run, bench, and allocation-scenario files.
use crate::domain::SearchSpace;
use crate::manager::{self, Budget, Manager, ManagerError, Solver, Summary, TuningHistory};
use crate::objectives::{Objective, ObjectiveError, ObjectiveSpec};
use crate::sampling::mix_seed;
use crate::sched::{self, CostModel, SchedError};
use crate::solvers::{
    self, BayesConfig, BayesSolver, DirectConfig, DirectSolver, HybridConfig, HybridSolver, LhsSearch, NelderMeadConfig,
    NelderMeadSolver, RandomSearch,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const SOLVER_TYPES: [&str; 7] = ["random", "lhs", "hybrid", "bayes", "direct", "neldermead", "direct-nm"];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown solver type `{0}` (expected one of: random, lhs, hybrid, bayes, direct, neldermead, direct-nm)")]
    UnknownSolver(String),
    #[error("solver `{kind}`: {message}")]
    Solver { kind: String, message: String },
    #[error("no solvers configured")]
    NoSolvers,
    #[error("budget evaluations and concurrency must be at least 1")]
    Budget,
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Schedule(#[from] SchedError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    pub evaluations: usize,
    #[serde(default = "one")]
    pub concurrency: usize,
}

fn one() -> usize {
    1
}

impl BudgetSpec {
    pub fn to_budget(self) -> Result<Budget, ConfigError> {
        Budget::new(self.evaluations, self.concurrency).map_err(|_| ConfigError::Budget)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub params: serde_json::Value,
    /// Whether the solver is told about other solvers' evaluations.
    #[serde(default)]
    pub share: bool,
}

impl SolverSpec {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_owned(),
            params: serde_json::Value::Null,
            share: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchParams {
    #[serde(default = "ten")]
    batch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LhsParams {
    size: Option<usize>,
    #[serde(default = "ten")]
    batch: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

fn ten() -> usize {
    10
}

fn params<T: DeserializeOwned>(spec: &SolverSpec) -> Result<T, ConfigError> {
    let v = match &spec.params {
        serde_json::Value::Null => serde_json::json!({}),
        v => v.clone(),
    };
    serde_json::from_value(v).map_err(|e| ConfigError::Solver {
        kind: spec.kind.clone(),
        message: e.to_string(),
    })
}

/// Builds one solver. `budget` sizes an `lhs` sample when no size is given.
pub fn build_solver(spec: &SolverSpec, space: &SearchSpace, budget: usize, seed: u64) -> Result<Box<dyn Solver>, ConfigError> {
    let invalid = |e: solvers::ConfigError| ConfigError::Solver {
        kind: spec.kind.clone(),
        message: e.0,
    };
    let space = space.clone();
    Ok(match spec.kind.as_str() {
        "random" => {
            let p: BatchParams = params(spec)?;
            Box::new(RandomSearch::new(space, p.batch, seed))
        }
        "lhs" => {
            let p: LhsParams = params(spec)?;
            Box::new(LhsSearch::new(&space, p.size.unwrap_or(budget), p.batch, seed))
        }
        "hybrid" => Box::new(HybridSolver::new(space, params::<HybridConfig>(spec)?, seed).map_err(invalid)?),
        "bayes" => Box::new(BayesSolver::new(space, params::<BayesConfig>(spec)?, seed).map_err(invalid)?),
        "direct" => {
            params::<NoParams>(spec)?;
            Box::new(DirectSolver::pure(space))
        }
        "neldermead" => Box::new(NelderMeadSolver::new(space, params::<NelderMeadConfig>(spec)?)),
        "direct-nm" => Box::new(DirectSolver::hybrid(space, params::<DirectConfig>(spec)?)),
        other => return Err(ConfigError::UnknownSolver(other.to_owned())),
    })
}

/// A manager with every solver registered. Solver `i` is seeded with
/// `mix_seed(seed, i)`.
pub fn build_manager(space: &SearchSpace, solvers: &[SolverSpec], budget: usize, seed: u64) -> Result<Manager, ConfigError> {
    if solvers.is_empty() {
        return Err(ConfigError::NoSolvers);
    }
    let mut m = Manager::new(space.clone());
    for (i, spec) in solvers.iter().enumerate() {
        let solver = build_solver(spec, space, budget, mix_seed(seed, i as u64))?;
        m.register_solver(solver, spec.share).expect("manager not started");
    }
    Ok(m)
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub search_space: SearchSpace,
    pub objective: ObjectiveSpec,
    pub budget: BudgetSpec,
    pub solvers: Vec<SolverSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Directory relative paths inside a config file resolve against.
pub fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Everything needed to run one tuning job.
pub struct TuneJob {
    pub space: SearchSpace,
    pub manager: Manager,
    pub objective: Box<dyn Objective>,
    pub budget: Budget,
    pub seed: u64,
}

impl TuneJob {
    pub fn run(mut self) -> Result<(SearchSpace, TuningHistory), ManagerError> {
        let h = self.manager.run(self.objective.as_ref(), self.budget, self.seed)?;
        Ok((self.space, h))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = read_json(path)?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), ConfigError> {
        if self.solvers.is_empty() {
            return Err(ConfigError::NoSolvers);
        }
        self.budget.to_budget()?;
        if let Some(bad) = self.solvers.iter().find(|s| !SOLVER_TYPES.contains(&s.kind.as_str())) {
            return Err(ConfigError::UnknownSolver(bad.kind.clone()));
        }
        Ok(())
    }

    pub fn prepare(&self, base_dir: &Path) -> Result<TuneJob, ConfigError> {
        self.check()?;
        let objective = self.objective.build(&self.search_space, base_dir)?;
        let manager = build_manager(&self.search_space, &self.solvers, self.budget.evaluations, self.seed)?;
        Ok(TuneJob {
            space: self.search_space.clone(),
            manager,
            objective,
            budget: self.budget.to_budget()?,
            seed: self.seed,
        })
    }
}

/// Writes `history.csv`, `convergence.csv`, `summary.json` and
/// `timings.csv` into `dir`. Measured wall times live only in `timings.csv`
/// so that the other files are reproducible from config and seed.
pub fn write_outputs(dir: &Path, space: &SearchSpace, history: &TuningHistory) -> std::io::Result<Summary> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("history.csv"), manager::history_csv(space, history, false))?;
    std::fs::write(dir.join("timings.csv"), manager::timings_csv(history))?;
    std::fs::write(dir.join("convergence.csv"), manager::convergence_csv(history))?;
    let summary = manager::report(space, history).map_err(std::io::Error::other)?;
    let json = serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSetup {
    pub name: String,
    pub solvers: Vec<SolverSpec>,
    /// Overrides the shared budget for this setup.
    #[serde(default)]
    pub budget: Option<BudgetSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub search_space: SearchSpace,
    pub objective: ObjectiveSpec,
    pub budget: BudgetSpec,
    pub setups: Vec<BenchSetup>,
    /// Run `i` of every setup uses seed `seed + i`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl BenchConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = read_json(path)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.setups.len() < 2 {
            return Err(ConfigError::Invalid("a bench needs at least 2 solver setups".into()));
        }
        self.budget.to_budget()?;
        for s in &self.setups {
            if s.solvers.is_empty() {
                return Err(ConfigError::NoSolvers);
            }
            if let Some(b) = s.budget {
                b.to_budget()?;
            }
            if let Some(bad) = s.solvers.iter().find(|x| !SOLVER_TYPES.contains(&x.kind.as_str())) {
                return Err(ConfigError::UnknownSolver(bad.kind.clone()));
            }
            // surface parameter errors before any run starts
            for (i, spec) in s.solvers.iter().enumerate() {
                build_solver(spec, &self.search_space, self.budget.evaluations, i as u64)?;
            }
        }
        Ok(())
    }
}

/// `{grid, batch, iterations, model | observations}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub grid: usize,
    pub batch: usize,
    #[serde(default = "one")]
    pub iterations: usize,
    #[serde(default)]
    pub model: Option<CostModel>,
    #[serde(default)]
    pub observations: Option<Vec<(f64, f64)>>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        read_json(path)
    }

    /// The cost model, fitted first when observations are given. Also
    /// returns the fit residual.
    pub fn cost_model(&self) -> Result<(CostModel, Option<f64>), ConfigError> {
        match (&self.model, &self.observations) {
            (Some(m), None) => Ok((CostModel::new(m.t_serial, m.c_comm, m.t_fixed)?, None)),
            (None, Some(obs)) => {
                let fit = sched::fit_cost_model(obs)?;
                Ok((fit.model, Some(fit.residual)))
            }
            _ => Err(ConfigError::Invalid("scenario needs exactly one of `model` or `observations`".into())),
        }
    }

    /// The `w -> makespan` table; the last line names the optimum.
    pub fn render(&self) -> Result<String, ConfigError> {
        use crate::format::float;
        let (model, residual) = self.cost_model()?;
        let table = sched::makespan_table(self.grid, self.batch, self.iterations, &model)?;
        let best = sched::best_allocation(self.grid, self.batch, self.iterations, &model)?;
        let mut out = String::new();
        if let Some(r) = residual {
            writeln!(
                out,
                "fitted t_serial={} c_comm={} t_fixed={} residual={}",
                float(model.t_serial),
                float(model.c_comm),
                float(model.t_fixed),
                float(r)
            )
            .unwrap();
        }
        writeln!(out, "{:>6} {:>6} {:>14}", "w", "slots", "makespan").unwrap();
        for (w, t) in &table {
            writeln!(out, "{:>6} {:>6} {:>14}", w, self.grid / w, float(*t)).unwrap();
        }
        let t = table[best.workers - 1].1;
        writeln!(out, "minimum makespan {}", float(t)).unwrap();
        writeln!(out, "optimal w={}", best.workers).unwrap();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_json(solvers: &str) -> String {
        format!(
            r#"{{
                "search_space": [{{"name": "x", "type": "continuous", "bounds": [-1, 1]}}],
                "objective": {{"type": "builtin", "function": {{"name": "sphere"}}}},
                "budget": {{"evaluations": 20, "concurrency": 2}},
                "solvers": {solvers}
            }}"#
        )
    }

    #[test]
    fn every_solver_type_builds() {
        let space: SearchSpace = serde_json::from_str(r#"[{"name": "x", "type": "continuous", "bounds": [0, 1]}]"#).unwrap();
        for kind in SOLVER_TYPES {
            assert!(build_solver(&SolverSpec::new(kind), &space, 10, 0).is_ok(), "{kind}");
        }
    }

    #[test]
    fn unknown_solver_is_named() {
        let cfg: RunConfig = serde_json::from_str(&run_json(r#"[{"type": "annealing"}]"#)).unwrap();
        let err = cfg.check().unwrap_err();
        assert!(err.to_string().contains("annealing"));
    }

    #[test]
    fn bad_params_are_config_errors() {
        let cfg: RunConfig = serde_json::from_str(&run_json(r#"[{"type": "hybrid", "params": {"population": 3, "centers": 5}}]"#)).unwrap();
        assert!(matches!(cfg.prepare(Path::new(".")), Err(ConfigError::Solver { .. })));
        let cfg: RunConfig = serde_json::from_str(&run_json(r#"[{"type": "bayes", "params": {"kapa": 1}}]"#)).unwrap();
        assert!(matches!(cfg.prepare(Path::new(".")), Err(ConfigError::Solver { .. })));
    }

    #[test]
    fn prepared_job_runs_to_budget() {
        let cfg: RunConfig = serde_json::from_str(&run_json(r#"[{"type": "random"}, {"type": "hybrid", "share": true}]"#)).unwrap();
        let (space, h) = cfg.prepare(Path::new(".")).unwrap().run().unwrap();
        assert_eq!(h.records.len(), 20);
        let dir = tempfile::tempdir().unwrap();
        let summary = write_outputs(dir.path(), &space, &h).unwrap();
        assert_eq!(summary.total, 20);
        let hist = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
        assert_eq!(hist.lines().count(), 21);
    }

    #[test]
    fn scenario_rendering() {
        let s: Scenario = serde_json::from_str(
            r#"{"grid": 32, "batch": 64, "iterations": 1, "model": {"t_serial": 64, "c_comm": 1, "t_fixed": 1}}"#,
        )
        .unwrap();
        let out = s.render().unwrap();
        assert_eq!(out.lines().last(), Some("optimal w=1"));
        assert!(out.contains("minimum makespan 130"));

        let s: Scenario = serde_json::from_str(r#"{"grid": 1, "batch": 3, "model": {"t_serial": 5, "c_comm": 0, "t_fixed": 0}}"#).unwrap();
        let out = s.render().unwrap();
        assert_eq!(out.lines().count(), 4);
        assert_eq!(out.lines().last(), Some("optimal w=1"));

        let s: Scenario = serde_json::from_str(
            r#"{"grid": 8, "batch": 8, "observations": [[1, 65], [2, 34], [4, 20], [8, 16]]}"#,
        )
        .unwrap();
        let out = s.render().unwrap();
        assert!(out.starts_with("fitted t_serial=64"));
        assert!(out.contains("residual="));

        let s: Scenario = serde_json::from_str(r#"{"grid": 8, "batch": 8}"#).unwrap();
        assert!(s.render().is_err());
    }
}
