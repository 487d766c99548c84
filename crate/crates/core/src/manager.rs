//! Hybrid solver manager.
//!
//! Each iteration the manager collects points from every registered solver,
//! answers duplicates from the cache, evaluates the rest on up to `K` worker
//! threads, and hands the results back. Solvers that opted in to sharing also
//! see what every other solver asked for in that iteration.
use crate::cache::{CacheKey, CacheTree};
use crate::domain::{Point, SearchSpace};
use crate::format;
use crate::objectives::{EvalContext, Objective};
use crate::trial::{Outcome, SolverId, Status, TrialRecord, PENALTY};
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

/// Iterations in a row without a single new evaluation after which the run
/// stops even though budget remains.
pub const STALL_LIMIT: usize = 50;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
#[error("{0}")]
pub struct SolverError(pub String);

/// The ask/tell contract every search method implements.
///
/// `tell` may contain records for points the solver never asked for; these
/// come from other solvers when sharing is enabled.
pub trait Solver: Send {
    fn name(&self) -> &str;
    /// Returns at most `max_points` points to evaluate.
    fn ask(&mut self, max_points: usize) -> Result<Vec<Point>, SolverError>;
    fn tell(&mut self, records: &[TrialRecord]) -> Result<(), SolverError>;
    fn is_done(&self) -> bool {
        false
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ManagerError {
    #[error("no solvers registered")]
    NoSolvers,
    #[error("cannot register solvers after the run has started")]
    AlreadyStarted,
    #[error("budget needs max_evaluations >= 1 and max_concurrency >= 1")]
    BadBudget,
    #[error("history is empty")]
    EmptyHistory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Budget {
    pub max_evaluations: usize,
    pub max_concurrency: usize,
}

impl Budget {
    pub fn new(max_evaluations: usize, max_concurrency: usize) -> Result<Self, ManagerError> {
        if max_evaluations == 0 || max_concurrency == 0 {
            return Err(ManagerError::BadBudget);
        }
        Ok(Self {
            max_evaluations,
            max_concurrency,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub iterations: u64,
    /// Points returned by all asks.
    pub asked: u64,
    /// Asked points answered without calling the black box, including
    /// repeats within one iteration's batch.
    pub cache_hits: u64,
    pub evaluations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningHistory {
    /// Unique evaluated points, ordered by `eval_id`.
    pub records: Vec<TrialRecord>,
    /// `(iteration, best ok objective so far)`; [`PENALTY`] until the first
    /// successful evaluation.
    pub best_by_iteration: Vec<(u64, f64)>,
    pub solver_names: Vec<String>,
    pub stats: RunStats,
}

struct Slot {
    solver: Box<dyn Solver>,
    share_in: bool,
    done: bool,
}

pub struct Manager {
    space: SearchSpace,
    slots: Vec<Slot>,
    started: bool,
}

struct Job {
    point: Point,
    key: CacheKey,
    solver_id: SolverId,
    eval_id: u64,
}

impl Manager {
    pub fn new(space: SearchSpace) -> Self {
        Self {
            space,
            slots: Vec::new(),
            started: false,
        }
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn register_solver(&mut self, solver: Box<dyn Solver>, share_in: bool) -> Result<SolverId, ManagerError> {
        if self.started {
            return Err(ManagerError::AlreadyStarted);
        }
        self.slots.push(Slot {
            solver,
            share_in,
            done: false,
        });
        Ok(self.slots.len() - 1)
    }

    pub fn run(&mut self, objective: &dyn Objective, budget: Budget, seed: u64) -> Result<TuningHistory, ManagerError> {
        if self.slots.is_empty() {
            return Err(ManagerError::NoSolvers);
        }
        if budget.max_evaluations == 0 || budget.max_concurrency == 0 {
            return Err(ManagerError::BadBudget);
        }
        self.started = true;

        let cache = CacheTree::new();
        let mut records: Vec<TrialRecord> = Vec::new();
        let mut best_by_iteration = Vec::new();
        let mut stats = RunStats::default();
        let mut best = PENALTY;
        let mut next_eval_id = 1u64;
        let mut first = 0usize;
        let mut stalled = 0usize;
        let n = self.slots.len();

        for iteration in 1u64.. {
            let used = stats.evaluations as usize;
            if used >= budget.max_evaluations || self.slots.iter().all(|s| s.done) || stalled >= STALL_LIMIT {
                break;
            }
            for slot in self.slots.iter_mut().filter(|s| !s.done) {
                if guarded(|| slot.solver.is_done()).unwrap_or(true) {
                    slot.done = true;
                }
            }
            if self.slots.iter().all(|s| s.done) {
                break;
            }
            stats.iterations = iteration;

            // acquire
            let mut capacity = budget.max_evaluations - used;
            let mut asked: Vec<(SolverId, Vec<Point>)> = Vec::new();
            for offset in 0..n {
                let id = (first + offset) % n;
                let slot = &mut self.slots[id];
                if slot.done || capacity == 0 {
                    continue;
                }
                match guarded(|| slot.solver.ask(capacity)).and_then(|r| r) {
                    Ok(mut points) => {
                        points.truncate(capacity);
                        if let Some(bad) = points.iter().find(|p| !self.space.validate_point(p).is_ok_and(|v| v.is_valid())) {
                            log::warn!("solver {} asked for an invalid point {bad:?}; disabling it", slot.solver.name());
                            slot.done = true;
                            continue;
                        }
                        capacity -= points.len();
                        stats.asked += points.len() as u64;
                        asked.push((id, points));
                    }
                    Err(e) => {
                        log::warn!("solver {} failed in ask: {e}; disabling it", slot.solver.name());
                        slot.done = true;
                    }
                }
            }
            first = (first + 1) % n;

            // resolve against the cache, schedule the rest
            let mut resolved: Vec<(SolverId, CacheKey)> = Vec::new();
            let mut jobs: Vec<Job> = Vec::new();
            let mut scheduled: HashMap<CacheKey, usize> = HashMap::new();
            for (id, points) in asked {
                for p in points {
                    let key = CacheKey::of(&self.space, &p);
                    if cache.lookup_key(&key).is_some() || scheduled.contains_key(&key) {
                        stats.cache_hits += 1;
                    } else {
                        scheduled.insert(key.clone(), jobs.len());
                        jobs.push(Job {
                            point: p,
                            key: key.clone(),
                            solver_id: id,
                            eval_id: next_eval_id,
                        });
                        next_eval_id += 1;
                    }
                    resolved.push((id, key));
                }
            }

            // evaluate
            let fresh = evaluate_batch(objective, &jobs, &cache, budget.max_concurrency, seed, iteration);
            stats.evaluations += fresh.len() as u64;
            stalled = if fresh.is_empty() { stalled + 1 } else { 0 };
            for r in &fresh {
                if r.is_ok() && r.objective < best {
                    best = r.objective;
                }
            }
            log::info!("iteration {iteration}: {} new evaluations, best {best:e}", fresh.len());
            records.extend(fresh);
            best_by_iteration.push((iteration, best));

            // return
            let mut batch: BTreeMap<u64, (SolverId, TrialRecord)> = BTreeMap::new();
            for (id, key) in &resolved {
                let rec = cache.lookup_key(key).expect("resolved point is cached");
                batch.entry(rec.eval_id).or_insert((*id, rec));
            }
            let mut own: Vec<Vec<u64>> = vec![Vec::new(); n];
            for (id, key) in &resolved {
                let rec = cache.lookup_key(key).expect("resolved point is cached");
                own[*id].push(rec.eval_id);
            }
            for (id, slot) in self.slots.iter_mut().enumerate() {
                if slot.done {
                    continue;
                }
                let tell: Vec<TrialRecord> = if slot.share_in {
                    batch.values().map(|(_, r)| r.clone()).collect()
                } else {
                    let mut ids = own[id].clone();
                    ids.sort_unstable();
                    ids.dedup();
                    ids.iter().map(|e| batch[e].1.clone()).collect()
                };
                if let Err(e) = guarded(|| slot.solver.tell(&tell)).and_then(|r| r) {
                    log::warn!("solver {} failed in tell: {e}; disabling it", slot.solver.name());
                    slot.done = true;
                }
            }
        }

        Ok(TuningHistory {
            records,
            best_by_iteration,
            solver_names: self.slots.iter().map(|s| s.solver.name().to_owned()).collect(),
            stats,
        })
    }
}

/// Runs a solver call, converting a panic into `SolverError`.
fn guarded<T>(f: impl FnOnce() -> T) -> Result<T, SolverError> {
    catch_unwind(AssertUnwindSafe(f)).map_err(|panic| SolverError(panic_message(&panic)))
}

fn panic_message(panic: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        (*s).to_owned()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_owned()
    }
}

fn evaluate_one(objective: &dyn Objective, job: &Job, seed: u64, iteration: u64) -> TrialRecord {
    let ctx = EvalContext {
        run_seed: seed,
        eval_id: job.eval_id,
    };
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| objective.evaluate(&job.point, &ctx)))
        .unwrap_or_else(|_| Outcome::Fail("panic".into()));
    let wall_time_ms = start.elapsed().as_millis() as u64;
    let (objective, status) = outcome.into_parts();
    TrialRecord {
        point: job.point.clone(),
        objective,
        status,
        wall_time_ms,
        solver_id: job.solver_id,
        iteration,
        eval_id: job.eval_id,
    }
}

/// Evaluates `jobs` on at most `workers` threads. Results come back sorted by
/// `eval_id` whatever the completion order.
fn evaluate_batch(
    objective: &dyn Objective,
    jobs: &[Job],
    cache: &CacheTree,
    workers: usize,
    seed: u64,
    iteration: u64,
) -> Vec<TrialRecord> {
    let results: Mutex<Vec<TrialRecord>> = Mutex::new(Vec::with_capacity(jobs.len()));
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(job) = jobs.get(i) else { break };
        let rec = evaluate_one(objective, job, seed, iteration);
        cache.insert_key(job.key.clone(), rec.clone());
        results.lock().unwrap().push(rec);
    };
    let threads = workers.min(jobs.len());
    if threads <= 1 {
        work();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(work);
            }
        });
    }
    let mut out = results.into_inner().unwrap();
    out.sort_by_key(|r| r.eval_id);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSummary {
    pub solver_id: SolverId,
    pub name: String,
    pub evaluations: usize,
    pub best_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub best_point: Option<BTreeMap<String, crate::domain::Value>>,
    pub best_objective: Option<f64>,
    pub best_eval_id: Option<u64>,
    pub total: usize,
    pub ok: usize,
    pub failed: usize,
    pub per_solver: Vec<SolverSummary>,
    pub stats: RunStats,
}

impl TuningHistory {
    /// Best successful record; ties go to the earliest evaluation.
    pub fn best(&self) -> Option<&TrialRecord> {
        self.records
            .iter()
            .filter(|r| r.is_ok())
            .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.eval_id.cmp(&b.eval_id)))
    }

    pub fn best_objective(&self) -> Option<f64> {
        self.best().map(|r| r.objective)
    }

    /// `(eval_id, best ok objective so far)` for every record.
    pub fn convergence(&self) -> Vec<(u64, f64)> {
        let mut best = PENALTY;
        self.records
            .iter()
            .map(|r| {
                if r.is_ok() && r.objective < best {
                    best = r.objective;
                }
                (r.eval_id, best)
            })
            .collect()
    }
}

pub fn report(space: &SearchSpace, history: &TuningHistory) -> Result<Summary, ManagerError> {
    if history.records.is_empty() {
        return Err(ManagerError::EmptyHistory);
    }
    let best = history.best();
    let ok = history.records.iter().filter(|r| r.is_ok()).count();
    let per_solver = history
        .solver_names
        .iter()
        .enumerate()
        .map(|(id, name)| {
            let mine: Vec<&TrialRecord> = history.records.iter().filter(|r| r.solver_id == id).collect();
            SolverSummary {
                solver_id: id,
                name: name.clone(),
                evaluations: mine.len(),
                best_objective: mine
                    .iter()
                    .filter(|r| r.is_ok())
                    .map(|r| r.objective)
                    .min_by(|a, b| a.total_cmp(b)),
            }
        })
        .collect();
    Ok(Summary {
        best_point: best.map(|r| {
            space
                .variables()
                .iter()
                .zip(&r.point.values)
                .map(|(v, x)| (v.name.clone(), x.clone()))
                .collect()
        }),
        best_objective: best.map(|r| r.objective),
        best_eval_id: best.map(|r| r.eval_id),
        total: history.records.len(),
        ok,
        failed: history.records.len() - ok,
        per_solver,
        stats: history.stats.clone(),
    })
}

fn status_field(s: &Status) -> String {
    match s {
        Status::Ok => "ok".into(),
        Status::Fail(reason) => format!("fail:{reason}"),
    }
}

/// One row per record: eval_id, iteration, solver_id, one column per
/// variable, objective, status and, when `with_timing` is set,
/// wall_time_ms. Without timing the output depends only on the config and
/// seed.
pub fn history_csv(space: &SearchSpace, history: &TuningHistory, with_timing: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["eval_id".to_owned(), "iteration".into(), "solver_id".into()];
    header.extend(space.variables().iter().map(|v| v.name.clone()));
    header.extend(["objective".into(), "status".into()]);
    if with_timing {
        header.push("wall_time_ms".into());
    }
    w.write_record(&header).expect("in-memory write");
    for r in &history.records {
        let mut row = vec![r.eval_id.to_string(), r.iteration.to_string(), r.solver_id.to_string()];
        row.extend(r.point.values.iter().map(|v| v.to_string()));
        row.push(format::float(r.objective));
        row.push(status_field(&r.status));
        if with_timing {
            row.push(r.wall_time_ms.to_string());
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// `eval_id,wall_time_ms` for every record.
pub fn timings_csv(history: &TuningHistory) -> String {
    let mut out = String::from("eval_id,wall_time_ms\n");
    for r in &history.records {
        out.push_str(&format!("{},{}\n", r.eval_id, r.wall_time_ms));
    }
    out
}

pub fn convergence_csv(history: &TuningHistory) -> String {
    let mut out = String::from("eval_id,best_so_far\n");
    for (id, best) in history.convergence() {
        out.push_str(&format!("{id},{}\n", format::float(best)));
    }
    out
}
