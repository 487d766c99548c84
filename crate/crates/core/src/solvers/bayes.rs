//! Bayesian optimization: a GP surrogate seeded by a Latin hypercube,
//! proposing batches that minimize the lower confidence bound
//! `mu - kappa * sigma`.
use super::gp::GpModel;
use super::neldermead::minimize;
use super::{ConfigError, PendingBatch};
use crate::cache::CacheKey;
use crate::domain::{Point, SearchSpace};
use crate::manager::{Solver, SolverError};
use crate::sampling::{lhs_points, random_points, rng_from_seed, SeededRng};
use crate::trial::TrialRecord;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Raw acquisition candidates drawn per proposal.
pub const CANDIDATES: usize = 256;
/// Nelder-Mead iterations spent refining each restart.
pub const REFINE_ITERS: usize = 50;
const REFINE_EDGE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesConfig {
    /// Size of the initial Latin hypercube.
    pub init: usize,
    /// Points proposed per ask after initialization.
    pub batch: usize,
    /// Exploration weight on the posterior standard deviation.
    pub kappa: f64,
    /// Most training points the surrogate keeps.
    pub cap: usize,
    /// Candidates refined by Nelder-Mead per proposal.
    pub restarts: usize,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self {
            init: 10,
            batch: 5,
            kappa: 2.0,
            cap: 300,
            restarts: 5,
        }
    }
}

impl BayesConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.init < 2 {
            return Err(ConfigError("init must be at least 2".into()));
        }
        if self.cap < self.init {
            return Err(ConfigError("cap must be at least init".into()));
        }
        if self.batch == 0 {
            return Err(ConfigError("batch must be at least 1".into()));
        }
        if !(self.kappa >= 0.0) {
            return Err(ConfigError("kappa must be non-negative".into()));
        }
        Ok(())
    }
}

/// Successful records to train on. Above `cap`, the best `ceil(cap / 2)` by
/// objective are kept and the most recent fill the rest.
pub fn training_set(records: &[TrialRecord], cap: usize) -> Vec<&TrialRecord> {
    let ok: Vec<&TrialRecord> = records.iter().filter(|r| r.is_ok()).collect();
    if ok.len() <= cap {
        return ok;
    }
    let mut by_value = ok.clone();
    by_value.sort_by(|a, b| a.objective.total_cmp(&b.objective).then(a.eval_id.cmp(&b.eval_id)));
    let mut keep: BTreeSet<u64> = by_value.iter().take(cap.div_ceil(2)).map(|r| r.eval_id).collect();
    let mut recent = ok.clone();
    recent.sort_by_key(|r| std::cmp::Reverse(r.eval_id));
    for r in recent {
        if keep.len() == cap {
            break;
        }
        keep.insert(r.eval_id);
    }
    ok.into_iter().filter(|r| keep.contains(&r.eval_id)).collect()
}

pub fn fit(space: &SearchSpace, records: &[TrialRecord], cap: usize) -> Option<GpModel> {
    let train = training_set(records, cap);
    if train.len() < 2 {
        return None;
    }
    let inputs = train.iter().map(|r| space.encode_unchecked(&r.point).coords).collect();
    let outputs: Vec<f64> = train.iter().map(|r| r.objective).collect();
    GpModel::fit(space, inputs, &outputs).ok()
}

pub fn lcb(model: &GpModel, space: &SearchSpace, p: &Point, kappa: f64) -> f64 {
    let (mean, var) = model.posterior(&space.encode_unchecked(p).coords);
    mean - kappa * var.sqrt()
}

/// Up to `m` distinct points outside `seen`, lowest acquisition first, each
/// with its acquisition value. Candidates come from a Latin hypercube; the
/// best `restarts` are refined by Nelder-Mead over the continuous channels.
pub fn propose(
    model: &GpModel,
    space: &SearchSpace,
    m: usize,
    kappa: f64,
    restarts: usize,
    seen: &BTreeSet<CacheKey>,
    rng: &mut SeededRng,
) -> Vec<(Point, f64)> {
    let score = |p: &Point| lcb(model, space, p, kappa);
    let mut pool: Vec<(Point, f64)> = lhs_points(space, CANDIDATES, rng)
        .into_iter()
        .map(|p| {
            let s = score(&p);
            (p, s)
        })
        .collect();
    pool.sort_by(|a, b| a.1.total_cmp(&b.1));

    let channels = space.continuous_channels();
    if !channels.is_empty() {
        let mut refined = Vec::new();
        for (start, _) in pool.iter().take(restarts) {
            let base = space.unit_from_point(start);
            let x0: Vec<f64> = channels.iter().map(|&c| base[c]).collect();
            let to_point = |x: &[f64]| super::neldermead::to_point(space, &base, &channels, x);
            let (x, v) = minimize(|x| score(&to_point(x)), &x0, REFINE_EDGE, REFINE_ITERS);
            refined.push((to_point(&x), v));
        }
        pool.extend(refined);
        pool.sort_by(|a, b| a.1.total_cmp(&b.1));
    }

    let mut taken = BTreeSet::new();
    let mut out = Vec::new();
    for (p, v) in pool {
        if out.len() == m {
            break;
        }
        let key = CacheKey::of(space, &p);
        if !seen.contains(&key) && taken.insert(key) {
            out.push((p, v));
        }
    }
    out
}

pub struct BayesSolver {
    space: SearchSpace,
    config: BayesConfig,
    rng: SeededRng,
    records: BTreeMap<CacheKey, TrialRecord>,
    seen: BTreeSet<CacheKey>,
    pending: PendingBatch<()>,
    started: bool,
    fallbacks: usize,
}

impl BayesSolver {
    pub fn new(space: SearchSpace, config: BayesConfig, seed: u64) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            space,
            config,
            rng: rng_from_seed(seed),
            records: BTreeMap::new(),
            seen: BTreeSet::new(),
            pending: PendingBatch::default(),
            started: false,
            fallbacks: 0,
        })
    }

    /// Records the surrogate would train on now.
    pub fn training_size(&self) -> usize {
        let all: Vec<TrialRecord> = self.records.values().cloned().collect();
        training_set(&all, self.config.cap).len()
    }

    /// Proposals made without a surrogate so far.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    fn plan(&mut self) {
        let points = if !self.started {
            self.started = true;
            lhs_points(&self.space, self.config.init, &mut self.rng)
        } else {
            let mut all: Vec<TrialRecord> = self.records.values().cloned().collect();
            all.sort_by_key(|r| r.eval_id);
            let proposed = match fit(&self.space, &all, self.config.cap) {
                Some(model) => propose(
                    &model,
                    &self.space,
                    self.config.batch,
                    self.config.kappa,
                    self.config.restarts,
                    &self.seen,
                    &mut self.rng,
                ),
                None => Vec::new(),
            };
            if proposed.is_empty() {
                self.fallbacks += 1;
                log::debug!("bayes: no surrogate proposal, sampling instead");
                let mut pts = lhs_points(&self.space, self.config.batch, &mut self.rng);
                pts.retain(|p| !self.seen.contains(&CacheKey::of(&self.space, p)));
                if pts.is_empty() {
                    pts = random_points(&self.space, self.config.batch, &mut self.rng);
                }
                pts
            } else {
                proposed.into_iter().map(|(p, _)| p).collect()
            }
        };
        for p in points {
            self.seen.insert(CacheKey::of(&self.space, &p));
            self.pending.push(&self.space, p, ());
        }
    }
}

impl Solver for BayesSolver {
    fn name(&self) -> &str {
        "bayes"
    }

    fn ask(&mut self, max_points: usize) -> Result<Vec<Point>, SolverError> {
        if self.pending.is_empty() {
            self.plan();
        }
        Ok(self.pending.chunk(max_points))
    }

    fn tell(&mut self, records: &[TrialRecord]) -> Result<(), SolverError> {
        for r in records {
            let key = CacheKey::of(&self.space, &r.point);
            self.seen.insert(key.clone());
            self.records.entry(key).or_insert_with(|| r.clone());
        }
        self.pending.fill(&self.space, records);
        if !self.pending.is_empty() && self.pending.is_complete() {
            self.pending.take();
        }
        Ok(())
    }
}
