//! The default search: a Latin hypercube seeds a GA population, and every
//! generation a few selected members also take a compass-search growth step
//! accepted under sufficient decrease.
use super::{ConfigError, PendingBatch};
use crate::cache::CacheKey;
use crate::domain::{Point, SearchSpace, VarKind};
use crate::manager::{Solver, SolverError};
use crate::sampling::{lhs_points, rng_from_seed, SeededRng};
use crate::trial::TrialRecord;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

/// Standard deviation of GA mutation noise, in encoded units.
pub const MUTATION_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridConfig {
    /// Population size `n_p`.
    pub population: usize,
    /// Growth-step centers per generation, `n_c`.
    pub centers: usize,
    /// Initial compass step, in encoded units.
    pub delta_init: f64,
    /// Sufficient-decrease coefficient.
    pub alpha: f64,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub tournament: usize,
    pub elites: usize,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            population: 10,
            centers: 2,
            delta_init: 0.1,
            alpha: 1e-4,
            crossover_prob: 0.8,
            mutation_prob: 0.2,
            tournament: 2,
            elites: 1,
        }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: &str| Err(ConfigError(m.to_owned()));
        if self.population < 2 {
            return err("population must be at least 2");
        }
        if self.centers >= self.population {
            return err("centers must be smaller than population");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return err("alpha must lie in (0, 1)");
        }
        if !(self.delta_init > 0.0) {
            return err("delta_init must be positive");
        }
        if self.elites >= self.population {
            return err("elites must be smaller than population");
        }
        if self.tournament == 0 {
            return err("tournament must be at least 1");
        }
        for (name, p) in [("crossover_prob", self.crossover_prob), ("mutation_prob", self.mutation_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub point: Point,
    pub key: CacheKey,
    pub objective: f64,
    pub delta: f64,
    pub eval_id: u64,
}

impl Member {
    pub fn new(space: &SearchSpace, point: Point, objective: f64, delta: f64, eval_id: u64) -> Self {
        let key = CacheKey::of(space, &point);
        Self {
            point,
            key,
            objective,
            delta,
            eval_id,
        }
    }
}

/// One growth step, as applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthEvent {
    pub f_old: f64,
    pub best_poll: Option<f64>,
    pub delta_old: f64,
    pub delta_new: f64,
    pub alpha: f64,
    pub accepted: bool,
}

impl GrowthEvent {
    /// Whether the event obeys the acceptance and halving rules.
    pub fn is_consistent(&self) -> bool {
        if self.accepted {
            let threshold = self.f_old - self.alpha * self.delta_old * self.delta_old;
            self.best_poll.is_some_and(|f| f < threshold) && self.delta_new == self.delta_old
        } else {
            self.delta_new == self.delta_old / 2.0
        }
    }
}

pub type GrowthLog = Arc<Mutex<Vec<GrowthEvent>>>;

/// Applies the sufficient-decrease rule to `center` given its evaluated
/// polls: move to the best poll keeping the step, or stay and halve it.
pub fn growth_update(center: &Member, polls: &[Member], alpha: f64) -> (Member, GrowthEvent) {
    let best = polls
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.eval_id.cmp(&b.eval_id)));
    let threshold = center.objective - alpha * center.delta * center.delta;
    let accepted = best.is_some_and(|b| b.objective < threshold);
    let next = match best {
        Some(b) if accepted => Member {
            delta: center.delta,
            ..b.clone()
        },
        _ => Member {
            delta: center.delta / 2.0,
            ..center.clone()
        },
    };
    let event = GrowthEvent {
        f_old: center.objective,
        best_poll: best.map(|b| b.objective),
        delta_old: center.delta,
        delta_new: next.delta,
        alpha,
        accepted,
    };
    debug_assert!(event.is_consistent());
    (next, event)
}

/// Compass points `p ± delta e_i` over the numeric channels, clipped to the
/// box and snapped. Points that snap back onto `p` are dropped.
pub fn poll_points(space: &SearchSpace, p: &Point, delta: f64) -> Vec<Point> {
    let base = space.encode_unchecked(p).coords;
    let center = CacheKey::from_coords(&base);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for i in space.numeric_channels() {
        for step in [delta, -delta] {
            let mut c = base.clone();
            c[i] = (c[i] + step).clamp(0.0, 1.0);
            let q = space.decode_coords(&c);
            let key = CacheKey::of(space, &q);
            if key != center && seen.insert(key) {
                out.push(q);
            }
        }
    }
    out
}

/// Distance from each member to its nearest other member (0 for a lone
/// member).
pub fn nearest_neighbor_distances(space: &SearchSpace, members: &[Member]) -> Vec<f64> {
    let enc: Vec<Vec<f64>> = members.iter().map(|m| space.encode_unchecked(&m.point).coords).collect();
    (0..enc.len())
        .map(|i| {
            let d = (0..enc.len())
                .filter(|&j| j != i)
                .map(|j| space.encoded_distance(&enc[i], &enc[j]))
                .fold(f64::INFINITY, f64::min);
            if d.is_finite() {
                d
            } else {
                0.0
            }
        })
        .collect()
}

/// Members of `among` nondominated under (minimize objective, maximize
/// spread), ascending.
pub fn pareto_front(objectives: &[f64], spread: &[f64], among: &[usize]) -> Vec<usize> {
    among
        .iter()
        .copied()
        .filter(|&i| {
            !among.iter().any(|&j| {
                objectives[j] <= objectives[i]
                    && spread[j] >= spread[i]
                    && (objectives[j] < objectives[i] || spread[j] > spread[i])
            })
        })
        .collect()
}

/// The best member (lowest eval id on ties), then uniform draws without
/// replacement from successive Pareto fronts of the whole population.
pub fn choose_centers(objectives: &[f64], eval_ids: &[u64], spread: &[f64], n_c: usize, rng: &mut SeededRng) -> Vec<usize> {
    let n = objectives.len();
    if n_c == 0 || n == 0 {
        return Vec::new();
    }
    let best = (0..n)
        .min_by(|&a, &b| objectives[a].total_cmp(&objectives[b]).then(eval_ids[a].cmp(&eval_ids[b])))
        .unwrap();
    let mut chosen = vec![best];
    let mut remaining: Vec<usize> = (0..n).collect();
    while chosen.len() < n_c && !remaining.is_empty() {
        let front = pareto_front(objectives, spread, &remaining);
        remaining.retain(|i| !front.contains(i));
        let mut open: Vec<usize> = front.into_iter().filter(|i| !chosen.contains(i)).collect();
        open.shuffle(rng);
        let take = (n_c - chosen.len()).min(open.len());
        chosen.extend_from_slice(&open[..take]);
    }
    chosen
}

pub fn select_centers(space: &SearchSpace, population: &[Member], n_c: usize, rng: &mut SeededRng) -> Vec<usize> {
    let objectives: Vec<f64> = population.iter().map(|m| m.objective).collect();
    let eval_ids: Vec<u64> = population.iter().map(|m| m.eval_id).collect();
    let spread = nearest_neighbor_distances(space, population);
    choose_centers(&objectives, &eval_ids, &spread, n_c, rng)
}

fn tournament<'a>(population: &'a [Member], size: usize, rng: &mut SeededRng) -> &'a Member {
    (0..size)
        .map(|_| &population[rng.random_range(0..population.len())])
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.eval_id.cmp(&b.eval_id)))
        .unwrap()
}

/// One generation of children: tournament parents, uniform crossover,
/// per-variable mutation. Produces `population - elites` points.
pub fn ga_step(space: &SearchSpace, population: &[Member], config: &HybridConfig, rng: &mut SeededRng) -> Vec<Point> {
    let noise = Normal::new(0.0, MUTATION_SIGMA).unwrap();
    let count = config.population.saturating_sub(config.elites);
    (0..count)
        .map(|_| {
            let mut child = tournament(population, config.tournament, rng).point.clone();
            let other = &tournament(population, config.tournament, rng).point;
            if rng.random::<f64>() < config.crossover_prob {
                for (c, b) in child.values.iter_mut().zip(&other.values) {
                    if rng.random::<bool>() {
                        *c = b.clone();
                    }
                }
            }
            // untouched variables keep their exact values; mutated ones go
            // through the encoding
            for (i, spec) in space.variables().iter().enumerate() {
                if rng.random::<f64>() >= config.mutation_prob {
                    continue;
                }
                let mut enc = space.encode_unchecked(&child).coords;
                match &spec.kind {
                    VarKind::Categorical { levels } => {
                        let current = enc[i] as usize;
                        let others: Vec<usize> = (0..levels.len()).filter(|&l| l != current).collect();
                        match others.choose(rng) {
                            Some(&l) => enc[i] = l as f64,
                            None => continue,
                        }
                    }
                    _ => enc[i] = (enc[i] + noise.sample(rng)).clamp(0.0, 1.0),
                }
                child.values[i] = space.decode_coords(&enc).values[i].clone();
            }
            child
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tag {
    Initial,
    Child,
    /// Poll around the n-th center of the generation.
    Poll(usize),
}

pub struct HybridSolver {
    space: SearchSpace,
    config: HybridConfig,
    rng: SeededRng,
    population: Vec<Member>,
    centers: Vec<usize>,
    pending: PendingBatch<Tag>,
    foreign: Vec<TrialRecord>,
    log: GrowthLog,
}

impl HybridSolver {
    pub fn new(space: SearchSpace, config: HybridConfig, seed: u64) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            space,
            config,
            rng: rng_from_seed(seed),
            population: Vec::new(),
            centers: Vec::new(),
            pending: PendingBatch::default(),
            foreign: Vec::new(),
            log: GrowthLog::default(),
        })
    }

    pub fn population(&self) -> &[Member] {
        &self.population
    }

    /// Shared handle to the record of every growth step taken.
    pub fn growth_log(&self) -> GrowthLog {
        Arc::clone(&self.log)
    }

    fn plan(&mut self) {
        if self.population.is_empty() {
            for p in lhs_points(&self.space, self.config.population, &mut self.rng) {
                self.pending.push(&self.space, p, Tag::Initial);
            }
            return;
        }
        let children = ga_step(&self.space, &self.population, &self.config, &mut self.rng);
        self.centers = select_centers(&self.space, &self.population, self.config.centers, &mut self.rng);
        for p in children {
            self.pending.push(&self.space, p, Tag::Child);
        }
        for (c, &m) in self.centers.iter().enumerate() {
            for p in poll_points(&self.space, &self.population[m].point, self.population[m].delta) {
                self.pending.push(&self.space, p, Tag::Poll(c));
            }
        }
    }

    fn complete(&mut self) {
        let items = self.pending.take();
        let delta = self.config.delta_init;
        let member = |point: Point, value: f64, eval_id: u64| Member::new(&self.space, point, value, delta, eval_id);
        if self.population.is_empty() {
            self.population = items
                .into_iter()
                .map(|i| member(i.point, i.value.unwrap(), i.eval_id))
                .collect();
            return;
        }

        let mut children = Vec::new();
        let mut polls: Vec<Vec<Member>> = vec![Vec::new(); self.centers.len()];
        for i in items {
            let m = member(i.point, i.value.unwrap(), i.eval_id);
            match i.tag {
                Tag::Child => children.push(m),
                Tag::Poll(c) => polls[c].push(m),
                Tag::Initial => unreachable!("initial items only precede the population"),
            }
        }

        let mut keep = BTreeSet::new();
        let mut by_rank: Vec<usize> = (0..self.population.len()).collect();
        by_rank.sort_by(|&a, &b| {
            let (ma, mb) = (&self.population[a], &self.population[b]);
            ma.objective.total_cmp(&mb.objective).then(ma.eval_id.cmp(&mb.eval_id))
        });
        keep.extend(by_rank.iter().take(self.config.elites).copied());
        for (c, &m) in self.centers.iter().enumerate() {
            let (next, event) = growth_update(&self.population[m], &polls[c], self.config.alpha);
            self.log.lock().expect("growth log").push(event);
            self.population[m] = next;
            keep.insert(m);
        }

        let mut next: Vec<Member> = keep.iter().map(|&i| self.population[i].clone()).collect();
        children.sort_by(|a, b| a.objective.total_cmp(&b.objective));
        let open = self.config.population.saturating_sub(next.len());
        next.extend(children.into_iter().take(open));
        self.population = next;
        self.centers.clear();
    }

    /// A shared record better than the worst member replaces it.
    fn adopt_foreign(&mut self) {
        let mut records = std::mem::take(&mut self.foreign);
        records.sort_by_key(|r| r.eval_id);
        for r in records {
            if !r.is_ok() {
                continue;
            }
            let key = CacheKey::of(&self.space, &r.point);
            if self.population.iter().any(|m| m.key == key) {
                continue;
            }
            let worst = (0..self.population.len()).max_by(|&a, &b| {
                let (ma, mb) = (&self.population[a], &self.population[b]);
                ma.objective.total_cmp(&mb.objective).then(ma.eval_id.cmp(&mb.eval_id))
            });
            if let Some(w) = worst {
                if r.objective < self.population[w].objective {
                    self.population[w] = Member {
                        point: r.point.clone(),
                        key,
                        objective: r.objective,
                        delta: self.config.delta_init,
                        eval_id: r.eval_id,
                    };
                }
            }
        }
    }
}

impl Solver for HybridSolver {
    fn name(&self) -> &str {
        "hybrid"
    }

    fn ask(&mut self, max_points: usize) -> Result<Vec<Point>, SolverError> {
        if self.pending.is_empty() {
            self.plan();
        }
        Ok(self.pending.chunk(max_points))
    }

    fn tell(&mut self, records: &[TrialRecord]) -> Result<(), SolverError> {
        let foreign = self.pending.fill(&self.space, records);
        self.foreign.extend(foreign.into_iter().cloned());
        if !self.pending.is_empty() && self.pending.is_complete() {
            self.complete();
        }
        if self.pending.is_empty() && !self.population.is_empty() {
            self.adopt_foreign();
        }
        Ok(())
    }
}
