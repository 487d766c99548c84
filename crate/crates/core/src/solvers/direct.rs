//! DIRECT over the unit cube, optionally handing small rectangles to
//! Nelder-Mead.
//!
//! Every rectangle is a product of ternary cells: on channel `i` it covers
//! `[index_i, index_i + 1] / 3^level_i`. Geometry is therefore exact, and the
//! floating-point centers are derived from integers only when needed.
use super::neldermead::NelderMead;
use super::PendingBatch;
use crate::domain::{Point, SearchSpace};
use crate::manager::{Solver, SolverError};
use crate::trial::TrialRecord;
use serde::{Deserialize, Serialize};

/// Deepest level a side can be split to; `3^-30` is near `f64` resolution.
pub const MAX_LEVEL: u32 = 30;
/// Refinements whose simplex shrinks below this size are retired.
pub const NM_RETIRE_SIZE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub enum RectState {
    Active,
    Refining(Box<NelderMead>),
    Retired,
}

#[derive(Debug, Clone)]
pub struct HyperRectangle {
    pub level: Vec<u32>,
    pub index: Vec<u64>,
    pub f_center: f64,
    pub best_value: f64,
    pub state: RectState,
}

impl HyperRectangle {
    fn root(dim: usize) -> Self {
        Self {
            level: vec![0; dim],
            index: vec![0; dim],
            f_center: f64::NAN,
            best_value: f64::NAN,
            state: RectState::Active,
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.level
            .iter()
            .zip(&self.index)
            .map(|(&l, &i)| (2 * i + 1) as f64 / (2.0 * 3f64.powi(l as i32)))
            .collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.level.iter().map(|&l| 0.5 / 3f64.powi(l as i32)).collect()
    }

    /// Euclidean norm of the half widths, summed in a canonical order so
    /// that rectangles of the same shape compare exactly equal.
    pub fn diameter(&self) -> f64 {
        let mut levels = self.level.clone();
        levels.sort_unstable();
        levels
            .iter()
            .map(|&l| {
                let h = 0.5 / 3f64.powi(l as i32);
                h * h
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Split channel: the longest side, lowest channel on ties.
    pub fn split_channel(&self) -> usize {
        let min = *self.level.iter().min().expect("non-empty");
        self.level.iter().position(|&l| l == min).unwrap()
    }

    pub fn is_active(&self) -> bool {
        matches!(self.state, RectState::Active)
    }

    /// Value used for Pareto selection.
    pub fn representative(&self) -> f64 {
        match self.state {
            RectState::Refining(_) => self.best_value,
            _ => self.f_center,
        }
    }
}

/// Splits `rect` in three along its split channel. `rect` becomes the middle
/// third and keeps its center value; the outer thirds are returned.
pub fn trisect(rect: &mut HyperRectangle) -> [HyperRectangle; 2] {
    let c = rect.split_channel();
    rect.level[c] += 1;
    rect.index[c] *= 3;
    let low = HyperRectangle {
        level: rect.level.clone(),
        index: rect.index.clone(),
        f_center: f64::NAN,
        best_value: f64::NAN,
        state: RectState::Active,
    };
    let mut high = low.clone();
    high.index[c] += 2;
    rect.index[c] += 1;
    [low, high]
}

/// Indices of the rectangles nondominated under (maximize diameter,
/// minimize value), ascending. Of several rectangles equal in both, only
/// the first is kept.
pub fn potentially_optimal(rects: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rects.len()).collect();
    order.sort_by(|&a, &b| {
        rects[b].0
            .total_cmp(&rects[a].0)
            .then(rects[a].1.total_cmp(&rects[b].1))
            .then(a.cmp(&b))
    });
    let mut out = Vec::new();
    let mut best_larger = f64::INFINITY;
    let mut k = 0;
    while k < order.len() {
        let d = rects[order[k]].0;
        let head = order[k];
        if rects[head].1 < best_larger {
            out.push(head);
            best_larger = rects[head].1;
        }
        while k < order.len() && rects[order[k]].0 == d {
            k += 1;
        }
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    Center(usize),
    Refine(usize),
}

/// The DIRECT state machine, driven by [`request`](Direct::request) and
/// [`receive`](Direct::receive) like [`NelderMead`].
#[derive(Debug, Clone)]
pub struct Direct {
    dim: usize,
    nm_channels: Vec<usize>,
    theta: f64,
    rects: Vec<HyperRectangle>,
    targets: Vec<Target>,
    started: bool,
    finished: bool,
    best: Option<(Vec<f64>, f64)>,
}

impl Direct {
    /// `theta = 0` gives plain DIRECT. Refinement moves only `nm_channels`.
    pub fn new(dim: usize, nm_channels: Vec<usize>, theta: f64) -> Self {
        Self {
            dim,
            nm_channels,
            theta,
            rects: vec![HyperRectangle::root(dim)],
            targets: Vec::new(),
            started: false,
            finished: false,
            best: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rects(&self) -> &[HyperRectangle] {
        &self.rects
    }

    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.best.as_ref().map(|(x, v)| (x.as_slice(), *v))
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    fn select(&self) -> Vec<usize> {
        let live: Vec<usize> = (0..self.rects.len())
            .filter(|&i| !matches!(self.rects[i].state, RectState::Retired))
            .collect();
        let pairs: Vec<(f64, f64)> = live
            .iter()
            .map(|&i| (self.rects[i].diameter(), self.rects[i].representative()))
            .collect();
        let chosen: Vec<usize> = potentially_optimal(&pairs)
            .into_iter()
            .map(|k| live[k])
            .filter(|&i| self.rects[i].is_active())
            .collect();
        if !chosen.is_empty() {
            return chosen;
        }
        // refining rectangles dominate the front; split the best active ones
        let active: Vec<usize> = live.into_iter().filter(|&i| self.rects[i].is_active()).collect();
        let pairs: Vec<(f64, f64)> = active
            .iter()
            .map(|&i| (self.rects[i].diameter(), self.rects[i].f_center))
            .collect();
        potentially_optimal(&pairs).into_iter().map(|k| active[k]).collect()
    }

    fn refine_point(&self, rect: usize, x: &[f64]) -> Vec<f64> {
        let mut u = self.rects[rect].center();
        for (&c, &v) in self.nm_channels.iter().zip(x) {
            u[c] = v;
        }
        u
    }

    /// Unit-cube points to evaluate next, repeated until the matching
    /// [`receive`](Self::receive). Empty once nothing can be split or refined
    /// any further.
    pub fn request(&mut self) -> Vec<Vec<f64>> {
        if self.targets.is_empty() {
            self.plan();
        }
        let mut out = Vec::with_capacity(self.targets.len());
        let mut k = 0;
        while k < self.targets.len() {
            match self.targets[k] {
                Target::Center(i) => {
                    out.push(self.rects[i].center());
                    k += 1;
                }
                Target::Refine(i) => {
                    let RectState::Refining(nm) = &mut self.rects[i].state else {
                        unreachable!("refine target on a non-refining rectangle")
                    };
                    let pts = nm.request();
                    k += pts.len();
                    out.extend(pts.iter().map(|x| self.refine_point(i, x)));
                }
            }
        }
        out
    }

    fn plan(&mut self) {
        if self.finished {
            return;
        }
        if !self.started {
            self.started = true;
            self.targets.push(Target::Center(0));
            return;
        }
        loop {
            for i in self.select() {
                let rect = &mut self.rects[i];
                if rect.diameter() < self.theta && !self.nm_channels.is_empty() {
                    let c = rect.center();
                    let x0: Vec<f64> = self.nm_channels.iter().map(|&k| c[k]).collect();
                    let nm = NelderMead::new(&x0, Some(rect.f_center), rect.diameter());
                    rect.best_value = rect.f_center;
                    rect.state = RectState::Refining(Box::new(nm));
                } else if rect.level[rect.split_channel()] >= MAX_LEVEL {
                    rect.state = RectState::Retired;
                } else {
                    for child in trisect(rect) {
                        self.rects.push(child);
                        self.targets.push(Target::Center(self.rects.len() - 1));
                    }
                }
            }
            for i in 0..self.rects.len() {
                if let RectState::Refining(nm) = &mut self.rects[i].state {
                    let s = nm.simplex();
                    if s.values.iter().all(|v| !v.is_nan()) && s.size() < NM_RETIRE_SIZE {
                        self.rects[i].state = RectState::Retired;
                        continue;
                    }
                    let n = nm.request().len();
                    self.targets.extend(std::iter::repeat_n(Target::Refine(i), n));
                }
            }
            if !self.targets.is_empty() {
                return;
            }
            if self.rects.iter().all(|r| matches!(r.state, RectState::Retired)) {
                self.finished = true;
                return;
            }
        }
    }

    /// Values for the points of the last [`request`](Self::request).
    pub fn receive(&mut self, values: &[f64]) {
        let targets = std::mem::take(&mut self.targets);
        let mut k = 0;
        while k < targets.len() {
            match targets[k] {
                Target::Center(i) => {
                    let v = values[k];
                    let rect = &mut self.rects[i];
                    rect.f_center = v;
                    rect.best_value = v;
                    let c = rect.center();
                    self.offer(c, v);
                    k += 1;
                }
                Target::Refine(i) => {
                    let n = targets[k..].iter().take_while(|&&t| t == Target::Refine(i)).count();
                    let RectState::Refining(nm) = &mut self.rects[i].state else {
                        unreachable!("refine target on a non-refining rectangle")
                    };
                    nm.receive(&values[k..k + n]);
                    let (x, v) = nm.best().map(|(x, v)| (x.to_vec(), v)).expect("evaluated vertex");
                    let rect = &mut self.rects[i];
                    rect.best_value = rect.f_center.min(v);
                    let u = self.refine_point(i, &x);
                    self.offer(u, v);
                    k += n;
                }
            }
        }
    }

    fn offer(&mut self, x: Vec<f64>, v: f64) {
        if self.best.as_ref().is_none_or(|b| v < b.1) {
            self.best = Some((x, v));
        }
    }
}

/// Minimizes `f` over `[0, 1]^dim` with plain DIRECT, spending at most
/// `max_evals` evaluations.
pub fn minimize(f: impl Fn(&[f64]) -> f64, dim: usize, max_evals: usize) -> (Vec<f64>, f64) {
    let mut d = Direct::new(dim, Vec::new(), 0.0);
    let mut used = 0;
    let mut best = (vec![0.5; dim], f64::INFINITY);
    loop {
        let pts = d.request();
        if pts.is_empty() || used >= max_evals {
            break;
        }
        let mut vals = Vec::with_capacity(pts.len());
        for p in &pts {
            if used == max_evals {
                break;
            }
            let v = f(p);
            used += 1;
            if v < best.1 {
                best = (p.clone(), v);
            }
            vals.push(v);
        }
        if vals.len() < pts.len() {
            break;
        }
        d.receive(&vals);
    }
    best
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectConfig {
    /// Diameter below which a selected rectangle is refined by Nelder-Mead.
    /// Defaults to `0.05 * sqrt(d)`.
    #[serde(default)]
    pub theta: Option<f64>,
}

/// Ask/tell wrapper over [`Direct`]. Integer and categorical channels are
/// snapped only when a point is produced; the rectangle geometry stays
/// continuous.
pub struct DirectSolver {
    space: SearchSpace,
    machine: Direct,
    pending: PendingBatch<()>,
    name: &'static str,
}

impl DirectSolver {
    /// Plain DIRECT, no refinement.
    pub fn pure(space: SearchSpace) -> Self {
        let machine = Direct::new(space.dim(), Vec::new(), 0.0);
        Self {
            space,
            machine,
            pending: PendingBatch::default(),
            name: "direct",
        }
    }

    /// DIRECT with Nelder-Mead refinement of small rectangles.
    pub fn hybrid(space: SearchSpace, config: DirectConfig) -> Self {
        let d = space.dim() as f64;
        let theta = config.theta.unwrap_or(0.05 * d.sqrt());
        let machine = Direct::new(space.dim(), space.continuous_channels(), theta);
        Self {
            space,
            machine,
            pending: PendingBatch::default(),
            name: "direct-nm",
        }
    }

    pub fn machine(&self) -> &Direct {
        &self.machine
    }
}

impl Solver for DirectSolver {
    fn name(&self) -> &str {
        self.name
    }

    fn ask(&mut self, max_points: usize) -> Result<Vec<Point>, SolverError> {
        if self.pending.is_empty() {
            for u in self.machine.request() {
                let p = self.space.point_from_unit(&u);
                self.pending.push(&self.space, p, ());
            }
        }
        Ok(self.pending.chunk(max_points))
    }

    fn tell(&mut self, records: &[TrialRecord]) -> Result<(), SolverError> {
        if self.pending.is_empty() {
            return Ok(());
        }
        self.pending.fill(&self.space, records);
        if self.pending.is_complete() {
            let values: Vec<f64> = self.pending.take().iter().map(|i| i.value.unwrap()).collect();
            self.machine.receive(&values);
        }
        Ok(())
    }

    fn is_done(&self) -> bool {
        self.machine.is_finished()
    }
}
