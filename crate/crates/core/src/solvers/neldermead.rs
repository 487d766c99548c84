//! Nelder-Mead simplex search on the unit cube.
//!
//! [`NelderMead`] is a resumable state machine: [`request`](NelderMead::request)
//! yields the points the current phase needs and
//! [`receive`](NelderMead::receive) consumes their values. The same machine
//! backs the ask/tell solver, the refinement stage of the DIRECT hybrid, and
//! the synchronous [`minimize`] used for acquisition refinement.
use super::PendingBatch;
use crate::domain::{Point, SearchSpace};
use crate::manager::{Solver, SolverError};
use crate::trial::TrialRecord;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub const REFLECTION: f64 = 1.0;
pub const EXPANSION: f64 = 2.0;
pub const CONTRACTION: f64 = 0.5;
pub const SHRINK: f64 = 0.5;
/// Simplices flatter than this (see [`Simplex::is_degenerate`]) are rebuilt
/// around their best vertex.
pub const DEGENERATE_VOLUME: f64 = 1e-12;
pub const REINIT_EDGE: f64 = 0.05;

/// Vertices sorted ascending by value once every vertex is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    pub vertices: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl Simplex {
    pub fn dim(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    fn sort(&mut self) {
        let mut idx: Vec<usize> = (0..self.vertices.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(a.cmp(&b)));
        self.vertices = idx.iter().map(|&i| self.vertices[i].clone()).collect();
        self.values = idx.iter().map(|&i| self.values[i]).collect();
    }

    pub fn volume(&self) -> f64 {
        let d = self.dim();
        if d == 0 {
            return 0.0;
        }
        let v0 = &self.vertices[0];
        let m = DMatrix::from_fn(d, d, |r, c| self.vertices[r + 1][c] - v0[c]);
        let fact: f64 = (1..=d).map(|k| k as f64).product();
        m.determinant().abs() / fact
    }

    /// Volume relative to the cube on the largest best-vertex edge, so that
    /// the test measures flatness rather than size.
    pub fn is_degenerate(&self) -> bool {
        let d = self.dim() as i32;
        let scale = self.size().powi(d);
        scale == 0.0 || self.volume() < DEGENERATE_VOLUME * scale
    }

    /// Largest vertex distance from the best vertex.
    pub fn size(&self) -> f64 {
        let v0 = &self.vertices[0];
        self.vertices[1..]
            .iter()
            .map(|v| v.iter().zip(v0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    fn centroid(&self) -> Vec<f64> {
        let d = self.dim();
        let mut c = vec![0.0; d];
        for v in &self.vertices[..d] {
            for (ci, vi) in c.iter_mut().zip(v) {
                *ci += vi / d as f64;
            }
        }
        c
    }

    fn has_vertex(&self, x: &[f64]) -> bool {
        self.vertices.iter().any(|v| same(v, x))
    }
}

fn same(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-15)
}

fn clip(x: Vec<f64>) -> Vec<f64> {
    x.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

/// `c + t * (x - c)`, clipped to the unit cube.
fn along(c: &[f64], x: &[f64], t: f64) -> Vec<f64> {
    clip(c.iter().zip(x).map(|(ci, xi)| ci + t * (xi - ci)).collect())
}

/// Vertices `x0` and `x0 + edge * e_i`, stepping backwards where the forward
/// step would leave the cube.
pub fn initial_vertices(x0: &[f64], edge: f64) -> Vec<Vec<f64>> {
    let mut out = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] = if x0[i] + edge <= 1.0 { x0[i] + edge } else { (x0[i] - edge).max(0.0) };
        out.push(v);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    Ready,
    Init { missing: Vec<usize> },
    Reflect { xr: Vec<f64> },
    Expand { xr: Vec<f64>, fr: f64, xe: Vec<f64> },
    Outside { xr: Vec<f64>, fr: f64, xc: Vec<f64> },
    Inside { xcc: Vec<f64> },
    Shrink { points: Vec<Vec<f64>> },
}

#[derive(Debug, Clone)]
pub struct NelderMead {
    simplex: Simplex,
    phase: Phase,
    iterations: usize,
    evaluations: usize,
}

impl NelderMead {
    /// Starts from `x0` (with its value, if already known) and axis steps of
    /// length `edge`.
    pub fn new(x0: &[f64], f0: Option<f64>, edge: f64) -> Self {
        let vertices = initial_vertices(&clip(x0.to_vec()), edge);
        let mut values = vec![f64::NAN; vertices.len()];
        let mut missing: Vec<usize> = (0..vertices.len()).collect();
        if let Some(f0) = f0 {
            values[0] = f0;
            missing.remove(0);
        }
        Self {
            simplex: Simplex { vertices, values },
            phase: Phase::Init { missing },
            iterations: 0,
            evaluations: 0,
        }
    }

    /// Starts from an already-evaluated simplex.
    pub fn from_simplex(mut simplex: Simplex) -> Self {
        simplex.sort();
        Self {
            simplex,
            phase: Phase::Ready,
            iterations: 0,
            evaluations: 0,
        }
    }

    pub fn simplex(&self) -> &Simplex {
        &self.simplex
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// Best evaluated vertex.
    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.simplex
            .vertices
            .iter()
            .zip(&self.simplex.values)
            .filter(|(_, v)| !v.is_nan())
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(x, v)| (x.as_slice(), *v))
    }

    /// Points the current phase needs evaluated. Never empty.
    pub fn request(&mut self) -> Vec<Vec<f64>> {
        if self.phase == Phase::Ready {
            self.begin_iteration();
        }
        match &self.phase {
            Phase::Ready => unreachable!("begin_iteration always leaves Ready"),
            Phase::Init { missing } => missing.iter().map(|&i| self.simplex.vertices[i].clone()).collect(),
            Phase::Reflect { xr } => vec![xr.clone()],
            Phase::Expand { xe, .. } => vec![xe.clone()],
            Phase::Outside { xc, .. } => vec![xc.clone()],
            Phase::Inside { xcc } => vec![xcc.clone()],
            Phase::Shrink { points } => points.clone(),
        }
    }

    /// Values for the points of the last [`request`](Self::request), in order.
    pub fn receive(&mut self, values: &[f64]) {
        self.evaluations += values.len();
        let phase = std::mem::replace(&mut self.phase, Phase::Ready);
        let s = &self.simplex;
        let d = s.dim();
        match phase {
            Phase::Ready => {}
            Phase::Init { missing } => {
                for (&i, &v) in missing.iter().zip(values) {
                    self.simplex.values[i] = v;
                }
                self.simplex.sort();
            }
            Phase::Reflect { xr } => {
                let fr = values[0];
                let (f_best, f_second, f_worst) = (s.values[0], s.values[d - 1], s.values[d]);
                let c = s.centroid();
                if fr < f_best {
                    let xe = along(&c, &xr, EXPANSION / REFLECTION);
                    if same(&xe, &xr) || s.has_vertex(&xe) {
                        self.accept(xr, fr);
                    } else {
                        self.phase = Phase::Expand { xr, fr, xe };
                    }
                } else if fr < f_second {
                    self.accept(xr, fr);
                } else if fr < f_worst {
                    let xc = along(&c, &xr, CONTRACTION);
                    if s.has_vertex(&xc) {
                        self.begin_shrink();
                    } else {
                        self.phase = Phase::Outside { xr, fr, xc };
                    }
                } else {
                    self.begin_inside();
                }
            }
            Phase::Expand { xr, fr, xe } => {
                let fe = values[0];
                if fe < fr {
                    self.accept(xe, fe);
                } else {
                    self.accept(xr, fr);
                }
            }
            Phase::Outside { fr, xc, .. } => {
                let fc = values[0];
                if fc <= fr {
                    self.accept(xc, fc);
                } else {
                    self.begin_shrink();
                }
            }
            Phase::Inside { xcc } => {
                let fcc = values[0];
                if fcc < s.values[d] {
                    self.accept(xcc, fcc);
                } else {
                    self.begin_shrink();
                }
            }
            Phase::Shrink { points } => {
                for (i, (p, &v)) in points.into_iter().zip(values).enumerate() {
                    self.simplex.vertices[i + 1] = p;
                    self.simplex.values[i + 1] = v;
                }
                self.finish_iteration();
            }
        }
    }

    fn begin_iteration(&mut self) {
        if self.simplex.is_degenerate() {
            let best = self.simplex.vertices[0].clone();
            let f_best = self.simplex.values[0];
            *self = Self {
                iterations: self.iterations,
                evaluations: self.evaluations,
                ..Self::new(&best, Some(f_best), REINIT_EDGE)
            };
            return;
        }
        let s = &self.simplex;
        let d = s.dim();
        let c = s.centroid();
        let xr = along(&c, &s.vertices[d], -REFLECTION);
        if s.has_vertex(&xr) {
            // clipping folded the reflection back onto the simplex
            self.begin_inside();
        } else {
            self.phase = Phase::Reflect { xr };
        }
    }

    fn begin_inside(&mut self) {
        let s = &self.simplex;
        let d = s.dim();
        let xcc = along(&s.centroid(), &s.vertices[d], CONTRACTION);
        if s.has_vertex(&xcc) {
            self.begin_shrink();
        } else {
            self.phase = Phase::Inside { xcc };
        }
    }

    fn begin_shrink(&mut self) {
        let best = &self.simplex.vertices[0];
        let points = self.simplex.vertices[1..]
            .iter()
            .map(|v| along(best, v, SHRINK))
            .collect();
        self.phase = Phase::Shrink { points };
    }

    fn accept(&mut self, x: Vec<f64>, f: f64) {
        let d = self.simplex.dim();
        self.simplex.vertices[d] = x;
        self.simplex.values[d] = f;
        self.finish_iteration();
    }

    fn finish_iteration(&mut self) {
        self.simplex.sort();
        self.iterations += 1;
        self.phase = Phase::Ready;
    }

    /// Runs one full iteration, or completes a pending (re)initialization,
    /// against `f`. Returns the number of evaluations spent.
    pub fn step_with(&mut self, mut f: impl FnMut(&[f64]) -> f64) -> usize {
        let start_evals = self.evaluations;
        let start_iter = self.iterations;
        while self.iterations == start_iter {
            let pts = self.request();
            let initializing = matches!(self.phase, Phase::Init { .. });
            let vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
            self.receive(&vals);
            if initializing {
                break;
            }
        }
        self.evaluations - start_evals
    }
}

/// Synchronous minimization of `f` over the unit cube.
pub fn minimize(f: impl Fn(&[f64]) -> f64, x0: &[f64], edge: f64, max_iters: usize) -> (Vec<f64>, f64) {
    let mut nm = NelderMead::new(x0, None, edge);
    while nm.iterations() < max_iters {
        nm.step_with(&f);
    }
    let (x, v) = nm.best().expect("evaluated simplex");
    (x.to_vec(), v)
}

fn default_edge() -> f64 {
    0.1
}

fn default_max_iters() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadConfig {
    #[serde(default = "default_edge")]
    pub edge: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            edge: default_edge(),
            max_iters: default_max_iters(),
        }
    }
}

/// Ask/tell Nelder-Mead over the continuous channels; integer and
/// categorical channels stay at the centre of the space.
pub struct NelderMeadSolver {
    space: SearchSpace,
    channels: Vec<usize>,
    base: Vec<f64>,
    machine: Option<NelderMead>,
    pending: PendingBatch<()>,
    max_iters: usize,
    probed: bool,
}

impl NelderMeadSolver {
    pub fn new(space: SearchSpace, config: NelderMeadConfig) -> Self {
        let channels = space.continuous_channels();
        let base = vec![0.5; space.dim()];
        let x0: Vec<f64> = channels.iter().map(|&c| base[c]).collect();
        let machine = (!channels.is_empty()).then(|| NelderMead::new(&x0, None, config.edge));
        Self {
            space,
            channels,
            base,
            machine,
            pending: PendingBatch::default(),
            max_iters: config.max_iters,
            probed: false,
        }
    }

    fn to_point(&self, x: &[f64]) -> Point {
        to_point(&self.space, &self.base, &self.channels, x)
    }

    pub fn best(&self) -> Option<(Point, f64)> {
        let nm = self.machine.as_ref()?;
        nm.best().map(|(x, v)| (self.to_point(x), v))
    }
}

/// Writes `x` into `channels` of the unit-cube vector `base`.
pub(crate) fn to_point(space: &SearchSpace, base: &[f64], channels: &[usize], x: &[f64]) -> Point {
    let mut u = base.to_vec();
    for (&c, &v) in channels.iter().zip(x) {
        u[c] = v;
    }
    space.point_from_unit(&u)
}

impl Solver for NelderMeadSolver {
    fn name(&self) -> &str {
        "neldermead"
    }

    fn ask(&mut self, max_points: usize) -> Result<Vec<Point>, SolverError> {
        if self.pending.is_empty() {
            match &mut self.machine {
                Some(nm) => {
                    let pts = nm.request();
                    for x in pts {
                        let p = to_point(&self.space, &self.base, &self.channels, &x);
                        self.pending.push(&self.space, p, ());
                    }
                }
                None if !self.probed => {
                    self.probed = true;
                    let p = self.space.point_from_unit(&self.base);
                    self.pending.push(&self.space, p, ());
                }
                None => return Ok(Vec::new()),
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
            if let Some(nm) = &mut self.machine {
                nm.receive(&values);
            }
        }
        Ok(())
    }

    fn is_done(&self) -> bool {
        match &self.machine {
            Some(nm) => nm.iterations() >= self.max_iters,
            None => self.probed && self.pending.is_empty(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn clipped_reflection_falls_back_to_inside_contraction() {
        let simplex = Simplex {
            vertices: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            values: vec![0.0, 1.0, 2.0],
        };
        let mut nm = NelderMead::from_simplex(simplex);
        // reflection of (1,1) through (0.5,0) is (0,-1), clipped onto vertex (0,0)
        assert_eq!(nm.request(), vec![vec![0.75, 0.5]]);
        nm.receive(&[sphere(&[0.75, 0.5])]);
        assert_eq!(nm.iterations(), 1);
        let s = nm.simplex();
        assert_eq!(s.vertices[1], vec![0.75, 0.5]);
        assert_eq!(s.values[1], 0.8125);
    }

    #[test]
    fn linear_objective_descends_monotonically() {
        let f = |x: &[f64]| x[0] + 2.0 * x[1];
        let h = 0.1;
        let tri = vec![
            vec![0.5, 0.5],
            vec![0.5 + h, 0.5],
            vec![0.5 + h / 2.0, 0.5 + h * 3f64.sqrt() / 2.0],
        ];
        let values = tri.iter().map(|v| f(v)).collect();
        let mut nm = NelderMead::from_simplex(Simplex { vertices: tri, values });
        let mut last = nm.best().unwrap().1;
        for _ in 0..3 {
            let pts = nm.request();
            // the first request of each iteration is the reflection
            assert_eq!(pts.len(), 1);
            nm.step_with(f);
            let now = nm.best().unwrap().1;
            assert!(now < last);
            last = now;
        }
    }

    #[test]
    fn sphere_converges_from_centre() {
        let f = |x: &[f64]| sphere(x);
        let mut nm = NelderMead::new(&[0.5, 0.5], None, 0.1);
        let mut iters = 0;
        while nm.best().is_none_or(|b| b.1 > 1e-6) {
            nm.step_with(f);
            iters += 1;
            assert!(iters <= 200, "no convergence");
        }
    }

    #[test]
    fn degenerate_simplex_is_rebuilt() {
        let simplex = Simplex {
            vertices: vec![vec![0.2, 0.2], vec![0.4, 0.4], vec![0.6, 0.6]],
            values: vec![1.0, 2.0, 3.0],
        };
        let mut nm = NelderMead::from_simplex(simplex);
        let pts = nm.request();
        assert_eq!(pts, vec![vec![0.25, 0.2], vec![0.2, 0.25]]);
        nm.receive(&[0.5, 0.7]);
        assert_eq!(nm.best().unwrap().1, 0.5);
        assert!(nm.simplex().volume() > DEGENERATE_VOLUME);
    }

    #[test]
    fn shrink_replaces_all_but_best() {
        // reflection and contraction both worse than everything: shrink
        let f = |x: &[f64]| if x == [0.5, 0.5] { 0.0 } else { 10.0 + x[0] };
        let simplex = Simplex {
            vertices: vec![vec![0.5, 0.5], vec![0.6, 0.5], vec![0.5, 0.6]],
            values: vec![0.0, 1.0, 2.0],
        };
        let mut nm = NelderMead::from_simplex(simplex);
        let evals = nm.step_with(f);
        assert_eq!(evals, 1 + 1 + 2);
        let s = nm.simplex();
        assert_eq!(s.vertices[0], vec![0.5, 0.5]);
        assert!(s.size() <= 0.05 + 1e-12);
    }

    #[test]
    fn minimize_quadratic() {
        let (x, v) = minimize(|x| (x[0] - 0.3).powi(2) + (x[1] - 0.7).powi(2), &[0.5, 0.5], 0.1, 200);
        assert!(v < 1e-10);
        assert!((x[0] - 0.3).abs() < 1e-4);
    }
}
