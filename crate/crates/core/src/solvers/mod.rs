//! Search methods implementing the [`Solver`](crate::manager::Solver) contract.
pub mod bayes;
pub mod direct;
pub mod gp;
pub mod hybrid;
pub mod neldermead;

use crate::cache::CacheKey;
use crate::domain::{Point, SearchSpace};
use crate::manager::{Solver, SolverError};
use crate::sampling::{lhs_points, random_points, rng_from_seed, SeededRng};
use crate::trial::TrialRecord;

pub use bayes::{BayesConfig, BayesSolver};
pub use direct::{DirectConfig, DirectSolver};
pub use hybrid::{HybridConfig, HybridSolver};
pub use neldermead::{NelderMeadConfig, NelderMeadSolver};

#[derive(Debug, thiserror::Error)]
#[error("invalid solver configuration: {0}")]
pub struct ConfigError(pub String);

/// Points a solver needs evaluated before it can continue, handed out in
/// chunks when the manager offers less capacity than requested.
#[derive(Debug, Clone)]
pub(crate) struct PendingBatch<T> {
    items: Vec<PendingItem<T>>,
    handed_out: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct PendingItem<T> {
    pub point: Point,
    pub key: CacheKey,
    pub tag: T,
    pub value: Option<f64>,
    pub eval_id: u64,
}

impl<T> Default for PendingBatch<T> {
    fn default() -> Self {
        Self {
            items: Vec::new(),
            handed_out: 0,
        }
    }
}

impl<T> PendingBatch<T> {
    pub fn push(&mut self, space: &SearchSpace, point: Point, tag: T) {
        let key = CacheKey::of(space, &point);
        self.items.push(PendingItem {
            point,
            key,
            tag,
            value: None,
            eval_id: 0,
        });
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Next unasked points, at most `max`.
    pub fn chunk(&mut self, max: usize) -> Vec<Point> {
        let end = (self.handed_out + max).min(self.items.len());
        let out = self.items[self.handed_out..end]
            .iter()
            .map(|i| i.point.clone())
            .collect();
        self.handed_out = end;
        out
    }

    /// Fills every open item whose key matches a record, asked or not.
    /// Returns the records that match no item at all.
    pub fn fill<'r>(&mut self, space: &SearchSpace, records: &'r [TrialRecord]) -> Vec<&'r TrialRecord> {
        let mut unmatched = Vec::new();
        for r in records {
            let key = CacheKey::of(space, &r.point);
            let mut matched = false;
            for item in self.items.iter_mut().filter(|i| i.key == key) {
                matched = true;
                if item.value.is_none() {
                    item.value = Some(r.objective);
                    item.eval_id = r.eval_id;
                }
            }
            if !matched {
                unmatched.push(r);
            }
        }
        unmatched
    }

    pub fn is_complete(&self) -> bool {
        self.items.iter().all(|i| i.value.is_some())
    }

    pub fn take(&mut self) -> Vec<PendingItem<T>> {
        self.handed_out = 0;
        std::mem::take(&mut self.items)
    }
}

/// Uniform random search, `batch` points per ask.
pub struct RandomSearch {
    space: SearchSpace,
    rng: SeededRng,
    batch: usize,
}

impl RandomSearch {
    pub fn new(space: SearchSpace, batch: usize, seed: u64) -> Self {
        Self {
            space,
            rng: rng_from_seed(seed),
            batch: batch.max(1),
        }
    }
}

impl Solver for RandomSearch {
    fn name(&self) -> &str {
        "random"
    }

    fn ask(&mut self, max_points: usize) -> Result<Vec<Point>, SolverError> {
        Ok(random_points(&self.space, self.batch.min(max_points), &mut self.rng))
    }

    fn tell(&mut self, _records: &[TrialRecord]) -> Result<(), SolverError> {
        Ok(())
    }
}

/// One Latin hypercube of `size` points, served `batch` at a time.
pub struct LhsSearch {
    points: Vec<Point>,
    next: usize,
    batch: usize,
}

impl LhsSearch {
    pub fn new(space: &SearchSpace, size: usize, batch: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        Self {
            points: lhs_points(space, size.max(1), &mut rng),
            next: 0,
            batch: batch.max(1),
        }
    }
}

impl Solver for LhsSearch {
    fn name(&self) -> &str {
        "lhs"
    }

    fn ask(&mut self, max_points: usize) -> Result<Vec<Point>, SolverError> {
        let end = (self.next + self.batch.min(max_points)).min(self.points.len());
        let out = self.points[self.next..end].to_vec();
        self.next = end;
        Ok(out)
    }

    fn tell(&mut self, _records: &[TrialRecord]) -> Result<(), SolverError> {
        Ok(())
    }

    fn is_done(&self) -> bool {
        self.next >= self.points.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Value, VariableSpec};
    use crate::manager::{Budget, Manager};
    use crate::trial::Outcome;

    fn space() -> SearchSpace {
        SearchSpace::new(vec![VariableSpec::continuous("x", 0.0, 1.0)]).unwrap()
    }

    #[test]
    fn lhs_solver_finishes_after_its_sample() {
        let mut m = Manager::new(space());
        m.register_solver(Box::new(LhsSearch::new(&space(), 25, 10, 1)), false)
            .unwrap();
        let h = m
            .run(&|_: &Point| Outcome::Ok(1.0), Budget::new(100, 1).unwrap(), 0)
            .unwrap();
        assert_eq!(h.records.len(), 25);
        assert_eq!(h.stats.iterations, 3);
    }

    #[test]
    fn pending_batch_chunks_and_fills() {
        let s = space();
        let mut b = PendingBatch::default();
        for x in [0.1, 0.2, 0.1] {
            b.push(&s, Point::new(vec![Value::Real(x)]), x);
        }
        assert_eq!(b.chunk(2).len(), 2);
        assert_eq!(b.chunk(5).len(), 1);
        let rec = TrialRecord {
            point: Point::new(vec![Value::Real(0.1)]),
            objective: 4.0,
            status: crate::trial::Status::Ok,
            wall_time_ms: 0,
            solver_id: 0,
            iteration: 1,
            eval_id: 1,
        };
        assert!(b.fill(&s, &[rec]).is_empty());
        assert!(!b.is_complete());
        let items = b.take();
        assert_eq!(items[0].value, Some(4.0));
        assert_eq!(items[2].value, Some(4.0));
        assert_eq!(items[1].value, None);
    }
}
