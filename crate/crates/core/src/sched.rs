//! Splitting a worker grid between per-model training parallelism and
//! concurrent configurations.
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SchedError {
    #[error("grid size must be at least 1")]
    EmptyGrid,
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("workers per model must lie in 1..={grid}, got {workers}")]
    Workers { workers: usize, grid: usize },
    #[error("cost model parameters must be finite and non-negative")]
    BadCost,
    #[error("need observations at 3 or more distinct worker counts, got {0}")]
    TooFewObservations(usize),
    #[error("observation ({0}, {1}) is invalid")]
    BadObservation(f64, f64),
}

/// Training time on `w` workers: `t_serial / w + c_comm (w - 1) + t_fixed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub t_serial: f64,
    pub c_comm: f64,
    pub t_fixed: f64,
}

impl CostModel {
    pub fn new(t_serial: f64, c_comm: f64, t_fixed: f64) -> Result<Self, SchedError> {
        let m = Self {
            t_serial,
            c_comm,
            t_fixed,
        };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<(), SchedError> {
        let ok = [self.t_serial, self.c_comm, self.t_fixed].iter().all(|v| v.is_finite() && *v >= 0.0);
        if ok && self.t_serial + self.t_fixed > 0.0 {
            Ok(())
        } else {
            Err(SchedError::BadCost)
        }
    }

    pub fn time(&self, workers: usize) -> f64 {
        let w = workers as f64;
        self.t_serial / w + self.c_comm * (w - 1.0) + self.t_fixed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AllocationPlan {
    pub grid: usize,
    pub workers: usize,
    pub batch: usize,
}

impl AllocationPlan {
    pub fn new(grid: usize, workers: usize, batch: usize) -> Result<Self, SchedError> {
        if grid == 0 {
            return Err(SchedError::EmptyGrid);
        }
        if batch == 0 {
            return Err(SchedError::EmptyBatch);
        }
        if workers == 0 || workers > grid {
            return Err(SchedError::Workers { workers, grid });
        }
        Ok(Self { grid, workers, batch })
    }

    /// Models that can train at once, `floor(G / w)`.
    pub fn slots(&self) -> usize {
        self.grid / self.workers
    }

    pub fn concurrent(&self) -> usize {
        self.slots().min(self.batch)
    }
}

/// Each iteration is a barrier: its batch runs in waves of
/// `min(B, n_batch)` models.
pub fn makespan(plan: &AllocationPlan, iterations: usize, cost: &CostModel) -> f64 {
    let waves = plan.batch.div_ceil(plan.concurrent());
    iterations as f64 * waves as f64 * cost.time(plan.workers)
}

/// Every worker count with its makespan, `w = 1..=G`.
pub fn makespan_table(grid: usize, batch: usize, iterations: usize, cost: &CostModel) -> Result<Vec<(usize, f64)>, SchedError> {
    AllocationPlan::new(grid, 1, batch)?;
    (1..=grid)
        .map(|w| AllocationPlan::new(grid, w, batch).map(|p| (w, makespan(&p, iterations, cost))))
        .collect()
}

/// Exhaustive search; ties go to the smaller worker count.
pub fn best_allocation(grid: usize, batch: usize, iterations: usize, cost: &CostModel) -> Result<AllocationPlan, SchedError> {
    let table = makespan_table(grid, batch, iterations, cost)?;
    let (w, _) = table
        .into_iter()
        .fold(None, |best: Option<(usize, f64)>, (w, t)| match best {
            Some((_, bt)) if bt <= t => best,
            _ => Some((w, t)),
        })
        .expect("grid >= 1");
    AllocationPlan::new(grid, w, batch)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostFit {
    pub model: CostModel,
    /// Root-mean-square residual over the observations.
    pub residual: f64,
}

/// Non-negative least squares for `(t_serial, c_comm, t_fixed)`. With three
/// terms every active set can be tried, so the result is the exact
/// constrained optimum.
pub fn fit_cost_model(observations: &[(f64, f64)]) -> Result<CostFit, SchedError> {
    for &(w, t) in observations {
        if !(w >= 1.0 && w.is_finite() && t.is_finite() && t >= 0.0) {
            return Err(SchedError::BadObservation(w, t));
        }
    }
    let mut distinct: Vec<f64> = observations.iter().map(|o| o.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(SchedError::TooFewObservations(distinct.len()));
    }
    let basis = |w: f64| [1.0 / w, w - 1.0, 1.0];
    let n = observations.len();
    let rms = |theta: &[f64; 3]| {
        let sse: f64 = observations
            .iter()
            .map(|&(w, t)| {
                let b = basis(w);
                let pred: f64 = (0..3).map(|k| b[k] * theta[k]).sum();
                (pred - t) * (pred - t)
            })
            .sum();
        (sse / n as f64).sqrt()
    };

    let mut best: Option<([f64; 3], f64)> = None;
    for mask in 1u8..8 {
        let cols: Vec<usize> = (0..3).filter(|k| mask & (1 << k) != 0).collect();
        let a = DMatrix::from_fn(n, cols.len(), |i, j| basis(observations[i].0)[cols[j]]);
        let y = DVector::from_iterator(n, observations.iter().map(|o| o.1));
        let Ok(sol) = a.clone().svd(true, true).solve(&y, 1e-12) else {
            continue;
        };
        if sol.iter().any(|&v| v < 0.0) {
            continue;
        }
        let mut theta = [0.0; 3];
        for (j, &k) in cols.iter().enumerate() {
            theta[k] = sol[j];
        }
        let r = rms(&theta);
        if best.is_none_or(|(_, br)| r < br) {
            best = Some((theta, r));
        }
    }
    let (theta, residual) = best.unwrap_or(([0.0; 3], rms(&[0.0; 3])));
    Ok(CostFit {
        model: CostModel {
            t_serial: theta[0],
            c_comm: theta[1],
            t_fixed: theta[2],
        },
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn example() -> CostModel {
        CostModel::new(64.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn makespan_examples() {
        let m = example();
        assert_eq!(m.time(2), 34.0);
        assert_eq!(m.time(1), 65.0);
        let t4 = CostModel::new(80.0, 0.0, 0.0).unwrap();
        assert_eq!(makespan(&AllocationPlan::new(32, 4, 8).unwrap(), 1, &t4), 20.0);
        assert_eq!(makespan(&AllocationPlan::new(32, 2, 64).unwrap(), 1, &m), 136.0);
        assert_eq!(makespan(&AllocationPlan::new(32, 1, 64).unwrap(), 1, &m), 130.0);
        assert_eq!(makespan(&AllocationPlan::new(32, 1, 64).unwrap(), 3, &m), 390.0);
    }

    #[test]
    fn allocation_examples() {
        let m = example();
        let plan = best_allocation(32, 64, 1, &m).unwrap();
        assert_eq!(plan.workers, 1);
        let table = makespan_table(32, 64, 1, &m).unwrap();
        assert_eq!(&table[..3], &[(1, 130.0), (2, 136.0), (3, 7.0 * (64.0 / 3.0 + 2.0 + 1.0))]);

        let pure = CostModel::new(100.0, 0.0, 0.0).unwrap();
        assert_eq!(best_allocation(16, 1, 1, &pure).unwrap().workers, 16);
        // single model: the argmin of t(w), here sqrt(64 / 1) = 8
        assert_eq!(best_allocation(32, 1, 1, &m).unwrap().workers, 8);
        assert_eq!(best_allocation(1, 5, 2, &m).unwrap().workers, 1);
    }

    #[test]
    fn invalid_inputs() {
        assert_eq!(AllocationPlan::new(0, 1, 1), Err(SchedError::EmptyGrid));
        assert_eq!(best_allocation(0, 4, 1, &example()), Err(SchedError::EmptyGrid));
        assert_eq!(makespan_table(4, 0, 1, &example()), Err(SchedError::EmptyBatch));
        assert!(AllocationPlan::new(4, 5, 1).is_err());
        assert!(CostModel::new(-1.0, 0.0, 1.0).is_err());
        assert!(CostModel::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn fit_recovers_exact_data() {
        let truth = example();
        let obs: Vec<(f64, f64)> = (1..=8).map(|w| (w as f64, truth.time(w))).collect();
        let fit = fit_cost_model(&obs).unwrap();
        assert!((fit.model.t_serial - 64.0).abs() < 1e-6);
        assert!((fit.model.c_comm - 1.0).abs() < 1e-6);
        assert!((fit.model.t_fixed - 1.0).abs() < 1e-6);
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn fit_clamps_negative_terms() {
        // times fall faster than 1/w allows with a positive fixed cost
        let obs = [(1.0, 10.0), (2.0, 4.0), (4.0, 1.0), (8.0, 0.2)];
        let fit = fit_cost_model(&obs).unwrap();
        let m = fit.model;
        assert!(m.t_serial >= 0.0 && m.c_comm >= 0.0 && m.t_fixed >= 0.0);
        assert_eq!(m.t_fixed, 0.0);
        // refit of the remaining terms: no non-negative model does better
        let mut rng = rng_from_seed(3);
        for _ in 0..2000 {
            let trial = CostModel {
                t_serial: rng.random_range(0.0..20.0),
                c_comm: rng.random_range(0.0..2.0),
                t_fixed: rng.random_range(0.0..2.0),
            };
            let sse: f64 = obs.iter().map(|&(w, t)| (trial.time(w as usize) - t).powi(2)).sum();
            assert!((sse / 4.0).sqrt() >= fit.residual - 1e-12);
        }
    }

    #[test]
    fn fit_needs_three_worker_counts() {
        assert_eq!(fit_cost_model(&[(1.0, 3.0), (2.0, 2.0)]), Err(SchedError::TooFewObservations(2)));
        assert_eq!(fit_cost_model(&[(2.0, 3.0), (2.0, 2.0), (2.0, 1.0)]), Err(SchedError::TooFewObservations(1)));
    }

    proptest! {
        #[test]
        fn makespan_never_grows_with_the_grid(
            w in 1usize..16, extra in 0usize..64, batch in 1usize..100,
            ts in 0.1f64..100.0, cc in 0.0f64..5.0, tf in 0.0f64..5.0,
        ) {
            let m = CostModel::new(ts, cc, tf).unwrap();
            let small = makespan(&AllocationPlan::new(w + extra, w, batch).unwrap(), 2, &m);
            let large = makespan(&AllocationPlan::new(w + extra + 1, w, batch).unwrap(), 2, &m);
            prop_assert!(large <= small);
        }

        #[test]
        fn optimum_stays_below_the_single_model_optimum(
            grid in 1usize..128, ts in 0.1f64..500.0, cc in 0.01f64..5.0, tf in 0.0f64..5.0,
        ) {
            let m = CostModel::new(ts, cc, tf).unwrap();
            let w_star = (1..=grid).min_by(|&a, &b| m.time(a).total_cmp(&m.time(b))).unwrap();
            let batch = grid / w_star + 1;
            prop_assert!(best_allocation(grid, batch, 1, &m).unwrap().workers <= w_star);
        }
    }
}
