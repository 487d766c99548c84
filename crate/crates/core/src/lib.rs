//! Derivative-free hybrid search for hyperparameter tuning.
//!
//! Several search methods run side by side under a [`manager::Manager`]
//! that evaluates their candidates in parallel, deduplicates repeats through
//! a shared [`cache::CacheTree`], and lets solvers learn from each other's
//! evaluations.
//!
//! ```
//! use tunekit::config::{build_manager, SolverSpec};
//! use tunekit::objectives::{Builtin, BuiltinObjective};
//! use tunekit::{Budget, SearchSpace, VariableSpec};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let space = SearchSpace::new(vec![
//!     VariableSpec::continuous("x", -5.0, 5.0),
//!     VariableSpec::integer("n", 1, 20),
//! ])?;
//! let objective = BuiltinObjective::new(Builtin::MixedSynthetic, space.clone())?;
//! let solvers = [SolverSpec::new("hybrid"), SolverSpec::new("bayes")];
//! let mut manager = build_manager(&space, &solvers, 60, 42)?;
//! let history = manager.run(&objective, Budget::new(60, 4)?, 42)?;
//! assert!(history.records.len() <= 60);
//! println!("best {:?}", history.best());
//! # Ok(())
//! # }
//! ```
pub mod bench;
pub mod cache;
pub mod config;
pub mod domain;
pub mod format;
pub mod manager;
pub mod objectives;
pub mod sampling;
pub mod sched;
pub mod solvers;
pub mod trial;

pub use domain::{EncodedPoint, Point, SearchSpace, Value, VarKind, VariableSpec};
pub use manager::{Budget, Manager, Solver, SolverError, TuningHistory};
pub use trial::{Outcome, Status, TrialRecord, PENALTY};
