//! Analytic test functions, including noisy and failing variants.
use super::{EvalContext, Objective, ObjectiveError};
use crate::domain::{Point, SearchSpace, Value, VarKind};
use crate::sampling::{mix_seed, rng_from_seed};
use crate::trial::Outcome;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Global minimum of the standard Branin function.
pub const BRANIN_MIN: f64 = 0.397_887_357_729_738_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Builtin {
    Sphere,
    Rosenbrock,
    Rastrigin,
    Branin,
    /// Scale-free function over any mix of variable kinds; minimum 0.
    MixedSynthetic,
    /// Adds `N(0, sigma)` noise seeded by `(run seed, eval id)`.
    Noisy { base: Box<Builtin>, sigma: f64 },
    /// Fails whenever `variable` exceeds `above` (a hidden constraint).
    Cliff {
        base: Box<Builtin>,
        variable: String,
        above: f64,
    },
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

pub fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
}

/// Standard Branin on `x1 in [-5, 10]`, `x2 in [0, 15]`.
pub fn branin(x1: f64, x2: f64) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

/// Continuous channels: a quadratic bowl at encoded 0.6 with a cosine ripple.
/// Integer channels: a bowl at encoded 0.35. Categorical channels: unit cost
/// unless the last level is chosen.
pub fn mixed_synthetic(space: &SearchSpace, p: &Point) -> f64 {
    let e = space.encode_unchecked(p).coords;
    space
        .variables()
        .iter()
        .zip(e)
        .map(|(v, u)| match &v.kind {
            VarKind::Continuous { .. } => {
                let d = u - 0.6;
                25.0 * d * d + (1.0 - (10.0 * PI * d).cos())
            }
            VarKind::Integer { .. } => 25.0 * (u - 0.35).powi(2),
            VarKind::Categorical { levels } => {
                if u as usize + 1 == levels.len() {
                    0.0
                } else {
                    1.0
                }
            }
        })
        .sum()
}

#[derive(Debug, Clone)]
pub struct BuiltinObjective {
    func: Builtin,
    space: SearchSpace,
}

impl BuiltinObjective {
    pub fn new(func: Builtin, space: SearchSpace) -> Result<Self, ObjectiveError> {
        check(&func, &space)?;
        Ok(Self { func, space })
    }

    pub fn eval_point(&self, p: &Point, ctx: &EvalContext) -> Outcome {
        eval(&self.func, &self.space, p, ctx)
    }
}

impl Objective for BuiltinObjective {
    fn evaluate(&self, p: &Point, ctx: &EvalContext) -> Outcome {
        self.eval_point(p, ctx)
    }
}

fn check(func: &Builtin, space: &SearchSpace) -> Result<(), ObjectiveError> {
    let numeric = space.numeric_channels().len();
    let all_numeric = numeric == space.dim();
    let mismatch = |msg: String| Err(ObjectiveError::Dimension(msg));
    match func {
        Builtin::Sphere | Builtin::Rastrigin if !all_numeric => {
            mismatch(format!("{func:?} needs numeric variables only"))
        }
        Builtin::Rosenbrock if !all_numeric || numeric < 2 => {
            mismatch("rosenbrock needs at least 2 numeric variables".into())
        }
        Builtin::Branin if !all_numeric || numeric != 2 => {
            mismatch(format!("branin needs exactly 2 numeric variables, got {}", space.dim()))
        }
        Builtin::Noisy { base, sigma } => {
            if !(sigma.is_finite() && *sigma >= 0.0) {
                return Err(ObjectiveError::Config("noise sigma must be >= 0".into()));
            }
            check(base, space)
        }
        Builtin::Cliff { base, variable, .. } => {
            match space.index_of(variable).map(|i| &space.variables()[i].kind) {
                Some(VarKind::Categorical { .. }) => {
                    return Err(ObjectiveError::Config(format!(
                        "cliff variable {variable:?} must be numeric"
                    )))
                }
                None => {
                    return Err(ObjectiveError::Config(format!(
                        "cliff variable {variable:?} not in search space"
                    )))
                }
                Some(_) => {}
            }
            check(base, space)
        }
        _ => Ok(()),
    }
}

fn numeric_values(p: &Point) -> Vec<f64> {
    p.values
        .iter()
        .filter_map(|v| match v {
            Value::Real(x) => Some(*x),
            Value::Int(k) => Some(*k as f64),
            Value::Level(_) => None,
        })
        .collect()
}

fn eval(func: &Builtin, space: &SearchSpace, p: &Point, ctx: &EvalContext) -> Outcome {
    match func {
        Builtin::Sphere => Outcome::Ok(sphere(&numeric_values(p))),
        Builtin::Rosenbrock => Outcome::Ok(rosenbrock(&numeric_values(p))),
        Builtin::Rastrigin => Outcome::Ok(rastrigin(&numeric_values(p))),
        Builtin::Branin => {
            let x = numeric_values(p);
            Outcome::Ok(branin(x[0], x[1]))
        }
        Builtin::MixedSynthetic => Outcome::Ok(mixed_synthetic(space, p)),
        Builtin::Noisy { base, sigma } => match eval(base, space, p, ctx) {
            Outcome::Ok(v) => {
                let mut rng = rng_from_seed(mix_seed(ctx.run_seed, ctx.eval_id));
                let noise = Normal::new(0.0, *sigma).map(|n| n.sample(&mut rng)).unwrap_or(0.0);
                Outcome::Ok(v + noise)
            }
            fail => fail,
        },
        Builtin::Cliff {
            base,
            variable,
            above,
        } => {
            let over = space.index_of(variable).is_some_and(|i| match &p.values[i] {
                Value::Real(x) => x > above,
                Value::Int(k) => *k as f64 > *above,
                Value::Level(_) => false,
            });
            if over {
                Outcome::Fail("cliff".into())
            } else {
                eval(base, space, p, ctx)
            }
        }
    }
}
