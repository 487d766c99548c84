//! Seeded random and Latin hypercube samplers.
//!
//! All randomness in the crate comes from ChaCha8 (`rand_chacha`) seeded via
//! `seed_from_u64`, so a given build reproduces histories exactly.
use crate::domain::{Point, SearchSpace, Value, VarKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes two seeds into one (splitmix64 finalizer over the pair).
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SamplingError {
    #[error("sample size must be at least 1")]
    ZeroSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRequest {
    pub n: usize,
    pub seed: u64,
}

impl SampleRequest {
    pub fn new(n: usize, seed: u64) -> Result<Self, SamplingError> {
        if n == 0 {
            return Err(SamplingError::ZeroSamples);
        }
        Ok(Self { n, seed })
    }
}

pub fn random_sample(space: &SearchSpace, req: SampleRequest) -> Vec<Point> {
    let mut rng = rng_from_seed(req.seed);
    random_points(space, req.n, &mut rng)
}

pub(crate) fn random_points(space: &SearchSpace, n: usize, rng: &mut SeededRng) -> Vec<Point> {
    (0..n)
        .map(|_| {
            let values = space
                .variables()
                .iter()
                .map(|v| match &v.kind {
                    VarKind::Continuous { lo, hi } => {
                        let u: f64 = rng.random();
                        Value::Real((lo + u * (hi - lo)).clamp(*lo, *hi))
                    }
                    VarKind::Integer { lo, hi } => Value::Int(rng.random_range(*lo..=*hi)),
                    VarKind::Categorical { levels } => {
                        Value::Level(levels[rng.random_range(0..levels.len())].clone())
                    }
                })
                .collect();
            Point::new(values)
        })
        .collect()
}

/// Integer value-index for stratum `j` of `n` over `count` values. Stratum `j`
/// owns the contiguous index block `[floor(j*count/n), floor((j+1)*count/n))`;
/// when that block is empty (more strata than values) the lower edge is used.
fn integer_stratum_value(j: usize, n: usize, count: u64, rng: &mut SeededRng) -> u64 {
    let start = (j as u128 * count as u128 / n as u128) as u64;
    let end = ((j as u128 + 1) * count as u128 / n as u128) as u64;
    if end > start + 1 {
        rng.random_range(start..end)
    } else {
        start
    }
}

/// McKay Latin hypercube: one uniform draw inside each of `n` strata per
/// variable, with an independent random stratum order per variable.
pub fn lhs_sample(space: &SearchSpace, req: SampleRequest) -> Vec<Point> {
    let mut rng = rng_from_seed(req.seed);
    lhs_points(space, req.n, &mut rng)
}

pub(crate) fn lhs_points(space: &SearchSpace, n: usize, rng: &mut SeededRng) -> Vec<Point> {
    let mut columns: Vec<Vec<Value>> = Vec::with_capacity(space.dim());
    for var in space.variables() {
        let mut column: Vec<Value> = match &var.kind {
            VarKind::Continuous { lo, hi } => (0..n)
                .map(|j| {
                    let u = (j as f64 + rng.random::<f64>()) / n as f64;
                    Value::Real((lo + u * (hi - lo)).clamp(*lo, *hi))
                })
                .collect(),
            VarKind::Integer { lo, hi } => {
                let count = (hi - lo) as u64 + 1;
                (0..n)
                    .map(|j| Value::Int(lo + integer_stratum_value(j, n, count, rng) as i64))
                    .collect()
            }
            VarKind::Categorical { levels } => {
                let mut perm: Vec<usize> = (0..levels.len()).collect();
                perm.shuffle(rng);
                (0..n)
                    .map(|j| Value::Level(levels[perm[j % perm.len()]].clone()))
                    .collect()
            }
        };
        column.shuffle(rng);
        columns.push(column);
    }
    (0..n)
        .map(|i| Point::new(columns.iter().map(|c| c[i].clone()).collect()))
        .collect()
}
