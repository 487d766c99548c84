//! k-nearest-neighbour classifier scored by validation misclassification.
use super::dataset::{Dataset, Partition};
use super::{EvalContext, Objective, ObjectiveError};
use crate::domain::{Point, SearchSpace, Value, VarKind};
use crate::trial::Outcome;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Uniform,
    Inverse,
}

impl Weighting {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(Self::Uniform),
            "inverse" => Some(Self::Inverse),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnParams {
    pub k: usize,
    pub weighting: Weighting,
    pub power: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum KnnError {
    #[error("training partition is empty")]
    EmptyTrain,
    #[error("k = {k} outside 1..={train}")]
    BadK { k: usize, train: usize },
    #[error("Minkowski power must be > 0, got {0}")]
    BadPower(f64),
}

fn minkowski(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        return a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    }
    if p == 1.0 {
        return a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

fn by_dist(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Misclassification rate on the validation rows. Vote ties go to the
/// lexicographically smallest class label.
pub fn knn_eval(ds: &Dataset, part: &Partition, params: KnnParams) -> Result<f64, KnnError> {
    let train = &part.train;
    if train.is_empty() {
        return Err(KnnError::EmptyTrain);
    }
    if params.k == 0 || params.k > train.len() {
        return Err(KnnError::BadK {
            k: params.k,
            train: train.len(),
        });
    }
    if !(params.power > 0.0) || !params.power.is_finite() {
        return Err(KnnError::BadPower(params.power));
    }
    if part.validation.is_empty() {
        return Ok(0.0);
    }
    let mut wrong = 0usize;
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(train.len());
    for &v in &part.validation {
        dists.clear();
        dists.extend(
            train
                .iter()
                .map(|&t| (minkowski(&ds.features[v], &ds.features[t], params.power), t)),
        );
        if params.k < dists.len() {
            dists.select_nth_unstable_by(params.k - 1, by_dist);
        }
        dists[..params.k].sort_unstable_by(by_dist);
        let mut votes: BTreeMap<&str, f64> = BTreeMap::new();
        for &(d, t) in &dists[..params.k] {
            let w = match params.weighting {
                Weighting::Uniform => 1.0,
                Weighting::Inverse => 1.0 / (d + 1e-12),
            };
            *votes.entry(ds.labels[t].as_str()).or_default() += w;
        }
        let mut best: Option<(&str, f64)> = None;
        for (label, w) in votes {
            if best.is_none_or(|(_, bw)| w > bw) {
                best = Some((label, w));
            }
        }
        if best.map(|b| b.0) != Some(ds.labels[v].as_str()) {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / part.validation.len() as f64)
}

/// Tuning objective over variables named `k` (integer), `weight`
/// (categorical: uniform/inverse) and `power` (continuous).
#[derive(Debug, Clone)]
pub struct KnnObjective {
    dataset: Dataset,
    partition: Partition,
    k_idx: usize,
    weight_idx: usize,
    power_idx: usize,
}

impl KnnObjective {
    pub fn new(space: &SearchSpace, dataset: Dataset, partition: Partition) -> Result<Self, ObjectiveError> {
        let find = |name: &str, want: &str| -> Result<usize, ObjectiveError> {
            let i = space
                .index_of(name)
                .ok_or_else(|| ObjectiveError::Config(format!("k-NN objective needs variable {name:?}")))?;
            let ok = matches!(
                (&space.variables()[i].kind, want),
                (VarKind::Integer { .. }, "integer")
                    | (VarKind::Continuous { .. }, "continuous")
                    | (VarKind::Categorical { .. }, "categorical")
            );
            if ok {
                Ok(i)
            } else {
                Err(ObjectiveError::Config(format!("variable {name:?} must be {want}")))
            }
        };
        let k_idx = find("k", "integer")?;
        let weight_idx = find("weight", "categorical")?;
        let power_idx = find("power", "continuous")?;
        if let VarKind::Categorical { levels } = &space.variables()[weight_idx].kind {
            if let Some(bad) = levels.iter().find(|l| Weighting::parse(l).is_none()) {
                return Err(ObjectiveError::Config(format!("unknown weight level {bad:?}")));
            }
        }
        if partition.train.is_empty() {
            return Err(ObjectiveError::Config(KnnError::EmptyTrain.to_string()));
        }
        Ok(Self {
            dataset,
            partition,
            k_idx,
            weight_idx,
            power_idx,
        })
    }

    pub fn params_of(&self, p: &Point) -> Option<KnnParams> {
        let k = match p.values.get(self.k_idx)? {
            Value::Int(k) if *k >= 1 => *k as usize,
            _ => return None,
        };
        let weighting = match p.values.get(self.weight_idx)? {
            Value::Level(s) => Weighting::parse(s)?,
            _ => return None,
        };
        let power = match p.values.get(self.power_idx)? {
            Value::Real(x) => *x,
            _ => return None,
        };
        Some(KnnParams { k, weighting, power })
    }
}

impl Objective for KnnObjective {
    fn evaluate(&self, p: &Point, _ctx: &EvalContext) -> Outcome {
        let Some(params) = self.params_of(p) else {
            return Outcome::Fail("bad_params".into());
        };
        match knn_eval(&self.dataset, &self.partition, params) {
            Ok(err) => Outcome::Ok(err),
            Err(e) => Outcome::Fail(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::dataset::{partition, two_blobs, BlobsSpec, PartitionSpec};
    use super::*;

    fn uniform(k: usize) -> KnnParams {
        KnnParams {
            k,
            weighting: Weighting::Uniform,
            power: 2.0,
        }
    }

    #[test]
    fn duplicate_row_classified_correctly() {
        let ds = Dataset::new(
            vec!["x".into()],
            vec![vec![0.0], vec![10.0], vec![0.0]],
            vec!["a".into(), "b".into(), "a".into()],
        )
        .unwrap();
        let part = Partition {
            train: vec![0, 1],
            validation: vec![2],
            stratified: false,
        };
        assert_eq!(knn_eval(&ds, &part, uniform(1)).unwrap(), 0.0);
    }

    #[test]
    fn separated_blobs_are_easy() {
        let ds = two_blobs(&BlobsSpec {
            n: 200,
            sigma: 0.3,
            separation: 4.0,
            noise_dims: 0,
            seed: 7,
        })
        .unwrap();
        let part = partition(&ds, &PartitionSpec::default()).unwrap();
        assert!(knn_eval(&ds, &part, uniform(5)).unwrap() <= 0.05);
    }

    #[test]
    fn k_equal_train_size_predicts_majority() {
        let labels: Vec<String> = (0..10).map(|i| if i < 7 { "a" } else { "b" }.to_string()).collect();
        let ds = Dataset::new(
            vec!["x".into()],
            (0..10).map(|i| vec![i as f64]).collect(),
            labels,
        )
        .unwrap();
        let part = partition(&ds, &PartitionSpec::default()).unwrap();
        let err = knn_eval(&ds, &part, uniform(part.train.len())).unwrap();
        let minority = part.validation.iter().filter(|&&i| ds.labels[i] == "b").count();
        assert_eq!(err, minority as f64 / part.validation.len() as f64);
    }

    #[test]
    fn ties_go_to_smallest_label() {
        let ds = Dataset::new(
            vec!["x".into()],
            vec![vec![-1.0], vec![1.0], vec![0.0]],
            vec!["b".into(), "a".into(), "a".into()],
        )
        .unwrap();
        let part = Partition {
            train: vec![0, 1],
            validation: vec![2],
            stratified: false,
        };
        assert_eq!(knn_eval(&ds, &part, uniform(2)).unwrap(), 0.0);
    }

    #[test]
    fn invalid_params() {
        let ds = Dataset::new(vec!["x".into()], vec![vec![0.0], vec![1.0]], vec!["a".into(), "b".into()]).unwrap();
        let part = Partition {
            train: vec![0],
            validation: vec![1],
            stratified: false,
        };
        assert_eq!(knn_eval(&ds, &part, uniform(2)), Err(KnnError::BadK { k: 2, train: 1 }));
        let bad_power = KnnParams { power: 0.0, ..uniform(1) };
        assert_eq!(knn_eval(&ds, &part, bad_power), Err(KnnError::BadPower(0.0)));
        let empty = Partition {
            train: vec![],
            validation: vec![0, 1],
            stratified: false,
        };
        assert_eq!(knn_eval(&ds, &empty, uniform(1)), Err(KnnError::EmptyTrain));
    }

    #[test]
    fn rate_in_unit_interval_and_train_order_invariant() {
        let ds = two_blobs(&BlobsSpec {
            n: 120,
            sigma: 1.2,
            separation: 1.5,
            noise_dims: 2,
            seed: 11,
        })
        .unwrap();
        let part = partition(&ds, &PartitionSpec::default()).unwrap();
        let mut reversed = part.clone();
        reversed.train.reverse();
        for k in [1, 3, 10, 40] {
            for weighting in [Weighting::Uniform, Weighting::Inverse] {
                for power in [0.7, 1.0, 2.0, 3.5] {
                    let params = KnnParams { k, weighting, power };
                    let a = knn_eval(&ds, &part, params).unwrap();
                    assert!((0.0..=1.0).contains(&a));
                    assert_eq!(a, knn_eval(&ds, &reversed, params).unwrap());
                }
            }
        }
    }
}
