//! Search spaces over mixed continuous, integer and categorical variables.
//!
//! Every algorithm in the crate works in a common *encoded* space: continuous
//! and integer channels are scaled to `[0, 1]`, categorical channels carry the
//! level index as a real. [`SearchSpace::decode`] snaps arbitrary encoded
//! vectors back onto valid points.
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DomainError {
    #[error("search space has no variables")]
    Empty,
    #[error("duplicate variable name: {0:?}")]
    DuplicateName(String),
    #[error("variable {name:?}: {reason}")]
    BadVariable { name: String, reason: String },
    #[error("point has {got} values, space has {expected} variables")]
    Arity { expected: usize, got: usize },
    #[error("invalid point: {0}")]
    Invalid(Violations),
}

/// Kind and range of one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "KindRepr", into = "KindRepr")]
pub enum VarKind {
    Continuous { lo: f64, hi: f64 },
    Integer { lo: i64, hi: i64 },
    Categorical { levels: Vec<String> },
}

/// Config-file shape: `{"type": "integer", "bounds": [1, 9]}`.
#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum KindRepr {
    Continuous { bounds: [f64; 2] },
    Integer { bounds: [i64; 2] },
    Categorical { levels: Vec<String> },
}

impl From<KindRepr> for VarKind {
    fn from(r: KindRepr) -> Self {
        match r {
            KindRepr::Continuous { bounds: [lo, hi] } => VarKind::Continuous { lo, hi },
            KindRepr::Integer { bounds: [lo, hi] } => VarKind::Integer { lo, hi },
            KindRepr::Categorical { levels } => VarKind::Categorical { levels },
        }
    }
}

impl From<VarKind> for KindRepr {
    fn from(k: VarKind) -> Self {
        match k {
            VarKind::Continuous { lo, hi } => KindRepr::Continuous { bounds: [lo, hi] },
            VarKind::Integer { lo, hi } => KindRepr::Integer { bounds: [lo, hi] },
            VarKind::Categorical { levels } => KindRepr::Categorical { levels },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: VarKind,
}

impl VariableSpec {
    pub fn continuous(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_owned(),
            kind: VarKind::Continuous { lo, hi },
        }
    }

    pub fn integer(name: &str, lo: i64, hi: i64) -> Self {
        Self {
            name: name.to_owned(),
            kind: VarKind::Integer { lo, hi },
        }
    }

    pub fn categorical<I, S>(name: &str, levels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            name: name.to_owned(),
            kind: VarKind::Categorical {
                levels: levels.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, VarKind::Categorical { .. })
    }

    fn check(&self) -> Result<(), DomainError> {
        let bad = |reason: &str| DomainError::BadVariable {
            name: self.name.clone(),
            reason: reason.to_owned(),
        };
        match &self.kind {
            VarKind::Continuous { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) {
                    return Err(bad("bounds must be finite"));
                }
                if lo >= hi {
                    return Err(bad("continuous bounds need lo < hi"));
                }
            }
            VarKind::Integer { lo, hi } => {
                if lo > hi {
                    return Err(bad("integer bounds need lo <= hi"));
                }
            }
            VarKind::Categorical { levels } => {
                if levels.is_empty() {
                    return Err(bad("at least one level required"));
                }
                let distinct: HashSet<&String> = levels.iter().collect();
                if distinct.len() != levels.len() {
                    return Err(bad("levels must be distinct"));
                }
            }
        }
        Ok(())
    }
}

/// A single coordinate of a [`Point`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Real(f64),
    Level(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(x) => f.write_str(&crate::format::float(*x)),
            Value::Int(k) => write!(f, "{k}"),
            Value::Level(s) => f.write_str(s),
        }
    }
}

/// A candidate assignment, aligned with the variable order of its space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub values: Vec<Value>,
}

impl Point {
    pub fn new(values: Vec<Value>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Encoded coordinates; see the module docs for the channel layout.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPoint {
    pub coords: Vec<f64>,
}

/// One violated bound or level, as reported by [`SearchSpace::validate_point`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub variable: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Violations(pub Vec<Violation>);

impl Violations {
    pub fn is_valid(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", v.variable, v.message)?;
        }
        Ok(())
    }
}

/// Ordered list of variables defining the tuning domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SearchSpace {
    variables: Vec<VariableSpec>,
}

impl<'de> Deserialize<'de> for SearchSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let variables = Vec::<VariableSpec>::deserialize(d)?;
        SearchSpace::new(variables).map_err(serde::de::Error::custom)
    }
}

impl SearchSpace {
    pub fn new(variables: Vec<VariableSpec>) -> Result<Self, DomainError> {
        if variables.is_empty() {
            return Err(DomainError::Empty);
        }
        let mut names = HashSet::new();
        for v in &variables {
            v.check()?;
            if !names.insert(v.name.as_str()) {
                return Err(DomainError::DuplicateName(v.name.clone()));
            }
        }
        Ok(Self { variables })
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Indices of continuous and integer channels.
    pub fn numeric_channels(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| !self.variables[i].is_categorical())
            .collect()
    }

    pub fn continuous_channels(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| matches!(self.variables[i].kind, VarKind::Continuous { .. }))
            .collect()
    }

    pub fn validate_point(&self, p: &Point) -> Result<Violations, DomainError> {
        if p.len() != self.dim() {
            return Err(DomainError::Arity {
                expected: self.dim(),
                got: p.len(),
            });
        }
        let mut out = Vec::new();
        for (spec, value) in self.variables.iter().zip(&p.values) {
            let msg = match (&spec.kind, value) {
                (VarKind::Continuous { lo, hi }, Value::Real(x)) => {
                    if x.is_nan() {
                        Some("value is NaN".to_owned())
                    } else if x < lo {
                        Some(format!("{x} below lo {lo}"))
                    } else if x > hi {
                        Some(format!("{x} above hi {hi}"))
                    } else {
                        None
                    }
                }
                (VarKind::Integer { lo, hi }, Value::Int(k)) => {
                    if k < lo {
                        Some(format!("{k} below lo {lo}"))
                    } else if k > hi {
                        Some(format!("{k} above hi {hi}"))
                    } else {
                        None
                    }
                }
                (VarKind::Categorical { levels }, Value::Level(s)) => {
                    if levels.contains(s) {
                        None
                    } else {
                        Some(format!("unknown level {s:?}"))
                    }
                }
                (_, other) => Some(format!("value {other} has the wrong type")),
            };
            if let Some(message) = msg {
                out.push(Violation {
                    variable: spec.name.clone(),
                    message,
                });
            }
        }
        Ok(Violations(out))
    }

    fn ensure_valid(&self, p: &Point) -> Result<(), DomainError> {
        let v = self.validate_point(p)?;
        if v.is_valid() {
            Ok(())
        } else {
            Err(DomainError::Invalid(v))
        }
    }

    pub fn encode(&self, p: &Point) -> Result<EncodedPoint, DomainError> {
        self.ensure_valid(p)?;
        Ok(self.encode_unchecked(p))
    }

    /// Encodes without validation. Callers must hold a valid point.
    pub(crate) fn encode_unchecked(&self, p: &Point) -> EncodedPoint {
        let coords = self
            .variables
            .iter()
            .zip(&p.values)
            .map(|(spec, value)| match (&spec.kind, value) {
                (VarKind::Continuous { lo, hi }, Value::Real(x)) => (x - lo) / (hi - lo),
                (VarKind::Integer { lo, hi }, Value::Int(k)) => {
                    if hi > lo {
                        (k - lo) as f64 / (hi - lo) as f64
                    } else {
                        0.0
                    }
                }
                (VarKind::Categorical { levels }, Value::Level(s)) => {
                    levels.iter().position(|l| l == s).unwrap_or(0) as f64
                }
                _ => f64::NAN,
            })
            .collect();
        EncodedPoint { coords }
    }

    /// Snaps any encoded vector to a valid point. Panics on arity mismatch.
    pub fn decode(&self, e: &EncodedPoint) -> Point {
        self.decode_coords(&e.coords)
    }

    pub fn decode_coords(&self, coords: &[f64]) -> Point {
        assert_eq!(coords.len(), self.dim(), "encoded arity mismatch");
        let values = self
            .variables
            .iter()
            .zip(coords)
            .map(|(spec, &c)| match &spec.kind {
                VarKind::Continuous { lo, hi } => {
                    let c = if c.is_nan() { 0.0 } else { c };
                    Value::Real((lo + c * (hi - lo)).clamp(*lo, *hi))
                }
                VarKind::Integer { lo, hi } => {
                    let c = if c.is_nan() { 0.0 } else { c };
                    let raw = *lo as f64 + c * (hi - lo) as f64;
                    let k = round_half_up(raw).clamp(*lo as f64, *hi as f64);
                    Value::Int(k as i64)
                }
                VarKind::Categorical { levels } => {
                    let c = if c.is_nan() { 0.0 } else { c };
                    let idx = round_half_up(c).clamp(0.0, (levels.len() - 1) as f64);
                    Value::Level(levels[idx as usize].clone())
                }
            })
            .collect();
        Point { values }
    }

    /// Maps a vector in the unit cube to a point. Numeric channels behave like
    /// [`decode`](Self::decode); a categorical channel `u` selects level
    /// `floor(u * L)` so that every level owns an equal slice of `[0, 1]`.
    pub fn point_from_unit(&self, u: &[f64]) -> Point {
        let coords: Vec<f64> = self
            .variables
            .iter()
            .zip(u)
            .map(|(spec, &c)| match &spec.kind {
                VarKind::Categorical { levels } => {
                    let l = levels.len() as f64;
                    (c.clamp(0.0, 1.0) * l).floor().min(l - 1.0)
                }
                _ => c,
            })
            .collect();
        self.decode_coords(&coords)
    }

    /// Inverse of [`point_from_unit`](Self::point_from_unit): categorical
    /// levels map to the middle of their slice.
    pub fn unit_from_point(&self, p: &Point) -> Vec<f64> {
        let e = self.encode_unchecked(p);
        self.variables
            .iter()
            .zip(e.coords)
            .map(|(spec, c)| match &spec.kind {
                VarKind::Categorical { levels } => (c + 0.5) / levels.len() as f64,
                _ => c,
            })
            .collect()
    }

    pub fn distance(&self, a: &Point, b: &Point) -> Result<f64, DomainError> {
        let ea = self.encode(a)?;
        let eb = self.encode(b)?;
        Ok(self.encoded_distance(&ea.coords, &eb.coords))
    }

    /// Mixed metric on encoded coordinates: Euclidean over numeric channels
    /// plus a unit mismatch indicator per categorical channel.
    pub fn encoded_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.variables
            .iter()
            .zip(a.iter().zip(b))
            .map(|(spec, (x, y))| {
                if spec.is_categorical() {
                    if x == y {
                        0.0
                    } else {
                        1.0
                    }
                } else {
                    (x - y) * (x - y)
                }
            })
            .sum::<f64>()
            .sqrt()
    }
}

pub(crate) fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mixed() -> SearchSpace {
        SearchSpace::new(vec![
            VariableSpec::continuous("x", -5.0, 5.0),
            VariableSpec::integer("k", 1, 31),
            VariableSpec::categorical("c", ["a", "b", "c"]),
        ])
        .unwrap()
    }

    #[test]
    fn config_json_round_trip() {
        let json = r#"[
            {"name": "lr", "type": "continuous", "bounds": [0.001, 0.5]},
            {"name": "depth", "type": "integer", "bounds": [1, 12]},
            {"name": "kind", "type": "categorical", "levels": ["a", "b"]}
        ]"#;
        let space: SearchSpace = serde_json::from_str(json).unwrap();
        assert_eq!(space.variables()[1], VariableSpec::integer("depth", 1, 12));
        let back = serde_json::to_string(&space).unwrap();
        assert_eq!(serde_json::from_str::<SearchSpace>(&back).unwrap(), space);
        let bad = r#"[{"name": "x", "type": "continuous", "bounds": [2.0, 1.0]}]"#;
        assert!(serde_json::from_str::<SearchSpace>(bad).is_err());
    }

    #[test]
    fn rejects_bad_spaces() {
        assert_eq!(SearchSpace::new(vec![]), Err(DomainError::Empty));
        assert!(SearchSpace::new(vec![VariableSpec::continuous("x", 1.0, 1.0)]).is_err());
        assert!(SearchSpace::new(vec![VariableSpec::integer("k", 2, 2)]).is_ok());
        assert!(SearchSpace::new(vec![VariableSpec::integer("k", 3, 2)]).is_err());
        assert!(SearchSpace::new(vec![VariableSpec::categorical("c", ["a", "a"])]).is_err());
        assert!(SearchSpace::new(vec![VariableSpec::categorical("c", Vec::<String>::new())]).is_err());
        let dup = SearchSpace::new(vec![
            VariableSpec::continuous("x", 0.0, 1.0),
            VariableSpec::integer("x", 0, 1),
        ]);
        assert_eq!(dup, Err(DomainError::DuplicateName("x".into())));
    }

    #[test]
    fn validate_examples() {
        let s = SearchSpace::new(vec![VariableSpec::continuous("x", 0.0, 1.0)]).unwrap();
        assert!(s.validate_point(&Point::new(vec![Value::Real(0.5)])).unwrap().is_valid());

        let s = SearchSpace::new(vec![VariableSpec::integer("k", 1, 31)]).unwrap();
        let v = s.validate_point(&Point::new(vec![Value::Int(0)])).unwrap();
        assert_eq!(v.0.len(), 1);
        assert_eq!(v.0[0].variable, "k");
        assert!(v.0[0].message.contains("below lo"));

        let s = SearchSpace::new(vec![VariableSpec::categorical("w", ["uniform", "inverse"])]).unwrap();
        let v = s
            .validate_point(&Point::new(vec![Value::Level("linear".into())]))
            .unwrap();
        assert!(v.0[0].message.contains("unknown level"));
    }

    #[test]
    fn validate_lists_every_violation_and_arity_is_an_error() {
        let s = mixed();
        let p = Point::new(vec![Value::Real(9.0), Value::Int(40), Value::Level("z".into())]);
        assert_eq!(s.validate_point(&p).unwrap().0.len(), 3);
        let short = Point::new(vec![Value::Real(0.0)]);
        assert_eq!(
            s.validate_point(&short),
            Err(DomainError::Arity { expected: 3, got: 1 })
        );
        let wrong_type = Point::new(vec![Value::Int(0), Value::Int(1), Value::Level("a".into())]);
        assert_eq!(s.validate_point(&wrong_type).unwrap().0.len(), 1);
    }

    #[test]
    fn encode_examples() {
        let s = mixed();
        let p = Point::new(vec![Value::Real(0.0), Value::Int(1), Value::Level("b".into())]);
        assert_eq!(s.encode(&p).unwrap().coords, vec![0.5, 0.0, 1.0]);
        let degenerate = SearchSpace::new(vec![VariableSpec::integer("k", 4, 4)]).unwrap();
        let e = degenerate.encode(&Point::new(vec![Value::Int(4)])).unwrap();
        assert_eq!(e.coords, vec![0.0]);
        assert_eq!(degenerate.decode(&e), Point::new(vec![Value::Int(4)]));
        assert!(s.encode(&Point::new(vec![Value::Real(0.0)])).is_err());
    }

    #[test]
    fn decode_snaps() {
        let s = mixed();
        let p = s.decode_coords(&[1.7, 0.5 / 30.0, 7.2]);
        assert_eq!(p.values[0], Value::Real(5.0));
        // 1 + 0.5 rounds half up
        assert_eq!(p.values[1], Value::Int(2));
        assert_eq!(p.values[2], Value::Level("c".into()));
        let p = s.decode_coords(&[-0.3, -1.0, -2.0]);
        assert_eq!(p.values, vec![Value::Real(-5.0), Value::Int(1), Value::Level("a".into())]);
    }

    #[test]
    fn distance_examples() {
        let s = SearchSpace::new(vec![
            VariableSpec::continuous("a", 0.0, 1.0),
            VariableSpec::continuous("b", 0.0, 10.0),
        ])
        .unwrap();
        let p = Point::new(vec![Value::Real(0.1), Value::Real(2.0)]);
        let q = Point::new(vec![Value::Real(0.4), Value::Real(6.0)]);
        assert!((s.distance(&p, &q).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(s.distance(&p, &p).unwrap(), 0.0);

        let s = SearchSpace::new(vec![
            VariableSpec::continuous("x", 0.0, 1.0),
            VariableSpec::categorical("c", ["a", "b"]),
        ])
        .unwrap();
        let p = Point::new(vec![Value::Real(0.3), Value::Level("a".into())]);
        let q = Point::new(vec![Value::Real(0.3), Value::Level("b".into())]);
        assert_eq!(s.distance(&p, &q).unwrap(), 1.0);
    }

    #[test]
    fn unit_cube_mapping_round_trips_levels() {
        let s = mixed();
        for lvl in ["a", "b", "c"] {
            let p = Point::new(vec![Value::Real(1.0), Value::Int(7), Value::Level(lvl.into())]);
            assert_eq!(s.point_from_unit(&s.unit_from_point(&p)), p);
        }
        assert_eq!(s.point_from_unit(&[0.0, 0.0, 1.0]).values[2], Value::Level("c".into()));
    }

    fn arb_point() -> impl Strategy<Value = Point> {
        (-5.0f64..=5.0, 1i64..=31, 0usize..3).prop_map(|(x, k, c)| {
            Point::new(vec![
                Value::Real(x),
                Value::Int(k),
                Value::Level(["a", "b", "c"][c].to_owned()),
            ])
        })
    }

    proptest! {
        #[test]
        fn decode_encode_identity(p in arb_point()) {
            let s = mixed();
            let back = s.decode(&s.encode(&p).unwrap());
            match (&back.values[0], &p.values[0]) {
                (Value::Real(a), Value::Real(b)) => prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0)),
                _ => prop_assert!(false),
            }
            prop_assert_eq!(&back.values[1..], &p.values[1..]);
        }

        #[test]
        fn distance_is_a_metric(a in arb_point(), b in arb_point(), c in arb_point()) {
            let s = mixed();
            let ab = s.distance(&a, &b).unwrap();
            let ba = s.distance(&b, &a).unwrap();
            let bc = s.distance(&b, &c).unwrap();
            let ac = s.distance(&a, &c).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn bounds_encode_to_unit_interval(lo in -100i64..100, span in 1i64..50) {
            let s = SearchSpace::new(vec![
                VariableSpec::integer("k", lo, lo + span),
                VariableSpec::continuous("x", lo as f64, (lo + span) as f64),
            ]).unwrap();
            let low = Point::new(vec![Value::Int(lo), Value::Real(lo as f64)]);
            let high = Point::new(vec![Value::Int(lo + span), Value::Real((lo + span) as f64)]);
            prop_assert_eq!(s.encode(&low).unwrap().coords, vec![0.0, 0.0]);
            prop_assert_eq!(s.encode(&high).unwrap().coords, vec![1.0, 1.0]);
        }
    }
}
