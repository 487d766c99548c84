//! Deduplicating store of evaluated points.
//!
//! Points are keyed by their encoded coordinates rounded to 12 decimal digits.
//! The first record inserted for a key wins.
use crate::domain::{Point, SearchSpace};
use crate::trial::TrialRecord;
use std::collections::BTreeMap;
use std::sync::Mutex;

/// Canonical key: encoded coordinates scaled by 1e12 and rounded.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CacheKey(Vec<i64>);

impl CacheKey {
    pub fn of(space: &SearchSpace, p: &Point) -> Self {
        Self::from_coords(&space.encode_unchecked(p).coords)
    }

    pub fn from_coords(coords: &[f64]) -> Self {
        CacheKey(coords.iter().map(|c| (c * 1e12).round() as i64).collect())
    }
}

#[derive(Debug, Default)]
pub struct CacheTree {
    entries: Mutex<BTreeMap<CacheKey, TrialRecord>>,
}

impl CacheTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lookup(&self, space: &SearchSpace, p: &Point) -> Option<TrialRecord> {
        self.lookup_key(&CacheKey::of(space, p))
    }

    pub fn lookup_key(&self, key: &CacheKey) -> Option<TrialRecord> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    /// Returns `true` iff the key was new. Existing records are never replaced.
    pub fn insert(&self, space: &SearchSpace, p: &Point, rec: TrialRecord) -> bool {
        self.insert_key(CacheKey::of(space, p), rec)
    }

    pub fn insert_key(&self, key: CacheKey, rec: TrialRecord) -> bool {
        match self.entries.lock().unwrap().entry(key) {
            std::collections::btree_map::Entry::Occupied(_) => false,
            std::collections::btree_map::Entry::Vacant(slot) => {
                slot.insert(rec);
                true
            }
        }
    }

    pub fn size(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.size() == 0
    }
}
