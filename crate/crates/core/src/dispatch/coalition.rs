//! Bidder subsets and memoized coalition values `J(B_S)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;

use super::{solve_dispatch, DispatchOptions, DispatchProblem};
use crate::error::{Error, Result};
use crate::market::MarketInstance;

/// Largest bidder count a [`Coalition`] can index.
pub const MAX_BIDDERS: usize = 64;

/// A set of bidder indices, stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Coalition(u64);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_BIDDERS, "at most {MAX_BIDDERS} bidders");
        if n == 64 {
            Coalition(u64::MAX)
        } else {
            Coalition((1u64 << n) - 1)
        }
    }

    pub fn from_bits(bits: u64) -> Self {
        Coalition(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn singleton(l: usize) -> Self {
        Coalition(1 << l)
    }

    pub fn from_members(members: impl IntoIterator<Item = usize>) -> Self {
        members.into_iter().fold(Self::EMPTY, Self::with)
    }

    pub fn contains(self, l: usize) -> bool {
        l < 64 && self.0 & (1 << l) != 0
    }

    pub fn with(self, l: usize) -> Self {
        Coalition(self.0 | (1 << l))
    }

    pub fn without(self, l: usize) -> Self {
        Coalition(self.0 & !(1 << l))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: Coalition) -> Self {
        Coalition(self.0 | other.0)
    }

    pub fn difference(self, other: Coalition) -> Self {
        Coalition(self.0 & !other.0)
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&l| self.0 & (1 << l) != 0)
    }

    /// Every subset of `self`, starting from the empty set and ending with
    /// `self`, in increasing bitmask order.
    pub fn subsets(self) -> impl Iterator<Item = Coalition> {
        let full = self.0;
        let mut next = Some(0u64);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full {
                None
            } else {
                Some((cur.wrapping_sub(full)) & full)
            };
            Some(Coalition(cur))
        })
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members()).finish()
    }
}

/// Coalition values of one instance, computed on demand and cached.
///
/// Batches are solved in parallel; each solve is deterministic, so results
/// do not depend on the schedule.
pub struct CoalitionValues<'a> {
    instance: &'a MarketInstance,
    options: DispatchOptions,
    memo: Mutex<HashMap<Coalition, f64>>,
    solves: AtomicUsize,
}

impl<'a> CoalitionValues<'a> {
    pub fn new(instance: &'a MarketInstance) -> Self {
        Self::with_options(instance, DispatchOptions::default())
    }

    pub fn with_options(instance: &'a MarketInstance, options: DispatchOptions) -> Self {
        Self {
            instance,
            options,
            memo: Mutex::new(HashMap::new()),
            solves: AtomicUsize::new(0),
        }
    }

    pub fn instance(&self) -> &'a MarketInstance {
        self.instance
    }

    /// Number of dispatch problems solved so far.
    pub fn solves(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    /// Seeds the cache with a value computed elsewhere.
    pub fn insert(&self, s: Coalition, value: f64) {
        self.memo.lock().expect("memo lock").insert(s, value);
    }

    fn compute(&self, s: Coalition) -> Result<f64> {
        self.solves.fetch_add(1, Ordering::Relaxed);
        let problem = DispatchProblem::restricted(self.instance, s).with_options(self.options.clone());
        Ok(solve_dispatch(&problem)?.objective)
    }

    pub fn value(&self, s: Coalition) -> Result<f64> {
        if let Some(&v) = self.memo.lock().expect("memo lock").get(&s) {
            return Ok(v);
        }
        let v = self.compute(s)?;
        self.insert(s, v);
        Ok(v)
    }

    /// Values of `subsets`, in order; `+∞` marks an infeasible coalition.
    pub fn values(&self, subsets: &[Coalition]) -> Result<Vec<f64>> {
        let missing: Vec<Coalition> = {
            let memo = self.memo.lock().expect("memo lock");
            let mut m: Vec<Coalition> = subsets.iter().copied().filter(|s| !memo.contains_key(s)).collect();
            m.sort_unstable();
            m.dedup();
            m
        };
        let solved: Vec<(Coalition, f64)> = missing
            .par_iter()
            .map(|&s| self.compute(s).map(|v| (s, v)))
            .collect::<Result<_>>()?;
        let mut memo = self.memo.lock().expect("memo lock");
        memo.extend(solved);
        Ok(subsets.iter().map(|s| memo[s]).collect())
    }
}

/// Evaluates `J(B_S)` for every listed coalition.
pub fn coalition_values(
    instance: &MarketInstance,
    subsets: &[Coalition],
) -> Result<BTreeMap<Coalition, f64>> {
    if instance.num_bidders() > MAX_BIDDERS {
        return Err(Error::InvalidArgument(format!(
            "coalitions are limited to {MAX_BIDDERS} bidders"
        )));
    }
    let cache = CoalitionValues::new(instance);
    let values = cache.values(subsets)?;
    Ok(subsets.iter().copied().zip(values).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_enumeration() {
        let s = Coalition::from_members([0, 2, 3]);
        let subs: Vec<Coalition> = s.subsets().collect();
        assert_eq!(subs.len(), 8);
        assert_eq!(subs[0], Coalition::EMPTY);
        assert_eq!(*subs.last().unwrap(), s);
        assert!(subs.iter().all(|t| t.is_subset_of(s)));
        assert_eq!(Coalition::EMPTY.subsets().count(), 1);
    }

    #[test]
    fn set_operations() {
        let s = Coalition::full(4).without(1);
        assert_eq!(s.members().collect::<Vec<_>>(), vec![0, 2, 3]);
        assert_eq!(s.len(), 3);
        assert!(s.contains(3) && !s.contains(1));
        assert_eq!(format!("{s:?}"), "{0, 2, 3}");
        assert_eq!(Coalition::full(64).len(), 64);
    }
}
