//! Players, coalitions and the bitmask combinatorics everything else is
//! built on.
//!
//! A coalition is a little-endian bitmask: bit `i` is set iff player `i`
//! of the universe is a member. Dense tables are indexed by mask value.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard ceiling imposed by the `u64` mask.
pub const MAX_PLAYERS: usize = 64;
/// Largest universe for which a dense `2^n` table may be materialized.
pub const DENSE_LIMIT: usize = 24;
/// Largest universe accepted by brute-force Shapley and deficit scans.
pub const BRUTE_FORCE_LIMIT: usize = 20;

/// Ordered set of unique player identifiers.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct PlayerUniverse {
    ids: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PartialEq for PlayerUniverse {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
    }
}

impl Eq for PlayerUniverse {}

impl PlayerUniverse {
    pub fn new<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        if ids.is_empty() {
            return Err(Error::domain("player universe must not be empty"));
        }
        if ids.len() > MAX_PLAYERS {
            return Err(Error::capacity("player count", ids.len() as u64, MAX_PLAYERS as u64));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if id.is_empty() {
                return Err(Error::domain("player ids must be non-empty"));
            }
            if id.contains(';') || id.contains(',') {
                return Err(Error::domain(format!("player id {id:?} contains a separator")));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::domain(format!("duplicate player id {id:?}")));
            }
        }
        Ok(PlayerUniverse { ids, index })
    }

    /// Universe with ids `p0, p1, ..., p{n-1}`.
    pub fn numbered(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| format!("p{i}")))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn grand(&self) -> Coalition {
        Coalition::grand(self.len())
    }

    pub fn contains(&self, c: Coalition) -> bool {
        c.fits(self.len())
    }

    pub fn check(&self, c: Coalition) -> Result<()> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "coalition mask {:#x} does not belong to a universe of {} players",
                c.mask(),
                self.len()
            )))
        }
    }

    /// Builds a coalition from ids; duplicates and unknown ids are errors.
    pub fn coalition<'a, I>(&self, ids: I) -> Result<Coalition>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut c = Coalition::EMPTY;
        for id in ids {
            let i = self
                .index_of(id)
                .ok_or_else(|| Error::domain(format!("unknown player id {id:?}")))?;
            if c.contains(i) {
                return Err(Error::domain(format!("player {id:?} listed twice")));
            }
            c = c.with(i);
        }
        Ok(c)
    }

    /// Parses a `;`-joined id list; the empty string is the empty coalition.
    pub fn parse(&self, field: &str) -> Result<Coalition> {
        self.coalition(split_ids(field))
    }

    /// `;`-joined member ids in universe order.
    pub fn format(&self, c: Coalition) -> String {
        c.members().map(|i| self.ids[i].as_str()).collect::<Vec<_>>().join(";")
    }
}

impl TryFrom<Vec<String>> for PlayerUniverse {
    type Error = Error;

    fn try_from(ids: Vec<String>) -> Result<Self> {
        PlayerUniverse::new(ids)
    }
}

impl From<PlayerUniverse> for Vec<String> {
    fn from(u: PlayerUniverse) -> Self {
        u.ids
    }
}

/// Splits a `;`-joined id field, trimming whitespace; empty yields nothing.
pub fn split_ids(field: &str) -> impl Iterator<Item = &str> {
    field.split(';').map(str::trim).filter(|s| !s.is_empty())
}

/// Set of players encoded as a bitmask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coalition(u64);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub const fn from_mask(mask: u64) -> Self {
        Coalition(mask)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        indices.into_iter().fold(Coalition::EMPTY, Coalition::with)
    }

    /// All `n` players.
    pub const fn grand(n: usize) -> Self {
        if n >= 64 {
            Coalition(u64::MAX)
        } else {
            Coalition((1u64 << n) - 1)
        }
    }

    pub const fn mask(self) -> u64 {
        self.0
    }

    pub const fn size(self) -> usize {
        self.0.count_ones() as usize
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub const fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    #[must_use]
    pub const fn with(self, i: usize) -> Self {
        Coalition(self.0 | 1 << i)
    }

    #[must_use]
    pub const fn without(self, i: usize) -> Self {
        Coalition(self.0 & !(1 << i))
    }

    #[must_use]
    pub const fn union(self, other: Coalition) -> Self {
        Coalition(self.0 | other.0)
    }

    #[must_use]
    pub const fn intersection(self, other: Coalition) -> Self {
        Coalition(self.0 & other.0)
    }

    #[must_use]
    pub const fn difference(self, other: Coalition) -> Self {
        Coalition(self.0 & !other.0)
    }

    pub const fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    pub const fn is_disjoint(self, other: Coalition) -> bool {
        self.0 & other.0 == 0
    }

    /// True when every member index is below `n`.
    pub const fn fits(self, n: usize) -> bool {
        self.0 & !Coalition::grand(n).0 == 0
    }

    pub fn members(self) -> Members {
        Members(self.0)
    }

    /// Every subset of this coalition, including the empty set and itself.
    pub fn subsets(self) -> Subsets {
        Subsets {
            of: self.0,
            next: Some(self.0),
        }
    }

    /// Sort key for the canonical size-then-mask order.
    pub const fn canonical_key(self) -> (u32, u64) {
        (self.0.count_ones(), self.0)
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.members().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

/// Member indices in increasing order.
#[derive(Clone, Debug)]
pub struct Members(u64);

impl Iterator for Members {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(i)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Members {}

/// Submasks of a mask in decreasing mask order.
#[derive(Clone, Debug)]
pub struct Subsets {
    of: u64,
    next: Option<u64>,
}

impl Iterator for Subsets {
    type Item = Coalition;

    fn next(&mut self) -> Option<Coalition> {
        let cur = self.next?;
        self.next = if cur == 0 {
            None
        } else {
            Some((cur - 1) & self.of)
        };
        Some(Coalition(cur))
    }
}

/// All coalitions of exactly `size` players out of `n`, in increasing mask
/// order (Gosper's hack).
#[derive(Clone, Debug)]
pub struct FixedSize {
    next: Option<u64>,
    limit: u64,
}

impl FixedSize {
    pub fn new(n: usize, size: usize) -> Self {
        assert!(n <= MAX_PLAYERS);
        let next = if size > n {
            None
        } else if size == 0 {
            Some(0)
        } else {
            Some(Coalition::grand(size).0)
        };
        FixedSize {
            next,
            limit: Coalition::grand(n).0,
        }
    }
}

impl Iterator for FixedSize {
    type Item = Coalition;

    fn next(&mut self) -> Option<Coalition> {
        let cur = self.next?;
        self.next = if cur == 0 {
            None
        } else {
            let low = cur & cur.wrapping_neg();
            match cur.checked_add(low) {
                Some(ripple) => {
                    let ones = ((ripple ^ cur) >> 2) / low;
                    let nxt = ripple | ones;
                    (nxt & !self.limit == 0 && nxt != 0).then_some(nxt)
                }
                None => None,
            }
        };
        Some(Coalition(cur))
    }
}

/// Every coalition of `n` players with `1 <= |S| <= max_size`, in canonical
/// size-then-mask order.
pub fn canonical_coalitions(n: usize, max_size: usize) -> Vec<Coalition> {
    (1..=max_size.min(n)).flat_map(|s| FixedSize::new(n, s)).collect()
}

/// Number of interaction weights of order at most `k`: `sum_{j=1..k} C(n, j)`.
pub fn weight_count(n: usize, k: usize) -> u64 {
    (1..=k.min(n)).map(|j| binomial(n, j)).sum()
}

/// Exact binomial coefficient; saturates at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}
