use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coalition::{Coalition, PlayerUniverse};
use crate::error::{Error, Result};

/// Observed `(coalition, value)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct PerformanceDataset {
    universe: PlayerUniverse,
    rows: Vec<(Coalition, f64)>,
}

impl PerformanceDataset {
    pub fn new(universe: PlayerUniverse, rows: Vec<(Coalition, f64)>) -> Result<Self> {
        for &(c, v) in &rows {
            universe.check(c)?;
            if !v.is_finite() {
                return Err(Error::domain(format!("value for {c} is not finite")));
            }
        }
        Ok(PerformanceDataset { universe, rows })
    }

    pub fn universe(&self) -> &PlayerUniverse {
        &self.universe
    }

    pub fn rows(&self) -> &[(Coalition, f64)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Seeded random partition by `fractions`; see [`split_indices`].
    pub fn split(&self, fractions: &[f64], seed: u64) -> Result<Vec<PerformanceDataset>> {
        Ok(split_indices(self.rows.len(), fractions, seed)?
            .into_iter()
            .map(|idx| PerformanceDataset {
                universe: self.universe.clone(),
                rows: idx.into_iter().map(|i| self.rows[i]).collect(),
            })
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Matchup {
    pub team_a: Coalition,
    pub team_b: Coalition,
    pub a_won: bool,
}

/// Head-to-head results between disjoint, non-empty teams.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchupDataset {
    universe: PlayerUniverse,
    rows: Vec<Matchup>,
}

impl MatchupDataset {
    pub fn new(universe: PlayerUniverse, rows: Vec<Matchup>) -> Result<Self> {
        for (i, m) in rows.iter().enumerate() {
            check_teams(&universe, m.team_a, m.team_b).map_err(|e| Error::domain(format!("matchup {i}: {e}")))?;
        }
        Ok(MatchupDataset { universe, rows })
    }

    pub fn universe(&self) -> &PlayerUniverse {
        &self.universe
    }

    pub fn rows(&self) -> &[Matchup] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn split(&self, fractions: &[f64], seed: u64) -> Result<Vec<MatchupDataset>> {
        Ok(split_indices(self.rows.len(), fractions, seed)?
            .into_iter()
            .map(|idx| MatchupDataset {
                universe: self.universe.clone(),
                rows: idx.into_iter().map(|i| self.rows[i]).collect(),
            })
            .collect())
    }
}

pub(crate) fn check_teams(universe: &PlayerUniverse, a: Coalition, b: Coalition) -> Result<()> {
    universe.check(a)?;
    universe.check(b)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("teams must be non-empty"));
    }
    if !a.is_disjoint(b) {
        return Err(Error::domain(format!("teams {a} and {b} overlap")));
    }
    Ok(())
}

/// Shuffles `0..len` with a seeded stream and cuts it into consecutive parts
/// of `floor(f * len)` items; the last part takes the remainder.
///
/// Fractions must be non-negative and sum to one.
pub fn split_indices(len: usize, fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    if fractions.is_empty() || fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
        return Err(Error::domain("split fractions must lie in [0, 1]"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("split fractions sum to {total}, expected 1")));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts = Vec::with_capacity(fractions.len());
    let mut start = 0;
    for (j, &f) in fractions.iter().enumerate() {
        let end = if j + 1 == fractions.len() {
            len
        } else {
            (start + (f * len as f64).floor() as usize).min(len)
        };
        parts.push(order[start..end].to_vec());
        start = end;
    }
    Ok(parts)
}
