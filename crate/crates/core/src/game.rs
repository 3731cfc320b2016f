//! Exact games, order-k interaction models and allocations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::coalition::{canonical_coalitions, Coalition, PlayerUniverse, DENSE_LIMIT};
use crate::error::{guard, Error, Result};

/// Anything that assigns a value to every coalition of a universe.
pub trait CharacteristicFunction {
    fn universe(&self) -> &PlayerUniverse;

    /// Value of `c`. The caller guarantees `c` belongs to the universe.
    fn value(&self, c: Coalition) -> f64;

    fn players(&self) -> usize {
        self.universe().len()
    }
}

/// Dense characteristic function over all `2^n` coalitions, indexed by mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Game {
    universe: PlayerUniverse,
    values: Vec<f64>,
}

impl Game {
    pub fn new(universe: PlayerUniverse, values: Vec<f64>) -> Result<Self> {
        guard("dense game size n", universe.len(), DENSE_LIMIT)?;
        let expected = 1usize << universe.len();
        if values.len() != expected {
            return Err(Error::domain(format!(
                "game table has {} entries, expected 2^{} = {expected}",
                values.len(),
                universe.len()
            )));
        }
        Ok(Game { universe, values })
    }

    pub fn from_fn(universe: PlayerUniverse, mut f: impl FnMut(Coalition) -> f64) -> Result<Self> {
        guard("dense game size n", universe.len(), DENSE_LIMIT)?;
        let values = (0..1u64 << universe.len()).map(|m| f(Coalition::from_mask(m))).collect();
        Ok(Game { universe, values })
    }

    /// Materializes any characteristic function.
    pub fn tabulate<F: CharacteristicFunction + ?Sized>(f: &F) -> Result<Self> {
        Game::from_fn(f.universe().clone(), |c| f.value(c))
    }

    /// Evaluates a model on every coalition with a zeta transform.
    pub fn from_model(model: &CgaModel) -> Result<Self> {
        let n = model.universe.len();
        guard("dense game size n", n, DENSE_LIMIT)?;
        let mut table = vec![0.0; 1 << n];
        for &(s, w) in &model.weights {
            table[s.mask() as usize] += w;
        }
        zeta_in_place(&mut table, n);
        Ok(Game {
            universe: model.universe.clone(),
            values: table,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, c: Coalition) -> f64 {
        self.values[c.mask() as usize]
    }

    pub fn empty_value(&self) -> f64 {
        self.values[0]
    }

    pub fn grand_value(&self) -> f64 {
        *self.values.last().expect("non-empty table")
    }

    /// `alpha * self + beta * other` on a shared universe.
    pub fn combine(&self, alpha: f64, other: &Game, beta: f64) -> Result<Game> {
        same_universe(&self.universe, &other.universe)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Ok(Game {
            universe: self.universe.clone(),
            values,
        })
    }

    /// Relabels players: player `i` of `self` becomes player `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Game> {
        let n = self.universe.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::domain("not a permutation of the players"));
        }
        let mut values = vec![0.0; self.values.len()];
        for (m, &v) in self.values.iter().enumerate() {
            let image = Coalition::from_indices(Coalition::from_mask(m as u64).members().map(|i| perm[i]));
            values[image.mask() as usize] = v;
        }
        let mut ids = vec![String::new(); n];
        for (i, &p) in perm.iter().enumerate() {
            ids[p] = self.universe.id(i).to_owned();
        }
        Game::new(PlayerUniverse::new(ids)?, values)
    }
}

impl CharacteristicFunction for Game {
    fn universe(&self) -> &PlayerUniverse {
        &self.universe
    }

    fn value(&self, c: Coalition) -> f64 {
        self.values[c.mask() as usize]
    }
}

/// Sparse order-k interaction model: `v(C) = sum of w_S over S ⊆ C, 1 <= |S| <= k`.
///
/// Weights are kept in canonical size-then-mask order; absent keys are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct CgaModel {
    universe: PlayerUniverse,
    order: usize,
    weights: Vec<(Coalition, f64)>,
}

impl CgaModel {
    pub fn new<I>(universe: PlayerUniverse, order: usize, weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Coalition, f64)>,
    {
        if order == 0 {
            return Err(Error::domain("model order must be at least 1"));
        }
        let n = universe.len();
        let mut weights: Vec<(Coalition, f64)> = weights.into_iter().collect();
        for &(s, w) in &weights {
            universe.check(s)?;
            if s.is_empty() || s.size() > order {
                return Err(Error::domain(format!(
                    "weight key {s} has size {}, allowed 1..={order}",
                    s.size()
                )));
            }
            if !w.is_finite() {
                return Err(Error::domain(format!("weight for {s} is not finite")));
            }
        }
        weights.sort_by_key(|(s, _)| s.canonical_key());
        if weights.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::domain("duplicate weight key"));
        }
        Ok(CgaModel {
            universe,
            order: order.min(n.max(1)),
            weights,
        })
    }

    pub fn universe(&self) -> &PlayerUniverse {
        &self.universe
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Stored weights in canonical order.
    pub fn weights(&self) -> &[(Coalition, f64)] {
        &self.weights
    }

    pub fn weight(&self, s: Coalition) -> f64 {
        self.weights
            .binary_search_by_key(&s.canonical_key(), |(k, _)| k.canonical_key())
            .map(|i| self.weights[i].1)
            .unwrap_or(0.0)
    }

    /// Sum of the stored weights whose key is a subset of `c`.
    pub fn eval(&self, c: Coalition) -> Result<f64> {
        self.universe.check(c)?;
        Ok(self.value_unchecked(c))
    }

    fn value_unchecked(&self, c: Coalition) -> f64 {
        self.weights
            .iter()
            .filter(|(s, _)| s.is_subset_of(c))
            .map(|(_, w)| w)
            .sum()
    }

    /// Drops every weight of size greater than `k`.
    pub fn truncate(&self, k: usize) -> Result<CgaModel> {
        if k == 0 {
            return Err(Error::domain("truncation order must be at least 1"));
        }
        Ok(CgaModel {
            universe: self.universe.clone(),
            order: k.min(self.order),
            weights: self.weights.iter().copied().filter(|(s, _)| s.size() <= k).collect(),
        })
    }

    /// Same weights on a different universe of equal size.
    pub fn with_universe(self, universe: PlayerUniverse) -> Result<CgaModel> {
        if universe.len() != self.universe.len() {
            return Err(Error::domain("replacement universe has a different size"));
        }
        Ok(CgaModel { universe, ..self })
    }

    /// The same model over `target`, which must list the same ids in any order.
    pub fn reindexed(&self, target: &PlayerUniverse) -> Result<CgaModel> {
        if target.len() != self.universe.len() {
            return Err(Error::domain("target universe has a different size"));
        }
        let map: Vec<usize> = self
            .universe
            .ids()
            .iter()
            .map(|id| target.index_of(id).ok_or_else(|| Error::domain(format!("player {id:?} missing from target universe"))))
            .collect::<Result<_>>()?;
        let weights = self
            .weights
            .iter()
            .map(|&(s, w)| (Coalition::from_indices(s.members().map(|i| map[i])), w));
        CgaModel::new(target.clone(), self.order, weights)
    }

    pub fn map_weights(&self, mut f: impl FnMut(Coalition, f64) -> f64) -> CgaModel {
        CgaModel {
            universe: self.universe.clone(),
            order: self.order,
            weights: self.weights.iter().map(|&(s, w)| (s, f(s, w))).collect(),
        }
    }
}

impl CharacteristicFunction for CgaModel {
    fn universe(&self) -> &PlayerUniverse {
        &self.universe
    }

    fn value(&self, c: Coalition) -> f64 {
        self.value_unchecked(c)
    }
}

/// Per-player payoff vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    #[serde(rename = "players")]
    universe: PlayerUniverse,
    payoffs: Vec<f64>,
}

impl Allocation {
    pub fn new(universe: PlayerUniverse, payoffs: Vec<f64>) -> Result<Self> {
        if payoffs.len() != universe.len() {
            return Err(Error::domain(format!(
                "allocation has {} payoffs for {} players",
                payoffs.len(),
                universe.len()
            )));
        }
        Ok(Allocation { universe, payoffs })
    }

    pub fn universe(&self) -> &PlayerUniverse {
        &self.universe
    }

    pub fn payoffs(&self) -> &[f64] {
        &self.payoffs
    }

    pub fn total(&self) -> f64 {
        self.payoffs.iter().sum()
    }

    /// `sum_{i in C} x_i`.
    pub fn coalition_total(&self, c: Coalition) -> f64 {
        c.members().map(|i| self.payoffs[i]).sum()
    }
}

impl std::ops::Index<usize> for Allocation {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.payoffs[i]
    }
}

pub(crate) fn same_universe(a: &PlayerUniverse, b: &PlayerUniverse) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::domain("operands are defined over different player universes"))
    }
}

/// In place `t[C] <- sum_{S ⊆ C} t[S]`.
pub(crate) fn zeta_in_place(table: &mut [f64], n: usize) {
    for bit in 0..n {
        let step = 1usize << bit;
        for m in 0..table.len() {
            if m & step != 0 {
                table[m] += table[m ^ step];
            }
        }
    }
}

/// In place inverse of [`zeta_in_place`].
pub(crate) fn moebius_in_place(table: &mut [f64], n: usize) {
    for bit in 0..n {
        let step = 1usize << bit;
        for m in 0..table.len() {
            if m & step != 0 {
                table[m] -= table[m ^ step];
            }
        }
    }
}

/// Full-order interaction weights of a game.
///
/// The decomposition is taken of `v - v(∅)`, so the model reproduces
/// `v(C) - v(∅)` on every coalition and evaluates `∅` to zero.
pub fn weights_from_game(g: &Game) -> CgaModel {
    let n = g.universe.len();
    let base = g.empty_value();
    let mut table: Vec<f64> = g.values.iter().map(|v| v - base).collect();
    table[0] = 0.0;
    moebius_in_place(&mut table, n);
    let mut weights: Vec<(Coalition, f64)> = table
        .into_iter()
        .enumerate()
        .skip(1)
        .filter(|&(_, w)| w != 0.0)
        .map(|(m, w)| (Coalition::from_mask(m as u64), w))
        .collect();
    weights.sort_by_key(|(s, _)| s.canonical_key());
    CgaModel {
        universe: g.universe.clone(),
        order: n,
        weights,
    }
}

/// Random order-`k` model with i.i.d. `N(0, scale^2)` weights for every
/// `S` with `1 <= |S| <= k`, drawn in canonical order from a seeded stream.
pub fn random_cga(n: usize, k: usize, seed: u64, weight_scale: f64) -> Result<CgaModel> {
    if k == 0 || k > n {
        return Err(Error::domain(format!("random model needs 1 <= k <= n, got k={k}, n={n}")));
    }
    guard("random model size n", n, DENSE_LIMIT)?;
    if !(weight_scale >= 0.0 && weight_scale.is_finite()) {
        return Err(Error::domain("weight scale must be finite and non-negative"));
    }
    let normal = Normal::new(0.0, weight_scale).map_err(|e| Error::domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = canonical_coalitions(n, k)
        .into_iter()
        .map(|s| (s, normal.sample(&mut rng)))
        .collect();
    Ok(CgaModel {
        universe: PlayerUniverse::numbered(n)?,
        order: k,
        weights,
    })
}
