//! Least-core deficits at a fixed allocation.
//!
//! The deficit of coalition `C` under allocation `x` is `v(C) - x(C)`. The
//! least-core value at `x` is the largest deficit; these routines compute it
//! exactly for small games, estimate it from uniformly sampled coalitions,
//! and search the efficiency hyperplane for allocations with a smaller one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coalition::{Coalition, BRUTE_FORCE_LIMIT};
use crate::error::{guard, Error, Result};
use crate::game::{same_universe, Allocation, CharacteristicFunction, Game};

/// Constant in `m = ceil(C ln(1/Delta) / delta^2)`.
pub const SAMPLE_CONSTANT: f64 = 8.0;
/// Largest game accepted by [`improve_allocation`].
pub const IMPROVE_LIMIT: usize = 12;
/// Allowed `|sum x - v(A)|` before the efficiency warning is raised.
pub const EFFICIENCY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBudget {
    pub delta: f64,
    #[serde(rename = "Delta")]
    pub confidence_failure: f64,
    pub m: u64,
}

impl SampleBudget {
    pub fn new(delta: f64, confidence_failure: f64, m: u64) -> Result<Self> {
        let unit = |p: f64| p > 0.0 && p < 1.0;
        if !unit(delta) || !unit(confidence_failure) {
            return Err(Error::domain(format!(
                "delta and Delta must lie in (0, 1), got {delta} and {confidence_failure}"
            )));
        }
        if m == 0 {
            return Err(Error::domain("sample budget must be at least 1"));
        }
        Ok(SampleBudget {
            delta,
            confidence_failure,
            m,
        })
    }

    /// Budget `m = ceil(8 ln(1/Delta) / delta^2)`.
    pub fn from_targets(delta: f64, confidence_failure: f64) -> Result<Self> {
        let m = (SAMPLE_CONSTANT * (1.0 / confidence_failure).ln() / (delta * delta)).ceil();
        SampleBudget::new(delta, confidence_failure, m.max(1.0) as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeastCoreEstimate {
    pub allocation: Allocation,
    pub e_hat: f64,
    /// Coalition attaining `e_hat`, smallest mask on ties.
    pub argmax: Coalition,
    pub samples_used: u64,
    pub seed: u64,
    /// True when the budget covered every coalition and the scan was exhaustive.
    pub exhaustive: bool,
}

/// Estimated least-core value of `x` from `budget.m` uniformly drawn coalitions.
///
/// The maximum is taken over the sample together with `∅`. Draws come from
/// one seeded stream, so a larger budget with the same seed sees a superset
/// of the coalitions and never reports a smaller value. A budget of at least
/// `2^n` switches to exhaustive enumeration.
pub fn sampled_least_core_value<F>(f: &F, x: &Allocation, budget: &SampleBudget, seed: u64) -> Result<LeastCoreEstimate>
where
    F: CharacteristicFunction + ?Sized,
{
    same_universe(f.universe(), x.universe())?;
    if budget.m == 0 {
        return Err(Error::domain("sample budget must be at least 1"));
    }
    let n = f.players();
    let grand = Coalition::grand(n).mask();
    let deficit = |c: Coalition| f.value(c) - x.coalition_total(c);

    let mut best = (deficit(Coalition::EMPTY), Coalition::EMPTY);
    let mut consider = |c: Coalition| {
        let d = deficit(c);
        if d > best.0 || (d == best.0 && c.mask() < best.1.mask()) {
            best = (d, c);
        }
    };

    let exhaustive = n < 64 && budget.m >= 1u64 << n;
    let samples_used = if exhaustive {
        for m in 0..=grand {
            consider(Coalition::from_mask(m));
        }
        grand + 1
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..budget.m {
            consider(Coalition::from_mask(rng.random::<u64>() & grand));
        }
        budget.m
    };

    Ok(LeastCoreEstimate {
        allocation: x.clone(),
        e_hat: best.0,
        argmax: best.1,
        samples_used,
        seed,
        exhaustive,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxDeficit {
    /// Raw maximum over proper non-empty coalitions; not clamped at zero.
    pub value: f64,
    pub argmax: Coalition,
    /// Set when `|sum x - v(A)| > 1e-6`.
    pub efficiency_warning: bool,
}

/// Exact maximum of `v(C) - x(C)` over proper non-empty coalitions.
pub fn exact_max_deficit(g: &Game, x: &Allocation) -> Result<MaxDeficit> {
    same_universe(g.universe(), x.universe())?;
    let n = g.players();
    guard("exact least-core size n", n, BRUTE_FORCE_LIMIT)?;
    if n < 2 {
        return Err(Error::domain("a game needs two players to have proper non-empty coalitions"));
    }
    let totals = subset_totals(x.payoffs());
    let (value, argmax) = argmax_deficit(g.values(), &totals);
    Ok(MaxDeficit {
        value,
        argmax: Coalition::from_mask(argmax as u64),
        efficiency_warning: (x.total() - g.grand_value()).abs() > EFFICIENCY_TOL,
    })
}

/// Fraction of all `2^n` coalitions whose deficit under `x` exceeds `e`.
pub fn exceedance_fraction(g: &Game, x: &Allocation, e: f64) -> Result<f64> {
    same_universe(g.universe(), x.universe())?;
    guard("exact least-core size n", g.players(), BRUTE_FORCE_LIMIT)?;
    let totals = subset_totals(x.payoffs());
    let above = g.values().iter().zip(&totals).filter(|&(v, t)| v - t > e).count();
    Ok(above as f64 / totals.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovedAllocation {
    pub allocation: Allocation,
    pub initial_deficit: f64,
    pub best_deficit: f64,
    /// Iteration at which the best iterate was found; 0 means `x0` itself.
    pub best_step: usize,
}

impl ImprovedAllocation {
    pub fn improvement(&self) -> f64 {
        self.initial_deficit - self.best_deficit
    }
}

/// Projected subgradient descent on the maximum proper deficit over the
/// hyperplane `sum x = v(A)`.
///
/// Step `t` moves by `step_size / sqrt(t + 1)` along the projected
/// subgradient of one maximizing coalition, chosen uniformly among ties with
/// the seeded stream. The best iterate is returned, `x0` included, so the
/// result is never worse than the start.
pub fn improve_allocation(g: &Game, x0: &Allocation, steps: usize, step_size: f64, seed: u64) -> Result<ImprovedAllocation> {
    let n = g.players();
    guard("subgradient search size n", n, IMPROVE_LIMIT)?;
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(Error::domain("step size must be positive and finite"));
    }
    let initial = exact_max_deficit(g, x0)?.value;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut x = x0.payoffs().to_vec();
    let shift = (g.grand_value() - x.iter().sum::<f64>()) / n as f64;
    x.iter_mut().for_each(|xi| *xi += shift);

    let mut best = (initial, x0.payoffs().to_vec(), 0);
    let mut ties = Vec::new();
    for t in 0..=steps {
        let totals = subset_totals(&x);
        let (value, _) = argmax_deficit(g.values(), &totals);
        if value < best.0 {
            best = (value, x.clone(), t + 1);
        }
        if t == steps {
            break;
        }
        ties.clear();
        let tol = 1e-12 * (1.0 + value.abs());
        ties.extend(proper(g.values().len()).filter(|&m| g.values()[m] - totals[m] >= value - tol));
        let c = Coalition::from_mask(ties[rng.random_range(0..ties.len())] as u64);
        // Raising x on C lowers its deficit; the mean shift keeps efficiency.
        let eta = step_size / ((t + 1) as f64).sqrt();
        let mean = c.size() as f64 / n as f64;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += eta * (if c.contains(i) { 1.0 } else { 0.0 } - mean);
        }
    }

    Ok(ImprovedAllocation {
        allocation: Allocation::new(x0.universe().clone(), best.1)?,
        initial_deficit: initial,
        best_deficit: best.0,
        best_step: best.2,
    })
}

/// `t[m] = sum of x_i over bits of m`.
fn subset_totals(x: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0; 1 << x.len()];
    for m in 1..t.len() {
        let low = m.trailing_zeros() as usize;
        t[m] = t[m & (m - 1)] + x[low];
    }
    t
}

fn proper(len: usize) -> impl Iterator<Item = usize> {
    1..len - 1
}

fn argmax_deficit(values: &[f64], totals: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for m in proper(values.len()) {
        let d = values[m] - totals[m];
        if d > best.0 {
            best = (d, m);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::random_cga;
    use crate::shapley::shapley_from_weights;
    use crate::PlayerUniverse;

    fn majority3() -> Game {
        Game::from_fn(PlayerUniverse::numbered(3).unwrap(), |c| if c.size() >= 2 { 1.0 } else { 0.0 }).unwrap()
    }

    fn alloc(n: usize, x: Vec<f64>) -> Allocation {
        Allocation::new(PlayerUniverse::numbered(n).unwrap(), x).unwrap()
    }

    fn order2(n: usize, seed: u64) -> (Game, Allocation) {
        let m = random_cga(n, 2, seed, 1.0).unwrap();
        (Game::from_model(&m).unwrap(), shapley_from_weights(&m))
    }

    #[test]
    fn budget_from_targets() {
        let b = SampleBudget::from_targets(0.1, 0.1).unwrap();
        assert_eq!(b.m, 1843);
        assert!(SampleBudget::new(0.0, 0.1, 5).is_err());
        assert!(SampleBudget::new(0.1, 0.1, 0).is_err());
    }

    #[test]
    fn cardinality_game_has_zero_deficits() {
        let g = Game::from_fn(PlayerUniverse::numbered(5).unwrap(), |c| c.size() as f64).unwrap();
        let x = alloc(5, vec![1.0; 5]);
        let b = SampleBudget::new(0.1, 0.1, 7).unwrap();
        for seed in 0..5 {
            assert_eq!(sampled_least_core_value(&g, &x, &b, seed).unwrap().e_hat, 0.0);
        }
        assert_eq!(exact_max_deficit(&g, &x).unwrap().value, 0.0);
    }

    #[test]
    fn majority_game_deficit_is_one_third() {
        let g = majority3();
        let d = exact_max_deficit(&g, &alloc(3, vec![1.0 / 3.0; 3])).unwrap();
        assert!((d.value - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(d.argmax, Coalition::from_mask(0b011));
        assert!(!d.efficiency_warning);
        assert!(exact_max_deficit(&g, &alloc(3, vec![0.0; 3])).unwrap().efficiency_warning);
    }

    #[test]
    fn additive_game_at_singletons_has_zero_deficit() {
        let a = [0.5, -1.0, 2.0, 0.25];
        let g = Game::from_fn(PlayerUniverse::numbered(4).unwrap(), |c| c.members().map(|i| a[i]).sum()).unwrap();
        let d = exact_max_deficit(&g, &alloc(4, a.to_vec())).unwrap();
        assert!(d.value.abs() < 1e-12);
    }

    #[test]
    fn full_budget_is_exhaustive_and_exact() {
        let (g, x) = order2(8, 11);
        let b = SampleBudget::new(0.1, 0.1, 256).unwrap();
        let est = sampled_least_core_value(&g, &x, &b, 1).unwrap();
        assert!(est.exhaustive);
        assert_eq!(est.samples_used, 256);
        let exact = exact_max_deficit(&g, &x).unwrap();
        assert!(exact.value > 0.0);
        assert_eq!(est.e_hat, exact.value);
        assert_eq!(est.argmax, exact.argmax);
    }

    #[test]
    fn estimate_is_monotone_and_sound() {
        let (g, x) = order2(10, 3);
        let exact = exact_max_deficit(&g, &x).unwrap().value;
        let mut prev = f64::NEG_INFINITY;
        for m in [1, 2, 5, 10, 50, 100, 500, 1000, 1023, 1024] {
            let b = SampleBudget::new(0.1, 0.1, m).unwrap();
            let e = sampled_least_core_value(&g, &x, &b, 42).unwrap().e_hat;
            assert!(e >= prev, "m={m}");
            assert!(e <= exact);
            prev = e;
        }
        assert_eq!(prev, exact);
    }

    #[test]
    fn model_and_table_agree() {
        let m = random_cga(7, 2, 5, 1.0).unwrap();
        let g = Game::from_model(&m).unwrap();
        let x = shapley_from_weights(&m);
        let b = SampleBudget::new(0.1, 0.1, 40).unwrap();
        let a = sampled_least_core_value(&m, &x, &b, 9).unwrap();
        let t = sampled_least_core_value(&g, &x, &b, 9).unwrap();
        assert!((a.e_hat - t.e_hat).abs() < 1e-12);
        assert_eq!(a.argmax, t.argmax);
    }

    #[test]
    fn exceedance_counts_strictly_above() {
        let g = majority3();
        let x = alloc(3, vec![1.0 / 3.0; 3]);
        // Deficits: ∅ 0, singles -1/3, pairs 1/3, grand 0.
        assert_eq!(exceedance_fraction(&g, &x, 0.0).unwrap(), 3.0 / 8.0);
        assert_eq!(exceedance_fraction(&g, &x, 0.5).unwrap(), 0.0);
        assert_eq!(exceedance_fraction(&g, &x, -1.0).unwrap(), 1.0);
    }

    #[test]
    fn symmetric_optimum_is_not_improved() {
        let g = majority3();
        let x = alloc(3, vec![1.0 / 3.0; 3]);
        let r = improve_allocation(&g, &x, 500, 0.1, 0).unwrap();
        assert_eq!(r.best_step, 0);
        assert!(r.improvement().abs() < 1e-9);
    }

    #[test]
    fn majority_game_converges_from_random_start() {
        let g = majority3();
        let x = alloc(3, vec![0.9, 0.1, 0.0]);
        let r = improve_allocation(&g, &x, 5000, 0.2, 4).unwrap();
        assert!(r.best_deficit < 1.0 / 3.0 + 0.01, "{r:?}");
        // Grid oracle over the efficient simplex: nothing beats 1/3.
        let steps = 60;
        let mut grid_best = f64::INFINITY;
        for a in 0..=steps {
            for b in 0..=steps - a {
                let p = vec![a as f64 / steps as f64, b as f64 / steps as f64, (steps - a - b) as f64 / steps as f64];
                grid_best = grid_best.min(exact_max_deficit(&g, &alloc(3, p)).unwrap().value);
            }
        }
        assert!((grid_best - 1.0 / 3.0).abs() < 1e-12);
        assert!(r.best_deficit >= grid_best - 1e-12);
    }

    #[test]
    fn never_worse_than_start() {
        for seed in 0..5 {
            let (g, _) = order2(6, seed);
            let x = alloc(6, vec![g.grand_value() / 6.0; 6]);
            let r = improve_allocation(&g, &x, 200, 0.05, seed).unwrap();
            assert!(r.best_deficit <= r.initial_deficit);
            let check = exact_max_deficit(&g, &r.allocation).unwrap().value;
            assert!((check - r.best_deficit).abs() < 1e-12);
        }
    }

    #[test]
    fn shapley_is_optimal_for_second_order_games() {
        for seed in 0..10 {
            let (g, x) = order2(6, 100 + seed);
            let r = improve_allocation(&g, &x, 2000, 0.05, seed).unwrap();
            assert!(r.improvement() <= 1e-6, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn non_shapley_start_is_improved() {
        let (g, x) = order2(6, 7);
        let mut p = x.payoffs().to_vec();
        p[0] += 0.5;
        p[1] -= 0.5;
        let start = alloc(6, p);
        let r = improve_allocation(&g, &start, 2000, 0.05, 1).unwrap();
        assert!(r.improvement() > 1e-3, "{r:?}");
    }
}
