//! Shapley values: closed form from interaction weights, brute force from
//! a dense table, and the within-group variant.

use crate::coalition::{Coalition, BRUTE_FORCE_LIMIT};
use crate::error::{guard, Error, Result};
use crate::game::{Allocation, CgaModel, CharacteristicFunction, Game};

/// Shapley values of a model: each weight `w_S` is split evenly among the
/// members of `S`. Linear in the number of stored weights.
pub fn shapley_from_weights(model: &CgaModel) -> Allocation {
    let mut phi = vec![0.0; model.universe().len()];
    for &(s, w) in model.weights() {
        let share = w / s.size() as f64;
        for i in s.members() {
            phi[i] += share;
        }
    }
    Allocation::new(model.universe().clone(), phi).expect("one payoff per player")
}

/// `1 / (n * C(n-1, s))`, the weight of a marginal contribution to a
/// coalition of size `s` in an `n`-player game.
pub(crate) fn marginal_weights(n: usize) -> Vec<f64> {
    // Built by the ratio C(n-1, s+1) / C(n-1, s) = (n-1-s) / (s+1).
    let mut out = Vec::with_capacity(n);
    let mut w = 1.0 / n as f64;
    for s in 0..n {
        out.push(w);
        if s + 1 < n {
            w *= (s + 1) as f64 / (n - 1 - s) as f64;
        }
    }
    out
}

/// Shapley values straight from the definition over all `2^n` coalitions.
pub fn shapley_bruteforce(g: &Game) -> Result<Allocation> {
    let n = g.players();
    guard("brute-force Shapley size n", n, BRUTE_FORCE_LIMIT)?;
    Ok(Allocation::new(g.universe().clone(), shapley_table(g.values(), n)).expect("one payoff per player"))
}

/// Brute-force Shapley of a raw `2^n` value vector.
pub(crate) fn shapley_table(values: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(values.len(), 1 << n);
    let weights = marginal_weights(n);
    let mut phi = vec![0.0; n];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for m in 0..values.len() {
            if m & bit == 0 {
                acc += weights[m.count_ones() as usize] * (values[m | bit] - values[m]);
            }
        }
        *phi_i = acc;
    }
    phi
}

/// Checks that `groups` partition the universe of `n` players.
pub fn validate_partition(groups: &[Coalition], n: usize) -> Result<()> {
    let mut seen = Coalition::EMPTY;
    for g in groups {
        if g.is_empty() {
            return Err(Error::domain("groups must be non-empty"));
        }
        if !g.fits(n) {
            return Err(Error::domain(format!("group {g} lies outside the universe")));
        }
        if !seen.is_disjoint(*g) {
            return Err(Error::domain(format!("group {g} overlaps another group")));
        }
        seen = seen.union(*g);
    }
    if seen != Coalition::grand(n) {
        return Err(Error::domain("groups do not cover every player"));
    }
    Ok(())
}

/// Shapley value of each player within the subgame restricted to its own
/// group: for `i` in `G_j` only coalitions `S ⊆ G_j` matter.
pub fn group_shapley<F>(f: &F, groups: &[Coalition]) -> Result<Allocation>
where
    F: CharacteristicFunction + ?Sized,
{
    let n = f.players();
    validate_partition(groups, n)?;
    let mut phi = vec![0.0; n];
    for &group in groups {
        let members: Vec<usize> = group.members().collect();
        let size = members.len();
        guard("group size for exact Shapley", size, BRUTE_FORCE_LIMIT)?;
        let local: Vec<f64> = (0..1u64 << size)
            .map(|local| {
                let c = Coalition::from_indices(
                    members.iter().enumerate().filter(|(j, _)| local >> j & 1 == 1).map(|(_, &i)| i),
                );
                f.value(c)
            })
            .collect();
        for (j, value) in shapley_table(&local, size).into_iter().enumerate() {
            phi[members[j]] = value;
        }
    }
    Allocation::new(f.universe().clone(), phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalition::PlayerUniverse;
    use crate::game::{random_cga, weights_from_game};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_game(n: usize, seed: u64) -> Game {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Game::from_fn(PlayerUniverse::numbered(n).unwrap(), |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    // Permutation-order oracle: average marginal contribution over all n! orders.
    fn shapley_by_permutations(g: &Game) -> Vec<f64> {
        fn rec(g: &Game, order: &mut Vec<usize>, used: Coalition, n: usize, acc: &mut [f64], count: &mut f64) {
            if order.len() == n {
                let mut c = Coalition::EMPTY;
                for &i in order.iter() {
                    acc[i] += g.get(c.with(i)) - g.get(c);
                    c = c.with(i);
                }
                *count += 1.0;
                return;
            }
            for i in 0..n {
                if !used.contains(i) {
                    order.push(i);
                    rec(g, order, used.with(i), n, acc, count);
                    order.pop();
                }
            }
        }
        let n = g.players();
        let mut acc = vec![0.0; n];
        let mut count = 0.0;
        rec(g, &mut Vec::new(), Coalition::EMPTY, n, &mut acc, &mut count);
        acc.iter().map(|a| a / count).collect()
    }

    #[test]
    fn closed_form_small_cases() {
        let u = PlayerUniverse::new(["1", "2"]).unwrap();
        let m = CgaModel::new(
            u.clone(),
            2,
            [
                (Coalition::from_indices([0]), 1.0),
                (Coalition::from_indices([1]), 2.0),
                (Coalition::from_indices([0, 1]), 3.0),
            ],
        )
        .unwrap();
        assert_eq!(shapley_from_weights(&m).payoffs(), &[2.5, 3.5]);
        let pair = CgaModel::new(u, 2, [(Coalition::grand(2), 1.0)]).unwrap();
        assert_eq!(shapley_from_weights(&pair).payoffs(), &[0.5, 0.5]);
    }

    #[test]
    fn closed_form_matches_brute_force() {
        let m = random_cga(10, 2, 99, 1.0).unwrap();
        let a = shapley_from_weights(&m);
        let b = shapley_bruteforce(&Game::from_model(&m).unwrap()).unwrap();
        for i in 0..10 {
            assert!((a[i] - b[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn brute_force_matches_permutation_oracle() {
        for seed in 0..5 {
            let g = rand_game(5, seed);
            let a = shapley_bruteforce(&g).unwrap();
            for (x, y) in a.payoffs().iter().zip(shapley_by_permutations(&g)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn majority_and_additive() {
        let maj = Game::from_fn(PlayerUniverse::numbered(3).unwrap(), |c| (c.size() >= 2) as u8 as f64).unwrap();
        for &p in shapley_bruteforce(&maj).unwrap().payoffs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        let a = [1.0, -2.0, 0.25, 4.0];
        let add = Game::from_fn(PlayerUniverse::numbered(4).unwrap(), |c| c.members().map(|i| a[i]).sum()).unwrap();
        for (p, ai) in shapley_bruteforce(&add).unwrap().payoffs().iter().zip(a) {
            assert!((p - ai).abs() < 1e-12);
        }
    }

    #[test]
    fn efficiency_with_nonzero_empty_value() {
        let g = rand_game(6, 4);
        let phi = shapley_bruteforce(&g).unwrap();
        assert!((phi.total() - (g.grand_value() - g.empty_value())).abs() < 1e-9);
        let via_weights = shapley_from_weights(&weights_from_game(&g));
        for i in 0..6 {
            assert!((phi[i] - via_weights[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn brute_force_guard() {
        let g = Game::new(PlayerUniverse::numbered(21).unwrap(), vec![0.0; 1 << 21]).unwrap();
        assert!(matches!(shapley_bruteforce(&g), Err(Error::Capacity { .. })));
    }

    #[test]
    fn group_shapley_cases() {
        let g = rand_game(8, 12);
        let whole = group_shapley(&g, &[Coalition::grand(8)]).unwrap();
        let brute = shapley_bruteforce(&g).unwrap();
        for i in 0..8 {
            assert!((whole[i] - brute[i]).abs() < 1e-12);
        }

        let g2 = rand_game(2, 1);
        let singles = group_shapley(&g2, &[Coalition::from_indices([0]), Coalition::from_indices([1])]).unwrap();
        for i in 0..2 {
            let expected = g2.get(Coalition::from_indices([i])) - g2.empty_value();
            assert!((singles[i] - expected).abs() < 1e-12);
        }

        let groups = [Coalition::from_indices([0, 2, 4, 6]), Coalition::from_indices([1, 3, 5, 7])];
        let phi = group_shapley(&g, &groups).unwrap();
        for grp in groups {
            let sum: f64 = grp.members().map(|i| phi[i]).sum();
            assert!((sum - (g.get(grp) - g.empty_value())).abs() < 1e-9);
        }
    }

    #[test]
    fn group_shapley_rejects_non_partitions() {
        let g = rand_game(4, 0);
        let overlap = [Coalition::from_indices([0, 1]), Coalition::from_indices([1, 2, 3])];
        assert!(matches!(group_shapley(&g, &overlap), Err(Error::Domain(_))));
        let missing = [Coalition::from_indices([0, 1])];
        assert!(group_shapley(&g, &missing).is_err());
    }

    #[test]
    fn null_player_gets_zero() {
        let u = PlayerUniverse::numbered(4).unwrap();
        let m = CgaModel::new(
            u,
            2,
            [(Coalition::from_indices([0]), 1.5), (Coalition::from_indices([0, 1]), -2.0), (Coalition::from_indices([2]), 0.3)],
        )
        .unwrap();
        assert_eq!(shapley_from_weights(&m)[3], 0.0);
        assert_eq!(shapley_bruteforce(&Game::from_model(&m).unwrap()).unwrap()[3], 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn closed_form_agrees(n in 1usize..=10, k_frac in 0.0f64..1.0, seed in any::<u64>()) {
            let k = 1 + ((n as f64 * k_frac) as usize).min(n - 1);
            let m = random_cga(n, k, seed, 1.0).unwrap();
            let g = Game::from_model(&m).unwrap();
            let a = shapley_from_weights(&m);
            let b = shapley_bruteforce(&g).unwrap();
            for i in 0..n {
                prop_assert!((a[i] - b[i]).abs() < 1e-9);
            }
            prop_assert!((a.total() - g.grand_value()).abs() < 1e-9);
        }

        #[test]
        fn symmetry_under_relabeling(seed in any::<u64>(), perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
            let g = rand_game(6, seed);
            let phi = shapley_bruteforce(&g).unwrap();
            let permuted = shapley_bruteforce(&g.permuted(&perm).unwrap()).unwrap();
            for i in 0..6 {
                prop_assert!((phi[i] - permuted[perm[i]]).abs() < 1e-12);
            }
        }

        #[test]
        fn linearity(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, s1 in any::<u64>(), s2 in any::<u64>()) {
            let v = rand_game(7, s1);
            let u = rand_game(7, s2);
            let mix = shapley_bruteforce(&v.combine(alpha, &u, beta).unwrap()).unwrap();
            let pv = shapley_bruteforce(&v).unwrap();
            let pu = shapley_bruteforce(&u).unwrap();
            for i in 0..7 {
                prop_assert!((mix[i] - (alpha * pv[i] + beta * pu[i])).abs() < 1e-9);
            }
        }
    }
}
