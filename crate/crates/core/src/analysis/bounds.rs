use serde::{Deserialize, Serialize};

use super::MATRIX_LIMIT;
use crate::coalition::Coalition;
use crate::error::{guard, Result};
use crate::game::{same_universe, CharacteristicFunction, Game};
use crate::shapley::{group_shapley, shapley_table, validate_partition};

/// One side-by-side evaluation of an inequality `lhs <= rhs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl BoundCheck {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        BoundCheck {
            lhs,
            rhs,
            holds: lhs <= rhs + 1e-12 * (1.0 + rhs.abs()),
        }
    }

    /// `lhs / rhs`, or 0 when both vanish.
    pub fn ratio(&self) -> f64 {
        if self.rhs == 0.0 {
            if self.lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.lhs / self.rhs
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BoundOutcome {
    Evaluated(BoundCheck),
    NotApplicable { reason: String },
}

impl BoundOutcome {
    pub fn check(&self) -> Option<&BoundCheck> {
        match self {
            BoundOutcome::Evaluated(c) => Some(c),
            BoundOutcome::NotApplicable { .. } => None,
        }
    }

    fn skip(reason: impl Into<String>) -> Self {
        BoundOutcome::NotApplicable { reason: reason.into() }
    }
}

/// Worst-case L1 inequalities for one pair of games.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1Report {
    /// `sum |dphi| <= |dv|_1`, unconditional.
    pub total: BoundCheck,
    /// `sum |dphi| <= (2/n) |dv|_1` when `∅` and the grand coalition carry no error.
    pub interior: BoundOutcome,
    /// `sum |dphi| <= (2m/n) |dv|_1` for within-group Shapley values.
    pub grouped: BoundOutcome,
}

fn difference(v: &Game, vhat: &Game) -> Result<Game> {
    same_universe(v.universe(), vhat.universe())?;
    guard("bound check size n", v.players(), MATRIX_LIMIT)?;
    v.combine(1.0, vhat, -1.0)
}

/// `|phi(v) - phi(vhat)|_2^2 <= (2/n) |v - vhat|_2^2`.
pub fn l2_worst_bound(v: &Game, vhat: &Game) -> Result<BoundCheck> {
    let diff = difference(v, vhat)?;
    let n = diff.players();
    let dphi = shapley_table(diff.values(), n);
    let lhs = dphi.iter().map(|x| x * x).sum();
    let rhs = 2.0 / n as f64 * diff.values().iter().map(|x| x * x).sum::<f64>();
    Ok(BoundCheck::new(lhs, rhs))
}

/// The three L1 inequalities. Each conditional bound is only evaluated when
/// its hypothesis holds exactly; otherwise it is reported as not applicable.
///
/// The group bound requires equal-sized groups, zero error on `∅` and on
/// every whole group, and error supported on subsets of single groups.
pub fn l1_bounds(v: &Game, vhat: &Game, groups: Option<&[Coalition]>) -> Result<L1Report> {
    let diff = difference(v, vhat)?;
    let n = diff.players();
    let dv = diff.values();
    let l1: f64 = dv.iter().map(|x| x.abs()).sum();
    let dphi_l1: f64 = shapley_table(dv, n).iter().map(|x| x.abs()).sum();
    let grand = Coalition::grand(n);

    let total = BoundCheck::new(dphi_l1, l1);

    let interior = if n < 3 {
        BoundOutcome::skip("needs at least 3 players")
    } else if dv[0] != 0.0 || diff.get(grand) != 0.0 {
        BoundOutcome::skip("error on the empty or grand coalition")
    } else {
        BoundOutcome::Evaluated(BoundCheck::new(dphi_l1, 2.0 / n as f64 * l1))
    };

    let grouped = match groups {
        None => BoundOutcome::skip("no groups given"),
        Some(groups) => group_bound(&diff, groups, l1),
    };

    Ok(L1Report { total, interior, grouped })
}

fn group_bound(diff: &Game, groups: &[Coalition], l1: f64) -> BoundOutcome {
    let n = diff.players();
    if let Err(e) = validate_partition(groups, n) {
        return BoundOutcome::skip(format!("groups are not a partition: {e}"));
    }
    let size = groups[0].size();
    if groups.iter().any(|g| g.size() != size) {
        return BoundOutcome::skip("groups differ in size");
    }
    if diff.empty_value() != 0.0 {
        return BoundOutcome::skip("error on the empty coalition");
    }
    if let Some(g) = groups.iter().find(|g| diff.get(**g) != 0.0) {
        return BoundOutcome::skip(format!("error on the whole group {g}"));
    }
    let outside = diff
        .values()
        .iter()
        .enumerate()
        .any(|(m, &d)| d != 0.0 && !groups.iter().any(|g| Coalition::from_mask(m as u64).is_subset_of(*g)));
    if outside {
        return BoundOutcome::skip("error on a coalition spanning several groups");
    }
    let dphi = match group_shapley(diff, groups) {
        Ok(a) => a,
        Err(e) => return BoundOutcome::skip(e.to_string()),
    };
    let lhs = dphi.payoffs().iter().map(|x| x.abs()).sum();
    let m = groups.len() as f64;
    BoundOutcome::Evaluated(BoundCheck::new(lhs, 2.0 * m / n as f64 * l1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::top_singular_direction;
    use crate::coalition::PlayerUniverse;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zeros(n: usize) -> Game {
        Game::new(PlayerUniverse::numbered(n).unwrap(), vec![0.0; 1 << n]).unwrap()
    }

    fn with_error(n: usize, mut f: impl FnMut(usize) -> f64) -> Game {
        Game::new(PlayerUniverse::numbered(n).unwrap(), (0..1 << n).map(&mut f).collect()).unwrap()
    }

    #[test]
    fn identical_games() {
        let g = zeros(4);
        let c = l2_worst_bound(&g, &g).unwrap();
        assert_eq!((c.lhs, c.rhs, c.holds), (0.0, 0.0, true));
    }

    #[test]
    fn l2_tight_along_top_direction() {
        let n = 6;
        let dir = top_singular_direction(n).unwrap();
        let vhat = with_error(n, |m| dir[m]);
        let c = l2_worst_bound(&zeros(n), &vhat).unwrap();
        assert!((c.lhs - c.rhs).abs() < 1e-9);
        assert!(c.holds);
    }

    #[test]
    fn l2_holds_on_random_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = zeros(8);
        for _ in 0..200 {
            let vhat = with_error(8, |_| rng.random_range(-1.0..1.0));
            assert!(l2_worst_bound(&v, &vhat).unwrap().holds);
        }
    }

    #[test]
    fn total_equality_on_grand_coalition() {
        let n = 8;
        let vhat = with_error(n, |m| if m == (1 << n) - 1 { 0.7 } else { 0.0 });
        let r = l1_bounds(&zeros(n), &vhat, None).unwrap();
        assert!((r.total.lhs - r.total.rhs).abs() < 1e-9);
        assert!(matches!(r.interior, BoundOutcome::NotApplicable { .. }));
        assert!(matches!(r.grouped, BoundOutcome::NotApplicable { .. }));
    }

    #[test]
    fn interior_on_mid_size_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 8;
        for _ in 0..100 {
            let vhat = with_error(n, |m| {
                let s = (m as u64).count_ones();
                if (2..=6).contains(&s) {
                    rng.random_range(-1.0..1.0)
                } else {
                    0.0
                }
            });
            let r = l1_bounds(&zeros(n), &vhat, None).unwrap();
            assert!(r.interior.check().unwrap().holds);
        }
    }

    #[test]
    fn grouped_within_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 8;
        let groups = [Coalition::from_mask(0x0f), Coalition::from_mask(0xf0)];
        for _ in 0..100 {
            let vhat = with_error(n, |m| {
                let c = Coalition::from_mask(m as u64);
                let inside = groups.iter().any(|g| c.is_subset_of(*g) && c != *g);
                if inside && !c.is_empty() {
                    rng.random_range(-1.0..1.0)
                } else {
                    0.0
                }
            });
            let r = l1_bounds(&zeros(n), &vhat, Some(&groups)).unwrap();
            let c = r.grouped.check().expect("hypothesis holds");
            assert!(c.holds, "{c:?}");
            assert!((c.rhs - 0.5 * r.total.rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn grouped_preconditions() {
        let n = 6;
        let even = [Coalition::from_mask(0b000111), Coalition::from_mask(0b111000)];
        let uneven = [Coalition::from_mask(0b000011), Coalition::from_mask(0b111100)];
        let on_group = with_error(n, |m| if m == 0b000111 { 1.0 } else { 0.0 });
        let spanning = with_error(n, |m| if m == 0b001001 { 1.0 } else { 0.0 });
        let fine = with_error(n, |m| if m == 0b000011 { 1.0 } else { 0.0 });
        let v = zeros(n);
        for (vhat, groups) in [(&on_group, &even[..]), (&spanning, &even[..]), (&fine, &uneven[..])] {
            let r = l1_bounds(&v, vhat, Some(groups)).unwrap();
            assert!(r.grouped.check().is_none());
        }
        let overlap = [Coalition::from_mask(0b000111), Coalition::from_mask(0b111100)];
        assert!(l1_bounds(&v, &fine, Some(&overlap)).unwrap().grouped.check().is_none());
        assert!(l1_bounds(&v, &fine, Some(&even)).unwrap().grouped.check().is_some());
    }
}
