use crate::coalition::BRUTE_FORCE_LIMIT;
use crate::error::{guard, Error, Result};
use crate::game::{CgaModel, CharacteristicFunction, Game};

/// Fraction of non-empty coalitions whose true value lies between
/// `(1-eps) vhat(C)` and `(1+eps) vhat(C)`.
///
/// The interval is oriented by sign, so negative predictions are covered
/// symmetrically. Coalitions where both values are exactly zero count as
/// covered.
pub fn pmac_coverage(model: &CgaModel, g: &Game, epsilon: f64) -> Result<f64> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::domain("epsilon must be positive"));
    }
    let n = g.players();
    if model.universe().len() != n {
        return Err(Error::domain("model and game have different player counts"));
    }
    guard("coverage size n", n, BRUTE_FORCE_LIMIT)?;
    let predicted = Game::from_model(model)?;
    let covered = g
        .values()
        .iter()
        .zip(predicted.values())
        .skip(1)
        .filter(|&(&v, &vhat)| covers(v, vhat, epsilon))
        .count();
    Ok(covered as f64 / ((1u64 << n) - 1) as f64)
}

fn covers(v: f64, vhat: f64, epsilon: f64) -> bool {
    if v == 0.0 && vhat == 0.0 {
        return true;
    }
    let a = (1.0 - epsilon) * vhat;
    let b = (1.0 + epsilon) * vhat;
    a.min(b) <= v && v <= a.max(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalition::{Coalition, PlayerUniverse};
    use crate::game::{random_cga, weights_from_game};

    #[test]
    fn exact_model_covers_everything() {
        let m = random_cga(6, 3, 2, 1.0).unwrap();
        let g = Game::from_model(&m).unwrap();
        assert_eq!(pmac_coverage(&weights_from_game(&g), &g, 0.01).unwrap(), 1.0);
    }

    #[test]
    fn zero_model_covers_nothing_positive() {
        let g = Game::from_fn(PlayerUniverse::numbered(4).unwrap(), |c| 1.0 + c.size() as f64).unwrap();
        let zero = CgaModel::new(PlayerUniverse::numbered(4).unwrap(), 1, []).unwrap();
        assert_eq!(pmac_coverage(&zero, &g, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn matches_direct_predicate() {
        let m = random_cga(8, 2, 21, 1.0).unwrap();
        let g = Game::from_model(&m).unwrap();
        let t = m.truncate(1).unwrap();
        let eps = 0.5;
        let mut hits = 0usize;
        for mask in 1..256u64 {
            let c = Coalition::from_mask(mask);
            let v = g.get(c);
            let vhat = t.eval(c).unwrap();
            // |v - vhat| <= eps |vhat|
            if (v == 0.0 && vhat == 0.0) || (v - vhat).abs() <= eps * vhat.abs() {
                hits += 1;
            }
        }
        assert_eq!(pmac_coverage(&t, &g, eps).unwrap(), hits as f64 / 255.0);
        assert!(pmac_coverage(&t, &g, 0.0).is_err());
    }
}
