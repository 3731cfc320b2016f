//! Design matrices relating interaction weights to coalition values,
//! identifiability by rank, and the misspecification projection.
//!
//! Columns are always the coalitions `S` with `1 <= |S| <= k` in canonical
//! size-then-mask order; entry `(C, S)` is 1 iff `S ⊆ C`.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::coalition::{canonical_coalitions, weight_count, Coalition, FixedSize};
use crate::error::{guard, Error, Result};
use crate::game::{CgaModel, Game};

/// Largest `n` for which dense design matrices are built.
pub const DESIGN_LIMIT: usize = 14;
/// Largest `n` for which the exact rank cross-check runs automatically.
pub const EXACT_RANK_LIMIT: usize = 10;
/// Largest `n` for the misspecification analysis (all `2^n` rows).
pub const MISSPEC_LIMIT: usize = 12;
/// Singular values at or above `RANK_RTOL * sigma_max` count toward rank.
pub const RANK_RTOL: f64 = 1e-8;
/// Ridge added when the normal matrix of a projection is singular.
pub const FALLBACK_RIDGE: f64 = 1e-10;

/// 0/1 subset-indicator matrix.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    pub n: usize,
    pub order: usize,
    pub rows: Vec<Coalition>,
    pub columns: Vec<Coalition>,
    entries: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn entry(&self, row: usize, col: usize) -> u8 {
        self.entries[(row, col)] as u8
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    /// Integer copy of the entries, row-major.
    pub fn integer_rows(&self) -> Vec<Vec<i64>> {
        (0..self.nrows())
            .map(|r| (0..self.ncols()).map(|c| self.entry(r, c) as i64).collect())
            .collect()
    }
}

fn check_order(n: usize, k: usize) -> Result<()> {
    if n == 0 || k == 0 || k > n {
        return Err(Error::domain(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    Ok(())
}

/// Design matrix of order `k` with one row per given coalition.
pub fn build_design_matrix(n: usize, k: usize, row_coalitions: &[Coalition]) -> Result<DesignMatrix> {
    check_order(n, k)?;
    guard("design matrix size n", n, DESIGN_LIMIT)?;
    for c in row_coalitions {
        if !c.fits(n) {
            return Err(Error::domain(format!("row coalition {c} lies outside {n} players")));
        }
    }
    let columns = canonical_coalitions(n, k);
    let entries = DMatrix::from_fn(row_coalitions.len(), columns.len(), |r, c| {
        columns[c].is_subset_of(row_coalitions[r]) as u8 as f64
    });
    Ok(DesignMatrix {
        n,
        order: k,
        rows: row_coalitions.to_vec(),
        columns,
        entries,
    })
}

/// Every coalition of the given sizes, sizes taken in the given order.
pub fn coalitions_of_sizes(n: usize, sizes: &[usize]) -> Vec<Coalition> {
    sizes.iter().flat_map(|&s| FixedSize::new(n, s)).collect()
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    crate::linalg::singular_values(m)
}

/// Number of singular values at or above `RANK_RTOL * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> Result<usize> {
    let sv = singular_values(m)?;
    Ok(match sv.first() {
        Some(&top) if top > 0.0 => sv.iter().filter(|&&s| s >= RANK_RTOL * top).count(),
        _ => 0,
    })
}

const PRIME: u64 = (1 << 31) - 1;

fn rank_mod_prime(rows: &[Vec<i64>]) -> usize {
    let mut a: Vec<Vec<u64>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| x.rem_euclid(PRIME as i64) as u64).collect())
        .collect();
    let ncols = a.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..ncols {
        let Some(p) = (rank..a.len()).find(|&r| a[r][col] != 0) else {
            continue;
        };
        a.swap(rank, p);
        let inv = pow_mod(a[rank][col], PRIME - 2);
        let pivot: Vec<u64> = a[rank].iter().map(|&x| x * inv % PRIME).collect();
        for row in a.iter_mut().skip(rank + 1) {
            let f = row[col];
            if f != 0 {
                for (x, &p) in row.iter_mut().zip(&pivot).skip(col) {
                    *x = (*x + PRIME - f * p % PRIME) % PRIME;
                }
            }
        }
        rank += 1;
        if rank == a.len() {
            break;
        }
    }
    rank
}

fn pow_mod(mut b: u64, mut e: u64) -> u64 {
    let mut acc = 1;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % PRIME;
        }
        b = b * b % PRIME;
        e >>= 1;
    }
    acc
}

/// Fraction-free (Bareiss) elimination over the integers.
fn bareiss_rank(rows: &[Vec<i64>]) -> usize {
    let mut a: Vec<Vec<BigInt>> = rows.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect();
    let ncols = a.first().map_or(0, Vec::len);
    let mut prev = BigInt::one();
    let mut rank = 0;
    for col in 0..ncols {
        if rank == a.len() {
            break;
        }
        let Some(p) = (rank..a.len()).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(rank, p);
        let (top, rest) = a.split_at_mut(rank + 1);
        let pivot_row = &top[rank];
        for row in rest.iter_mut() {
            let f = std::mem::take(&mut row[col]);
            for j in col + 1..ncols {
                let v = (&row[j] * &pivot_row[col] - &f * &pivot_row[j]) / &prev;
                row[j] = v;
            }
        }
        prev = pivot_row[col].clone();
        rank += 1;
    }
    rank
}

/// Exact rank over the rationals of an integer matrix.
///
/// Elimination modulo a prime gives a lower bound; when it already equals
/// `min(rows, cols)` the rank is certified, otherwise Bareiss elimination
/// settles it.
pub fn exact_rank(rows: &[Vec<i64>]) -> usize {
    let ncols = rows.first().map_or(0, Vec::len);
    let lower = rank_mod_prime(rows);
    if lower == rows.len().min(ncols) {
        lower
    } else {
        bareiss_rank(rows)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub n: usize,
    pub k: usize,
    pub sizes: Vec<usize>,
    pub row_count: usize,
    pub rank: usize,
    pub column_count: usize,
    pub identified: bool,
    /// Integer-elimination rank, computed for `n <= EXACT_RANK_LIMIT`.
    pub exact_rank: Option<usize>,
}

/// Builds the design matrix over every coalition of the given sizes and
/// tests it for full column rank.
pub fn check_identifiability(n: usize, k: usize, sizes: &[usize]) -> Result<IdentifiabilityReport> {
    check_order(n, k)?;
    guard("identifiability size n", n, DESIGN_LIMIT)?;
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if let Some(&bad) = sizes.iter().find(|&&s| s == 0 || s > n) {
        return Err(Error::domain(format!("team size {bad} outside [1, {n}]")));
    }
    let dm = build_design_matrix(n, k, &coalitions_of_sizes(n, &sizes))?;
    let rank = numerical_rank(dm.matrix())?;
    let exact_rank = (n <= EXACT_RANK_LIMIT).then(|| exact_rank(&dm.integer_rows()));
    let column_count = dm.ncols();
    debug_assert_eq!(column_count as u64, weight_count(n, k));
    Ok(IdentifiabilityReport {
        n,
        k,
        sizes,
        row_count: dm.nrows(),
        rank,
        column_count,
        identified: rank == column_count,
        exact_rank,
    })
}

/// Design matrix over all `2^n` coalitions in mask order.
pub fn full_design_matrix(n: usize, k: usize) -> Result<DesignMatrix> {
    guard("misspecification size n", n, MISSPEC_LIMIT)?;
    let rows: Vec<Coalition> = (0..1u64 << n).map(Coalition::from_mask).collect();
    build_design_matrix(n, k, &rows)
}

/// Cholesky factor of `M^T M`, retried with a tiny ridge if singular.
fn normal_factor(m: &DMatrix<f64>) -> Result<(nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>, bool)> {
    let gram = m.transpose() * m;
    if let Some(ch) = gram.clone().cholesky() {
        return Ok((ch, false));
    }
    let d = gram.nrows();
    (gram + DMatrix::identity(d, d) * FALLBACK_RIDGE)
        .cholesky()
        .map(|ch| (ch, true))
        .ok_or_else(|| Error::numerical(None, "normal matrix is not positive definite even with ridge"))
}

/// `P_nk = M (M^T M)^{-1} M^T` over all `2^n` rows.
pub fn projection_matrix(n: usize, k: usize) -> Result<DMatrix<f64>> {
    let m = full_design_matrix(n, k)?.into_matrix();
    let (ch, _) = normal_factor(&m)?;
    Ok(&m * ch.solve(&m.transpose()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisspecReport {
    pub n: usize,
    pub k: usize,
    pub r: usize,
    pub error_vector: Vec<f64>,
    pub max_eigenvalue: f64,
    pub avg_trace: f64,
    /// Set when the normal matrix needed the fallback ridge.
    pub regularized: bool,
}

fn check_misspec(n: usize, k: usize, r: usize) -> Result<()> {
    check_order(n, k)?;
    if r < k || r > n {
        return Err(Error::domain(format!("need k <= r <= n, got k={k}, r={r}, n={n}")));
    }
    guard("misspecification size n", n, MISSPEC_LIMIT)
}

/// `(I - P_nk) M^{nr} w*`: residual of the best order-`k` least-squares fit
/// to the full game induced by an order-`r` model. Returns the residual and
/// whether the ridge fallback was used.
pub fn misspec_error(n: usize, k: usize, r: usize, true_weights: &CgaModel) -> Result<(Vec<f64>, bool)> {
    check_misspec(n, k, r)?;
    if true_weights.universe().len() != n || true_weights.order() > r {
        return Err(Error::domain(format!(
            "true model has {} players and order {}, expected {n} players and order <= {r}",
            true_weights.universe().len(),
            true_weights.order()
        )));
    }
    let y = DVector::from_vec(Game::from_model(true_weights)?.into_values());
    let m = full_design_matrix(n, k)?.into_matrix();
    let (ch, regularized) = normal_factor(&m)?;
    let w = ch.solve(&(m.transpose() * &y));
    let residual = y - m * w;
    Ok((residual.iter().copied().collect(), regularized))
}

/// Largest eigenvalue of `E^T E` and `Tr(E^T E) / d_r` for
/// `E = (I - P_nk) M^{nr}`. Returns `(max_eigenvalue, avg_trace, regularized)`.
pub fn misspec_spectrum(n: usize, k: usize, r: usize) -> Result<(f64, f64, bool)> {
    check_misspec(n, k, r)?;
    let mk = full_design_matrix(n, k)?.into_matrix();
    let mr = full_design_matrix(n, r)?.into_matrix();
    let (ch, regularized) = normal_factor(&mk)?;
    let coef = ch.solve(&(mk.transpose() * &mr));
    let e = &mr - &mk * coef;
    let ete = e.transpose() * &e;
    let max_eigenvalue = ete.symmetric_eigenvalues().iter().copied().fold(0.0f64, f64::max);
    let avg_trace = ete.trace().max(0.0) / mr.ncols() as f64;
    Ok((max_eigenvalue.max(0.0), avg_trace, regularized))
}

/// Both misspecification statistics for one true model.
pub fn misspec_report(n: usize, k: usize, r: usize, true_weights: &CgaModel) -> Result<MisspecReport> {
    let (error_vector, reg_a) = misspec_error(n, k, r, true_weights)?;
    let (max_eigenvalue, avg_trace, reg_b) = misspec_spectrum(n, k, r)?;
    Ok(MisspecReport {
        n,
        k,
        r,
        error_vector,
        max_eigenvalue,
        avg_trace,
        regularized: reg_a || reg_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalition::PlayerUniverse;
    use crate::game::random_cga;

    #[test]
    fn two_player_first_order_rows() {
        let rows: Vec<Coalition> = (0..4).map(Coalition::from_mask).collect();
        let dm = build_design_matrix(2, 1, &rows).unwrap();
        let got: Vec<Vec<u8>> = (0..4).map(|r| (0..2).map(|c| dm.entry(r, c)).collect()).collect();
        assert_eq!(got, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]]);
    }

    #[test]
    fn shapes_and_row_counts() {
        let dm = build_design_matrix(4, 2, &coalitions_of_sizes(4, &[2, 3])).unwrap();
        assert_eq!((dm.nrows(), dm.ncols()), (10, 10));

        let dm = build_design_matrix(4, 2, &coalitions_of_sizes(4, &[3])).unwrap();
        assert_eq!((dm.nrows(), dm.ncols()), (4, 10));
        for r in 0..4 {
            let first: u32 = (0..4).map(|c| dm.entry(r, c) as u32).sum();
            let second: u32 = (4..10).map(|c| dm.entry(r, c) as u32).sum();
            assert_eq!((first, second), (3, 3));
        }
    }

    #[test]
    fn guards() {
        assert!(matches!(build_design_matrix(15, 1, &[]), Err(Error::Capacity { .. })));
        assert!(build_design_matrix(3, 4, &[]).is_err());
        assert!(build_design_matrix(3, 1, &[Coalition::from_mask(8)]).is_err());
    }

    #[test]
    fn identifiability_examples() {
        let r = check_identifiability(6, 2, &[2, 3]).unwrap();
        assert!(r.identified);
        assert_eq!(r.rank, 21);
        assert_eq!(r.exact_rank, Some(21));

        let r = check_identifiability(4, 2, &[3]).unwrap();
        assert!(!r.identified);
        assert_eq!(r.exact_rank, Some(4));

        let r = check_identifiability(5, 1, &[4]).unwrap();
        assert!(r.identified);
        assert_eq!(r.rank, 5);
    }

    #[test]
    fn exact_rank_paths_agree() {
        // rank-deficient square matrix forces the Bareiss path
        let rows = vec![vec![1, 2, 3], vec![2, 4, 6], vec![1, 0, 1]];
        assert_eq!(exact_rank(&rows), 2);
        assert_eq!(bareiss_rank(&rows), 2);
        let dm = build_design_matrix(6, 2, &coalitions_of_sizes(6, &[2, 3])).unwrap();
        assert_eq!(bareiss_rank(&dm.integer_rows()), rank_mod_prime(&dm.integer_rows()));
        let dm = build_design_matrix(5, 2, &coalitions_of_sizes(5, &[4, 5])).unwrap();
        assert_eq!(exact_rank(&dm.integer_rows()), numerical_rank(dm.matrix()).unwrap());
    }

    #[test]
    fn misspec_zero_cases() {
        let zero = CgaModel::new(PlayerUniverse::numbered(5).unwrap(), 3, []).unwrap();
        let (e, _) = misspec_error(5, 1, 3, &zero).unwrap();
        assert!(e.iter().all(|&x| x == 0.0));

        let m = random_cga(5, 2, 4, 1.0).unwrap();
        let (e, reg) = misspec_error(5, 2, 2, &m).unwrap();
        assert!(!reg);
        assert!(e.iter().all(|x| x.abs() < 1e-9));

        let (top, avg, _) = misspec_spectrum(5, 2, 2).unwrap();
        assert!(top.abs() < 1e-9 && avg.abs() < 1e-9);
    }

    #[test]
    fn misspec_matches_independent_normal_equations() {
        let n = 6;
        let m = random_cga(n, 2, 17, 1.0).unwrap();
        let (e, _) = misspec_error(n, 1, 2, &m).unwrap();
        // Oracle: additive fit with an explicitly assembled 6x6 normal system.
        let values = Game::from_model(&m).unwrap().into_values();
        let mut gram = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for (mask, &v) in values.iter().enumerate() {
            for i in 0..n {
                if mask >> i & 1 == 1 {
                    rhs[i] += v;
                    for j in 0..n {
                        if mask >> j & 1 == 1 {
                            gram[(i, j)] += 1.0;
                        }
                    }
                }
            }
        }
        let a = gram.lu().solve(&rhs).unwrap();
        for (mask, &v) in values.iter().enumerate() {
            let fit: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| a[i]).sum();
            assert!((e[mask] - (v - fit)).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let p = projection_matrix(5, 2).unwrap();
        assert!((&p * &p - &p).amax() < 1e-8);
        let m = full_design_matrix(5, 2).unwrap().into_matrix();
        let resid = &m - &p * &m;
        assert!(resid.amax() < 1e-8);
    }

    #[test]
    fn misspec_statistics_grow() {
        let (e5, _, _) = misspec_spectrum(5, 1, 2).unwrap();
        let (e6, _, _) = misspec_spectrum(6, 1, 2).unwrap();
        assert!(e6 >= e5, "{e6} < {e5}");
        let (_, t2, _) = misspec_spectrum(6, 1, 2).unwrap();
        let (_, t3, _) = misspec_spectrum(6, 1, 3).unwrap();
        assert!(t3 >= t2, "{t3} < {t2}");
    }
}
