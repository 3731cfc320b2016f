use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::MATRIX_LIMIT;
use crate::coalition::Coalition;
use crate::error::{guard, Error, Result};

fn binom(n: usize, k: isize) -> f64 {
    if k < 0 || k as usize > n {
        0.0
    } else {
        crate::coalition::binomial(n, k as usize) as f64
    }
}

/// Coefficient of `v(S)` in `phi_i`.
pub fn shapley_matrix_entry(n: usize, i: usize, s: Coalition) -> f64 {
    let size = s.size() as isize;
    let nf = n as f64;
    if s.contains(i) {
        1.0 / (nf * binom(n - 1, size - 1))
    } else {
        -1.0 / (nf * binom(n - 1, size))
    }
}

/// The `n x 2^n` matrix `S_n` with `S_n v = phi(v)`; columns in mask order.
#[derive(Clone, Debug)]
pub struct ShapleyMatrix {
    pub n: usize,
    entries: DMatrix<f64>,
}

impl ShapleyMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.entries.ncols() {
            return Err(Error::domain(format!(
                "vector of length {} does not match 2^{}",
                values.len(),
                self.n
            )));
        }
        Ok((0..self.n)
            .map(|i| self.entries.row(i).iter().zip(values).map(|(a, b)| a * b).sum())
            .collect())
    }
}

pub fn shapley_matrix(n: usize) -> Result<ShapleyMatrix> {
    if n == 0 {
        return Err(Error::domain("Shapley matrix needs at least one player"));
    }
    guard("Shapley matrix size n", n, MATRIX_LIMIT)?;
    let entries = DMatrix::from_fn(n, 1 << n, |i, m| shapley_matrix_entry(n, i, Coalition::from_mask(m as u64)));
    Ok(ShapleyMatrix { n, entries })
}

/// Structure of `S_n S_n^T = (d1 - d2) I + d2 11^T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub n: usize,
    pub d1: f64,
    pub d2: f64,
    /// `d1 + (n - 1) d2`, the top eigenvalue.
    pub sigma_max_sq: f64,
    /// `n d1`.
    pub trace: f64,
    /// Numerically computed eigenvalues of `S_n S_n^T`, descending.
    pub eigenvalues: Vec<f64>,
}

/// Closed-form `d1`, `d2` from the binomial sums, cross-checked against
/// the materialized matrix.
pub fn spectrum(n: usize) -> Result<SpectrumReport> {
    let sm = shapley_matrix(n)?;
    let nf = n as f64;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for s in 0..=n as isize {
        // coalitions containing i (size s) and those avoiding i (size s)
        let with_i = binom(n - 1, s - 1);
        let without_i = binom(n - 1, s);
        if with_i > 0.0 {
            d1 += 1.0 / with_i;
        }
        if without_i > 0.0 {
            d1 += 1.0 / without_i;
        }
        if n >= 2 {
            let both = binom(n - 2, s - 2);
            let only_one = binom(n - 2, s - 1);
            let neither = binom(n - 2, s);
            if both > 0.0 {
                d2 += both / (with_i * with_i);
            }
            if only_one > 0.0 {
                d2 -= 2.0 * only_one / (with_i * without_i);
            }
            if neither > 0.0 {
                d2 += neither / (without_i * without_i);
            }
        }
    }
    d1 /= nf * nf;
    d2 /= nf * nf;

    let gram = sm.matrix() * sm.matrix().transpose();
    for i in 0..n {
        for j in 0..n {
            let expected = if i == j { d1 } else { d2 };
            if (gram[(i, j)] - expected).abs() > 1e-9 {
                return Err(Error::numerical(
                    None,
                    format!("closed-form Gram entry ({i},{j}) = {expected} disagrees with {}", gram[(i, j)]),
                ));
            }
        }
    }
    let mut eigenvalues: Vec<f64> = gram.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    Ok(SpectrumReport {
        n,
        d1,
        d2,
        sigma_max_sq: d1 + (nf - 1.0) * d2,
        trace: nf * d1,
        eigenvalues,
    })
}

/// Unit vector in `R^{2^n}` along which `S_n` attains its operator norm:
/// `S_n^T u / |S_n^T u|` for the top eigenvector `u` of `S_n S_n^T`.
pub fn top_singular_direction(n: usize) -> Result<Vec<f64>> {
    let sm = shapley_matrix(n)?;
    let eig = (sm.matrix() * sm.matrix().transpose()).symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let u = eig.eigenvectors.column(top);
    let v = sm.matrix().transpose() * u;
    let norm = v.norm();
    Ok(v.iter().map(|x| x / norm).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalition::PlayerUniverse;
    use crate::game::Game;
    use crate::shapley::shapley_bruteforce;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_player_row() {
        let sm = shapley_matrix(2).unwrap();
        let row: Vec<f64> = sm.matrix().row(0).iter().copied().collect();
        assert_eq!(row, vec![-0.5, 0.5, -0.5, 0.5]);
    }

    #[test]
    fn rows_sum_to_zero() {
        for n in 1..=8 {
            let sm = shapley_matrix(n).unwrap();
            for i in 0..n {
                assert!(sm.matrix().row(i).sum().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn applies_like_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sm = shapley_matrix(6).unwrap();
        let g = Game::from_fn(PlayerUniverse::numbered(6).unwrap(), |_| rng.random_range(-1.0..1.0)).unwrap();
        let a = sm.apply(g.values()).unwrap();
        let b = shapley_bruteforce(&g).unwrap();
        for i in 0..6 {
            assert!((a[i] - b[i]).abs() < 1e-9);
        }
        assert!(sm.apply(&[1.0]).is_err());
    }

    #[test]
    fn spectrum_examples() {
        let r = spectrum(4).unwrap();
        assert!((r.sigma_max_sq - 0.5).abs() < 1e-9);
        assert!((r.eigenvalues[0] - 0.5).abs() < 1e-9);

        let r = spectrum(10).unwrap();
        assert!((r.trace - 10.0 * r.d1).abs() < 1e-12);
        assert!(r.trace <= 0.6);

        let r = spectrum(3).unwrap();
        for &ev in &r.eigenvalues[1..] {
            assert!((ev - (r.d1 - r.d2)).abs() < 1e-9);
        }
    }

    #[test]
    fn one_player_degenerate() {
        let r = spectrum(1).unwrap();
        assert!((r.sigma_max_sq - 2.0).abs() < 1e-12);
        assert_eq!(r.d2, 0.0);
    }

    #[test]
    fn top_direction_is_unit_and_tight() {
        let v = top_singular_direction(5).unwrap();
        let norm: f64 = v.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let phi = shapley_matrix(5).unwrap().apply(&v).unwrap();
        let gain: f64 = phi.iter().map(|x| x * x).sum();
        assert!((gain - 2.0 / 5.0).abs() < 1e-9);
    }
}
