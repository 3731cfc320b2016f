//! Dense SVD helpers backed by faer.

use faer::MatRef;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn view(m: &DMatrix<f64>) -> MatRef<'_, f64> {
    MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols())
}

fn svd_error(e: impl std::fmt::Debug) -> Error {
    Error::numerical(None, format!("SVD did not converge: {e:?}"))
}

/// Singular values in decreasing order.
pub(crate) fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    let mut sv = view(m).singular_values().map_err(svd_error)?;
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Minimum-norm least-squares solution dropping singular values below
/// `rtol * sigma_max`, with the number kept.
pub(crate) fn min_norm_solve(m: &DMatrix<f64>, y: &DVector<f64>, rtol: f64) -> Result<(DVector<f64>, usize)> {
    let svd = view(m).thin_svd().map_err(svd_error)?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let top = s.iter().copied().fold(0.0f64, f64::max);
    let mut w = DVector::zeros(m.ncols());
    let mut rank = 0;
    for j in 0..s.nrows() {
        let sigma = s[j];
        if top == 0.0 || sigma < rtol * top {
            continue;
        }
        rank += 1;
        let coef = (0..m.nrows()).map(|i| u[(i, j)] * y[i]).sum::<f64>() / sigma;
        for i in 0..m.ncols() {
            w[i] += coef * v[(i, j)];
        }
    }
    Ok((w, rank))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identification::{build_design_matrix, coalitions_of_sizes};

    #[test]
    fn degenerate_design_is_solved_exactly() {
        let m = build_design_matrix(7, 2, &coalitions_of_sizes(7, &[5, 6])).unwrap().into_matrix();
        let truth = DVector::from_fn(m.ncols(), |i, _| (i as f64 * 0.7).sin());
        let y = &m * &truth;
        let (w, rank) = min_norm_solve(&m, &y, 1e-8).unwrap();
        assert_eq!(rank, 28);
        assert!((w - truth).amax() < 1e-10);
        let sv = singular_values(&m).unwrap();
        assert!((sv[1] - sv[6]).abs() < 1e-12, "{sv:?}");
    }

    #[test]
    fn rank_deficient_gives_minimum_norm() {
        // Two identical columns: the minimum-norm split is even.
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
        let y = DVector::from_vec(vec![2.0, 4.0, 0.0]);
        let (w, rank) = min_norm_solve(&m, &y, 1e-8).unwrap();
        assert_eq!(rank, 1);
        assert!((w[0] - 1.0).abs() < 1e-12 && (w[1] - 1.0).abs() < 1e-12);
        assert!(singular_values(&DMatrix::zeros(0, 3)).unwrap().is_empty());
    }
}
