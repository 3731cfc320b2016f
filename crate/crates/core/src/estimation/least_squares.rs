use nalgebra::{DMatrix, DVector};

use super::{FitMeta, Fitted, PerformanceDataset};
use crate::error::{Error, Result};
use crate::game::CgaModel;
use crate::identification::{build_design_matrix, numerical_rank, RANK_RTOL};
use crate::linalg::min_norm_solve;

/// `sum (Mw - y)^2 + l2 |w|^2` and its gradient in `w`.
pub fn least_squares_objective(design: &DMatrix<f64>, y: &[f64], w: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let w = DVector::from_column_slice(w);
    let residual = design * &w - DVector::from_column_slice(y);
    let loss = residual.norm_squared() + l2 * w.norm_squared();
    let grad = (design.transpose() * residual) * 2.0 + &w * (2.0 * l2);
    (loss, grad.iter().copied().collect())
}

/// Order-`k` least-squares fit with optional ridge penalty `l2 |w|^2`.
///
/// Without a penalty the minimum-norm solution is taken from the SVD, and
/// `meta.identified` reports whether the design has full column rank. With
/// a penalty the normal equations are solved by Cholesky.
pub fn fit_least_squares(data: &PerformanceDataset, k: usize, l2: f64) -> Result<Fitted<CgaModel>> {
    if data.is_empty() {
        return Err(Error::domain("cannot fit an empty dataset"));
    }
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::domain(format!("l2 must be finite and non-negative, got {l2}")));
    }
    let n = data.universe().len();
    let rows: Vec<_> = data.rows().iter().map(|&(c, _)| c).collect();
    let dm = build_design_matrix(n, k, &rows)?;
    let y = DVector::from_iterator(rows.len(), data.rows().iter().map(|&(_, v)| v));
    let m = dm.matrix();

    let (w, rank) = if l2 == 0.0 {
        min_norm_solve(m, &y, RANK_RTOL)?
    } else {
        let d = m.ncols();
        let normal = m.transpose() * m + DMatrix::identity(d, d) * l2;
        let w = normal
            .cholesky()
            .ok_or_else(|| Error::numerical(None, "ridge normal matrix is not positive definite"))?
            .solve(&(m.transpose() * &y));
        (w, numerical_rank(m)?)
    };
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical(None, "least-squares solution is not finite"));
    }

    let mse = (m * &w - &y).norm_squared() / rows.len() as f64;
    let model = CgaModel::new(data.universe().clone(), k, dm.columns.iter().copied().zip(w.iter().copied()))?;
    Ok(Fitted {
        model,
        meta: FitMeta {
            method: "least_squares".into(),
            l2,
            final_loss: Some(mse),
            identified: Some(rank == dm.ncols()),
            design_rank: Some(rank),
            ..Default::default()
        },
    })
}
