use nalgebra::{DMatrix, DVector};

use super::{check_xy, Centered, Family, FitResult};
use crate::error::{Error, Result};

/// Least squares with an intercept, solved by SVD of the centred design.
/// Rank-deficient designs get the minimum-norm coefficient vector.
pub fn fit_ols(x: &DMatrix<f64>, y: &[f64]) -> Result<FitResult> {
    if y.is_empty() {
        return Err(Error::invalid("OLS needs at least one row"));
    }
    check_xy(x, y)?;
    let n = y.len();
    let d = x.ncols();
    let centered = Centered::new(x);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, d, |i, j| centered.cols[j][i]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let beta: Vec<f64> = if d == 0 {
        Vec::new()
    } else {
        let svd = xc.svd(true, true);
        let smax = svd.singular_values.max();
        if smax == 0.0 {
            vec![0.0; d]
        } else {
            let eps = smax * n.max(d) as f64 * f64::EPSILON;
            svd.solve(&yc, eps)
                .map_err(|e| Error::invalid(format!("SVD solve failed: {e}")))?
                .iter()
                .copied()
                .collect()
        }
    };
    Ok(FitResult {
        family: Family::Linear,
        intercept: centered.intercept(y_mean, &beta),
        coefficients: beta,
        lambda: 0.0,
        iterations: 1,
        converged: true,
    })
}
