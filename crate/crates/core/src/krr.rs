//! Multivariate kernel ridge regression.
//!
//! Coefficients solve `(K + λI) α̂ = Y`; predictions are `f̂(x) = Σ_i K(x, x_i) α̂_i`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::kernels::BoundKernel;
use crate::linalg::{self, frobenius_norm};

#[derive(Debug, Clone)]
pub struct KrrModel {
    pub kernel: BoundKernel,
    /// n×p coefficient matrix, one row per training point.
    pub alpha_hat: Array2<f64>,
    pub lambda: f64,
    /// `||(K + λI) α̂ − Y||_F / ||Y||_F` measured at fit time.
    pub relative_residual: f64,
}

pub fn krr_fit(kernel: BoundKernel, y: &ArrayView2<f64>, lambda: f64) -> Result<KrrModel> {
    let n = kernel.len();
    if y.nrows() != n {
        return Err(Error::Shape(format!(
            "embedding has {} rows but there are {n} training points",
            y.nrows()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "embedding contains non-finite values".into(),
        ));
    }
    let k = kernel.gram();
    let alpha_hat = linalg::solve_regularized(&k.view(), lambda, y)?;
    let mut lhs = k.dot(&alpha_hat);
    lhs.scaled_add(lambda, &alpha_hat);
    let ynorm = frobenius_norm(y);
    let rnorm = frobenius_norm(&(&lhs - y).view());
    let relative_residual = if ynorm > 0.0 { rnorm / ynorm } else { rnorm };
    Ok(KrrModel {
        kernel,
        alpha_hat,
        lambda,
        relative_residual,
    })
}

impl KrrModel {
    pub fn dims(&self) -> usize {
        self.alpha_hat.ncols()
    }

    /// Predictions at the training points, `K α̂`.
    pub fn training_predictions(&self) -> Array2<f64> {
        self.kernel.gram().dot(&self.alpha_hat)
    }
}

pub fn krr_predict(model: &KrrModel, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    let row = model.kernel.cross_row(x)?;
    Ok(row.dot(&model.alpha_hat))
}

pub fn krr_predict_batch(model: &KrrModel, xs: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((xs.nrows(), model.dims()));
    for (i, x) in xs.rows().into_iter().enumerate() {
        let y = krr_predict(model, x).map_err(|e| Error::at_row(i, e))?;
        out.row_mut(i).assign(&y);
    }
    Ok(out)
}
