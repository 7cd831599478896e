//! Matrix forms of ridge IV:
//!
//! - just-identified: `(Z'D + lambda I)^-1 Z'Y`
//! - over-identified: `(D'Z (Z'Z)^-1 Z'D + lambda I)^-1 D'Z (Z'Z)^-1 Z'Y`
//!
//! Arrays are used uncentered, as given. Systems are tiny, so they are solved by LU
//! with partial pivoting.

use nalgebra::{DMatrix, DVector};

use crate::dgp::Dataset;
use crate::error::{Error, Result};

/// Outcome `y` (n), endogenous regressors `d` (n x p) and instruments `z` (n x k).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub y: DVector<f64>,
    pub d: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(y: DVector<f64>, d: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if d.nrows() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: d.nrows(),
            });
        }
        if z.nrows() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: z.nrows(),
            });
        }
        if d.ncols() == 0 || z.ncols() == 0 {
            return Err(Error::DimensionMismatch(
                "empty regressor or instrument block".into(),
            ));
        }
        Ok(Self { y, d, z })
    }
}

impl From<&Dataset> for LinearSystem {
    fn from(data: &Dataset) -> Self {
        Self {
            y: DVector::from_column_slice(&data.y),
            d: DMatrix::from_column_slice(data.n(), 1, &data.d),
            z: data.z.clone(),
        }
    }
}

fn solve(a: DMatrix<f64>, b: &DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    a.lu().solve(b).ok_or(Error::SingularMatrix(what))
}

fn shifted(mut a: DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    a
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            field: "lambda",
            reason: format!("must be finite and >= 0, got {lambda}"),
        })
    }
}

/// `(Z'D + lambda I)^-1 Z'Y`; needs as many instruments as endogenous regressors.
pub fn ridge_iv_just_identified(sys: &LinearSystem, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    if sys.z.ncols() != sys.d.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "Z'D must be square: {} instruments for {} regressors",
            sys.z.ncols(),
            sys.d.ncols()
        )));
    }
    let zt = sys.z.transpose();
    solve(
        shifted(&zt * &sys.d, lambda),
        &(&zt * &sys.y),
        "Z'D + lambda I",
    )
}

/// First-stage fitted values `Z (Z'Z)^-1 Z'D`.
pub fn project_onto_instruments(sys: &LinearSystem) -> Result<DMatrix<f64>> {
    let zt = sys.z.transpose();
    let coef = (&zt * &sys.z)
        .lu()
        .solve(&(&zt * &sys.d))
        .ok_or(Error::SingularMatrix("Z'Z"))?;
    Ok(&sys.z * coef)
}

/// Penalized over-identified estimator; `lambda = 0` is textbook 2SLS.
pub fn ridge_iv_overidentified(sys: &LinearSystem, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    if sys.z.ncols() < sys.d.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "under-identified: {} instruments for {} regressors",
            sys.z.ncols(),
            sys.d.ncols()
        )));
    }
    let zt = sys.z.transpose();
    let zz = &zt * &sys.z;
    let zz_lu = zz.lu();
    let zd = &zt * &sys.d;
    let zy = &zt * &sys.y;
    let zz_inv_zd = zz_lu.solve(&zd).ok_or(Error::SingularMatrix("Z'Z"))?;
    let zz_inv_zy = zz_lu.solve(&zy).ok_or(Error::SingularMatrix("Z'Z"))?;
    let dz = zd.transpose();
    let lhs = shifted(&dz * zz_inv_zd, lambda);
    let rhs = &dz * zz_inv_zy;
    solve(lhs, &rhs, "D'Pz D + lambda I")
}

/// Just-identified matrix form on a dataset (single endogenous regressor, so `k = 1`).
pub fn fit_ridge_iv_matrix(data: &Dataset, lambda: f64) -> Result<Vec<f64>> {
    Ok(ridge_iv_just_identified(&LinearSystem::from(data), lambda)?
        .iter()
        .copied()
        .collect())
}

pub fn fit_ridge_iv_overidentified(data: &Dataset, lambda: f64) -> Result<Vec<f64>> {
    Ok(ridge_iv_overidentified(&LinearSystem::from(data), lambda)?
        .iter()
        .copied()
        .collect())
}
