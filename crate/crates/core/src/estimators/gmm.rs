//! Penalized moment objective
//!
//! ```text
//! L(beta) = (sum_i Z_i (Y_i - D_i beta))^2 + gamma * beta^2
//! ```
//!
//! on uncentered sums (no intercepts), its closed-form minimizer, and the map from the
//! ridge penalty `lambda_n` to the multiplier `gamma_n`.

use crate::dgp::Dataset;
use crate::error::{Error, Result};

/// Uncentered cross sums `sum Z D` and `sum Z Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncenteredSums {
    pub n: usize,
    pub zd: f64,
    pub zy: f64,
}

impl UncenteredSums {
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let z = data.instrument()?;
        let (mut zd, mut zy) = (0.0, 0.0);
        for ((zi, di), yi) in z.iter().zip(&data.d).zip(&data.y) {
            zd += zi * di;
            zy += zi * yi;
        }
        Ok(Self {
            n: data.n(),
            zd,
            zy,
        })
    }

    pub fn objective(&self, beta: f64, gamma: f64) -> f64 {
        let moment = self.zy - self.zd * beta;
        moment * moment + gamma * beta * beta
    }

    pub fn minimizer(&self, gamma: f64) -> Result<f64> {
        let denom = self.zd * self.zd + gamma;
        if denom == 0.0 {
            return Err(Error::DegenerateDenominator);
        }
        Ok(self.zd * self.zy / denom)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            field: "gamma",
            reason: format!("must be >= 0, got {gamma}"),
        })
    }
}

pub fn gmm_objective(data: &Dataset, beta: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(UncenteredSums::from_dataset(data)?.objective(beta, gamma))
}

/// `(sum ZD)(sum ZY) / ((sum ZD)^2 + gamma)`, the unique minimizer of the convex objective.
pub fn gmm_minimize(data: &Dataset, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    UncenteredSums::from_dataset(data)?.minimizer(gamma)
}

/// `gamma_n = (sum Z D / n) * lambda_n`.
///
/// With this multiplier the minimizer becomes `sum ZY / (sum ZD + lambda_n / n)`, i.e.
/// the ridge ratio with the penalty entering as `lambda_n / n`.
pub fn lagrange_correspondence(data: &Dataset, lambda_n: f64) -> Result<f64> {
    let sums = UncenteredSums::from_dataset(data)?;
    Ok(sums.zd / sums.n as f64 * lambda_n)
}

/// Uncentered ridge ratio `sum ZY / (sum ZD + lambda_n / n)`.
pub fn ridge_iv_uncentered(data: &Dataset, lambda_n: f64) -> Result<f64> {
    let sums = UncenteredSums::from_dataset(data)?;
    let denom = sums.zd + lambda_n / sums.n as f64;
    if denom == 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    Ok(sums.zy / denom)
}
