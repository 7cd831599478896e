//! 2SLS and ridge IV estimators.
//!
//! Ratio-form estimators work on demeaned sample covariances with the 1/n convention,
//! so a penalty `lambda_n` enters the denominator as `lambda_n / n`. The penalized
//! moment objective in [`gmm`] uses uncentered sums instead; the two conventions are
//! kept in separate functions.

mod gmm;
mod matrix;

pub use gmm::{
    gmm_minimize, gmm_objective, lagrange_correspondence, ridge_iv_uncentered, UncenteredSums,
};
pub use matrix::{
    fit_ridge_iv_matrix, fit_ridge_iv_overidentified, project_onto_instruments,
    ridge_iv_just_identified, ridge_iv_overidentified, LinearSystem,
};

use serde::{Deserialize, Serialize};

use crate::dgp::Dataset;
use crate::error::{Error, Result};

/// Growth rate of the penalty sequence `lambda_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyRate {
    /// `lambda_n = lambda0`.
    Constant,
    /// `lambda_n = lambda0 * sqrt(n)`.
    SqrtN,
    /// `lambda_n = lambda0 * n`.
    LinearN,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    pub rate: PenaltyRate,
    pub lambda0: f64,
}

impl PenaltySchedule {
    pub fn new(rate: PenaltyRate, lambda0: f64) -> Result<Self> {
        if !(lambda0 >= 0.0 && lambda0.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "lambda0",
                reason: format!("must be finite and >= 0, got {lambda0}"),
            });
        }
        Ok(Self { rate, lambda0 })
    }

    /// No penalty; every estimator reduces to 2SLS.
    pub fn none() -> Self {
        Self {
            rate: PenaltyRate::Constant,
            lambda0: 0.0,
        }
    }

    pub fn constant(lambda0: f64) -> Self {
        Self {
            rate: PenaltyRate::Constant,
            lambda0,
        }
    }

    pub fn sqrt_n(lambda0: f64) -> Self {
        Self {
            rate: PenaltyRate::SqrtN,
            lambda0,
        }
    }

    pub fn linear_n(lambda0: f64) -> Self {
        Self {
            rate: PenaltyRate::LinearN,
            lambda0,
        }
    }

    pub fn lambda_n(&self, n: usize) -> f64 {
        let n = n as f64;
        match self.rate {
            PenaltyRate::Constant => self.lambda0,
            PenaltyRate::SqrtN => self.lambda0 * n.sqrt(),
            PenaltyRate::LinearN => self.lambda0 * n,
        }
    }

    /// `lambda_n / n`, the amount added to the covariance-scale denominator.
    ///
    /// Computed without the round trip through `lambda_n` so that, for example, the
    /// linear rate shifts by exactly `lambda0`.
    pub fn shift(&self, n: usize) -> f64 {
        let n = n as f64;
        match self.rate {
            PenaltyRate::Constant => self.lambda0 / n,
            PenaltyRate::SqrtN => self.lambda0 / n.sqrt(),
            PenaltyRate::LinearN => self.lambda0,
        }
    }
}

/// A fitted ratio-form estimate with first-stage and reduced-form byproducts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    /// Always `numerator / denominator`.
    pub beta1_hat: f64,
    /// `Cov[Y, Z]`.
    pub numerator: f64,
    /// `Cov[D, Z] + lambda_n / n`.
    pub denominator: f64,
    pub lambda_n: f64,
    pub n: usize,
    pub pi1_hat: f64,
    pub sigma_eta_hat: f64,
    pub sigma_red_hat: f64,
    /// Residual standard deviation of the structural equation at `beta1_hat`.
    pub sigma_eps_hat: f64,
}

/// `(1/n) * sum (x_i - mean(x)) (w_i - mean(w))`.
pub fn demeaned_cov(x: &[f64], w: &[f64]) -> Result<f64> {
    if x.len() != w.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: w.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::SampleTooSmall { n: x.len(), min: 2 });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let mw = w.iter().sum::<f64>() / n;
    Ok(x.iter()
        .zip(w)
        .map(|(a, b)| (a - mx) * (b - mw))
        .sum::<f64>()
        / n)
}

/// Demeaned second moments of a single-instrument sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMoments {
    pub n: usize,
    pub mean_y: f64,
    pub mean_d: f64,
    pub mean_z: f64,
    pub cov_yz: f64,
    pub cov_dz: f64,
    pub var_z: f64,
    pub var_d: f64,
    pub var_y: f64,
    pub cov_yd: f64,
}

impl SampleMoments {
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let z = data.instrument()?;
        let (y, d) = (&data.y, &data.d);
        let n = data.n();
        let nf = n as f64;
        let mean_y = y.iter().sum::<f64>() / nf;
        let mean_d = d.iter().sum::<f64>() / nf;
        let mean_z = z.iter().sum::<f64>() / nf;
        let mut s = [0.0f64; 6];
        for i in 0..n {
            let (yc, dc, zc) = (y[i] - mean_y, d[i] - mean_d, z[i] - mean_z);
            s[0] += yc * zc;
            s[1] += dc * zc;
            s[2] += zc * zc;
            s[3] += dc * dc;
            s[4] += yc * yc;
            s[5] += yc * dc;
        }
        Ok(Self {
            n,
            mean_y,
            mean_d,
            mean_z,
            cov_yz: s[0] / nf,
            cov_dz: s[1] / nf,
            var_z: s[2] / nf,
            var_d: s[3] / nf,
            var_y: s[4] / nf,
            cov_yd: s[5] / nf,
        })
    }

    /// Ratio-form ridge IV at covariance-scale shift `lambda_n / n`.
    pub fn ridge_estimate(&self, lambda_n: f64, shift: f64) -> Result<Estimate> {
        let denominator = self.cov_dz + shift;
        if denominator == 0.0 {
            return Err(Error::DegenerateDenominator);
        }
        let beta1_hat = self.cov_yz / denominator;
        let (pi1_hat, sigma_eta_hat, sigma_red_hat) = if self.var_z > 0.0 {
            (
                self.cov_dz / self.var_z,
                residual_sd(self.var_d, self.cov_dz, self.var_z),
                residual_sd(self.var_y, self.cov_yz, self.var_z),
            )
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        let sse = self.var_y - 2.0 * beta1_hat * self.cov_yd + beta1_hat * beta1_hat * self.var_d;
        Ok(Estimate {
            beta1_hat,
            numerator: self.cov_yz,
            denominator,
            lambda_n,
            n: self.n,
            pi1_hat,
            sigma_eta_hat,
            sigma_red_hat,
            sigma_eps_hat: sse.max(0.0).sqrt(),
        })
    }
}

fn residual_sd(var_x: f64, cov_xz: f64, var_z: f64) -> f64 {
    (var_x - cov_xz * cov_xz / var_z).max(0.0).sqrt()
}

/// Intercept, slope and residual standard deviation (1/n) of a simple OLS line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub residual_sd: f64,
}

fn ols_line(x: &[f64], target: &[f64]) -> Result<LineFit> {
    let var_x = demeaned_cov(x, x)?;
    if var_x == 0.0 {
        return Err(Error::DegenerateInstrument);
    }
    let n = x.len() as f64;
    let slope = demeaned_cov(target, x)? / var_x;
    let intercept = target.iter().sum::<f64>() / n - slope * x.iter().sum::<f64>() / n;
    let ssr: f64 = x
        .iter()
        .zip(target)
        .map(|(xi, ti)| {
            let r = ti - intercept - slope * xi;
            r * r
        })
        .sum();
    Ok(LineFit {
        intercept,
        slope,
        residual_sd: (ssr / n).sqrt(),
    })
}

/// OLS of `D` on `(1, Z)`: `(pi0_hat, pi1_hat, sigma_eta_hat)`.
pub fn first_stage(data: &Dataset) -> Result<LineFit> {
    ols_line(data.instrument()?, &data.d)
}

/// OLS of `Y` on `(1, Z)`. The slope estimates `beta1 * pi1`.
pub fn reduced_form(data: &Dataset) -> Result<LineFit> {
    ols_line(data.instrument()?, &data.y)
}

/// Just-identified 2SLS, `Cov[Y, Z] / Cov[D, Z]`. Extreme values are returned as-is.
pub fn fit_2sls(data: &Dataset) -> Result<Estimate> {
    SampleMoments::from_dataset(data)?.ridge_estimate(0.0, 0.0)
}

/// Ratio-form ridge IV, `Cov[Y, Z] / (Cov[D, Z] + lambda_n / n)`.
pub fn fit_ridge_iv(data: &Dataset, schedule: &PenaltySchedule) -> Result<Estimate> {
    let n = data.n();
    SampleMoments::from_dataset(data)?.ridge_estimate(schedule.lambda_n(n), schedule.shift(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{generate_dataset, DgpParams};
    use proptest::prelude::*;

    fn tiny(y: [f64; 3]) -> Dataset {
        Dataset::single(y.to_vec(), vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn demeaned_cov_hand_values() {
        let x = [1.0, 2.0, 3.0];
        assert!((demeaned_cov(&x, &x).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((demeaned_cov(&x, &[2.0, 4.0, 6.0]).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(demeaned_cov(&x, &[5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert_eq!(
            demeaned_cov(&x, &[1.0, 2.0]).unwrap_err(),
            Error::LengthMismatch { left: 3, right: 2 }
        );
    }

    #[test]
    fn first_stage_identity_line() {
        let data = tiny([0.0, 0.0, 0.0]);
        let fs = first_stage(&data).unwrap();
        assert_eq!((fs.intercept, fs.slope, fs.residual_sd), (0.0, 1.0, 0.0));
    }

    #[test]
    fn first_stage_noise_free_design() {
        let mut p = DgpParams::baseline_design(1.0);
        p.noiseless = true;
        let data = generate_dataset(&p, 200, 11).unwrap();
        let fs = first_stage(&data).unwrap();
        assert!((fs.intercept + 0.346).abs() < 1e-12);
        assert!((fs.slope - 0.072).abs() < 1e-12);
        assert!(fs.residual_sd < 1e-12);

        let rf = reduced_form(&data).unwrap();
        assert!((rf.slope - 0.072).abs() < 1e-12);
        assert!(rf.residual_sd < 1e-12);
    }

    #[test]
    fn reduced_form_of_doubling() {
        let data = Dataset::single(
            vec![2.0, 4.0, 6.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 2.0, 3.0],
        )
        .unwrap();
        let rf = reduced_form(&data).unwrap();
        assert_eq!((rf.intercept, rf.slope, rf.residual_sd), (0.0, 2.0, 0.0));
    }

    #[test]
    fn constant_instrument_is_degenerate() {
        let data = Dataset::single(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![4.0; 3]).unwrap();
        assert_eq!(first_stage(&data).unwrap_err(), Error::DegenerateInstrument);
        assert_eq!(
            reduced_form(&data).unwrap_err(),
            Error::DegenerateInstrument
        );
    }

    #[test]
    fn two_stage_hand_values() {
        assert_eq!(fit_2sls(&tiny([2.0, 4.0, 6.0])).unwrap().beta1_hat, 2.0);

        let est = fit_2sls(&tiny([1.0, 5.0, 3.0])).unwrap();
        assert!((est.numerator - 2.0 / 3.0).abs() < 1e-15);
        assert!((est.denominator - 2.0 / 3.0).abs() < 1e-15);
        assert!((est.beta1_hat - 1.0).abs() < 1e-15);
        assert_eq!(est.lambda_n, 0.0);

        let flat = Dataset::single(vec![1.0, 2.0, 3.0], vec![7.0; 3], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(fit_2sls(&flat).unwrap_err(), Error::DegenerateDenominator);
    }

    #[test]
    fn ridge_hand_value() {
        // (4/3) / (2/3 + 1/3)
        let est = fit_ridge_iv(&tiny([2.0, 4.0, 6.0]), &PenaltySchedule::constant(1.0)).unwrap();
        assert!((est.beta1_hat - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(est.lambda_n, 1.0);
        assert_eq!(est.beta1_hat, est.numerator / est.denominator);
    }

    #[test]
    fn ridge_shrinks_to_zero() {
        let data = generate_dataset(&DgpParams::baseline_design(2.0).with_pi1(0.8), 150, 4).unwrap();
        let mut last = f64::INFINITY;
        for lambda0 in [0.0, 1.0, 10.0, 100.0, 1e3, 1e4, 1e6, 1e9] {
            let b = fit_ridge_iv(&data, &PenaltySchedule::constant(lambda0))
                .unwrap()
                .beta1_hat;
            assert!(b.abs() <= last);
            last = b.abs();
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn schedule_rates() {
        let n = 100;
        assert_eq!(PenaltySchedule::constant(2.0).lambda_n(n), 2.0);
        assert_eq!(PenaltySchedule::sqrt_n(2.0).lambda_n(n), 20.0);
        assert_eq!(PenaltySchedule::linear_n(2.0).lambda_n(n), 200.0);
        assert_eq!(PenaltySchedule::constant(2.0).shift(n), 0.02);
        assert_eq!(PenaltySchedule::sqrt_n(2.0).shift(n), 0.2);
        assert_eq!(PenaltySchedule::linear_n(0.8).shift(150), 0.8);
        assert!(PenaltySchedule::new(PenaltyRate::Constant, -1.0).is_err());
    }

    #[test]
    fn byproducts_match_stage_regressions() {
        let data = generate_dataset(&DgpParams::baseline_design(1.0).with_pi1(0.5), 500, 8).unwrap();
        let est = fit_ridge_iv(&data, &PenaltySchedule::constant(3.0)).unwrap();
        let fs = first_stage(&data).unwrap();
        let rf = reduced_form(&data).unwrap();
        assert!((est.pi1_hat - fs.slope).abs() < 1e-12);
        assert!((est.sigma_eta_hat - fs.residual_sd).abs() < 1e-9);
        assert!((est.sigma_red_hat - rf.residual_sd).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn zero_penalty_is_two_stage_bit_for_bit(seed in any::<u64>(), pi1 in -1.0f64..1.0, n in 3usize..200) {
            let data = generate_dataset(&DgpParams::baseline_design(1.0).with_pi1(pi1), n, seed).unwrap();
            for rate in [PenaltyRate::Constant, PenaltyRate::SqrtN, PenaltyRate::LinearN] {
                let ridge = fit_ridge_iv(&data, &PenaltySchedule { rate, lambda0: 0.0 });
                let tsls = fit_2sls(&data);
                prop_assert_eq!(ridge.map(|e| e.beta1_hat.to_bits()), tsls.map(|e| e.beta1_hat.to_bits()));
            }
        }
    }
}
