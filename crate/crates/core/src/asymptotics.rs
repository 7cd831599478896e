//! Closed-form limiting moments of the ratio-form estimators.
//!
//! `Sigma` is the asymptotic covariance of `sqrt(n) (Cov[Y,Z], Cov[D,Z])` around
//! `(beta1 pi1, pi1)`. Throughout, the first-stage error variance is that of the
//! composite error `v` (see [`DgpParams::first_stage_error_variance`]) and the
//! error covariance is `err_cov = Cov(eps, v)`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::dgp::DgpParams;
use crate::error::{Error, Result};
use crate::stats;

/// Pearson kurtosis above which a sample is flagged heavy-tailed.
pub const HEAVY_TAIL_KURTOSIS: f64 = 20.0;

/// Minimum sample size for [`cauchy_diagnostics`].
pub const MIN_DIAGNOSTIC_SAMPLES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingAssumption {
    /// Instruments conditioned on (treated as constants with unit second moment).
    FixedInstruments,
    /// Instruments drawn iid with unit variance and fourth moment `m4`.
    StochasticInstruments,
}

/// Reduced-form error variance `beta1^2 s_v^2 + s_eps^2 + 2 beta1 s_ev`.
pub fn sigma_red_sq(params: &DgpParams) -> f64 {
    let b = params.beta1;
    b * b * params.first_stage_error_variance()
        + params.sigma_eps * params.sigma_eps
        + 2.0 * b * params.err_cov
}

/// `Sigma` with instruments held fixed.
pub fn sigma_fixed(params: &DgpParams) -> Matrix2<f64> {
    let var_v = params.first_stage_error_variance();
    let off = params.beta1 * var_v + params.err_cov;
    Matrix2::new(sigma_red_sq(params), off, off, var_v)
}

/// `Sigma` with stochastic instruments:
/// `sigma_fixed + pi1^2 (m4 - 1) [[beta1^2, beta1], [beta1, 1]]`.
pub fn sigma_stochastic(params: &DgpParams) -> Matrix2<f64> {
    let b = params.beta1;
    let drift = params.pi1 * params.pi1 * (params.z_dist.fourth_moment() - 1.0);
    sigma_fixed(params) + Matrix2::new(b * b, b, b, 1.0) * drift
}

pub fn sigma_for(params: &DgpParams, assumption: SamplingAssumption) -> Matrix2<f64> {
    match assumption {
        SamplingAssumption::FixedInstruments => sigma_fixed(params),
        SamplingAssumption::StochasticInstruments => sigma_stochastic(params),
    }
}

/// Gradient of `h(x, y) = x / y`.
pub fn ratio_gradient(x: f64, y: f64) -> Vector2<f64> {
    Vector2::new(1.0 / y, -x / (y * y))
}

/// `grad h(beta1 pi1, pi1)' Sigma grad h(beta1 pi1, pi1)`.
pub fn delta_method_variance(sigma: &Matrix2<f64>, beta1: f64, pi1: f64) -> Result<f64> {
    if pi1 == 0.0 {
        return Err(Error::IrrelevantInstrument);
    }
    let g = ratio_gradient(beta1 * pi1, pi1);
    Ok((g.transpose() * sigma * g)[(0, 0)])
}

/// `sigma_eps^2 / pi1^2`.
pub fn v_ridge(params: &DgpParams) -> Result<f64> {
    if params.pi1 == 0.0 {
        return Err(Error::IrrelevantInstrument);
    }
    Ok(params.sigma_eps * params.sigma_eps / (params.pi1 * params.pi1))
}

/// Mean of `sqrt(n) (beta_hat - beta1)` when `lambda_n / sqrt(n) -> lambda0`:
/// `-beta1 lambda0 / pi1`.
pub fn sqrtn_bias(params: &DgpParams, lambda0: f64) -> Result<f64> {
    if params.pi1 == 0.0 {
        return Err(Error::IrrelevantInstrument);
    }
    Ok(-params.beta1 * lambda0 / params.pi1)
}

/// Limiting mean and variance of `sqrt(n) beta_hat` when `pi1 = c / sqrt(n)` and
/// `lambda_n / n -> lambda0 > 0`: `(c beta1 / lambda0, sigma_red^2 / lambda0^2)`.
///
/// `sigma_red^2` does not involve `pi1`, so the drifting slope leaves it unchanged.
pub fn staiger_stock_moments(params: &DgpParams, lambda0: f64) -> Result<(f64, f64)> {
    let c = params.stock_c.ok_or(Error::MissingStockConstant)?;
    if lambda0.is_nan() || lambda0 <= 0.0 {
        return Err(Error::ZeroPenalty);
    }
    Ok((
        c * params.beta1 / lambda0,
        sigma_red_sq(params) / (lambda0 * lambda0),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticSummary {
    pub sigma_matrix: Matrix2<f64>,
    /// `None` when `pi1 = 0`.
    pub v_ridge: Option<f64>,
    pub sigma_red_sq: f64,
    /// `None` when `pi1 = 0`.
    pub bias_sqrtn: Option<f64>,
    /// Drifting-slope limits; `None` unless `stock_c` is set and `lambda0 > 0`.
    pub ss_mean: Option<f64>,
    pub ss_var: Option<f64>,
    pub assumption: SamplingAssumption,
}

/// Every prediction available for `params` at penalty level `lambda0`.
pub fn summarize(
    params: &DgpParams,
    lambda0: f64,
    assumption: SamplingAssumption,
) -> AsymptoticSummary {
    let ss = staiger_stock_moments(params, lambda0).ok();
    AsymptoticSummary {
        sigma_matrix: sigma_for(params, assumption),
        v_ridge: v_ridge(params).ok(),
        sigma_red_sq: sigma_red_sq(params),
        bias_sqrtn: sqrtn_bias(params, lambda0).ok(),
        ss_mean: ss.map(|m| m.0),
        ss_var: ss.map(|m| m.1),
        assumption,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyDiagnostics {
    pub median: f64,
    pub iqr: f64,
    pub kurtosis: f64,
    /// Kurtosis above [`HEAVY_TAIL_KURTOSIS`] or non-finite (a sample with no spread
    /// is never flagged).
    pub heavy_tailed: bool,
}

/// Robust location and scale plus a heavy-tail flag, used to detect the unstable
/// (Cauchy-like) behaviour of 2SLS under weak instruments.
pub fn cauchy_diagnostics(samples: &[f64]) -> Result<CauchyDiagnostics> {
    if samples.len() < MIN_DIAGNOSTIC_SAMPLES {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: MIN_DIAGNOSTIC_SAMPLES,
        });
    }
    let sorted = stats::sorted(samples);
    let median = stats::quantile_sorted(&sorted, 0.5);
    let iqr = stats::quantile_sorted(&sorted, 0.75) - stats::quantile_sorted(&sorted, 0.25);
    let no_spread = sorted.first() == sorted.last();
    let kurtosis = if no_spread {
        f64::NAN
    } else {
        stats::kurtosis(samples)
    };
    let heavy_tailed = !no_spread && (!kurtosis.is_finite() || kurtosis > HEAVY_TAIL_KURTOSIS);
    Ok(CauchyDiagnostics {
        median,
        iqr,
        kurtosis,
        heavy_tailed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::InstrumentDistribution;
    use crate::rng::NormalStream;
    use proptest::prelude::*;

    fn params(beta1: f64, pi1: f64, sigma_eps: f64, sigma_eta: f64, err_cov: f64) -> DgpParams {
        DgpParams {
            beta0: 0.0,
            beta1,
            pi0: 0.0,
            pi1,
            sigma_eps,
            sigma_eta,
            err_cov,
            z_dist: InstrumentDistribution::StandardNormal,
            stock_c: None,
            noiseless: false,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn sigma_fixed_substitutions() {
        let s = sigma_fixed(&params(0.0, 1.0, 1.5, 2.0, 0.0));
        assert_eq!(s, Matrix2::new(2.25, 0.0, 0.0, 4.0));
        let s = sigma_fixed(&params(1.0, 1.0, 1.0, 1.0, 0.0));
        assert_eq!(s, Matrix2::new(2.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn sigma_stochastic_substitutions() {
        let p = params(1.0, 1.0, 1.0, 1.0, 0.0);
        assert_eq!(sigma_stochastic(&p), Matrix2::new(4.0, 3.0, 3.0, 3.0));
        let p0 = params(0.7, 0.0, 1.2, 0.4, -0.3);
        assert_eq!(sigma_stochastic(&p0), sigma_fixed(&p0));
    }

    #[test]
    fn delta_method_examples() {
        assert_eq!(
            delta_method_variance(&Matrix2::identity(), 0.0, 1.0).unwrap(),
            1.0
        );
        assert_eq!(
            delta_method_variance(&Matrix2::identity(), 1.0, 0.0).unwrap_err(),
            Error::IrrelevantInstrument
        );
        let p = DgpParams::baseline_design(1.0);
        let v = v_ridge(&p).unwrap();
        assert!(
            rel(
                delta_method_variance(&sigma_fixed(&p), p.beta1, p.pi1).unwrap(),
                v
            ) < 1e-10
        );
        assert!(
            rel(
                delta_method_variance(&sigma_stochastic(&p), p.beta1, p.pi1).unwrap(),
                v
            ) < 1e-10
        );
    }

    #[test]
    fn v_ridge_values() {
        assert_eq!(v_ridge(&params(1.0, 0.5, 1.0, 1.0, 0.0)).unwrap(), 4.0);
        let v = v_ridge(&params(1.0, 0.072, 1.0, 1.0, 0.0)).unwrap();
        assert!((v - 192.901_234_567_9).abs() < 1e-6);
        assert_eq!(
            v_ridge(&params(1.0, 0.0, 1.0, 1.0, 0.0)).unwrap_err(),
            Error::IrrelevantInstrument
        );
    }

    #[test]
    fn bias_values() {
        let p = params(1.0, 0.072, 1.0, 1.0, 0.0);
        assert_eq!(sqrtn_bias(&p, 0.0).unwrap(), 0.0);
        assert!((sqrtn_bias(&p, 0.5).unwrap() + 6.944_444_444).abs() < 1e-8);
        assert_eq!(
            sqrtn_bias(&params(0.0, 0.072, 1.0, 1.0, 0.0), 3.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn staiger_stock_values() {
        let p = params(1.0, 0.0, 1.0, 1.0, 0.0).with_stock_c(1.0);
        assert_eq!(staiger_stock_moments(&p, 1.0).unwrap(), (1.0, 2.0));
        let null = params(0.0, 0.0, 1.5, 1.0, 0.4).with_stock_c(3.0);
        assert_eq!(
            staiger_stock_moments(&null, 2.0).unwrap(),
            (0.0, 2.25 / 4.0)
        );
        assert_eq!(
            staiger_stock_moments(&p, 0.0).unwrap_err(),
            Error::ZeroPenalty
        );
        assert_eq!(
            staiger_stock_moments(&params(1.0, 0.1, 1.0, 1.0, 0.0), 1.0).unwrap_err(),
            Error::MissingStockConstant
        );
    }

    #[test]
    fn summary_collects_regime_values() {
        let p = DgpParams::baseline_design(1.0);
        let s = summarize(&p, 0.5, SamplingAssumption::FixedInstruments);
        assert_eq!(s.sigma_matrix, sigma_fixed(&p));
        assert_eq!(s.v_ridge, Some(v_ridge(&p).unwrap()));
        assert_eq!(s.bias_sqrtn, Some(sqrtn_bias(&p, 0.5).unwrap()));
        assert_eq!(s.ss_mean, None);
        let s = summarize(
            &p.with_stock_c(1.0),
            0.5,
            SamplingAssumption::StochasticInstruments,
        );
        assert!(s.ss_var.unwrap() > 0.0);
    }

    #[test]
    fn diagnostics_flags() {
        let mut stream = NormalStream::new(77);
        let triples: Vec<[f64; 3]> = (0..10_000).map(|_| stream.next_triple()).collect();
        let normal: Vec<f64> = triples.iter().map(|t| t[0]).collect();
        let ratio: Vec<f64> = triples.iter().map(|t| t[1] / t[2]).collect();

        let dn = cauchy_diagnostics(&normal).unwrap();
        assert!(!dn.heavy_tailed, "kurtosis {}", dn.kurtosis);
        assert!(dn.median.abs() < 0.05);
        assert!((dn.iqr - 1.349).abs() < 0.06);

        let dc = cauchy_diagnostics(&ratio).unwrap();
        assert!(dc.heavy_tailed, "kurtosis {}", dc.kurtosis);
        assert!((dc.iqr - 2.0).abs() < 0.15);

        let flat = cauchy_diagnostics(&[4.0; 600]).unwrap();
        assert_eq!(
            (flat.iqr, flat.heavy_tailed, flat.median),
            (0.0, false, 4.0)
        );

        assert_eq!(
            cauchy_diagnostics(&normal[..499]).unwrap_err(),
            Error::TooFewSamples {
                got: 499,
                need: 500
            }
        );
        let mut with_inf = normal[..600].to_vec();
        with_inf[3] = f64::INFINITY;
        assert!(cauchy_diagnostics(&with_inf).unwrap().heavy_tailed);
    }

    // err_cov is drawn as rho * sigma_eps * sigma_eta so the loading on eps stays
    // bounded; an unbounded loading makes the quadratic form ill-conditioned.
    fn arb_params() -> impl Strategy<Value = DgpParams> {
        (
            -5.0f64..5.0,
            prop_oneof![-3.0f64..-0.01, 0.01f64..3.0],
            0.1f64..4.0,
            0.1f64..4.0,
            -0.95f64..0.95,
        )
            .prop_map(|(b, p, se, sh, rho)| params(b, p, se, sh, rho * se * sh))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn delta_method_cancellation(p in arb_params()) {
            let v = v_ridge(&p).unwrap();
            let fixed = delta_method_variance(&sigma_fixed(&p), p.beta1, p.pi1).unwrap();
            let stoch = delta_method_variance(&sigma_stochastic(&p), p.beta1, p.pi1).unwrap();
            prop_assert!(rel(fixed, v) < 1e-10, "fixed {} vs {}", fixed, v);
            prop_assert!(rel(stoch, v) < 1e-10, "stoch {} vs {}", stoch, v);
        }

        #[test]
        fn sigma_decomposition_and_psd(p in arb_params()) {
            let diff = sigma_stochastic(&p) - sigma_fixed(&p);
            let b = p.beta1;
            let expect = Matrix2::new(b * b, b, b, 1.0) * (p.pi1 * p.pi1 * 2.0);
            prop_assert!((diff - expect).amax() <= 1e-12 * (1.0 + expect.amax()));
            for s in [sigma_fixed(&p), sigma_stochastic(&p)] {
                prop_assert_eq!(s[(0, 1)], s[(1, 0)]);
                let eig = s.symmetric_eigenvalues();
                let scale = s.amax().max(1.0);
                prop_assert!(eig.min() >= -1e-12 * scale, "eigenvalues {:?}", eig);
            }
        }

        #[test]
        fn gradient_matches_finite_differences(x in -10.0f64..10.0, y in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0]) {
            let h = |a: f64, b: f64| a / b;
            let g = ratio_gradient(x, y);
            let (ex, ey) = (1e-6 * x.abs().max(1.0), 1e-6 * y.abs().max(1.0));
            let fx = (h(x + ex, y) - h(x - ex, y)) / (2.0 * ex);
            let fy = (h(x, y + ey) - h(x, y - ey)) / (2.0 * ey);
            prop_assert!((fx - g[0]).abs() <= 1e-6 * g[0].abs().max(1e-8));
            if g[1].abs() > 1e-8 {
                prop_assert!((fy - g[1]).abs() <= 1e-6 * g[1].abs(), "{} vs {}", fy, g[1]);
            }
        }
    }
}
