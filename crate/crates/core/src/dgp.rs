//! Data-generating process for the linear single-instrument IV model.
//!
//! ```text
//! Y_i = beta0 + beta1 * D_i + eps_i
//! D_i = pi0 + pi1 * Z_i + v_i,     v_i = (err_cov / sigma_eps^2) * eps_i + eta_i
//! ```
//!
//! with `eps ~ N(0, sigma_eps^2)`, `eta ~ N(0, sigma_eta^2)` and `Z ~ N(0, 1)` mutually
//! independent. The composite first-stage error `v` carries the endogeneity: its
//! covariance with `eps` is exactly `err_cov`, and any finite `err_cov` yields a valid
//! joint distribution because `v` is built from `eps` plus independent noise.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::NormalStream;

/// Smallest sample accepted by [`Dataset`] and [`generate_dataset`].
pub const MIN_OBSERVATIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentDistribution {
    #[default]
    StandardNormal,
}

impl InstrumentDistribution {
    pub fn variance(self) -> f64 {
        match self {
            Self::StandardNormal => 1.0,
        }
    }

    /// Fourth raw moment `E[Z^4]`.
    pub fn fourth_moment(self) -> f64 {
        match self {
            Self::StandardNormal => 3.0,
        }
    }
}

/// Structural coefficients and error moments of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpParams {
    pub beta0: f64,
    /// Structural slope, the estimand.
    pub beta1: f64,
    pub pi0: f64,
    pub pi1: f64,
    pub sigma_eps: f64,
    /// Standard deviation of the independent part `eta` of the first-stage error.
    pub sigma_eta: f64,
    /// `Cov(eps, v)` where `v` is the composite first-stage error.
    pub err_cov: f64,
    #[serde(default)]
    pub z_dist: InstrumentDistribution,
    /// When set, the first-stage slope at sample size `n` is `stock_c / sqrt(n)`.
    #[serde(default)]
    pub stock_c: Option<f64>,
    /// Suppress both error terms (exact-fit samples for testing).
    #[serde(default)]
    pub noiseless: bool,
}

impl Default for DgpParams {
    fn default() -> Self {
        Self::baseline_design(1.0)
    }
}

impl DgpParams {
    /// The calibrated simulation design: `Y = 2.83 + beta1 D + eps`,
    /// `D = -0.346 + 0.072 Z - 0.67 eps + eta`, unit-variance normals.
    pub fn baseline_design(beta1: f64) -> Self {
        Self {
            beta0: 2.83,
            beta1,
            pi0: -0.346,
            pi1: 0.072,
            sigma_eps: 1.0,
            sigma_eta: 1.0,
            err_cov: -0.67,
            z_dist: InstrumentDistribution::StandardNormal,
            stock_c: None,
            noiseless: false,
        }
    }

    pub fn with_beta1(mut self, beta1: f64) -> Self {
        self.beta1 = beta1;
        self
    }

    pub fn with_pi1(mut self, pi1: f64) -> Self {
        self.pi1 = pi1;
        self
    }

    pub fn with_stock_c(mut self, c: f64) -> Self {
        self.stock_c = Some(c);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("beta0", self.beta0),
            ("beta1", self.beta1),
            ("pi0", self.pi0),
            ("pi1", self.pi1),
            ("sigma_eps", self.sigma_eps),
            ("sigma_eta", self.sigma_eta),
            ("err_cov", self.err_cov),
        ];
        for (field, value) in finite {
            if !value.is_finite() {
                return Err(Error::InvalidParameter {
                    field,
                    reason: format!("must be finite, got {value}"),
                });
            }
        }
        if self.sigma_eps <= 0.0 {
            return Err(Error::InvalidParameter {
                field: "sigma_eps",
                reason: format!("must be > 0, got {}", self.sigma_eps),
            });
        }
        if self.sigma_eta <= 0.0 {
            return Err(Error::InvalidParameter {
                field: "sigma_eta",
                reason: format!("must be > 0, got {}", self.sigma_eta),
            });
        }
        if let Some(c) = self.stock_c {
            if !c.is_finite() {
                return Err(Error::InvalidParameter {
                    field: "stock_c",
                    reason: format!("must be finite, got {c}"),
                });
            }
        }
        Ok(())
    }

    /// Loading of the first-stage error on `eps`.
    pub fn error_loading(&self) -> f64 {
        self.err_cov / (self.sigma_eps * self.sigma_eps)
    }

    /// `Var(v)` for the composite first-stage error.
    pub fn first_stage_error_variance(&self) -> f64 {
        self.sigma_eta * self.sigma_eta
            + self.err_cov * self.err_cov / (self.sigma_eps * self.sigma_eps)
    }

    /// First-stage slope in force at sample size `n`.
    pub fn effective_pi1(&self, n: usize) -> f64 {
        match self.stock_c {
            Some(c) => c / (n as f64).sqrt(),
            None => self.pi1,
        }
    }
}

/// A realized sample `(Y, D, Z)` with `n` observations and `k` instruments.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub d: Vec<f64>,
    /// `n x k` instrument matrix.
    pub z: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, d: Vec<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if d.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: d.len(),
            });
        }
        if z.nrows() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: z.nrows(),
            });
        }
        if z.ncols() == 0 {
            return Err(Error::DimensionMismatch(
                "at least one instrument is required".into(),
            ));
        }
        if n < MIN_OBSERVATIONS {
            return Err(Error::SampleTooSmall {
                n,
                min: MIN_OBSERVATIONS,
            });
        }
        Ok(Self { y, d, z })
    }

    /// Single-instrument dataset.
    pub fn single(y: Vec<f64>, d: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        let zm = DMatrix::from_vec(z.len(), 1, z);
        Self::new(y, d, zm)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    /// The instrument column of a single-instrument dataset.
    pub fn instrument(&self) -> Result<&[f64]> {
        if self.k() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "operation needs exactly one instrument, dataset has {}",
                self.k()
            )));
        }
        Ok(self.z.as_slice())
    }

    /// Copy with every column centered at its sample mean.
    pub fn demeaned(&self) -> Dataset {
        fn center(v: &[f64]) -> Vec<f64> {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| x - m).collect()
        }
        let mut z = self.z.clone();
        for mut col in z.column_iter_mut() {
            let m = col.mean();
            col.add_scalar_mut(-m);
        }
        Dataset {
            y: center(&self.y),
            d: center(&self.d),
            z,
        }
    }
}

/// Draws `n` iid observations. Observation `i` depends only on `(params, n, seed, i)`.
pub fn generate_dataset(params: &DgpParams, n: usize, seed: u64) -> Result<Dataset> {
    params.validate()?;
    if n < MIN_OBSERVATIONS {
        return Err(Error::SampleTooSmall {
            n,
            min: MIN_OBSERVATIONS,
        });
    }
    let pi1 = params.effective_pi1(n);
    let loading = params.error_loading();
    let mut stream = NormalStream::new(seed);
    let mut y = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for _ in 0..n {
        let [zi, e, h] = stream.next_triple();
        let (yi, di) = structural(params, pi1, loading, zi, e, h);
        y.push(yi);
        d.push(di);
        z.push(zi);
    }
    Dataset::single(y, d, z)
}

/// Draws errors for a fixed instrument vector, i.e. sampling conditional on `Z`.
///
/// The error draws for observation `i` are the same ones [`generate_dataset`] would use
/// with the same seed; only the instrument value is replaced.
pub fn generate_with_instruments(params: &DgpParams, z: &[f64], seed: u64) -> Result<Dataset> {
    params.validate()?;
    let n = z.len();
    if n < MIN_OBSERVATIONS {
        return Err(Error::SampleTooSmall {
            n,
            min: MIN_OBSERVATIONS,
        });
    }
    let pi1 = params.effective_pi1(n);
    let loading = params.error_loading();
    let mut stream = NormalStream::new(seed);
    let mut y = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for &zi in z {
        let [_, e, h] = stream.next_triple();
        let (yi, di) = structural(params, pi1, loading, zi, e, h);
        y.push(yi);
        d.push(di);
    }
    Dataset::single(y, d, z.to_vec())
}

#[inline]
fn structural(
    p: &DgpParams,
    pi1: f64,
    loading: f64,
    z: f64,
    std_eps: f64,
    std_eta: f64,
) -> (f64, f64) {
    let (eps, eta) = if p.noiseless {
        (0.0, 0.0)
    } else {
        (p.sigma_eps * std_eps, p.sigma_eta * std_eta)
    };
    let d = p.pi0 + pi1 * z + (loading * eps + eta);
    let y = p.beta0 + p.beta1 * d + eps;
    (y, d)
}
