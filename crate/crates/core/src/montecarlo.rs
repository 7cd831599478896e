//! Seeded repetition experiments.
//!
//! Each repetition gets its own seed derived from the master seed and its position
//! (`[grid index, rep index]` for sweeps, `[rep index]` for sampling distributions), so
//! a repetition's dataset never depends on which worker ran it. Results are gathered
//! in repetition order and reduced sequentially, which makes every aggregate
//! bit-identical across thread counts.

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{generate_dataset, generate_with_instruments, DgpParams};
use crate::error::{Error, Result};
use crate::estimators::{PenaltyRate, PenaltySchedule, SampleMoments};
use crate::rng::derive_seed;
use crate::stats;

/// Runs `f` on a dedicated pool with `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::ThreadPool(e.to_string()))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridVariable {
    Pi1,
    Beta1,
}

/// Evenly spaced grid including both endpoints.
pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (points - 1) as f64;
            (0..points)
                .map(|i| {
                    if i == points - 1 {
                        stop
                    } else {
                        start + step * i as f64
                    }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base_params: DgpParams,
    pub grid_variable: GridVariable,
    pub grid: Vec<f64>,
    pub lambda_values: Vec<f64>,
    pub n: usize,
    pub reps: usize,
    pub master_seed: u64,
    /// How each `lambda` becomes a penalty sequence. The default `linear_n` shifts the
    /// covariance-scale denominator by exactly `lambda`.
    #[serde(default = "default_sweep_rate")]
    pub penalty_rate: PenaltyRate,
    /// Keep every repetition's estimate in the result.
    #[serde(default)]
    pub keep_estimates: bool,
}

fn default_sweep_rate() -> PenaltyRate {
    PenaltyRate::LinearN
}

pub const DEFAULT_SWEEP_N: usize = 150;
pub const DEFAULT_SWEEP_REPS: usize = 10_000;
/// Structural slope used while the first-stage slope is swept.
pub const DEFAULT_PI_SWEEP_BETA1: f64 = 1.0;

impl SweepConfig {
    /// First-stage strength sweep: `pi1` over 41 points in [0, 1], `lambda` in {0, 4, 10}.
    pub fn pi_sweep(reps: usize, master_seed: u64) -> Self {
        Self {
            base_params: DgpParams::baseline_design(DEFAULT_PI_SWEEP_BETA1),
            grid_variable: GridVariable::Pi1,
            grid: linspace(0.0, 1.0, 41),
            lambda_values: vec![0.0, 4.0, 10.0],
            n: DEFAULT_SWEEP_N,
            reps,
            master_seed,
            penalty_rate: PenaltyRate::LinearN,
            keep_estimates: false,
        }
    }

    /// Effect-size sweep: `beta1` over 40 points in [0, 3.475], `lambda` in {0, 0.8, 3}.
    pub fn beta_sweep(reps: usize, master_seed: u64) -> Self {
        Self {
            base_params: DgpParams::baseline_design(0.0),
            grid_variable: GridVariable::Beta1,
            grid: linspace(0.0, 3.475, 40),
            lambda_values: vec![0.0, 0.8, 3.0],
            n: DEFAULT_SWEEP_N,
            reps,
            master_seed,
            penalty_rate: PenaltyRate::LinearN,
            keep_estimates: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base_params.validate()?;
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("grid must not be empty".into()));
        }
        if self.grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidConfig("grid values must be finite".into()));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "grid must be strictly increasing".into(),
            ));
        }
        if self.lambda_values.is_empty() {
            return Err(Error::InvalidConfig(
                "lambda_values must not be empty".into(),
            ));
        }
        if let Some(bad) = self
            .lambda_values
            .iter()
            .find(|l| !(l.is_finite() && **l >= 0.0))
        {
            return Err(Error::InvalidConfig(format!(
                "lambda_values must be finite and >= 0, got {bad}"
            )));
        }
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be >= 1".into()));
        }
        if self.n < crate::dgp::MIN_OBSERVATIONS {
            return Err(Error::InvalidConfig(format!(
                "n must be >= {}, got {}",
                crate::dgp::MIN_OBSERVATIONS,
                self.n
            )));
        }
        Ok(())
    }

    pub fn params_at(&self, grid_value: f64) -> DgpParams {
        match self.grid_variable {
            GridVariable::Pi1 => self.base_params.clone().with_pi1(grid_value),
            GridVariable::Beta1 => self.base_params.clone().with_beta1(grid_value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantiles {
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        let s = stats::sorted(values);
        let q = |p| stats::quantile_sorted(&s, p);
        Self {
            q05: q(0.05),
            q25: q(0.25),
            q50: q(0.50),
            q75: q(0.75),
            q95: q(0.95),
        }
    }
}

/// Aggregates for one `(grid value, lambda)` pair. Moments use the non-degenerate
/// repetitions only and are NaN when there are none.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub grid_value: f64,
    pub lambda: f64,
    pub mse: f64,
    pub bias: f64,
    pub variance: f64,
    pub quantiles: Quantiles,
    pub n_degenerate: usize,
    pub estimates: Option<Vec<f64>>,
}

impl SweepCell {
    fn aggregate(
        grid_value: f64,
        lambda: f64,
        truth: f64,
        draws: &[Option<f64>],
        keep: bool,
    ) -> Self {
        let values: Vec<f64> = draws.iter().flatten().copied().collect();
        let n_degenerate = draws.len() - values.len();
        let m = values.len() as f64;
        let mse = values
            .iter()
            .map(|b| (b - truth) * (b - truth))
            .sum::<f64>()
            / m;
        let mean = values.iter().sum::<f64>() / m;
        let variance = values.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / m;
        Self {
            grid_value,
            lambda,
            mse,
            bias: mean - truth,
            variance,
            quantiles: Quantiles::of(&values),
            n_degenerate,
            estimates: keep.then_some(values),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub grid_variable: GridVariable,
    /// Ordered by lambda (in config order), then by grid value.
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cells_for(&self, lambda: f64) -> impl Iterator<Item = &SweepCell> {
        self.cells.iter().filter(move |c| c.lambda == lambda)
    }

    /// Distinct lambda values in result order.
    pub fn lambdas(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.lambda) {
                out.push(c.lambda);
            }
        }
        out
    }
}

/// MSE sweep over a grid of first-stage slopes or effect sizes.
///
/// Every lambda is evaluated on the same simulated datasets. Runs on the current
/// rayon pool; see [`with_workers`].
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let reps = config.reps;
    let schedules: Vec<PenaltySchedule> = config
        .lambda_values
        .iter()
        .map(|&l| PenaltySchedule {
            rate: config.penalty_rate,
            lambda0: l,
        })
        .collect();
    let params: Vec<DgpParams> = config.grid.iter().map(|&g| config.params_at(g)).collect();

    let draws: Vec<Vec<Option<f64>>> = (0..config.grid.len() * reps)
        .into_par_iter()
        .map(|job| {
            let (g, r) = (job / reps, job % reps);
            let seed = derive_seed(config.master_seed, &[g as u64, r as u64]);
            let data = generate_dataset(&params[g], config.n, seed)?;
            let moments = SampleMoments::from_dataset(&data)?;
            Ok(schedules
                .iter()
                .map(|s| {
                    moments
                        .ridge_estimate(s.lambda_n(config.n), s.shift(config.n))
                        .ok()
                        .map(|e| e.beta1_hat)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(config.grid.len() * schedules.len());
    let mut column = Vec::with_capacity(reps);
    for (li, &lambda) in config.lambda_values.iter().enumerate() {
        for (g, &grid_value) in config.grid.iter().enumerate() {
            column.clear();
            column.extend(draws[g * reps..(g + 1) * reps].iter().map(|d| d[li]));
            cells.push(SweepCell::aggregate(
                grid_value,
                lambda,
                params[g].beta1,
                &column,
                config.keep_estimates,
            ));
        }
    }
    Ok(SweepResult {
        grid_variable: config.grid_variable,
        cells,
    })
}

/// Draws of `sqrt(n) (beta_hat - beta1)`, or of `sqrt(n) beta_hat` when `stock_c` is set.
/// Repetitions with an exactly zero denominator are dropped.
pub fn collect_sampling_distribution(
    params: &DgpParams,
    schedule: &PenaltySchedule,
    n: usize,
    reps: usize,
    master_seed: u64,
) -> Result<Vec<f64>> {
    params.validate()?;
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be >= 1".into()));
    }
    let root_n = (n as f64).sqrt();
    let center = if params.stock_c.is_some() {
        0.0
    } else {
        params.beta1
    };
    let (lambda_n, shift) = (schedule.lambda_n(n), schedule.shift(n));
    let draws: Vec<Option<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let data = generate_dataset(params, n, derive_seed(master_seed, &[r as u64]))?;
            let est = SampleMoments::from_dataset(&data)?.ridge_estimate(lambda_n, shift);
            Ok(est.ok().map(|e| root_n * (e.beta1_hat - center)))
        })
        .collect::<Result<_>>()?;
    Ok(draws.into_iter().flatten().collect())
}

/// Draws of `sqrt(n) (Cov[Y,Z], Cov[D,Z])`. With `instruments` given, every repetition
/// reuses that instrument vector (sampling conditional on `Z`); otherwise `Z` is redrawn.
pub fn collect_covariance_draws(
    params: &DgpParams,
    n: usize,
    reps: usize,
    master_seed: u64,
    instruments: Option<&[f64]>,
) -> Result<Vec<[f64; 2]>> {
    params.validate()?;
    let root_n = (n as f64).sqrt();
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(master_seed, &[r as u64]);
            let data = match instruments {
                Some(z) => generate_with_instruments(params, z, seed)?,
                None => generate_dataset(params, n, seed)?,
            };
            let m = SampleMoments::from_dataset(&data)?;
            Ok([root_n * m.cov_yz, root_n * m.cov_dz])
        })
        .collect()
}

/// Sample covariance matrix (1/m) of two-dimensional draws.
pub fn empirical_covariance(draws: &[[f64; 2]]) -> Matrix2<f64> {
    let m = draws.len() as f64;
    let mean = draws
        .iter()
        .fold([0.0, 0.0], |acc, d| [acc[0] + d[0] / m, acc[1] + d[1] / m]);
    let mut s = Matrix2::zeros();
    for d in draws {
        let (a, b) = (d[0] - mean[0], d[1] - mean[1]);
        s[(0, 0)] += a * a;
        s[(0, 1)] += a * b;
        s[(1, 1)] += b * b;
    }
    s[(1, 0)] = s[(0, 1)];
    s / m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SweepConfig {
        let mut c = SweepConfig::pi_sweep(50, 17);
        c.grid = linspace(0.0, 1.0, 5);
        c
    }

    #[test]
    fn linspace_endpoints() {
        let g = linspace(0.0, 3.475, 40);
        assert_eq!(g.len(), 40);
        assert_eq!((g[0], g[39]), (0.0, 3.475));
        assert_eq!(linspace(0.0, 1.0, 41)[1], 0.025);
    }

    #[test]
    fn config_validation() {
        let mut c = small_config();
        c.grid = vec![0.0, 0.5, 0.5];
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        let mut c = small_config();
        c.reps = 0;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.lambda_values = vec![-1.0];
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.grid.clear();
        assert!(c.validate().is_err());
        assert!(small_config().validate().is_ok());
    }

    #[test]
    fn mse_decomposes() {
        let result = run_sweep(&small_config()).unwrap();
        assert_eq!(result.cells.len(), 15);
        for c in &result.cells {
            assert!(c.n_degenerate <= 50);
            if c.mse.is_finite() {
                let rhs = c.bias * c.bias + c.variance;
                assert!(((c.mse - rhs) / c.mse).abs() < 1e-8, "{c:?}");
            }
        }
    }

    #[test]
    fn noiseless_single_rep_has_zero_mse() {
        // Powers of two keep Y = 2 D exact, so the ratio is exact as well.
        let mut c = small_config();
        c.base_params.beta0 = 0.0;
        c.base_params.beta1 = 2.0;
        c.base_params.noiseless = true;
        c.grid = vec![0.5, 1.0];
        c.lambda_values = vec![0.0];
        c.reps = 1;
        let result = run_sweep(&c).unwrap();
        for cell in &result.cells {
            assert_eq!(cell.mse, 0.0);
            assert_eq!(cell.n_degenerate, 0);
        }
    }

    #[test]
    fn degenerate_reps_are_counted() {
        // Noise-free data with pi0 = pi1 = 0 gives D = 0, so Cov[D, Z] = 0 exactly.
        let mut c = small_config();
        c.base_params.noiseless = true;
        c.base_params.pi0 = 0.0;
        c.grid = vec![0.0];
        c.lambda_values = vec![0.0, 1.0];
        c.reps = 7;
        let result = run_sweep(&c).unwrap();
        let two_stage = &result.cells[0];
        assert_eq!(two_stage.n_degenerate, 7);
        assert!(two_stage.mse.is_nan());
        assert_eq!(result.cells[1].n_degenerate, 0);
    }

    #[test]
    fn identical_across_worker_counts() {
        let c = small_config();
        let one = with_workers(1, || run_sweep(&c)).unwrap().unwrap();
        let many = with_workers(8, || run_sweep(&c)).unwrap().unwrap();
        assert_eq!(one, many);
    }

    #[test]
    fn kept_estimates_match_aggregates() {
        let mut c = small_config();
        c.keep_estimates = true;
        let result = run_sweep(&c).unwrap();
        let cell = &result.cells[7];
        let est = cell.estimates.as_ref().unwrap();
        assert_eq!(est.len() + cell.n_degenerate, 50);
        let truth = c.base_params.beta1;
        let mse = est.iter().map(|b| (b - truth).powi(2)).sum::<f64>() / est.len() as f64;
        assert_eq!(mse, cell.mse);
    }

    #[test]
    fn sampling_distribution_centering() {
        let mut p = DgpParams::baseline_design(2.0).with_pi1(1.0);
        p.noiseless = true;
        let draws = collect_sampling_distribution(&p, &PenaltySchedule::none(), 100, 5, 1).unwrap();
        assert!(draws.iter().all(|d| d.abs() < 1e-10));
        let stock = p.clone().with_stock_c(1.0);
        let draws =
            collect_sampling_distribution(&stock, &PenaltySchedule::none(), 100, 5, 1).unwrap();
        assert!(draws.iter().all(|d| (d - 20.0).abs() < 1e-9));
    }

    #[test]
    fn empirical_covariance_small() {
        let s = empirical_covariance(&[[1.0, 2.0], [3.0, 6.0]]);
        assert_eq!(s, Matrix2::new(1.0, 2.0, 2.0, 4.0));
    }
}
