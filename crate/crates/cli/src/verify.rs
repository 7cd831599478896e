//! Monte Carlo checks of the closed-form limits for each penalty regime.

use std::fmt;

use clap::ValueEnum;
use ridgeiv::asymptotics::HEAVY_TAIL_KURTOSIS;
use ridgeiv::stats::{mean, variance};
use ridgeiv::{
    cauchy_diagnostics, collect_sampling_distribution, sqrtn_bias, staiger_stock_moments, v_ridge,
    DgpParams, PenaltySchedule,
};

use crate::config::{merge_params, ConfigError, VerifyFile};

pub const DEFAULT_VERIFY_N: usize = 10_000;
pub const DEFAULT_VERIFY_REPS: usize = 2000;
/// Relative tolerance for mean and variance comparisons.
pub const REL_TOL: f64 = 0.10;
/// Tolerance, in Monte Carlo standard errors, for mean comparisons against a bias.
pub const SE_TOL: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Regime {
    /// Strong instrument, penalty of order below sqrt(n): variance equals sigma_eps^2 / pi1^2.
    #[value(alias = "theorem2", alias = "theorem3")]
    Strong,
    /// Penalty growing like sqrt(n): the limit is shifted by -beta1 lambda0 / pi1.
    #[value(alias = "theorem4")]
    SqrtBias,
    /// Drifting first stage, no penalty: heavy-tailed 2SLS.
    #[value(name = "weak-2sls", alias = "theorem5")]
    Weak2sls,
    /// Drifting first stage, penalty growing like n: normal limit.
    #[value(alias = "theorem6")]
    WeakRidge,
    All,
}

impl Regime {
    pub fn expand(self) -> Vec<Regime> {
        match self {
            Regime::All => vec![
                Regime::Strong,
                Regime::SqrtBias,
                Regime::Weak2sls,
                Regime::WeakRidge,
            ],
            r => vec![r],
        }
    }

    fn is_weak(self) -> bool {
        matches!(self, Regime::Weak2sls | Regime::WeakRidge)
    }

    fn default_lambda0(self) -> f64 {
        match self {
            Regime::Strong | Regime::WeakRidge => 1.0,
            Regime::SqrtBias => 0.5,
            Regime::Weak2sls | Regime::All => 0.0,
        }
    }

    fn schedule(self, lambda0: f64) -> PenaltySchedule {
        match self {
            Regime::Strong => PenaltySchedule::constant(lambda0),
            Regime::SqrtBias => PenaltySchedule::sqrt_n(lambda0),
            Regime::Weak2sls | Regime::All => PenaltySchedule::none(),
            Regime::WeakRidge => PenaltySchedule::linear_n(lambda0),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_possible_value().expect("no skipped variants");
        f.write_str(v.get_name())
    }
}

/// A fully resolved verification run.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifySetup {
    pub regime: Regime,
    pub params: DgpParams,
    pub schedule: PenaltySchedule,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

impl VerifySetup {
    pub fn resolve(
        regime: Regime,
        file: &VerifyFile,
        reps: usize,
        seed: u64,
    ) -> Result<Self, ConfigError> {
        debug_assert!(regime != Regime::All);
        let base = if regime.is_weak() {
            DgpParams::baseline_design(1.0).with_stock_c(file.stock_c.unwrap_or(1.0))
        } else {
            if file.stock_c.is_some() {
                return Err(ConfigError(format!(
                    "field `stock_c`: only used by the weak regimes, not `{regime}`"
                )));
            }
            DgpParams::baseline_design(1.0).with_pi1(1.0)
        };
        let params = merge_params(base, file.params.as_ref())?;
        if regime.is_weak() != params.stock_c.is_some() {
            return Err(ConfigError(format!(
                "field `params.stock_c`: not allowed for `{regime}`"
            )));
        }
        if !regime.is_weak() && params.pi1 == 0.0 {
            return Err(ConfigError(format!(
                "field `params.pi1`: must be nonzero for `{regime}`"
            )));
        }
        let lambda0 = file.lambda0.unwrap_or_else(|| regime.default_lambda0());
        if !(lambda0.is_finite() && lambda0 >= 0.0) {
            return Err(ConfigError(format!(
                "field `lambda0`: {lambda0} is not a finite value >= 0"
            )));
        }
        if regime == Regime::WeakRidge && lambda0 == 0.0 {
            return Err(ConfigError(
                "field `lambda0`: must be > 0 for `weak-ridge`".into(),
            ));
        }
        let n = file.n.unwrap_or(DEFAULT_VERIFY_N);
        if n < 3 {
            return Err(ConfigError(format!("field `n`: must be >= 3, got {n}")));
        }
        if reps < ridgeiv::asymptotics::MIN_DIAGNOSTIC_SAMPLES {
            return Err(ConfigError(format!(
                "field `reps`: verification needs at least {} repetitions",
                ridgeiv::asymptotics::MIN_DIAGNOSTIC_SAMPLES
            )));
        }
        Ok(Self {
            regime,
            params,
            schedule: regime.schedule(lambda0),
            n,
            reps,
            seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Relative(f64),
    StdErrors {
        se: f64,
        count: f64,
    },
    /// Passes when the empirical kurtosis exceeds the heavy-tail threshold.
    HeavyTail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub quantity: &'static str,
    pub predicted: f64,
    pub empirical: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
}

impl Check {
    fn relative(quantity: &'static str, predicted: f64, empirical: f64) -> Self {
        let pass = ((empirical - predicted) / predicted).abs() <= REL_TOL;
        Self {
            quantity,
            predicted,
            empirical,
            tolerance: Tolerance::Relative(REL_TOL),
            pass,
        }
    }

    fn std_errors(quantity: &'static str, predicted: f64, empirical: f64, se: f64) -> Self {
        let pass = (empirical - predicted).abs() <= SE_TOL * se;
        Self {
            quantity,
            predicted,
            empirical,
            tolerance: Tolerance::StdErrors { se, count: SE_TOL },
            pass,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        match self.tolerance {
            Tolerance::Relative(t) => write!(
                f,
                "{:<9} predicted {:>12.6} empirical {:>12.6} rel err {:>6.2}% (tol {:.0}%) {verdict}",
                self.quantity,
                self.predicted,
                self.empirical,
                100.0 * ((self.empirical - self.predicted) / self.predicted).abs(),
                100.0 * t
            ),
            Tolerance::StdErrors { se, count } => write!(
                f,
                "{:<9} predicted {:>12.6} empirical {:>12.6} diff {:>6.2} se (tol {count} se, se = {se:.6}) {verdict}",
                self.quantity,
                self.predicted,
                self.empirical,
                (self.empirical - self.predicted).abs() / se
            ),
            Tolerance::HeavyTail => write!(
                f,
                "{:<9} threshold {:>12.6} empirical {:>12.6} heavy-tailed {} {verdict}",
                self.quantity, self.predicted, self.empirical, self.pass
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub setup: VerifySetup,
    pub kept_reps: usize,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Simulates the sampling distribution and compares it with the regime's prediction.
pub fn run_regime(setup: &VerifySetup) -> ridgeiv::Result<VerifyReport> {
    let p = &setup.params;
    let draws = collect_sampling_distribution(p, &setup.schedule, setup.n, setup.reps, setup.seed)?;
    let m = mean(&draws);
    let v = variance(&draws);
    let se = (v / draws.len() as f64).sqrt();
    let lambda0 = setup.schedule.lambda0;
    let checks = match setup.regime {
        Regime::Strong => {
            // A penalty of order below sqrt(n) leaves no bias in the limit.
            vec![
                Check::std_errors("mean", 0.0, m, se),
                Check::relative("variance", v_ridge(p)?, v),
            ]
        }
        Regime::SqrtBias => vec![
            Check::std_errors("mean", sqrtn_bias(p, lambda0)?, m, se),
            Check::relative("variance", v_ridge(p)?, v),
        ],
        Regime::Weak2sls => {
            let diag = cauchy_diagnostics(&draws)?;
            vec![Check {
                quantity: "kurtosis",
                predicted: HEAVY_TAIL_KURTOSIS,
                empirical: diag.kurtosis,
                tolerance: Tolerance::HeavyTail,
                pass: diag.heavy_tailed,
            }]
        }
        Regime::WeakRidge => {
            let (pm, pv) = staiger_stock_moments(p, lambda0)?;
            vec![
                Check::relative("mean", pm, m),
                Check::relative("variance", pv, v),
            ]
        }
        Regime::All => unreachable!("expanded before running"),
    };
    Ok(VerifyReport {
        setup: setup.clone(),
        kept_reps: draws.len(),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aliases_parse() {
        assert_eq!(
            Regime::from_str("theorem6", false).unwrap(),
            Regime::WeakRidge
        );
        assert_eq!(Regime::from_str("theorem3", false).unwrap(), Regime::Strong);
        assert_eq!(
            Regime::from_str("weak-2sls", false).unwrap(),
            Regime::Weak2sls
        );
        assert_eq!(Regime::All.expand().len(), 4);
    }

    #[test]
    fn resolve_rejects_misplaced_fields() {
        let file = VerifyFile {
            stock_c: Some(2.0),
            ..Default::default()
        };
        let e = VerifySetup::resolve(Regime::Strong, &file, 2000, 1).unwrap_err();
        assert!(e.0.contains("`stock_c`"), "{e}");

        let file = VerifyFile {
            lambda0: Some(0.0),
            ..Default::default()
        };
        let e = VerifySetup::resolve(Regime::WeakRidge, &file, 2000, 1).unwrap_err();
        assert!(e.0.contains("`lambda0`"), "{e}");

        let e = VerifySetup::resolve(Regime::Weak2sls, &VerifyFile::default(), 10, 1).unwrap_err();
        assert!(e.0.contains("`reps`"), "{e}");
    }

    #[test]
    fn defaults_per_regime() {
        let s = VerifySetup::resolve(Regime::WeakRidge, &VerifyFile::default(), 2000, 1).unwrap();
        assert_eq!(s.params.stock_c, Some(1.0));
        assert_eq!(s.schedule, PenaltySchedule::linear_n(1.0));
        let s = VerifySetup::resolve(Regime::SqrtBias, &VerifyFile::default(), 2000, 1).unwrap();
        assert_eq!(s.params.pi1, 1.0);
        assert_eq!(s.schedule, PenaltySchedule::sqrt_n(0.5));
        assert_eq!(s.n, DEFAULT_VERIFY_N);
    }
}
