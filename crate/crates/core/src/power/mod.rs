//! Uplink power control minimizing total training time.
//!
//! The synchronous objective is `max_k S·T/R_k + K·S·T/Σ_k R_k`, with
//! `R_k = prelog·log₂(1 + SINR_k(p))`. It is non-convex in `p`; [`sca_solve`]
//! minimizes it by successive convex approximation in `u = √p`.

pub mod barrier;
mod sca;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::link::{adc_coefficients, uplink_time_sync, PowerAllocation, RateVector, SinrCoefficients, TimingReport};
use crate::schedule::ServingMask;

pub use barrier::BarrierOptions;
pub use sca::{
    full_power_dac, rate_lower_bound, sca_solve, sca_solve_dac, solve_subproblem, DacOutcome, ScaOutcome, ScaState, Surrogate,
};

/// One synchronous power-control instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerScenario {
    pub coeffs: SinrCoefficients,
    /// W
    pub max_power: f64,
    pub prelog_hz: f64,
    pub update_bits: f64,
    pub rounds: usize,
}

impl PowerScenario {
    pub fn new(coeffs: SinrCoefficients, cfg: &SystemConfig) -> Self {
        PowerScenario {
            coeffs,
            max_power: cfg.max_power_w,
            prelog_hz: cfg.prelog_hz(),
            update_bits: cfg.update_size_bits,
            rounds: cfg.rounds,
        }
    }

    /// ADC-chain instance for large-scale gains `beta` and ADC gain `alpha`.
    pub fn adc(cfg: &SystemConfig, beta: &DMatrix<f64>, alpha: f64) -> Self {
        Self::new(adc_coefficients(beta, alpha, cfg.noise_power_w, cfg.grad_dim), cfg)
    }

    pub fn num_ues(&self) -> usize {
        self.coeffs.num_ues()
    }

    pub fn true_rates(&self, powers: &[f64]) -> RateVector {
        RateVector(
            self.coeffs
                .sinrs(powers)
                .into_iter()
                .map(|s| self.prelog_hz * (1.0 + s).log2())
                .collect(),
        )
    }

    /// Training time at `powers` using the exact SINR.
    pub fn true_time(&self, powers: &[f64]) -> Result<TimingReport> {
        uplink_time_sync(&self.true_rates(powers).0, self.update_bits, self.rounds)
    }

    pub(crate) fn check(&self) -> Result<()> {
        if !(self.max_power > 0.0) || !(self.prelog_hz > 0.0) || !(self.update_bits > 0.0) || self.rounds == 0 {
            return Err(Error::InvalidArgument("power scenario needs positive p_max, prelog, S and T".into()));
        }
        if let Some(k) = self.coeffs.signal.iter().position(|&a| !(a > 0.0)) {
            return Err(Error::UnservedUe { ue: k });
        }
        Ok(())
    }
}

/// Per-round DAC instance: masks fix the served sets, rounds are solved
/// independently.
#[derive(Debug, Clone, PartialEq)]
pub struct DacScenario {
    pub beta: DMatrix<f64>,
    pub zeta: f64,
    pub noise_power: f64,
    pub grad_dim: usize,
    pub max_power: f64,
    pub prelog_hz: f64,
    pub update_bits: f64,
    pub masks: Vec<ServingMask>,
}

impl DacScenario {
    pub fn new(cfg: &SystemConfig, beta: &DMatrix<f64>, zeta: f64, masks: Vec<ServingMask>) -> Self {
        DacScenario {
            beta: beta.clone(),
            zeta,
            noise_power: cfg.noise_power_w,
            grad_dim: cfg.grad_dim,
            max_power: cfg.max_power_w,
            prelog_hz: cfg.prelog_hz(),
            update_bits: cfg.update_size_bits,
            masks,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Outer stopping tolerance on the objective (s).
    pub tolerance_s: f64,
    pub max_outer_iters: usize,
    /// Allowed relative increase of the true objective between outer
    /// iterations before it is reported as an internal error.
    pub monotonicity_slack: f64,
    /// Start from full power instead of √(p_max/2).
    pub start_at_full_power: bool,
    #[serde(skip)]
    pub barrier: BarrierOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance_s: 1e-6,
            max_outer_iters: 100,
            monotonicity_slack: 1e-8,
            start_at_full_power: false,
            barrier: BarrierOptions::default(),
        }
    }
}

impl SolverOptions {
    pub(crate) fn check(&self) -> Result<()> {
        if !(self.tolerance_s > 0.0) || self.max_outer_iters == 0 {
            return Err(Error::InvalidArgument("tolerance must be > 0 and max_outer_iters >= 1".into()));
        }
        Ok(())
    }
}

/// Training time with every UE at `p_max`.
pub fn full_power_baseline(scenario: &PowerScenario) -> Result<TimingReport> {
    scenario.check()?;
    let p = PowerAllocation::full(scenario.num_ues(), scenario.max_power);
    scenario.true_time(p.as_slice())
}
