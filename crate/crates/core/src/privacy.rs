//! Differential-privacy accounting for quantization noise.
//!
//! The effective receiver noise (thermal noise plus quantizer distortion) acts
//! as a Gaussian mechanism. Over `T` rounds the privacy statistic is
//! `Λ = Σ_t (Δ_t / m_t)²`, where `Δ_t` is the sensitivity of the noiseless
//! received signal and `m_t` the per-coordinate noise standard deviation.
//! The violation probability `Pr(|loss| > ε)` is then bounded by
//!
//! ```text
//! √(2Λ) / (√π (ε − Λ)) · exp(−(ε − Λ)² / (2Λ)),     ε > Λ.
//! ```
//!
//! Noise is treated as real Gaussian per coordinate with variance `m²`
//! (complex signals are stacked as real and imaginary parts).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantization::{DistortionTable, QuantizerModel};
use crate::rng::{SeedPath, Stream};
use crate::schedule::ServingMask;
use crate::topology::ChannelRealization;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl DpBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidArgument(format!("delta must be in [0, 1), got {delta}")));
        }
        Ok(DpBudget { epsilon, delta })
    }
}

/// Running record of per-round sensitivity and noise level.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DpLedger {
    pub sensitivity: Vec<f64>,
    pub noise_std: Vec<f64>,
    pub lambda: f64,
}

impl DpLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Ledger with one more round: Λ' = Λ + (Δ/m)².
    pub fn accumulate(&self, sensitivity: f64, noise_std: f64) -> Result<DpLedger> {
        let mut next = self.clone();
        next.push(sensitivity, noise_std)?;
        Ok(next)
    }

    pub fn push(&mut self, sensitivity: f64, noise_std: f64) -> Result<()> {
        let term = if sensitivity == 0.0 {
            0.0
        } else if noise_std > 0.0 {
            (sensitivity / noise_std).powi(2)
        } else {
            return Err(Error::ZeroNoise { round: self.sensitivity.len() });
        };
        self.sensitivity.push(sensitivity);
        self.noise_std.push(noise_std);
        self.lambda += term;
        Ok(())
    }

    pub fn rounds(&self) -> usize {
        self.sensitivity.len()
    }
}

/// How the per-AP cross products |h_kl* h_il| are combined into one
/// sensitivity figure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensitivityMode {
    /// Σ_l |h_kl||h_il|
    #[default]
    SumOverAps,
    /// |h_kl* h_il| at a single AP.
    PerAp(usize),
    /// Σ_l √(β_kl β_il), using large-scale statistics only.
    Statistical,
}

/// Sensitivity bound `max_i 2α√p_i·|h_k·h_i|` of UE `k`'s noiseless
/// combined signal, with the AP aggregation chosen by `mode`.
pub fn sensitivity_adc(powers: &[f64], alpha: f64, channel: &ChannelRealization, k: usize, mode: SensitivityMode) -> f64 {
    let n_ap = channel.h.nrows();
    let coupling = |i: usize| -> f64 {
        match mode {
            SensitivityMode::SumOverAps => (0..n_ap).map(|l| channel.h[(l, k)].norm() * channel.h[(l, i)].norm()).sum(),
            SensitivityMode::PerAp(l) => (channel.h[(l, k)].conj() * channel.h[(l, i)]).norm(),
            SensitivityMode::Statistical => (0..n_ap).map(|l| (channel.beta[(l, k)] * channel.beta[(l, i)]).sqrt()).sum(),
        }
    };
    powers
        .iter()
        .enumerate()
        .map(|(i, &p)| 2.0 * alpha * p.sqrt() * coupling(i))
        .fold(0.0, f64::max)
}

/// m_k = sqrt(α²Σ_l β_kl σ² + α(1−α)Σ_l β_kl(Σ_i p_i β_il + σ²)).
pub fn effective_noise_std_adc(powers: &[f64], alpha: f64, beta: &DMatrix<f64>, noise_power: f64, k: usize) -> f64 {
    let mut thermal = 0.0;
    let mut distortion = 0.0;
    for l in 0..beta.nrows() {
        let rx: f64 = powers.iter().enumerate().map(|(i, p)| p * beta[(l, i)]).sum();
        thermal += beta[(l, k)] * noise_power;
        distortion += beta[(l, k)] * (rx + noise_power);
    }
    (alpha * alpha * thermal + alpha * (1.0 - alpha) * distortion).sqrt()
}

/// DAC-side sensitivity at AP `ap`: 2·max_{i served} √p_i|h_il|.
pub fn sensitivity_dac(powers: &[f64], h: &DMatrix<Complex64>, mask: &ServingMask, ap: usize) -> f64 {
    powers
        .iter()
        .enumerate()
        .filter(|&(i, _)| mask.serves(ap, i))
        .map(|(i, &p)| 2.0 * p.sqrt() * h[(ap, i)].norm())
        .fold(0.0, f64::max)
}

/// σ_eff at AP `ap`: sqrt(Σ_i d_il β_il ζ(1−ζ) p_i + σ²).
pub fn effective_noise_std_dac(powers: &[f64], zeta: f64, beta: &DMatrix<f64>, mask: &ServingMask, noise_power: f64, ap: usize) -> f64 {
    let dist: f64 = powers
        .iter()
        .enumerate()
        .filter(|&(i, _)| mask.serves(ap, i))
        .map(|(i, p)| beta[(ap, i)] * zeta * (1.0 - zeta) * p)
        .sum();
    (dist + noise_power).sqrt()
}

/// Closed-form violation bound; 0 when Λ = 0.
pub fn dp_violation_bound(lambda: f64, epsilon: f64) -> Result<f64> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let margin = epsilon - lambda;
    if !(margin > 0.0) {
        return Err(Error::MarginViolation { epsilon, lambda });
    }
    Ok((2.0 * lambda).sqrt() / (std::f64::consts::PI.sqrt() * margin) * (-margin * margin / (2.0 * lambda)).exp())
}

/// True when the bound certifies the budget (bound < δ). A margin
/// violation counts as not certified.
pub fn check_dp(lambda: f64, budget: &DpBudget) -> Result<bool> {
    match dp_violation_bound(lambda, budget.epsilon) {
        Ok(b) => Ok(b < budget.delta),
        Err(Error::MarginViolation { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

fn lambda_of(sensitivity: &[f64], noise_std: &[f64]) -> Result<f64> {
    if sensitivity.len() != noise_std.len() {
        return Err(Error::InvalidArgument("sensitivity and noise sequences differ in length".into()));
    }
    let mut ledger = DpLedger::new();
    for (&d, &s) in sensitivity.iter().zip(noise_std) {
        ledger.push(d, s)?;
    }
    Ok(ledger.lambda)
}

/// DAC-side bound with ν = Σ_t (Δ_t/σ_eff,t)², evaluated with the same
/// closed form as the ADC chain.
pub fn dp_condition_dac(sensitivity: &[f64], sigma_eff: &[f64], epsilon: f64) -> Result<f64> {
    dp_violation_bound(lambda_of(sensitivity, sigma_eff)?, epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub samples: u64,
}

const MC_SHARD: u64 = 1 << 16;

/// Empirical `Pr(|Σ_t (2ωᵀv + ‖v‖²)/(2m²)| > ε)` with worst-case ‖v‖ = Δ.
///
/// Only the component of ω along v matters, so v is placed on the first
/// axis and one Gaussian coordinate is drawn per round. Work is split into
/// fixed-size shards with their own seeds so the estimate does not depend on
/// the thread count.
pub fn monte_carlo_violation(
    sensitivity: &[f64],
    noise_std: &[f64],
    epsilon: f64,
    samples: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if samples < 10_000 {
        return Err(Error::InvalidArgument("monte carlo needs at least 10^4 samples".into()));
    }
    // validates lengths / zero noise
    lambda_of(sensitivity, noise_std)?;
    let rounds: Vec<(f64, f64)> = sensitivity
        .iter()
        .zip(noise_std)
        .filter(|(d, _)| **d != 0.0)
        .map(|(&d, &m)| (d, m))
        .collect();
    let base = SeedPath::root(seed).stream(Stream::MonteCarlo);
    let shards = samples.div_ceil(MC_SHARD);
    let hits: u64 = (0..shards)
        .into_par_iter()
        .map(|s| {
            let n = MC_SHARD.min(samples - s * MC_SHARD);
            let mut rng = base.child(s).rng();
            let mut count = 0u64;
            for _ in 0..n {
                let mut loss = 0.0;
                for &(delta, m) in &rounds {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let omega = m * z;
                    loss += (2.0 * omega * delta + delta * delta) / (2.0 * m * m);
                }
                if loss.abs() > epsilon {
                    count += 1;
                }
            }
            count
        })
        .sum();
    let p = hits as f64 / samples as f64;
    Ok(MonteCarloEstimate {
        probability: p,
        std_error: (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
    })
}

/// Powers and channel of one round, as seen by the accountant.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyRound {
    pub channel: ChannelRealization,
    pub powers: Vec<f64>,
}

/// Multi-round ADC scenario used to pick a bit depth.
#[derive(Debug, Clone, PartialEq)]
pub struct AdcPrivacyScenario {
    pub rounds: Vec<PrivacyRound>,
    pub noise_power: f64,
    pub mode: SensitivityMode,
    pub table: DistortionTable,
}

impl AdcPrivacyScenario {
    /// Λ_k for every UE at gain `alpha`.
    pub fn lambdas(&self, alpha: f64) -> Result<Vec<f64>> {
        let num_ues = self.rounds.first().map_or(0, |r| r.powers.len());
        (0..num_ues)
            .map(|k| {
                let mut ledger = DpLedger::new();
                for r in &self.rounds {
                    let delta = sensitivity_adc(&r.powers, alpha, &r.channel, k, self.mode);
                    let m = effective_noise_std_adc(&r.powers, alpha, &r.channel.beta, self.noise_power, k);
                    ledger.push(delta, m)?;
                }
                Ok(ledger.lambda)
            })
            .collect()
    }

    /// Worst-case Λ over UEs at `bits`.
    pub fn worst_lambda(&self, bits: u32) -> Result<f64> {
        let q = QuantizerModel::new(bits, self.table)?;
        Ok(self.lambdas(q.gain)?.into_iter().fold(0.0, f64::max))
    }
}

/// Smallest `b` in `bits` whose worst-case Λ is certified by the bound.
pub fn min_bits_for_budget(
    budget: &DpBudget,
    scenario: &AdcPrivacyScenario,
    bits: std::ops::RangeInclusive<u32>,
) -> Result<Option<u32>> {
    if bits.is_empty() {
        return Err(Error::InvalidArgument("empty bit range".into()));
    }
    for b in bits {
        if check_dp(scenario.worst_lambda(b)?, budget)? {
            return Ok(Some(b));
        }
    }
    Ok(None)
}

/// Largest `b` in `bits` still certified, scanning from the top.
pub fn max_bits_for_budget(
    budget: &DpBudget,
    scenario: &AdcPrivacyScenario,
    bits: std::ops::RangeInclusive<u32>,
) -> Result<Option<u32>> {
    if bits.is_empty() {
        return Err(Error::InvalidArgument("empty bit range".into()));
    }
    for b in bits.rev() {
        if check_dp(scenario.worst_lambda(b)?, budget)? {
            return Ok(Some(b));
        }
    }
    Ok(None)
}
