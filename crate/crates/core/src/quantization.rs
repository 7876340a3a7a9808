//! Additive quantization noise model (AQNM) for low-resolution ADCs and DACs.
//!
//! A `b`-bit quantizer is linearized as `Q(y) = gain·y + n` where `n` is
//! Gaussian and uncorrelated with `y`. With distortion factor `ρ(b)`, the gain
//! is `1 − ρ` and the distortion variance per coordinate is
//! `gain·(1 − gain)·E|y|²`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::complex_normal;

/// High-resolution distortion constant π√3/2.
pub const AQNM_CONSTANT: f64 = 2.720_699_046_351_326_4;

/// Lloyd-Max distortion factors for b = 1..=5 (Gaussian input).
const LLOYD_MAX_RHO: [f64; 5] = [0.3634, 0.1175, 0.03454, 0.009497, 0.002499];

/// How the distortion factor ρ(b) is obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistortionTable {
    /// ρ = (π√3/2)·2^(−2b), gain = 1 − min(1, ρ).
    #[default]
    HighResolution,
    /// Exact Lloyd-Max ρ for b ≤ 5, high-resolution formula above.
    LloydMax,
    /// gain = (π√3/2)·2^(−2b) taken literally (gain shrinks with b).
    LiteralGain,
}

fn check_bits(bits: u32) -> Result<()> {
    if bits == 0 {
        return Err(Error::InvalidArgument("quantizer bits must be >= 1".into()));
    }
    Ok(())
}

/// ρ(b) = (π√3/2)·2^(−2b), clamped to 1.
pub fn distortion_factor(bits: u32) -> Result<f64> {
    check_bits(bits)?;
    Ok((AQNM_CONSTANT * 2f64.powi(-2 * bits as i32)).min(1.0))
}

/// Linear gain α (ADC) or ζ (DAC) for `bits` of resolution.
pub fn aqnm_gain(bits: u32) -> Result<f64> {
    Ok(1.0 - distortion_factor(bits)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerModel {
    pub bits: u32,
    pub gain: f64,
    pub distortion_factor: f64,
}

impl QuantizerModel {
    pub fn new(bits: u32, table: DistortionTable) -> Result<Self> {
        check_bits(bits)?;
        let rho = match table {
            DistortionTable::HighResolution => distortion_factor(bits)?,
            DistortionTable::LloydMax => match LLOYD_MAX_RHO.get(bits as usize - 1) {
                Some(&rho) => rho,
                None => distortion_factor(bits)?,
            },
            DistortionTable::LiteralGain => 1.0 - distortion_factor(bits)?,
        };
        Ok(QuantizerModel {
            bits,
            gain: 1.0 - rho,
            distortion_factor: rho,
        })
    }

    /// An ideal converter (gain 1, no distortion).
    pub fn ideal() -> Self {
        QuantizerModel {
            bits: u32::MAX,
            gain: 1.0,
            distortion_factor: 0.0,
        }
    }

    /// gain·(1 − gain)
    pub fn distortion_scale(&self) -> f64 {
        self.gain * (1.0 - self.gain)
    }
}

/// Per-coordinate variance of the ADC distortion at one AP:
/// α(1−α)(Σ_i p_i β_il + σ²).
pub fn adc_distortion_var(alpha: f64, powers: &[f64], beta_col: &[f64], noise_power: f64) -> f64 {
    debug_assert_eq!(powers.len(), beta_col.len());
    let rx: f64 = powers.iter().zip(beta_col).map(|(p, b)| p * b).sum();
    alpha * (1.0 - alpha) * (rx + noise_power)
}

/// Per-coordinate variance of the DAC distortion of one UE: ζ(1−ζ)p.
pub fn dac_distortion_var(zeta: f64, power: f64) -> f64 {
    zeta * (1.0 - zeta) * power
}

/// Applies the linearized quantizer: `gain·signal + n`, n ~ CN(0, distortion_var·I).
pub fn apply_quantizer<R: Rng + ?Sized>(
    signal: &[Complex64],
    gain: f64,
    distortion_var: f64,
    rng: &mut R,
) -> Vec<Complex64> {
    let sd = distortion_var.max(0.0).sqrt();
    signal
        .iter()
        .map(|&y| {
            if sd > 0.0 {
                y * gain + complex_normal(rng) * sd
            } else {
                y * gain
            }
        })
        .collect()
}
