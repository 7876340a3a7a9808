//! SINR, achievable rate and uplink training time for both signal chains.
//!
//! Both SINR expressions share the shape
//!
//! ```text
//! SINR_k = p_k a_k / (Σ_i p_i c_ki + n_k)
//! ```
//!
//! which [`SinrCoefficients`] stores explicitly so the power-control solver
//! can treat the ADC and DAC settings uniformly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::schedule::ServingMask;

/// Transmit powers (W), one per UE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation(pub Vec<f64>);

impl PowerAllocation {
    pub fn full(num_ues: usize, max_power: f64) -> Self {
        PowerAllocation(vec![max_power; num_ues])
    }

    pub fn validate(&self, max_power: f64) -> Result<()> {
        for (k, &p) in self.0.iter().enumerate() {
            if !(0.0..=max_power * (1.0 + 1e-12)).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "power of UE {k} is {p}, outside [0, {max_power}]"
                )));
            }
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Linear-fractional SINR model `p_k a_k / (Σ_i p_i c_ki + n_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrCoefficients {
    pub signal: Vec<f64>,
    /// `cross[(k, i)]` multiplies `p_i` in UE `k`'s denominator.
    pub cross: DMatrix<f64>,
    pub noise: Vec<f64>,
}

impl SinrCoefficients {
    pub fn num_ues(&self) -> usize {
        self.signal.len()
    }

    /// Denominator Σ_i p_i c_ki + n_k.
    pub fn denominator(&self, k: usize, powers: &[f64]) -> f64 {
        let interf: f64 = powers.iter().enumerate().map(|(i, p)| p * self.cross[(k, i)]).sum();
        interf + self.noise[k]
    }

    /// SINR of UE `k`; 0 when the UE receives neither signal nor noise.
    pub fn sinr(&self, k: usize, powers: &[f64]) -> f64 {
        let num = powers[k] * self.signal[k];
        if num == 0.0 {
            return 0.0;
        }
        num / self.denominator(k, powers)
    }

    pub fn sinrs(&self, powers: &[f64]) -> Vec<f64> {
        (0..self.num_ues()).map(|k| self.sinr(k, powers)).collect()
    }

    /// Restriction to the UEs in `keep` (in the given order).
    pub fn restrict(&self, keep: &[usize]) -> SinrCoefficients {
        SinrCoefficients {
            signal: keep.iter().map(|&k| self.signal[k]).collect(),
            cross: DMatrix::from_fn(keep.len(), keep.len(), |a, b| self.cross[(keep[a], keep[b])]),
            noise: keep.iter().map(|&k| self.noise[k]).collect(),
        }
    }
}

/// Coefficients of the ADC-chain SINR:
///
/// ```text
/// A_k  = α² (Σ_l β_kl)²          B_ki = α² Σ_l β_kl β_il
/// C_k  = α² σ² Σ_l β_kl          D_k  = d α(1−α) σ² Σ_l β_kl
/// E_ki = d α(1−α) Σ_l β_il β_kl
/// SINR_k = p_k A_k / (Σ_{i≠k} p_i B_ki + C_k + D_k + Σ_i p_i E_ki)
/// ```
pub fn adc_coefficients(beta: &DMatrix<f64>, alpha: f64, noise_power: f64, grad_dim: usize) -> SinrCoefficients {
    let (n_ap, n_ue) = beta.shape();
    let d = grad_dim as f64;
    let dist = alpha * (1.0 - alpha);
    let col_sum: Vec<f64> = (0..n_ue).map(|k| beta.column(k).sum()).collect();
    let overlap = |k: usize, i: usize| (0..n_ap).map(|l| beta[(l, k)] * beta[(l, i)]).sum::<f64>();
    let mut cross = DMatrix::zeros(n_ue, n_ue);
    for k in 0..n_ue {
        for i in 0..n_ue {
            let ov = overlap(k, i);
            let b = if i == k { 0.0 } else { alpha * alpha * ov };
            cross[(k, i)] = b + d * dist * ov;
        }
    }
    SinrCoefficients {
        signal: col_sum.iter().map(|s| alpha * alpha * s * s).collect(),
        cross,
        noise: col_sum
            .iter()
            .map(|s| alpha * alpha * noise_power * s + d * dist * s * noise_power)
            .collect(),
    }
}

/// Coefficients of the masked DAC-chain SINR:
///
/// ```text
/// A_k  = ζ² (Σ_l d_kl β_kl)²     C_ki = ζ² Σ_l d_kl β_kl β_il
/// E_ki = d Σ_l d_il β_kl β_il ζ(1−ζ)
/// F_k  = d σ² Σ_l d_kl β_kl
/// SINR_k = p_k A_k / (Σ_i p_i C_ki + Σ_i p_i E_ki + F_k)
/// ```
///
/// The distortion term uses the interferer's mask `d_il`.
pub fn dac_coefficients(
    beta: &DMatrix<f64>,
    zeta: f64,
    mask: &ServingMask,
    noise_power: f64,
    grad_dim: usize,
) -> SinrCoefficients {
    let (n_ap, n_ue) = beta.shape();
    assert_eq!((mask.num_aps(), mask.num_ues()), (n_ap, n_ue), "mask shape");
    let d = grad_dim as f64;
    let dist = zeta * (1.0 - zeta);
    let served_sum: Vec<f64> = (0..n_ue)
        .map(|k| (0..n_ap).filter(|&l| mask.serves(l, k)).map(|l| beta[(l, k)]).sum())
        .collect();
    let mut cross = DMatrix::zeros(n_ue, n_ue);
    for k in 0..n_ue {
        for i in 0..n_ue {
            let mut c = 0.0;
            let mut e = 0.0;
            for l in 0..n_ap {
                let bb = beta[(l, k)] * beta[(l, i)];
                if mask.serves(l, k) {
                    c += bb;
                }
                if mask.serves(l, i) {
                    e += bb;
                }
            }
            cross[(k, i)] = zeta * zeta * c + d * dist * e;
        }
    }
    SinrCoefficients {
        signal: served_sum.iter().map(|s| zeta * zeta * s * s).collect(),
        cross,
        noise: served_sum.iter().map(|s| d * noise_power * s).collect(),
    }
}

/// ADC-chain SINR of UE `k`.
pub fn sinr_adc(k: usize, powers: &[f64], beta: &DMatrix<f64>, alpha: f64, noise_power: f64, grad_dim: usize) -> f64 {
    adc_coefficients(beta, alpha, noise_power, grad_dim).sinr(k, powers)
}

/// DAC-chain SINR of UE `k` under serving mask `mask`.
pub fn sinr_dac(
    k: usize,
    powers: &[f64],
    beta: &DMatrix<f64>,
    zeta: f64,
    mask: &ServingMask,
    noise_power: f64,
    grad_dim: usize,
) -> f64 {
    dac_coefficients(beta, zeta, mask, noise_power, grad_dim).sinr(k, powers)
}

/// (1 − τ_p/τ_c)·B·log₂(1 + sinr), in bit/s.
pub fn rate(sinr: f64, cfg: &SystemConfig) -> f64 {
    cfg.prelog_hz() * (1.0 + sinr.max(0.0)).log2()
}

/// Achievable rates (bit/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateVector(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    /// Accumulated UE-to-AP time per UE (s).
    pub per_ue: Vec<f64>,
    /// Accumulated AP-to-CPU time (s).
    pub fronthaul: f64,
    /// Training time (s).
    pub total: f64,
    /// Contribution of each round to `total`.
    pub round_totals: Vec<f64>,
}

/// Synchronous training time `max_k ST/R_k + K·S·T/Σ_k R_k`.
pub fn uplink_time_sync(rates: &[f64], update_bits: f64, rounds: usize) -> Result<TimingReport> {
    if let Some(k) = rates.iter().position(|&r| !(r > 0.0)) {
        return Err(Error::UnservedUe { ue: k });
    }
    let st = update_bits * rounds as f64;
    let per_ue: Vec<f64> = rates.iter().map(|r| st / r).collect();
    let fronthaul = rates.len() as f64 * st / rates.iter().sum::<f64>();
    let slowest = per_ue.iter().cloned().fold(0.0, f64::max);
    let total = slowest + fronthaul;
    Ok(TimingReport {
        per_ue,
        fronthaul,
        total,
        round_totals: vec![total / rounds.max(1) as f64; rounds],
    })
}

/// Time of one asynchronous round over the served set `active`:
/// `max_{k∈K^t} S/R_k + |K^t|·S/Σ_{k∈K^t} R_k`.
pub fn round_time(rates: &[f64], active: &[usize], update_bits: f64) -> Result<(f64, f64)> {
    if active.is_empty() {
        return Err(Error::Protocol("empty active set".into()));
    }
    let mut slowest: f64 = 0.0;
    let mut sum = 0.0;
    for &k in active {
        let r = rates[k];
        if !(r > 0.0) {
            return Err(Error::UnservedUe { ue: k });
        }
        slowest = slowest.max(update_bits / r);
        sum += r;
    }
    Ok((slowest, active.len() as f64 * update_bits / sum))
}

/// Asynchronous training time summed over rounds; `rates[t][k]` is the rate
/// of UE `k` in round `t`, and the served set of each round comes from its mask.
pub fn uplink_time_async(rates: &[Vec<f64>], masks: &[ServingMask], update_bits: f64) -> Result<TimingReport> {
    if rates.len() != masks.len() {
        return Err(Error::InvalidArgument("one mask per round is required".into()));
    }
    let num_ues = masks.first().map_or(0, |m| m.num_ues());
    let mut per_ue = vec![0.0; num_ues];
    let mut fronthaul = 0.0;
    let mut round_totals = Vec::with_capacity(rates.len());
    for (r_t, mask) in rates.iter().zip(masks) {
        let active = mask.active_set()?;
        let (slowest, fh) = round_time(r_t, &active, update_bits)?;
        for &k in &active {
            per_ue[k] += update_bits / r_t[k];
        }
        fronthaul += fh;
        round_totals.push(slowest + fh);
    }
    Ok(TimingReport {
        per_ue,
        fronthaul,
        total: round_totals.iter().sum(),
        round_totals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn single_link_adc_examples() {
        let beta = m(1, 1, &[1.0]);
        assert_eq!(sinr_adc(0, &[0.0], &beta, 0.5, 1.0, 2), 0.0);
        assert!((sinr_adc(0, &[1.0], &beta, 1.0, 1.0, 7) - 1.0).abs() < 1e-15);
        // A = 0.25, C = 0.25, D = 0.5, E = 0.5, p = 4 → 1/2.75
        let s = sinr_adc(0, &[4.0], &beta, 0.5, 1.0, 2);
        assert!((s - 1.0 / 2.75).abs() < 1e-15, "{s}");
    }

    /// Term-by-term evaluation of the ADC expression for a 2-AP, 2-UE case.
    #[test]
    fn adc_matches_scalar_expansion() {
        let beta = m(2, 2, &[0.9, 0.2, 0.3, 0.7]);
        let (a, s2, d) = (0.6_f64, 0.05, 3.0);
        let p = [0.8, 0.4];
        let b = |l: usize, k: usize| beta[(l, k)];
        let k = 0;
        let sum_k = b(0, 0) + b(1, 0);
        let a_k = a * a * sum_k * sum_k;
        let b_k1 = a * a * (b(0, 0) * b(0, 1) + b(1, 0) * b(1, 1));
        let c_k = a * a * s2 * sum_k;
        let d_k = d * a * (1.0 - a) * sum_k * s2;
        let e_k0 = d * a * (1.0 - a) * (b(0, 0) * b(0, 0) + b(1, 0) * b(1, 0));
        let e_k1 = d * a * (1.0 - a) * (b(0, 1) * b(0, 0) + b(1, 1) * b(1, 0));
        let expect = p[0] * a_k / (p[1] * b_k1 + c_k + d_k + p[0] * e_k0 + p[1] * e_k1);
        let got = sinr_adc(k, &p, &beta, a, s2, 3);
        assert!((got - expect).abs() < 1e-14 * expect, "{got} vs {expect}");
    }

    #[test]
    fn perfect_adc_reduces_to_mrc() {
        let beta = m(3, 2, &[0.5, 0.1, 0.2, 0.4, 0.05, 0.3]);
        let p = [0.2, 0.15];
        for dim in [1, 10, 1000] {
            let s = sinr_adc(1, &p, &beta, 1.0, 0.01, dim);
            let sum1: f64 = beta.column(1).sum();
            let ov: f64 = (0..3).map(|l| beta[(l, 0)] * beta[(l, 1)]).sum();
            let expect = p[1] * sum1 * sum1 / (p[0] * ov + 0.01 * sum1);
            assert!((s - expect).abs() < 1e-14 * expect);
        }
    }

    #[test]
    fn dac_unserved_ue_has_zero_sinr() {
        let beta = m(2, 2, &[0.9, 0.2, 0.3, 0.7]);
        let mask = ServingMask::from_rows(&[vec![false, true], vec![false, true]]);
        assert_eq!(sinr_dac(0, &[0.2, 0.2], &beta, 0.5, &mask, 0.1, 2), 0.0);
    }

    #[test]
    fn dac_perfect_full_mask_has_no_distortion_term() {
        let beta = m(2, 2, &[0.9, 0.2, 0.3, 0.7]);
        let mask = ServingMask::full(2, 2);
        let c = dac_coefficients(&beta, 1.0, &mask, 0.1, 4);
        let ov = |k: usize, i: usize| beta[(0, k)] * beta[(0, i)] + beta[(1, k)] * beta[(1, i)];
        for k in 0..2 {
            for i in 0..2 {
                assert!((c.cross[(k, i)] - ov(k, i)).abs() < 1e-15);
            }
        }
    }

    /// Brute-force scalar evaluation of the masked DAC SINR.
    #[test]
    fn dac_matches_scalar_expansion() {
        let beta = m(2, 2, &[0.9, 0.2, 0.3, 0.7]);
        let mask = ServingMask::from_rows(&[vec![true, true], vec![false, true]]);
        let (z, s2, dim) = (0.5_f64, 0.1, 3.0);
        let p = [0.6, 0.3];
        let dm = |l: usize, k: usize| if mask.serves(l, k) { 1.0 } else { 0.0 };
        let b = |l: usize, k: usize| beta[(l, k)];
        for k in 0..2 {
            let served: f64 = (0..2).map(|l| dm(l, k) * b(l, k)).sum();
            let a_k = z * z * served * served;
            let mut den = dim * s2 * served;
            for i in 0..2 {
                let c_ki: f64 = z * z * (0..2).map(|l| dm(l, k) * b(l, k) * b(l, i)).sum::<f64>();
                let e_ki: f64 = dim * (0..2).map(|l| dm(l, i) * b(l, k) * b(l, i) * z * (1.0 - z)).sum::<f64>();
                den += p[i] * (c_ki + e_ki);
            }
            let expect = p[k] * a_k / den;
            let got = sinr_dac(k, &p, &beta, z, &mask, s2, 3);
            assert!((got - expect).abs() < 1e-14 * expect, "k={k}: {got} vs {expect}");
        }
    }

    #[test]
    fn rate_examples() {
        let mut cfg = SystemConfig {
            bandwidth_hz: 1.0,
            pilot_len: 0,
            block_len: 200,
            ..SystemConfig::default()
        };
        assert_eq!(rate(0.0, &cfg), 0.0);
        assert!((rate(1.0, &cfg) - 1.0).abs() < 1e-15);
        cfg.bandwidth_hz = 1e6;
        cfg.pilot_len = 10;
        assert!((rate(3.0, &cfg) - 1.9e6).abs() < 1e-6);
    }

    #[test]
    fn sync_time_examples() {
        assert!((uplink_time_sync(&[1.0, 1.0], 1.0, 1).unwrap().total - 2.0).abs() < 1e-15);
        let t = uplink_time_sync(&[1.0, 2.0], 1.0, 1).unwrap();
        assert!((t.total - (1.0 + 2.0 / 3.0)).abs() < 1e-15);
        assert!(matches!(uplink_time_sync(&[1.0, 0.0], 1.0, 1), Err(Error::UnservedUe { ue: 1 })));
    }

    #[test]
    fn async_time_examples() {
        let one = ServingMask::from_rows(&[vec![true]]);
        let t = uplink_time_async(&[vec![1.0]], &[one], 1.0).unwrap();
        assert!((t.total - 2.0).abs() < 1e-15);

        // full masks + equal rates reduce to the synchronous per-round time
        let full = ServingMask::full(2, 3);
        let rates = vec![vec![2.0, 2.0, 2.0]; 4];
        let a = uplink_time_async(&rates, &vec![full; 4], 5.0).unwrap();
        let s = uplink_time_sync(&[2.0, 2.0, 2.0], 5.0, 4).unwrap();
        assert!((a.total - s.total).abs() < 1e-12);

        // two rounds, hand-summed
        let m1 = ServingMask::from_rows(&[vec![true, false], vec![false, false]]);
        let m2 = ServingMask::from_rows(&[vec![true, false], vec![false, true]]);
        let rates = vec![vec![4.0, 1.0], vec![2.0, 8.0]];
        let t = uplink_time_async(&rates, &[m1, m2], 2.0).unwrap();
        let r1 = 2.0 / 4.0 + 1.0 * 2.0 / 4.0;
        let r2 = f64::max(2.0 / 2.0, 2.0 / 8.0) + 2.0 * 2.0 / 10.0;
        assert!((t.total - (r1 + r2)).abs() < 1e-14);
        assert_eq!(t.round_totals.len(), 2);
    }

    #[test]
    fn async_rejects_empty_round() {
        let none = ServingMask::from_rows(&[vec![false, false]]);
        assert!(matches!(
            uplink_time_async(&[vec![1.0, 1.0]], &[none], 1.0),
            Err(Error::Protocol(_))
        ));
    }

    fn instance() -> impl Strategy<Value = (DMatrix<f64>, Vec<f64>, f64)> {
        (1usize..5, 2usize..5).prop_flat_map(|(l, k)| {
            (
                proptest::collection::vec(1e-3..1.0f64, l * k).prop_map(move |v| DMatrix::from_vec(l, k, v)),
                proptest::collection::vec(0.01..1.0f64, k),
                0.05..1.0f64,
            )
        })
    }

    proptest! {
        #[test]
        fn adc_sinr_monotone_in_powers((beta, p, alpha) in instance(), bump in 1.01..3.0f64) {
            let k = 0;
            let base = sinr_adc(k, &p, &beta, alpha, 0.1, 5);
            let mut up = p.clone();
            up[k] *= bump;
            prop_assert!(sinr_adc(k, &up, &beta, alpha, 0.1, 5) > base);
            let mut other = p.clone();
            other[1] *= bump;
            prop_assert!(sinr_adc(k, &other, &beta, alpha, 0.1, 5) <= base * (1.0 + 1e-12));
        }

        #[test]
        fn sync_time_non_increasing_in_rates(r in proptest::collection::vec(0.1..10.0f64, 1..6), f in 1.0..2.0f64, idx in 0usize..6) {
            let t0 = uplink_time_sync(&r, 3.0, 7).unwrap().total;
            let mut r2 = r.clone();
            let i = idx % r.len();
            r2[i] *= f;
            prop_assert!(uplink_time_sync(&r2, 3.0, 7).unwrap().total <= t0 * (1.0 + 1e-12));
        }
    }
}
