//! Scalar system parameters shared by every module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thermal noise floor in dBm/Hz at 290 K.
const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Noise power over `bandwidth_hz` with the given receiver noise figure.
pub fn noise_power_watts(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    dbm_to_watts(THERMAL_NOISE_DBM_PER_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// L
    pub num_aps: usize,
    /// K
    pub num_ues: usize,
    /// Side of the square deployment area (km).
    pub area_side_km: f64,
    /// Per-antenna noise power σ² (W).
    pub noise_power_w: f64,
    pub bandwidth_hz: f64,
    pub pilot_len: usize,
    pub block_len: usize,
    /// Gradient dimension d.
    pub grad_dim: usize,
    pub max_power_w: f64,
    /// Size of one uploaded update, in bits.
    pub update_size_bits: f64,
    /// Number of FL rounds T.
    pub rounds: usize,
    /// Learning rate; `None` means 1/M from the loss curvature.
    pub learning_rate: Option<f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            num_aps: 10,
            num_ues: 3,
            area_side_km: 1.0,
            noise_power_w: noise_power_watts(20e6, 9.0),
            bandwidth_hz: 20e6,
            pilot_len: 10,
            block_len: 200,
            grad_dim: 10,
            max_power_w: 0.2,
            update_size_bits: 1e6,
            rounds: 100,
            learning_rate: None,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.num_aps == 0 {
            return fail("num_aps must be >= 1");
        }
        if self.num_ues == 0 {
            return fail("num_ues must be >= 1");
        }
        if !(self.pilot_len < self.block_len) {
            return fail("pilot_len must be < block_len");
        }
        if !(self.noise_power_w > 0.0) {
            return fail("noise_power_w must be > 0");
        }
        if !(self.max_power_w > 0.0) {
            return fail("max_power_w must be > 0");
        }
        if self.grad_dim == 0 {
            return fail("grad_dim must be >= 1");
        }
        if !(self.area_side_km > 0.0) {
            return fail("area_side_km must be > 0");
        }
        if !(self.bandwidth_hz > 0.0) || !(self.update_size_bits > 0.0) {
            return fail("bandwidth_hz and update_size_bits must be > 0");
        }
        if let Some(eta) = self.learning_rate {
            if !(eta > 0.0) {
                return fail("learning_rate must be > 0");
            }
        }
        Ok(())
    }

    /// Pre-log factor (1 − τ_p/τ_c)·B.
    pub fn prelog_hz(&self) -> f64 {
        (1.0 - self.pilot_len as f64 / self.block_len as f64) * self.bandwidth_hz
    }
}
