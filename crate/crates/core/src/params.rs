//! Physical constants of the network.

use serde::{Deserialize, Serialize};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Link, compute, and power parameters shared by every VUE.
///
/// Sizes are in bits (1 kbit = 1000 bits), powers in watts, bandwidths in Hz,
/// CPU speeds in cycles per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalParams {
    /// Number of cameras.
    pub cameras: usize,
    /// Camera image size.
    pub image_bits: f64,
    /// Synthesized image size.
    pub synthesized_bits: f64,
    /// Processing density in cycles per bit.
    pub cycles_per_bit: f64,
    pub camera_bandwidth_hz: f64,
    pub server_bandwidth_hz: f64,
    pub camera_power_w: f64,
    pub server_power_budget_w: f64,
    /// Noise power spectral density in W/Hz.
    pub noise_psd_w_per_hz: f64,
    pub server_cpu_hz: f64,
    pub vue_cpu_hz: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            cameras: 4,
            image_bits: 20e3,
            synthesized_bits: 60e3,
            cycles_per_bit: 2339.0,
            camera_bandwidth_hz: 100e3,
            server_bandwidth_hz: 20e6,
            camera_power_w: dbm_to_watts(20.0),
            server_power_budget_w: dbm_to_watts(30.0),
            noise_psd_w_per_hz: dbm_to_watts(-174.0),
            server_cpu_hz: 2e11,
            vue_cpu_hz: 1e9,
        }
    }
}

impl PhysicalParams {
    /// Total CPU cycles needed to synthesize one VUE's image, `C * A * L`.
    pub fn task_cycles(&self) -> f64 {
        self.cameras as f64 * self.image_bits * self.cycles_per_bit
    }

    /// Names of fields that are not strictly positive.
    pub fn non_positive_fields(&self) -> Vec<&'static str> {
        let checks = [
            ("image_bits", self.image_bits),
            ("synthesized_bits", self.synthesized_bits),
            ("cycles_per_bit", self.cycles_per_bit),
            ("camera_bandwidth_hz", self.camera_bandwidth_hz),
            ("server_bandwidth_hz", self.server_bandwidth_hz),
            ("camera_power_w", self.camera_power_w),
            ("server_power_budget_w", self.server_power_budget_w),
            ("noise_psd_w_per_hz", self.noise_psd_w_per_hz),
            ("server_cpu_hz", self.server_cpu_hz),
            ("vue_cpu_hz", self.vue_cpu_hz),
        ];
        let mut bad: Vec<_> = checks
            .iter()
            .filter(|(_, v)| !(v.is_finite() && *v > 0.0))
            .map(|(name, _)| *name)
            .collect();
        if self.cameras == 0 {
            bad.insert(0, "cameras");
        }
        bad
    }
}
