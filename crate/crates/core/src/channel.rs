//! Channel model: static path loss plus two-level quantized Rayleigh fading.
//!
//! Fading power on every link is unit-mean exponential and is quantized into
//! `Low`/`High` at a threshold. Each level is represented by the conditional
//! mean of the fading power on its side of the threshold, so the quantized
//! fading keeps the unit mean. With the default median threshold `ln 2` the
//! levels are equiprobable and the representatives are `1 - ln 2` and
//! `1 + ln 2`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, Streams};

pub const MIN_DISTANCE_M: f64 = 1.0;
pub const MAX_DISTANCE_M: f64 = 100.0;

/// Linear power gain of the `68.5 + 16.1 log10(d)` dB path-loss model.
pub fn path_loss_linear(distance_m: f64) -> Result<f64> {
    if !(MIN_DISTANCE_M..=MAX_DISTANCE_M).contains(&distance_m) {
        return Err(Error::domain("distance", distance_m));
    }
    let db = 68.5 + 16.1 * distance_m.log10();
    Ok(10f64.powf(-db / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Quantizer {
    /// Fading powers at or above this go to `High`.
    pub threshold: f64,
    pub low_multiplier: f64,
    pub high_multiplier: f64,
}

impl Default for Quantizer {
    fn default() -> Self {
        Self::conditional_means(std::f64::consts::LN_2)
    }
}

impl Quantizer {
    /// Quantizer at `threshold` whose representatives are the conditional
    /// means of a unit-mean exponential on each side.
    pub fn conditional_means(threshold: f64) -> Self {
        let tail = (-threshold).exp();
        // E[g | g < t] = (1 - e^{-t}(1 + t)) / (1 - e^{-t}); E[g | g >= t] = t + 1.
        let low = (1.0 - tail * (1.0 + threshold)) / (1.0 - tail);
        Self {
            threshold,
            low_multiplier: low,
            high_multiplier: threshold + 1.0,
        }
    }

    pub fn quantize(&self, fading_power: f64) -> Result<Level> {
        if !(fading_power >= 0.0) {
            return Err(Error::domain("fading power", fading_power));
        }
        Ok(if fading_power < self.threshold {
            Level::Low
        } else {
            Level::High
        })
    }

    pub fn multiplier(&self, level: Level) -> f64 {
        match level {
            Level::Low => self.low_multiplier,
            Level::High => self.high_multiplier,
        }
    }

    /// Probability of `level` under unit-mean exponential fading.
    pub fn probability(&self, level: Level) -> f64 {
        let low = -(-self.threshold).exp_m1();
        match level {
            Level::Low => low,
            Level::High => 1.0 - low,
        }
    }

    pub fn mean_multiplier(&self) -> f64 {
        self.probability(Level::Low) * self.low_multiplier + self.probability(Level::High) * self.high_multiplier
    }
}

/// Per-VUE distances (meters) to each camera and to the edge server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// `camera_distances[vue][camera]`.
    pub camera_distances: Vec<Vec<f64>>,
    pub server_distances: Vec<f64>,
}

impl Geometry {
    /// Distances drawn independently and uniformly from `[min_m, max_m]`.
    ///
    /// VUE `i`'s draws come from its own substream, so the first `k` VUEs of
    /// a larger scenario match a `k`-VUE scenario built from the same seed.
    pub fn sample(vues: usize, cameras: usize, min_m: f64, max_m: f64, seed: u64) -> Self {
        let streams = Streams::new(seed);
        let mut camera_distances = Vec::with_capacity(vues);
        let mut server_distances = Vec::with_capacity(vues);
        for vue in 0..vues {
            let mut rng = streams.substream(Purpose::Geometry, vue, 0);
            let mut draw = || min_m + (max_m - min_m) * rng.random::<f64>();
            camera_distances.push((0..cameras).map(|_| draw()).collect());
            server_distances.push(draw());
        }
        Self {
            camera_distances,
            server_distances,
        }
    }

    pub fn vues(&self) -> usize {
        self.server_distances.len()
    }

    pub fn cameras(&self) -> usize {
        self.camera_distances.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.camera_distances.len() != self.server_distances.len() {
            return Err(Error::Config(format!(
                "geometry lists {} camera rows but {} server distances",
                self.camera_distances.len(),
                self.server_distances.len()
            )));
        }
        let cameras = self.cameras();
        for row in &self.camera_distances {
            if row.len() != cameras {
                return Err(Error::Config("ragged camera distance rows".into()));
            }
        }
        for &d in self.camera_distances.iter().flatten().chain(&self.server_distances) {
            if !(MIN_DISTANCE_M..=MAX_DISTANCE_M).contains(&d) {
                return Err(Error::domain("distance", d));
            }
        }
        Ok(())
    }
}

/// Index of a channel level pattern in `[0, 2^(C+1))`.
///
/// Camera `j` contributes bit `j` and the server link bit `C`; a set bit
/// means `High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateIndex(pub u32);

impl StateIndex {
    pub fn as_usize(self) -> usize {
        self.0 as usize
    }
}

pub fn state_count(cameras: usize) -> usize {
    1usize << (cameras + 1)
}

/// One VUE's channel realization: `C` camera links then the server link.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    levels: Vec<Level>,
    gains: Vec<f64>,
}

impl ChannelVector {
    pub fn cameras(&self) -> usize {
        self.gains.len() - 1
    }

    pub fn camera_gain(&self, camera: usize) -> f64 {
        self.gains[camera]
    }

    pub fn camera_gains(&self) -> &[f64] {
        &self.gains[..self.cameras()]
    }

    pub fn server_gain(&self) -> f64 {
        self.gains[self.cameras()]
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn state_index(&self) -> StateIndex {
        let bits = self
            .levels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Level::High)
            .fold(0u32, |acc, (bit, _)| acc | (1 << bit));
        StateIndex(bits)
    }
}

/// Scenario geometry with precomputed path loss and the fading quantizer.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    geometry: Geometry,
    quantizer: Quantizer,
    // Per VUE: C camera links then the server link.
    path_loss: Vec<Vec<f64>>,
}

impl ChannelModel {
    pub fn new(geometry: Geometry, quantizer: Quantizer) -> Result<Self> {
        geometry.validate()?;
        let path_loss = geometry
            .camera_distances
            .iter()
            .zip(&geometry.server_distances)
            .map(|(cams, &server)| {
                cams.iter()
                    .chain(std::iter::once(&server))
                    .map(|&d| path_loss_linear(d))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            geometry,
            quantizer,
            path_loss,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn quantizer(&self) -> &Quantizer {
        &self.quantizer
    }

    pub fn vues(&self) -> usize {
        self.geometry.vues()
    }

    pub fn cameras(&self) -> usize {
        self.geometry.cameras()
    }

    pub fn state_count(&self) -> usize {
        state_count(self.cameras())
    }

    pub fn path_loss(&self, vue: usize) -> &[f64] {
        &self.path_loss[vue]
    }

    fn vector_from_levels(&self, vue: usize, levels: Vec<Level>) -> ChannelVector {
        let gains = levels
            .iter()
            .zip(&self.path_loss[vue])
            .map(|(&l, &pl)| pl * self.quantizer.multiplier(l))
            .collect();
        ChannelVector { levels, gains }
    }

    /// Draws an independent fading power per link and quantizes it.
    pub fn sample<R: Rng>(&self, vue: usize, rng: &mut R) -> ChannelVector {
        let levels = (0..=self.cameras())
            .map(|_| {
                // 1 - U lies in (0, 1], so the exponential draw is finite and >= 0.
                let fading = -(1.0 - rng.random::<f64>()).ln();
                self.quantizer
                    .quantize(fading)
                    .expect("exponential draw is non-negative")
            })
            .collect();
        self.vector_from_levels(vue, levels)
    }

    /// The channel vector a VUE sees in the given quantized state.
    pub fn vector_for_state(&self, vue: usize, state: StateIndex) -> ChannelVector {
        let levels = (0..=self.cameras())
            .map(|bit| {
                if state.0 & (1 << bit) != 0 {
                    Level::High
                } else {
                    Level::Low
                }
            })
            .collect();
        self.vector_from_levels(vue, levels)
    }

    /// Probability of observing `state` on any VUE.
    pub fn state_probability(&self, state: StateIndex) -> f64 {
        (0..=self.cameras())
            .map(|bit| {
                let level = if state.0 & (1 << bit) != 0 {
                    Level::High
                } else {
                    Level::Low
                };
                self.quantizer.probability(level)
            })
            .product()
    }
}
