//! End-to-end delay of both task branches.
//!
//! A fetching VUE waits for the slowest camera broadcast and then
//! synthesizes locally. An offloading VUE waits for the server, which splits
//! its CPU equally over all offloaders, and then for its own downlink on an
//! equal share of the server bandwidth.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelVector;
use crate::error::{Error, Result};
use crate::params::PhysicalParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Fetch = 0,
    Offload = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Fetch, Action::Offload];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(Action::Fetch),
            1 => Some(Action::Offload),
            _ => None,
        }
    }
}

/// `log2(1 + x)` through `ln_1p` so weak links keep their precision.
pub fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// Broadcast rate of one camera, limited by the weakest fetcher on its link.
pub fn camera_broadcast_rate(params: &PhysicalParams, fetcher_gains: &[f64]) -> Result<f64> {
    let h_min = fetcher_gains
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or(Error::NotApplicable("camera broadcast rate"))?;
    let snr = params.camera_power_w * h_min / (params.camera_bandwidth_hz * params.noise_psd_w_per_hz);
    Ok(params.camera_bandwidth_hz * log2_1p(snr))
}

/// Time until the last camera image arrives.
pub fn fetch_delay(params: &PhysicalParams, rates: &[f64]) -> Result<f64> {
    let mut worst: Option<f64> = None;
    for &rate in rates {
        if !(rate > 0.0) {
            return Err(Error::DegenerateRate(rate));
        }
        let t = params.image_bits / rate;
        worst = Some(worst.map_or(t, |w: f64| w.max(t)));
    }
    worst.ok_or(Error::NotApplicable("fetch delay"))
}

pub fn local_compute_delay(params: &PhysicalParams) -> f64 {
    params.task_cycles() / params.vue_cpu_hz
}

pub fn server_compute_delay(params: &PhysicalParams, offloaders: usize) -> f64 {
    params.task_cycles() * offloaders as f64 / params.server_cpu_hz
}

pub fn downlink_rate(params: &PhysicalParams, power_w: f64, server_gain: f64, offloaders: usize) -> Result<f64> {
    if !(power_w > 0.0) {
        return Err(Error::domain("downlink power", power_w));
    }
    if offloaders == 0 {
        return Err(Error::NotApplicable("downlink rate"));
    }
    let n = offloaders as f64;
    let snr = power_w * server_gain * n / (params.server_bandwidth_hz * params.noise_psd_w_per_hz);
    Ok(params.server_bandwidth_hz / n * log2_1p(snr))
}

pub fn downlink_delay(params: &PhysicalParams, power_w: f64, server_gain: f64, offloaders: usize) -> Result<f64> {
    let rate = downlink_rate(params, power_w, server_gain, offloaders)?;
    if !(rate > 0.0) {
        return Err(Error::DegenerateRate(rate));
    }
    Ok(params.synthesized_bits / rate)
}

/// Delay components of one VUE in one iteration. Components that belong to
/// the other branch are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayBreakdown {
    pub fetch_s: f64,
    pub local_compute_s: f64,
    pub server_compute_s: f64,
    pub downlink_s: f64,
    pub e2e_s: f64,
}

impl DelayBreakdown {
    pub fn fetched(fetch_s: f64, local_compute_s: f64) -> Self {
        Self {
            fetch_s,
            local_compute_s,
            e2e_s: fetch_s + local_compute_s,
            ..Self::default()
        }
    }

    pub fn offloaded(server_compute_s: f64, downlink_s: f64) -> Self {
        Self {
            server_compute_s,
            downlink_s,
            e2e_s: server_compute_s + downlink_s,
            ..Self::default()
        }
    }
}

/// Fetch/offload split of one iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionProfile {
    actions: Vec<Action>,
}

impl DecisionProfile {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions }
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn fetchers(&self) -> impl Iterator<Item = usize> + '_ {
        self.members(Action::Fetch)
    }

    pub fn offloaders(&self) -> impl Iterator<Item = usize> + '_ {
        self.members(Action::Offload)
    }

    fn members(&self, action: Action) -> impl Iterator<Item = usize> + '_ {
        self.actions
            .iter()
            .enumerate()
            .filter(move |(_, a)| **a == action)
            .map(|(i, _)| i)
    }

    pub fn offloader_count(&self) -> usize {
        self.offloaders().count()
    }

    pub fn fetcher_count(&self) -> usize {
        self.len() - self.offloader_count()
    }
}

/// The broadcast-limited fetch delay shared by every fetcher, or `None` when
/// nobody fetches.
pub fn shared_fetch_delay(
    params: &PhysicalParams,
    profile: &DecisionProfile,
    channels: &[ChannelVector],
) -> Result<Option<f64>> {
    if profile.fetcher_count() == 0 {
        return Ok(None);
    }
    let mut rates = Vec::with_capacity(params.cameras);
    let mut gains = Vec::with_capacity(profile.fetcher_count());
    for camera in 0..params.cameras {
        gains.clear();
        gains.extend(profile.fetchers().map(|i| channels[i].camera_gain(camera)));
        rates.push(camera_broadcast_rate(params, &gains)?);
    }
    fetch_delay(params, &rates).map(Some)
}

/// E2E delay of a single VUE. `powers[i]` is only read for offloaders.
pub fn e2e_delay(
    params: &PhysicalParams,
    vue: usize,
    profile: &DecisionProfile,
    channels: &[ChannelVector],
    powers: &[f64],
) -> Result<DelayBreakdown> {
    match profile.actions()[vue] {
        Action::Fetch => {
            let fetch =
                shared_fetch_delay(params, profile, channels)?.expect("a fetching VUE makes the fetcher set non-empty");
            Ok(DelayBreakdown::fetched(fetch, local_compute_delay(params)))
        }
        Action::Offload => {
            let n = profile.offloader_count();
            let dl = downlink_delay(params, powers[vue], channels[vue].server_gain(), n)?;
            Ok(DelayBreakdown::offloaded(server_compute_delay(params, n), dl))
        }
    }
}

/// E2E delays of every VUE, sharing the fetch computation.
pub fn evaluate_profile(
    params: &PhysicalParams,
    profile: &DecisionProfile,
    channels: &[ChannelVector],
    powers: &[f64],
) -> Result<Vec<DelayBreakdown>> {
    let fetch = shared_fetch_delay(params, profile, channels)?;
    let local = local_compute_delay(params);
    let n = profile.offloader_count();
    let server = server_compute_delay(params, n);
    profile
        .actions()
        .iter()
        .enumerate()
        .map(|(i, action)| match action {
            Action::Fetch => Ok(DelayBreakdown::fetched(fetch.expect("fetcher present"), local)),
            Action::Offload => {
                let dl = downlink_delay(params, powers[i], channels[i].server_gain(), n)?;
                Ok(DelayBreakdown::offloaded(server, dl))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelModel, Geometry, Quantizer, StateIndex};

    fn p() -> PhysicalParams {
        PhysicalParams::default()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        ((a - b) / b).abs() <= rel
    }

    #[test]
    fn broadcast_rate_weak_single_fetcher() {
        let r = camera_broadcast_rate(&p(), &[2.612e-11]).unwrap();
        let snr = 0.1 * 2.612e-11 / (1e5 * 10f64.powf(-20.4));
        assert!(close(snr, 6561.0, 1e-3));
        assert!(close(r, 1e5 * (1.0 + snr).log2(), 1e-12));
        assert!(close(r, 1.268e6, 1e-3));
    }

    #[test]
    fn broadcast_rate_uses_weakest_fetcher() {
        let both = camera_broadcast_rate(&p(), &[1e-10, 1e-11]).unwrap();
        let weak = camera_broadcast_rate(&p(), &[1e-11]).unwrap();
        assert_eq!(both, weak);
        assert!(matches!(camera_broadcast_rate(&p(), &[]), Err(Error::NotApplicable(_))));
        assert_eq!(camera_broadcast_rate(&p(), &[f64::INFINITY]).unwrap(), f64::INFINITY);
        assert_eq!(fetch_delay(&p(), &[f64::INFINITY]).unwrap(), 0.0);
    }

    #[test]
    fn fetch_delay_is_slowest_camera() {
        let t = fetch_delay(&p(), &[1.268e6, 2e6, 2e6, 2e6]).unwrap();
        assert!(close(t, 2e4 / 1.268e6, 1e-12));
        assert!(close(t, 0.01577, 1e-3));
        assert_eq!(fetch_delay(&p(), &[4e6]).unwrap(), 2e4 / 4e6);
        assert!(matches!(fetch_delay(&p(), &[1e6, 0.0]), Err(Error::DegenerateRate(_))));
    }

    #[test]
    fn compute_delays() {
        assert!(close(local_compute_delay(&p()), 0.18712, 1e-12));
        let mut fast = p();
        fast.vue_cpu_hz *= 2.0;
        assert!(close(local_compute_delay(&fast), 0.18712 / 2.0, 1e-12));
        let mut free = p();
        free.cycles_per_bit = 0.0;
        assert_eq!(local_compute_delay(&free), 0.0);
        assert!(close(server_compute_delay(&p(), 60), 0.056136, 1e-12));
        assert!(close(server_compute_delay(&p(), 1), 9.356e-4, 1e-12));
        assert_eq!(server_compute_delay(&p(), 0), 0.0);
    }

    #[test]
    fn downlink_single_offloader() {
        let t = downlink_delay(&p(), 1.0, 8.511e-11, 1).unwrap();
        assert!(close(t, 2.98e-4, 2e-3), "{t}");
        let mut big = p();
        big.synthesized_bits *= 2.0;
        assert!(close(downlink_delay(&big, 1.0, 8.511e-11, 1).unwrap(), 2.0 * t, 1e-12));
        assert!(downlink_delay(&p(), 0.0, 8.511e-11, 1).is_err());
        assert!(downlink_delay(&p(), 1e-300, 8.511e-11, 1).unwrap() > 1e6);
    }

    #[test]
    fn e2e_branches() {
        let f = DelayBreakdown::fetched(0.01577, 0.18712);
        assert!(close(f.e2e_s, 0.20289, 1e-12));
        let o = DelayBreakdown::offloaded(0.056136, 0.036);
        assert!(close(o.e2e_s, 0.092136, 1e-12));
    }

    #[test]
    fn all_fetchers_share_the_fetch_term() {
        let model = ChannelModel::new(Geometry::sample(5, 4, 1.0, 100.0, 2), Quantizer::default()).unwrap();
        let channels: Vec<_> = (0..5)
            .map(|v| model.vector_for_state(v, StateIndex(v as u32 * 5)))
            .collect();
        let profile = DecisionProfile::new(vec![Action::Fetch; 5]);
        let delays = evaluate_profile(&p(), &profile, &channels, &[0.0; 5]).unwrap();
        assert!(delays.iter().all(|d| d.e2e_s == delays[0].e2e_s && d.fetch_s > 0.0));
        for (v, d) in delays.iter().enumerate() {
            assert_eq!(e2e_delay(&p(), v, &profile, &channels, &[0.0; 5]).unwrap(), *d);
        }
    }
}
