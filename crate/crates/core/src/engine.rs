//! Synchronous learning loop over all VUEs, cameras, and the server.
//!
//! Each iteration: every VUE observes its channel state and draws an action
//! from its current policy; the server allocates downlink power over the
//! offloaders; delays and utilities follow; learning schemes then update
//! their tables. Baseline schemes reuse the same loop with frozen policies.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentTables, LearningRates, RiskConfig, UtilityKind};
use crate::channel::{ChannelModel, ChannelVector, Geometry, Quantizer, StateIndex, MAX_DISTANCE_M, MIN_DISTANCE_M};
use crate::delay::{evaluate_profile, Action, DecisionProfile, DelayBreakdown};
use crate::error::{Error, Result};
use crate::params::PhysicalParams;
use crate::power::{self, AllocationProblem, PowerAllocation, ServerObjective};
use crate::rng::{Purpose, Streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    /// Risk-sensitive learning with the risk-sensitive power allocator.
    Proposed,
    /// Learning on `-T` with the sum-of-delays power allocator.
    AverageBased,
    FullyFetching,
    FullyOffloading,
    /// Fetch or offload with probability 1/2 each.
    HalfHalf,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::Proposed,
        SchemeKind::AverageBased,
        SchemeKind::FullyFetching,
        SchemeKind::FullyOffloading,
        SchemeKind::HalfHalf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Proposed => "proposed",
            SchemeKind::AverageBased => "average-based",
            SchemeKind::FullyFetching => "fully-fetching",
            SchemeKind::FullyOffloading => "fully-offloading",
            SchemeKind::HalfHalf => "half-half",
        }
    }

    pub fn learns(self) -> bool {
        matches!(self, SchemeKind::Proposed | SchemeKind::AverageBased)
    }

    pub fn utility_kind(self) -> UtilityKind {
        match self {
            SchemeKind::AverageBased => UtilityKind::Average,
            _ => UtilityKind::RiskSensitive,
        }
    }

    pub fn server_objective(self, rho: f64) -> ServerObjective {
        match self {
            SchemeKind::AverageBased => ServerObjective::Average,
            _ => ServerObjective::RiskSensitive { rho },
        }
    }

    fn initial_tables(self, states: usize) -> AgentTables {
        match self {
            SchemeKind::FullyFetching => AgentTables::fixed(states, 0.0),
            SchemeKind::FullyOffloading => AgentTables::fixed(states, 1.0),
            _ => AgentTables::new(states),
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub quantizer: Quantizer,
    pub min_distance_m: f64,
    pub max_distance_m: f64,
    pub geometry_seed: u64,
    /// Pinned distances; when absent they are drawn from `geometry_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Geometry>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            quantizer: Quantizer::default(),
            min_distance_m: MIN_DISTANCE_M,
            max_distance_m: MAX_DISTANCE_M,
            geometry_seed: 1,
            geometry: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub xi: f64,
    pub rates: LearningRates,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            xi: 10.0,
            rates: LearningRates::default(),
        }
    }
}

/// Everything about a network except its size and risk sensitivity, which
/// vary across sweep cells.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub physical: PhysicalParams,
    pub channel: ChannelConfig,
    pub learning: LearningConfig,
}

/// A concrete network: frozen geometry plus all parameters.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: PhysicalParams,
    pub channel: ChannelModel,
    pub rho: f64,
    pub xi: f64,
    pub rates: LearningRates,
}

impl Scenario {
    pub fn new(config: &ScenarioConfig, vues: usize, rho: f64) -> Result<Self> {
        if vues == 0 {
            return Err(Error::Config("at least one VUE is required".into()));
        }
        let cameras = config.physical.cameras;
        let geometry = match &config.channel.geometry {
            Some(g) => {
                if g.vues() < vues || g.cameras() != cameras {
                    return Err(Error::Config(format!(
                        "pinned geometry has {} VUEs x {} cameras, need {vues} x {cameras}",
                        g.vues(),
                        g.cameras()
                    )));
                }
                Geometry {
                    camera_distances: g.camera_distances[..vues].to_vec(),
                    server_distances: g.server_distances[..vues].to_vec(),
                }
            }
            None => Geometry::sample(
                vues,
                cameras,
                config.channel.min_distance_m,
                config.channel.max_distance_m,
                config.channel.geometry_seed,
            ),
        };
        Ok(Self {
            params: config.physical.clone(),
            channel: ChannelModel::new(geometry, config.channel.quantizer)?,
            rho,
            xi: config.learning.xi,
            rates: config.learning.rates,
        })
    }

    pub fn vues(&self) -> usize {
        self.channel.vues()
    }

    pub fn risk_config(&self, scheme: SchemeKind) -> RiskConfig {
        RiskConfig {
            rho: self.rho,
            xi: self.xi,
            utility: scheme.utility_kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VueRecord {
    pub state: StateIndex,
    pub action: Action,
    /// Downlink power; zero for fetchers.
    pub power_w: f64,
    pub delay: DelayBreakdown,
    pub utility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerDiagnostics {
    pub multiplier: f64,
    pub kkt_residual: f64,
    pub budget_residual: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub boundary_warning: bool,
}

impl From<&PowerAllocation> for PowerDiagnostics {
    fn from(a: &PowerAllocation) -> Self {
        Self {
            multiplier: a.multiplier,
            kkt_residual: a.kkt_residual,
            budget_residual: a.budget_residual,
            outer_iterations: a.outer_iterations,
            inner_iterations: a.inner_iterations,
            boundary_warning: a.boundary_warning,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: u64,
    pub vues: Vec<VueRecord>,
    pub fetchers: usize,
    pub offloaders: usize,
    pub power: Option<PowerDiagnostics>,
}

/// Solves the server allocation for the offloaders of `profile`; returns
/// per-VUE powers (zero for fetchers).
pub fn allocate_power(
    params: &PhysicalParams,
    objective: ServerObjective,
    profile: &DecisionProfile,
    channels: &[ChannelVector],
) -> Result<(Vec<f64>, Option<PowerAllocation>)> {
    let mut powers = vec![0.0; profile.len()];
    let offloaders: Vec<usize> = profile.offloaders().collect();
    if offloaders.is_empty() {
        return Ok((powers, None));
    }
    let gains: Vec<f64> = offloaders.iter().map(|&i| channels[i].server_gain()).collect();
    let problem = AllocationProblem::from_gains(params, objective, &gains)?;
    let alloc = power::solve(&problem)?;
    for (&i, &p) in offloaders.iter().zip(&alloc.powers_w) {
        powers[i] = p;
    }
    Ok((powers, Some(alloc)))
}

/// One scheme running on one scenario.
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    scheme: SchemeKind,
    agents: Vec<AgentTables>,
    streams: Streams,
    t: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario, scheme: SchemeKind, seed: u64) -> Self {
        let states = scenario.channel.state_count();
        Self {
            scenario,
            scheme,
            agents: (0..scenario.vues()).map(|_| scheme.initial_tables(states)).collect(),
            streams: Streams::new(seed),
            t: 0,
        }
    }

    pub fn agents(&self) -> &[AgentTables] {
        &self.agents
    }

    pub fn into_agents(self) -> Vec<AgentTables> {
        self.agents
    }

    pub fn iteration(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self) -> Result<IterationRecord> {
        self.t += 1;
        let t = self.t;
        let sc = self.scenario;
        let vues = sc.vues();

        let channels: Vec<ChannelVector> = (0..vues)
            .map(|v| {
                sc.channel
                    .sample(v, &mut self.streams.substream(Purpose::Channel, v, t))
            })
            .collect();
        let states: Vec<StateIndex> = channels.iter().map(ChannelVector::state_index).collect();
        let actions: Vec<Action> = (0..vues)
            .map(|v| {
                let mut rng = self.streams.substream(Purpose::Action, v, t);
                self.agents[v].sample_action(states[v], &mut rng)
            })
            .collect();
        let profile = DecisionProfile::new(actions);

        let (powers, alloc) = allocate_power(&sc.params, self.scheme.server_objective(sc.rho), &profile, &channels)?;
        let delays = evaluate_profile(&sc.params, &profile, &channels, &powers)?;

        let cfg = sc.risk_config(self.scheme);
        let mut records = Vec::with_capacity(vues);
        for v in 0..vues {
            let action = profile.actions()[v];
            let utility = if self.scheme.learns() {
                self.agents[v].learn(t, &sc.rates, &cfg, states[v], action, delays[v].e2e_s)?
            } else {
                crate::agent::utility(delays[v].e2e_s, &cfg)?
            };
            records.push(VueRecord {
                state: states[v],
                action,
                power_w: powers[v],
                delay: delays[v],
                utility,
            });
        }
        Ok(IterationRecord {
            t,
            vues: records,
            fetchers: profile.fetcher_count(),
            offloaders: profile.offloader_count(),
            power: alloc.as_ref().map(PowerDiagnostics::from),
        })
    }
}

/// Recomputes one iteration's delays from its stored states, actions, and powers.
pub fn replay(scenario: &Scenario, record: &IterationRecord) -> Result<Vec<DelayBreakdown>> {
    let channels: Vec<ChannelVector> = record
        .vues
        .iter()
        .enumerate()
        .map(|(v, r)| scenario.channel.vector_for_state(v, r.state))
        .collect();
    let profile = DecisionProfile::new(record.vues.iter().map(|r| r.action).collect());
    let powers: Vec<f64> = record.vues.iter().map(|r| r.power_w).collect();
    evaluate_profile(&scenario.params, &profile, &channels, &powers)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep every `thinning_stride`-th iteration record.
    pub thinning_stride: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { thinning_stride: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub scheme: SchemeKind,
    pub seed: u64,
    pub iterations: u64,
    pub records: Vec<IterationRecord>,
    pub tables: Vec<AgentTables>,
    pub elapsed: Duration,
}

impl RunResult {
    /// Pooled E2E delays over the last `window` iterations.
    pub fn tail_delays(&self, window: u64) -> Vec<f64> {
        let start = self.iterations.saturating_sub(window);
        self.records
            .iter()
            .filter(|r| r.t > start)
            .flat_map(|r| r.vues.iter().map(|v| v.delay.e2e_s))
            .collect()
    }

    /// E2E delays of a single VUE over the last `window` iterations.
    pub fn vue_tail_delays(&self, vue: usize, window: u64) -> Vec<f64> {
        let start = self.iterations.saturating_sub(window);
        self.records
            .iter()
            .filter(|r| r.t > start)
            .map(|r| r.vues[vue].delay.e2e_s)
            .collect()
    }

    /// Same records and tables; ignores wall-clock time.
    pub fn same_outcome(&self, other: &RunResult) -> bool {
        self.records == other.records && self.tables == other.tables
    }
}

pub fn run(scenario: &Scenario, scheme: SchemeKind, iterations: u64, seed: u64) -> Result<RunResult> {
    run_with(scenario, scheme, iterations, seed, RunOptions::default())
}

pub fn run_with(
    scenario: &Scenario,
    scheme: SchemeKind,
    iterations: u64,
    seed: u64,
    options: RunOptions,
) -> Result<RunResult> {
    let start = Instant::now();
    let stride = options.thinning_stride.max(1);
    let mut sim = Simulation::new(scenario, scheme, seed);
    let mut records = Vec::with_capacity((iterations / stride) as usize);
    for _ in 0..iterations {
        let rec = sim.step()?;
        if rec.t % stride == 0 {
            records.push(rec);
        }
    }
    Ok(RunResult {
        scheme,
        seed,
        iterations,
        records,
        tables: sim.into_agents(),
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(vues: usize) -> Scenario {
        Scenario::new(&ScenarioConfig::default(), vues, 30.0).unwrap()
    }

    #[test]
    fn scheme_names_round_trip() {
        for k in SchemeKind::ALL {
            assert_eq!(k.name().parse::<SchemeKind>().unwrap(), k);
        }
        assert!("nope".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn fully_fetching_shares_fetch_term() {
        let sc = scenario(8);
        let r = run(&sc, SchemeKind::FullyFetching, 50, 3).unwrap();
        for rec in &r.records {
            assert_eq!(rec.offloaders, 0);
            assert!(rec.power.is_none());
            assert!(rec.vues.iter().all(|v| v.delay.e2e_s == rec.vues[0].delay.e2e_s));
        }
    }

    #[test]
    fn fully_offloading_uses_whole_server() {
        let sc = scenario(8);
        let r = run(&sc, SchemeKind::FullyOffloading, 50, 3).unwrap();
        let server = sc.params.task_cycles() * 8.0 / sc.params.server_cpu_hz;
        for rec in &r.records {
            assert_eq!(rec.fetchers, 0);
            assert!(rec.vues.iter().all(|v| v.delay.server_compute_s == server));
            let total: f64 = rec.vues.iter().map(|v| v.power_w).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_vue_network() {
        let sc = scenario(1);
        let mut sim = Simulation::new(&sc, SchemeKind::Proposed, 9);
        for _ in 0..200 {
            let rec = sim.step().unwrap();
            let v = rec.vues[0];
            match v.action {
                Action::Offload => assert_eq!(v.power_w, 1.0),
                Action::Fetch => {
                    let ch = sc.channel.vector_for_state(0, v.state);
                    let worst = ch
                        .camera_gains()
                        .iter()
                        .map(|&h| crate::delay::camera_broadcast_rate(&sc.params, &[h]).unwrap())
                        .map(|r| sc.params.image_bits / r)
                        .fold(0.0, f64::max);
                    assert_eq!(v.delay.fetch_s, worst);
                }
            }
        }
    }

    #[test]
    fn zero_iterations() {
        let sc = scenario(3);
        let r = run(&sc, SchemeKind::Proposed, 0, 1).unwrap();
        assert!(r.records.is_empty());
        assert_eq!(r.tables, vec![AgentTables::new(32); 3]);
    }

    #[test]
    fn thinning_keeps_every_kth_record() {
        let sc = scenario(3);
        let r = run_with(&sc, SchemeKind::HalfHalf, 100, 1, RunOptions { thinning_stride: 10 }).unwrap();
        assert_eq!(r.records.len(), 10);
        assert!(r.records.iter().all(|rec| rec.t % 10 == 0));
    }
}
