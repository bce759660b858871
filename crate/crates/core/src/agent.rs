//! Per-VUE joint utility and policy estimation.
//!
//! Each VUE keeps, for every quantized channel state and action, a utility
//! estimate, a regret estimate, and a policy probability (six scalars per
//! state). After every iteration the VUE updates, on three timescales:
//!
//! 1. the utility estimate of the (state, action) it just played,
//! 2. the regret estimates of both actions in the observed state,
//! 3. the policy row of the observed state, towards the Boltzmann-Gibbs
//!    distribution of the positive parts of its regrets.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::StateIndex;
use crate::delay::Action;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityKind {
    /// `u = -exp(ρ T)`.
    RiskSensitive,
    /// `u = -T`.
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    /// Risk sensitivity in 1/s.
    pub rho: f64,
    /// Boltzmann-Gibbs temperature trading exploitation against exploration.
    pub xi: f64,
    pub utility: UtilityKind,
}

pub fn utility(delay_s: f64, cfg: &RiskConfig) -> Result<f64> {
    if !(delay_s.is_finite() && delay_s >= 0.0) {
        return Err(Error::domain("delay", delay_s));
    }
    Ok(match cfg.utility {
        UtilityKind::RiskSensitive => -(cfg.rho * delay_s).exp(),
        UtilityKind::Average => -delay_s,
    })
}

/// Step-size exponents: `η(t) = t^-a` for utility, regret, and policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub utility_exponent: f64,
    pub regret_exponent: f64,
    pub policy_exponent: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            utility_exponent: 0.51,
            regret_exponent: 0.52,
            policy_exponent: 0.53,
        }
    }
}

impl LearningRates {
    pub fn utility(&self, t: u64) -> f64 {
        (t as f64).powf(-self.utility_exponent)
    }

    pub fn regret(&self, t: u64) -> f64 {
        (t as f64).powf(-self.regret_exponent)
    }

    pub fn policy(&self, t: u64) -> f64 {
        (t as f64).powf(-self.policy_exponent)
    }

    /// Checks `0.5 < a_u < a_r < a_π <= 1`.
    ///
    /// For `η(t) = t^-a`, `Σ η` diverges iff `a <= 1` and `Σ η²` converges iff
    /// `a > 1/2`; `η_r / η_u = t^(a_u - a_r)` vanishes iff `a_r > a_u`, and
    /// likewise for the policy rate.
    pub fn violations(&self) -> Vec<String> {
        let (u, r, p) = (self.utility_exponent, self.regret_exponent, self.policy_exponent);
        let mut out = Vec::new();
        for (name, a) in [("utility_exponent", u), ("regret_exponent", r), ("policy_exponent", p)] {
            if !(a > 0.5) {
                out.push(format!(
                    "{name} = {a}: squared step sizes must be summable (need > 0.5)"
                ));
            }
            if !(a <= 1.0) {
                out.push(format!(
                    "{name} = {a}: step sizes must have a divergent sum (need <= 1)"
                ));
            }
        }
        if !(u < r) {
            out.push(format!("regret_exponent = {r} must exceed utility_exponent = {u}"));
        }
        if !(r < p) {
            out.push(format!("policy_exponent = {p} must exceed regret_exponent = {r}"));
        }
        out
    }
}

/// Boltzmann-Gibbs distribution over the positive parts of two regrets.
pub fn boltzmann_gibbs(regrets: [f64; 2], xi: f64) -> [f64; 2] {
    let a = xi * regrets[0].max(0.0);
    let b = xi * regrets[1].max(0.0);
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    let z = ea + eb;
    [ea / z, eb / z]
}

/// Utility, regret, and policy tables of one VUE, `[state][action]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTables {
    utility: Vec<[f64; 2]>,
    regret: Vec<[f64; 2]>,
    policy: Vec<[f64; 2]>,
}

impl AgentTables {
    /// Zero estimates and a uniform policy in every state.
    pub fn new(states: usize) -> Self {
        Self {
            utility: vec![[0.0; 2]; states],
            regret: vec![[0.0; 2]; states],
            policy: vec![[0.5; 2]; states],
        }
    }

    /// Tables whose policy plays `offload_probability` everywhere.
    pub fn fixed(states: usize, offload_probability: f64) -> Self {
        let mut t = Self::new(states);
        t.policy.fill([1.0 - offload_probability, offload_probability]);
        t
    }

    pub fn states(&self) -> usize {
        self.policy.len()
    }

    pub fn memory_elements(&self) -> usize {
        6 * self.states()
    }

    pub fn utility_row(&self, state: StateIndex) -> [f64; 2] {
        self.utility[state.as_usize()]
    }

    pub fn regret_row(&self, state: StateIndex) -> [f64; 2] {
        self.regret[state.as_usize()]
    }

    pub fn policy_row(&self, state: StateIndex) -> [f64; 2] {
        self.policy[state.as_usize()]
    }

    pub fn offload_probability(&self, state: StateIndex) -> f64 {
        self.policy[state.as_usize()][1]
    }

    pub fn set_policy_row(&mut self, state: StateIndex, offload_probability: f64) {
        let p = offload_probability.clamp(0.0, 1.0);
        self.policy[state.as_usize()] = [1.0 - p, p];
    }

    pub fn update_utility_estimate(&mut self, step: f64, state: StateIndex, action: Action, u: f64) {
        let cell = &mut self.utility[state.as_usize()][action.index()];
        *cell += step * (u - *cell);
    }

    /// Regret update for both actions of `state`; call after the utility update.
    pub fn update_regret_estimate(&mut self, step: f64, state: StateIndex, u: f64) {
        let s = state.as_usize();
        for a in 0..2 {
            let target = self.utility[s][a] - u;
            self.regret[s][a] += step * (target - self.regret[s][a]);
        }
    }

    /// Moves the policy row of `state` towards `beta`.
    pub fn update_policy(&mut self, step: f64, state: StateIndex, beta: [f64; 2]) {
        let s = state.as_usize();
        // The fetch entry is the complement so each row sums to one exactly.
        let offload = self.policy[s][1] + step * (beta[1] - self.policy[s][1]);
        self.set_policy_row(state, offload);
    }

    pub fn sample_action<R: Rng>(&self, state: StateIndex, rng: &mut R) -> Action {
        if rng.random::<f64>() < self.offload_probability(state) {
            Action::Offload
        } else {
            Action::Fetch
        }
    }

    /// One full learning step after observing `delay_s` for `(state, action)` at iteration `t`.
    pub fn learn(
        &mut self,
        t: u64,
        rates: &LearningRates,
        cfg: &RiskConfig,
        state: StateIndex,
        action: Action,
        delay_s: f64,
    ) -> Result<f64> {
        let u = utility(delay_s, cfg)?;
        self.update_utility_estimate(rates.utility(t), state, action, u);
        self.update_regret_estimate(rates.regret(t), state, u);
        let beta = boltzmann_gibbs(self.regret_row(state), cfg.xi);
        self.update_policy(rates.policy(t), state, beta);
        Ok(u)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointRow {
    vue: usize,
    state: u32,
    action: usize,
    utility_estimate: f64,
    regret_estimate: f64,
    policy: f64,
}

/// Writes tables as CSV rows `vue,state,action,utility_estimate,regret_estimate,policy`.
pub fn write_checkpoint<W: Write>(writer: W, tables: &[AgentTables]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (vue, t) in tables.iter().enumerate() {
        for state in 0..t.states() {
            for action in 0..2 {
                w.serialize(CheckpointRow {
                    vue,
                    state: state as u32,
                    action,
                    utility_estimate: t.utility[state][action],
                    regret_estimate: t.regret[state][action],
                    policy: t.policy[state][action],
                })
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
            }
        }
    }
    w.flush().map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn read_checkpoint<R: Read>(reader: R) -> Result<Vec<AgentTables>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut tables: Vec<AgentTables> = Vec::new();
    for row in r.deserialize() {
        let row: CheckpointRow = row.map_err(|e| Error::Checkpoint(e.to_string()))?;
        if row.action > 1 {
            return Err(Error::Checkpoint(format!("action {} out of range", row.action)));
        }
        if row.vue > tables.len() {
            return Err(Error::Checkpoint(format!("vue {} appears out of order", row.vue)));
        }
        if row.vue == tables.len() {
            tables.push(AgentTables {
                utility: Vec::new(),
                regret: Vec::new(),
                policy: Vec::new(),
            });
        }
        let t = &mut tables[row.vue];
        let s = row.state as usize;
        if s >= t.policy.len() {
            t.utility.resize(s + 1, [0.0; 2]);
            t.regret.resize(s + 1, [0.0; 2]);
            t.policy.resize(s + 1, [0.0; 2]);
        }
        t.utility[s][row.action] = row.utility_estimate;
        t.regret[s][row.action] = row.regret_estimate;
        t.policy[s][row.action] = row.policy;
    }
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const RISK: RiskConfig = RiskConfig {
        rho: 30.0,
        xi: 10.0,
        utility: UtilityKind::RiskSensitive,
    };

    #[test]
    fn utility_values() {
        assert!((utility(0.1, &RISK).unwrap() + 3f64.exp()).abs() < 1e-12);
        assert_eq!(utility(0.0, &RISK).unwrap(), -1.0);
        let avg = RiskConfig {
            utility: UtilityKind::Average,
            ..RISK
        };
        assert_eq!(utility(0.1, &avg).unwrap(), -0.1);
        assert!(utility(f64::INFINITY, &RISK).is_err());
        assert!(utility(-0.1, &RISK).is_err());
    }

    #[test]
    fn utility_estimate_step() {
        let rates = LearningRates::default();
        let mut t = AgentTables::new(4);
        let s = StateIndex(2);
        t.utility[2][1] = -2.0;
        let eta = rates.utility(5);
        assert!((eta - 5f64.powf(-0.51)).abs() < 1e-15);
        t.update_utility_estimate(eta, s, Action::Offload, -3.0);
        assert!((t.utility_row(s)[1] - (-2.0 - eta)).abs() < 1e-15);
        assert!((t.utility_row(s)[1] + 2.4401).abs() < 1e-4);
        // Fixed point, other cells untouched.
        let before = t.clone();
        t.update_utility_estimate(eta, s, Action::Offload, t.utility_row(s)[1]);
        assert_eq!(t, before);
        assert_eq!(t.utility_row(StateIndex(1)), [0.0, 0.0]);
        assert_eq!(t.utility_row(s)[0], 0.0);
    }

    #[test]
    fn regret_estimate_step() {
        let rates = LearningRates::default();
        let mut t = AgentTables::new(2);
        let s = StateIndex(0);
        t.utility[0] = [-2.4401, -2.4401];
        t.regret[0] = [0.1, 0.1];
        t.update_regret_estimate(rates.regret(5), s, -3.0);
        let expected = 0.1 + 5f64.powf(-0.52) * (0.5599 - 0.1);
        assert!((t.regret_row(s)[0] - expected).abs() < 1e-12);
        assert!((t.regret_row(s)[0] - 0.2992).abs() < 1e-4);
        assert_eq!(t.regret_row(StateIndex(1)), [0.0, 0.0]);
        // Fixed point.
        let mut f = AgentTables::new(1);
        f.utility[0] = [-1.0, -2.0];
        f.regret[0] = [0.5, -0.5];
        f.update_regret_estimate(0.3, StateIndex(0), -1.5);
        assert_eq!(f.regret[0], [0.5, -0.5]);
    }

    #[test]
    fn boltzmann_gibbs_values() {
        let b = boltzmann_gibbs([0.2, -0.1], 10.0);
        assert!((b[0] - 0.8807970779778823).abs() < 1e-12);
        assert!((b[1] - 0.11920292202211755).abs() < 1e-12);
        assert_eq!(boltzmann_gibbs([3.0, 3.0], 10.0), [0.5, 0.5]);
        assert_eq!(boltzmann_gibbs([-1.0, -0.2], 10.0), [0.5, 0.5]);
        let huge = boltzmann_gibbs([1e6, 0.0], 10.0);
        assert!(huge[0] == 1.0 && huge[1] == 0.0);
    }

    #[test]
    fn policy_step() {
        let rates = LearningRates::default();
        let mut t = AgentTables::new(1);
        let s = StateIndex(0);
        let eta = rates.policy(100);
        assert!((eta - 0.08710).abs() < 1e-5);
        t.policy[0] = [0.5, 0.5];
        t.update_policy(eta, s, [0.1192, 0.8808]);
        assert!((t.offload_probability(s) - (0.5 + eta * 0.3808)).abs() < 1e-12);
        assert!((t.offload_probability(s) - 0.53317).abs() < 1e-5);
        let before = t.clone();
        t.update_policy(eta, s, t.policy_row(s));
        assert!((t.offload_probability(s) - before.offload_probability(s)).abs() < 1e-16);
        t.update_policy(1.0, s, [0.25, 0.75]);
        assert_eq!(t.policy_row(s), [0.25, 0.75]);
    }

    #[test]
    fn degenerate_policies_sample_deterministically() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fetch = AgentTables::fixed(1, 0.0);
        let off = AgentTables::fixed(1, 1.0);
        for _ in 0..1000 {
            assert_eq!(fetch.sample_action(StateIndex(0), &mut rng), Action::Fetch);
            assert_eq!(off.sample_action(StateIndex(0), &mut rng), Action::Offload);
        }
    }

    #[test]
    fn uniform_policy_samples_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = AgentTables::new(1);
        let n = 100_000;
        let off = (0..n)
            .filter(|_| t.sample_action(StateIndex(0), &mut rng) == Action::Offload)
            .count();
        assert!((off as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn memory_footprint() {
        assert_eq!(AgentTables::new(32).memory_elements(), 192);
    }

    #[test]
    fn rate_validation() {
        assert!(LearningRates::default().violations().is_empty());
        let swapped = LearningRates {
            utility_exponent: 0.52,
            regret_exponent: 0.51,
            policy_exponent: 0.53,
        };
        assert_eq!(swapped.violations().len(), 1);
        let slow = LearningRates {
            utility_exponent: 0.4,
            regret_exponent: 0.6,
            policy_exponent: 1.2,
        };
        assert_eq!(slow.violations().len(), 2);
    }

    #[test]
    fn utility_estimate_converges_on_stationary_input() {
        let rates = LearningRates::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut t = AgentTables::new(1);
        let mu = -20.0;
        for step in 1..=100_000u64 {
            let u = mu * (1.0 + 0.2 * (rng.random::<f64>() - 0.5));
            t.update_utility_estimate(rates.utility(step), StateIndex(0), Action::Fetch, u);
        }
        assert!((t.utility_row(StateIndex(0))[0] - mu).abs() <= 0.01 * mu.abs());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut tables = vec![AgentTables::new(4), AgentTables::new(4)];
        for t in 1..50 {
            for tab in &mut tables {
                let s = StateIndex(rng.random_range(0..4));
                let a = tab.sample_action(s, &mut rng);
                tab.learn(t, &LearningRates::default(), &RISK, s, a, rng.random::<f64>() * 0.2)
                    .unwrap();
            }
        }
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &tables).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("vue,state,action,utility_estimate,regret_estimate,policy\n"));
        assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), tables);
    }

    // Entropy-regularized objective that Boltzmann-Gibbs maximizes.
    fn regularized(p: [f64; 2], r: [f64; 2], xi: f64) -> f64 {
        p.iter()
            .zip(r)
            .map(|(&q, rr)| q * rr.max(0.0) - if q > 0.0 { q * q.ln() / xi } else { 0.0 })
            .sum()
    }

    proptest! {
        #[test]
        fn policy_rows_stay_normalized(
            seed in any::<u64>(),
            steps in 1usize..400,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut t = AgentTables::new(8);
            let rates = LearningRates::default();
            for step in 1..=steps as u64 {
                let s = StateIndex(rng.random_range(0..8));
                let a = t.sample_action(s, &mut rng);
                t.learn(step, &rates, &RISK, s, a, rng.random::<f64>() * 0.3).unwrap();
            }
            for s in 0..8 {
                let row = t.policy_row(StateIndex(s));
                prop_assert!((row[0] + row[1] - 1.0).abs() <= 1e-12);
                prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
            }
        }

        #[test]
        fn boltzmann_gibbs_is_the_regularized_argmax(
            r0 in -2.0f64..2.0,
            r1 in -2.0f64..2.0,
            xi in prop::sample::select(vec![1.0, 10.0]),
            seed in any::<u64>(),
        ) {
            let beta = boltzmann_gibbs([r0, r1], xi);
            let best = regularized(beta, [r0, r1], xi);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let candidates = (0..200)
                .map(|_| { let q: f64 = rng.random(); [1.0 - q, q] })
                .chain([[1.0, 0.0], [0.0, 1.0]]);
            for q in candidates {
                prop_assert!(best >= regularized(q, [r0, r1], xi) - 1e-9);
            }
        }

        #[test]
        fn boltzmann_gibbs_preserves_regret_order(
            r0 in -5.0f64..5.0,
            r1 in -5.0f64..5.0,
            scale in 0.01f64..100.0,
        ) {
            let b = boltzmann_gibbs([scale * r0, scale * r1], 10.0);
            prop_assert_eq!(b[0] > b[1], r0.max(0.0) > r1.max(0.0));
        }
    }
}
