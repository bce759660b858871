//! Exact best response for networks small enough to enumerate.
//!
//! For a target VUE, every joint realization of the other VUEs' channel
//! states and actions is enumerated with its probability (channel state
//! probability times the opponent's policy). Together with each own state
//! and action this gives the exact conditional expectation of the cost
//! `exp(ρ T)` (or `T` for the average-based utility). The best response in a
//! state is the action with the smaller expected cost.

use crate::agent::{AgentTables, UtilityKind};
use crate::channel::{ChannelVector, StateIndex};
use crate::delay::{evaluate_profile, Action, DecisionProfile};
use crate::engine::{allocate_power, Scenario, SchemeKind};
use crate::error::{Error, Result};

pub const MAX_VUES: usize = 3;
pub const MAX_CAMERAS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    /// `expected_cost[state][action]`.
    pub expected_cost: Vec<[f64; 2]>,
    pub best: Vec<Action>,
}

impl BestResponse {
    /// `|c0 - c1| / max(c0, c1)` in `state`.
    pub fn relative_gap(&self, state: StateIndex) -> f64 {
        let [a, b] = self.expected_cost[state.as_usize()];
        (a - b).abs() / a.max(b)
    }
}

/// Best response of `vue` when every other VUE `j` plays `policies[j]`.
/// The entry for `vue` itself is ignored.
pub fn brute_force_best_response(
    scenario: &Scenario,
    scheme: SchemeKind,
    vue: usize,
    policies: &[AgentTables],
) -> Result<BestResponse> {
    let vues = scenario.vues();
    let cameras = scenario.channel.cameras();
    if vues > MAX_VUES || cameras > MAX_CAMERAS {
        return Err(Error::InstanceTooLarge(format!(
            "{vues} VUEs x {cameras} cameras (limit {MAX_VUES} x {MAX_CAMERAS})"
        )));
    }
    if policies.len() != vues || vue >= vues {
        return Err(Error::Config("one policy table per VUE is required".into()));
    }
    let states = scenario.channel.state_count();
    let cost = |t: f64| match scheme.utility_kind() {
        UtilityKind::RiskSensitive => (scenario.rho * t).exp(),
        UtilityKind::Average => t,
    };
    let objective = scheme.server_objective(scenario.rho);

    let others: Vec<usize> = (0..vues).filter(|&j| j != vue).collect();
    // Each opponent outcome is a (state, action) pair: 2 * states choices.
    let per_opponent = 2 * states;
    let combos = per_opponent.pow(others.len() as u32);

    let mut expected_cost = vec![[0.0; 2]; states];
    for own_state in 0..states as u32 {
        let own_state = StateIndex(own_state);
        for own_action in Action::ALL {
            let mut total = 0.0;
            for combo in 0..combos {
                let mut weight = 1.0;
                let mut actions = vec![own_action; vues];
                let mut channels: Vec<Option<ChannelVector>> = vec![None; vues];
                channels[vue] = Some(scenario.channel.vector_for_state(vue, own_state));
                let mut rest = combo;
                for &j in &others {
                    let pick = rest % per_opponent;
                    rest /= per_opponent;
                    let state = StateIndex((pick / 2) as u32);
                    let action = Action::from_index(pick % 2).expect("two actions");
                    weight *= scenario.channel.state_probability(state) * policies[j].policy_row(state)[action.index()];
                    actions[j] = action;
                    channels[j] = Some(scenario.channel.vector_for_state(j, state));
                }
                if weight == 0.0 {
                    continue;
                }
                let channels: Vec<ChannelVector> = channels.into_iter().map(|c| c.expect("filled")).collect();
                let profile = DecisionProfile::new(actions);
                let (powers, _) = allocate_power(&scenario.params, objective, &profile, &channels)?;
                let delays = evaluate_profile(&scenario.params, &profile, &channels, &powers)?;
                total += weight * cost(delays[vue].e2e_s);
            }
            expected_cost[own_state.as_usize()][own_action.index()] = total;
        }
    }
    let best = expected_cost
        .iter()
        .map(|[f, o]| if o < f { Action::Offload } else { Action::Fetch })
        .collect();
    Ok(BestResponse { expected_cost, best })
}
