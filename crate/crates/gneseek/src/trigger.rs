//! Dynamic event-triggered communication: measurement errors, trigger
//! conditions, internal threshold variables, broadcast refresh, and Zeno
//! monitoring.
//!
//! Each player rebroadcasts its estimate and multiplier only when a
//! measurement error outgrows a disagreement-plus-threshold budget. The
//! thresholds beta_i, gamma_i have their own decay dynamics, which bound them
//! below by decaying exponentials; that floor is what rules out Zeno
//! behavior, so it is checked after every run.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{SwarmState, Trajectory};
use crate::error::{Error, Result};
use crate::graph::Topology;

/// Initial values of the internal trigger variables.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TriggerConfig {
    pub beta0: f64,
    pub gamma0: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self {
            beta0: 300.0,
            gamma0: 300.0,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<()> {
        // NaN must fail validation, so the comparisons accept rather than reject
        if self.beta0.is_nan() || self.beta0 <= 0.0 || self.gamma0.is_nan() || self.gamma0 <= 0.0 {
            return Err(Error::Scenario(format!(
                "trigger initial values must be positive, got beta0 {} gamma0 {}",
                self.beta0, self.gamma0
            )));
        }
        Ok(())
    }
}

/// Broadcast mailboxes and internal variables of the trigger mechanism.
/// `upsilon_hat[i]`/`mu_hat[i]` hold player i's values at its latest event.
#[derive(Debug, Clone)]
pub struct TriggerState {
    pub upsilon_hat: Vec<DVector<f64>>,
    pub mu_hat: Vec<DVector<f64>>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub last_event_time: Vec<Option<f64>>,
    pub event_log: Vec<(usize, f64)>,
}

impl TriggerState {
    /// Initial broadcasts coincide with the initial state; the t = 0 exchange
    /// is part of setup and is not logged as an event.
    pub fn new(init: &SwarmState, cfg: &TriggerConfig) -> Self {
        let n = init.n_players();
        Self {
            upsilon_hat: init.upsilon.clone(),
            mu_hat: init.mu.clone(),
            beta: vec![cfg.beta0; n],
            gamma: vec![cfg.gamma0; n],
            last_event_time: vec![None; n],
            event_log: Vec::new(),
        }
    }
}

/// Measurement errors e_upsilon = hat - current, e_mu = hat - current.
pub fn measurement_errors(
    i: usize,
    state: &SwarmState,
    trig: &TriggerState,
) -> (DVector<f64>, DVector<f64>) {
    (
        &trig.upsilon_hat[i] - &state.upsilon[i],
        &trig.mu_hat[i] - &state.mu[i],
    )
}

fn weighted_degree(topology: &Topology, i: usize) -> f64 {
    topology
        .edges()
        .iter()
        .zip(topology.weights())
        .filter(|(&(a, b), _)| a == i || b == i)
        .map(|(_, &w)| w)
        .sum()
}

/// Sum over neighbors j of a_ij * f(j).
fn neighbor_sum(topology: &Topology, i: usize, mut f: impl FnMut(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    for (&(a, b), &w) in topology.edges().iter().zip(topology.weights()) {
        if a == i {
            acc += w * f(b);
        } else if b == i {
            acc += w * f(a);
        }
    }
    acc
}

/// Ingredients shared by the trigger inequalities and the internal-variable
/// dynamics: weighted error budgets and broadcast disagreements. Both
/// disagreements read the latest broadcasts of i and every neighbor j.
struct ConditionTerms {
    ups_error_budget: f64,
    ups_disagreement: f64,
    mu_error_budget: f64,
    mu_disagreement: f64,
}

fn condition_terms(
    i: usize,
    state: &SwarmState,
    trig: &TriggerState,
    topology: &Topology,
) -> ConditionTerms {
    let n = state.n_players() as f64;
    let q = state.mu[i].len() as f64;
    let (e_ups, e_mu) = measurement_errors(i, state, trig);
    let d_i = weighted_degree(topology, i);
    ConditionTerms {
        ups_error_budget: 4.0 * d_i * e_ups.norm_squared(),
        ups_disagreement: neighbor_sum(topology, i, |j| {
            (&trig.upsilon_hat[i] - &trig.upsilon_hat[j]).norm_squared()
        }),
        mu_error_budget: 6.0 * q.sqrt() * n * e_mu.norm(),
        mu_disagreement: neighbor_sum(topology, i, |j| {
            (&trig.mu_hat[i] - &trig.mu_hat[j]).abs().sum()
        }),
    }
}

/// True when either trigger inequality is violated strictly, i.e. the player
/// must rebroadcast now.
pub fn should_trigger(
    i: usize,
    state: &SwarmState,
    trig: &TriggerState,
    topology: &Topology,
) -> bool {
    let c = condition_terms(i, state, trig, topology);
    c.ups_error_budget > c.ups_disagreement + trig.beta[i]
        || c.mu_error_budget > c.mu_disagreement + trig.gamma[i]
}

/// Time derivatives of the internal variables:
/// beta' = -2 beta + disagreement - estimate error budget,
/// gamma' = -gamma + disagreement - multiplier error budget.
pub fn internal_derivatives(
    i: usize,
    state: &SwarmState,
    trig: &TriggerState,
    topology: &Topology,
) -> (f64, f64) {
    let c = condition_terms(i, state, trig, topology);
    (
        -2.0 * trig.beta[i] + c.ups_disagreement - c.ups_error_budget,
        -trig.gamma[i] + c.mu_disagreement - c.mu_error_budget,
    )
}

/// Player i's event at time t: both broadcasts refresh from the current
/// state and the event is logged. State, beta, and gamma are untouched.
pub fn fire(i: usize, state: &SwarmState, trig: &mut TriggerState, t: f64) {
    trig.upsilon_hat[i] = state.upsilon[i].clone();
    trig.mu_hat[i] = state.mu[i].clone();
    trig.last_event_time[i] = Some(t);
    trig.event_log.push((i, t));
}

/// Post-run Zeno diagnostics for one player.
#[derive(Debug, Clone)]
pub struct PlayerZeno {
    pub count: usize,
    /// Minimum gap between the player's consecutive events; None with fewer
    /// than two events.
    pub min_gap: Option<f64>,
}

/// Zeno diagnostics: per-player event counts and gaps plus the exponential
/// floor check on the internal variables.
#[derive(Debug, Clone)]
pub struct ZenoReport {
    pub players: Vec<PlayerZeno>,
    /// Smallest inter-event gap across all players; None when no player
    /// fired twice.
    pub min_gap: Option<f64>,
    /// Number of trajectory samples the floor check covered.
    pub samples_checked: usize,
}

/// Margin below the analytic floors tolerated for quadrature error.
const FLOOR_SLACK: f64 = 1.0 - 1e-6;

/// Verifies beta_i(t) >= beta_i(0) e^{-3t} and gamma_i(t) >= gamma_i(0)
/// e^{-2t} (up to [`FLOOR_SLACK`]) at every recorded sample, and summarizes
/// event counts and inter-event gaps. A floor violation signals a bug in the
/// event/flow ordering, not a property of the scenario.
pub fn zeno_report(traj: &Trajectory, cfg: &TriggerConfig) -> Result<ZenoReport> {
    let n = traj.states.first().map_or(0, SwarmState::n_players);
    for (s, &t) in traj.times.iter().enumerate() {
        if s >= traj.betas.len() {
            break;
        }
        for i in 0..n {
            let beta_floor = cfg.beta0 * (-3.0 * t).exp() * FLOOR_SLACK;
            if traj.betas[s][i] < beta_floor {
                return Err(Error::FloorViolated {
                    player: i,
                    time: t,
                    which: "beta",
                    value: traj.betas[s][i],
                    floor: beta_floor,
                });
            }
            let gamma_floor = cfg.gamma0 * (-2.0 * t).exp() * FLOOR_SLACK;
            if traj.gammas[s][i] < gamma_floor {
                return Err(Error::FloorViolated {
                    player: i,
                    time: t,
                    which: "gamma",
                    value: traj.gammas[s][i],
                    floor: gamma_floor,
                });
            }
        }
    }

    let mut players = Vec::with_capacity(n);
    let mut min_gap: Option<f64> = None;
    for i in 0..n {
        let mut own: Vec<f64> = traj
            .event_log
            .iter()
            .filter(|&&(p, _)| p == i)
            .map(|&(_, t)| t)
            .collect();
        own.sort_by(|a, b| a.total_cmp(b));
        let gap = own
            .windows(2)
            .map(|w| w[1] - w[0])
            .min_by(|a, b| a.total_cmp(b));
        if let Some(g) = gap {
            min_gap = Some(min_gap.map_or(g, |m: f64| m.min(g)));
        }
        players.push(PlayerZeno {
            count: own.len(),
            min_gap: gap,
        });
    }
    Ok(ZenoReport {
        players,
        min_gap,
        samples_checked: traj.betas.len(),
    })
}
