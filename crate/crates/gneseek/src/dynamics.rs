//! Right-hand sides of the seeking dynamics, the time-varying gain, and the
//! fixed-step projected Euler integrator.
//!
//! Player i carries an estimate Υ^i of the full action profile (its own block
//! is its actual action), plus a local multiplier μ_i. The continuous and
//! event-triggered right-hand sides differ only in where the consensus terms
//! read their neighbor data: current states versus latest broadcasts.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    box_projection, orthant_tangent_projection, sgn, tangent_projection, GameSpec,
};
use crate::graph::{build_laplacian, LaplacianData, Topology};
use crate::trigger::{
    fire, internal_derivatives, should_trigger, TriggerConfig, TriggerState,
};

/// Communication regime of the consensus terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Continuous,
    Event,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Continuous => write!(f, "continuous"),
            Mode::Event => write!(f, "event"),
        }
    }
}

/// Integrator configuration. `gain_cap` is infinite by default; finite caps
/// exist because an uncapped exponential gain destabilizes explicit Euler
/// once gain * dt approaches 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub horizon: f64,
    pub k_mu: f64,
    pub gain_cap: f64,
    pub mode: Mode,
    pub seed: u64,
    pub sample_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 0.001,
            horizon: 1.0,
            k_mu: 10.0,
            gain_cap: f64::INFINITY,
            mode: Mode::Continuous,
            seed: 1,
            sample_stride: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        // NaN parameters must fail each check, so the comparisons accept
        // rather than reject
        if self.dt.is_nan() || self.dt <= 0.0 {
            return Err(Error::Scenario(format!("dt must be positive, got {}", self.dt)));
        }
        if self.horizon.is_nan() || self.horizon < 0.0 {
            return Err(Error::Scenario(format!(
                "horizon must be nonnegative, got {}",
                self.horizon
            )));
        }
        if self.k_mu.is_nan() || self.k_mu <= 0.0 {
            return Err(Error::Scenario(format!(
                "k_mu must be positive, got {}",
                self.k_mu
            )));
        }
        if self.gain_cap.is_nan() || self.gain_cap <= 0.0 {
            return Err(Error::Scenario(format!(
                "gain_cap must be positive, got {}",
                self.gain_cap
            )));
        }
        if self.sample_stride == 0 {
            return Err(Error::Scenario("sample_stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Full swarm state. `upsilon[i]` is player i's estimate of the stacked
/// profile (length n*d); rows i*d..(i+1)*d of it ARE the player's action, so
/// the action is never stored twice. `mu[i]` is the local multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub upsilon: Vec<DVector<f64>>,
    pub mu: Vec<DVector<f64>>,
}

impl SwarmState {
    pub fn n_players(&self) -> usize {
        self.upsilon.len()
    }

    /// Player i's own action, copied out of its estimate block.
    pub fn x(&self, i: usize, d: usize) -> DVector<f64> {
        self.upsilon[i].rows(i * d, d).into_owned()
    }

    /// True profile: every player's own block stacked in player order.
    pub fn profile(&self, d: usize) -> DVector<f64> {
        let n = self.n_players();
        let mut z = DVector::zeros(n * d);
        for i in 0..n {
            z.rows_mut(i * d, d)
                .copy_from(&self.upsilon[i].rows(i * d, d));
        }
        z
    }

    /// Checks shapes, box feasibility of every action, and multiplier
    /// nonnegativity against the game description.
    pub fn validate(&self, game: &GameSpec) -> Result<()> {
        let n = game.n_players();
        let d = game.dim();
        let q = game.n_constraints();
        if self.upsilon.len() != n || self.mu.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "state has {} estimates and {} multipliers for {n} players",
                self.upsilon.len(),
                self.mu.len()
            )));
        }
        for i in 0..n {
            if self.upsilon[i].len() != n * d {
                return Err(Error::DimensionMismatch(format!(
                    "player {i} estimate has length {}, expected {}",
                    self.upsilon[i].len(),
                    n * d
                )));
            }
            if self.mu[i].len() != q {
                return Err(Error::DimensionMismatch(format!(
                    "player {i} multiplier has length {}, expected {q}",
                    self.mu[i].len()
                )));
            }
            let xi = self.x(i, d);
            if !game.action_box(i).contains(&xi) {
                return Err(Error::InfeasiblePoint(format!(
                    "player {i} action {xi:?} outside its box"
                )));
            }
            if self.mu[i].iter().any(|&m| m < 0.0) {
                return Err(Error::InfeasiblePoint(format!(
                    "player {i} multiplier {:?} has negative component",
                    self.mu[i]
                )));
            }
        }
        Ok(())
    }
}

/// Time derivative with the same block layout as [`SwarmState`].
#[derive(Debug, Clone)]
pub struct Derivative {
    pub upsilon_dot: Vec<DVector<f64>>,
    pub mu_dot: Vec<DVector<f64>>,
}

/// Time-varying control gain min(e^t, cap), the solution of k' = k, k(0) = 1
/// saturated at the cap.
pub fn gain(t: f64, cap: f64) -> f64 {
    t.exp().min(cap)
}

fn ensure_finite(
    v: &DVector<f64>,
    player: usize,
    time: f64,
    term: &'static str,
) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalBlowup {
            player,
            time,
            term,
        })
    }
}

/// Weighted consensus disagreement sum_j a_ij (v_i - v_j) over the vectors
/// `vs`, one per player.
fn consensus_sum(lap: &LaplacianData, vs: &[DVector<f64>], i: usize) -> DVector<f64> {
    let mut acc = DVector::zeros(vs[i].len());
    for j in 0..vs.len() {
        let a = lap.adjacency[(i, j)];
        if a != 0.0 {
            acc += (&vs[i] - &vs[j]) * a;
        }
    }
    acc
}

/// Weighted sign disagreement sum_j a_ij sgn(v_i - v_j), componentwise.
fn sign_sum(lap: &LaplacianData, vs: &[DVector<f64>], i: usize) -> DVector<f64> {
    let mut acc = DVector::zeros(vs[i].len());
    for j in 0..vs.len() {
        let a = lap.adjacency[(i, j)];
        if a != 0.0 {
            acc += sgn(&(&vs[i] - &vs[j])) * a;
        }
    }
    acc
}

#[allow(clippy::too_many_arguments)]
fn rhs_with_broadcasts(
    game: &GameSpec,
    lap: &LaplacianData,
    t: f64,
    state: &SwarmState,
    ups_bcast: &[DVector<f64>],
    mu_bcast: &[DVector<f64>],
    k: f64,
    mu_consensus_coeff: f64,
) -> Result<Derivative> {
    let n = game.n_players();
    let d = game.dim();
    let mut upsilon_dot = Vec::with_capacity(n);
    let mut mu_dot = Vec::with_capacity(n);
    for i in 0..n {
        let consensus = consensus_sum(lap, ups_bcast, i);
        ensure_finite(&consensus, i, t, "consensus")?;
        let xi = state.x(i, d);
        let grad = game.cost_gradient(i, t, &state.upsilon[i]);
        ensure_finite(&grad, i, t, "cost_gradient")?;
        let jac = game.constraint_jacobian(i, t, &xi);
        let constraint_pull = jac.transpose() * &state.mu[i];
        ensure_finite(&constraint_pull, i, t, "constraint")?;

        let raw_x = -grad - constraint_pull - consensus.rows(i * d, d) * k;
        let x_dot = tangent_projection(game.action_box(i), &xi, &raw_x)?;
        let mut ups_dot = consensus * (-k);
        ups_dot.rows_mut(i * d, d).copy_from(&x_dot);
        upsilon_dot.push(ups_dot);

        let g = game.constraint_value(i, t, &xi);
        ensure_finite(&g, i, t, "constraint")?;
        let raw_mu = g - sign_sum(lap, mu_bcast, i) * mu_consensus_coeff;
        let m_dot = orthant_tangent_projection(&state.mu[i], &raw_mu)?;
        ensure_finite(&m_dot, i, t, "multiplier")?;
        mu_dot.push(m_dot);
    }
    Ok(Derivative {
        upsilon_dot,
        mu_dot,
    })
}

/// Continuous-communication right-hand side: consensus terms read neighbors'
/// current states and the multiplier sign term carries coefficient k_mu.
pub fn rhs_continuous(
    game: &GameSpec,
    lap: &LaplacianData,
    t: f64,
    state: &SwarmState,
    k: f64,
    k_mu: f64,
) -> Result<Derivative> {
    rhs_with_broadcasts(game, lap, t, state, &state.upsilon, &state.mu, k, k_mu)
}

/// Event-triggered right-hand side: consensus terms read the latest
/// broadcasts and the multiplier sign term carries coefficient 2 k_mu; the
/// gradient and constraint terms still use the current local state.
pub fn rhs_event(
    game: &GameSpec,
    lap: &LaplacianData,
    t: f64,
    state: &SwarmState,
    broadcast: &TriggerState,
    k: f64,
    k_mu: f64,
) -> Result<Derivative> {
    rhs_with_broadcasts(
        game,
        lap,
        t,
        state,
        &broadcast.upsilon_hat,
        &broadcast.mu_hat,
        k,
        2.0 * k_mu,
    )
}

/// Projected Euler update: actions are clamped back into their boxes,
/// estimate blocks step freely, multipliers clamp to the orthant.
pub fn step(game: &GameSpec, state: &SwarmState, deriv: &Derivative, dt: f64) -> SwarmState {
    let n = game.n_players();
    let d = game.dim();
    let mut upsilon = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    for i in 0..n {
        let mut ups = &state.upsilon[i] + &deriv.upsilon_dot[i] * dt;
        let xi = box_projection(game.action_box(i), &ups.rows(i * d, d).into_owned());
        ups.rows_mut(i * d, d).copy_from(&xi);
        upsilon.push(ups);
        mu.push((&state.mu[i] + &deriv.mu_dot[i] * dt).map(|m| m.max(0.0)));
    }
    SwarmState { upsilon, mu }
}

/// Simulation output: decimated samples plus bookkeeping sufficient for all
/// downstream metrics. `betas`/`gammas` are recorded per sample in event mode
/// and stay empty in continuous mode.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SwarmState>,
    pub betas: Vec<Vec<f64>>,
    pub gammas: Vec<Vec<f64>>,
    pub event_log: Vec<(usize, f64)>,
    pub config: SolverConfig,
    pub trigger_config: Option<TriggerConfig>,
    pub n_steps: usize,
}

/// Runs the fixed-grid loop over t_n = n dt up to the horizon. In event mode
/// the per-step order is: trigger checks on the current state, broadcast
/// refreshes in ascending player order, right-hand side from the post-fire
/// broadcasts, state step, then the internal-variable Euler step driven by
/// the same post-fire pre-step errors.
pub fn simulate(
    game: &GameSpec,
    topology: &Topology,
    config: &SolverConfig,
    init: &SwarmState,
    trig_cfg: Option<&TriggerConfig>,
) -> Result<Trajectory> {
    config.validate()?;
    init.validate(game)?;
    let lap = build_laplacian(topology)?;
    let n = game.n_players();
    let d = game.dim();
    if topology.n_nodes() != n {
        return Err(Error::DimensionMismatch(format!(
            "topology has {} nodes for {n} players",
            topology.n_nodes()
        )));
    }

    let n_steps = (config.horizon / config.dt).round() as usize;
    let stride = config.sample_stride;
    let mut state = init.clone();
    let mut trig = match (config.mode, trig_cfg) {
        (Mode::Event, Some(cfg)) => Some(TriggerState::new(init, cfg)),
        (Mode::Event, None) => {
            return Err(Error::Scenario(
                "event mode requires a trigger configuration".into(),
            ))
        }
        (Mode::Continuous, _) => None,
    };

    let mut times = Vec::with_capacity(n_steps / stride + 2);
    let mut states = Vec::with_capacity(n_steps / stride + 2);
    let mut betas = Vec::new();
    let mut gammas = Vec::new();
    let record =
        |times: &mut Vec<f64>,
         states: &mut Vec<SwarmState>,
         betas: &mut Vec<Vec<f64>>,
         gammas: &mut Vec<Vec<f64>>,
         t: f64,
         s: &SwarmState,
         tr: &Option<TriggerState>| {
            times.push(t);
            states.push(s.clone());
            if let Some(tr) = tr {
                betas.push(tr.beta.clone());
                gammas.push(tr.gamma.clone());
            }
        };
    record(&mut times, &mut states, &mut betas, &mut gammas, 0.0, &state, &trig);

    for step_idx in 0..n_steps {
        let t = step_idx as f64 * config.dt;
        let k = gain(t, config.gain_cap);

        let deriv = if let Some(tr) = trig.as_mut() {
            // snapshot the trigger decisions, then refresh in player order
            let fires: Vec<usize> = (0..n)
                .filter(|&i| should_trigger(i, &state, tr, topology))
                .collect();
            for &i in &fires {
                fire(i, &state, tr, t);
            }
            let internal: Vec<(f64, f64)> = (0..n)
                .map(|i| internal_derivatives(i, &state, tr, topology))
                .collect();
            let deriv = rhs_event(game, &lap, t, &state, tr, k, config.k_mu)?;
            for ((beta, gamma), (beta_dot, gamma_dot)) in
                tr.beta.iter_mut().zip(tr.gamma.iter_mut()).zip(&internal)
            {
                *beta += config.dt * beta_dot;
                *gamma += config.dt * gamma_dot;
                debug_assert!(*beta > 0.0 && *gamma > 0.0);
            }
            deriv
        } else {
            rhs_continuous(game, &lap, t, &state, k, config.k_mu)?
        };

        state = step(game, &state, &deriv, config.dt);
        let t_next = (step_idx + 1) as f64 * config.dt;
        for i in 0..n {
            ensure_finite(&state.upsilon[i], i, t_next, "state")?;
            debug_assert!(game.action_box(i).contains(&state.x(i, d)));
            debug_assert!(state.mu[i].iter().all(|&m| m >= 0.0));
        }

        if (step_idx + 1) % stride == 0 || step_idx + 1 == n_steps {
            record(
                &mut times, &mut states, &mut betas, &mut gammas, t_next, &state, &trig,
            );
        }
    }

    Ok(Trajectory {
        times,
        states,
        betas,
        gammas,
        event_log: trig.map(|tr| tr.event_log).unwrap_or_default(),
        config: config.clone(),
        trigger_config: trig_cfg.cloned(),
        n_steps,
    })
}
