//! Regret and fit computation, the equilibrium reference oracle, and the
//! theoretical bound evaluation.
//!
//! Regret integrates each player's excess cost against the fixed reference
//! profile; fit integrates the coupling constraint and clips the negative
//! part, so violations canceled by strictly feasible periods do not count.
//! The reference itself comes either from a caller-supplied analytic point
//! or from a multi-start projected extragradient solve of the time-averaged
//! variational inequality.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{Mode, Trajectory};
use crate::error::{Error, Result};
use crate::game::{box_projection, GameSpec, LipschitzEstimates};
use crate::graph::LaplacianData;
use crate::trigger::TriggerConfig;

/// How a reference point was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Oracle,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Analytic => write!(f, "analytic"),
            Provenance::Oracle => write!(f, "oracle"),
        }
    }
}

/// Fixed hindsight profile the metrics compare against.
#[derive(Debug, Clone)]
pub struct ReferencePoint {
    pub x_star: DVector<f64>,
    pub provenance: Provenance,
    /// Variational-inequality residual at `x_star`; zero for analytic points.
    pub residual: f64,
    /// Multiplier of the averaged coupling constraint (empty when q = 0 or
    /// the point is analytic).
    pub lambda: DVector<f64>,
    /// Largest coupling-constraint component over the oracle's time grid;
    /// nonpositive means the point was feasible at every grid time.
    pub max_grid_violation: f64,
}

impl ReferencePoint {
    /// Wraps a point the caller has verified analytically.
    pub fn analytic(x_star: DVector<f64>) -> Self {
        Self {
            x_star,
            provenance: Provenance::Analytic,
            residual: 0.0,
            lambda: DVector::zeros(0),
            max_grid_violation: 0.0,
        }
    }
}

/// Cumulative trapezoidal integral of a sampled integrand over `times`.
fn cumulative_trapezoid(times: &[f64], integrand: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    for s in 0..times.len() {
        if s > 0 {
            acc += 0.5 * (times[s] - times[s - 1]) * (integrand[s] + integrand[s - 1]);
        }
        out.push(acc);
    }
    out
}

/// Regret series over the trajectory grid: the running integral of the total
/// excess cost, each player's action evaluated against the reference
/// opponents and compared to the cost at the full reference.
pub fn regret(traj: &Trajectory, game: &GameSpec, reference: &ReferencePoint) -> Vec<f64> {
    let d = game.dim();
    let integrand: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, state)| {
            let mut total = 0.0;
            for i in 0..game.n_players() {
                let mut mixed = reference.x_star.clone();
                mixed.rows_mut(i * d, d).copy_from(&state.x(i, d));
                total += game.cost_value(i, t, &mixed) - game.cost_value(i, t, &reference.x_star);
            }
            total
        })
        .collect();
    cumulative_trapezoid(&traj.times, &integrand)
}

/// Fit series: raw per-component constraint integrals, their clipped norm,
/// and the norm scaled by sqrt(t).
#[derive(Debug, Clone)]
pub struct FitSeries {
    /// Running integral of the summed constraint, one q-vector per sample.
    pub components: Vec<DVector<f64>>,
    /// fit(t) = norm of the positive part of `components`.
    pub fit: Vec<f64>,
    /// fit(t)/sqrt(t), zero at t = 0.
    pub fit_over_sqrt_t: Vec<f64>,
}

pub fn fit(traj: &Trajectory, game: &GameSpec) -> FitSeries {
    let q = game.n_constraints();
    let d = game.dim();
    let sums: Vec<DVector<f64>> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, state)| game.constraint_sum(t, &state.profile(d)))
        .collect();
    let mut components = vec![DVector::zeros(q); traj.times.len()];
    for j in 0..q {
        let integrand: Vec<f64> = sums.iter().map(|v| v[j]).collect();
        for (s, val) in cumulative_trapezoid(&traj.times, &integrand)
            .into_iter()
            .enumerate()
        {
            components[s][j] = val;
        }
    }
    let fit: Vec<f64> = components
        .iter()
        .map(|c| c.map(|v| v.max(0.0)).norm())
        .collect();
    let fit_over_sqrt_t = fit
        .iter()
        .zip(&traj.times)
        .map(|(&f, &t)| if t > 0.0 { f / t.sqrt() } else { 0.0 })
        .collect();
    FitSeries {
        components,
        fit,
        fit_over_sqrt_t,
    }
}

/// Regret and fit on a common grid, bundled for export.
#[derive(Debug, Clone)]
pub struct MetricSeries {
    pub times: Vec<f64>,
    pub regret: Vec<f64>,
    pub fit: FitSeries,
}

pub fn metric_series(
    traj: &Trajectory,
    game: &GameSpec,
    reference: &ReferencePoint,
) -> MetricSeries {
    MetricSeries {
        times: traj.times.clone(),
        regret: regret(traj, game, reference),
        fit: fit(traj, game),
    }
}

/// Projects a stacked profile into the product of the players' boxes.
fn project_profile(game: &GameSpec, z: &DVector<f64>) -> DVector<f64> {
    let d = game.dim();
    let mut out = z.clone();
    for i in 0..game.n_players() {
        let clamped = box_projection(game.action_box(i), &z.rows(i * d, d).into_owned());
        out.rows_mut(i * d, d).copy_from(&clamped);
    }
    out
}

/// Stacked constraint Jacobian of the summed coupling constraint, shape
/// q x (n*d), averaged over the grid by the caller.
fn stacked_jacobian(game: &GameSpec, t: f64, z: &DVector<f64>) -> DMatrix<f64> {
    let d = game.dim();
    let q = game.n_constraints();
    let mut jac = DMatrix::zeros(q, game.n_players() * d);
    for i in 0..game.n_players() {
        let xi = z.rows(i * d, d).into_owned();
        jac.view_mut((0, i * d), (q, d))
            .copy_from(&game.constraint_jacobian(i, t, &xi));
    }
    jac
}

/// Extragradient iterations per restart. Validated against the bundled
/// scenario: the residual settles far below the acceptance gate well before
/// this count.
const ORACLE_ITERS: usize = 60_000;
/// Augmentation weight coupling the averaged constraint into the primal map.
const ORACLE_SIGMA: f64 = 0.02;
/// Residual above which the oracle refuses to bless the point.
const ORACLE_RESIDUAL_GATE: f64 = 1e-4;
/// Residual below which further iterations and restarts stop early; sits
/// seven orders under the gate so the exit never changes accept decisions.
const ORACLE_EARLY_EXIT: f64 = 1e-11;
/// Iterations between early-exit residual checks.
const ORACLE_CHECK_EVERY: usize = 1_000;

/// Solves the time-averaged variational inequality with averaged coupling
/// constraints by multi-start projected extragradient on an augmented
/// Lagrangian. Returns the best point by residual; an error carries that
/// same point when the residual misses the gate.
pub fn gne_oracle(
    game: &GameSpec,
    time_grid: &[f64],
    attempts: usize,
    seed: u64,
) -> Result<ReferencePoint> {
    let grid: Vec<f64> = if time_grid.is_empty() {
        vec![0.0]
    } else {
        time_grid.to_vec()
    };
    let q = game.n_constraints();
    let scale = 1.0 / grid.len() as f64;

    let f_bar = |z: &DVector<f64>| -> DVector<f64> {
        let mut acc = DVector::zeros(z.len());
        for &t in &grid {
            acc += game.pseudo_gradient(t, z);
        }
        acc * scale
    };
    let g_bar = |z: &DVector<f64>| -> DVector<f64> {
        let mut acc = DVector::zeros(q);
        for &t in &grid {
            acc += game.constraint_sum(t, z);
        }
        acc * scale
    };
    let jac_bar = |z: &DVector<f64>| -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(q, z.len());
        for &t in &grid {
            acc += stacked_jacobian(game, t, z);
        }
        acc * scale
    };

    // sampled Lipschitz constant of the averaged pseudo-gradient
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lf: f64 = 0.0;
    for _ in 0..16 {
        let u = game.sample_profile(&mut rng);
        let v = game.sample_profile(&mut rng);
        let gap = (&u - &v).norm();
        if gap > 1e-9 {
            lf = lf.max((f_bar(&u) - f_bar(&v)).norm() / gap);
        }
    }
    let center = {
        let d = game.dim();
        let mut c = DVector::zeros(game.n_players() * d);
        for i in 0..game.n_players() {
            c.rows_mut(i * d, d).copy_from(&game.action_box(i).center());
        }
        c
    };
    let cg = jac_bar(&center).norm();
    let mut tau_x = 0.25 / (lf + ORACLE_SIGMA * cg * cg + 1e-12);
    if cg > 0.0 {
        tau_x = tau_x.min(0.5 / cg);
    }
    tau_x = tau_x.min(1e3);
    let tau_l = if q > 0 && cg > 0.0 {
        (0.5 / (cg * cg * tau_x)).min(10.0)
    } else {
        0.0
    };

    let augmented = |z: &DVector<f64>, lam: &DVector<f64>| -> DVector<f64> {
        if q == 0 {
            return f_bar(z);
        }
        let pressure = lam + g_bar(z).map(|v| v.max(0.0)) * ORACLE_SIGMA;
        f_bar(z) + jac_bar(z).transpose() * pressure
    };

    // plain (unaugmented) KKT residual at a candidate
    let residual_at = |z: &DVector<f64>, lam: &DVector<f64>| -> f64 {
        let kkt = if q == 0 {
            f_bar(z)
        } else {
            f_bar(z) + jac_bar(z).transpose() * lam
        };
        let primal = (z - project_profile(game, &(z - kkt))).norm();
        let dual = if q == 0 {
            0.0
        } else {
            (lam - (lam + g_bar(z)).map(|v| v.max(0.0))).norm()
        };
        primal + dual
    };

    let mut best: Option<(DVector<f64>, DVector<f64>, f64)> = None;
    for attempt in 0..attempts.max(1) {
        if best.as_ref().is_some_and(|(_, _, r)| *r < ORACLE_EARLY_EXIT) {
            break;
        }
        let mut z = if attempt == 0 {
            center.clone()
        } else {
            game.sample_profile(&mut rng)
        };
        let mut lam = DVector::zeros(q);
        for iter in 1..=ORACLE_ITERS {
            let fz = augmented(&z, &lam);
            let z_half = project_profile(game, &(&z - &fz * tau_x));
            let lam_half = (&lam + g_bar(&z) * tau_l).map(|v| v.max(0.0));
            let f_half = augmented(&z_half, &lam_half);
            let g_half = g_bar(&z_half);
            z = project_profile(game, &(&z - &f_half * tau_x));
            lam = (&lam + g_half * tau_l).map(|v| v.max(0.0));
            if iter % ORACLE_CHECK_EVERY == 0 && residual_at(&z, &lam) < ORACLE_EARLY_EXIT {
                break;
            }
        }
        let residual = residual_at(&z, &lam);
        if best.as_ref().is_none_or(|(_, _, r)| residual < *r) {
            best = Some((z, lam, residual));
        }
    }

    let (x_star, lambda, residual) = best.expect("at least one attempt runs");
    let max_grid_violation = grid
        .iter()
        .map(|&t| {
            game.constraint_sum(t, &x_star)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::NEG_INFINITY, f64::max)
        .max(if q == 0 { 0.0 } else { f64::NEG_INFINITY });
    let point = ReferencePoint {
        x_star,
        provenance: Provenance::Oracle,
        residual,
        lambda,
        max_grid_violation,
    };
    if residual > ORACLE_RESIDUAL_GATE {
        return Err(Error::NoConvergence {
            best: Box::new(point),
        });
    }
    Ok(point)
}

/// Theoretical bound evaluation. All quantities built from sampled constants
/// are estimates, hence the fixed label; the ratios are reported, never
/// asserted.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub regret_measured: f64,
    pub fit_measured: f64,
    pub regret_bound: f64,
    pub fit_bound: f64,
    /// measured / bound; infinite when the bound is zero but the measurement
    /// is not.
    pub regret_ratio: f64,
    pub fit_ratio: f64,
    /// Largest distance from the reference over the trajectory.
    pub delta_hat: f64,
    /// Initial stacked-estimate distance to the reference consensus point.
    pub upsilon_gap: f64,
    pub label: &'static str,
}

fn ratio(measured: f64, bound: f64) -> f64 {
    if bound != 0.0 {
        measured / bound
    } else if measured == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Evaluates the regret and fit bound formulas with measured quantities:
/// the initial estimate gap, the trajectory's largest distance to the
/// reference, sampled magnitude constants, and (in event mode) the trigger
/// initial values.
pub fn bound_check(
    traj: &Trajectory,
    game: &GameSpec,
    lap: &LaplacianData,
    reference: &ReferencePoint,
    estimates: &LipschitzEstimates,
    trig_cfg: Option<&TriggerConfig>,
) -> BoundReport {
    let n = game.n_players() as f64;
    let d = game.dim();
    let horizon = traj.times.last().copied().unwrap_or(0.0);
    let lambda2 = lap.lambda2;

    let upsilon_gap = traj
        .states
        .first()
        .map(|s| {
            s.upsilon
                .iter()
                .map(|u| (u - &reference.x_star).norm_squared())
                .sum::<f64>()
                .sqrt()
        })
        .unwrap_or(0.0);
    let delta_hat = traj
        .states
        .iter()
        .map(|s| (s.profile(d) - &reference.x_star).norm())
        .fold(0.0, f64::max);

    let l = estimates.l_hat;
    let series = metric_series(traj, game, reference);
    let regret_measured = series.regret.last().copied().unwrap_or(0.0);
    let fit_measured = series.fit.fit.last().copied().unwrap_or(0.0);

    let trig = trig_cfg.or(traj.trigger_config.as_ref());
    let (regret_bound, fit_bound) = match traj.config.mode {
        Mode::Continuous => {
            let r = 0.5 * upsilon_gap.powi(2) + l * l * delta_hat * delta_hat / (4.0 * lambda2);
            let f = 2.0 * n * (estimates.kf_hat * horizon).sqrt()
                + n.sqrt() * upsilon_gap
                + l * delta_hat * n.sqrt() / (2.0 * lambda2.sqrt());
            (r, f)
        }
        Mode::Event => {
            let cfg = trig.copied().unwrap_or_default();
            let k_mu = traj.config.k_mu;
            let beta_sum = n * cfg.beta0;
            let gamma_sum = n * cfg.gamma0;
            let r = 0.5 * upsilon_gap.powi(2)
                + k_mu / 4.0 * gamma_sum
                + beta_sum / 8.0
                + l * l * delta_hat * delta_hat / (2.0 * lambda2);
            let f = n.sqrt() * upsilon_gap
                + (k_mu * n / 2.0 * gamma_sum + n / 4.0 * beta_sum).sqrt()
                + 2.0 * n * (estimates.kf_hat * horizon).sqrt()
                + l * delta_hat * (n / lambda2).sqrt();
            (r, f)
        }
    };

    BoundReport {
        regret_measured,
        fit_measured,
        regret_bound,
        fit_bound,
        regret_ratio: ratio(regret_measured, regret_bound),
        fit_ratio: ratio(fit_measured, fit_bound),
        delta_hat,
        upsilon_gap,
        label: "estimate",
    }
}
