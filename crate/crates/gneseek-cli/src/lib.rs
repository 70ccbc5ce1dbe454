//! Run orchestration for the simulator: merges flag overrides into scenario
//! defaults, executes the simulation and metrics pipeline, and writes the
//! CSV, SVG, and manifest artifacts runs are judged by.

pub mod plot;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gneseek::dynamics::{simulate, Mode, SolverConfig, Trajectory};
use gneseek::game::{estimate_constants, GameSpec};
use gneseek::graph::build_laplacian;
use gneseek::metrics::{
    bound_check, gne_oracle, metric_series, BoundReport, MetricSeries, ReferencePoint,
};
use gneseek::scenario::Scenario;
use gneseek::trigger::{zeno_report, TriggerConfig, ZenoReport};
use gneseek::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Sample times are decimated to at most this many points before they are
/// handed to the equilibrium oracle and the constant estimator.
pub const ORACLE_GRID_POINTS: usize = 65;
/// Multi-start attempts for the equilibrium oracle.
pub const ORACLE_ATTEMPTS: usize = 6;
/// Seed for the oracle restarts and the constant estimator. Fixed so that a
/// manifest fully determines every artifact byte.
pub const ORACLE_SEED: u64 = 2024;
pub const ESTIMATE_SAMPLES: usize = 400;
const ARTIFACT_VERSION: u32 = 1;

/// Optional command-line overrides layered over the scenario defaults.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub k_mu: Option<f64>,
    pub gain_cap: Option<f64>,
    pub beta0: Option<f64>,
    pub gamma0: Option<f64>,
    pub seed: Option<u64>,
    pub sample_stride: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, solver: &mut SolverConfig, trigger: &mut TriggerConfig) {
        if let Some(mode) = self.mode {
            solver.mode = mode;
        }
        if let Some(dt) = self.dt {
            solver.dt = dt;
        }
        if let Some(horizon) = self.horizon {
            solver.horizon = horizon;
        }
        if let Some(k_mu) = self.k_mu {
            solver.k_mu = k_mu;
        }
        if let Some(cap) = self.gain_cap {
            solver.gain_cap = cap;
        }
        if let Some(seed) = self.seed {
            solver.seed = seed;
        }
        if let Some(stride) = self.sample_stride {
            solver.sample_stride = stride;
        }
        if let Some(beta0) = self.beta0 {
            trigger.beta0 = beta0;
        }
        if let Some(gamma0) = self.gamma0 {
            trigger.gamma0 = gamma0;
        }
    }
}

/// Keeps at most `max_points` of the sample times, endpoints always
/// included, for use as the oracle's averaging grid.
pub fn oracle_grid(times: &[f64], max_points: usize) -> Vec<f64> {
    assert!(max_points >= 2, "grid needs room for both endpoints");
    if times.len() <= max_points {
        return times.to_vec();
    }
    let stride = (times.len() - 1).div_ceil(max_points - 1);
    let mut grid: Vec<f64> = times.iter().copied().step_by(stride).collect();
    if grid.last() != times.last() {
        grid.push(*times.last().expect("times nonempty"));
    }
    grid
}

/// Figures reported after a run, independent of where artifacts landed.
#[derive(Debug)]
pub struct RunSummary {
    pub scenario: String,
    pub mode: Mode,
    pub n_steps: usize,
    pub final_regret: f64,
    pub final_fit: f64,
    pub final_fit_over_sqrt_t: f64,
    /// Event counts, one per player; empty in continuous mode.
    pub events_per_player: Vec<usize>,
    pub bound: BoundReport,
    pub reference: ReferencePoint,
    pub zeno: Option<ZenoReport>,
    pub warnings: Vec<String>,
}

/// Paths of everything a run wrote, plus its summary.
#[derive(Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub trajectory_csv: PathBuf,
    pub metrics_csv: PathBuf,
    pub events_csv: Option<PathBuf>,
    pub plots: Vec<PathBuf>,
    pub manifest_path: PathBuf,
    pub summary: RunSummary,
}

/// Executes a scenario and writes trajectory/metrics/event CSVs, SVG plots,
/// and the reproducibility manifest into `out_dir`.
pub fn run(scenario: &Scenario, overrides: &Overrides, out_dir: &Path) -> anyhow::Result<RunArtifacts> {
    let mut solver = scenario.solver.clone();
    let mut trigger = scenario.trigger;
    overrides.apply(&mut solver, &mut trigger);
    solver.validate()?;
    trigger.validate()?;

    let init = scenario.initial_state(solver.seed)?;
    let traj = simulate(&scenario.game, &scenario.topology, &solver, &init, Some(&trigger))?;
    let lap = build_laplacian(&scenario.topology)?;

    let mut warnings = Vec::new();
    let grid = oracle_grid(&traj.times, ORACLE_GRID_POINTS);
    let reference = match gne_oracle(&scenario.game, &grid, ORACLE_ATTEMPTS, ORACLE_SEED) {
        Ok(r) => r,
        Err(Error::NoConvergence { best }) => {
            warnings.push(format!(
                "equilibrium oracle stalled at residual {:.3e}; metrics use the best point found",
                best.residual
            ));
            *best
        }
        Err(e) => return Err(e.into()),
    };
    let series = metric_series(&traj, &scenario.game, &reference);
    let estimates = estimate_constants(&scenario.game, &grid, ESTIMATE_SAMPLES, ORACLE_SEED);
    let bound = bound_check(
        &traj,
        &scenario.game,
        &lap,
        &reference,
        &estimates,
        Some(&trigger),
    );
    let zeno = match solver.mode {
        Mode::Event => Some(zeno_report(&traj, &trigger)?),
        Mode::Continuous => None,
    };

    let gain_floor = scenario.game.n_players() as f64 * estimates.kg_hat;
    if solver.k_mu < gain_floor {
        warnings.push(format!(
            "k_mu = {} is below N * Kg_hat = {:.3}; the multiplier consensus gain condition is not met",
            solver.k_mu, gain_floor
        ));
    }

    fs::create_dir_all(out_dir)?;
    let trajectory_csv = out_dir.join("trajectory.csv");
    fs::write(&trajectory_csv, trajectory_csv_text(&traj, &scenario.game))?;
    let metrics_csv = out_dir.join("metrics.csv");
    fs::write(&metrics_csv, metrics_csv_text(&series, scenario.game.n_constraints()))?;
    let events_csv = if solver.mode == Mode::Event {
        let path = out_dir.join("events.csv");
        fs::write(&path, events_csv_text(&traj))?;
        Some(path)
    } else {
        None
    };
    let manifest_path = out_dir.join("manifest.toml");
    fs::write(&manifest_path, manifest_text(scenario, &solver, &trigger))?;

    let mut plots = Vec::new();
    let regret_svg = out_dir.join("regret.svg");
    plot::line_plot(
        &regret_svg,
        "cumulative regret",
        "t",
        "R",
        &series.times,
        &series.regret,
    )?;
    plots.push(regret_svg);
    let fit_svg = out_dir.join("fit.svg");
    plot::line_plot(
        &fit_svg,
        "constraint fit over sqrt(t)",
        "t",
        "F/sqrt(t)",
        &series.times,
        &series.fit.fit_over_sqrt_t,
    )?;
    plots.push(fit_svg);
    if solver.mode == Mode::Event {
        let raster_svg = out_dir.join("events.svg");
        plot::event_raster(
            &raster_svg,
            "event times per player",
            scenario.game.n_players(),
            solver.horizon,
            &traj.event_log,
        )?;
        plots.push(raster_svg);
    }

    let mut events_per_player = Vec::new();
    if solver.mode == Mode::Event {
        events_per_player = vec![0usize; scenario.game.n_players()];
        for &(i, _) in &traj.event_log {
            events_per_player[i] += 1;
        }
    }
    let summary = RunSummary {
        scenario: scenario.name.clone(),
        mode: solver.mode,
        n_steps: traj.n_steps,
        final_regret: series.regret.last().copied().unwrap_or(0.0),
        final_fit: series.fit.fit.last().copied().unwrap_or(0.0),
        final_fit_over_sqrt_t: series.fit.fit_over_sqrt_t.last().copied().unwrap_or(0.0),
        events_per_player,
        bound,
        reference,
        zeno,
        warnings,
    };
    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        trajectory_csv,
        metrics_csv,
        events_csv,
        plots,
        manifest_path,
        summary,
    })
}

/// Comparison of the two communication modes under identical seeds.
#[derive(Debug)]
pub struct CompareReport {
    pub continuous: RunArtifacts,
    pub event: RunArtifacts,
    pub n_steps: usize,
    pub events_per_player: Vec<usize>,
    pub total_events: usize,
    /// Broadcasts a continuous run would perform: players times steps.
    pub broadcast_budget: usize,
    /// Fraction of the continuous broadcast budget the event mode avoided.
    pub saving_ratio: f64,
}

/// Runs both modes with the same seed into `out_dir/continuous` and
/// `out_dir/event` and reports the communication saving.
pub fn compare_modes(
    scenario: &Scenario,
    overrides: &Overrides,
    out_dir: &Path,
) -> anyhow::Result<CompareReport> {
    let mut cont_over = overrides.clone();
    cont_over.mode = Some(Mode::Continuous);
    let mut event_over = overrides.clone();
    event_over.mode = Some(Mode::Event);
    let continuous = run(scenario, &cont_over, &out_dir.join("continuous"))?;
    let event = run(scenario, &event_over, &out_dir.join("event"))?;

    let n_steps = continuous.summary.n_steps;
    let events_per_player = event.summary.events_per_player.clone();
    let total_events: usize = events_per_player.iter().sum();
    let broadcast_budget = scenario.game.n_players() * n_steps.max(1);
    let saving_ratio = 1.0 - total_events as f64 / broadcast_budget as f64;
    Ok(CompareReport {
        continuous,
        event,
        n_steps,
        events_per_player,
        total_events,
        broadcast_budget,
        saving_ratio,
    })
}

fn component_label(d: usize, k: usize) -> String {
    if d <= 26 {
        ((b'a' + k as u8) as char).to_string()
    } else {
        (k + 1).to_string()
    }
}

/// Header `t`, action components in player-major order, then multipliers.
pub fn trajectory_csv_text(traj: &Trajectory, game: &GameSpec) -> String {
    let n = game.n_players();
    let d = game.dim();
    let q = game.n_constraints();
    let mut out = String::from("t");
    for i in 0..n {
        for k in 0..d {
            let _ = write!(out, ",x{}_{}", i + 1, component_label(d, k));
        }
    }
    for i in 0..n {
        for j in 0..q {
            let _ = write!(out, ",mu{}_{}", i + 1, j + 1);
        }
    }
    out.push('\n');
    for (t, state) in traj.times.iter().zip(&traj.states) {
        let _ = write!(out, "{t}");
        for i in 0..n {
            let xi = state.x(i, d);
            for k in 0..d {
                let _ = write!(out, ",{}", xi[k]);
            }
        }
        for i in 0..n {
            for j in 0..q {
                let _ = write!(out, ",{}", state.mu[i][j]);
            }
        }
        out.push('\n');
    }
    out
}

/// Header `t,R,F,F_over_sqrt_t,F_1..F_q` and one row per sample.
pub fn metrics_csv_text(series: &MetricSeries, q: usize) -> String {
    let mut out = String::from("t,R,F,F_over_sqrt_t");
    for j in 0..q {
        let _ = write!(out, ",F_{}", j + 1);
    }
    out.push('\n');
    for (s, t) in series.times.iter().enumerate() {
        let _ = write!(
            out,
            "{t},{},{},{}",
            series.regret[s], series.fit.fit[s], series.fit.fit_over_sqrt_t[s]
        );
        for j in 0..q {
            let _ = write!(out, ",{}", series.fit.components[s][j]);
        }
        out.push('\n');
    }
    out
}

/// Header `player,time`; players are 1-based, rows in firing order.
pub fn events_csv_text(traj: &Trajectory) -> String {
    let mut out = String::from("player,time\n");
    for &(i, t) in &traj.event_log {
        let _ = writeln!(out, "{},{t}", i + 1);
    }
    out
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact_version: u32,
    scenario: &'a str,
    scenario_sha256: String,
    solver: &'a SolverConfig,
    trigger: &'a TriggerConfig,
}

/// Manifest recording the scenario hash and the full effective config; the
/// manifest content determines every CSV byte of the run.
pub fn manifest_text(scenario: &Scenario, solver: &SolverConfig, trigger: &TriggerConfig) -> String {
    let digest = Sha256::digest(scenario.serialize().as_bytes());
    let mut hash = String::with_capacity(64);
    for byte in digest {
        let _ = write!(hash, "{byte:02x}");
    }
    let manifest = Manifest {
        artifact_version: ARTIFACT_VERSION,
        scenario: &scenario.name,
        scenario_sha256: hash,
        solver,
        trigger,
    };
    toml::to_string_pretty(&manifest).expect("manifest serializes")
}

fn format_metric(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if !v.is_finite() {
        format!("{v}")
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.4e}")
    } else {
        format!("{v:.6}")
    }
}

/// Fixed-width summary table for one run.
pub fn render_summary(s: &RunSummary) -> String {
    let mut out = String::new();
    let mut row = |k: &str, v: String| {
        let _ = writeln!(out, "{k:<22}{v}");
    };
    row("scenario", s.scenario.clone());
    row("mode", s.mode.to_string());
    row("steps", s.n_steps.to_string());
    row("final regret", format_metric(s.final_regret));
    row("final fit", format_metric(s.final_fit));
    row("fit / sqrt(t)", format_metric(s.final_fit_over_sqrt_t));
    row(
        "regret bound",
        format!(
            "{} ({}, ratio {})",
            format_metric(s.bound.regret_bound),
            s.bound.label,
            format_metric(s.bound.regret_ratio)
        ),
    );
    row(
        "fit bound",
        format!(
            "{} ({}, ratio {})",
            format_metric(s.bound.fit_bound),
            s.bound.label,
            format_metric(s.bound.fit_ratio)
        ),
    );
    row(
        "reference",
        format!(
            "{} (residual {:.3e})",
            s.reference.provenance, s.reference.residual
        ),
    );
    if s.mode == Mode::Event {
        let counts = s
            .events_per_player
            .iter()
            .enumerate()
            .map(|(i, c)| format!("p{}={c}", i + 1))
            .collect::<Vec<_>>()
            .join(" ");
        row("events", counts);
        if let Some(zeno) = &s.zeno {
            let gap = zeno
                .min_gap
                .map(format_metric)
                .unwrap_or_else(|| "n/a".to_string());
            row("min event gap", gap);
        }
    }
    for w in &s.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

/// Side-by-side table for a two-mode comparison.
pub fn render_compare(r: &CompareReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<22}{:<18}event", "", "continuous");
    let _ = writeln!(
        out,
        "{:<22}{:<18}{}",
        "final regret",
        format_metric(r.continuous.summary.final_regret),
        format_metric(r.event.summary.final_regret)
    );
    let _ = writeln!(
        out,
        "{:<22}{:<18}{}",
        "final fit",
        format_metric(r.continuous.summary.final_fit),
        format_metric(r.event.summary.final_fit)
    );
    let counts = r
        .events_per_player
        .iter()
        .enumerate()
        .map(|(i, c)| format!("p{}={c}", i + 1))
        .collect::<Vec<_>>()
        .join(" ");
    let _ = writeln!(out, "{:<22}{}", "steps", r.n_steps);
    let _ = writeln!(out, "{:<22}{}", "events", counts);
    let _ = writeln!(
        out,
        "{:<22}{} of {}",
        "total broadcasts", r.total_events, r.broadcast_budget
    );
    let _ = writeln!(
        out,
        "{:<22}{:.1}%",
        "communication saved",
        100.0 * r.saving_ratio
    );
    out
}
