//! Simulation library for online noncooperative games with time-varying
//! costs and coupling constraints, played over a communication graph.
//!
//! Each player tracks an estimate of the full action profile and a local
//! multiplier for the shared inequality constraint. The library integrates
//! the resulting projected dynamics with explicit Euler stepping in two
//! communication modes: continuous neighbor exchange, and a dynamic
//! event-triggered scheme where players rebroadcast only when a local error
//! condition fires. Post-hoc metrics quantify regret and constraint fit
//! against a time-averaged equilibrium computed by a variational oracle.
//!
//! The crate is organized as:
//! - [`graph`]: communication topologies and Laplacian spectra
//! - [`game`]: player oracles, action boxes, projections, diagnostics
//! - [`expr`]: the expression grammar scenario files use for costs
//! - [`scenario`]: TOML scenario loading plus the built-in example
//! - [`dynamics`]: the flows and the Euler integrator
//! - [`trigger`]: event conditions, internal variables, Zeno diagnostics
//! - [`metrics`]: regret, fit, the equilibrium oracle, bound checks

pub mod dynamics;
pub mod error;
pub mod expr;
pub mod game;
pub mod graph;
pub mod metrics;
pub mod scenario;
pub mod trigger;

pub use dynamics::{simulate, Mode, SolverConfig, SwarmState, Trajectory};
pub use error::{Error, Result};
pub use game::{BoxSet, GameSpec, PlayerSpec};
pub use graph::{build_laplacian, LaplacianData, Topology};
pub use metrics::{
    bound_check, fit, gne_oracle, metric_series, regret, BoundReport, FitSeries, MetricSeries,
    Provenance, ReferencePoint,
};
pub use scenario::{load_scenario, Scenario};
pub use trigger::{zeno_report, TriggerConfig, TriggerState, ZenoReport};
