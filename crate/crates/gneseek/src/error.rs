//! Crate-wide error type.

use crate::metrics::ReferencePoint;

/// Errors produced by the simulator library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A point that must lie in its feasible set is outside it beyond tolerance.
    #[error("infeasible point: {0}")]
    InfeasiblePoint(String),

    /// The communication graph does not connect all players.
    #[error("topology is not connected")]
    DisconnectedGraph,

    /// Structurally invalid topology (bad index, self loop, duplicate edge, bad weight).
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    /// Vector or matrix dimensions disagree with the declared game shape.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A cost, gradient, or constraint oracle produced a non-finite value.
    #[error("non-finite value in {term} for player {player} at t={time}")]
    NumericalBlowup {
        player: usize,
        time: f64,
        term: &'static str,
    },

    /// An internal trigger variable fell below its guaranteed exponential floor,
    /// which indicates a bug in the event/flow ordering rather than a modeling issue.
    #[error("{which}_{player}(t={time}) = {value:e} fell below floor {floor:e}")]
    FloorViolated {
        player: usize,
        time: f64,
        which: &'static str,
        value: f64,
        floor: f64,
    },

    /// The equilibrium solver could not reach the residual tolerance. The best
    /// point found is still attached so callers may proceed with it, flagged.
    #[error("equilibrium oracle residual {:e} above tolerance", .best.residual)]
    NoConvergence { best: Box<ReferencePoint> },

    /// Scenario file or expression problems.
    #[error("scenario error: {0}")]
    Scenario(String),

    /// Expression parse error with location information.
    #[error("expression parse error at byte {position}: {message}")]
    ExprParse { position: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
