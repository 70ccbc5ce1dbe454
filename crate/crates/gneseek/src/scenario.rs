//! Scenario files: loading, validation, the built-in example, initial-state
//! policies, and serialization for reproducibility hashing.
//!
//! A scenario is a TOML document declaring the topology, per-player costs
//! and constraint rows as expression strings, action boxes, the initial
//! condition policy, and solver/trigger defaults. The built-in "paper5"
//! scenario is also available with hard-coded closures; its expression form
//! is embedded so the two definitions can be cross-checked.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{SolverConfig, SwarmState};
use crate::error::{Error, Result};
use crate::expr::{parse, Expr};
use crate::game::{BoxSet, GameSpec, PlayerSpec};
use crate::graph::Topology;
use crate::trigger::TriggerConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TopologyDecl {
    kind: String,
    /// 1-based endpoint pairs, used when kind = "edges".
    #[serde(default)]
    edges: Vec<(usize, usize)>,
    /// Optional per-edge weights, unit when omitted.
    #[serde(default)]
    weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum InitDecl {
    /// Seeded uniform draw per component, identical ranges for all players;
    /// draws falling outside a player's box are clamped into it.
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
    /// One row of d values per player; must lie inside the boxes.
    Explicit { values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PlayerDecl {
    cost: String,
    #[serde(default)]
    constraint: Vec<String>,
    box_lower: Vec<f64>,
    box_upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenarioFile {
    name: String,
    players: usize,
    dim: usize,
    constraints: usize,
    topology: TopologyDecl,
    init: InitDecl,
    #[serde(default)]
    solver: SolverConfig,
    #[serde(default)]
    trigger: TriggerConfig,
    player: Vec<PlayerDecl>,
}

/// Fully resolved scenario: parsed game, topology, and run defaults.
pub struct Scenario {
    pub name: String,
    pub topology: Topology,
    pub game: GameSpec,
    pub solver: SolverConfig,
    pub trigger: TriggerConfig,
    file: ScenarioFile,
}

impl Scenario {
    /// Parses and resolves a scenario from TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text)
            .map_err(|e| Error::Scenario(format!("scenario parse failed: {e}")))?;
        resolve(file)
    }

    /// Canonical TOML form; hashing this text identifies the scenario.
    pub fn serialize(&self) -> String {
        toml::to_string_pretty(&self.file).expect("scenario files always serialize")
    }

    /// Draws the initial swarm state: actions per the init policy (players
    /// in ascending order, components within each player), estimate blocks
    /// for other players at their box centers, multipliers at zero.
    pub fn initial_state(&self, seed: u64) -> Result<SwarmState> {
        let n = self.game.n_players();
        let d = self.game.dim();
        let q = self.game.n_constraints();
        let actions: Vec<DVector<f64>> = match &self.file.init {
            InitDecl::Uniform { lower, upper } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n)
                    .map(|i| {
                        let raw = DVector::from_iterator(
                            d,
                            (0..d).map(|k| rng.random_range(lower[k]..=upper[k])),
                        );
                        crate::game::box_projection(self.game.action_box(i), &raw)
                    })
                    .collect()
            }
            InitDecl::Explicit { values } => {
                let mut actions = Vec::with_capacity(n);
                for (i, row) in values.iter().enumerate() {
                    let x = DVector::from_row_slice(row);
                    if !self.game.action_box(i).contains(&x) {
                        return Err(Error::InfeasiblePoint(format!(
                            "explicit initial action {row:?} for player {} leaves its box",
                            i + 1
                        )));
                    }
                    actions.push(x);
                }
                actions
            }
        };
        let mut centers = DVector::zeros(n * d);
        for j in 0..n {
            centers
                .rows_mut(j * d, d)
                .copy_from(&self.game.action_box(j).center());
        }
        let upsilon = (0..n)
            .map(|i| {
                let mut est = centers.clone();
                est.rows_mut(i * d, d).copy_from(&actions[i]);
                est
            })
            .collect();
        Ok(SwarmState {
            upsilon,
            mu: vec![DVector::zeros(q); n],
        })
    }
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("players", &self.game.n_players())
            .field("dim", &self.game.dim())
            .field("constraints", &self.game.n_constraints())
            .finish()
    }
}

/// Loads a scenario from a builtin id or a file path. The only builtin id is
/// "paper5".
pub fn load_scenario(spec: &str) -> Result<Scenario> {
    if spec == "paper5" {
        return builtin_paper5();
    }
    let text = std::fs::read_to_string(spec)?;
    Scenario::from_toml_str(&text)
}

fn resolve(file: ScenarioFile) -> Result<Scenario> {
    let n = file.players;
    let d = file.dim;
    let q = file.constraints;
    if n == 0 || d == 0 {
        return Err(Error::Scenario(
            "players and dim must both be positive".into(),
        ));
    }
    if file.player.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} player blocks declared for players = {n}",
            file.player.len()
        )));
    }
    file.solver.validate()?;
    file.trigger.validate()?;

    let topology = resolve_topology(&file.topology, n)?;
    let mut players = Vec::with_capacity(n);
    for (i, decl) in file.player.iter().enumerate() {
        players.push(resolve_player(i, decl, n, d, q)?);
    }
    match &file.init {
        InitDecl::Uniform { lower, upper } => {
            if lower.len() != d || upper.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "init ranges must have {d} components"
                )));
            }
            for k in 0..d {
                // NaN ranges must be rejected, so the comparison accepts
                if lower[k].is_nan() || upper[k].is_nan() || lower[k] > upper[k] {
                    return Err(Error::Scenario(format!(
                        "init range component {k} has lower {} > upper {}",
                        lower[k], upper[k]
                    )));
                }
            }
        }
        InitDecl::Explicit { values } => {
            if values.len() != n || values.iter().any(|row| row.len() != d) {
                return Err(Error::DimensionMismatch(format!(
                    "explicit init must provide {n} rows of {d} values"
                )));
            }
        }
    }

    let game = GameSpec::new(players, d, q)?;
    Ok(Scenario {
        name: file.name.clone(),
        topology,
        game,
        solver: file.solver.clone(),
        trigger: file.trigger,
        file,
    })
}

fn resolve_topology(decl: &TopologyDecl, n: usize) -> Result<Topology> {
    match decl.kind.as_str() {
        "ring" => Ok(Topology::ring(n)),
        "complete" => Ok(Topology::complete(n)),
        "edges" => {
            let mut edges = Vec::with_capacity(decl.edges.len());
            for &(a, b) in &decl.edges {
                if a == 0 || b == 0 || a > n || b > n {
                    return Err(Error::InvalidTopology(format!(
                        "edge ({a}, {b}) outside the 1-based player range 1..={n}"
                    )));
                }
                edges.push((a - 1, b - 1));
            }
            if decl.weights.is_empty() {
                Topology::new(n, edges)
            } else {
                Topology::with_weights(n, edges, decl.weights.clone())
            }
        }
        other => Err(Error::InvalidTopology(format!(
            "unknown topology kind '{other}' (expected ring, complete, or edges)"
        ))),
    }
}

fn check_variables(
    expr: &Expr,
    max_player: usize,
    dim: usize,
    owner: Option<usize>,
    what: &str,
) -> Result<()> {
    for (p, c) in expr.variables() {
        if p >= max_player || c >= dim {
            return Err(Error::DimensionMismatch(format!(
                "{what} references x{}_{} but the game has {max_player} players of dimension {dim}",
                p + 1,
                (b'a' + c as u8) as char
            )));
        }
        if let Some(i) = owner {
            if p != i {
                return Err(Error::DimensionMismatch(format!(
                    "{what} references player {}'s action; constraints may only use the owner's action",
                    p + 1
                )));
            }
        }
    }
    Ok(())
}

fn resolve_player(i: usize, decl: &PlayerDecl, n: usize, d: usize, q: usize) -> Result<PlayerSpec> {
    if decl.box_lower.len() != d || decl.box_upper.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "player {} box must have {d} components",
            i + 1
        )));
    }
    let action_box = BoxSet::new(
        DVector::from_row_slice(&decl.box_lower),
        DVector::from_row_slice(&decl.box_upper),
    )?;
    if decl.constraint.len() != q {
        return Err(Error::DimensionMismatch(format!(
            "player {} declares {} constraint rows, expected {q}",
            i + 1,
            decl.constraint.len()
        )));
    }

    let label = format!("player {} cost", i + 1);
    let cost_expr = parse(&decl.cost)
        .map_err(|e| annotate_parse_error(e, &label))?;
    check_variables(&cost_expr, n, d, None, &label)?;
    let grad_exprs: Vec<Expr> = (0..d).map(|k| cost_expr.diff(i, k)).collect();

    let mut row_exprs = Vec::with_capacity(q);
    let mut jac_exprs = Vec::with_capacity(q);
    for (j, row) in decl.constraint.iter().enumerate() {
        let label = format!("player {} constraint {}", i + 1, j + 1);
        let row_expr = parse(row).map_err(|e| annotate_parse_error(e, &label))?;
        check_variables(&row_expr, n, d, Some(i), &label)?;
        jac_exprs.push((0..d).map(|k| row_expr.diff(i, k)).collect::<Vec<_>>());
        row_exprs.push(row_expr);
    }

    let cost = cost_expr.clone();
    let dd = d;
    Ok(PlayerSpec {
        cost: Box::new(move |t, z: &DVector<f64>| cost.eval_profile(t, z, dd)),
        cost_gradient: Box::new(move |t, z: &DVector<f64>| {
            DVector::from_iterator(dd, grad_exprs.iter().map(|g| g.eval_profile(t, z, dd)))
        }),
        constraint: Box::new(move |t, x: &DVector<f64>| {
            DVector::from_iterator(
                row_exprs.len(),
                row_exprs.iter().map(|r| r.eval_with(t, &|_, c| x[c])),
            )
        }),
        constraint_jacobian: Box::new(move |t, x: &DVector<f64>| {
            DMatrix::from_fn(jac_exprs.len(), dd, |r, c| {
                jac_exprs[r][c].eval_with(t, &|_, comp| x[comp])
            })
        }),
        action_box,
    })
}

fn annotate_parse_error(e: Error, label: &str) -> Error {
    match e {
        Error::ExprParse { position, message } => Error::ExprParse {
            position,
            message: format!("{label}: {message}"),
        },
        other => other,
    }
}

/// Expression form of the built-in five-player scenario. The hard-coded
/// closures in [`builtin_paper5`] must agree with this text; a test checks
/// the two at random probe points.
const PAPER5_TOML: &str = r#"
name = "paper5"
players = 5
dim = 2
constraints = 1

[topology]
kind = "ring"

[init]
kind = "uniform"
lower = [-5.0, -5.0]
upper = [0.0, 0.0]

[solver]
dt = 0.001
horizon = 1.0
k_mu = 10.0
gain_cap = inf
mode = "continuous"
seed = 1
sample_stride = 1

[trigger]
beta0 = 300.0
gamma0 = 300.0

[[player]]
cost = "2*(x1_a - 2*cos(10*t) - 1)^2 + 2*(x1_b - cos(15*t) - 1.5)^2 + 5*x1_a*x5_a + x1_a*x5_b - x1_b*x5_a + 5*x1_b*x5_b"
constraint = ["(3*sin(1.5*t) + 17)*x1_a + (2*sin(t) + 18)*x1_b - 2"]
box_lower = [-1.0, -1.0]
box_upper = [6.0, 6.0]

[[player]]
cost = "(x2_a - cos(20*t) - 1)^2 + 2*(x2_b - 2*cos(17*t) - 3)^2 + 5*x2_a*x4_a + x2_a*x4_b - x2_b*x4_a + 5*x2_b*x4_b"
constraint = ["(4*sin(2*t) + 16)*(x2_a + x2_b) - 4"]
box_lower = [-1.0, -1.0]
box_upper = [6.0, 6.0]

[[player]]
cost = "3*(x3_a - cos(20*t) - 3)^2 + (x3_b - cos(10*t) - 1)^2 + 5*x3_a*x4_a + x3_a*x4_b - x3_b*x4_a + 5*x3_b*x4_b"
constraint = ["(5*sin(t) + 15)*x3_a + (6*sin(2.5*t) + 14)*x3_b - 3.5"]
box_lower = [-1.0, -1.0]
box_upper = [6.0, 6.0]

[[player]]
cost = "(x4_a - 3*cos(10*t) - 2)^2 + 3*(x4_b - cos(20*t) - 2)^2 - (5*x4_a*x2_a + x4_a*x2_b - x4_b*x2_a + 5*x4_b*x2_b)"
constraint = ["(6*sin(1.5*t) + 14)*x4_a + (8*sin(1.5*t) + 12)*x4_b - 3.2"]
box_lower = [-1.0, -1.0]
box_upper = [6.0, 6.0]

[[player]]
cost = "0.5*(x5_a - cos(15*t) - 1)^2 + 2*(x5_b - 3*cos(15*t) - 1)^2 - (5*x5_a*x1_a + x5_a*x1_b - x5_b*x1_a + 5*x5_b*x1_b)"
constraint = ["(7*sin(t) + 13)*x5_a + (5*sin(t) + 15)*x5_b - 3"]
box_lower = [-1.0, -1.0]
box_upper = [6.0, 6.0]
"#;

/// Quadratic tracking weights and targets (wa, wb, target_a, target_b) of
/// the built-in scenario's cost for one player at one time.
fn paper5_tracking(i: usize, t: f64) -> (f64, f64, f64, f64) {
    match i {
        0 => (2.0, 2.0, 2.0 * (10.0 * t).cos() + 1.0, (15.0 * t).cos() + 1.5),
        1 => (1.0, 2.0, (20.0 * t).cos() + 1.0, 2.0 * (17.0 * t).cos() + 3.0),
        2 => (3.0, 1.0, (20.0 * t).cos() + 3.0, (10.0 * t).cos() + 1.0),
        3 => (1.0, 3.0, 3.0 * (10.0 * t).cos() + 2.0, (20.0 * t).cos() + 2.0),
        4 => (0.5, 2.0, (15.0 * t).cos() + 1.0, 3.0 * (15.0 * t).cos() + 1.0),
        _ => unreachable!("builtin scenario has five players"),
    }
}

/// Bilinear coupling partner (0-based) and sign of the built-in costs.
fn paper5_coupling(i: usize) -> (usize, f64) {
    match i {
        0 => (4, 1.0),
        1 => (3, 1.0),
        2 => (3, 1.0),
        3 => (1, -1.0),
        4 => (0, -1.0),
        _ => unreachable!("builtin scenario has five players"),
    }
}

/// Coupling-constraint coefficients (c_a, c_b, offset) of the built-in
/// scenario: g_i = c_a x_a + c_b x_b - offset.
fn paper5_constraint_coefficients(i: usize, t: f64) -> (f64, f64, f64) {
    match i {
        0 => (3.0 * (1.5 * t).sin() + 17.0, 2.0 * t.sin() + 18.0, 2.0),
        1 => {
            let c = 4.0 * (2.0 * t).sin() + 16.0;
            (c, c, 4.0)
        }
        2 => (5.0 * t.sin() + 15.0, 6.0 * (2.5 * t).sin() + 14.0, 3.5),
        3 => (
            6.0 * (1.5 * t).sin() + 14.0,
            8.0 * (1.5 * t).sin() + 12.0,
            3.2,
        ),
        4 => (7.0 * t.sin() + 13.0, 5.0 * t.sin() + 15.0, 3.0),
        _ => unreachable!("builtin scenario has five players"),
    }
}

/// The built-in scenario with hard-coded closed-form oracles. Equivalent to
/// parsing [`PAPER5_TOML`]; the closures skip expression interpretation.
pub fn builtin_paper5() -> Result<Scenario> {
    let mut scenario = Scenario::from_toml_str(PAPER5_TOML)?;
    let d = 2;
    let players = (0..5)
        .map(|i| {
            let (partner, sign) = paper5_coupling(i);
            PlayerSpec {
                cost: Box::new(move |t, z: &DVector<f64>| {
                    let (wa, wb, ta, tb) = paper5_tracking(i, t);
                    let (xa, xb) = (z[i * d], z[i * d + 1]);
                    let (ya, yb) = (z[partner * d], z[partner * d + 1]);
                    wa * (xa - ta).powi(2)
                        + wb * (xb - tb).powi(2)
                        + sign * (5.0 * xa * ya + xa * yb - xb * ya + 5.0 * xb * yb)
                }),
                cost_gradient: Box::new(move |t, z: &DVector<f64>| {
                    let (wa, wb, ta, tb) = paper5_tracking(i, t);
                    let (xa, xb) = (z[i * d], z[i * d + 1]);
                    let (ya, yb) = (z[partner * d], z[partner * d + 1]);
                    DVector::from_row_slice(&[
                        2.0 * wa * (xa - ta) + sign * (5.0 * ya + yb),
                        2.0 * wb * (xb - tb) + sign * (-ya + 5.0 * yb),
                    ])
                }),
                constraint: Box::new(move |t, x: &DVector<f64>| {
                    let (ca, cb, offset) = paper5_constraint_coefficients(i, t);
                    DVector::from_row_slice(&[ca * x[0] + cb * x[1] - offset])
                }),
                constraint_jacobian: Box::new(move |t, _x: &DVector<f64>| {
                    let (ca, cb, _) = paper5_constraint_coefficients(i, t);
                    DMatrix::from_row_slice(1, 2, &[ca, cb])
                }),
                action_box: BoxSet::cube(2, -1.0, 6.0).unwrap(),
            }
        })
        .collect();
    scenario.game = GameSpec::new(players, 2, 1)?;
    Ok(scenario)
}
