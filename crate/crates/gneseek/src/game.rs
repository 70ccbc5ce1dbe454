//! Game data: costs, constraints, action boxes, and the projection toolbox.
//!
//! A game couples `n` players. Player `i` holds a `d`-dimensional action
//! constrained to a box, a time-varying cost J_i(t, x) that is convex in the
//! player's own block for each fixed time, and a share g_i(t, x_i) of the
//! `q`-dimensional coupling constraint sum_i g_i(t, x_i) <= 0. Full action
//! profiles are passed around as flat vectors of length n*d with player i
//! occupying rows i*d .. (i+1)*d.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Distance from a bound within which a coordinate counts as active, so that
/// floating-point drift from repeated projections cannot declassify a bound.
pub const BOUND_TOL: f64 = 1e-12;

/// Axis-aligned box `[lower_k, upper_k]` per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxSet {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch(format!(
                "box lower has {} coordinates, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for k in 0..lower.len() {
            // NaN bounds must be rejected, so the comparison accepts
            if lower[k].is_nan() || upper[k].is_nan() || lower[k] > upper[k] {
                return Err(Error::InfeasiblePoint(format!(
                    "box coordinate {k} has lower {} > upper {}",
                    lower[k], upper[k]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(dim, lo),
            DVector::from_element(dim, hi),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    /// True when every coordinate is inside up to [`BOUND_TOL`].
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && (0..x.len())
                .all(|k| x[k] >= self.lower[k] - BOUND_TOL && x[k] <= self.upper[k] + BOUND_TOL)
    }

    /// Uniform sample, coordinates drawn in declaration order.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|k| rng.random_range(self.lower[k]..=self.upper[k])),
        )
    }
}

/// Projection of the velocity `v` onto the tangent cone of `bx` at `x`:
/// outward components are zeroed at active bounds, everything else passes.
pub fn tangent_projection(bx: &BoxSet, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != bx.dim() || v.len() != bx.dim() {
        return Err(Error::DimensionMismatch(format!(
            "tangent_projection: box dim {}, x dim {}, v dim {}",
            bx.dim(),
            x.len(),
            v.len()
        )));
    }
    if !bx.contains(x) {
        return Err(Error::InfeasiblePoint(format!(
            "tangent_projection: point {x:?} outside box"
        )));
    }
    let mut out = v.clone();
    for k in 0..v.len() {
        if x[k] <= bx.lower[k] + BOUND_TOL && out[k] < 0.0 {
            out[k] = 0.0;
        }
        if x[k] >= bx.upper[k] - BOUND_TOL && out[k] > 0.0 {
            out[k] = 0.0;
        }
    }
    Ok(out)
}

/// Tangent-cone projection for the nonnegative orthant: at mu_k = 0 only
/// nonnegative velocities survive.
pub fn orthant_tangent_projection(mu: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    if mu.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "orthant_tangent_projection: mu dim {}, w dim {}",
            mu.len(),
            w.len()
        )));
    }
    if mu.iter().any(|&m| m < -BOUND_TOL) {
        return Err(Error::InfeasiblePoint(format!(
            "orthant_tangent_projection: mu {mu:?} has negative component"
        )));
    }
    let mut out = w.clone();
    for k in 0..w.len() {
        if mu[k] <= BOUND_TOL && out[k] < 0.0 {
            out[k] = 0.0;
        }
    }
    Ok(out)
}

/// Euclidean projection onto the box, i.e. componentwise clamp.
pub fn box_projection(bx: &BoxSet, y: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        bx.dim(),
        (0..bx.dim()).map(|k| y[k].clamp(bx.lower[k], bx.upper[k])),
    )
}

/// Componentwise signum with sgn(0) = 0.
pub fn sgn(v: &DVector<f64>) -> DVector<f64> {
    v.map(|x| {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    })
}

/// J_i(t, profile).
pub type CostFn = Box<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>;
/// partial of J_i with respect to the player's own block, d-dimensional.
pub type GradientFn = Box<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
/// g_i(t, x_i), q-dimensional.
pub type ConstraintFn = Box<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
/// Jacobian of g_i in x_i, shape q x d.
pub type ConstraintJacobianFn = Box<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// One player's oracles and feasible box.
pub struct PlayerSpec {
    pub cost: CostFn,
    pub cost_gradient: GradientFn,
    pub constraint: ConstraintFn,
    pub constraint_jacobian: ConstraintJacobianFn,
    pub action_box: BoxSet,
}

/// Immutable game description. All oracles must be pure functions of their
/// arguments; the simulator and the solvers rely on that for determinism.
pub struct GameSpec {
    players: Vec<PlayerSpec>,
    dim: usize,
    n_constraints: usize,
}

impl GameSpec {
    pub fn new(players: Vec<PlayerSpec>, dim: usize, n_constraints: usize) -> Result<Self> {
        if players.is_empty() {
            return Err(Error::DimensionMismatch("game needs at least one player".into()));
        }
        for (i, p) in players.iter().enumerate() {
            if p.action_box.dim() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "player {i} box has dim {}, game dim is {dim}",
                    p.action_box.dim()
                )));
            }
        }
        Ok(Self {
            players,
            dim,
            n_constraints,
        })
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    /// Per-player action dimension d.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number q of coupling constraint rows.
    pub fn n_constraints(&self) -> usize {
        self.n_constraints
    }

    pub fn action_box(&self, i: usize) -> &BoxSet {
        &self.players[i].action_box
    }

    pub fn cost_value(&self, i: usize, t: f64, profile: &DVector<f64>) -> f64 {
        (self.players[i].cost)(t, profile)
    }

    pub fn cost_gradient(&self, i: usize, t: f64, profile: &DVector<f64>) -> DVector<f64> {
        (self.players[i].cost_gradient)(t, profile)
    }

    pub fn constraint_value(&self, i: usize, t: f64, x_i: &DVector<f64>) -> DVector<f64> {
        (self.players[i].constraint)(t, x_i)
    }

    pub fn constraint_jacobian(&self, i: usize, t: f64, x_i: &DVector<f64>) -> DMatrix<f64> {
        (self.players[i].constraint_jacobian)(t, x_i)
    }

    /// Stacked pseudo-gradient F(t, z): every player's own-block gradient
    /// evaluated at the same true profile z.
    pub fn pseudo_gradient(&self, t: f64, profile: &DVector<f64>) -> DVector<f64> {
        let n = self.n_players();
        let d = self.dim;
        let mut out = DVector::zeros(n * d);
        for i in 0..n {
            let gi = self.cost_gradient(i, t, profile);
            out.rows_mut(i * d, d).copy_from(&gi);
        }
        out
    }

    /// Sum of all players' constraint values at time t, the q-vector whose
    /// nonpositivity is the coupling constraint.
    pub fn constraint_sum(&self, t: f64, profile: &DVector<f64>) -> DVector<f64> {
        let d = self.dim;
        let mut total = DVector::zeros(self.n_constraints);
        for i in 0..self.n_players() {
            let xi = profile.rows(i * d, d).into_owned();
            total += self.constraint_value(i, t, &xi);
        }
        total
    }

    /// Uniform sample of a full profile, players in ascending order.
    pub fn sample_profile<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.dim;
        let mut z = DVector::zeros(self.n_players() * d);
        for i in 0..self.n_players() {
            let xi = self.players[i].action_box.sample(rng);
            z.rows_mut(i * d, d).copy_from(&xi);
        }
        z
    }
}

impl std::fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GameSpec")
            .field("n_players", &self.n_players())
            .field("dim", &self.dim)
            .field("n_constraints", &self.n_constraints)
            .finish()
    }
}

/// Worst relative error between the analytic gradients and central finite
/// differences of the costs, over random interior points and times.
pub fn gradient_check(game: &GameSpec, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = game.dim();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let z = game.sample_profile(&mut rng);
        let t = rng.random_range(0.0..=2.0);
        for i in 0..game.n_players() {
            let analytic = game.cost_gradient(i, t, &z);
            for k in 0..d {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i * d + k] += h;
                zm[i * d + k] -= h;
                let fd = (game.cost_value(i, t, &zp) - game.cost_value(i, t, &zm)) / (2.0 * h);
                let denom = analytic[k].abs().max(1.0);
                worst = worst.max((analytic[k] - fd).abs() / denom);
            }
        }
    }
    worst
}

/// Witness that the pseudo-gradient is not monotone: a pair of profiles with
/// a negative correlation between the profile gap and the gradient gap.
#[derive(Debug, Clone)]
pub struct MonotonicityCertificate {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub inner_product: f64,
}

/// Samples profile pairs at a fixed time and returns the first pair with
/// <F(x)-F(y), x-y> < -1e-9, or `None` when every sampled pair satisfies the
/// monotonicity inequality.
pub fn monotonicity_probe(
    game: &GameSpec,
    t: f64,
    samples: usize,
    seed: u64,
) -> Option<MonotonicityCertificate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let x = game.sample_profile(&mut rng);
        let y = game.sample_profile(&mut rng);
        let diff = &x - &y;
        let ip = (game.pseudo_gradient(t, &x) - game.pseudo_gradient(t, &y)).dot(&diff);
        if ip < -1e-9 {
            return Some(MonotonicityCertificate {
                x,
                y,
                inner_product: ip,
            });
        }
    }
    None
}

/// Sampled magnitude and smoothness constants. These are maxima over finite
/// samples, hence lower bounds of the true suprema; consumers must label any
/// bound computed from them as an estimate.
#[derive(Debug, Clone, Copy)]
pub struct LipschitzEstimates {
    /// Sampled Lipschitz constant of the pseudo-gradient in the profile.
    pub l_hat: f64,
    /// Sampled maximum of |J_i| over the boxes and the time grid.
    pub kf_hat: f64,
    /// Sampled maximum of ||g_i|| over the boxes and the time grid.
    pub kg_hat: f64,
}

/// Estimates the cost magnitude, constraint magnitude, and pseudo-gradient
/// Lipschitz constants by random sampling over box profiles and grid times.
pub fn estimate_constants(
    game: &GameSpec,
    time_grid: &[f64],
    samples: usize,
    seed: u64,
) -> LipschitzEstimates {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = game.dim();
    let mut kf: f64 = 0.0;
    let mut kg: f64 = 0.0;
    let mut l: f64 = 0.0;
    let times: Vec<f64> = if time_grid.is_empty() {
        vec![0.0]
    } else {
        time_grid.to_vec()
    };
    for s in 0..samples {
        let t = times[s % times.len()];
        let z = game.sample_profile(&mut rng);
        let w = game.sample_profile(&mut rng);
        for i in 0..game.n_players() {
            kf = kf.max(game.cost_value(i, t, &z).abs());
            let xi = z.rows(i * d, d).into_owned();
            kg = kg.max(game.constraint_value(i, t, &xi).norm());
        }
        let gap = (&z - &w).norm();
        if gap > 1e-9 {
            let df = (game.pseudo_gradient(t, &z) - game.pseudo_gradient(t, &w)).norm();
            l = l.max(df / gap);
        }
    }
    LipschitzEstimates {
        l_hat: l,
        kf_hat: kf,
        kg_hat: kg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    /// Two-player decoupled game J_i = (x_i - c_i)^2 with no constraints.
    fn decoupled_game(c: [f64; 2]) -> GameSpec {
        let players = (0..2)
            .map(|i| {
                let ci = c[i];
                PlayerSpec {
                    cost: Box::new(move |_t, z: &DVector<f64>| (z[i] - ci).powi(2)),
                    cost_gradient: Box::new(move |_t, z: &DVector<f64>| dv(&[2.0 * (z[i] - ci)])),
                    constraint: Box::new(|_t, _x| DVector::zeros(0)),
                    constraint_jacobian: Box::new(|_t, _x| DMatrix::zeros(0, 1)),
                    action_box: BoxSet::cube(1, -10.0, 10.0).unwrap(),
                }
            })
            .collect();
        GameSpec::new(players, 1, 0).unwrap()
    }

    #[test]
    fn tangent_projection_interior_is_identity() {
        let bx = BoxSet::cube(2, -1.0, 6.0).unwrap();
        let out = tangent_projection(&bx, &dv(&[0.0, 0.0]), &dv(&[3.0, -4.0])).unwrap();
        assert_eq!(out, dv(&[3.0, -4.0]));
    }

    #[test]
    fn tangent_projection_active_lower_bound() {
        let bx = BoxSet::cube(2, -1.0, 6.0).unwrap();
        let out = tangent_projection(&bx, &dv(&[-1.0, 2.0]), &dv(&[-5.0, 1.0])).unwrap();
        assert_eq!(out, dv(&[0.0, 1.0]));
    }

    #[test]
    fn tangent_projection_active_upper_bound() {
        let bx = BoxSet::cube(2, -1.0, 6.0).unwrap();
        let out = tangent_projection(&bx, &dv(&[6.0, 6.0]), &dv(&[2.0, -3.0])).unwrap();
        assert_eq!(out, dv(&[0.0, -3.0]));
    }

    #[test]
    fn tangent_projection_rejects_outside_point() {
        let bx = BoxSet::cube(1, -1.0, 6.0).unwrap();
        assert!(matches!(
            tangent_projection(&bx, &dv(&[7.0]), &dv(&[0.0])),
            Err(Error::InfeasiblePoint(_))
        ));
    }

    #[test]
    fn orthant_projection_cases() {
        let out = orthant_tangent_projection(&dv(&[0.0, 1.0]), &dv(&[-2.0, -2.0])).unwrap();
        assert_eq!(out, dv(&[0.0, -2.0]));
        let out = orthant_tangent_projection(&dv(&[0.5]), &dv(&[-9.0])).unwrap();
        assert_eq!(out, dv(&[-9.0]));
        let out = orthant_tangent_projection(&dv(&[0.0]), &dv(&[3.0])).unwrap();
        assert_eq!(out, dv(&[3.0]));
        assert!(orthant_tangent_projection(&dv(&[-1.0]), &dv(&[0.0])).is_err());
    }

    #[test]
    fn box_projection_clamps() {
        let bx = BoxSet::cube(1, -1.0, 6.0).unwrap();
        assert_eq!(box_projection(&bx, &dv(&[7.0]))[0], 6.0);
        assert_eq!(box_projection(&bx, &dv(&[0.5]))[0], 0.5);
        let bx2 = BoxSet::cube(2, -1.0, 6.0).unwrap();
        assert_eq!(box_projection(&bx2, &dv(&[-3.0, 9.0])), dv(&[-1.0, 6.0]));
    }

    #[test]
    fn sgn_componentwise() {
        assert_eq!(sgn(&dv(&[-0.2, 0.0, 5.0])), dv(&[-1.0, 0.0, 1.0]));
        assert_eq!(sgn(&DVector::zeros(3)), DVector::zeros(3));
    }

    #[test]
    fn gradient_check_is_exact_for_quadratics() {
        let game = decoupled_game([1.0, 2.0]);
        // central differences are exact for quadratics up to roundoff,
        // which the 1e-6 step amplifies to the 1e-9 scale
        assert!(gradient_check(&game, 50, 3) < 1e-7);
    }

    #[test]
    fn monotonicity_probe_none_for_decoupled_convex_game() {
        let game = decoupled_game([1.0, 2.0]);
        assert!(monotonicity_probe(&game, 0.0, 10_000, 7).is_none());
    }

    #[test]
    fn monotonicity_probe_finds_certificate_for_indefinite_coupling() {
        // J_1 = x_1^2 + 5 x_1 x_2, J_2 = x_2^2 + 5 x_1 x_2: the pseudo-gradient
        // Jacobian [[2, 5], [5, 2]] has an indefinite symmetric part.
        let players = vec![
            PlayerSpec {
                cost: Box::new(|_t, z: &DVector<f64>| z[0] * z[0] + 5.0 * z[0] * z[1]),
                cost_gradient: Box::new(|_t, z: &DVector<f64>| dv(&[2.0 * z[0] + 5.0 * z[1]])),
                constraint: Box::new(|_t, _x| DVector::zeros(0)),
                constraint_jacobian: Box::new(|_t, _x| DMatrix::zeros(0, 1)),
                action_box: BoxSet::cube(1, -1.0, 1.0).unwrap(),
            },
            PlayerSpec {
                cost: Box::new(|_t, z: &DVector<f64>| z[1] * z[1] + 5.0 * z[0] * z[1]),
                cost_gradient: Box::new(|_t, z: &DVector<f64>| dv(&[2.0 * z[1] + 5.0 * z[0]])),
                constraint: Box::new(|_t, _x| DVector::zeros(0)),
                constraint_jacobian: Box::new(|_t, _x| DMatrix::zeros(0, 1)),
                action_box: BoxSet::cube(1, -1.0, 1.0).unwrap(),
            },
        ];
        let game = GameSpec::new(players, 1, 0).unwrap();
        let cert = monotonicity_probe(&game, 0.0, 10_000, 7).expect("indefinite game");
        assert!(cert.inner_product < -1e-9);
        // certificate must reproduce: <F(x)-F(y), x-y> recomputed from the pair
        let diff = &cert.x - &cert.y;
        let ip = (game.pseudo_gradient(0.0, &cert.x) - game.pseudo_gradient(0.0, &cert.y)).dot(&diff);
        assert_abs_diff_eq!(ip, cert.inner_product, epsilon = 1e-12);
    }

    #[test]
    fn estimate_constants_on_scalar_quadratic() {
        // J = (x-1)^2 on [-1, 6]: |J| peaks at x = 6 with 25; g = x - 2 peaks at 4
        let players = vec![PlayerSpec {
            cost: Box::new(|_t, z: &DVector<f64>| (z[0] - 1.0).powi(2)),
            cost_gradient: Box::new(|_t, z: &DVector<f64>| dv(&[2.0 * (z[0] - 1.0)])),
            constraint: Box::new(|_t, x: &DVector<f64>| dv(&[x[0] - 2.0])),
            constraint_jacobian: Box::new(|_t, _x| DMatrix::from_row_slice(1, 1, &[1.0])),
            action_box: BoxSet::cube(1, -1.0, 6.0).unwrap(),
        }];
        let game = GameSpec::new(players, 1, 1).unwrap();
        let est = estimate_constants(&game, &[0.0], 4000, 11);
        // sampled maxima are lower bounds of the true suprema 25 and 4
        assert!(est.kf_hat <= 25.0 + 1e-9 && est.kf_hat > 24.0);
        assert!(est.kg_hat <= 4.0 + 1e-9 && est.kg_hat > 3.9);
        // the gradient 2(x-1) is 2-Lipschitz exactly
        assert_abs_diff_eq!(est.l_hat, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_cost_magnitude() {
        let players = vec![PlayerSpec {
            cost: Box::new(|_t, _z| 3.0),
            cost_gradient: Box::new(|_t, _z| dv(&[0.0])),
            constraint: Box::new(|_t, _x| DVector::zeros(0)),
            constraint_jacobian: Box::new(|_t, _x| DMatrix::zeros(0, 1)),
            action_box: BoxSet::cube(1, -1.0, 1.0).unwrap(),
        }];
        let game = GameSpec::new(players, 1, 0).unwrap();
        let est = estimate_constants(&game, &[0.0], 100, 5);
        assert_abs_diff_eq!(est.kf_hat, 3.0, epsilon = 0.0);
        assert_abs_diff_eq!(est.kg_hat, 0.0, epsilon = 0.0);
    }
}
