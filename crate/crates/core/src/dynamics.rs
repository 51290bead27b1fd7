//! Flock state and one step of the Cucker-Smale dynamics with random link failures.
//!
//! Each step draws one Bernoulli outcome per unordered pair of agents (link up
//! with probability `1 - lambda`), weights surviving links by
//! `(1 + |X_i - X_j|)^(-alpha)` and then updates positions and velocities
//! simultaneously from the time-`t` values:
//!
//! ```text
//! X_i(t+h) = X_i(t) + h V_i(t)
//! V_i(t+h) = V_i(t) + h * sum_j a_ij (V_j(t) - V_i(t))
//! ```

use rand::Rng;

use crate::error::{FlockError, Result};
use crate::matrix::SquareMatrix;
use crate::scalar::{add_scaled3, norm3, sub3, Scalar, Vec3};
use crate::spectral::LaplacianMatrix;

/// Positions and velocities of `k` agents in R³ at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlockState<T> {
    pub t: u64,
    positions: Vec<Vec3<T>>,
    velocities: Vec<Vec3<T>>,
}

impl<T: Scalar> FlockState<T> {
    pub fn new(positions: Vec<Vec3<T>>, velocities: Vec<Vec3<T>>) -> Result<Self> {
        Self::at_step(0, positions, velocities)
    }

    pub fn at_step(t: u64, positions: Vec<Vec3<T>>, velocities: Vec<Vec3<T>>) -> Result<Self> {
        if positions.len() != velocities.len() {
            return Err(FlockError::DimensionMismatch {
                expected: positions.len(),
                got: velocities.len(),
            });
        }
        if positions.len() < 2 {
            return Err(FlockError::InvalidParameter {
                field: "k",
                reason: format!("need at least 2 agents, got {}", positions.len()),
            });
        }
        let state = Self {
            t,
            positions,
            velocities,
        };
        if !state.is_finite() {
            return Err(FlockError::NonFiniteState);
        }
        Ok(state)
    }

    pub fn k(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[Vec3<T>] {
        &self.positions
    }

    pub fn velocities(&self) -> &[Vec3<T>] {
        &self.velocities
    }

    pub fn is_finite(&self) -> bool {
        self.positions
            .iter()
            .chain(&self.velocities)
            .all(|v| v.iter().all(|c| c.is_finite()))
    }

    /// Largest per-agent Euclidean speed.
    pub fn max_speed(&self) -> T {
        self.velocities
            .iter()
            .map(norm3)
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// Model parameters: agent count, decay exponent, failure rate and time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T> {
    pub k: usize,
    pub alpha: T,
    pub lambda: T,
    pub h: T,
}

impl<T: Scalar> ModelParams<T> {
    /// Builds and validates a parameter set.
    pub fn new(k: usize, alpha: T, lambda: T, h: T) -> Result<Self> {
        let p = Self { k, alpha, lambda, h };
        p.check_ranges()?;
        validate_timestep(p)
    }

    /// Parameters with the conventional step `h = 1/k`.
    pub fn with_default_step(k: usize, alpha: T, lambda: T) -> Result<Self> {
        Self::new(k, alpha, lambda, T::one() / T::of_usize(k.max(1)))
    }

    fn check_ranges(&self) -> Result<()> {
        if self.k < 2 {
            return Err(FlockError::InvalidParameter {
                field: "k",
                reason: format!("need k >= 2, got {}", self.k),
            });
        }
        let unit = |v: T| v >= T::zero() && v <= T::one();
        if !unit(self.alpha) {
            return Err(FlockError::InvalidParameter {
                field: "alpha",
                reason: format!("must lie in [0,1], got {}", self.alpha),
            });
        }
        if !unit(self.lambda) {
            return Err(FlockError::InvalidParameter {
                field: "lambda",
                reason: format!("must lie in [0,1], got {}", self.lambda),
            });
        }
        Ok(())
    }
}

/// Accepts `params` unchanged iff `0 < h <= 1/k`.
///
/// Under this condition every coefficient of the convex-combination form of the
/// velocity update is nonnegative.
pub fn validate_timestep<T: Scalar>(params: ModelParams<T>) -> Result<ModelParams<T>> {
    let k = params.k.max(1);
    let h = params.h;
    if !(h > T::zero()) || h > T::one() / T::of_usize(k) {
        return Err(FlockError::InvalidTimestep {
            k: params.k,
            h: h.as_f64(),
        });
    }
    Ok(params)
}

/// Cucker-Smale interaction strength `(1 + distance)^(-alpha)`.
pub fn cs_weight<T: Scalar>(distance: T, alpha: T) -> Result<T> {
    if distance < T::zero() || distance.is_nan() {
        return Err(FlockError::NegativeDistance(distance.as_f64()));
    }
    Ok((T::one() + distance).powf(-alpha))
}

/// Symmetric 0-1 matrix of link outcomes for one step; diagonal is always 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FailureMask {
    k: usize,
    links: Vec<bool>,
}

impl FailureMask {
    /// Every link fails.
    pub fn empty(k: usize) -> Self {
        Self {
            k,
            links: vec![false; k * k],
        }
    }

    /// Every link survives.
    pub fn full(k: usize) -> Self {
        let mut m = Self::empty(k);
        for i in 0..k {
            for j in 0..k {
                m.links[i * k + j] = i != j;
            }
        }
        m
    }

    pub fn from_edges(k: usize, edges: &[(usize, usize)]) -> Self {
        let mut m = Self::empty(k);
        for &(i, j) in edges {
            m.set(i, j, true);
        }
        m
    }

    /// Mask whose edges are the bits of `bits` over the upper-triangle pairs
    /// in row-major order (`(0,1), (0,2), ..., (k-2,k-1)`).
    ///
    /// Panics if `k(k-1)/2 > 64`.
    pub fn from_pair_bits(k: usize, bits: u64) -> Self {
        assert!(k * k.saturating_sub(1) / 2 <= 64, "{k} agents have more pairs than bits in a u64");
        let mut m = Self::empty(k);
        for (idx, (i, j)) in upper_pairs(k).enumerate() {
            if bits >> idx & 1 == 1 {
                m.set(i, j, true);
            }
        }
        m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.links[i * self.k + j]
    }

    /// Sets the link `{i, j}` in both directions; self-links are ignored.
    pub fn set(&mut self, i: usize, j: usize, up: bool) {
        if i == j {
            return;
        }
        self.links[i * self.k + j] = up;
        self.links[j * self.k + i] = up;
    }

    pub fn edge_count(&self) -> usize {
        upper_pairs(self.k).filter(|&(i, j)| self.get(i, j)).count()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        upper_pairs(self.k).filter(move |&(i, j)| self.get(i, j))
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.k).filter(move |&j| self.get(i, j))
    }

    /// The 0-1 adjacency as a weight matrix.
    pub fn to_weights<T: Scalar>(&self) -> WeightMatrix<T> {
        let mut m = SquareMatrix::zeros(self.k);
        for (i, j) in self.edges() {
            m[(i, j)] = T::one();
            m[(j, i)] = T::one();
        }
        WeightMatrix(m)
    }
}

/// Unordered pairs `i < j` in row-major order.
pub fn upper_pairs(k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..k).flat_map(move |i| ((i + 1)..k).map(move |j| (i, j)))
}

/// Draws one link outcome per unordered pair, in row-major upper-triangle order,
/// and mirrors it. A link survives with probability `1 - lambda`.
pub fn sample_failure_mask<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    rng: &mut R,
) -> FailureMask {
    let p_up = (T::one() - params.lambda).as_f64().clamp(0.0, 1.0);
    let mut mask = FailureMask::empty(params.k);
    for (i, j) in upper_pairs(params.k) {
        if rng.random_bool(p_up) {
            mask.set(i, j, true);
        }
    }
    mask
}

/// Coefficients `a_ij` of the interaction graph: symmetric, zero diagonal, entries in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T>(pub(crate) SquareMatrix<T>);

impl<T: Scalar> WeightMatrix<T> {
    /// Wraps a matrix after checking symmetry and the zero diagonal.
    pub fn from_matrix(m: SquareMatrix<T>) -> Result<Self> {
        m.ensure_symmetric(T::of(1e-12))?;
        for i in 0..m.dim() {
            if m[(i, i)] != T::zero() {
                return Err(FlockError::InvalidParameter {
                    field: "weights",
                    reason: format!("nonzero diagonal entry at {i}"),
                });
            }
        }
        Ok(Self(m))
    }

    pub fn zeros(k: usize) -> Self {
        Self(SquareMatrix::zeros(k))
    }

    /// Every pair weighted by the same constant `c`.
    pub fn constant(k: usize, c: T) -> Self {
        let mut m = SquareMatrix::zeros(k);
        for (i, j) in upper_pairs(k) {
            m[(i, j)] = c;
            m[(j, i)] = c;
        }
        Self(m)
    }

    pub fn k(&self) -> usize {
        self.0.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &SquareMatrix<T> {
        &self.0
    }

    /// Weighted degree `sum_j a_ij`.
    pub fn degree(&self, i: usize) -> T {
        self.0.row(i).iter().copied().sum()
    }

    /// The 0-1 graph with an edge wherever the weight is positive.
    pub fn support(&self) -> FailureMask {
        let k = self.k();
        let mut mask = FailureMask::empty(k);
        for (i, j) in upper_pairs(k) {
            if self.get(i, j) > T::zero() {
                mask.set(i, j, true);
            }
        }
        mask
    }
}

/// `a_ij = mask_ij * (1 + |X_i - X_j|)^(-alpha)` with the Euclidean distance in R³.
pub fn weight_matrix<T: Scalar>(
    state: &FlockState<T>,
    mask: &FailureMask,
    params: &ModelParams<T>,
) -> Result<WeightMatrix<T>> {
    let k = state.k();
    if mask.k() != k {
        return Err(FlockError::DimensionMismatch {
            expected: k,
            got: mask.k(),
        });
    }
    let x = state.positions();
    let mut m = SquareMatrix::zeros(k);
    for (i, j) in mask.edges() {
        let w = cs_weight(norm3(&sub3(&x[i], &x[j])), params.alpha)?;
        m[(i, j)] = w;
        m[(j, i)] = w;
    }
    Ok(WeightMatrix(m))
}

/// Advances the state one step using precomputed weights (componentwise form).
pub fn step_weighted<T: Scalar>(
    state: &FlockState<T>,
    weights: &WeightMatrix<T>,
    h: T,
) -> Result<FlockState<T>> {
    let k = state.k();
    if weights.k() != k {
        return Err(FlockError::DimensionMismatch {
            expected: k,
            got: weights.k(),
        });
    }
    let x = state.positions();
    let v = state.velocities();
    let positions = x
        .iter()
        .zip(v)
        .map(|(xi, vi)| add_scaled3(xi, h, vi))
        .collect();
    let velocities = (0..k)
        .map(|i| {
            let mut pull = [T::zero(); 3];
            for j in 0..k {
                let a = weights.get(i, j);
                if a != T::zero() {
                    let d = sub3(&v[j], &v[i]);
                    for l in 0..3 {
                        pull[l] = pull[l] + a * d[l];
                    }
                }
            }
            add_scaled3(&v[i], h, &pull)
        })
        .collect();
    Ok(FlockState {
        t: state.t + 1,
        positions,
        velocities,
    })
}

/// One step of the dynamics under the given link outcomes.
pub fn step<T: Scalar>(
    state: &FlockState<T>,
    mask: &FailureMask,
    params: &ModelParams<T>,
) -> Result<FlockState<T>> {
    let w = weight_matrix(state, mask, params)?;
    step_weighted(state, &w, params.h)
}

/// The same step written as `V(t+h) = (Id - hL) V(t)`, applied per coordinate axis.
pub fn step_matrix_form<T: Scalar>(
    state: &FlockState<T>,
    laplacian: &LaplacianMatrix<T>,
    params: &ModelParams<T>,
) -> Result<FlockState<T>> {
    let k = state.k();
    let l = laplacian.as_matrix();
    if l.dim() != k {
        return Err(FlockError::DimensionMismatch {
            expected: k,
            got: l.dim(),
        });
    }
    let propagator = SquareMatrix::identity(k).sub(&l.scale(params.h));
    let positions = state
        .positions()
        .iter()
        .zip(state.velocities())
        .map(|(xi, vi)| add_scaled3(xi, params.h, vi))
        .collect();
    let velocities = propagator.mul_vec3(state.velocities());
    Ok(FlockState {
        t: state.t + 1,
        positions,
        velocities,
    })
}

/// Row-stochastic coefficients of the velocity update written as a convex
/// combination: `c_ii = 1 - h sum_j a_ij`, `c_ij = h a_ij`.
pub fn convex_coefficients<T: Scalar>(weights: &WeightMatrix<T>, h: T) -> SquareMatrix<T> {
    let k = weights.k();
    let mut c = weights.as_matrix().scale(h);
    for i in 0..k {
        c[(i, i)] = T::one() - h * weights.degree(i);
    }
    c
}
