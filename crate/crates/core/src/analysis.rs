//! Conserved quantities, centre-of-mass coordinates and the convergence bound machinery.
//!
//! The bound chain works with the relative velocities `v[t]` and positions `x[t]`:
//!
//! * per-step contraction `|v[t+1]| <= (1 - h phi[t]) |v[t]|`,
//! * the series `S[tau] = sum_{j=1}^{tau-1} prod_{i=0}^{j-1} (1 - h phi[i])`,
//! * `mu[t] >= A / (B + t^alpha)` for the smallest active weight,
//! * per-term bounds on the expected products, separately for `alpha < 1` and `alpha = 1`.

use rand::Rng;

use crate::check::Inequality;
use crate::dynamics::{sample_failure_mask, FailureMask, FlockState, ModelParams, WeightMatrix};
use crate::error::{FlockError, Result};
use crate::scalar::{mean3, norm3, sub3, Scalar, Vec3};
use crate::spectral::{fiedler, fiedler_noncolored, laplacian};

/// Arithmetic means of positions and velocities.
pub fn mean_position_velocity<T: Scalar>(state: &FlockState<T>) -> (Vec3<T>, Vec3<T>) {
    (mean3(state.positions()), mean3(state.velocities()))
}

/// Positions relative to the current centre of mass, velocities relative to the
/// initial mean velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeState<T> {
    pub rel_positions: Vec<Vec3<T>>,
    pub rel_velocities: Vec<Vec3<T>>,
}

impl<T: Scalar> RelativeState<T> {
    pub fn position_norm(&self) -> T {
        flock_norm(&self.rel_positions)
    }

    pub fn velocity_norm(&self) -> T {
        flock_norm(&self.rel_velocities)
    }
}

pub fn to_relative<T: Scalar>(state: &FlockState<T>, v_bar_0: &Vec3<T>) -> RelativeState<T> {
    let (x_bar, _) = mean_position_velocity(state);
    RelativeState {
        rel_positions: state.positions().iter().map(|x| sub3(x, &x_bar)).collect(),
        rel_velocities: state.velocities().iter().map(|v| sub3(v, v_bar_0)).collect(),
    }
}

/// Euclidean norm of the stacked 3k-vector.
pub fn flock_norm<T: Scalar>(vectors: &[Vec3<T>]) -> T {
    vectors
        .iter()
        .flat_map(|v| v.iter())
        .map(|&c| c * c)
        .sum::<T>()
        .sqrt()
}

/// Smallest strictly positive off-diagonal weight, if any.
pub fn min_positive_weight<T: Scalar>(weights: &WeightMatrix<T>) -> Option<T> {
    let k = weights.k();
    let mut best: Option<T> = None;
    for i in 0..k {
        for j in 0..k {
            let w = weights.get(i, j);
            if i != j && w > T::zero() {
                best = Some(best.map_or(w, |b| b.min(w)));
            }
        }
    }
    best
}

/// Constants of the lower bound `mu[t] >= A/(B + t^alpha)` and of the per-term bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants<T> {
    pub a: T,
    pub b: T,
    pub alpha: T,
    /// `phi_bar * h * A`; the `alpha = 1` series converges iff this exceeds 1.
    pub phi_h_a: T,
    /// `phi_bar * h * A / (1 - alpha)`, only for `alpha < 1`.
    pub gamma: Option<T>,
}

/// `A = (h |v[0]|)^(-alpha)`, `B = ((1 + |x[0]|) / (h |v[0]|))^alpha`.
///
/// Fails with [`FlockError::AlreadyFlocking`] when the initial relative velocity vanishes.
pub fn bound_constants<T: Scalar>(
    initial: &RelativeState<T>,
    params: &ModelParams<T>,
    phi_bar: T,
) -> Result<BoundConstants<T>> {
    bound_constants_from_norms(
        initial.position_norm(),
        initial.velocity_norm(),
        params,
        phi_bar,
    )
}

pub fn bound_constants_from_norms<T: Scalar>(
    x0_norm: T,
    v0_norm: T,
    params: &ModelParams<T>,
    phi_bar: T,
) -> Result<BoundConstants<T>> {
    let hv = params.h * v0_norm;
    if !(hv > T::zero()) {
        return Err(FlockError::AlreadyFlocking);
    }
    let alpha = params.alpha;
    let a = hv.powf(-alpha);
    let b = ((T::one() + x0_norm) / hv).powf(alpha);
    let phi_h_a = phi_bar * params.h * a;
    let gamma = (alpha < T::one()).then(|| phi_h_a / (T::one() - alpha));
    Ok(BoundConstants {
        a,
        b,
        alpha,
        phi_h_a,
        gamma,
    })
}

/// Constants built as if every pairwise distance were bounded by the flock norm.
/// That only holds up to a factor: `|x_i - x_j| <= sqrt(2) |x|`, so the bound
/// from [`bound_constants`] can fail (always at `t = 0` for `k = 2`, `alpha > 0`).
/// This variant scales both initial norms by `sqrt(2)`, which makes
/// `mu[t] >= A/(B + t^alpha)` hold along every trajectory.
pub fn bound_constants_pairwise_from_norms<T: Scalar>(
    x0_norm: T,
    v0_norm: T,
    params: &ModelParams<T>,
    phi_bar: T,
) -> Result<BoundConstants<T>> {
    let s = T::of(std::f64::consts::SQRT_2);
    bound_constants_from_norms(s * x0_norm, s * v0_norm, params, phi_bar)
}

/// `A / (B + t^alpha)`, with `t^alpha` taken as 0 at `t = 0`.
pub fn mu_lower_bound<T: Scalar>(t: u64, c: &BoundConstants<T>, alpha: T) -> T {
    let t_pow = if t == 0 {
        T::zero()
    } else {
        T::of(t as f64).powf(alpha)
    };
    c.a / (c.b + t_pow)
}

/// Partial sum `S[tau]` together with the last product term added to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesState<T> {
    pub tau: usize,
    pub partial_sum: T,
    pub running_product: T,
}

impl<T: Scalar> SeriesState<T> {
    /// `S[1] = 0` with the empty product.
    pub fn start() -> Self {
        Self {
            tau: 1,
            partial_sum: T::zero(),
            running_product: T::one(),
        }
    }

    /// Moves from `S[tau]` to `S[tau+1]` using `phi[tau-1]`.
    ///
    /// Factors within the check slack of `[0,1]` are clamped into it; anything
    /// further out is an error.
    pub fn advance(&mut self, phi: T, h: T) -> Result<()> {
        let index = self.tau - 1;
        let mut factor = T::one() - h * phi;
        let slack = T::CHECK_SLACK;
        if !(factor >= -slack && factor <= T::one() + slack) {
            return Err(FlockError::InvalidFactor {
                index,
                factor: factor.as_f64(),
            });
        }
        factor = factor.max(T::zero()).min(T::one());
        self.running_product = self.running_product * factor;
        self.partial_sum = self.partial_sum + self.running_product;
        self.tau += 1;
        Ok(())
    }
}

/// `S[tau]` from a history of Fiedler numbers (needs `tau - 1` entries).
pub fn series_partial<T: Scalar>(phi_history: &[T], h: T, tau: usize) -> Result<SeriesState<T>> {
    let mut s = SeriesState::start();
    if tau <= 1 {
        s.tau = tau;
        return Ok(s);
    }
    let needed = tau - 1;
    if phi_history.len() < needed {
        return Err(FlockError::ShortHistory {
            needed,
            got: phi_history.len(),
        });
    }
    for &phi in &phi_history[..needed] {
        s.advance(phi, h)?;
    }
    Ok(s)
}

fn require_sublinear<T: Scalar>(c: &BoundConstants<T>) -> Result<T> {
    match c.gamma {
        Some(g) if c.alpha < T::one() => Ok(g),
        _ => Err(FlockError::WrongRegime {
            expected: "alpha < 1",
            alpha: c.alpha.as_f64(),
        }),
    }
}

/// Closed-form term `exp(-gamma j^(1-alpha))` for `alpha < 1`.
///
/// This is *not* an upper bound on the expected product
/// [`expected_term`]: summing `1/(B + i^alpha)` gives at most
/// `j^(1-alpha)/(1-alpha)`, so the exponent is too negative. Use
/// [`term_bound_sublinear_sum`] or [`term_bound_sublinear_corrected`] when a
/// valid bound is needed.
pub fn term_bound_sublinear<T: Scalar>(j: u64, c: &BoundConstants<T>) -> Result<T> {
    let gamma = require_sublinear(c)?;
    let jf = T::of(j as f64);
    Ok((-gamma * jf.powf(T::one() - c.alpha)).exp())
}

/// `exp(-phi_bar h A sum_{i=1}^j 1/(B + i^alpha))`, which bounds [`expected_term`]
/// from above because `1 - x <= exp(-x)`.
pub fn term_bound_sublinear_sum<T: Scalar>(j: u64, c: &BoundConstants<T>) -> Result<T> {
    require_sublinear(c)?;
    let s: T = (1..=j)
        .map(|i| T::one() / (c.b + T::of(i as f64).powf(c.alpha)))
        .sum();
    Ok((-c.phi_h_a * s).exp())
}

/// Closed-form upper bound `exp(-gamma ((j+1)^(1-alpha) - 1) / (B + 1))`.
///
/// Follows from `B + x^alpha <= (B + 1) x^alpha` for `x >= 1` and an integral
/// comparison; the terms are still summable in `j`.
pub fn term_bound_sublinear_corrected<T: Scalar>(j: u64, c: &BoundConstants<T>) -> Result<T> {
    let gamma = require_sublinear(c)?;
    let e = T::one() - c.alpha;
    let jf = T::of(j as f64);
    Ok((-gamma * ((jf + T::one()).powf(e) - T::one()) / (c.b + T::one())).exp())
}

/// Expected product `prod_{i=1}^j (1 - phi_bar h A / (B + i^alpha))` for independent
/// link graphs with mean Fiedler number `phi_bar`.
pub fn expected_term<T: Scalar>(j: u64, c: &BoundConstants<T>) -> T {
    (1..=j)
        .map(|i| T::one() - c.phi_h_a / (c.b + T::of(i as f64).powf(c.alpha)))
        .fold(T::one(), |acc, f| acc * f)
}

/// `((B + 1)/(B + j + 1))^(phi_bar h A)` for `alpha = 1`.
pub fn term_bound_linear<T: Scalar>(j: u64, c: &BoundConstants<T>) -> Result<T> {
    if c.alpha != T::one() {
        return Err(FlockError::WrongRegime {
            expected: "alpha = 1",
            alpha: c.alpha.as_f64(),
        });
    }
    let jf = T::of(j as f64);
    Ok(((c.b + T::one()) / (c.b + jf + T::one())).powf(c.phi_h_a))
}

/// Sum threshold above which the probe declares divergence.
pub const DIVERGENCE_SUM: f64 = 1e6;
/// Increment below which the probe declares convergence.
pub const CONVERGENCE_INCREMENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeriesVerdict {
    Convergent { condensed_sum: f64, terms: u64 },
    Divergent { condensed_sum: f64, terms: u64 },
}

impl SeriesVerdict {
    pub fn is_divergent(&self) -> bool {
        matches!(self, SeriesVerdict::Divergent { .. })
    }
}

/// Convergence probe for the `alpha = 1` series `sum_j ((B+1)/(B+j+1))^p`.
///
/// Works on the Cauchy-condensed series `sum_m 2^m a(2^m) / (B+1)` (same
/// convergence behaviour for nonincreasing terms), evaluated in log space so
/// that indices far beyond `u64` are reachable. Divergent once the condensed
/// sum passes [`DIVERGENCE_SUM`] while increments stay at or above
/// [`CONVERGENCE_INCREMENT`]; convergent once an increment drops below it.
pub fn linear_series_probe<T: Scalar>(c: &BoundConstants<T>) -> Result<SeriesVerdict> {
    if c.alpha != T::one() {
        return Err(FlockError::WrongRegime {
            expected: "alpha = 1",
            alpha: c.alpha.as_f64(),
        });
    }
    let b1 = c.b.as_f64() + 1.0;
    let p = c.phi_h_a.as_f64();
    let ln2 = std::f64::consts::LN_2;
    let mut sum = 0.0;
    let mut m: u64 = 0;
    loop {
        let mf = m as f64;
        // ln(B + 1 + 2^m) = m ln 2 + ln(1 + (B+1) 2^-m)
        let ln_den = mf * ln2 + (b1 * (-mf).exp2()).ln_1p();
        let ln_term = mf * ln2 + p * (b1.ln() - ln_den) - b1.ln();
        let term = ln_term.exp();
        if term < CONVERGENCE_INCREMENT {
            return Ok(SeriesVerdict::Convergent {
                condensed_sum: sum,
                terms: m,
            });
        }
        sum += term;
        m += 1;
        if sum > DIVERGENCE_SUM {
            return Ok(SeriesVerdict::Divergent {
                condensed_sum: sum,
                terms: m,
            });
        }
    }
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub mean: T,
    pub std_error: T,
}

/// Monte Carlo estimate of the critical velocity: the mean Fiedler number of
/// the random link graph over `n_samples` independent masks.
pub fn critical_velocity_estimate<T: Scalar, R: Rng + ?Sized>(
    k: usize,
    lambda: T,
    n_samples: usize,
    rng: &mut R,
) -> Result<Estimate<T>> {
    if n_samples == 0 {
        return Err(FlockError::InvalidParameter {
            field: "samples",
            reason: "need at least one sample".into(),
        });
    }
    let params = ModelParams::with_default_step(k, T::zero(), lambda)?;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for _ in 0..n_samples {
        let mask = sample_failure_mask(&params, rng);
        let phi = fiedler_noncolored::<T>(&mask, T::EIGEN_TOL)?.as_f64();
        sum += phi;
        sum_sq += phi * phi;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = if n_samples > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(Estimate {
        mean: T::of(mean),
        std_error: T::of((var / n).sqrt()),
    })
}

/// Largest `k` accepted by [`critical_velocity_exact`].
pub const EXACT_MAX_K: usize = 5;

/// Exact mean Fiedler number of the random link graph by enumerating every edge subset.
pub fn critical_velocity_exact<T: Scalar>(k: usize, lambda: T) -> Result<T> {
    if k > EXACT_MAX_K {
        return Err(FlockError::TooManyAgents {
            k,
            max: EXACT_MAX_K,
        });
    }
    ModelParams::with_default_step(k, T::zero(), lambda)?;
    let pairs = k * (k - 1) / 2;
    let up = T::one() - lambda;
    let mut total = T::zero();
    for bits in 0u64..(1 << pairs) {
        let edges = bits.count_ones() as i32;
        let prob = up.powi(edges) * lambda.powi(pairs as i32 - edges);
        if prob == T::zero() {
            continue;
        }
        let mask = FailureMask::from_pair_bits(k, bits);
        total = total + prob * fiedler_noncolored::<T>(&mask, T::EIGEN_TOL)?;
    }
    Ok(total)
}

/// Running record of a family of inequality checks.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck<T> {
    pub checked: usize,
    pub violations: usize,
    pub first_violation: Option<usize>,
    pub worst_margin: Option<T>,
}

impl<T: Scalar> Default for BoundCheck<T> {
    fn default() -> Self {
        Self {
            checked: 0,
            violations: 0,
            first_violation: None,
            worst_margin: None,
        }
    }
}

impl<T: Scalar> BoundCheck<T> {
    pub fn record(&mut self, index: usize, ineq: Inequality<T>) {
        self.checked += 1;
        let m = ineq.margin();
        self.worst_margin = Some(self.worst_margin.map_or(m, |w| w.min(m)));
        if !ineq.holds() {
            self.violations += 1;
            self.first_violation.get_or_insert(index);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// `|v[t+1]| <= (1 - h phi[t]) |v[t]|` for each consecutive pair.
pub fn contraction_check<T: Scalar>(v_norms: &[T], phis: &[T], h: T) -> BoundCheck<T> {
    let mut check = BoundCheck::default();
    for t in 0..v_norms.len().saturating_sub(1).min(phis.len()) {
        let rhs = (T::one() - h * phis[t]) * v_norms[t];
        check.record(t, Inequality::new(v_norms[t + 1], rhs));
    }
    check
}

/// Direct per-step contraction using the operator `Id - hL` on relative velocities.
pub fn contraction_step<T: Scalar>(
    weights: &WeightMatrix<T>,
    rel_velocities: &[Vec3<T>],
    h: T,
    tol: T,
) -> Result<Inequality<T>> {
    let l = laplacian(weights)?;
    let lv = l.as_matrix().mul_vec3(rel_velocities);
    let next: Vec<Vec3<T>> = rel_velocities
        .iter()
        .zip(&lv)
        .map(|(v, w)| [v[0] - h * w[0], v[1] - h * w[1], v[2] - h * w[2]])
        .collect();
    let phi = fiedler(weights, tol)?;
    Ok(Inequality::new(
        flock_norm(&next),
        (T::one() - h * phi) * flock_norm(rel_velocities),
    ))
}

/// `sum_{j<tau} |v[j]| <= |v[0]| (1 + S[tau])` for every `tau` in `1..=len`.
pub fn velocity_series_bound_check<T: Scalar>(
    v_norms: &[T],
    phis: &[T],
    h: T,
) -> Result<BoundCheck<T>> {
    let mut check = BoundCheck::default();
    let Some(&v0) = v_norms.first() else {
        return Ok(check);
    };
    let mut series = SeriesState::start();
    let mut lhs = T::zero();
    for tau in 1..=v_norms.len() {
        if tau > 1 {
            let phi = *phis.get(tau - 2).ok_or(FlockError::ShortHistory {
                needed: tau - 1,
                got: phis.len(),
            })?;
            series.advance(phi, h)?;
        }
        lhs = lhs + v_norms[tau - 1];
        check.record(
            tau,
            Inequality::new(lhs, v0 * (T::one() + series.partial_sum)),
        );
    }
    Ok(check)
}

/// `|x[t]| <= |x[0]| + t h |v[0]|` along a trajectory.
pub fn position_growth_check<T: Scalar>(x_norms: &[T], v0_norm: T, h: T) -> BoundCheck<T> {
    let mut check = BoundCheck::default();
    if let Some(&x0) = x_norms.first() {
        for (t, &x) in x_norms.iter().enumerate() {
            check.record(
                t,
                Inequality::new(x, x0 + T::of(t as f64) * h * v0_norm),
            );
        }
    }
    check
}

/// `mu[t] >= A/(B + t^alpha)` at every step that has at least one active link.
pub fn mu_bound_check<T: Scalar>(mus: &[Option<T>], c: &BoundConstants<T>) -> BoundCheck<T> {
    let mut check = BoundCheck::default();
    for (t, mu) in mus.iter().enumerate() {
        if let Some(mu) = *mu {
            check.record(t, Inequality::new(mu_lower_bound(t as u64, c, c.alpha), mu));
        }
    }
    check
}

/// Euclidean distance between agents, as used for the weights.
pub fn pair_distance<T: Scalar>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    norm3(&sub3(a, b))
}
