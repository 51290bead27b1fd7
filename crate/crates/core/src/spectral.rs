//! Graph Laplacians, a symmetric eigensolver and Fiedler numbers.

use std::cmp::Ordering;
use std::collections::VecDeque;

use crate::check::Inequality;
use crate::dynamics::{FailureMask, WeightMatrix};
use crate::error::{FlockError, Result};
use crate::matrix::SquareMatrix;
use crate::scalar::Scalar;

/// Sweep budget of the Jacobi eigensolver.
pub const MAX_SWEEPS: usize = 100;

/// Eigenvalues this close to zero are reported as exactly zero.
pub const ZERO_CLAMP: f64 = 1e-9;

/// `L = D - A` for a weighted graph.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix<T>(SquareMatrix<T>);

impl<T: Scalar> LaplacianMatrix<T> {
    pub fn as_matrix(&self) -> &SquareMatrix<T> {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.dim()
    }
}

/// Ascending spectrum of a Laplacian together with its second-smallest eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult<T> {
    pub eigenvalues: Vec<T>,
    pub fiedler: T,
}

/// Builds `D - A` with `d_ii = sum_j a_ij`.
pub fn laplacian<T: Scalar>(weights: &WeightMatrix<T>) -> Result<LaplacianMatrix<T>> {
    let a = weights.as_matrix();
    a.ensure_symmetric(T::of(1e-12))?;
    let k = a.dim();
    let mut l = a.scale(-T::one());
    for i in 0..k {
        // the diagonal of `a` is zero, so the row sum is the degree
        l[(i, i)] = weights.degree(i);
    }
    Ok(LaplacianMatrix(l))
}

/// All eigenvalues of a real symmetric matrix, ascending.
///
/// Cyclic Jacobi rotations; converged once the Frobenius norm of the
/// off-diagonal part drops below `tol`.
pub fn symmetric_eigenvalues<T: Scalar>(matrix: &SquareMatrix<T>, tol: T) -> Result<Vec<T>> {
    matrix.ensure_symmetric(T::of(1e-12))?;
    let n = matrix.dim();
    let mut a = matrix.clone();
    let hundred = T::of(100.0);

    for sweep in 0..=MAX_SWEEPS {
        let off = a.off_diagonal_sq().sqrt();
        if off < tol {
            let mut eig = a.diagonal();
            eig.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
            return Ok(eig);
        }
        if sweep == MAX_SWEEPS {
            return Err(FlockError::NoConvergence {
                sweeps: MAX_SWEEPS,
                residual: off.as_f64(),
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // entry below the precision of both diagonal terms: drop it
                let g = hundred * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[(p, q)] = T::zero();
                    a[(q, p)] = T::zero();
                    continue;
                }
                let theta = (aqq - app) / (apq + apq);
                let mut t = T::one() / (theta.abs() + theta.hypot(T::one()));
                if theta < T::zero() {
                    t = -t;
                }
                let c = T::one() / t.hypot(T::one());
                let s = t * c;
                let tau = s / (T::one() + c);

                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    let new_rp = arp - s * (arq + arp * tau);
                    let new_rq = arq + s * (arp - arq * tau);
                    a[(r, p)] = new_rp;
                    a[(p, r)] = new_rp;
                    a[(r, q)] = new_rq;
                    a[(q, r)] = new_rq;
                }
            }
        }
    }
    unreachable!("loop returns on its last iteration")
}

fn clamp_zero<T: Scalar>(x: T, tol: T) -> T {
    if x.abs() <= tol.max(T::of(ZERO_CLAMP)) {
        T::zero()
    } else {
        x
    }
}

/// Spectrum of the Laplacian of `weights`, with near-zero eigenvalues clamped.
pub fn spectrum<T: Scalar>(weights: &WeightMatrix<T>, tol: T) -> Result<SpectralResult<T>> {
    let l = laplacian(weights)?;
    let eigenvalues: Vec<T> = symmetric_eigenvalues(l.as_matrix(), tol)?
        .into_iter()
        .map(|x| clamp_zero(x, tol))
        .collect();
    let fiedler = eigenvalues.get(1).copied().unwrap_or(T::zero()).max(T::zero());
    Ok(SpectralResult {
        eigenvalues,
        fiedler,
    })
}

/// Algebraic connectivity (second-smallest Laplacian eigenvalue) of the weighted graph.
pub fn fiedler<T: Scalar>(weights: &WeightMatrix<T>, tol: T) -> Result<T> {
    Ok(spectrum(weights, tol)?.fiedler)
}

/// Fiedler number of the unweighted graph of surviving links.
pub fn fiedler_noncolored<T: Scalar>(mask: &FailureMask, tol: T) -> Result<T> {
    fiedler(&mask.to_weights::<T>(), tol)
}

/// Breadth-first connectivity test of the 0-1 graph. Exact, no floating point.
pub fn is_connected(mask: &FailureMask) -> bool {
    let k = mask.k();
    if k == 0 {
        return true;
    }
    let mut seen = vec![false; k];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(i) = queue.pop_front() {
        for j in mask.neighbors(i) {
            if !seen[j] {
                seen[j] = true;
                reached += 1;
                queue.push_back(j);
            }
        }
    }
    reached == k
}

/// Checks `fiedler <= k/(k-1) * min_v d(v)` with weighted degrees.
pub fn degree_bound_check<T: Scalar>(weights: &WeightMatrix<T>, tol: T) -> Result<Inequality<T>> {
    let k = weights.k();
    let phi = fiedler(weights, tol)?;
    let min_degree = (0..k)
        .map(|i| weights.degree(i))
        .fold(T::infinity(), |a, b| a.min(b));
    let kf = T::of_usize(k);
    let bound = kf / (kf - T::one()) * min_degree;
    Ok(Inequality::new(phi, bound))
}

/// Checks `phi >= phi_plain * mu`, with `phi` the weighted Fiedler number, `phi_plain`
/// that of the link graph and `mu` the smallest positive weight. Without any edge
/// both sides are zero.
pub fn weighted_fiedler_check<T: Scalar>(
    weights: &WeightMatrix<T>,
    mask: &FailureMask,
    tol: T,
) -> Result<Inequality<T>> {
    let k = weights.k();
    if mask.k() != k {
        return Err(FlockError::DimensionMismatch {
            expected: k,
            got: mask.k(),
        });
    }
    for i in 0..k {
        for j in 0..k {
            if i != j && (weights.get(i, j) > T::zero()) != mask.get(i, j) {
                return Err(FlockError::PatternMismatch { i, j });
            }
        }
    }
    let mu = match crate::analysis::min_positive_weight(weights) {
        Some(mu) => mu,
        None => return Ok(Inequality::new(T::zero(), T::zero())),
    };
    let phi = fiedler(weights, tol)?;
    let phi_plain = fiedler_noncolored(mask, tol)?;
    Ok(Inequality::new(phi_plain * mu, phi))
}
