//! Independent oracles for the spectral code: exact characteristic polynomials
//! of integer Laplacians and their roots.

#![allow(dead_code)]

use num_rational::Ratio;

use csflock::FailureMask;

pub type Q = Ratio<i64>;

/// Polynomial with coefficients from the constant term upward.
pub type Poly = Vec<Q>;

fn trim(mut p: Poly) -> Poly {
    while p.len() > 1 && *p.last().unwrap() == Q::from_integer(0) {
        p.pop();
    }
    p
}

fn is_zero(p: &Poly) -> bool {
    p.iter().all(|c| *c == Q::from_integer(0))
}

/// Integer Laplacian of the 0-1 graph.
pub fn integer_laplacian(mask: &FailureMask) -> Vec<Vec<i64>> {
    let k = mask.k();
    let mut l = vec![vec![0i64; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i != j && mask.get(i, j) {
                l[i][j] = -1;
                l[i][i] += 1;
            }
        }
    }
    l
}

/// det(xI - A) by the Faddeev-LeVerrier recursion, exact over the rationals.
pub fn char_poly(a: &[Vec<i64>]) -> Poly {
    let n = a.len();
    let aq: Vec<Vec<Q>> = a
        .iter()
        .map(|r| r.iter().map(|&v| Q::from_integer(v)).collect())
        .collect();
    let mut coeffs = vec![Q::from_integer(0); n + 1];
    coeffs[n] = Q::from_integer(1);
    let mut m = vec![vec![Q::from_integer(0); n]; n];
    for step in 1..=n {
        // M_step = A M_{step-1} + c_{n-step+1} I
        let mut next = vec![vec![Q::from_integer(0); n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = Q::from_integer(0);
                for l in 0..n {
                    s += aq[i][l] * m[l][j];
                }
                next[i][j] = s;
            }
            next[i][i] += coeffs[n - step + 1];
        }
        m = next;
        let mut tr = Q::from_integer(0);
        for i in 0..n {
            for l in 0..n {
                tr += aq[i][l] * m[l][i];
            }
        }
        coeffs[n - step] = -tr / Q::from_integer(step as i64);
    }
    coeffs
}

fn derivative(p: &Poly) -> Poly {
    if p.len() <= 1 {
        return vec![Q::from_integer(0)];
    }
    p.iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| *c * Q::from_integer(i as i64))
        .collect()
}

/// Quotient and remainder of polynomial division.
fn div_rem(num: &Poly, den: &Poly) -> (Poly, Poly) {
    let den = trim(den.clone());
    let mut rem = trim(num.clone());
    let dl = den.len();
    if rem.len() < dl {
        return (vec![Q::from_integer(0)], rem);
    }
    let mut quot = vec![Q::from_integer(0); rem.len() - dl + 1];
    while rem.len() >= dl && !is_zero(&rem) {
        let shift = rem.len() - dl;
        let f = *rem.last().unwrap() / *den.last().unwrap();
        quot[shift] = f;
        for (i, d) in den.iter().enumerate() {
            rem[i + shift] -= f * *d;
        }
        rem.pop();
        rem = trim(rem);
    }
    (quot, rem)
}

fn gcd(a: &Poly, b: &Poly) -> Poly {
    let (mut x, mut y) = (trim(a.clone()), trim(b.clone()));
    while !is_zero(&y) {
        let (_, r) = div_rem(&x, &y);
        x = y;
        y = r;
    }
    x
}

fn eval(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Smallest root of a polynomial whose roots are all real, simple and positive.
/// Newton from the origin climbs monotonically to it.
fn smallest_simple_root(p: &Poly) -> f64 {
    let pf: Vec<f64> = p.iter().map(|c| *c.numer() as f64 / *c.denom() as f64).collect();
    let dpf: Vec<f64> = pf.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect();
    let mut x = 0.0;
    for _ in 0..200 {
        let step = eval(&pf, x) / eval(&dpf, x);
        x -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    x
}

/// Second-smallest Laplacian eigenvalue of the 0-1 graph from its characteristic polynomial.
pub fn fiedler_by_char_poly(mask: &FailureMask) -> f64 {
    let p = char_poly(&integer_laplacian(mask));
    let zero_mult = p.iter().take_while(|c| **c == Q::from_integer(0)).count();
    if zero_mult >= 2 {
        return 0.0;
    }
    let q: Poly = p[1..].to_vec();
    if q.len() == 1 {
        // k = 1: no second eigenvalue
        return 0.0;
    }
    let g = gcd(&q, &derivative(&q));
    let (square_free, _) = div_rem(&q, &g);
    smallest_simple_root(&square_free)
}

/// Every 0-1 graph on `k` labelled vertices.
pub fn all_masks(k: usize) -> impl Iterator<Item = FailureMask> {
    let pairs = k * (k - 1) / 2;
    (0u64..(1 << pairs)).map(move |bits| FailureMask::from_pair_bits(k, bits))
}
