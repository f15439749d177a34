//! Operator-generated basis data for the 2-D isotropic oscillator.
//!
//! Both the angular→Cartesian transform and the radial polynomials
//! `f_{n_d n_g}(η)` come from expanding `(a_d†)^{n_d} (a_g†)^{n_g}` in the
//! Cartesian raising operators, with
//! `a_d† = (a_x† + i a_y†)/√2` and `a_g† = (a_x† − i a_y†)/√2`.
//! The tables are built once, on first use, and cached for the whole process.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest energy cutoff `m` the cached tables cover.
pub const MAX_CUTOFF: usize = 12;

/// Number of basis states with `n_d + n_g ≤ m`.
pub fn mode_count(m: usize) -> usize {
    (m + 1) * (m + 2) / 2
}

/// Flat index of `(n_d, n_g)` (or `(n_x, n_y)`) in the shell-ordered layout.
///
/// Shell `n` occupies `n(n+1)/2 .. (n+1)(n+2)/2`, ordered by the first label.
pub fn mode_index(first: usize, second: usize) -> usize {
    let n = first + second;
    n * (n + 1) / 2 + first
}

/// Inverse of [`mode_index`].
pub fn mode_labels(index: usize) -> (usize, usize) {
    let mut n = 0;
    while mode_count(n) <= index {
        n += 1;
    }
    let first = index - n * (n + 1) / 2;
    (first, n - first)
}

/// Real polynomial with ascending coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Value and first derivative in one Horner pass.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let mut p = 0.0;
        let mut dp = 0.0;
        for &c in self.coeffs.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    }
}

/// Transform and radial data for one energy shell `n`.
#[derive(Debug, Clone)]
pub struct Shell {
    /// `transform[p][n_d]`: amplitude of `ψ_{p, n−p}` in `χ_{n_d, n−n_d}`.
    pub transform: Vec<Vec<Complex64>>,
    /// `radial[n_d]` is `f_{n_d, n−n_d}`.
    pub radial: Vec<Poly>,
}

struct Tables {
    shells: Vec<Shell>,
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| Tables {
        shells: (0..=MAX_CUTOFF).map(build_shell).collect(),
    })
}

pub(crate) fn shell(n: usize) -> &'static Shell {
    &tables().shells[n]
}

pub fn check_cutoff(m: usize) -> Result<()> {
    if m > MAX_CUTOFF {
        Err(Error::CutoffExceeded {
            requested: m,
            max: MAX_CUTOFF,
        })
    } else {
        Ok(())
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Coefficients of the normalized Hermite polynomials `H_p(x)/√(2^p p!)`.
fn scaled_hermite(max: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![vec![1.0]];
    if max == 0 {
        return out;
    }
    out.push(vec![0.0, std::f64::consts::SQRT_2]);
    for p in 1..max {
        // u_{p+1} = (√2 x u_p − √p u_{p−1}) / √(p+1)
        let mut next = vec![0.0; p + 2];
        for (k, &c) in out[p].iter().enumerate() {
            next[k + 1] += std::f64::consts::SQRT_2 * c;
        }
        for (k, &c) in out[p - 1].iter().enumerate() {
            next[k] -= (p as f64).sqrt() * c;
        }
        let norm = ((p + 1) as f64).sqrt();
        next.iter_mut().for_each(|c| *c /= norm);
        out.push(next);
    }
    out
}

fn build_shell(n: usize) -> Shell {
    let i = Complex64::i();
    let mut transform = vec![vec![Complex64::new(0.0, 0.0); n + 1]; n + 1];
    for nd in 0..=n {
        let ng = n - nd;
        // (X + iY)^{nd} (X − iY)^{ng}, collected by the power of X.
        let mut by_x_power = vec![Complex64::new(0.0, 0.0); n + 1];
        for a in 0..=nd {
            let left = binomial(nd, a) * i.powu((nd - a) as u32);
            for b in 0..=ng {
                let right = binomial(ng, b) * (-i).powu((ng - b) as u32);
                by_x_power[a + b] += left * right;
            }
        }
        let norm = 2f64.powf(n as f64 / 2.0) * (factorial(nd) * factorial(ng)).sqrt();
        for (p, c) in by_x_power.into_iter().enumerate() {
            let q = n - p;
            transform[p][nd] = c * (factorial(p) * factorial(q)).sqrt() / norm;
        }
    }

    // f(η) = Σ_p U[p][n_d] u_p(η) u_q(0), read off along the positive x axis.
    let herm = scaled_hermite(n);
    let at_zero: Vec<f64> = herm.iter().map(|c| c[0]).collect();
    let radial = (0..=n)
        .map(|nd| {
            let mut coeffs = vec![Complex64::new(0.0, 0.0); n + 1];
            for p in 0..=n {
                let weight = transform[p][nd] * at_zero[n - p];
                for (k, &c) in herm[p].iter().enumerate() {
                    coeffs[k] += weight * c;
                }
            }
            debug_assert!(coeffs.iter().all(|c| c.im.abs() < 1e-9));
            let mut real: Vec<f64> = coeffs.iter().map(|c| c.re).collect();
            // Exact zeros where parity forbids a term.
            for (k, c) in real.iter_mut().enumerate() {
                if (n - k) % 2 == 1 || c.abs() < 1e-13 {
                    *c = 0.0;
                }
            }
            Poly::new(real)
        })
        .collect();

    Shell { transform, radial }
}

/// `f_{n_d n_g}(η)`, the radial polynomial of the angular basis state.
///
/// Panics if `n_d + n_g` exceeds [`MAX_CUTOFF`].
pub fn eval_radial_poly(nd: usize, ng: usize, eta: f64) -> f64 {
    radial_poly(nd, ng).eval(eta)
}

pub fn radial_poly(nd: usize, ng: usize) -> &'static Poly {
    let n = nd + ng;
    assert!(n <= MAX_CUTOFF, "n_d + n_g = {n} exceeds MAX_CUTOFF");
    &shell(n).radial[nd]
}

/// Values `u_p(x) = H_p(x)/√(2^p p!)` and derivatives for `p = 0..=max`.
pub(crate) fn hermite_values(max: usize, x: f64, values: &mut [f64], derivs: &mut [f64]) {
    values[0] = 1.0;
    derivs[0] = 0.0;
    if max == 0 {
        return;
    }
    values[1] = std::f64::consts::SQRT_2 * x;
    for p in 1..max {
        values[p + 1] = (std::f64::consts::SQRT_2 * x * values[p] - (p as f64).sqrt() * values[p - 1])
            / ((p + 1) as f64).sqrt();
    }
    for p in 1..=max {
        derivs[p] = (2.0 * p as f64).sqrt() * values[p - 1];
    }
}
