//! Hand-tabulated angular→Cartesian coefficients for shells up to `n = 4`.
//!
//! Kept only as an independent reference for the generated transform. Three
//! entries of the printed table carry index typos (a repeated `D_30`, a
//! repeated `D_40`, and a `C_40` that should read `C_13`); the corrected
//! labels are used here.

use num_complex::Complex64;

use super::basis::{mode_count, mode_index};
use crate::error::{Error, Result};

/// Largest cutoff covered by the table.
pub const TABULATED_CUTOFF: usize = 4;

/// `(p, q, n_d, n_g, numerator, phase)`: `D_pq += phase·√(numerator/16)·C_{n_d n_g}`,
/// where `phase` is one of `1, i, −1, −i` encoded as `0..4`.
const ENTRIES: &[(usize, usize, usize, usize, f64, u8)] = &[
    (0, 0, 0, 0, 16.0, 0),
    (1, 0, 1, 0, 8.0, 0),
    (1, 0, 0, 1, 8.0, 0),
    (0, 1, 1, 0, 8.0, 1),
    (0, 1, 0, 1, 8.0, 3),
    (2, 0, 2, 0, 4.0, 0),
    (2, 0, 1, 1, 8.0, 0),
    (2, 0, 0, 2, 4.0, 0),
    (1, 1, 2, 0, 8.0, 1),
    (1, 1, 0, 2, 8.0, 3),
    (0, 2, 2, 0, 4.0, 2),
    (0, 2, 1, 1, 8.0, 0),
    (0, 2, 0, 2, 4.0, 2),
    (3, 0, 3, 0, 2.0, 0),
    (3, 0, 2, 1, 6.0, 0),
    (3, 0, 1, 2, 6.0, 0),
    (3, 0, 0, 3, 2.0, 0),
    (2, 1, 3, 0, 6.0, 1),
    (2, 1, 2, 1, 2.0, 1),
    (2, 1, 1, 2, 2.0, 3),
    (2, 1, 0, 3, 6.0, 3),
    (1, 2, 3, 0, 6.0, 2),
    (1, 2, 2, 1, 2.0, 0),
    (1, 2, 1, 2, 2.0, 0),
    (1, 2, 0, 3, 6.0, 2),
    (0, 3, 3, 0, 2.0, 3),
    (0, 3, 2, 1, 6.0, 1),
    (0, 3, 1, 2, 6.0, 3),
    (0, 3, 0, 3, 2.0, 1),
    (4, 0, 4, 0, 1.0, 0),
    (4, 0, 3, 1, 4.0, 0),
    (4, 0, 2, 2, 6.0, 0),
    (4, 0, 1, 3, 4.0, 0),
    (4, 0, 0, 4, 1.0, 0),
    (3, 1, 4, 0, 4.0, 1),
    (3, 1, 3, 1, 4.0, 1),
    (3, 1, 1, 3, 4.0, 3),
    (3, 1, 0, 4, 4.0, 3),
    (2, 2, 4, 0, 6.0, 2),
    (2, 2, 2, 2, 4.0, 0),
    (2, 2, 0, 4, 6.0, 2),
    (1, 3, 4, 0, 4.0, 3),
    (1, 3, 3, 1, 4.0, 1),
    (1, 3, 1, 3, 4.0, 3),
    (1, 3, 0, 4, 4.0, 1),
    (0, 4, 4, 0, 1.0, 0),
    (0, 4, 3, 1, 4.0, 2),
    (0, 4, 2, 2, 6.0, 0),
    (0, 4, 1, 3, 4.0, 2),
    (0, 4, 0, 4, 1.0, 0),
];

fn phase(code: u8) -> Complex64 {
    match code {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Applies the table to shell-ordered angular coefficients.
pub(crate) fn transform(m: usize, angular: &[Complex64]) -> Result<Vec<Complex64>> {
    if m > TABULATED_CUTOFF {
        return Err(Error::CutoffExceeded {
            requested: m,
            max: TABULATED_CUTOFF,
        });
    }
    let mut out = vec![Complex64::new(0.0, 0.0); mode_count(m)];
    for &(p, q, nd, ng, num, code) in ENTRIES {
        if p + q > m {
            continue;
        }
        out[mode_index(p, q)] += phase(code) * (num / 16.0).sqrt() * angular[mode_index(nd, ng)];
    }
    Ok(out)
}
