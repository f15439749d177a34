//! Embedded Runge–Kutta 4(5) integration with Cash–Karp coefficients.
//!
//! The right-hand side may decline to evaluate (return `None`) at points it
//! considers singular; the step is then halved and retried. Evaluation at the
//! landing point of every step doubles as the first stage of the next one, so
//! a step that lands on a singular point is also halved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances and step limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: 2.0 * std::f64::consts::PI / 1000.0,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.max_step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerances must be positive (rtol {}, atol {}, max_step {})",
                self.rtol, self.atol, self.max_step
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub steps: usize,
    pub rejections: usize,
}

/// Consecutive halvings allowed before giving up.
pub const MAX_HALVINGS: usize = 60;

const A: [[f64; 5]; 5] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
    [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
    [
        1631.0 / 55296.0,
        175.0 / 512.0,
        575.0 / 13824.0,
        44275.0 / 110592.0,
        253.0 / 4096.0,
    ],
];
const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 3.0 / 5.0, 1.0, 7.0 / 8.0];
const B5: [f64; 6] = [
    37.0 / 378.0,
    0.0,
    250.0 / 621.0,
    125.0 / 594.0,
    0.0,
    512.0 / 1771.0,
];
const B4: [f64; 6] = [
    2825.0 / 27648.0,
    0.0,
    18575.0 / 48384.0,
    13525.0 / 55296.0,
    277.0 / 14336.0,
    1.0 / 4.0,
];

/// Integrator state that can be advanced repeatedly.
pub struct Integrator<const N: usize, F>
where
    F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
{
    rhs: F,
    tol: Tolerances,
    t: f64,
    y: [f64; N],
    k1: Option<[f64; N]>,
    h: f64,
    stats: Stats,
}

impl<const N: usize, F> Integrator<N, F>
where
    F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
{
    pub fn new(rhs: F, t0: f64, y0: [f64; N], tol: Tolerances) -> Result<Self> {
        tol.validate()?;
        Ok(Self {
            rhs,
            tol,
            t: t0,
            y: y0,
            k1: None,
            h: tol.max_step,
            stats: Stats::default(),
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    pub fn stats(&self) -> Stats {
        self.stats
    }

    fn underflow(&self) -> Error {
        Error::StepUnderflow {
            t: self.t,
            position: self.y.to_vec(),
        }
    }

    /// Advances to `target` (either direction), calling `observe` after each
    /// accepted step.
    pub fn advance_to<O: FnMut(f64, &[f64; N])>(&mut self, target: f64, mut observe: O) -> Result<()> {
        let dir = if target >= self.t { 1.0 } else { -1.0 };
        let k1 = match self.k1 {
            Some(k) => k,
            None => {
                let Some(k) = (self.rhs)(self.t, &self.y) else {
                    return Err(self.underflow());
                };
                k
            }
        };
        let mut k1 = k1;
        let mut halvings = 0;
        while (target - self.t) * dir > 0.0 {
            let remaining = (target - self.t).abs();
            let mut h = self.h.abs().min(self.tol.max_step);
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            let min_step = 1e-13 * self.t.abs().max(1.0);
            let signed = h * dir;
            match self.try_step(signed, &k1) {
                StepTry::Singular => {
                    halvings += 1;
                    self.stats.rejections += 1;
                    if halvings > MAX_HALVINGS {
                        return Err(self.underflow());
                    }
                    self.h = h * 0.5;
                    if self.h < min_step {
                        return Err(self.underflow());
                    }
                }
                StepTry::TooLarge(err) => {
                    self.stats.rejections += 1;
                    self.h = h * (0.9 * err.powf(-0.25)).clamp(0.1, 0.9);
                    if self.h < min_step {
                        return Err(self.underflow());
                    }
                }
                StepTry::Accepted { y, k_next, err } => {
                    halvings = 0;
                    self.stats.steps += 1;
                    self.t = if last { target } else { self.t + signed };
                    self.y = y;
                    k1 = k_next;
                    let grow = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    // A truncated final step says nothing about the natural size.
                    if !last || grow < 1.0 {
                        self.h = h * grow;
                    }
                    observe(self.t, &self.y);
                }
            }
        }
        self.k1 = Some(k1);
        Ok(())
    }

    fn try_step(&mut self, h: f64, k1: &[f64; N]) -> StepTry<N> {
        let mut k = [[0.0; N]; 6];
        k[0] = *k1;
        for s in 1..6 {
            let mut ys = self.y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s - 1][j];
                if a != 0.0 {
                    for i in 0..N {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            match (self.rhs)(self.t + C[s] * h, &ys) {
                Some(v) => k[s] = v,
                None => return StepTry::Singular,
            }
        }
        let mut y5 = self.y;
        let mut err: f64 = 0.0;
        for i in 0..N {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for s in 0..6 {
                d5 += B5[s] * k[s][i];
                d4 += B4[s] * k[s][i];
            }
            y5[i] += h * d5;
            let scale = self.tol.atol + self.tol.rtol * self.y[i].abs().max(y5[i].abs());
            err = err.max((h * (d5 - d4)).abs() / scale);
        }
        if !err.is_finite() || y5.iter().any(|v| !v.is_finite()) {
            return StepTry::Singular;
        }
        if err > 1.0 {
            return StepTry::TooLarge(err);
        }
        match (self.rhs)(self.t + h, &y5) {
            Some(k_next) => StepTry::Accepted {
                y: y5,
                k_next,
                err,
            },
            None => StepTry::Singular,
        }
    }
}

enum StepTry<const N: usize> {
    Singular,
    TooLarge(f64),
    Accepted {
        y: [f64; N],
        k_next: [f64; N],
        err: f64,
    },
}

/// One-shot integration from `t0` to `t1`.
pub fn integrate<const N: usize, F>(rhs: F, t0: f64, y0: [f64; N], t1: f64, tol: Tolerances) -> Result<([f64; N], Stats)>
where
    F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
{
    let mut integ = Integrator::new(rhs, t0, y0, tol)?;
    integ.advance_to(t1, |_, _| {})?;
    Ok((*integ.y(), integ.stats()))
}
