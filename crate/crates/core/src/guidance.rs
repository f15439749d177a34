//! Guidance velocities and trajectory integration.
//!
//! Velocities are computed from the reduced wave function `ψ̃ = ψ e^{η²/2}`;
//! the Gaussian factor contributes a purely real term to `∇ψ/ψ` and drops out
//! of the imaginary part, so far-field trajectories never touch underflowing
//! amplitudes.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::ode::{Integrator, Stats, Tolerances};
use crate::oscillator::{Configuration, OscillatorState};

/// Reduced amplitudes below this count as an exact node.
const NODE_FLOOR: f64 = 1e-300;

/// `v = Im(∇ψ/ψ)`.
pub fn velocity_cartesian(state: &OscillatorState, config: Configuration, t: f64) -> Result<(f64, f64)> {
    let r = state.reduced(config.qx, config.qy, t);
    let mag = r.value.norm_sqr();
    if !(mag >= NODE_FLOOR) {
        return Err(Error::AtNode {
            x: config.qx,
            y: config.qy,
        });
    }
    Ok(((r.dx / r.value).im, (r.dy / r.value).im))
}

/// `(dη/dT, dφ/dT)`; the angular component is `η^{−2} Im(∂_φψ/ψ)`.
pub fn velocity_polar(state: &OscillatorState, config: Configuration, t: f64) -> Result<(f64, f64)> {
    let eta = config.eta();
    if eta < 1e-12 {
        return Err(Error::OriginSingular);
    }
    let (vx, vy) = velocity_cartesian(state, config, t)?;
    let (x, y) = (config.qx, config.qy);
    Ok(((x * vx + y * vy) / eta, (x * vy - y * vx) / (eta * eta)))
}

/// Integration controls for trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub tolerances: Tolerances,
    /// Points where `|ψ̃|²` falls below this multiple of the local incoherent
    /// magnitude `Σ|D|²|φ_pq|²` are treated as on a node and the step is halved.
    pub node_guard: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            node_guard: 1e-12,
        }
    }
}

/// Right-hand side for the Cartesian guidance system, declining near nodes.
pub fn guidance_rhs(state: &OscillatorState, node_guard: f64) -> impl FnMut(f64, &[f64; 2]) -> Option<[f64; 2]> + '_ {
    move |t, q| {
        let r = state.reduced(q[0], q[1], t);
        let mag = r.value.norm_sqr();
        if !(mag >= NODE_FLOOR) || mag < node_guard * r.envelope {
            return None;
        }
        Some([(r.dx / r.value).im, (r.dy / r.value).im])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<(f64, Configuration)>,
    pub stats: Stats,
}

impl Trajectory {
    pub fn start(&self) -> Configuration {
        self.samples[0].1
    }

    pub fn end(&self) -> Configuration {
        self.samples[self.samples.len() - 1].1
    }

    /// CSV with header `T,Qx,Qy`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "T,Qx,Qy")?;
        for (t, c) in &self.samples {
            writeln!(out, "{t},{},{}", c.qx, c.qy)?;
        }
        Ok(())
    }
}

/// Integrates from `t0` to `t1`, keeping every accepted step.
pub fn integrate(
    state: &OscillatorState,
    start: Configuration,
    t0: f64,
    t1: f64,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    let rhs = guidance_rhs(state, settings.node_guard);
    let mut integ = Integrator::new(rhs, t0, [start.qx, start.qy], settings.tolerances)?;
    let mut samples = vec![(t0, start)];
    integ.advance_to(t1, |t, y| samples.push((t, Configuration::new(y[0], y[1]))))?;
    Ok(Trajectory {
        samples,
        stats: integ.stats(),
    })
}

/// Final position only, plus the accumulated (unwrapped) change in polar angle.
pub fn integrate_endpoint(
    state: &OscillatorState,
    start: Configuration,
    t0: f64,
    t1: f64,
    settings: &IntegratorSettings,
) -> Result<(Configuration, f64, Stats)> {
    let rhs = guidance_rhs(state, settings.node_guard);
    let mut integ = Integrator::new(rhs, t0, [start.qx, start.qy], settings.tolerances)?;
    let mut prev = start.qy.atan2(start.qx);
    let mut turned = 0.0;
    integ.advance_to(t1, |_, y| {
        let a = y[1].atan2(y[0]);
        turned += wrap_angle(a - prev);
        prev = a;
    })?;
    let y = integ.y();
    Ok((Configuration::new(y[0], y[1]), turned, integ.stats()))
}

/// Maps an angle difference into `(−π, π]`.
pub fn wrap_angle(d: f64) -> f64 {
    let mut d = d % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d <= -PI {
        d += 2.0 * PI;
    }
    d
}

/// Non-canonical velocity from the rate of change of `|ψ|²`.
///
/// `v(x) = (1/(2π|ψ(x)|²)) Σ_cells (x′−x)/|x′−x|² ∂_t|ψ|²(x′) ΔA`, midpoint
/// rule, with the cell containing `x` left out.
pub fn velocity_green(rate: &DensityGrid, psi_sq: f64, config: Configuration) -> Result<(f64, f64)> {
    if !(psi_sq >= NODE_FLOOR) {
        return Err(Error::AtNode {
            x: config.qx,
            y: config.qy,
        });
    }
    let own = rate.locate(config.qx, config.qy);
    let mut vx = 0.0;
    let mut vy = 0.0;
    for j in 0..rate.ny {
        for i in 0..rate.nx {
            if own == Some((i, j)) {
                continue;
            }
            let (x, y) = rate.center(i, j);
            let dx = x - config.qx;
            let dy = y - config.qy;
            let r2 = dx * dx + dy * dy;
            if r2 == 0.0 {
                continue;
            }
            let w = rate.get(i, j) / r2;
            vx += w * dx;
            vy += w * dy;
        }
    }
    let k = rate.cell_area() / (2.0 * PI * psi_sq);
    Ok((vx * k, vy * k))
}

/// `∂_t|ψ|²` at cell centres, by central differences in time.
pub fn density_rate_grid(state: &OscillatorState, grid: &DensityGrid, t: f64) -> DensityGrid {
    let h = 1e-4;
    let mut out = grid.clone();
    out.t = t;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (x, y) = grid.center(i, j);
            let c = Configuration::new(x, y);
            let plus = state.psi_cartesian(c, t + h).norm_sqr();
            let minus = state.psi_cartesian(c, t - h).norm_sqr();
            out.values[j * grid.nx + i] = (plus - minus) / (2.0 * h);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oscillator::random_state;
    use approx::assert_relative_eq;

    #[test]
    fn eigenstates_do_not_move() {
        for (nd, ng) in [(0, 0), (1, 1), (2, 2)] {
            let s = OscillatorState::eigenstate(nd, ng).unwrap();
            let (vx, vy) = velocity_cartesian(&s, Configuration::new(0.3, 2.1), 1.0).unwrap();
            assert!(vx.abs() < 1e-14 && vy.abs() < 1e-14);
        }
        let s = OscillatorState::eigenstate(1, 1).unwrap();
        let start = Configuration::new(2.0, 0.5);
        let tr = integrate(&s, start, 0.0, 1.0, &IntegratorSettings::default()).unwrap();
        assert!((tr.end().qx - 2.0).abs() < 1e-14 && (tr.end().qy - 0.5).abs() < 1e-14);
    }

    #[test]
    fn circulating_eigenstate() {
        let s = OscillatorState::eigenstate(1, 0).unwrap();
        for eta in [0.5, 1.0, 3.0] {
            let (ve, vp) = velocity_polar(&s, Configuration::from_polar(eta, 0.4), 0.2).unwrap();
            assert!(ve.abs() < 1e-13);
            assert_relative_eq!(vp, 1.0 / (eta * eta), max_relative = 1e-12);
        }
    }

    #[test]
    fn polar_origin_is_singular() {
        let s = random_state(2, 1).unwrap();
        assert_eq!(velocity_polar(&s, Configuration::new(0.0, 0.0), 0.0), Err(Error::OriginSingular));
    }

    #[test]
    fn exact_node_is_reported() {
        // χ_10 vanishes at the origin.
        let s = OscillatorState::eigenstate(1, 0).unwrap();
        assert!(matches!(
            velocity_cartesian(&s, Configuration::new(0.0, 0.0), 0.0),
            Err(Error::AtNode { .. })
        ));
    }

    #[test]
    fn wrap_angle_range() {
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0);
        assert_relative_eq!(wrap_angle(-3.0 * PI / 2.0), PI / 2.0);
        assert_relative_eq!(wrap_angle(0.1), 0.1);
    }
}
