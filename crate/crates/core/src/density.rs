//! Evolution of probability densities under pilot-wave velocity fields.
//!
//! Two methods: a conservative finite-volume corner-transport-upwind scheme
//! with monotonized-central slopes, and backtracking, which carries the ratio
//! `ρ/|ψ|²` back along trajectories to the initial time.

use std::f64::consts::PI;
use std::sync::Mutex;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{coarse_grained_h, CoarseGrain};
use crate::error::{Error, Result};
use crate::grid::{Bounds, DensityGrid};
use crate::guidance::{guidance_rhs, IntegratorSettings};
use crate::ode::Integrator;
use crate::oscillator::{basis, CartesianCoeffs, OscillatorState};

/// Face velocities are clipped to this fraction of `Δx/Δt`.
pub const VELOCITY_CAP_FRACTION: f64 = 0.1;

/// Largest tolerated fraction of backtracked cells whose trajectory fails.
pub const MAX_MASKED_FRACTION: f64 = 0.01;

/// A velocity field on the plane.
pub trait VelocityField: Sync {
    fn velocity(&self, x: f64, y: f64, t: f64) -> [f64; 2];

    /// Normal velocities on cell faces. `ux[j * (nx + 1) + i]` sits at
    /// `x = x_min + iΔx` on row `j`; `uy[j * nx + i]` at `y = y_min + jΔy` in
    /// column `i`.
    fn face_velocities(&self, grid: &DensityGrid, t: f64, ux: &mut [f64], uy: &mut [f64]) {
        let (nx, dx, dy) = (grid.nx, grid.dx(), grid.dy());
        let b = grid.bounds;
        ux.par_chunks_mut(nx + 1).enumerate().for_each(|(j, row)| {
            let y = b.y_min + (j as f64 + 0.5) * dy;
            for (i, u) in row.iter_mut().enumerate() {
                *u = self.velocity(b.x_min + i as f64 * dx, y, t)[0];
            }
        });
        uy.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
            let y = b.y_min + j as f64 * dy;
            for (i, v) in row.iter_mut().enumerate() {
                *v = self.velocity(b.x_min + (i as f64 + 0.5) * dx, y, t)[1];
            }
        });
    }
}

/// Adapts a closure `(x, y, t) → [u, v]`.
pub struct FnField<F>(pub F);

impl<F: Fn(f64, f64, f64) -> [f64; 2] + Sync> VelocityField for FnField<F> {
    fn velocity(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        (self.0)(x, y, t)
    }
}

/// Rigid rotation with angular speed `omega` about the origin.
pub struct Rotation {
    pub omega: f64,
}

impl VelocityField for Rotation {
    fn velocity(&self, x: f64, y: f64, _t: f64) -> [f64; 2] {
        [-self.omega * y, self.omega * x]
    }
}

/// Hamiltonian flow `(q̇, ṗ) = (p, −V′(q))` with `V = q⁴ − q³ − q² − q`.
pub struct ClassicalQuartic;

impl ClassicalQuartic {
    pub fn potential(q: f64) -> f64 {
        q.powi(4) - q.powi(3) - q * q - q
    }

    pub fn force(q: f64) -> f64 {
        -(4.0 * q.powi(3) - 3.0 * q * q - 2.0 * q - 1.0)
    }
}

impl VelocityField for ClassicalQuartic {
    fn velocity(&self, q: f64, p: f64, _t: f64) -> [f64; 2] {
        [p, Self::force(q)]
    }
}

/// Guidance field of an oscillator state, evaluated separably on faces.
pub struct OscillatorField {
    m: usize,
    /// `D_{pq}`, row `p`, column `q`.
    cartesian: Vec<Vec<Complex64>>,
    tables: Mutex<Option<FaceTables>>,
}

/// Hermite values and derivatives on face and centre coordinates of a grid.
struct FaceTables {
    layout: (Bounds, usize, usize),
    x_faces: Vec<HermiteRow>,
    x_centres: Vec<HermiteRow>,
    y_faces: Vec<HermiteRow>,
    y_centres: Vec<HermiteRow>,
}

type HermiteRow = ([f64; basis::MAX_CUTOFF + 1], [f64; basis::MAX_CUTOFF + 1]);

fn hermite_row(m: usize, s: f64) -> HermiteRow {
    let mut u = [0.0; basis::MAX_CUTOFF + 1];
    let mut du = [0.0; basis::MAX_CUTOFF + 1];
    basis::hermite_values(m, s, &mut u, &mut du);
    (u, du)
}

impl FaceTables {
    fn new(m: usize, grid: &DensityGrid) -> Self {
        let b = grid.bounds;
        let (dx, dy) = (grid.dx(), grid.dy());
        let axis = |lo: f64, h: f64, n: usize, off: f64| -> Vec<HermiteRow> {
            (0..n).map(|k| hermite_row(m, lo + (k as f64 + off) * h)).collect()
        };
        Self {
            layout: (b, grid.nx, grid.ny),
            x_faces: axis(b.x_min, dx, grid.nx + 1, 0.0),
            x_centres: axis(b.x_min, dx, grid.nx, 0.5),
            y_faces: axis(b.y_min, dy, grid.ny + 1, 0.0),
            y_centres: axis(b.y_min, dy, grid.ny, 0.5),
        }
    }
}

impl OscillatorField {
    pub fn new(state: &OscillatorState) -> Self {
        let d = state.to_cartesian();
        let m = d.m();
        let cartesian = (0..=m)
            .map(|p| (0..=m).map(|q| d.get(p, q)).collect())
            .collect();
        Self {
            m,
            cartesian,
            tables: Mutex::new(None),
        }
    }

    fn phases(&self, t: f64) -> Vec<Complex64> {
        (0..=2 * self.m).map(|k| Complex64::from_polar(1.0, -(k as f64) * t)).collect()
    }

    /// `Σ_b D_{ab} e^{−i(a+b)T} u_b(s)` for each `a` (indices swapped if `swap`).
    fn partial(&self, u: &[f64], phases: &[Complex64], swap: bool) -> [Complex64; basis::MAX_CUTOFF + 1] {
        let mut out = [Complex64::new(0.0, 0.0); basis::MAX_CUTOFF + 1];
        for (a, o) in out.iter_mut().enumerate().take(self.m + 1) {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..=self.m - a {
                let d = if swap { self.cartesian[b][a] } else { self.cartesian[a][b] };
                acc += d * phases[a + b] * u[b];
            }
            *o = acc;
        }
        out
    }

    /// `Im(∂ψ̃/ψ̃)` along the axis whose Hermite factor is `(u, du)`.
    fn along(&self, partial: &[Complex64], row: &HermiteRow) -> f64 {
        let mut val = Complex64::new(0.0, 0.0);
        let mut der = Complex64::new(0.0, 0.0);
        for (k, a) in partial.iter().enumerate().take(self.m + 1) {
            val += a * row.0[k];
            der += a * row.1[k];
        }
        (der / val).im
    }
}

impl VelocityField for OscillatorField {
    fn velocity(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let ph = self.phases(t);
        let (hx, hy) = (hermite_row(self.m, x), hermite_row(self.m, y));
        let vx = self.along(&self.partial(&hy.0, &ph, false), &hx);
        [vx, self.along(&self.partial(&hx.0, &ph, true), &hy)]
    }

    fn face_velocities(&self, grid: &DensityGrid, t: f64, ux: &mut [f64], uy: &mut [f64]) {
        let mut guard = self.tables.lock().unwrap_or_else(|e| e.into_inner());
        if guard.as_ref().map(|tb| tb.layout) != Some((grid.bounds, grid.nx, grid.ny)) {
            *guard = Some(FaceTables::new(self.m, grid));
        }
        let tb = guard.as_ref().expect("tables just built");
        let nx = grid.nx;
        let ph = self.phases(t);
        ux.par_chunks_mut(nx + 1).enumerate().for_each(|(j, row)| {
            let a = self.partial(&tb.y_centres[j].0, &ph, false);
            for (u, h) in row.iter_mut().zip(&tb.x_faces) {
                *u = self.along(&a, h);
            }
        });
        let partials: Vec<_> = tb.x_centres.iter().map(|h| self.partial(&h.0, &ph, true)).collect();
        uy.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
            let h = &tb.y_faces[j];
            for (v, a) in row.iter_mut().zip(&partials) {
                *v = self.along(a, h);
            }
        });
    }
}

/// `|ψ(x, y, t)|²` at cell centres.
pub fn born_grid(state: &OscillatorState, bounds: Bounds, nx: usize, ny: usize, t: f64) -> Result<DensityGrid> {
    let mut g = DensityGrid::zeros(bounds, nx, ny)?;
    g.t = t;
    let (dx, dy) = (g.dx(), g.dy());
    g.values.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        let y = bounds.y_min + (j as f64 + 0.5) * dy;
        for (i, v) in row.iter_mut().enumerate() {
            let x = bounds.x_min + (i as f64 + 0.5) * dx;
            *v = state.reduced(x, y, t).value.norm_sqr() * (-(x * x + y * y)).exp();
        }
    });
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FvSettings {
    /// Largest time step; the actual step divides the interval evenly.
    pub dt: f64,
    /// Courant limit checked after capping.
    pub cfl: f64,
}

impl FvSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.9) {
            return Err(Error::InvalidParameter(format!("cfl must lie in (0, 0.9], got {}", self.cfl)));
        }
        Ok(())
    }
}

/// Per-run bookkeeping of the finite-volume solver.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FvStats {
    pub steps: usize,
    /// Face velocities clipped to the cap, summed over steps.
    pub capped_faces: usize,
    pub max_capped_in_step: usize,
    /// Non-finite face velocities (exact nodes), set to zero.
    pub nonfinite_faces: usize,
    /// Mass carried out through the boundary.
    pub outflux: f64,
    /// Mass added by clipping negative cells to zero.
    pub clipped: f64,
    /// Largest `|Δmass + outflux − clipped|` seen in a single step.
    pub max_mass_defect: f64,
}

impl FvStats {
    fn absorb(&mut self, other: &FvStats) {
        self.steps += other.steps;
        self.capped_faces += other.capped_faces;
        self.max_capped_in_step = self.max_capped_in_step.max(other.max_capped_in_step);
        self.nonfinite_faces += other.nonfinite_faces;
        self.outflux += other.outflux;
        self.clipped += other.clipped;
        self.max_mass_defect = self.max_mass_defect.max(other.max_mass_defect);
    }
}

fn mc_slope(left: f64, right: f64) -> f64 {
    if left * right <= 0.0 {
        return 0.0;
    }
    let s = (2.0 * left.abs()).min(2.0 * right.abs()).min(0.5 * (left + right).abs());
    s.copysign(left)
}

struct Workspace {
    ux: Vec<f64>,
    uy: Vec<f64>,
    xl: Vec<f64>,
    xr: Vec<f64>,
    yb: Vec<f64>,
    yt: Vec<f64>,
    fx: Vec<f64>,
    fy: Vec<f64>,
}

impl Workspace {
    fn new(nx: usize, ny: usize) -> Self {
        let cells = nx * ny;
        Self {
            ux: vec![0.0; (nx + 1) * ny],
            uy: vec![0.0; nx * (ny + 1)],
            xl: vec![0.0; cells],
            xr: vec![0.0; cells],
            yb: vec![0.0; cells],
            yt: vec![0.0; cells],
            fx: vec![0.0; (nx + 1) * ny],
            fy: vec![0.0; nx * (ny + 1)],
        }
    }
}

/// Upwind fluxes from the current face states; ghost states are zero.
fn fluxes(nx: usize, ny: usize, w: &mut Workspace) {
    let (ux, xr, xl) = (&w.ux, &w.xr, &w.xl);
    w.fx.par_chunks_mut(nx + 1).enumerate().for_each(|(j, row)| {
        for (i, f) in row.iter_mut().enumerate() {
            let u = ux[j * (nx + 1) + i];
            *f = if u > 0.0 {
                if i > 0 {
                    u * xr[j * nx + i - 1]
                } else {
                    0.0
                }
            } else if i < nx {
                u * xl[j * nx + i]
            } else {
                0.0
            };
        }
    });
    let (uy, yt, yb) = (&w.uy, &w.yt, &w.yb);
    w.fy.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (i, f) in row.iter_mut().enumerate() {
            let v = uy[j * nx + i];
            *f = if v > 0.0 {
                if j > 0 {
                    v * yt[(j - 1) * nx + i]
                } else {
                    0.0
                }
            } else if j < ny {
                v * yb[j * nx + i]
            } else {
                0.0
            };
        }
    });
}

/// One CTU step from `t` to `t + dt`; returns the step's bookkeeping.
fn fv_step(rho: &mut DensityGrid, field: &dyn VelocityField, dt: f64, cfl: f64, w: &mut Workspace) -> Result<FvStats> {
    let (nx, ny) = (rho.nx, rho.ny);
    let (dx, dy) = (rho.dx(), rho.dy());
    let t = rho.t;
    field.face_velocities(rho, t + 0.5 * dt, &mut w.ux, &mut w.uy);

    let mut st = FvStats {
        steps: 1,
        ..FvStats::default()
    };
    let cap_x = VELOCITY_CAP_FRACTION * dx / dt;
    let cap_y = VELOCITY_CAP_FRACTION * dy / dt;
    let mut courant: f64 = 0.0;
    for (u, cap, h) in w
        .ux
        .iter_mut()
        .map(|u| (u, cap_x, dx))
        .chain(w.uy.iter_mut().map(|v| (v, cap_y, dy)))
    {
        if !u.is_finite() {
            *u = 0.0;
            st.nonfinite_faces += 1;
        } else if u.abs() > cap {
            *u = cap.copysign(*u);
            st.capped_faces += 1;
        }
        courant = courant.max(u.abs() * dt / h);
    }
    st.max_capped_in_step = st.capped_faces;
    if courant > cfl {
        return Err(Error::CflViolated { courant, limit: cfl });
    }

    // Normal predictor: limited extrapolation to faces at the half step.
    let r = &rho.values;
    let (ux, uy) = (&w.ux, &w.uy);
    let cell = |i: usize, j: usize| -> [f64; 4] {
        let c = r[j * nx + i];
        let left = if i > 0 { r[j * nx + i - 1] } else { 0.0 };
        let right = if i + 1 < nx { r[j * nx + i + 1] } else { 0.0 };
        let down = if j > 0 { r[(j - 1) * nx + i] } else { 0.0 };
        let up = if j + 1 < ny { r[(j + 1) * nx + i] } else { 0.0 };
        let sx = mc_slope(c - left, right - c);
        let sy = mc_slope(c - down, up - c);
        let (ul, ur) = (ux[j * (nx + 1) + i], ux[j * (nx + 1) + i + 1]);
        let (vb, vt) = (uy[j * nx + i], uy[(j + 1) * nx + i]);
        let (uc, vc) = (0.5 * (ul + ur), 0.5 * (vb + vt));
        let divx = 0.5 * dt * c * (ur - ul) / dx;
        let divy = 0.5 * dt * c * (vt - vb) / dy;
        [
            c - 0.5 * (1.0 + uc * dt / dx) * sx - divx,
            c + 0.5 * (1.0 - uc * dt / dx) * sx - divx,
            c - 0.5 * (1.0 + vc * dt / dy) * sy - divy,
            c + 0.5 * (1.0 - vc * dt / dy) * sy - divy,
        ]
    };
    w.xl
        .par_chunks_mut(nx)
        .zip(w.xr.par_chunks_mut(nx))
        .zip(w.yb.par_chunks_mut(nx))
        .zip(w.yt.par_chunks_mut(nx))
        .enumerate()
        .for_each(|(j, (((xl, xr), yb), yt))| {
            for i in 0..nx {
                let s = cell(i, j);
                xl[i] = s[0];
                xr[i] = s[1];
                yb[i] = s[2];
                yt[i] = s[3];
            }
        });

    // Transverse correction with provisional upwind fluxes.
    fluxes(nx, ny, w);
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let ty = 0.5 * dt / dy * (w.fy[(j + 1) * nx + i] - w.fy[j * nx + i]);
            let tx = 0.5 * dt / dx * (w.fx[j * (nx + 1) + i + 1] - w.fx[j * (nx + 1) + i]);
            w.xl[k] -= ty;
            w.xr[k] -= ty;
            w.yb[k] -= tx;
            w.yt[k] -= tx;
        }
    }
    fluxes(nx, ny, w);

    let mass_before = rho.mass();
    let (fx, fy) = (&w.fx, &w.fy);
    rho.values.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (i, v) in row.iter_mut().enumerate() {
            *v -= dt / dx * (fx[j * (nx + 1) + i + 1] - fx[j * (nx + 1) + i])
                + dt / dy * (fy[(j + 1) * nx + i] - fy[j * nx + i]);
        }
    });
    let mut out = 0.0;
    for j in 0..ny {
        out += (fx[j * (nx + 1) + nx] - fx[j * (nx + 1)]) * dy;
    }
    for i in 0..nx {
        out += (fy[ny * nx + i] - fy[i]) * dx;
    }
    st.outflux = out * dt;
    let area = rho.cell_area();
    let mut clipped = 0.0;
    for v in rho.values.iter_mut() {
        if *v < 0.0 {
            clipped -= *v * area;
            *v = 0.0;
        }
    }
    st.clipped = clipped;
    st.max_mass_defect = (rho.mass() - mass_before + st.outflux - clipped).abs();
    rho.t = t + dt;
    Ok(st)
}

/// Result of a finite-volume run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FvRun {
    pub grid: DensityGrid,
    pub stats: FvStats,
}

/// Evolves `rho0` (at time `rho0.t`) to `t1` with equal steps no longer than
/// `settings.dt`.
pub fn evolve_fv(rho0: &DensityGrid, field: &dyn VelocityField, t1: f64, settings: &FvSettings) -> Result<FvRun> {
    settings.validate()?;
    let span = t1 - rho0.t;
    if !(span >= 0.0) {
        return Err(Error::InvalidParameter(format!("cannot evolve backwards from {} to {t1}", rho0.t)));
    }
    let mut grid = rho0.clone();
    let mut stats = FvStats::default();
    if span == 0.0 {
        return Ok(FvRun { grid, stats });
    }
    let steps = (span / settings.dt).ceil() as usize;
    let dt = span / steps as f64;
    let mut work = Workspace::new(grid.nx, grid.ny);
    let t0 = rho0.t;
    for k in 0..steps {
        let s = fv_step(&mut grid, field, dt, settings.cfl, &mut work)?;
        stats.absorb(&s);
        // Avoid drift of the clock over many steps.
        grid.t = t0 + (k + 1) as f64 * dt;
    }
    grid.t = t1;
    Ok(FvRun { grid, stats })
}

/// Result of a backtracking reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktrackRun {
    pub grid: DensityGrid,
    /// Cells whose trajectory could not be integrated; their value is zero.
    pub masked: usize,
}

/// `ρ(x, t) = f₀(x₀) |ψ(x, t)|²` with `x₀` the trajectory through `x` at time 0.
pub fn evolve_backtrack(
    f0: &(dyn Fn(f64, f64) -> f64 + Sync),
    state: &OscillatorState,
    t: f64,
    bounds: Bounds,
    nx: usize,
    ny: usize,
    settings: &IntegratorSettings,
) -> Result<BacktrackRun> {
    let born = born_grid(state, bounds, nx, ny, t)?;
    let mut grid = born.clone();
    let (dx, dy) = (grid.dx(), grid.dy());
    let masked: usize = grid
        .values
        .par_chunks_mut(nx)
        .enumerate()
        .map(|(j, row)| {
            let y = bounds.y_min + (j as f64 + 0.5) * dy;
            let mut bad = 0;
            for (i, v) in row.iter_mut().enumerate() {
                let x = bounds.x_min + (i as f64 + 0.5) * dx;
                let rhs = guidance_rhs(state, settings.node_guard);
                let start = Integrator::new(rhs, t, [x, y], settings.tolerances).and_then(|mut integ| {
                    integ.advance_to(0.0, |_, _| {})?;
                    Ok(*integ.y())
                });
                match start {
                    Ok(p) => *v *= f0(p[0], p[1]),
                    Err(_) => {
                        *v = 0.0;
                        bad += 1;
                    }
                }
            }
            bad
        })
        .sum();
    if masked as f64 > MAX_MASKED_FRACTION * (nx * ny) as f64 {
        return Err(Error::BuildFailed {
            masked,
            total: nx * ny,
        });
    }
    Ok(BacktrackRun { grid, masked })
}

/// Initial nonequilibrium density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NonequilibriumSpec {
    /// `|ψ(x/w_x, y/w_y, 0)|² / (w_x w_y)`.
    Widened { wx: f64, wy: f64 },
    /// Isotropic normal density with standard deviation `sigma` per axis.
    Gaussian { sigma: f64 },
    /// Explicit cell values on the run's grid.
    CustomGrid { grid: DensityGrid },
}

impl NonequilibriumSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            NonequilibriumSpec::Widened { wx, wy } => *wx > 0.0 && *wy > 0.0 && wx.is_finite() && wy.is_finite(),
            NonequilibriumSpec::Gaussian { sigma } => *sigma > 0.0 && sigma.is_finite(),
            NonequilibriumSpec::CustomGrid { grid } => grid.values.iter().all(|v| *v >= 0.0 && v.is_finite()),
        };
        if !ok {
            return Err(Error::InvalidParameter(format!("invalid nonequilibrium {self:?}")));
        }
        Ok(())
    }

    /// Initial density on the given grid, normalized to unit mass.
    pub fn initial_grid(&self, state: &OscillatorState, bounds: Bounds, nx: usize, ny: usize) -> Result<DensityGrid> {
        self.validate()?;
        let mut g = match self {
            NonequilibriumSpec::Widened { wx, wy } => DensityGrid::from_fn(bounds, nx, ny, |x, y| {
                let (a, b) = (x / wx, y / wy);
                state.reduced(a, b, 0.0).value.norm_sqr() * (-(a * a + b * b)).exp() / (wx * wy)
            })?,
            NonequilibriumSpec::Gaussian { sigma } => DensityGrid::from_fn(bounds, nx, ny, |x, y| {
                (-(x * x + y * y) / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma)
            })?,
            NonequilibriumSpec::CustomGrid { grid } => {
                if grid.nx != nx || grid.ny != ny || grid.bounds != bounds {
                    return Err(Error::InvalidParameter("custom grid does not match the run layout".into()));
                }
                grid.clone()
            }
        };
        g.t = 0.0;
        g.normalize()?;
        Ok(g)
    }
}

/// Nine Cartesian modes `n_x, n_y ∈ {0, 1, 2}` with equal weights and random phases.
pub fn nine_mode_state(seed: u64) -> Result<OscillatorState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 4;
    let mut d = vec![Complex64::new(0.0, 0.0); basis::mode_count(m)];
    for nx in 0..3 {
        for ny in 0..3 {
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            d[basis::mode_index(nx, ny)] = Complex64::from_polar(1.0 / 3.0, phase);
        }
    }
    CartesianCoeffs::new(m, d)?.to_angular()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxSettings {
    pub half_width: f64,
    pub cells: usize,
    pub steps_per_period: usize,
    pub cfl: f64,
    pub coarse: CoarseGrain,
    /// Keep a density frame every this many periods (0 keeps none).
    pub frame_every: usize,
}

impl Default for RelaxSettings {
    fn default() -> Self {
        Self {
            half_width: 8.0,
            cells: 256,
            steps_per_period: 4000,
            cfl: 0.5,
            coarse: CoarseGrain::default(),
            frame_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationRun {
    /// Sample times, one per period starting at 0.
    pub times: Vec<f64>,
    pub h_bar: Vec<f64>,
    pub frames: Vec<DensityGrid>,
    pub stats: FvStats,
}

impl RelaxationRun {
    /// Largest increase of `H̄` between consecutive samples.
    pub fn max_rise(&self) -> f64 {
        self.h_bar.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max)
    }
}

/// Evolves a nonequilibrium density for `periods` wave-function periods,
/// sampling the coarse-grained `H̄` once per period.
pub fn relaxation_run(
    state: &OscillatorState,
    noneq: &NonequilibriumSpec,
    periods: usize,
    settings: &RelaxSettings,
) -> Result<RelaxationRun> {
    if settings.steps_per_period == 0 {
        return Err(Error::InvalidParameter("steps per period must be positive".into()));
    }
    let bounds = Bounds::square(settings.half_width);
    let n = settings.cells;
    let period = 2.0 * PI;
    let fv = FvSettings {
        dt: period / settings.steps_per_period as f64,
        cfl: settings.cfl,
    };
    let field = OscillatorField::new(state);
    let mut rho = noneq.initial_grid(state, bounds, n, n)?;
    let mut times = vec![0.0];
    let mut h_bar = vec![coarse_grained_h(&rho, &born_grid(state, bounds, n, n, 0.0)?, &settings.coarse)?];
    let mut frames = Vec::new();
    if settings.frame_every > 0 {
        frames.push(rho.clone());
    }
    let mut stats = FvStats::default();
    for k in 1..=periods {
        let t1 = k as f64 * period;
        let run = evolve_fv(&rho, &field, t1, &fv)?;
        stats.absorb(&run.stats);
        rho = run.grid;
        times.push(t1);
        h_bar.push(coarse_grained_h(&rho, &born_grid(state, bounds, n, n, t1)?, &settings.coarse)?);
        if settings.frame_every > 0 && k % settings.frame_every == 0 {
            frames.push(rho.clone());
        }
    }
    Ok(RelaxationRun {
        times,
        h_bar,
        frames,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidance::velocity_cartesian;
    use crate::oscillator::{random_state, Configuration};
    use approx::assert_relative_eq;

    #[test]
    fn mc_limiter_cases() {
        assert_eq!(mc_slope(1.0, -1.0), 0.0);
        assert_eq!(mc_slope(1.0, 1.0), 1.0);
        assert_eq!(mc_slope(0.1, 1.0), 0.2);
        assert_eq!(mc_slope(-1.0, -3.0), -2.0);
    }

    #[test]
    fn separable_velocity_matches_guidance() {
        let s = random_state(3, 4).unwrap();
        let f = OscillatorField::new(&s);
        for &(x, y, t) in &[(0.3, -0.7, 0.2), (1.9, 0.4, 2.0), (-2.5, -1.1, 5.5)] {
            let v = f.velocity(x, y, t);
            let (a, b) = velocity_cartesian(&s, Configuration::new(x, y), t).unwrap();
            assert_relative_eq!(v[0], a, max_relative = 1e-9, epsilon = 1e-12);
            assert_relative_eq!(v[1], b, max_relative = 1e-9, epsilon = 1e-12);
        }
        let g = DensityGrid::zeros(Bounds::square(3.0), 8, 6).unwrap();
        let mut ux = vec![0.0; 9 * 6];
        let mut uy = vec![0.0; 8 * 7];
        f.face_velocities(&g, 0.7, &mut ux, &mut uy);
        let (x, y) = (g.bounds.x_min + 3.0 * g.dx(), g.bounds.y_min + 4.5 * g.dy());
        assert_relative_eq!(ux[4 * 9 + 3], f.velocity(x, y, 0.7)[0], max_relative = 1e-12);
        let (x, y) = (g.bounds.x_min + 5.5 * g.dx(), g.bounds.y_min + 2.0 * g.dy());
        assert_relative_eq!(uy[2 * 8 + 5], f.velocity(x, y, 0.7)[1], max_relative = 1e-12);
    }

    #[test]
    fn uniform_density_at_rest() {
        let mut g = DensityGrid::zeros(Bounds::square(1.0), 16, 16).unwrap();
        g.values.iter_mut().for_each(|v| *v = 0.25);
        let run = evolve_fv(&g, &FnField(|_, _, _| [0.0, 0.0]), 1.0, &FvSettings { dt: 0.1, cfl: 0.5 }).unwrap();
        assert_eq!(run.grid.values, g.values);
        assert_eq!(run.stats.steps, 10);
    }

    #[test]
    fn uniform_translation_is_exact_at_unit_courant_tenth() {
        // Δx = 0.1, u = 0.1 Δx/Δt: ten steps move a block by one cell.
        let b = Bounds {
            x_min: 0.0,
            x_max: 3.2,
            y_min: 0.0,
            y_max: 0.4,
        };
        let mut g = DensityGrid::zeros(b, 32, 4).unwrap();
        for j in 0..4 {
            for i in 10..20 {
                g.values[j * 32 + i] = 1.0;
            }
        }
        let field = FnField(|_, _, _| [0.5, 0.0]);
        let run = evolve_fv(&g, &field, 0.2, &FvSettings { dt: 0.02, cfl: 0.5 }).unwrap();
        let centroid = |g: &DensityGrid| {
            let mut s = 0.0;
            for j in 0..4 {
                for i in 0..32 {
                    s += g.center(i, j).0 * g.get(i, j);
                }
            }
            s / g.values.iter().sum::<f64>()
        };
        assert_relative_eq!(centroid(&run.grid) - centroid(&g), 0.1, epsilon = 1e-12);
        assert_relative_eq!(run.grid.mass(), g.mass(), max_relative = 1e-13);
    }

    #[test]
    fn cap_and_cfl() {
        let g = DensityGrid::from_fn(Bounds::square(1.0), 10, 10, |x, _| (-x * x).exp()).unwrap();
        let fast = FnField(|_, _, _| [100.0, 0.0]);
        let run = evolve_fv(&g, &fast, 0.01, &FvSettings { dt: 0.01, cfl: 0.5 }).unwrap();
        assert_eq!(run.stats.capped_faces, 11 * 10);
        assert!(matches!(
            evolve_fv(&g, &fast, 0.01, &FvSettings { dt: 0.01, cfl: 0.05 }),
            Err(Error::CflViolated { .. })
        ));
        let nan = FnField(|_, _, _| [f64::NAN, 0.0]);
        let run = evolve_fv(&g, &nan, 0.01, &FvSettings { dt: 0.01, cfl: 0.5 }).unwrap();
        assert_eq!(run.stats.nonfinite_faces, 11 * 10);
        assert_eq!(run.grid.values, g.values);
    }

    #[test]
    fn outflow_accounted() {
        let g = DensityGrid::from_fn(Bounds::square(1.0), 20, 20, |x, y| 1.0 + x + 0.5 * y).unwrap();
        let run = evolve_fv(&g, &FnField(|x, y, _| [0.3 + 0.1 * y, -0.2 * x]), 1.0, &FvSettings { dt: 0.005, cfl: 0.5 }).unwrap();
        assert!(run.stats.outflux.abs() > 1e-3);
        assert!(run.stats.max_mass_defect < 1e-12);
        assert_relative_eq!(
            run.grid.mass(),
            g.mass() - run.stats.outflux + run.stats.clipped,
            epsilon = 1e-12
        );
    }

    #[test]
    fn classical_force() {
        assert_relative_eq!(ClassicalQuartic::potential(1.0), -2.0);
        let h = 1e-6;
        let q = 0.7;
        let dv = (ClassicalQuartic::potential(q + h) - ClassicalQuartic::potential(q - h)) / (2.0 * h);
        assert_relative_eq!(ClassicalQuartic::force(q), -dv, max_relative = 1e-8);
    }

    #[test]
    fn nine_modes_normalized() {
        let s = nine_mode_state(1).unwrap();
        let d = s.to_cartesian();
        for nx in 0..3 {
            for ny in 0..3 {
                assert_relative_eq!(d.get(nx, ny).norm(), 1.0 / 3.0, max_relative = 1e-12);
            }
        }
        assert!(d.get(3, 0).norm() < 1e-12);
    }

    #[test]
    fn initial_grids_normalized() {
        let s = nine_mode_state(2).unwrap();
        for spec in [
            NonequilibriumSpec::Widened { wx: 2.0, wy: 0.5 },
            NonequilibriumSpec::Gaussian { sigma: 0.5f64.sqrt() },
        ] {
            let g = spec.initial_grid(&s, Bounds::square(8.0), 64, 64).unwrap();
            assert_relative_eq!(g.mass(), 1.0, max_relative = 1e-12);
        }
        assert!(NonequilibriumSpec::Gaussian { sigma: -1.0 }.validate().is_err());
    }
}
