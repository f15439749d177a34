//! Two truncated field-theory models: a decay process between two modes in
//! the rotating-wave approximation, and a von Neumann energy measurement of a
//! single field mode by a pointer.
//!
//! Measurement variables are rescaled: `Q` is the mode amplitude, `Y` the
//! pointer position in units of its initial spread, `T` the rescaled time.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::ode::{Integrator, Tolerances};
use crate::stats;

/// Squared denominators below this are treated as a node.
const NODE_FLOOR: f64 = 1e-300;

/// Largest tolerated fraction of failed trajectories in an ensemble.
pub const MAX_FAILED_FRACTION: f64 = 0.01;

/// Step control for the model trajectories.
pub fn model_tolerances() -> Tolerances {
    Tolerances {
        rtol: 1e-10,
        atol: 1e-12,
        max_step: 0.05,
    }
}

/// Equilibrium vacuum amplitude: `e^{−q²}/√π`, i.e. `N(0, ½)`.
pub fn sample_vacuum<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * FRAC_1_SQRT_2
}

/// Equilibrium one-particle amplitude with density `2q²e^{−q²}/√π`.
///
/// `q²` is Gamma(3/2, 1) distributed; the sign is a fair coin.
pub fn sample_one_particle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let g = Gamma::<f64>::new(1.5, 1.0).expect("valid gamma parameters");
    let r = g.sample(rng).sqrt();
    if rng.gen::<bool>() {
        r
    } else {
        -r
    }
}

pub fn vacuum_cdf(q: f64) -> f64 {
    0.5 * (1.0 + erf(q))
}

pub fn one_particle_density(q: f64) -> f64 {
    2.0 * q * q * (-q * q).exp() / PI.sqrt()
}

pub fn one_particle_cdf(q: f64) -> f64 {
    let x = q * q;
    let p = erf(q.abs()) - 2.0 * (x / PI).sqrt() * (-x).exp();
    0.5 + 0.5 * q.signum() * p
}

/// Mode amplitude for `c₀ = e^{iθ}/√2, c₁ = 1/√2` at `T = 0`, density
/// `(½ + √2 cosθ Q + Q²) e^{−Q²}/√π`.
///
/// Rejection from the even part, which is an equal mixture of the vacuum and
/// one-particle densities.
pub fn sample_superposition<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> f64 {
    let c = theta.cos();
    loop {
        let q = if rng.gen::<bool>() {
            sample_vacuum(rng)
        } else {
            sample_one_particle(rng)
        };
        let ratio = 1.0 + SQRT_2 * c * q / (0.5 + q * q);
        if rng.gen::<f64>() * (1.0 + c.abs()) < ratio {
            return q;
        }
    }
}

fn failure_check(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILED_FRACTION * total as f64 {
        return Err(Error::TooManyFailures { failed, total });
    }
    Ok(())
}

// ---------------------------------------------------------------- decay

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    pub omega: f64,
    pub g: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        Self { omega: 1.0, g: 1.0 }
    }
}

impl DecayParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.g > 0.0 && self.omega.is_finite() && self.g.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "decay needs finite positive omega and g (got {}, {})",
                self.omega, self.g
            )));
        }
        Ok(())
    }

    /// Period of every trajectory, `2πω/g`.
    pub fn period(&self) -> f64 {
        2.0 * PI * self.omega / self.g
    }
}

/// Velocities for the state that starts as one quantum in the first mode.
pub fn decay_velocity(q: [f64; 2], t: f64, p: &DecayParams) -> Result<[f64; 2]> {
    let half = p.g * t / (2.0 * p.omega);
    let (s, c) = half.sin_cos();
    let den = q[0] * q[0] * c * c + q[1] * q[1] * s * s;
    if !(den > NODE_FLOOR) {
        return Err(Error::AtNode { x: q[0], y: q[1] });
    }
    let k = p.g / (2.0 * p.omega * p.omega);
    let amp = 0.5 * (p.g * t / p.omega).sin() / den;
    Ok([amp * (q[1] - k * q[0]), amp * (-q[0] + k * q[1])])
}

pub fn integrate_decay(q0: [f64; 2], t0: f64, t1: f64, p: &DecayParams, tol: Tolerances) -> Result<[f64; 2]> {
    p.validate()?;
    let rhs = |t: f64, q: &[f64; 2]| decay_velocity(*q, t, p).ok();
    let mut integ = Integrator::new(rhs, t0, q0, tol)?;
    integ.advance_to(t1, |_, _| {})?;
    Ok(*integ.y())
}

/// Ensemble evolved through the decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayEnsemble {
    pub w: f64,
    pub t_end: f64,
    pub initial: Vec<[f64; 2]>,
    /// Final positions of the trajectories that integrated cleanly.
    pub samples: Vec<[f64; 2]>,
    pub failures: usize,
}

impl DecayEnsemble {
    pub fn q1(&self) -> Vec<f64> {
        self.samples.iter().map(|q| q[0]).collect()
    }

    pub fn q2(&self) -> Vec<f64> {
        self.samples.iter().map(|q| q[1]).collect()
    }

    /// KS distance of the second-mode marginal from the one-particle density.
    pub fn ks_q2_one_particle(&self) -> f64 {
        stats::ks_statistic(&self.q2(), one_particle_cdf)
    }

    /// KS distance of the first-mode marginal from the vacuum density.
    pub fn ks_q1_vacuum(&self) -> f64 {
        stats::ks_statistic(&self.q1(), vacuum_cdf)
    }

    pub fn correlation(&self) -> f64 {
        stats::pearson(&self.q1(), &self.q2())
    }
}

/// Starts from equilibrium except that the first mode is scaled by `w`.
pub fn decay_ensemble(w: f64, n: usize, t_end: f64, seed: u64, p: &DecayParams) -> Result<DecayEnsemble> {
    p.validate()?;
    check_width(w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let q1 = w * sample_one_particle(&mut rng);
            [q1, sample_vacuum(&mut rng)]
        })
        .collect();
    let tol = model_tolerances();
    let ends: Vec<Option<[f64; 2]>> = initial
        .par_iter()
        .map(|q| integrate_decay(*q, 0.0, t_end, p, tol).ok())
        .collect();
    let failures = ends.iter().filter(|e| e.is_none()).count();
    failure_check(failures, n)?;
    Ok(DecayEnsemble {
        w,
        t_end,
        initial,
        samples: ends.into_iter().flatten().collect(),
        failures,
    })
}

fn check_width(w: f64) -> Result<()> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidParameter(format!("widening must be finite and positive, got {w}")));
    }
    Ok(())
}

// ---------------------------------------------------------- measurement

/// State of the measured mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "case")]
pub enum MeasuredState {
    Vacuum,
    OneParticle,
    /// `c₀ = e^{iθ}/√2`, `c₁ = 1/√2`.
    Superposition { theta: f64 },
}

impl MeasuredState {
    pub fn sample_q<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MeasuredState::Vacuum => sample_vacuum(rng),
            MeasuredState::OneParticle => sample_one_particle(rng),
            MeasuredState::Superposition { theta } => sample_superposition(theta, rng),
        }
    }
}

/// `1/(a + Q)` with `a = e^{iθ}/√2 · e^{T(2T−Y)}`, computed without overflow.
fn superposition_inverse(theta: f64, q: f64, y: f64, t: f64) -> Complex64 {
    let e = t * (2.0 * t - y);
    if e <= 0.0 {
        let a = Complex64::from_polar(FRAC_1_SQRT_2 * e.exp(), theta);
        1.0 / (a + q)
    } else {
        // 1/(a+Q) = b/(1 + Qb), b = 1/a
        let b = Complex64::from_polar(SQRT_2 * (-e).exp(), -theta);
        b / (1.0 + q * b)
    }
}

/// `(dQ/dT, dY/dT)`.
pub fn measurement_velocity(state: MeasuredState, q: f64, y: f64, t: f64) -> Result<[f64; 2]> {
    match state {
        MeasuredState::Vacuum => Ok([q * (t - y) / 3.0, 2.0 / 3.0 * (1.0 + q * q)]),
        MeasuredState::OneParticle => {
            if !(q * q > NODE_FLOOR) {
                return Err(Error::AtNode { x: q, y });
            }
            Ok([
                (y - 3.0 * t) * (1.0 / q - q) / 3.0,
                1.0 / (3.0 * q * q) + 4.0 / 3.0 + 2.0 / 3.0 * q * q,
            ])
        }
        MeasuredState::Superposition { theta } => {
            let inv = superposition_inverse(theta, q, y, t);
            let inv_sq = inv.norm_sqr();
            if !inv_sq.is_finite() || inv_sq > 1.0 / NODE_FLOOR {
                return Err(Error::AtNode { x: q, y });
            }
            let qdot = ((-5.0 * t / 3.0 + 2.0 * q * q * t / 3.0 + y / 3.0) * inv).re + 2.0 * q * t / 3.0 * inv_sq
                - (y - t) * q / 3.0;
            let ydot = (2.0 * q / 3.0 * inv).re + inv_sq / 3.0 + 2.0 / 3.0 * (q * q + 1.0);
            Ok([qdot, ydot])
        }
    }
}

/// Velocities in the normal-ordered vacuum frame `Y′ = Y − T`.
pub fn stationary_vacuum_velocity(q: f64, y_shifted: f64) -> [f64; 2] {
    [-q * y_shifted / 3.0, (2.0 * q * q - 1.0) / 3.0]
}

/// Conserved along normal-ordered vacuum orbits: `Y′²/2 + Q² − ln|Q|`.
pub fn stationary_vacuum_invariant(q: f64, y_shifted: f64) -> f64 {
    0.5 * y_shifted * y_shifted + q * q - q.abs().ln()
}

/// Node crossings allowed per trajectory before giving up.
const MAX_NODE_CROSSINGS: usize = 64;

/// Distance `|a + Q|` at which a node crossing is considered complete.
const NODE_CLEARANCE: f64 = 0.05;

/// Integrates the measurement flow from `t0` to `t1`.
///
/// When the vacuum coefficient is (nearly) real the superposition has a moving
/// node line that trajectories cross in finite time with a pointer speed
/// growing like `|a + Q|^{−2}`. Forward runs that stall there are carried
/// across in the regularized time `s`, `dT/ds = |a + Q|²`, and then resumed.
pub fn integrate_measurement(state: MeasuredState, start: [f64; 2], t0: f64, t1: f64, tol: Tolerances) -> Result<[f64; 2]> {
    let mut t = t0;
    let mut z = start;
    for _ in 0..=MAX_NODE_CROSSINGS {
        let rhs = |t: f64, z: &[f64; 2]| measurement_velocity(state, z[0], z[1], t).ok();
        let mut integ = Integrator::new(rhs, t, z, tol)?;
        let err = match integ.advance_to(t1, |_, _| {}) {
            Ok(()) => return Ok(*integ.y()),
            Err(e) => e,
        };
        let MeasuredState::Superposition { theta } = state else {
            return Err(err);
        };
        if t1 < t0 {
            return Err(err);
        }
        let (tc, zc) = match err {
            Error::StepUnderflow { t, ref position } => (t, [position[0], position[1]]),
            e => return Err(e),
        };
        let crossed = cross_node(theta, [zc[0], zc[1], tc], tol)?;
        if crossed[2] >= t1 {
            // Overshot the target while regularized; come back in plain time.
            return integrate_plain(state, [crossed[0], crossed[1]], crossed[2], t1, tol);
        }
        z = [crossed[0], crossed[1]];
        t = crossed[2];
    }
    Err(Error::TrackingLost {
        t,
        reason: "too many node crossings".into(),
    })
}

fn integrate_plain(state: MeasuredState, start: [f64; 2], t0: f64, t1: f64, tol: Tolerances) -> Result<[f64; 2]> {
    let rhs = |t: f64, z: &[f64; 2]| measurement_velocity(state, z[0], z[1], t).ok();
    let mut integ = Integrator::new(rhs, t0, start, tol)?;
    integ.advance_to(t1, |_, _| {})?;
    Ok(*integ.y())
}

/// `(Q, Y, T)` velocities in regularized time; smooth through the node line.
fn regularized_velocity(theta: f64, z: &[f64; 3]) -> Option<[f64; 3]> {
    let (q, y, t) = (z[0], z[1], z[2]);
    let e = t * (2.0 * t - y);
    if e > 700.0 {
        return None;
    }
    let d = Complex64::from_polar(FRAC_1_SQRT_2 * e.exp(), theta) + q;
    let d2 = d.norm_sqr();
    let x = -5.0 * t / 3.0 + 2.0 * q * q * t / 3.0 + y / 3.0;
    let qdot = (x * d.conj()).re + 2.0 * q * t / 3.0 - (y - t) * q / 3.0 * d2;
    let ydot = (2.0 * q / 3.0 * d.conj()).re + 1.0 / 3.0 + 2.0 / 3.0 * (q * q + 1.0) * d2;
    Some([qdot, ydot, d2])
}

fn node_distance(theta: f64, z: &[f64; 3]) -> f64 {
    let e = z[2] * (2.0 * z[2] - z[1]);
    (Complex64::from_polar(FRAC_1_SQRT_2 * e.exp(), theta) + z[0]).norm()
}

fn cross_node(theta: f64, z: [f64; 3], tol: Tolerances) -> Result<[f64; 3]> {
    let ds = 0.01;
    let rhs = |_: f64, z: &[f64; 3]| regularized_velocity(theta, z);
    let mut integ = Integrator::new(rhs, 0.0, z, tol)?;
    for k in 1..=10_000 {
        integ.advance_to(k as f64 * ds, |_, _| {})?;
        let y = *integ.y();
        if y[2] > z[2] && node_distance(theta, &y) > NODE_CLEARANCE {
            return Ok(y);
        }
    }
    Err(Error::TrackingLost {
        t: integ.y()[2],
        reason: "no exit from node neighbourhood".into(),
    })
}

/// Ensemble of `(Q, Y)` under the measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementEnsemble {
    pub state: MeasuredState,
    pub w: f64,
    pub t_end: f64,
    pub initial: Vec<[f64; 2]>,
    pub samples: Vec<[f64; 2]>,
    pub failures: usize,
}

impl MeasurementEnsemble {
    pub fn pointer(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z[1]).collect()
    }

    /// Fraction of successful trajectories with `Y` beyond `threshold`.
    pub fn fraction_beyond(&self, threshold: f64) -> f64 {
        let hits = self.samples.iter().filter(|z| z[1] > threshold).count();
        hits as f64 / self.samples.len() as f64
    }
}

/// Initial `ρ(Q, Y) = |Ψ(Q/w, Y, 0)|²/w`, evolved to `t_end`.
pub fn measurement_ensemble(state: MeasuredState, w: f64, n: usize, t_end: f64, seed: u64) -> Result<MeasurementEnsemble> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    measurement_ensemble_with(state, w, n, t_end, &mut rng)
}

fn measurement_ensemble_with<R: Rng + ?Sized>(
    state: MeasuredState,
    w: f64,
    n: usize,
    t_end: f64,
    rng: &mut R,
) -> Result<MeasurementEnsemble> {
    check_width(w)?;
    let initial: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let q = w * state.sample_q(rng);
            [q, rng.sample(StandardNormal)]
        })
        .collect();
    let tol = model_tolerances();
    let ends: Vec<Option<[f64; 2]>> = initial
        .par_iter()
        .map(|z| integrate_measurement(state, *z, 0.0, t_end, tol).ok())
        .collect();
    let failures = ends.iter().filter(|e| e.is_none()).count();
    failure_check(failures, n)?;
    Ok(MeasurementEnsemble {
        state,
        w,
        t_end,
        initial,
        samples: ends.into_iter().flatten().collect(),
        failures,
    })
}

/// Pointer histogram of an ensemble.
pub type PointerSpectrum = stats::Histogram;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSettings {
    pub t_end: f64,
    pub threshold: f64,
    pub thetas: Vec<f64>,
    /// Ensemble size per phase.
    pub n: usize,
}

impl Default for DetectionSettings {
    fn default() -> Self {
        Self {
            t_end: 4.5,
            threshold: 9.0,
            thetas: (1..=10).map(|k| 2.0 * PI * k as f64 / 10.0).collect(),
            n: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub w: f64,
    /// `(θ, fraction beyond threshold)`.
    pub per_theta: Vec<(f64, f64)>,
    pub mean: f64,
    pub failures: usize,
}

/// Probability of reading "one particle" when measuring the vacuum/one-particle
/// superposition, averaged over the relative phase.
pub fn detection_probability(w: f64, settings: &DetectionSettings, seed: u64) -> Result<Detection> {
    if settings.thetas.is_empty() || settings.n == 0 {
        return Err(Error::InvalidParameter("detection needs phases and a positive ensemble size".into()));
    }
    let mut per_theta = Vec::with_capacity(settings.thetas.len());
    let mut failures = 0;
    for (k, &theta) in settings.thetas.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let ens = measurement_ensemble_with(MeasuredState::Superposition { theta }, w, settings.n, settings.t_end, &mut rng)?;
        failures += ens.failures;
        per_theta.push((theta, ens.fraction_beyond(settings.threshold)));
    }
    let mean = per_theta.iter().map(|p| p.1).sum::<f64>() / per_theta.len() as f64;
    Ok(Detection {
        w,
        per_theta,
        mean,
        failures,
    })
}

/// Pointer snapshots of a measured vacuum in the normal-ordered frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacuumPointer {
    pub w: f64,
    pub times: Vec<f64>,
    /// `snapshots[k][i]` is `(Q, Y′)` of sample `i` at `times[k]`.
    pub snapshots: Vec<Vec<[f64; 2]>>,
    /// Trajectories on which `Q` changed sign.
    pub axis_crossings: usize,
}

impl VacuumPointer {
    pub fn pointer(&self, k: usize) -> Vec<f64> {
        self.snapshots[k].iter().map(|z| z[1]).collect()
    }

    pub fn spectrum(&self, k: usize, edges: Vec<f64>) -> PointerSpectrum {
        stats::Histogram::new(&self.pointer(k), edges)
    }
}

/// Evolves a `w`-widened vacuum ensemble under the normal-ordered flow and
/// records it at each of `times` (ascending, non-negative).
pub fn stationary_vacuum_pointer(w: f64, times: &[f64], n: usize, seed: u64) -> Result<VacuumPointer> {
    check_width(w)?;
    if times.windows(2).any(|p| p[1] < p[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::InvalidParameter("snapshot times must be ascending and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial: Vec<[f64; 2]> = (0..n)
        .map(|_| [w * sample_vacuum(&mut rng), rng.sample(StandardNormal)])
        .collect();
    let tol = model_tolerances();
    let runs: Vec<Result<(Vec<[f64; 2]>, bool)>> = initial
        .par_iter()
        .map(|z| {
            let rhs = |_: f64, s: &[f64; 2]| {
                if s[0] == 0.0 {
                    None
                } else {
                    Some(stationary_vacuum_velocity(s[0], s[1]))
                }
            };
            let side = z[0].signum();
            let mut crossed = false;
            let mut integ = Integrator::new(rhs, 0.0, *z, tol)?;
            let mut out = Vec::with_capacity(times.len());
            for &t in times {
                integ.advance_to(t, |_, s| crossed |= s[0].signum() != side)?;
                out.push(*integ.y());
            }
            Ok((out, crossed))
        })
        .collect();
    let mut snapshots = vec![Vec::with_capacity(n); times.len()];
    let mut axis_crossings = 0;
    let mut failed = 0;
    for run in runs {
        match run {
            Ok((pts, crossed)) => {
                axis_crossings += crossed as usize;
                for (k, p) in pts.into_iter().enumerate() {
                    snapshots[k].push(p);
                }
            }
            Err(_) => failed += 1,
        }
    }
    failure_check(failed, n)?;
    Ok(VacuumPointer {
        w,
        times: times.to_vec(),
        snapshots,
        axis_crossings,
    })
}
