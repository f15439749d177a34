//! Reduced photon–pointer model of a spectral-line measurement.
//!
//! Coordinates are the excited-mode amplitude `Q` and `devE`, the deviation of
//! the energy reading from the true line in units of the detector resolution.
//! `T` is the inverse fractional resolution `E_γ/ΔE`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_models::{model_tolerances, sample_one_particle, MAX_FAILED_FRACTION};
use crate::ode::Integrator;
use crate::stats;

/// `(dQ/dT, d devE/dT)`.
pub fn reduced_velocity(q: f64, dev_e: f64) -> Result<[f64; 2]> {
    if q == 0.0 || !q.is_finite() {
        return Err(Error::AtNode { x: q, y: dev_e });
    }
    Ok([
        dev_e * (1.0 / q - q) / 6.0,
        1.0 / (6.0 * q * q) + q * q / 3.0 - 5.0 / 6.0,
    ])
}

/// Stationary points `(±√(5 ± √17)/2, 0)`.
pub fn fixed_points() -> [(f64, f64); 4] {
    let lo = (5.0 - 17f64.sqrt()).sqrt() / 2.0;
    let hi = (5.0 + 17f64.sqrt()).sqrt() / 2.0;
    [(-hi, 0.0), (-lo, 0.0), (lo, 0.0), (hi, 0.0)]
}

/// Conserved along trajectories: `devE²/2 + Q² − ln|Q| − ln|Q² − 1|`.
pub fn orbit_constant(q: f64, dev_e: f64) -> Result<f64> {
    if q == 0.0 || q.abs() == 1.0 {
        return Err(Error::OnSeparatrix { q, dev_e });
    }
    Ok(0.5 * dev_e * dev_e + q * q - q.abs().ln() - (q * q - 1.0).abs().ln())
}

/// Equilibrium density in `(Q, devE)`.
pub fn equilibrium_density(q: f64, dev_e: f64) -> f64 {
    (-0.5 * dev_e * dev_e).exp() / (2.0 * PI).sqrt() * 2.0 / PI.sqrt() * q * q * (-q * q).exp()
}

/// Energy dispersion of the detector: normal with mean `e_gamma`, std `e_gamma/t`.
pub fn dispersion(e: f64, e_gamma: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("resolution parameter must be positive, got {t}")));
    }
    let s = e_gamma / t;
    Ok((-0.5 * ((e - e_gamma) / s).powi(2)).exp() / (s * (2.0 * PI).sqrt()))
}

/// Energy recorded for a deviation `dev_e`.
pub fn recorded_energy(dev_e: f64, e_gamma: f64, t: f64) -> f64 {
    e_gamma * (1.0 + dev_e / t)
}

/// Spectrum tabulated on a uniform energy mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub energies: Vec<f64>,
    pub density: Vec<f64>,
}

impl Spectrum {
    pub fn new(energies: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if energies.len() < 2 || energies.len() != density.len() {
            return Err(Error::InvalidParameter("spectrum needs matching energy and density meshes".into()));
        }
        if density.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::InvalidParameter("spectrum density must be non-negative".into()));
        }
        Ok(Self { energies, density })
    }

    pub fn from_fn(lo: f64, hi: f64, points: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let energies: Vec<f64> = (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect();
        let density = energies.iter().map(|&e| f(e)).collect();
        Self::new(energies, density)
    }

    pub fn step(&self) -> f64 {
        self.energies[1] - self.energies[0]
    }

    /// Trapezoid-rule integral.
    pub fn norm(&self) -> f64 {
        let h = self.step();
        let n = self.density.len();
        h * (self.density.iter().sum::<f64>() - 0.5 * (self.density[0] + self.density[n - 1]))
    }

    pub fn l1_distance(&self, other: &Spectrum) -> f64 {
        self.density.iter().zip(&other.density).map(|(a, b)| (a - b).abs()).sum::<f64>() * self.step()
    }
}

/// Blurs a true spectrum with the detector dispersion at resolution `1/t`.
pub fn observed_spectrum(truth: &Spectrum, t: f64) -> Result<Spectrum> {
    let h = truth.step();
    let n = truth.energies.len();
    let mut out = vec![0.0; n];
    for (j, &e) in truth.energies.iter().enumerate() {
        let mut acc = 0.0;
        for (i, (&eg, &rho)) in truth.energies.iter().zip(&truth.density).enumerate() {
            if rho == 0.0 || eg <= 0.0 {
                continue;
            }
            let wgt = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            acc += wgt * rho * dispersion(e, eg, t)?;
        }
        out[j] = acc * h;
    }
    Spectrum::new(truth.energies.clone(), out)
}

/// Ensemble of `(Q, devE)` recorded at several resolutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEnsemble {
    pub w: f64,
    pub times: Vec<f64>,
    pub initial: Vec<[f64; 2]>,
    /// `snapshots[k][i]` is sample `i` at `times[k]`.
    pub snapshots: Vec<Vec<[f64; 2]>>,
    /// Trajectories that changed the sign of `Q` or of `Q² − 1`.
    pub separatrix_crossings: usize,
    pub failures: usize,
}

impl SpectralEnsemble {
    pub fn dev_e(&self, k: usize) -> Vec<f64> {
        self.snapshots[k].iter().map(|z| z[1]).collect()
    }

    pub fn profile(&self, k: usize, edges: Vec<f64>) -> stats::Histogram {
        stats::Histogram::new(&self.dev_e(k), edges)
    }

    pub fn summary(&self, k: usize) -> LineSummary {
        LineSummary::of(&self.dev_e(k))
    }
}

/// Smoothing bandwidth for counting line components.
pub const PEAK_BANDWIDTH: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSummary {
    pub mean: f64,
    pub std: f64,
    pub peaks: usize,
}

impl LineSummary {
    pub fn of(dev_e: &[f64]) -> Self {
        Self {
            mean: stats::mean(dev_e),
            std: stats::std_dev(dev_e),
            peaks: stats::kde_peak_count(dev_e, PEAK_BANDWIDTH, 1000),
        }
    }
}

/// Samples `Q` from the `w`-widened equilibrium and `devE` from `N(0, 1)`,
/// then records the ensemble at each of `times` (ascending, non-negative).
pub fn spectral_ensemble(w: f64, times: &[f64], n: usize, seed: u64) -> Result<SpectralEnsemble> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidParameter(format!("widening must be finite and positive, got {w}")));
    }
    if times.windows(2).any(|p| p[1] < p[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::InvalidParameter("resolution times must be ascending and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial: Vec<[f64; 2]> = (0..n)
        .map(|_| [w * sample_one_particle(&mut rng), rng.sample(StandardNormal)])
        .collect();
    let tol = model_tolerances();
    let runs: Vec<Result<(Vec<[f64; 2]>, bool)>> = initial
        .par_iter()
        .map(|z| {
            let rhs = |_: f64, s: &[f64; 2]| reduced_velocity(s[0], s[1]).ok();
            let sides = (z[0].signum(), (z[0] * z[0] - 1.0).signum());
            let mut crossed = false;
            let mut integ = Integrator::new(rhs, 0.0, *z, tol)?;
            let mut out = Vec::with_capacity(times.len());
            for &t in times {
                integ.advance_to(t, |_, s| {
                    crossed |= s[0].signum() != sides.0 || (s[0] * s[0] - 1.0).signum() != sides.1;
                })?;
                out.push(*integ.y());
            }
            Ok((out, crossed))
        })
        .collect();
    let mut snapshots = vec![Vec::with_capacity(n); times.len()];
    let mut separatrix_crossings = 0;
    let mut failures = 0;
    for run in runs {
        match run {
            Ok((pts, crossed)) => {
                separatrix_crossings += crossed as usize;
                for (k, p) in pts.into_iter().enumerate() {
                    snapshots[k].push(p);
                }
            }
            Err(_) => failures += 1,
        }
    }
    if failures as f64 > MAX_FAILED_FRACTION * n as f64 {
        return Err(Error::TooManyFailures { failed: failures, total: n });
    }
    Ok(SpectralEnsemble {
        w,
        times: times.to_vec(),
        initial,
        snapshots,
        separatrix_crossings,
        failures,
    })
}

/// Line profile over `devE` at a single resolution.
pub fn line_profile(w: f64, t_obs: f64, n: usize, seed: u64, edges: Vec<f64>) -> Result<(stats::Histogram, LineSummary)> {
    if !(1.0..=1000.0).contains(&t_obs) {
        return Err(Error::InvalidParameter(format!("resolution parameter {t_obs} outside [1, 1000]")));
    }
    let ens = spectral_ensemble(w, &[t_obs], n, seed)?;
    Ok((ens.profile(0, edges), ens.summary(0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stationary_points() {
        for (q, e) in fixed_points() {
            let v = reduced_velocity(q, e).unwrap();
            assert!(v[0].abs() < 1e-15 && v[1].abs() < 1e-14, "{q}: {v:?}");
        }
        assert_relative_eq!(fixed_points()[3].0, ((5.0 + 17f64.sqrt()) / 4.0).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn unit_amplitude_is_invariant_line() {
        for e in [-2.0, 0.0, 3.5] {
            assert_eq!(reduced_velocity(1.0, e).unwrap()[0], 0.0);
        }
        assert!(matches!(reduced_velocity(0.0, 1.0), Err(Error::AtNode { .. })));
        assert!(matches!(orbit_constant(-1.0, 1.0), Err(Error::OnSeparatrix { .. })));
    }

    #[test]
    fn fixed_points_extremize_constant() {
        for (q, _) in fixed_points() {
            let h = 1e-4;
            let c = orbit_constant(q, 0.0).unwrap();
            let d = (orbit_constant(q + h, 0.0).unwrap() - orbit_constant(q - h, 0.0).unwrap()) / (2.0 * h);
            assert!(d.abs() < 1e-6);
            let dd = orbit_constant(q + h, 0.0).unwrap() - 2.0 * c + orbit_constant(q - h, 0.0).unwrap();
            assert!(dd.abs() > 1e-10);
        }
    }

    #[test]
    fn equilibrium_is_stationary() {
        // ∂_Q(ρ v_Q) + ∂_E(ρ v_E) = 0 by central differences
        let h = 1e-5;
        for &(q, e) in &[(0.4, 0.3), (1.7, -1.2), (-0.8, 2.0)] {
            let flux = |a: f64, b: f64, k: usize| equilibrium_density(a, b) * reduced_velocity(a, b).unwrap()[k];
            let div = (flux(q + h, e, 0) - flux(q - h, e, 0)) / (2.0 * h) + (flux(q, e + h, 1) - flux(q, e - h, 1)) / (2.0 * h);
            assert!(div.abs() < 1e-8, "{div}");
        }
    }

    #[test]
    fn dispersion_normalized() {
        let s = Spectrum::from_fn(-1.0, 4.0, 50_001, |e| dispersion(e, 1.5, 5.0).unwrap()).unwrap();
        assert_relative_eq!(s.norm(), 1.0, epsilon = 1e-8);
        assert!(dispersion(1.0, 1.0, 0.0).is_err());
        assert_relative_eq!(recorded_energy(2.0, 10.0, 5.0), 14.0);
    }

    #[test]
    fn gaussian_blur_adds_variances() {
        // true N(10, 0.5²); detector std = E/T; at T = 100 the blur std is ≈ 0.1
        let t = 100.0;
        let truth = Spectrum::from_fn(5.0, 15.0, 2001, |e| (-0.5 * ((e - 10.0) / 0.5).powi(2)).exp() / (0.5 * (2.0 * PI).sqrt())).unwrap();
        let obs = observed_spectrum(&truth, t).unwrap();
        assert_relative_eq!(obs.norm(), 1.0, epsilon = 1e-6);
        let var = |s: &Spectrum| {
            let m: f64 = s.energies.iter().zip(&s.density).map(|(e, d)| e * d).sum::<f64>() * s.step();
            s.energies.iter().zip(&s.density).map(|(e, d)| (e - m).powi(2) * d).sum::<f64>() * s.step()
        };
        // E_γ-dependent width: Var = 0.25 + E[E_γ²]/T² = 0.25 + (100 + 0.25)/T²
        assert_relative_eq!(var(&obs), 0.25 + 100.25 / (t * t), max_relative = 1e-4);
    }
}
