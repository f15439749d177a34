//! States of the 2-D isotropic oscillator in rescaled units.
//!
//! Positions are measured in units of the oscillator length and time in
//! units of the inverse frequency, so shell `n` carries the phase `e^{−inT}`
//! and every state is periodic with period `2π`.

pub mod basis;
mod table;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use basis::{eval_radial_poly, mode_count, mode_index, mode_labels, MAX_CUTOFF};
pub use table::TABULATED_CUTOFF;

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-12;
const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// A point of configuration space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub qx: f64,
    pub qy: f64,
}

impl Configuration {
    pub fn new(qx: f64, qy: f64) -> Self {
        Self { qx, qy }
    }

    pub fn from_polar(eta: f64, phi: f64) -> Self {
        Self {
            qx: eta * phi.cos(),
            qy: eta * phi.sin(),
        }
    }

    pub fn eta(&self) -> f64 {
        self.qx.hypot(self.qy)
    }

    /// Polar angle in `[−π, π)`.
    pub fn phi(&self) -> f64 {
        let a = self.qy.atan2(self.qx);
        if a >= PI {
            a - 2.0 * PI
        } else {
            a
        }
    }
}

/// Which basis a coefficient list is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Angular,
    Cartesian,
}

/// Cartesian coefficients `D_{n_x n_y}`, shell ordered by `n_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianCoeffs {
    m: usize,
    coeffs: Vec<Complex64>,
}

impl CartesianCoeffs {
    pub fn new(m: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        check_layout(m, &coeffs)?;
        check_norm(&coeffs)?;
        Ok(Self { m, coeffs })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn get(&self, nx: usize, ny: usize) -> Complex64 {
        if nx + ny > self.m {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[mode_index(nx, ny)]
        }
    }

    /// Inverse transform, `C = U† D` shell by shell.
    pub fn to_angular(&self) -> Result<OscillatorState> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len()];
        for n in 0..=self.m {
            let u = &basis::shell(n).transform;
            for nd in 0..=n {
                out[mode_index(nd, n - nd)] = (0..=n)
                    .map(|p| u[p][nd].conj() * self.coeffs[mode_index(p, n - p)])
                    .sum();
            }
        }
        OscillatorState::new(self.m, out)
    }
}

/// Superposition `Σ C_{n_d n_g} e^{−i(n_d+n_g)T} χ_{n_d n_g}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorState {
    m: usize,
    coeffs: Vec<Complex64>,
    cartesian: Vec<Complex64>,
}

fn check_layout(m: usize, coeffs: &[Complex64]) -> Result<()> {
    basis::check_cutoff(m)?;
    if coeffs.len() != mode_count(m) {
        return Err(Error::InvalidState(format!(
            "expected {} coefficients for m = {m}, got {}",
            mode_count(m),
            coeffs.len()
        )));
    }
    if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::InvalidState("non-finite coefficient".into()));
    }
    Ok(())
}

fn norm_sq(coeffs: &[Complex64]) -> f64 {
    coeffs.iter().map(|c| c.norm_sqr()).sum()
}

fn check_norm(coeffs: &[Complex64]) -> Result<()> {
    let n = norm_sq(coeffs);
    if (n - 1.0).abs() > NORM_TOL {
        Err(Error::NotNormalized { norm_sq: n })
    } else {
        Ok(())
    }
}

fn generated_transform(m: usize, angular: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); angular.len()];
    for n in 0..=m {
        let u = &basis::shell(n).transform;
        for p in 0..=n {
            out[mode_index(p, n - p)] = (0..=n)
                .map(|nd| u[p][nd] * angular[mode_index(nd, n - nd)])
                .sum();
        }
    }
    out
}

/// Reduced wave function `ψ̃ = ψ e^{η²/2}` and its Cartesian gradient.
#[derive(Debug, Clone, Copy)]
pub struct Reduced {
    pub value: Complex64,
    pub dx: Complex64,
    pub dy: Complex64,
    /// `Σ |D|² u_p(x)² u_q(y)² / π`, the incoherent local magnitude.
    pub envelope: f64,
}

impl OscillatorState {
    /// Builds a state from shell-ordered coefficients that are already normalized.
    pub fn new(m: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        check_layout(m, &coeffs)?;
        check_norm(&coeffs)?;
        let cartesian = generated_transform(m, &coeffs);
        Ok(Self {
            m,
            coeffs,
            cartesian,
        })
    }

    /// Rescales the coefficients to unit norm first.
    pub fn normalized(m: usize, mut coeffs: Vec<Complex64>) -> Result<Self> {
        check_layout(m, &coeffs)?;
        let n = norm_sq(&coeffs);
        if n <= 0.0 {
            return Err(Error::InvalidState("all coefficients vanish".into()));
        }
        let s = n.sqrt().recip();
        coeffs.iter_mut().for_each(|c| *c *= s);
        Self::new(m, coeffs)
    }

    /// Builds a state from sparse `((n_d, n_g), C)` entries, normalizing.
    pub fn from_entries(m: usize, entries: &[((usize, usize), Complex64)]) -> Result<Self> {
        basis::check_cutoff(m)?;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); mode_count(m)];
        for &((nd, ng), c) in entries {
            if nd + ng > m {
                return Err(Error::InvalidState(format!(
                    "mode ({nd}, {ng}) exceeds cutoff m = {m}"
                )));
            }
            coeffs[mode_index(nd, ng)] += c;
        }
        Self::normalized(m, coeffs)
    }

    /// The single basis state `χ_{n_d n_g}`.
    pub fn eigenstate(nd: usize, ng: usize) -> Result<Self> {
        Self::from_entries(nd + ng, &[((nd, ng), Complex64::new(1.0, 0.0))])
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn mode_count(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn get(&self, nd: usize, ng: usize) -> Complex64 {
        if nd + ng > self.m {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[mode_index(nd, ng)]
        }
    }

    /// Coefficients of the shell `n_d + n_g = m`, ordered by `n_d`.
    pub fn top_shell(&self) -> &[Complex64] {
        let start = self.m * (self.m + 1) / 2;
        &self.coeffs[start..]
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.coeffs)
    }

    /// Multiplies every coefficient by `e^{iα}`.
    pub fn with_global_phase(&self, alpha: f64) -> Self {
        let f = Complex64::from_polar(1.0, alpha);
        Self::normalized(self.m, self.coeffs.iter().map(|c| c * f).collect())
            .expect("phase rotation keeps the state valid")
    }

    /// Complex conjugate of every coefficient.
    pub fn conjugated(&self) -> Self {
        Self::normalized(self.m, self.coeffs.iter().map(|c| c.conj()).collect())
            .expect("conjugation keeps the state valid")
    }

    /// Cartesian coefficients from the operator-generated transform.
    pub fn to_cartesian(&self) -> CartesianCoeffs {
        CartesianCoeffs {
            m: self.m,
            coeffs: self.cartesian.clone(),
        }
    }

    /// Cartesian coefficients from the hand table; only for `m ≤ 4`.
    pub fn to_cartesian_tabulated(&self) -> Result<CartesianCoeffs> {
        let coeffs = table::transform(self.m, &self.coeffs)?;
        Ok(CartesianCoeffs { m: self.m, coeffs })
    }

    /// `ψ(η, φ, T)` summed in the angular basis.
    pub fn psi(&self, config: Configuration, t: f64) -> Complex64 {
        let eta = config.eta();
        let phi = config.phi();
        let mut sum = Complex64::new(0.0, 0.0);
        for (idx, c) in self.coeffs.iter().enumerate() {
            if *c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let (nd, ng) = mode_labels(idx);
            let f = eval_radial_poly(nd, ng, eta);
            let angle = -((nd + ng) as f64) * t + (nd as f64 - ng as f64) * phi;
            sum += c * Complex64::from_polar(f, angle);
        }
        sum * ground_state(eta)
    }

    /// `ψ` summed in the Cartesian Hermite basis.
    pub fn psi_cartesian(&self, config: Configuration, t: f64) -> Complex64 {
        self.reduced(config.qx, config.qy, t).value * (-0.5 * (config.qx.powi(2) + config.qy.powi(2))).exp()
    }

    /// `(∂ηψ, ∂φψ)` from the radial polynomials and the angular phases.
    pub fn grad_psi(&self, config: Configuration, t: f64) -> (Complex64, Complex64) {
        let eta = config.eta();
        let phi = config.phi();
        let mut d_eta = Complex64::new(0.0, 0.0);
        let mut d_phi = Complex64::new(0.0, 0.0);
        for (idx, c) in self.coeffs.iter().enumerate() {
            if *c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let (nd, ng) = mode_labels(idx);
            let (f, df) = basis::radial_poly(nd, ng).eval_with_derivative(eta);
            let l = nd as f64 - ng as f64;
            let angle = -((nd + ng) as f64) * t + l * phi;
            let ph = c * Complex64::from_polar(1.0, angle);
            d_eta += ph * (df - eta * f);
            d_phi += ph * Complex64::new(0.0, l * f);
        }
        let g = ground_state(eta);
        (d_eta * g, d_phi * g)
    }

    /// `ψ̃ = ψ e^{η²/2}` and its gradient, from the Cartesian expansion.
    ///
    /// The Gaussian factor is dropped so the far field stays representable.
    pub fn reduced(&self, x: f64, y: f64, t: f64) -> Reduced {
        let m = self.m;
        let mut ux = [0.0; MAX_CUTOFF + 1];
        let mut dux = [0.0; MAX_CUTOFF + 1];
        let mut uy = [0.0; MAX_CUTOFF + 1];
        let mut duy = [0.0; MAX_CUTOFF + 1];
        basis::hermite_values(m, x, &mut ux, &mut dux);
        basis::hermite_values(m, y, &mut uy, &mut duy);
        let step = Complex64::from_polar(1.0, -t);
        let mut phase = Complex64::new(1.0, 0.0);
        let mut value = Complex64::new(0.0, 0.0);
        let mut dx = Complex64::new(0.0, 0.0);
        let mut dy = Complex64::new(0.0, 0.0);
        let mut envelope = 0.0;
        let mut idx = 0;
        for n in 0..=m {
            let mut shell = Complex64::new(0.0, 0.0);
            let mut shell_dx = Complex64::new(0.0, 0.0);
            let mut shell_dy = Complex64::new(0.0, 0.0);
            for p in 0..=n {
                let d = self.cartesian[idx];
                idx += 1;
                let q = n - p;
                shell += d * (ux[p] * uy[q]);
                shell_dx += d * (dux[p] * uy[q]);
                shell_dy += d * (ux[p] * duy[q]);
                envelope += d.norm_sqr() * (ux[p] * uy[q]).powi(2);
            }
            value += shell * phase;
            dx += shell_dx * phase;
            dy += shell_dy * phase;
            phase *= step;
        }
        Reduced {
            value: value * INV_SQRT_PI,
            dx: dx * INV_SQRT_PI,
            dy: dy * INV_SQRT_PI,
            envelope: envelope / PI,
        }
    }

    /// Flags coefficient pairs with equal magnitudes or phases differing by a
    /// multiple of `π/2`, both within `1e-9`. Advisory only.
    pub fn is_fine_tuned(&self) -> bool {
        let nonzero: Vec<Complex64> = self
            .coeffs
            .iter()
            .copied()
            .filter(|c| c.norm() > 1e-9)
            .collect();
        for (i, a) in nonzero.iter().enumerate() {
            for b in &nonzero[i + 1..] {
                if (a.norm() - b.norm()).abs() < 1e-9 {
                    return true;
                }
                let quarter = (a.arg() - b.arg()) / (PI / 2.0);
                if (quarter - quarter.round()).abs() * (PI / 2.0) < 1e-9 {
                    return true;
                }
            }
        }
        false
    }

    pub fn to_file(&self, basis: Basis) -> StateFile {
        let (list, ordered): (&[Complex64], Basis) = match basis {
            Basis::Angular => (&self.coeffs, Basis::Angular),
            Basis::Cartesian => (&self.cartesian, Basis::Cartesian),
        };
        StateFile {
            basis: ordered,
            m: self.m,
            coeffs: list
                .iter()
                .enumerate()
                .filter(|(_, c)| c.norm_sqr() > 0.0)
                .map(|(idx, c)| {
                    let (a, b) = mode_labels(idx);
                    (a, b, c.re, c.im)
                })
                .collect(),
        }
    }

    pub fn to_json(&self, basis: Basis) -> String {
        serde_json::to_string_pretty(&self.to_file(basis)).expect("state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: StateFile =
            serde_json::from_str(text).map_err(|e| Error::StateFile(e.to_string()))?;
        file.into_state()
    }
}

/// On-disk form: `{basis, m, coeffs: [[n1, n2, re, im], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub basis: Basis,
    pub m: usize,
    pub coeffs: Vec<(usize, usize, f64, f64)>,
}

impl StateFile {
    pub fn into_state(self) -> Result<OscillatorState> {
        basis::check_cutoff(self.m)?;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); mode_count(self.m)];
        for &(a, b, re, im) in &self.coeffs {
            if a + b > self.m {
                return Err(Error::StateFile(format!(
                    "mode ({a}, {b}) exceeds cutoff m = {}",
                    self.m
                )));
            }
            coeffs[mode_index(a, b)] = Complex64::new(re, im);
        }
        let n = norm_sq(&coeffs);
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::NotNormalized { norm_sq: n });
        }
        let s = n.sqrt().recip();
        coeffs.iter_mut().for_each(|c| *c *= s);
        match self.basis {
            Basis::Angular => OscillatorState::new(self.m, coeffs),
            Basis::Cartesian => CartesianCoeffs::new(self.m, coeffs)?.to_angular(),
        }
    }
}

/// `χ₀₀(η) = e^{−η²/2}/√π`.
pub fn ground_state(eta: f64) -> f64 {
    (-0.5 * eta * eta).exp() * INV_SQRT_PI
}

/// Half-width of the square domain that holds all but a negligible part of `|ψ|²`.
pub fn default_half_width(m: usize) -> f64 {
    if m <= 4 {
        8.0
    } else {
        8.0 * ((m as f64 + 1.0) / 5.0).sqrt()
    }
}

/// Random state: magnitudes uniform on `[0, 1]`, phases uniform on `[0, 2π)`.
pub fn random_state(m: usize, seed: u64) -> Result<OscillatorState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_state_with(m, &mut rng)
}

pub fn random_state_with<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<OscillatorState> {
    if m == 0 {
        return Err(Error::InvalidParameter("random states need m ≥ 1".into()));
    }
    basis::check_cutoff(m)?;
    let coeffs = (0..mode_count(m))
        .map(|_| {
            let mag: f64 = rng.gen();
            let phase: f64 = rng.gen::<f64>() * 2.0 * PI;
            Complex64::from_polar(mag, phase)
        })
        .collect();
    OscillatorState::normalized(m, coeffs)
}

/// `√½`, used by tests and callers building simple superpositions.
pub const SQRT_HALF: f64 = FRAC_1_SQRT_2;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn vacuum_peak_value() {
        let s = OscillatorState::eigenstate(0, 0).unwrap();
        let v = s.psi(Configuration::new(0.0, 0.0), 0.0);
        assert_relative_eq!(v.re, PI.sqrt().recip(), max_relative = 1e-14);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn golden_transform_entries() {
        let s = OscillatorState::eigenstate(0, 0).unwrap();
        assert_relative_eq!(s.to_cartesian().get(0, 0).re, 1.0);
        let s = OscillatorState::eigenstate(1, 0).unwrap();
        let d = s.to_cartesian();
        assert!((d.get(1, 0) - c(SQRT_HALF, 0.0)).norm() < 1e-15);
        assert!((d.get(0, 1) - c(0.0, SQRT_HALF)).norm() < 1e-15);
        let s = OscillatorState::eigenstate(0, 1).unwrap();
        let d = s.to_cartesian();
        assert!((d.get(0, 1) - c(0.0, -SQRT_HALF)).norm() < 1e-15);
    }

    #[test]
    fn generated_matches_table() {
        for seed in 0..20 {
            for m in 1..=4 {
                let s = random_state(m, seed).unwrap();
                let gen = s.to_cartesian();
                let tab = s.to_cartesian_tabulated().unwrap();
                for (a, b) in gen.coeffs().iter().zip(tab.coeffs()) {
                    assert!((a - b).norm() < 1e-12, "m={m} seed={seed}");
                }
            }
        }
    }

    #[test]
    fn table_refuses_large_cutoff() {
        let s = random_state(5, 1).unwrap();
        assert_eq!(
            s.to_cartesian_tabulated(),
            Err(Error::CutoffExceeded {
                requested: 5,
                max: 4
            })
        );
        assert!(matches!(
            random_state(13, 1),
            Err(Error::CutoffExceeded { .. })
        ));
    }

    #[test]
    fn round_trip_and_norm() {
        for m in 1..=MAX_CUTOFF {
            let s = random_state(m, 3).unwrap();
            let d = s.to_cartesian();
            assert!((norm_sq(d.coeffs()) - 1.0).abs() < 1e-12);
            let back = d.to_angular().unwrap();
            for (a, b) in s.coeffs().iter().zip(back.coeffs()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn angular_and_hermite_evaluations_agree() {
        for m in 1..=6 {
            let s = random_state(m, 11).unwrap();
            for k in 0..20 {
                let cfg = Configuration::from_polar(0.2 + 0.2 * k as f64, 0.7 * k as f64 - 3.0);
                let t = 0.37 * k as f64;
                let a = s.psi(cfg, t);
                let b = s.psi_cartesian(cfg, t);
                assert!((a - b).norm() < 1e-10, "m={m} k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn periodic_in_time() {
        let s = random_state(3, 5).unwrap();
        let cfg = Configuration::new(0.4, -1.1);
        let a = s.psi(cfg, 0.9);
        let b = s.psi(cfg, 0.9 + 2.0 * PI);
        assert!((a - b).norm() < 1e-13);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = random_state(4, 9).unwrap();
        let h = 1e-5;
        for k in 0..10 {
            let eta = 0.5 + 0.3 * k as f64;
            let phi = -2.5 + 0.5 * k as f64;
            let t = 0.1 * k as f64;
            let (de, dp) = s.grad_psi(Configuration::from_polar(eta, phi), t);
            let fe = (s.psi(Configuration::from_polar(eta + h, phi), t)
                - s.psi(Configuration::from_polar(eta - h, phi), t))
                / (2.0 * h);
            let fp = (s.psi(Configuration::from_polar(eta, phi + h), t)
                - s.psi(Configuration::from_polar(eta, phi - h), t))
                / (2.0 * h);
            assert!((de - fe).norm() <= 1e-6 * fe.norm().max(1e-3));
            assert!((dp - fp).norm() <= 1e-6 * fp.norm().max(1e-3));
        }
    }

    #[test]
    fn vacuum_log_derivative() {
        let s = OscillatorState::eigenstate(0, 0).unwrap();
        let cfg = Configuration::from_polar(1.7, 0.3);
        let (de, dp) = s.grad_psi(cfg, 0.4);
        let v = s.psi(cfg, 0.4);
        assert_relative_eq!((de / v).re, -1.7, max_relative = 1e-13);
        assert_eq!(dp, c(0.0, 0.0));
    }

    #[test]
    fn reduced_gradient_matches_finite_differences() {
        let s = random_state(3, 21).unwrap();
        let h = 1e-6;
        let r = s.reduced(1.3, -0.4, 0.8);
        let fx = (s.reduced(1.3 + h, -0.4, 0.8).value - s.reduced(1.3 - h, -0.4, 0.8).value) / (2.0 * h);
        let fy = (s.reduced(1.3, -0.4 + h, 0.8).value - s.reduced(1.3, -0.4 - h, 0.8).value) / (2.0 * h);
        assert!((r.dx - fx).norm() < 1e-7);
        assert!((r.dy - fy).norm() < 1e-7);
    }

    #[test]
    fn random_states_are_deterministic_and_normalized() {
        let a = random_state(2, 42).unwrap();
        let b = random_state(2, 42).unwrap();
        assert_eq!(a, b);
        assert!((a.norm_sq() - 1.0).abs() < 1e-12);
        assert_ne!(a, random_state(2, 43).unwrap());
    }

    #[test]
    fn m1_magnitude_ordering_is_even() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let larger = (0..n)
            .filter(|_| {
                let s = random_state_with(1, &mut rng).unwrap();
                s.get(1, 0).norm() > s.get(0, 1).norm()
            })
            .count();
        let frac = larger as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn normalization_is_enforced() {
        let err = OscillatorState::new(1, vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(err, Err(Error::NotNormalized { .. })));
        let err = OscillatorState::new(1, vec![c(1.0, 0.0)]);
        assert!(matches!(err, Err(Error::InvalidState(_))));
    }

    #[test]
    fn json_round_trip() {
        let s = random_state(3, 8).unwrap();
        for basis in [Basis::Angular, Basis::Cartesian] {
            let back = OscillatorState::from_json(&s.to_json(basis)).unwrap();
            for (a, b) in s.coeffs().iter().zip(back.coeffs()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
        assert!(matches!(
            OscillatorState::from_json("{\"basis\":\"polar\"}"),
            Err(Error::StateFile(_))
        ));
    }

    #[test]
    fn fine_tuning_flag() {
        let s = OscillatorState::from_entries(1, &[((1, 0), c(1.0, 0.0)), ((0, 1), c(1.0, 0.0))]).unwrap();
        assert!(s.is_fine_tuned());
        assert!(!random_state(2, 1).unwrap().is_fine_tuned());
    }

    #[test]
    fn phi_range() {
        let p = Configuration::new(-1.0, 0.0).phi();
        assert!((-PI..PI).contains(&p));
        assert_relative_eq!(Configuration::new(0.0, 2.0).phi(), PI / 2.0);
    }
}
