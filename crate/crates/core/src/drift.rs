//! One-period displacement ("drift") fields and their classification.
//!
//! Each grid point is carried along its trajectory for one wave-function
//! period `T = 2π`; the net change in `η` and in the continuous polar angle is
//! recorded. Far from the bulk these displacements are small and smooth, and
//! their angular pattern falls into a few types.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::{guidance_rhs, integrate_endpoint, IntegratorSettings};
use crate::ode::{Integrator, Tolerances};
use crate::oscillator::{Configuration, OscillatorState};

/// One wave-function period in rescaled time.
pub const PERIOD: f64 = 2.0 * PI;

/// Ring averages with magnitude at or below this are treated as zero.
pub const CROSSING_FLOOR: f64 = 1e-6;

/// Radial displacement treated as no motion; round-off on a stationary
/// trajectory stays near 1e-15.
pub const RADIAL_FLOOR: f64 = 1e-12;

/// Largest fraction of masked cells a usable field may have.
pub const MAX_MASKED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub eta_min: f64,
    pub eta_max: f64,
    pub n_eta: usize,
    pub n_phi: usize,
}

impl Default for PolarGrid {
    fn default() -> Self {
        Self {
            eta_min: 4.0,
            eta_max: 20.0,
            n_eta: 100,
            n_phi: 100,
        }
    }
}

impl PolarGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_min > 0.0 && self.eta_max > self.eta_min) || self.n_eta < 2 || self.n_phi < 4 {
            return Err(Error::InvalidParameter(format!("unusable drift grid {self:?}")));
        }
        Ok(())
    }

    /// Radii include both ends.
    pub fn eta(&self, i: usize) -> f64 {
        self.eta_min + (self.eta_max - self.eta_min) * i as f64 / (self.n_eta - 1) as f64
    }

    pub fn phi(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n_phi as f64
    }

    pub fn len(&self) -> usize {
        self.n_eta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Integrator settings for drift work.
///
/// The far field is smooth on the scale of a period, so the step cap is looser
/// than the trajectory default; tolerances are unchanged.
pub fn drift_settings() -> IntegratorSettings {
    IntegratorSettings {
        tolerances: Tolerances {
            max_step: PERIOD / 100.0,
            ..Tolerances::default()
        },
        ..IntegratorSettings::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftType {
    Type0,
    Type1,
    Type2,
    Unclassified,
}

impl DriftType {
    pub fn name(&self) -> &'static str {
        match self {
            DriftType::Type0 => "type0",
            DriftType::Type1 => "type1",
            DriftType::Type2 => "type2",
            DriftType::Unclassified => "unclassified",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub phi: f64,
    /// Flow converges on the axis (ring average goes from positive to negative).
    pub attractive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub kind: DriftType,
    pub sign_changes: usize,
    pub axes: Vec<Axis>,
    /// Sign of the ring average when it never changes sign.
    pub rotation: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftField {
    pub grid: PolarGrid,
    /// Row-major by angle: entry `j * n_eta + i` is cell `(η_i, φ_j)`.
    pub d_eta: Vec<f64>,
    pub d_phi: Vec<f64>,
    pub masked: Vec<bool>,
    pub classification: Classification,
}

impl DriftField {
    pub fn masked_count(&self) -> usize {
        self.masked.iter().filter(|m| **m).count()
    }

    pub fn masked_fraction(&self) -> f64 {
        self.masked_count() as f64 / self.masked.len() as f64
    }

    /// Mean angular displacement over radius at each angle.
    pub fn ring_average(&self) -> Vec<f64> {
        ring_average(&self.grid, &self.d_phi, &self.masked)
    }
}

fn ring_average(grid: &PolarGrid, d_phi: &[f64], masked: &[bool]) -> Vec<f64> {
    (0..grid.n_phi)
        .map(|j| {
            let row = j * grid.n_eta..(j + 1) * grid.n_eta;
            let (sum, n) = d_phi[row.clone()]
                .iter()
                .zip(&masked[row])
                .filter(|(_, m)| !**m)
                .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        })
        .collect()
}

/// Builds the drift field; cells whose trajectory underflows are masked.
pub fn build_drift_field(state: &OscillatorState, grid: &PolarGrid, settings: &IntegratorSettings) -> Result<DriftField> {
    grid.validate()?;
    let cells: Vec<Result<Option<(f64, f64)>>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (j, i) = (k / grid.n_eta, k % grid.n_eta);
            let eta = grid.eta(i);
            let start = Configuration::from_polar(eta, grid.phi(j));
            match integrate_endpoint(state, start, 0.0, PERIOD, settings) {
                Ok((end, turned, _)) => Ok(Some((end.eta() - eta, turned))),
                Err(Error::StepUnderflow { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut d_eta = Vec::with_capacity(grid.len());
    let mut d_phi = Vec::with_capacity(grid.len());
    let mut masked = Vec::with_capacity(grid.len());
    for c in cells {
        match c? {
            Some((a, b)) => {
                d_eta.push(a);
                d_phi.push(b);
                masked.push(false);
            }
            None => {
                d_eta.push(0.0);
                d_phi.push(0.0);
                masked.push(true);
            }
        }
    }
    let bad = masked.iter().filter(|m| **m).count();
    if bad as f64 > MAX_MASKED_FRACTION * grid.len() as f64 {
        return Err(Error::BuildFailed {
            masked: bad,
            total: grid.len(),
        });
    }
    let classification = classify_ring(&grid.phis(), &ring_average(grid, &d_phi, &masked));
    Ok(DriftField {
        grid: *grid,
        d_eta,
        d_phi,
        masked,
        classification,
    })
}

impl PolarGrid {
    fn phis(&self) -> Vec<f64> {
        (0..self.n_phi).map(|j| self.phi(j)).collect()
    }
}

/// Re-derives the classification from the stored displacements.
pub fn classify(field: &DriftField) -> Classification {
    classify_ring(&field.grid.phis(), &field.ring_average())
}

/// Counts cyclic sign changes of a ring-averaged angular drift.
///
/// A central axis is a line through the origin, so it crosses the ring twice:
/// one attractive and one repulsive axis give four sign changes, two of each
/// give eight.
pub fn classify_ring(phis: &[f64], avg: &[f64]) -> Classification {
    let significant: Vec<(f64, f64)> = phis
        .iter()
        .zip(avg)
        .filter(|(_, a)| a.abs() > CROSSING_FLOOR)
        .map(|(p, a)| (*p, *a))
        .collect();
    if significant.is_empty() {
        return Classification {
            kind: DriftType::Unclassified,
            sign_changes: 0,
            axes: Vec::new(),
            rotation: 0,
        };
    }
    let n = significant.len();
    let mut axes = Vec::new();
    for k in 0..n {
        let (p0, a0) = significant[k];
        let (mut p1, a1) = significant[(k + 1) % n];
        if a0.signum() != a1.signum() {
            if p1 <= p0 {
                p1 += 2.0 * PI;
            }
            let phi = (p0 + (p1 - p0) * a0 / (a0 - a1)).rem_euclid(2.0 * PI);
            axes.push(Axis {
                phi,
                attractive: a0 > 0.0,
            });
        }
    }
    let kind = match axes.len() {
        0 => DriftType::Type0,
        4 => DriftType::Type1,
        8 => DriftType::Type2,
        _ => DriftType::Unclassified,
    };
    let rotation = if axes.is_empty() { significant[0].1.signum() as i8 } else { 0 };
    Classification {
        kind,
        sign_changes: axes.len(),
        axes,
        rotation,
    }
}

/// Area-weighted fractions of unmasked cells drifting inward and outward.
/// Radial displacements within `RADIAL_FLOOR` of zero count as neither.
pub fn radial_balance(field: &DriftField) -> (f64, f64) {
    let mut inward = 0.0;
    let mut outward = 0.0;
    let mut total = 0.0;
    for j in 0..field.grid.n_phi {
        for i in 0..field.grid.n_eta {
            let k = j * field.grid.n_eta + i;
            if field.masked[k] {
                continue;
            }
            let w = field.grid.eta(i);
            total += w;
            if field.d_eta[k] < -RADIAL_FLOOR {
                inward += w;
            } else if field.d_eta[k] > RADIAL_FLOOR {
                outward += w;
            }
        }
    }
    if total == 0.0 {
        (0.0, 0.0)
    } else {
        (inward / total, outward / total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongDrift {
    pub periods: usize,
    pub initial_eta: Vec<f64>,
    /// `None` where the trajectory failed.
    pub final_eta: Vec<Option<f64>>,
}

impl LongDrift {
    pub fn failures(&self) -> usize {
        self.final_eta.iter().filter(|e| e.is_none()).count()
    }

    /// Median of `η_final − η_initial` over surviving trajectories.
    pub fn median_shift(&self) -> Option<f64> {
        let mut d: Vec<f64> = self
            .initial_eta
            .iter()
            .zip(&self.final_eta)
            .filter_map(|(a, b)| b.map(|b| b - a))
            .collect();
        median(&mut d)
    }

    pub fn initial_histogram(&self, edges: &[f64]) -> Vec<usize> {
        histogram(self.initial_eta.iter().copied(), edges)
    }

    pub fn final_histogram(&self, edges: &[f64]) -> Vec<usize> {
        histogram(self.final_eta.iter().flatten().copied(), edges)
    }
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn histogram(values: impl Iterator<Item = f64>, edges: &[f64]) -> Vec<usize> {
    let mut counts = vec![0; edges.len().saturating_sub(1)];
    for v in values {
        if let Some(k) = edges.windows(2).position(|w| v >= w[0] && v < w[1]) {
            counts[k] += 1;
        }
    }
    counts
}

/// Evolves `n_points` trajectories started uniformly in `η ∈ eta_range`,
/// `φ ∈ [0, 2π)` for a whole number of periods.
pub fn long_drift(
    state: &OscillatorState,
    n_points: usize,
    eta_range: (f64, f64),
    periods: usize,
    seed: u64,
    settings: &IntegratorSettings,
) -> Result<LongDrift> {
    if !(eta_range.1 > eta_range.0 && eta_range.0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("bad radius range {eta_range:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<(f64, f64)> = (0..n_points)
        .map(|_| {
            let eta = rng.gen_range(eta_range.0..eta_range.1);
            let phi = rng.gen_range(0.0..2.0 * PI);
            (eta, phi)
        })
        .collect();
    let final_eta: Vec<Option<f64>> = starts
        .par_iter()
        .map(|&(eta, phi)| {
            let c = Configuration::from_polar(eta, phi);
            let rhs = guidance_rhs(state, settings.node_guard);
            let mut integ = Integrator::new(rhs, 0.0, [c.qx, c.qy], settings.tolerances).ok()?;
            for k in 1..=periods {
                integ.advance_to(k as f64 * PERIOD, |_, _| {}).ok()?;
            }
            let y = integ.y();
            Some(y[0].hypot(y[1]))
        })
        .collect();
    Ok(LongDrift {
        periods,
        initial_eta: starts.iter().map(|s| s.0).collect(),
        final_eta,
    })
}

/// Angular displacement of a single start point over one period.
pub fn cell_drift(state: &OscillatorState, eta: f64, phi: f64, settings: &IntegratorSettings) -> Result<(f64, f64)> {
    let start = Configuration::from_polar(eta, phi);
    let (end, turned, _) = integrate_endpoint(state, start, 0.0, PERIOD, settings)?;
    Ok((end.eta() - eta, turned))
}
