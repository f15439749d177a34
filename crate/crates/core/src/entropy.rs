//! Entropy functionals and the discrete information-conservation check.
//!
//! Natural logarithms throughout. The coarse-grained `H̄` is a relative
//! entropy of `ρ` against `|ψ|²`: non-negative, zero at equilibrium.

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DensityGrid;

const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    p: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("probabilities must be finite and non-negative".into()));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidParameter(format!("probabilities sum to {s}")));
        }
        Ok(Self { p })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            p: vec![1.0 / n as f64; n],
        }
    }

    pub fn delta(n: usize, k: usize) -> Self {
        let mut p = vec![0.0; n];
        p[k] = 1.0;
        Self { p }
    }

    /// Uniform on the probability simplex.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let s: f64 = w.iter().sum();
        Self {
            p: w.iter().map(|v| v / s).collect(),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// `−Σ p ln p` with `0 ln 0 = 0`.
pub fn discrete_entropy(p: &DiscreteDistribution) -> f64 {
    -p.p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// Column-stochastic matrix acting as `p′ = T p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    n: usize,
    /// Row-major, `entries[i * n + j] = T_ij`.
    entries: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n || n == 0 {
            return Err(Error::InvalidParameter(format!("expected {} entries for n = {n}", n * n)));
        }
        if entries.iter().any(|v| !(-SUM_TOL..=1.0 + SUM_TOL).contains(v)) {
            return Err(Error::InvalidParameter("entries must lie in [0, 1]".into()));
        }
        for j in 0..n {
            let s: f64 = (0..n).map(|i| entries[i * n + j]).sum();
            if (s - 1.0).abs() > SUM_TOL {
                return Err(Error::InvalidParameter(format!("column {j} sums to {s}")));
            }
        }
        Ok(Self { n, entries })
    }

    /// Sends state `j` to state `image[j]`.
    pub fn from_map(image: &[usize]) -> Result<Self> {
        let n = image.len();
        let mut e = vec![0.0; n * n];
        for (j, &i) in image.iter().enumerate() {
            if i >= n {
                return Err(Error::InvalidParameter(format!("image {i} out of range")));
            }
            e[i * n + j] = 1.0;
        }
        Self::new(n, e)
    }

    /// Random column-stochastic matrix; each column uniform on the simplex.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut e = vec![0.0; n * n];
        for j in 0..n {
            let col = DiscreteDistribution::random(n, rng);
            for i in 0..n {
                e[i * n + j] = col.p[i];
            }
        }
        Self { n, entries: e }
    }

    /// Random permutation matrix.
    pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        use rand::seq::SliceRandom;
        let mut image: Vec<usize> = (0..n).collect();
        image.shuffle(rng);
        Self::from_map(&image).expect("a permutation is a valid map")
    }

    /// Random 0/1 matrix from an arbitrary (usually non-injective) map.
    pub fn random_map<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let image: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        Self::from_map(&image).expect("images are in range")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn apply(&self, p: &DiscreteDistribution) -> Result<DiscreteDistribution> {
        if p.len() != self.n {
            return Err(Error::InvalidParameter("dimension mismatch".into()));
        }
        let out: Vec<f64> = (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * p.p[j]).sum::<f64>().max(0.0))
            .collect();
        let s: f64 = out.iter().sum();
        Ok(DiscreteDistribution {
            p: out.into_iter().map(|v| v / s).collect(),
        })
    }

    /// Every entry is 0 or 1 (within `1e-12`) and every row and column holds exactly one 1.
    pub fn is_permutation(&self) -> bool {
        let n = self.n;
        if self.entries.iter().any(|v| v.abs() > 1e-12 && (v - 1.0).abs() > 1e-12) {
            return false;
        }
        let ones = |it: &mut dyn Iterator<Item = f64>| it.filter(|v| (v - 1.0).abs() <= 1e-12).count() == 1;
        (0..n).all(|i| ones(&mut (0..n).map(|j| self.get(i, j)))) && (0..n).all(|j| ones(&mut (0..n).map(|i| self.get(i, j))))
    }
}

/// Whether `T` leaves the entropy of every sampled distribution unchanged.
///
/// Samples `trials` random distributions plus every point mass and the
/// uniform distribution. The verdict must coincide with
/// [`TransitionMatrix::is_permutation`]; a disagreement is reported as
/// [`Error::TheoremViolated`].
pub fn is_entropy_conserving(t: &TransitionMatrix, trials: usize, seed: u64) -> Result<bool> {
    if trials < 100 {
        return Err(Error::InvalidParameter("at least 100 trials are required".into()));
    }
    let n = t.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<DiscreteDistribution> = (0..n).map(|k| DiscreteDistribution::delta(n, k)).collect();
    samples.push(DiscreteDistribution::uniform(n));
    samples.extend((0..trials).map(|_| DiscreteDistribution::random(n, &mut rng)));
    let mut conserving = true;
    for p in &samples {
        let q = t.apply(p)?;
        if (discrete_entropy(&q) - discrete_entropy(p)).abs() > 1e-9 {
            conserving = false;
            break;
        }
    }
    if conserving != t.is_permutation() {
        return Err(Error::TheoremViolated);
    }
    Ok(conserving)
}

/// `−Σ ρ ln(ρ/m) ΔA`.
pub fn jaynes_entropy(rho: &DensityGrid, measure: &DensityGrid) -> Result<f64> {
    if !rho.same_layout(measure) {
        return Err(Error::InvalidParameter("grids differ in layout".into()));
    }
    let mut s = 0.0;
    for (k, (&r, &m)) in rho.values.iter().zip(&measure.values).enumerate() {
        if m < 1e-300 {
            if r > 1e-12 {
                return Err(Error::SupportMismatch { index: k });
            }
            continue;
        }
        if r > 0.0 {
            s -= r * (r / m).ln();
        }
    }
    Ok(s * rho.cell_area())
}

/// Blocks of `cells_x × cells_y` coarse cells over a density grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoarseGrain {
    pub cells_x: usize,
    pub cells_y: usize,
}

impl Default for CoarseGrain {
    fn default() -> Self {
        Self {
            cells_x: 32,
            cells_y: 32,
        }
    }
}

impl CoarseGrain {
    /// Block sizes in fine cells; each coarse cell must be a union of fine ones.
    fn blocks(&self, grid: &DensityGrid) -> Result<(usize, usize)> {
        if self.cells_x == 0 || self.cells_y == 0 || grid.nx % self.cells_x != 0 || grid.ny % self.cells_y != 0 {
            return Err(Error::InvalidParameter(format!(
                "{}×{} coarse cells do not tile a {}×{} grid",
                self.cells_x, self.cells_y, grid.nx, grid.ny
            )));
        }
        Ok((grid.nx / self.cells_x, grid.ny / self.cells_y))
    }

    /// Block means.
    pub fn average(&self, grid: &DensityGrid) -> Result<Vec<f64>> {
        let (bx, by) = self.blocks(grid)?;
        let mut out = vec![0.0; self.cells_x * self.cells_y];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                out[(j / by) * self.cells_x + i / bx] += grid.get(i, j);
            }
        }
        let n = (bx * by) as f64;
        out.iter_mut().for_each(|v| *v /= n);
        Ok(out)
    }
}

/// `H̄ = Σ ρ̄ ln(ρ̄/ψ̄²) ΔA` over coarse cells.
pub fn coarse_grained_h(rho: &DensityGrid, psi_sq: &DensityGrid, cg: &CoarseGrain) -> Result<f64> {
    if !rho.same_layout(psi_sq) {
        return Err(Error::InvalidParameter("grids differ in layout".into()));
    }
    let r = cg.average(rho)?;
    let q = cg.average(psi_sq)?;
    let area = rho.cell_area() * (rho.nx / cg.cells_x * rho.ny / cg.cells_y) as f64;
    Ok(r.iter()
        .zip(&q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b.max(1e-300)).ln())
        .sum::<f64>()
        * area)
}

/// `H` on the fine grid itself.
pub fn fine_grained_h(rho: &DensityGrid, psi_sq: &DensityGrid) -> Result<f64> {
    coarse_grained_h(
        rho,
        psi_sq,
        &CoarseGrain {
            cells_x: rho.nx,
            cells_y: rho.ny,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Bounds;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn discrete_values() {
        assert_eq!(discrete_entropy(&DiscreteDistribution::delta(5, 2)), 0.0);
        assert_relative_eq!(discrete_entropy(&DiscreteDistribution::uniform(5)), 5f64.ln(), max_relative = 1e-14);
        let p = DiscreteDistribution::new(vec![0.5, 0.5, 0.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(discrete_entropy(&p), 2f64.ln());
    }

    #[test]
    fn laws_of_motion() {
        // Cyclic shift and a swap conserve; merging and splitting do not.
        let cyc = TransitionMatrix::from_map(&[1, 2, 3, 4, 0]).unwrap();
        assert!(is_entropy_conserving(&cyc, 200, 1).unwrap());
        let swap = TransitionMatrix::from_map(&[1, 0, 2, 3, 4]).unwrap();
        assert!(is_entropy_conserving(&swap, 200, 1).unwrap());
        let merge = TransitionMatrix::from_map(&[0, 0, 2, 3, 4]).unwrap();
        assert!(!is_entropy_conserving(&merge, 200, 1).unwrap());
        let split = TransitionMatrix::new(2, vec![0.5, 0.0, 0.5, 1.0]).unwrap();
        assert!(!is_entropy_conserving(&split, 200, 1).unwrap());
    }

    #[test]
    fn matrix_validation() {
        assert!(TransitionMatrix::new(2, vec![0.5, 0.5, 0.6, 0.5]).is_err());
        assert!(TransitionMatrix::new(2, vec![1.5, 0.0, -0.5, 1.0]).is_err());
        assert!(DiscreteDistribution::new(vec![0.3, 0.3]).is_err());
        assert!(is_entropy_conserving(&TransitionMatrix::from_map(&[0]).unwrap(), 10, 0).is_err());
    }

    fn gaussian(w: f64) -> impl Fn(f64, f64) -> f64 {
        move |x, y| (-(x * x + y * y) / (2.0 * w * w)).exp() / (2.0 * PI * w * w)
    }

    #[test]
    fn jaynes_cases() {
        let b = Bounds::square(6.0);
        let m = DensityGrid::from_fn(b, 120, 120, gaussian(1.0)).unwrap();
        assert!(jaynes_entropy(&m, &m).unwrap().abs() < 1e-14);

        let uni = DensityGrid::from_fn(b, 120, 120, |_, _| 1.0 / 144.0).unwrap();
        let half = DensityGrid::from_fn(b, 120, 120, |x, _| if x < 0.0 { 1.0 / 72.0 } else { 0.0 }).unwrap();
        assert_relative_eq!(jaynes_entropy(&half, &uni).unwrap(), -(2f64.ln()), max_relative = 1e-12);

        // ρ of width 1 against m of width 2: −KL = −2(ln 2 + 1/8 − 1/2) over both axes.
        let b = Bounds::square(12.0);
        let rho = DensityGrid::from_fn(b, 240, 240, gaussian(1.0)).unwrap();
        let wide = DensityGrid::from_fn(b, 240, 240, gaussian(2.0)).unwrap();
        let want = -2.0 * (2f64.ln() + 1.0 / 8.0 - 0.5);
        assert_relative_eq!(jaynes_entropy(&rho, &wide).unwrap(), want, max_relative = 1e-6);
    }

    #[test]
    fn support_mismatch() {
        let b = Bounds::square(1.0);
        let rho = DensityGrid::from_fn(b, 4, 4, |_, _| 0.25).unwrap();
        let m = DensityGrid::from_fn(b, 4, 4, |x, _| if x > 0.0 { 0.5 } else { 0.0 }).unwrap();
        assert!(matches!(jaynes_entropy(&rho, &m), Err(Error::SupportMismatch { .. })));
    }

    #[test]
    fn coarse_h_gaussian_orientations() {
        let b = Bounds::square(8.0);
        let w: f64 = 0.5;
        let narrow = DensityGrid::from_fn(b, 256, 256, gaussian(w)).unwrap();
        let unit = DensityGrid::from_fn(b, 256, 256, gaussian(1.0)).unwrap();
        let cg = CoarseGrain {
            cells_x: 256,
            cells_y: 256,
        };
        // ρ narrow against unit |ψ|².
        let forward = 2.0 * (w * w / 2.0 - 0.5 - w.ln());
        assert_relative_eq!(coarse_grained_h(&narrow, &unit, &cg).unwrap(), forward, max_relative = 1e-6);
        // Reverse orientation gives the (1/w² − 1)/2 + ln w form per axis.
        let reverse = 2.0 * ((1.0 / (w * w) - 1.0) / 2.0 + w.ln());
        assert_relative_eq!(coarse_grained_h(&unit, &narrow, &cg).unwrap(), reverse, max_relative = 1e-6);
        assert!(coarse_grained_h(&unit, &unit, &CoarseGrain::default()).unwrap().abs() < 1e-14);
    }

    #[test]
    fn coarse_graining_does_not_exceed_fine() {
        let b = Bounds::square(8.0);
        let rho = DensityGrid::from_fn(b, 64, 64, |x, y| gaussian(0.7)(x - 1.0, y)).unwrap();
        let psi = DensityGrid::from_fn(b, 64, 64, gaussian(1.0)).unwrap();
        let fine = fine_grained_h(&rho, &psi).unwrap();
        let coarse = coarse_grained_h(&rho, &psi, &CoarseGrain { cells_x: 16, cells_y: 16 }).unwrap();
        assert!(coarse <= fine + 1e-12 && coarse >= 0.0);
        assert!(coarse_grained_h(&rho, &psi, &CoarseGrain { cells_x: 7, cells_y: 7 }).is_err());
    }
}
