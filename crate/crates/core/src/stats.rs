//! Sample statistics used by the ensemble experiments.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e + 1 < idx.len() && x[idx[e + 1]] == x[idx[k]] {
            e += 1;
        }
        let avg = (k + e) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=e] {
            r[i] = avg;
        }
        k = e + 1;
    }
    r
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

pub fn normal_cdf(x: f64, mu: f64, sigma: f64) -> f64 {
    0.5 * (1.0 + erf((x - mu) / (sigma * std::f64::consts::SQRT_2)))
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Fixed-edge histogram normalized as a density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Samples that fell inside the edges.
    pub total: usize,
    /// All samples offered, including those outside.
    pub samples: usize,
}

impl Histogram {
    pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
        (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect()
    }

    pub fn new(sample: &[f64], edges: Vec<f64>) -> Self {
        let bins = edges.len() - 1;
        let lo = edges[0];
        let width = (edges[bins] - lo) / bins as f64;
        let mut counts = vec![0; bins];
        let mut total = 0;
        for &v in sample {
            let k = ((v - lo) / width).floor();
            if k >= 0.0 && (k as usize) < bins {
                counts[k as usize] += 1;
                total += 1;
            }
        }
        Self {
            edges,
            counts,
            total,
            samples: sample.len(),
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Density relative to all offered samples.
    pub fn density(&self) -> Vec<f64> {
        self.edges
            .windows(2)
            .zip(&self.counts)
            .map(|(w, c)| *c as f64 / (self.samples as f64 * (w[1] - w[0])))
            .collect()
    }

    /// `Σ |a − b| Δ` between two histograms on the same edges.
    pub fn l1_distance(&self, other: &Histogram) -> f64 {
        self.density()
            .iter()
            .zip(other.density())
            .zip(self.edges.windows(2))
            .map(|((a, b), w)| (a - b).abs() * (w[1] - w[0]))
            .sum()
    }
}

/// Gaussian kernel density estimate at the given points.
pub fn kde(sample: &[f64], bandwidth: f64, at: &[f64]) -> Vec<f64> {
    let norm = 1.0 / (sample.len() as f64 * bandwidth * (2.0 * PI).sqrt());
    at.iter()
        .map(|&x| sample.iter().map(|&s| (-0.5 * ((x - s) / bandwidth).powi(2)).exp()).sum::<f64>() * norm)
        .collect()
}

/// Number of strict local maxima of a KDE evaluated on a uniform mesh.
pub fn kde_peak_count(sample: &[f64], bandwidth: f64, mesh: usize) -> usize {
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * bandwidth;
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * bandwidth;
    let xs: Vec<f64> = (0..mesh).map(|k| lo + (hi - lo) * k as f64 / (mesh - 1) as f64).collect();
    let d = kde(sample, bandwidth, &xs);
    d.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spearman_with_ties() {
        assert_relative_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_relative_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn ks_against_uniform() {
        let s: Vec<f64> = (0..100).map(|k| (k as f64 + 0.5) / 100.0).collect();
        assert!(ks_statistic(&s, |x| x.clamp(0.0, 1.0)) <= 0.005 + 1e-12);
        assert_relative_eq!(ks_two_sample(&s, &s), 0.0);
        let shifted: Vec<f64> = s.iter().map(|v| v + 0.5).collect();
        assert_relative_eq!(ks_two_sample(&s, &shifted), 0.5, epsilon = 0.011);
    }

    #[test]
    fn normal_cdf_values() {
        assert_relative_eq!(normal_cdf(0.0, 0.0, 1.0), 0.5);
        assert_relative_eq!(normal_cdf(1.0, 0.0, 1.0), 0.841_344_746_068_543, max_relative = 1e-10);
    }

    #[test]
    fn bimodal_peaks() {
        let mut s: Vec<f64> = (0..200).map(|k| -2.0 + 0.3 * ((k as f64) / 200.0 - 0.5)).collect();
        s.extend((0..200).map(|k| 2.0 + 0.3 * ((k as f64) / 200.0 - 0.5)));
        assert_eq!(kde_peak_count(&s, 0.2, 400), 2);
    }

    #[test]
    fn histogram_density_integrates() {
        let s: Vec<f64> = (0..1000).map(|k| k as f64 / 1000.0).collect();
        let h = Histogram::new(&s, Histogram::uniform_edges(0.0, 1.0, 10));
        let total: f64 = h.density().iter().map(|d| d * 0.1).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
    }
}
