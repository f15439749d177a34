//! Nodes of the wave function and their vorticity.
//!
//! The total vorticity follows from the top energy shell alone: far from the
//! bulk `ψ̃ ≈ η^m e^{−imφ} g(e^{2iφ})` with
//! `g(z) = Σ_k C_{k,m−k} z^k / √(k!(m−k)!)`, so the phase winds by
//! `2π(2·#roots inside the unit disk − m)` around a large circle.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Bounds;
use crate::oscillator::{basis, mode_labels, random_state_with, Configuration, OscillatorState};

/// Roots closer than this to the unit circle make the count ambiguous.
pub const CIRCLE_TOL: f64 = 1e-9;
const CLUSTER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Maximal,
    Zero,
    Intermediate,
    Indeterminate,
}

impl Category {
    pub fn name(&self) -> &'static str {
        match self {
            Category::Maximal => "maximal",
            Category::Zero => "zero",
            Category::Intermediate => "intermediate",
            Category::Indeterminate => "indeterminate",
        }
    }
}

/// Total vorticity in units of `2π`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VorticityClass {
    pub winding: i64,
    pub category: Category,
}

impl VorticityClass {
    pub fn total(&self) -> f64 {
        2.0 * PI * self.winding as f64
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Coefficients of `g(z)`, ascending.
pub fn top_polynomial(state: &OscillatorState) -> Vec<Complex64> {
    let m = state.m();
    state
        .top_shell()
        .iter()
        .enumerate()
        .map(|(k, c)| c / (factorial(k) * factorial(m - k)).sqrt())
        .collect()
}

/// Roots of a complex polynomial (ascending coefficients) from the companion matrix.
///
/// Exact zero roots are split off first; if the Schur iteration stalls the
/// roots are polished by Aberth iteration instead.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let Some(deg) = coeffs.iter().rposition(|c| c.norm() > 0.0) else {
        return Vec::new();
    };
    let zeros = coeffs.iter().position(|c| c.norm() > 0.0).unwrap_or(0);
    let mut roots = vec![Complex64::new(0.0, 0.0); zeros];
    let reduced = &coeffs[zeros..=deg];
    let d = reduced.len() - 1;
    if d == 0 {
        return roots;
    }
    let lead = reduced[d];
    let mut comp = DMatrix::<Complex64>::zeros(d, d);
    for i in 1..d {
        comp[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..d {
        comp[(i, d - 1)] = -reduced[i] / lead;
    }
    match Schur::try_new(comp, f64::EPSILON, 10_000).and_then(|s| s.eigenvalues()) {
        Some(v) => roots.extend(v.iter().copied()),
        None => roots.extend(aberth(reduced)),
    }
    roots
}

fn horner(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

fn aberth(coeffs: &[Complex64]) -> Vec<Complex64> {
    let d = coeffs.len() - 1;
    let scale = coeffs
        .iter()
        .take(d)
        .map(|c| (c / coeffs[d]).norm())
        .fold(0.0, f64::max)
        + 1.0;
    let mut z: Vec<Complex64> = (0..d)
        .map(|k| Complex64::from_polar(0.5 * scale, 2.0 * PI * (k as f64 + 0.25) / d as f64))
        .collect();
    for _ in 0..500 {
        let mut moved: f64 = 0.0;
        for i in 0..d {
            let (p, dp) = horner(coeffs, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..d).filter(|&j| j != i).map(|j| (z[i] - z[j]).inv()).sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            z[i] -= step;
            moved = moved.max(step.norm() / z[i].norm().max(1.0));
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

/// Groups roots closer than the clustering tolerance; returns `(centre, multiplicity)`.
fn cluster(roots: &[Complex64]) -> Vec<(Complex64, usize)> {
    let mut label: Vec<usize> = (0..roots.len()).collect();
    for i in 0..roots.len() {
        for j in 0..i {
            if (roots[i] - roots[j]).norm() < CLUSTER_TOL {
                let (a, b) = (label[i], label[j]);
                label.iter_mut().filter(|l| **l == a).for_each(|l| *l = b);
            }
        }
    }
    let mut out: Vec<(usize, Complex64, usize)> = Vec::new();
    for (r, l) in roots.iter().zip(&label) {
        match out.iter_mut().find(|(k, _, _)| k == l) {
            Some(entry) => {
                entry.1 += r;
                entry.2 += 1;
            }
            None => out.push((*l, *r, 1)),
        }
    }
    out.into_iter().map(|(_, s, n)| (s / n as f64, n)).collect()
}

fn categorize(winding: i64, m: usize) -> Category {
    if winding.unsigned_abs() as usize == m && m > 0 {
        Category::Maximal
    } else if winding == 0 {
        Category::Zero
    } else {
        Category::Intermediate
    }
}

/// Total vorticity from the root count of the top-shell polynomial.
pub fn total_vorticity(state: &OscillatorState) -> Result<VorticityClass> {
    let g = top_polynomial(state);
    if g.iter().all(|c| c.norm() == 0.0) {
        return Err(Error::EmptyTopShell);
    }
    let m = state.m() as i64;
    let mut inside = 0i64;
    for (z, mult) in cluster(&polynomial_roots(&g)) {
        let r = z.norm();
        if (r - 1.0).abs() < CIRCLE_TOL {
            return Err(Error::Indeterminate { modulus: r });
        }
        if r < 1.0 {
            inside += mult as i64;
        }
    }
    let winding = 2 * inside - m;
    Ok(VorticityClass {
        winding,
        category: categorize(winding, state.m()),
    })
}

/// Like [`total_vorticity`] but folds an ambiguous root count into the
/// `Indeterminate` category (winding reported as 0).
pub fn classify_vorticity(state: &OscillatorState) -> Result<VorticityClass> {
    match total_vorticity(state) {
        Err(Error::Indeterminate { .. }) => Ok(VorticityClass {
            winding: 0,
            category: Category::Indeterminate,
        }),
        other => other,
    }
}

/// Phase winding of `ψ` (in units of `2π`) around a circle.
///
/// Starts with `samples` points and doubles until no wrapped increment exceeds
/// `π/2`, up to `2^20` points.
pub fn winding(state: &OscillatorState, t: f64, center: Configuration, radius: f64, samples: usize) -> Result<i64> {
    let mut n = samples.max(8);
    loop {
        let mut total = 0.0;
        let mut resolved = true;
        let at = |k: usize| {
            let a = 2.0 * PI * k as f64 / n as f64;
            state
                .reduced(center.qx + radius * a.cos(), center.qy + radius * a.sin(), t)
                .value
        };
        let first = at(0);
        let mut prev = first;
        for k in 1..=n {
            let v = if k == n { first } else { at(k) };
            if v.norm_sqr() == 0.0 {
                return Err(Error::AtNode {
                    x: center.qx,
                    y: center.qy,
                });
            }
            let d = (v / prev).arg();
            if d.abs() > PI / 2.0 {
                resolved = false;
                break;
            }
            total += d;
            prev = v;
        }
        if resolved {
            return Ok((total / (2.0 * PI)).round() as i64);
        }
        if n >= 1 << 20 {
            return Err(Error::Indeterminate { modulus: radius });
        }
        n *= 2;
    }
}

/// Radius beyond which the top shell dominates every lower shell, so that no
/// node can lie outside it at any time.
pub fn node_radius_bound(state: &OscillatorState) -> f64 {
    let m = state.m();
    let g = top_polynomial(state);
    let gamma = (0..4096)
        .map(|k| {
            let z = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / 4096.0);
            g.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c).norm()
        })
        .fold(f64::INFINITY, f64::min);
    // Grid minimum can overshoot the true minimum; back off by the Lipschitz slack.
    let lip: f64 = g.iter().enumerate().map(|(k, c)| k as f64 * c.norm()).sum::<f64>();
    let gamma = (gamma - lip * PI / 4096.0).max(0.0);
    if gamma == 0.0 {
        return f64::INFINITY;
    }
    // |lower shells| ≤ Σ_n Σ_j b_{n,j} r^j with b from absolute polynomial coefficients.
    let mut bound = vec![0.0; m + 1];
    for (idx, c) in state.coeffs().iter().enumerate() {
        let (nd, ng) = mode_labels(idx);
        if nd + ng == m {
            continue;
        }
        for (j, a) in basis::radial_poly(nd, ng).coeffs().iter().enumerate() {
            bound[j] += c.norm() * a.abs();
        }
    }
    let lower = |r: f64| bound.iter().rev().fold(0.0, |acc, b| acc * r + b);
    let mut r: f64 = 1.0;
    while gamma * r.powi(m as i32) <= lower(r) {
        r *= 1.05;
        if r > 1e6 {
            return f64::INFINITY;
        }
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub config: Configuration,
    /// Vorticity in units of `2π`.
    pub vorticity: i64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Creation,
    Annihilation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEvent {
    pub t: f64,
    pub kind: EventKind,
    pub positions: [Configuration; 2],
    pub vorticities: [i64; 2],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeSet {
    pub nodes: Vec<Node>,
    pub events: Vec<PairEvent>,
}

impl NodeSet {
    pub fn total_vorticity(&self) -> i64 {
        self.nodes.iter().map(|n| n.vorticity).sum()
    }
}

/// Node search controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeSearch {
    pub bounds: Bounds,
    pub grid: usize,
    pub dedupe: f64,
    pub winding_radius: f64,
}

impl NodeSearch {
    pub fn new(bounds: Bounds) -> Self {
        Self {
            bounds,
            grid: 256,
            dedupe: 1e-6,
            winding_radius: 1e-3,
        }
    }

    /// A square box holding every node of the state at all times, when finite.
    pub fn enclosing(state: &OscillatorState) -> Self {
        let r = node_radius_bound(state);
        let half = if r.is_finite() { (1.05 * r).max(2.0) } else { 8.0 };
        Self::new(Bounds::square(half))
    }
}

fn newton(state: &OscillatorState, t: f64, mut x: f64, mut y: f64) -> Option<(f64, f64)> {
    for _ in 0..60 {
        let r = state.reduced(x, y, t);
        let (a, b, c, d) = (r.dx.re, r.dy.re, r.dx.im, r.dy.im);
        let det = a * d - b * c;
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let (fr, fi) = (r.value.re, r.value.im);
        let sx = (d * fr - b * fi) / det;
        let sy = (-c * fr + a * fi) / det;
        x -= sx;
        y -= sy;
        if sx.hypot(sy) < 1e-14 * (1.0 + x.hypot(y)) {
            let r = state.reduced(x, y, t);
            if r.value.norm_sqr() <= 1e-20 * r.envelope.max(1e-300) {
                return Some((x, y));
            }
            return None;
        }
    }
    let r = state.reduced(x, y, t);
    (r.value.norm_sqr() <= 1e-20 * r.envelope.max(1e-300)).then_some((x, y))
}

fn sign_changes(vals: [f64; 4]) -> bool {
    let pos = vals.iter().any(|v| *v > 0.0);
    let neg = vals.iter().any(|v| *v < 0.0);
    pos && neg
}

fn grid_seeds(state: &OscillatorState, t: f64, search: &NodeSearch) -> Vec<(f64, f64)> {
    let n = search.grid;
    let b = search.bounds;
    let hx = (b.x_max - b.x_min) / n as f64;
    let hy = (b.y_max - b.y_min) / n as f64;
    let mut vals = vec![Complex64::new(0.0, 0.0); (n + 1) * (n + 1)];
    for j in 0..=n {
        for i in 0..=n {
            vals[j * (n + 1) + i] = state
                .reduced(b.x_min + i as f64 * hx, b.y_min + j as f64 * hy, t)
                .value;
        }
    }
    let mut seeds = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let corners = [
                vals[j * (n + 1) + i],
                vals[j * (n + 1) + i + 1],
                vals[(j + 1) * (n + 1) + i],
                vals[(j + 1) * (n + 1) + i + 1],
            ];
            if sign_changes(corners.map(|c| c.re)) && sign_changes(corners.map(|c| c.im)) {
                seeds.push((b.x_min + (i as f64 + 0.5) * hx, b.y_min + (j as f64 + 0.5) * hy));
            }
        }
    }
    seeds
}

fn refine(state: &OscillatorState, t: f64, seeds: &[(f64, f64)], search: &NodeSearch) -> Result<Vec<Node>> {
    let b = search.bounds;
    let slack = 2.0 * (b.x_max - b.x_min) / search.grid as f64;
    let mut found: Vec<(f64, f64)> = Vec::new();
    for &(sx, sy) in seeds {
        let Some((x, y)) = newton(state, t, sx, sy) else {
            continue;
        };
        if x < b.x_min - slack || x > b.x_max + slack || y < b.y_min - slack || y > b.y_max + slack {
            continue;
        }
        if found.iter().all(|&(fx, fy)| (fx - x).hypot(fy - y) > search.dedupe) {
            found.push((x, y));
        }
    }
    let mut nodes = Vec::with_capacity(found.len());
    for (k, &(x, y)) in found.iter().enumerate() {
        let nearest = found
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, &(a, c))| (a - x).hypot(c - y))
            .fold(f64::INFINITY, f64::min);
        let radius = search.winding_radius.min(0.3 * nearest);
        let centre = Configuration::new(x, y);
        nodes.push(Node {
            config: centre,
            vorticity: winding(state, t, centre, radius, 256)?,
            t,
        });
    }
    Ok(nodes)
}

/// All nodes in the search box at time `t`.
pub fn find_nodes(state: &OscillatorState, t: f64, search: &NodeSearch) -> Result<NodeSet> {
    search.bounds.validate()?;
    let seeds = grid_seeds(state, t, search);
    Ok(NodeSet {
        nodes: refine(state, t, &seeds, search)?,
        events: Vec::new(),
    })
}

/// Tracking controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSettings {
    pub dt: f64,
    /// Full grid scan every this many steps; Newton continuation in between.
    pub rescan_every: usize,
    /// Largest displacement accepted as continuation of the same node.
    pub match_radius: f64,
}

impl Default for TrackSettings {
    fn default() -> Self {
        Self {
            dt: 2.0 * PI / 2000.0,
            rescan_every: 1,
            match_radius: 0.5,
        }
    }
}

/// Node sets from `t0` to `t1` with pair events attached to the step where they occur.
pub fn track_nodes(
    state: &OscillatorState,
    t0: f64,
    t1: f64,
    settings: &TrackSettings,
    search: &NodeSearch,
) -> Result<Vec<NodeSet>> {
    if !(settings.dt > 0.0) || t1 < t0 {
        return Err(Error::InvalidParameter("tracking needs dt > 0 and t1 ≥ t0".into()));
    }
    let steps = ((t1 - t0) / settings.dt).ceil().max(1.0) as usize;
    let mut out = vec![find_nodes(state, t0, search)?];
    for k in 1..=steps {
        let t = if k == steps { t1 } else { t0 + k as f64 * settings.dt };
        let prev = &out[out.len() - 1].nodes;
        let mut seeds: Vec<(f64, f64)> = prev.iter().map(|n| (n.config.qx, n.config.qy)).collect();
        if k % settings.rescan_every.max(1) == 0 || k == steps {
            seeds.extend(grid_seeds(state, t, search));
        }
        let current = refine(state, t, &seeds, search)?;
        let events = match_nodes(prev, &current, t, settings.match_radius)?;
        out.push(NodeSet {
            nodes: current,
            events,
        });
    }
    Ok(out)
}

fn match_nodes(prev: &[Node], current: &[Node], t: f64, radius: f64) -> Result<Vec<PairEvent>> {
    let mut used_prev = vec![false; prev.len()];
    let mut used_cur = vec![false; current.len()];
    // Greedy global nearest-pair matching over same-vorticity candidates.
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in prev.iter().enumerate() {
        for (j, c) in current.iter().enumerate() {
            if p.vorticity == c.vorticity {
                let d = (p.config.qx - c.config.qx).hypot(p.config.qy - c.config.qy);
                if d <= radius {
                    pairs.push((d, i, j));
                }
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for &(d, i, j) in &pairs {
        if used_prev[i] || used_cur[j] {
            continue;
        }
        // Another unused candidate almost as close makes the assignment ambiguous.
        let rival = pairs
            .iter()
            .any(|&(d2, i2, j2)| (i2 == i) != (j2 == j) && !used_prev[i2] && !used_cur[j2] && d2 < 1.01 * d && d > 1e-3);
        if rival {
            return Err(Error::TrackingLost {
                t,
                reason: format!("ambiguous continuation near ({:.4}, {:.4})", prev[i].config.qx, prev[i].config.qy),
            });
        }
        used_prev[i] = true;
        used_cur[j] = true;
    }
    let lost: Vec<&Node> = prev.iter().zip(&used_prev).filter(|(_, u)| !**u).map(|(n, _)| n).collect();
    let born: Vec<&Node> = current.iter().zip(&used_cur).filter(|(_, u)| !**u).map(|(n, _)| n).collect();
    let mut events = pair_up(&lost, EventKind::Annihilation, t)?;
    events.extend(pair_up(&born, EventKind::Creation, t)?);
    Ok(events)
}

fn pair_up(nodes: &[&Node], kind: EventKind, t: f64) -> Result<Vec<PairEvent>> {
    let mut left: Vec<&Node> = nodes.to_vec();
    let mut events = Vec::new();
    while let Some(a) = left.pop() {
        let partner = left
            .iter()
            .enumerate()
            .filter(|(_, b)| b.vorticity == -a.vorticity)
            .min_by(|x, y| {
                let dx = (x.1.config.qx - a.config.qx).hypot(x.1.config.qy - a.config.qy);
                let dy = (y.1.config.qx - a.config.qx).hypot(y.1.config.qy - a.config.qy);
                dx.total_cmp(&dy)
            })
            .map(|(k, _)| k);
        let Some(k) = partner else {
            return Err(Error::TrackingLost {
                t,
                reason: format!(
                    "unpaired node with vorticity {} at ({:.4}, {:.4})",
                    a.vorticity, a.config.qx, a.config.qy
                ),
            });
        };
        let b = left.remove(k);
        events.push(PairEvent {
            t,
            kind,
            positions: [a.config, b.config],
            vorticities: [a.vorticity, b.vorticity],
        });
    }
    Ok(events)
}

/// Which vorticity class [`generate_classified_states`] should keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wanted {
    Maximal,
    Zero,
}

#[derive(Debug, Clone)]
pub struct ClassifiedBatch {
    pub states: Vec<OscillatorState>,
    pub attempts: usize,
}

impl ClassifiedBatch {
    pub fn acceptance(&self) -> f64 {
        self.states.len() as f64 / self.attempts.max(1) as f64
    }
}

/// Rejection-samples random states until `count` match the wanted class.
pub fn generate_classified_states(m: usize, wanted: Wanted, count: usize, seed: u64) -> Result<ClassifiedBatch> {
    if wanted == Wanted::Zero && m % 2 == 1 {
        return Err(Error::ImpossibleCategory { m, category: "zero" });
    }
    let target = match wanted {
        Wanted::Maximal => Category::Maximal,
        Wanted::Zero => Category::Zero,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(count);
    let mut attempts = 0;
    while states.len() < count {
        attempts += 1;
        let s = random_state_with(m, &mut rng)?;
        if classify_vorticity(&s)?.category == target {
            states.push(s);
        }
    }
    Ok(ClassifiedBatch { states, attempts })
}

/// Windings of `n` random states at cutoff `m`, in draw order.
pub fn census(m: usize, n: usize, seed: u64) -> Result<Vec<VorticityClass>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| classify_vorticity(&random_state_with(m, &mut rng)?))
        .collect()
}
