use std::f64::consts::PI;

use approx::assert_relative_eq;
use bohm_lab::guidance::{integrate_endpoint, velocity_cartesian, IntegratorSettings};
use bohm_lab::oscillator::Reduced;
use bohm_lab::vorticity::{find_nodes, NodeSearch};
use bohm_lab::{random_state, Configuration, OscillatorState};
use num_complex::Complex64;
use proptest::prelude::*;

fn midpoint_norm(state: &OscillatorState, t: f64, half: f64, n: usize) -> f64 {
    let h = 2.0 * half / n as f64;
    let mut sum = 0.0;
    for j in 0..n {
        for i in 0..n {
            let c = Configuration::new(-half + (i as f64 + 0.5) * h, -half + (j as f64 + 0.5) * h);
            sum += state.psi(c, t).norm_sqr();
        }
    }
    sum * h * h
}

#[test]
fn born_density_integrates_to_one() {
    for (m, seed) in [(1, 3), (2, 4), (3, 5), (4, 6)] {
        let s = random_state(m, seed).unwrap();
        for t in [0.0, 1.3] {
            assert_relative_eq!(midpoint_norm(&s, t, 8.0, 320), 1.0, epsilon = 1e-8);
        }
    }
}

/// Central difference of the unwrapped phase.
fn phase_gradient(state: &OscillatorState, c: Configuration, t: f64) -> (f64, f64) {
    let h = 1e-5;
    let d = |dx: f64, dy: f64| {
        let a = state.psi(Configuration::new(c.qx + dx, c.qy + dy), t);
        let b = state.psi(Configuration::new(c.qx - dx, c.qy - dy), t);
        (a / b).arg() / (2.0 * h)
    };
    (d(h, 0.0), d(0.0, h))
}

#[test]
fn velocity_is_phase_gradient() {
    let s = random_state(3, 11).unwrap();
    for k in 0..40 {
        let c = Configuration::from_polar(0.3 + 0.1 * k as f64, 0.7 * k as f64);
        let t = 0.17 * k as f64;
        let (vx, vy) = velocity_cartesian(&s, c, t).unwrap();
        let (gx, gy) = phase_gradient(&s, c, t);
        let scale = 1.0 + vx.abs().max(vy.abs());
        assert!((vx - gx).abs() < 1e-5 * scale, "{k}: {vx} vs {gx}");
        assert!((vy - gy).abs() < 1e-5 * scale, "{k}: {vy} vs {gy}");
    }
}

#[test]
fn trajectories_are_reversible() {
    let settings = IntegratorSettings::default();
    for seed in 0..6 {
        let s = random_state(2, 100 + seed).unwrap();
        let start = Configuration::from_polar(1.0 + 0.4 * seed as f64, 1.1 * seed as f64);
        let (end, _, _) = integrate_endpoint(&s, start, 0.0, 2.0 * PI, &settings).unwrap();
        let (back, _, _) = integrate_endpoint(&s, end, 2.0 * PI, 0.0, &settings).unwrap();
        let err = (back.qx - start.qx).hypot(back.qy - start.qy);
        assert!(err < 1e-6, "seed {seed}: returned {err} away");
    }
}

#[test]
fn single_node_of_first_shell_superposition() {
    // With u₁(x)/u₀(x) = √2 x the node solves D₀₀ + e^{−iT}√2(D₁₀x + D₀₁y) = 0.
    let s = random_state(1, 21).unwrap();
    let d = s.to_cartesian();
    for t in [0.0, 0.9, 2.5] {
        let rhs = -d.get(0, 0) * Complex64::from_polar(1.0, t) / 2f64.sqrt();
        let (a, b) = (d.get(1, 0), d.get(0, 1));
        let det = a.re * b.im - b.re * a.im;
        let x = (rhs.re * b.im - b.re * rhs.im) / det;
        let y = (a.re * rhs.im - rhs.re * a.im) / det;
        let nodes = find_nodes(&s, t, &NodeSearch::enclosing(&s)).unwrap().nodes;
        assert_eq!(nodes.len(), 1, "t = {t}");
        let n = nodes[0].config;
        assert!((n.qx - x).hypot(n.qy - y) < 1e-8, "t = {t}: {n:?} vs ({x}, {y})");
        assert_eq!(nodes[0].vorticity.abs(), 1);
    }
}

#[test]
fn node_count_is_bounded_and_unit_charged() {
    for m in 1..=4 {
        for seed in 0..5 {
            let s = random_state(m, 40 + seed).unwrap();
            let search = NodeSearch::enclosing(&s);
            for t in [0.0, 1.0, 4.0] {
                let set = find_nodes(&s, t, &search).unwrap();
                assert!(set.nodes.len() <= m * m, "m = {m}: {} nodes", set.nodes.len());
                assert!(set.nodes.iter().all(|n| n.vorticity.abs() == 1));
            }
        }
    }
}

fn velocity_or_none(s: &OscillatorState, c: Configuration, t: f64) -> Option<(f64, f64)> {
    velocity_cartesian(s, c, t).ok()
}

fn reduced_mag(r: &Reduced) -> f64 {
    r.value.norm_sqr() / r.envelope
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn global_phase_leaves_velocity(seed in 0u64..10_000, alpha in 0.0..2.0 * PI, x in -4.0..4.0f64, y in -4.0..4.0f64, t in 0.0..7.0f64) {
        let s = random_state(3, seed).unwrap();
        let c = Configuration::new(x, y);
        prop_assume!(reduced_mag(&s.reduced(x, y, t)) > 1e-8);
        let shifted = s.with_global_phase(alpha);
        let (a, b) = (velocity_or_none(&s, c, t).unwrap(), velocity_or_none(&shifted, c, t).unwrap());
        prop_assert!((a.0 - b.0).abs() < 1e-9 * (1.0 + a.0.abs()));
        prop_assert!((a.1 - b.1).abs() < 1e-9 * (1.0 + a.1.abs()));
    }

    #[test]
    fn conjugation_mirrors_motion(seed in 0u64..10_000, x in -4.0..4.0f64, y in -4.0..4.0f64, t in 0.0..7.0f64) {
        // Conjugate coefficients give ψ(x, −y, −T)*, so vx flips sign under the mirror.
        let s = random_state(2, seed).unwrap();
        prop_assume!(reduced_mag(&s.reduced(x, -y, -t)) > 1e-8);
        let a = velocity_or_none(&s, Configuration::new(x, -y), -t).unwrap();
        let b = velocity_or_none(&s.conjugated(), Configuration::new(x, y), t).unwrap();
        prop_assert!((a.0 + b.0).abs() < 1e-9 * (1.0 + a.0.abs()));
        prop_assert!((a.1 - b.1).abs() < 1e-9 * (1.0 + a.1.abs()));
    }

    #[test]
    fn born_density_is_periodic(seed in 0u64..10_000, x in -4.0..4.0f64, y in -4.0..4.0f64, t in 0.0..7.0f64) {
        let s = random_state(4, seed).unwrap();
        let c = Configuration::new(x, y);
        let a = s.psi(c, t).norm_sqr();
        let b = s.psi(c, t + 2.0 * PI).norm_sqr();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }
}
