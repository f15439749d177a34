use std::f64::consts::PI;

use bohm_lab::drift::{build_drift_field, cell_drift, drift_settings, radial_balance, DriftType, PolarGrid};
use bohm_lab::guidance::integrate_endpoint;
use bohm_lab::oscillator::OscillatorState;
use bohm_lab::vorticity::{classify_vorticity, track_nodes, winding, NodeSearch, TrackSettings};
use bohm_lab::{random_state, Configuration};

fn small_grid(n: usize) -> PolarGrid {
    PolarGrid {
        n_eta: n,
        n_phi: n,
        ..PolarGrid::default()
    }
}

#[test]
fn far_winding_matches_root_count() {
    for m in 1..=4 {
        for seed in 0..10 {
            let s = random_state(m, 500 + seed).unwrap();
            let class = classify_vorticity(&s).unwrap();
            let w = winding(&s, 0.3, Configuration::new(0.0, 0.0), 1e4, 256).unwrap();
            assert_eq!(w, class.winding, "m = {m}, seed {seed}");
        }
    }
}

#[test]
fn tracked_charges_sum_to_total() {
    let settings = TrackSettings::default();
    for (m, seed) in [(2, 7), (3, 8)] {
        let s = random_state(m, seed).unwrap();
        let total = classify_vorticity(&s).unwrap().winding;
        let search = NodeSearch::enclosing(&s);
        let sets = track_nodes(&s, 0.0, 2.0 * PI, &settings, &search).unwrap();
        for set in &sets {
            assert_eq!(set.total_vorticity(), total);
            assert!(set.nodes.iter().all(|n| n.vorticity.abs() == 1));
        }
    }
}

#[test]
fn eigenstate_has_no_drift() {
    let s = OscillatorState::eigenstate(1, 1).unwrap();
    let f = build_drift_field(&s, &small_grid(8), &drift_settings()).unwrap();
    assert!(f.d_eta.iter().chain(&f.d_phi).all(|d| d.abs() < 1e-9));
    assert_eq!(radial_balance(&f), (0.0, 0.0));
}

#[test]
fn global_phase_leaves_drift() {
    let s = random_state(2, 31).unwrap();
    let grid = small_grid(10);
    let a = build_drift_field(&s, &grid, &drift_settings()).unwrap();
    let b = build_drift_field(&s.with_global_phase(1.234), &grid, &drift_settings()).unwrap();
    for (x, y) in a.d_phi.iter().zip(&b.d_phi).chain(a.d_eta.iter().zip(&b.d_eta)) {
        assert!((x - y).abs() < 1e-7, "{x} vs {y}");
    }
    assert_eq!(a.classification, b.classification);
}

#[test]
fn conjugate_mirror_reverses_drift() {
    // The conjugate state's trajectory from (η, φ) is the mirror image of the
    // original trajectory from (η, −φ) run backwards through one period.
    let s = random_state(2, 32).unwrap();
    let c = s.conjugated();
    let settings = drift_settings();
    for k in 0..12 {
        let (eta, phi) = (5.0 + k as f64, 0.5 * k as f64);
        let (d_eta, d_phi) = cell_drift(&c, eta, phi, &settings).unwrap();
        let start = Configuration::from_polar(eta, -phi);
        let (end, turned, _) = integrate_endpoint(&s, start, 2.0 * PI, 0.0, &settings).unwrap();
        assert!((d_eta - (end.eta() - eta)).abs() < 1e-6, "k = {k}");
        assert!((d_phi + turned).abs() < 1e-6, "k = {k}: {d_phi} vs {turned}");
    }
}

#[test]
fn first_shell_field_is_balanced_and_rotational() {
    let s = random_state(1, 5).unwrap();
    let f = build_drift_field(&s, &small_grid(40), &drift_settings()).unwrap();
    assert_eq!(f.classification.kind, DriftType::Type0);
    let total = classify_vorticity(&s).unwrap().winding;
    assert_eq!(f.classification.rotation as i64, total.signum());
    let (inward, outward) = radial_balance(&f);
    assert!((inward - 0.5).abs() < 0.05, "inward {inward}, outward {outward}");
}
