use std::f64::consts::PI;

use bohm_lab::field_models::{
    decay_ensemble, integrate_decay, measurement_ensemble, model_tolerances, one_particle_cdf, vacuum_cdf, DecayParams,
    MeasuredState,
};
use bohm_lab::ode::Integrator;
use bohm_lab::spectral::{orbit_constant, reduced_velocity, spectral_ensemble};
use bohm_lab::stats::{ks_statistic, normal_cdf};
use proptest::prelude::*;

#[test]
fn decay_swaps_marginals_at_half_period() {
    let p = DecayParams::default();
    let ens = decay_ensemble(1.0, 3000, PI, 17, &p).unwrap();
    assert_eq!(ens.failures, 0);
    assert!(ens.ks_q2_one_particle() < 0.04, "q2 KS {}", ens.ks_q2_one_particle());
    assert!(ens.ks_q1_vacuum() < 0.04, "q1 KS {}", ens.ks_q1_vacuum());
}

#[test]
fn decay_returns_after_a_period() {
    let p = DecayParams { omega: 1.5, g: 0.5 };
    let tol = model_tolerances();
    for k in 0..10 {
        let (r, a) = (0.5 + 0.15 * k as f64, 0.7 * k as f64);
        let q0 = [r * a.cos(), r * a.sin()];
        let q1 = integrate_decay(q0, 0.0, p.period(), &p, tol).unwrap();
        assert!((q1[0] - q0[0]).hypot(q1[1] - q0[1]) < 1e-6, "k = {k}: {q1:?} vs {q0:?}");
    }
}

#[test]
fn pointer_separates_vacuum_from_particle() {
    let vac = measurement_ensemble(MeasuredState::Vacuum, 1.0, 400, 4.5, 3).unwrap();
    let one = measurement_ensemble(MeasuredState::OneParticle, 1.0, 400, 4.5, 4).unwrap();
    assert!(vac.fraction_beyond(9.0) < 0.05, "vacuum {}", vac.fraction_beyond(9.0));
    assert!(one.fraction_beyond(9.0) > 0.95, "particle {}", one.fraction_beyond(9.0));
    // The field amplitude is untouched by the measurement in either case.
    let q: Vec<f64> = vac.samples.iter().map(|z| z[0]).collect();
    assert!(ks_statistic(&q, vacuum_cdf) < 0.08);
    let q: Vec<f64> = one.samples.iter().map(|z| z[0]).collect();
    assert!(ks_statistic(&q, one_particle_cdf) < 0.08);
}

#[test]
fn real_vacuum_coefficient_crosses_the_node_line() {
    for theta in [PI, 2.0 * PI] {
        let ens = measurement_ensemble(MeasuredState::Superposition { theta }, 1.0, 300, 4.5, 8).unwrap();
        assert_eq!(ens.failures, 0, "θ = {theta}");
        assert!(ens.samples.iter().all(|z| z[0].is_finite() && z[1].is_finite()));
    }
}

#[test]
fn equilibrium_line_is_unresolved_normal() {
    let times = [1.0, 10.0];
    let ens = spectral_ensemble(1.0, &times, 2000, 12).unwrap();
    assert_eq!(ens.failures, 0);
    assert_eq!(ens.separatrix_crossings, 0);
    for k in 0..times.len() {
        let ks = ks_statistic(&ens.dev_e(k), |x| normal_cdf(x, 0.0, 1.0));
        assert!(ks < 0.04, "T = {}: KS {ks}", times[k]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spectral_orbits_keep_their_constant(q in 0.05..2.5f64, sign in prop::bool::ANY, dev_e in -3.0..3.0f64) {
        let q = if sign { q } else { -q };
        prop_assume!((q.abs() - 1.0).abs() > 0.02);
        let c0 = orbit_constant(q, dev_e).unwrap();
        let rhs = |_: f64, z: &[f64; 2]| reduced_velocity(z[0], z[1]).ok();
        let mut integ = Integrator::new(rhs, 0.0, [q, dev_e], model_tolerances()).unwrap();
        integ.advance_to(20.0, |_, _| {}).unwrap();
        let z = *integ.y();
        prop_assert!(z[0].signum() == q.signum());
        prop_assert!((orbit_constant(z[0], z[1]).unwrap() - c0).abs() < 1e-6);
    }
}
