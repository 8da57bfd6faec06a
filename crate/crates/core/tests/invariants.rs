//! Cross-module properties.

use std::f64::consts::TAU;

use coherence_core::bloch::{run_sequence, BlochVector, ConstantDetuning, PiecewiseDetuning, PulseSequence};
use coherence_core::dephasing::{envelope_with_t2, exact_envelope, LineshapeForm};
use coherence_core::fit::{fit_ramsey, FitModel};
use coherence_core::shots::{rng_stream, DataSet};
use coherence_core::transport::{
    integrate_in_lattice, make_accel_profile, AccelProfile, AccelSegment, AtomPhaseState, Lattice, ProfileKind,
};
use coherence_core::trap::TrapConfig;
use coherence_core::units::K_B;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn envelope_strictly_decreasing(k in 1e-4f64..1.0, a in 1e-3f64..50.0, b in 1e-3f64..50.0) {
        prop_assume!((a - b).abs() > 1e-6 * a.max(b));
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(exact_envelope(hi * k, k) < exact_envelope(lo * k, k));
        prop_assert!(envelope_with_t2(hi * k, k) < envelope_with_t2(lo * k, k));
    }

    #[test]
    fn echo_rephases_any_static_detunings(
        deltas in prop::collection::vec(-2e4f64..2e4, 1..40),
        tau in 1e-4f64..0.2,
    ) {
        let seq = PulseSequence::echo(tau, 2.0 * tau);
        for d in deltas {
            let out = run_sequence(&seq, &ConstantDetuning(d), BlochVector::ground()).unwrap();
            prop_assert!((out.state.w + 1.0).abs() < 1e-9, "delta {d}: w = {}", out.state.w);
        }
    }

    #[test]
    fn ramsey_phase_convention(delta in -2e4f64..2e4, t in 0.0f64..0.05) {
        let out = run_sequence(&PulseSequence::ramsey(t), &ConstantDetuning(delta), BlochVector::ground()).unwrap();
        prop_assert!((out.state.w - (delta * t).cos()).abs() < 1e-9);
    }

    #[test]
    fn echo_measures_detuning_change(mean in -2e4f64..2e4, jump in -500.0f64..500.0, tau in 1e-4f64..0.1) {
        let tl = PiecewiseDetuning::new(vec![0.0, tau], vec![mean, mean + jump], 2.0 * tau).unwrap();
        let out = run_sequence(&PulseSequence::echo(tau, 2.0 * tau), &tl, BlochVector::ground()).unwrap();
        prop_assert!((out.state.w + (jump * tau).cos()).abs() < 1e-9);
    }

    #[test]
    fn bang_bang_profile_kinematics(d in 1e-5f64..5e-3, t in 1e-4f64..1e-2, hold in 0.0f64..1e-2) {
        let p = make_accel_profile(d, t, ProfileKind::RoundTrip { hold }).unwrap();
        prop_assert!(p.displacement().abs() < 1e-12 * d.max(1.0));
        prop_assert!(p.final_velocity().abs() < 1e-9);
        prop_assert!((p.total_duration() - 2.0 * t - hold).abs() < 1e-12);
    }
}

fn lattice() -> Lattice {
    Lattice::from_trap(&TrapConfig::cesium_1064(0.1e-3 * K_B, 20e-6)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // Only accelerations enter the co-moving frame, so uniform motion of the lattice
    // must leave the energy alone whatever the atom's orbit.
    #[test]
    fn uniform_motion_leaves_energy(e in 0.05f64..0.9, periods in 1.0f64..60.0) {
        let l = lattice();
        let s = AtomPhaseState::new(l.turning_point(e * l.depth), 0.0, &l);
        let p = AccelProfile { segments: vec![AccelSegment { duration: periods * l.axial_period(), acceleration: 0.0 }] };
        let r = integrate_in_lattice(&s, &p, &l, l.default_dt(), None).unwrap();
        prop_assert!(!r.escaped);
        prop_assert!((r.final_state.energy / s.energy - 1.0).abs() < 1e-4);
    }
}

fn noisy_ramsey(sigma: f64, seed: u64) -> DataSet {
    let model = FitModel::Ramsey { form: LineshapeForm::Unchirped, chirp: 0.0 };
    let truth = [0.3, 0.31, 0.86e-3, TAU * 2.0e3, 0.4];
    let mut rng = rng_stream(seed, 0, 0, 0);
    let x: Vec<f64> = (0..76).map(|i| i as f64 * 40e-6).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&t| {
            let n: f64 = StandardNormal.sample(&mut rng);
            model.eval(&truth, t) + sigma * n
        })
        .collect();
    DataSet::from_xy(&x, &y, &vec![sigma; x.len()])
}

#[test]
fn residuals_orthogonal_to_jacobian_at_optimum() {
    for seed in 0..10 {
        let r = fit_ramsey(&noisy_ramsey(0.02, seed), LineshapeForm::Unchirped).unwrap();
        assert!(r.converged);
        assert!(r.optimality < 1e-5, "seed {seed}: {}", r.optimality);
    }
}

#[test]
fn doubling_shot_noise_widens_errors() {
    // same normal draws, scaled: errors should grow with the noise in every fit
    let mut ratios = Vec::new();
    for seed in 0..20 {
        let a = fit_ramsey(&noisy_ramsey(0.01, seed), LineshapeForm::Unchirped).unwrap();
        let b = fit_ramsey(&noisy_ramsey(0.02, seed), LineshapeForm::Unchirped).unwrap();
        for (ea, eb) in a.stderr.iter().zip(&b.stderr) {
            assert!(eb > ea, "seed {seed}: {eb} <= {ea}");
        }
        ratios.push(b.error_of("T2_star").unwrap() / a.error_of("T2_star").unwrap());
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 2.0).abs() < 0.2, "mean stderr ratio {mean}");
}
