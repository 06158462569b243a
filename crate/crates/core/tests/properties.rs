use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wirebeam_core::channel::{
    aod_geometry, array_factor, look_angles, received_power, wrap_angles, AmplitudeNorm,
    ArrayConfig, BeamOrientation, ChannelConfig,
};
use wirebeam_core::dqn::{argmax, MlpParams};
use wirebeam_core::env::{apply_action, proxy_reward, ActionIndex};
use wirebeam_core::wire::{self, ImpulseEvent, PointId, WindModel, WireParams};
use wirebeam_core::Vec3;

const LAMBDA: f64 = 0.005;

fn norm_strategy() -> impl Strategy<Value = AmplitudeNorm> {
    prop_oneof![
        Just(AmplitudeNorm::PaperLiteral),
        Just(AmplitudeNorm::PowerNorm)
    ]
}

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn endpoints_never_move(seed in any::<u64>(), with_impulse in any::<bool>()) {
        let p = WireParams::default();
        let imp = [ImpulseEvent { point: PointId::new(4), force: Vec3::new(0.0, 0.0, 470.0), apply_time: 0.05 }];
        let imps: &[ImpulseEvent] = if with_impulse { &imp } else { &[] };
        let samples = wire::simulate_trajectory(&p, &WindModel::default(), imps, 0.2, 1e-3, 1e-3, seed).unwrap();
        let first = &samples[0];
        let n = p.n_points;
        for s in &samples {
            prop_assert_eq!(s.positions[0], first.positions[0]);
            prop_assert_eq!(s.positions[n - 1], first.positions[n - 1]);
            prop_assert_eq!(s.velocities[0], Vec3::zeros());
            prop_assert_eq!(s.velocities[n - 1], Vec3::zeros());
        }
    }

    #[test]
    fn spring_term_is_linear_in_displacement(
        offsets in prop::collection::vec(vec3(0.2), 19),
        k in 100.0..5000.0f64,
    ) {
        let p = WireParams { spring_k: k, ..WireParams::default() };
        let eq = wire::solve_equilibrium(&p);
        let displaced = |scale: f64| {
            let mut x = eq.positions.clone();
            for (xi, d) in x.iter_mut().skip(1).zip(&offsets) {
                *xi += d * scale;
            }
            x
        };
        let base = wire::tensile_accelerations(&eq.positions, &p);
        let once = wire::tensile_accelerations(&displaced(1.0), &p);
        let twice = wire::tensile_accelerations(&displaced(2.0), &p);
        for i in 0..p.n_points {
            let d1 = once[i] - base[i];
            let d2 = twice[i] - base[i];
            let err = (d2 - 2.0 * d1).norm();
            prop_assert!(err <= 1e-12 * d2.norm().max(1e-300) + 1e-12, "point {}: {}", i, err);
        }
    }

    #[test]
    fn array_factor_is_bounded(
        theta in -PI..PI, phi in -PI..PI,
        ts in 0.0..PI, ps in -PI..PI,
        norm in norm_strategy(),
    ) {
        let ar = ArrayConfig { amplitude_norm: norm, ..ArrayConfig::default() };
        let af = array_factor(theta, phi, BeamOrientation::new(ts, ps), &ar, LAMBDA).unwrap();
        let cap = match norm {
            AmplitudeNorm::PaperLiteral => 0.0,
            AmplitudeNorm::PowerNorm => 10.0 * (ar.n_elements() as f64).log10(),
        };
        prop_assert!(af <= cap + 1e-9, "AF {} above {}", af, cap);
    }

    #[test]
    fn vertical_cut_is_symmetric(theta in 0.0..1.2f64, ps in -PI..PI, norm in norm_strategy()) {
        let ar = ArrayConfig { amplitude_norm: norm, ..ArrayConfig::default() };
        let beam = BeamOrientation::new(FRAC_PI_2, ps);
        let a = array_factor(theta, 0.0, beam, &ar, LAMBDA).unwrap();
        let b = array_factor(-theta, 0.0, beam, &ar, LAMBDA).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn tx_power_shifts_received_power_exactly(node in vec3(0.5), shift in -20.0..20.0f64, ts in 0.5..2.5f64, ps in 0.5..2.5f64) {
        let ch = ChannelConfig::default();
        let ar = ArrayConfig::default();
        let beam = BeamOrientation::new(ts, ps);
        let base = received_power(node, beam, &ch, &ar).unwrap();
        let bumped = ChannelConfig { tx_power_dbm: ch.tx_power_dbm + shift, ..ch.clone() };
        let moved = received_power(node, beam, &bumped, &ar).unwrap();
        prop_assert!((moved - base - shift).abs() < 1e-9);
    }

    #[test]
    fn steering_at_the_receiver_zeroes_relative_angles(node in vec3(1.0), rx in vec3(10.0)) {
        prop_assume!((rx - node).norm() > 0.5);
        let ch = ChannelConfig { rx_position: rx, ..ChannelConfig::default() };
        let (zen, azi, _) = look_angles(node, rx).unwrap();
        let g = aod_geometry(node, &ch, BeamOrientation::new(zen, azi)).unwrap();
        prop_assert!(g.theta_aod.abs() < 1e-12 && g.phi_aod.abs() < 1e-12, "{:?}", g);
    }

    #[test]
    fn wrapped_angles_land_in_principal_ranges(theta in -20.0..20.0f64, phi in -20.0..20.0f64) {
        let (t, p) = wrap_angles(theta, phi);
        prop_assert!((0.0..=PI).contains(&t));
        prop_assert!(p > -PI && p <= PI);
        let before = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
        let after = BeamOrientation::new(theta, phi).direction();
        prop_assert!((before - after).norm() < 1e-9);
        prop_assert!((after.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn actions_keep_the_beam_a_unit_vector(ts in 0.0..PI, ps in -PI..PI, a in 0usize..9, steps in 1usize..200) {
        let action = ActionIndex::new(a).unwrap();
        let mut beam = BeamOrientation::new(ts, ps);
        for _ in 0..steps {
            beam = apply_action(beam, action, 1f64.to_radians());
        }
        prop_assert!((beam.direction().norm() - 1.0).abs() < 1e-9);
        prop_assert!((0.0..=PI).contains(&beam.theta_s) && beam.phi_s > -PI && beam.phi_s <= PI);
    }

    #[test]
    fn reward_is_clipped_and_monotone(raw in -150.0..0.0f64, delta in 1e-6..5.0f64, offset in -80.0..-20.0f64) {
        let r = proxy_reward(raw, offset, 5.0);
        prop_assert!((-1.0..=1.0).contains(&r));
        let r2 = proxy_reward(raw + delta, offset, 5.0);
        prop_assert!(r2 >= r);
        if (raw - offset).abs() < 5.0 && (raw + delta - offset).abs() < 5.0 {
            prop_assert!(r2 > r);
        }
    }

    #[test]
    fn greedy_choice_ignores_a_common_output_shift(seed in any::<u64>(), shift in -50.0..50.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = MlpParams::init(&[5, 8, 9], &mut rng);
        let mut shifted = net.clone();
        let last = shifted.layers.len() - 1;
        shifted.layers[last].bias.mapv_inplace(|b| b + shift);
        let x = [0.3, -0.1, 0.7, 0.0, -0.4];
        let q = net.forward(&x).unwrap();
        let qs = shifted.forward(&x).unwrap();
        prop_assert_eq!(argmax(&q), argmax(&qs));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn boresight_is_the_array_maximum(ts in 0.6..2.5f64, ps in -PI..PI, norm in norm_strategy()) {
        let ar = ArrayConfig { amplitude_norm: norm, ..ArrayConfig::default() };
        let beam = BeamOrientation::new(ts, ps);
        let peak = array_factor(0.0, 0.0, beam, &ar, LAMBDA).unwrap();
        for i in -60..=60 {
            for j in -60..=60 {
                let af = array_factor((i as f64).to_radians(), (j as f64).to_radians(), beam, &ar, LAMBDA).unwrap();
                prop_assert!(af <= peak + 1e-9, "({}, {}) deg: {} > {}", i, j, af, peak);
            }
        }
    }
}
