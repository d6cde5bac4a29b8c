use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qrepeater::fock::{fidelity, JointState, ModeId, Polarization, TimeBin, C64};
use qrepeater::io::{read_json, EnsembleRecord};
use qrepeater::link::{emission_state, run_link_exhaustive, LinkConfig, NoiseRealization};
use qrepeater::noise::{collective_pol_unitary, JonesUnitary};
use qrepeater::optics::{bs50, pol_phase_mod};

const BIN: TimeBin = TimeBin::None;

fn inputs() -> Vec<ModeId> {
    let mut v = Vec::new();
    for path in ["a", "b"] {
        for pol in Polarization::BOTH {
            v.push(ModeId::new(path, pol, BIN));
        }
    }
    v
}

/// Up to three photons spread over the four input modes with the given
/// amplitudes on each occupation pattern.
fn photon_state(placements: &[(Vec<usize>, (f64, f64))]) -> JointState {
    let modes = inputs();
    let vac = JointState::vacuum::<&str>(&modes, &[]).unwrap();
    let mut acc: Option<JointState> = None;
    for (photons, (re, im)) in placements {
        let mut s = vac.clone();
        for &k in photons {
            s = s.create_photon(&modes[k]).unwrap();
        }
        let s = s.scaled(C64::new(*re, *im));
        acc = Some(match acc {
            None => s,
            Some(a) => a.add(&s).unwrap(),
        });
    }
    acc.unwrap()
}

fn placement() -> impl Strategy<Value = Vec<(Vec<usize>, (f64, f64))>> {
    prop::collection::vec(
        (prop::collection::vec(0usize..4, 1..=3), (-1.0f64..1.0, -1.0f64..1.0)),
        1..4,
    )
    .prop_filter("nonzero amplitudes", |v| v.iter().any(|(_, (r, i))| r.abs() + i.abs() > 1e-3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_optics_preserves_norm(pl in placement(), ph in -3.0f64..3.0, pv in -3.0f64..3.0) {
        let s = photon_state(&pl);
        prop_assume!(s.norm_sqr() > 1e-6);
        let map = bs50("a", "b", "c", "d", &[BIN]).unwrap()
            .then(&pol_phase_mod("c", ph, pv, &[BIN]).unwrap()).unwrap();
        let out = s.apply_mode_map(&map).unwrap();
        prop_assert!((out.norm_sqr() - s.norm_sqr()).abs() < 1e-12 * s.norm_sqr().max(1.0));
    }

    #[test]
    fn composed_map_equals_sequential_application(pl in placement(), ph in -3.0f64..3.0, pv in -3.0f64..3.0) {
        let s = photon_state(&pl);
        prop_assume!(s.norm_sqr() > 1e-6);
        let first = bs50("a", "b", "c", "d", &[BIN]).unwrap();
        let second = pol_phase_mod("c", ph, pv, &[BIN]).unwrap();
        let third = bs50("c", "d", "e", "f", &[BIN]).unwrap();
        let stepwise = s.apply_mode_map(&first).unwrap()
            .apply_mode_map(&second).unwrap()
            .apply_mode_map(&third).unwrap();
        let composed = s.apply_mode_map(&first.then(&second).unwrap().then(&third).unwrap()).unwrap();
        let f = fidelity(&stepwise.normalized().unwrap(), &composed.normalized().unwrap()).unwrap();
        prop_assert!((f - 1.0).abs() < 1e-10, "fidelity {}", f);
        prop_assert!((stepwise.norm_sqr() - composed.norm_sqr()).abs() < 1e-10);
    }

    #[test]
    fn creation_operators_commute(order in Just(vec![0usize, 1, 2, 3]).prop_shuffle(), reps in prop::collection::vec(1usize..=2, 4)) {
        let modes = inputs();
        let vac = JointState::vacuum::<&str>(&modes, &[]).unwrap().with_max_photons(8).unwrap();
        let mut sorted = vac.clone();
        for (k, &n) in reps.iter().enumerate() {
            for _ in 0..n {
                sorted = sorted.create_photon(&modes[k]).unwrap();
            }
        }
        let mut shuffled = vac;
        for &k in &order {
            for _ in 0..reps[k] {
                shuffled = shuffled.create_photon(&modes[k]).unwrap();
            }
        }
        let d = sorted.add(&shuffled.scaled(C64::new(-1.0, 0.0))).unwrap();
        prop_assert!(d.norm_sqr() < 1e-20);
        prop_assert!((sorted.norm_sqr() - shuffled.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn singlet_is_invariant_under_any_collective_unitary(seed in any::<u64>()) {
        let (h, v) = (ModeId::h("a"), ModeId::v("a"));
        let (h2, v2) = (h.with_bin(TimeBin::Bin2), v.with_bin(TimeBin::Bin2));
        let (h1, v1) = (h.with_bin(TimeBin::Bin1), v.with_bin(TimeBin::Bin1));
        let modes = [h1.clone(), v1.clone(), h2.clone(), v2.clone()];
        let vac = JointState::vacuum::<&str>(&modes, &[]).unwrap();
        let s = vac.create_photon(&h1).unwrap().create_photon(&v2).unwrap()
            .add(&vac.create_photon(&v1).unwrap().create_photon(&h2).unwrap().scaled(C64::new(-1.0, 0.0))).unwrap()
            .normalized().unwrap();
        let u = JonesUnitary::haar(&mut ChaCha8Rng::seed_from_u64(seed));
        let f = fidelity(&collective_pol_unitary(&s, "a", &u).unwrap(), &s).unwrap();
        prop_assert!((f - 1.0).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn link_outcomes_exhaust_the_emitted_state(p in 0.001f64..0.4, t in 0.1f64..=1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = LinkConfig {
            emission_probability: p,
            transmittance: t,
            noise: NoiseRealization::sample(&mut rng, 1.0).unwrap(),
            ..LinkConfig::default()
        };
        let report = run_link_exhaustive(&config).unwrap();
        let total: f64 = report.outcomes.iter().map(|o| o.probability).sum();
        let emitted = emission_state(p, config.max_excitations).unwrap().norm_sqr();
        prop_assert!((total / emitted - 1.0).abs() < 1e-12, "{} vs {}", total, emitted);
    }

    #[test]
    fn ensemble_survives_json(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = LinkConfig {
            noise: NoiseRealization::sample(&mut rng, 1.0).unwrap(),
            ..LinkConfig::default()
        };
        let ens = run_link_exhaustive(&config).unwrap().heralded_ensemble().unwrap();
        let text = serde_json::to_string(&EnsembleRecord::from_ensemble(&ens)).unwrap();
        let back = read_json::<EnsembleRecord>(&text).unwrap().to_ensemble().unwrap();
        prop_assert_eq!(back.len(), ens.len());
        for ((wa, a), (wb, b)) in ens.components().iter().zip(back.components()) {
            prop_assert!((wa - wb).abs() < 1e-15);
            prop_assert!(fidelity(a, b).unwrap() >= 1.0 - 1e-12);
        }
        prop_assert!(ens.hs_distance_sqr(&back).unwrap() < 1e-12);
    }
}
