use proptest::prelude::*;

use qoct_core::domain::make_grid;
use qoct_core::forward::{apply_shot_noise, simulate_joint_spectrum, SimulationRequest};
use qoct_core::preprocess::{compensate_fibre, rotate45, ShiftVector};
use qoct_core::reconstruct::{ascan_2dft_diagonal, ascan_row_average, column_means, pair_suppression};
use qoct_core::{DetectionSpec, JointSpectrum, LayeredObject, Matrix, SourceSpec};

fn spectrum(n: usize, span: f64, values: Vec<f64>) -> JointSpectrum {
    let g = make_grid(1550.0, span, n).unwrap();
    JointSpectrum::new(g, g, Matrix::from_vec(n, n, values).unwrap()).unwrap()
}

fn arb_spectrum() -> impl Strategy<Value = JointSpectrum> {
    (8usize..32, 20.0f64..150.0).prop_flat_map(|(n, span)| {
        proptest::collection::vec(0.0f64..50.0, n * n).prop_map(move |v| spectrum(n, span, v))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reconstruction_paths_agree(js in arb_spectrum()) {
        let rot = rotate45(&js).unwrap();
        let a = ascan_row_average(&rot).unwrap();
        let b = ascan_2dft_diagonal(&rot).unwrap();
        let scale = a.amplitude.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
        for (x, y) in a.amplitude.iter().zip(&b.amplitude) {
            prop_assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn column_rolls_preserve_column_means(js in arb_spectrum(), seed in 0u64..1000) {
        let rot = rotate45(&js).unwrap();
        let rows = rot.rows() as i64;
        let shifts = (0..rot.cols()).map(|c| ((c as u64 * 7 + seed) as i64 % (2 * rows)) - rows).collect();
        let rolled = compensate_fibre(&rot, &ShiftVector { shifts }).unwrap();
        let (before, after) = (column_means(&rot), column_means(&rolled));
        for (x, y) in before.iter().zip(&after) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn shot_noise_is_integer_and_seeded(js in arb_spectrum(), seed in any::<u64>()) {
        let a = apply_shot_noise(&js, seed).unwrap();
        let b = apply_shot_noise(&js, seed).unwrap();
        prop_assert_eq!(a.values(), b.values());
        prop_assert!(a.values().as_slice().iter().all(|v| *v >= 0.0 && v.fract() == 0.0));
    }

    #[test]
    fn suppression_is_a_decreasing_fraction(width in 0.01f64..5.0, dz in 0.0f64..500.0, extra in 0.1f64..100.0) {
        let s = pair_suppression(width, dz);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!(pair_suppression(width, dz + extra) <= s);
        prop_assert!(pair_suppression(width * 1.5, dz) <= s);
    }

    #[test]
    fn coincidences_are_bounded_by_the_envelope(
        z1 in 0.0f64..200.0,
        gap in 5.0f64..200.0,
        r in 0.05f64..0.7,
        delay in -100.0f64..300.0,
    ) {
        let object = LayeredObject::layers(&[z1, z1 + gap], r).unwrap();
        let req = SimulationRequest {
            source: SourceSpec::single_frame(),
            object,
            detection: DetectionSpec::ideal(),
            reference_delay: delay,
            grid: make_grid(1550.0, 102.0, 32).unwrap(),
            integration_time: 1.0,
            seed: None,
        };
        let sim = simulate_joint_spectrum(&req).unwrap();
        let v = sim.spectrum.values();
        prop_assert!(v.as_slice().iter().all(|x| *x >= -1e-9));
        // Expected total never exceeds the emitted pairs times the worst-case reflectance.
        let bound = req.source.pair_rate * (1.0 + 2.0 * r).powi(2);
        prop_assert!(sim.spectrum.total() <= bound);
    }
}
