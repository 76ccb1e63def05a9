use approx::assert_relative_eq;
use billopt_core::profiles::resample;
use proptest::prelude::*;

proptest! {
    #[test]
    fn downsampling_preserves_energy(values in prop::collection::vec(0.0f64..500.0, 1..40), factor in 1u32..5) {
        let fine: Vec<f64> = values.iter().flat_map(|&v| (0..factor).map(move |k| v * (1.0 + k as f64 / 7.0))).collect();
        let step = 15 * factor;
        let coarse = resample(&fine, 15, step).unwrap();
        prop_assert_eq!(coarse.len(), values.len());
        let e_fine: f64 = fine.iter().sum::<f64>() * 15.0;
        let e_coarse: f64 = coarse.iter().sum::<f64>() * step as f64;
        assert_relative_eq!(e_fine, e_coarse, max_relative = 1e-12);
    }

    #[test]
    fn upsampling_then_downsampling_is_identity(values in prop::collection::vec(-100.0f64..500.0, 1..40)) {
        let fine = resample(&values, 60, 15).unwrap();
        prop_assert_eq!(fine.len(), 4 * values.len());
        let back = resample(&fine, 15, 60).unwrap();
        for (a, b) in values.iter().zip(&back) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn ragged_series_are_rejected(len in 1usize..40) {
        prop_assume!(len % 4 != 0);
        prop_assert!(resample(&vec![1.0f32; len], 15, 60).is_err());
    }
}
