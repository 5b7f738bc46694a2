//! Invariants that must hold over whole input families, checked with
//! randomized cases and shrinking.

use arousal_core::classifier::{
    classify_binary_arousal, classify_slope, ArousalState, RawStage, Stage, Thresholds,
};
use arousal_core::dpss::SparseVector;
use arousal_core::epoch::epoch_signal;
use arousal_core::filters::{design_butterworth_lowpass, filter_signal};
use arousal_core::io::hypnogram::{
    parse_hypnogram_csv, write_hypnogram_csv, Hypnogram, HypnogramEntry,
};
use proptest::prelude::*;

/// Arousal rank of a stage: REM lowest, wake highest. The decision rule
/// partitions the slope axis, so the predicted rank must be monotone in
/// the slope.
fn rank(stage: Stage) -> u8 {
    match stage {
        Stage::Rem => 0,
        Stage::Nrem3 => 1,
        Stage::Wake => 2,
    }
}

fn stage_strategy() -> impl Strategy<Value = RawStage> {
    prop_oneof![
        Just(RawStage::Wake),
        Just(RawStage::N1),
        Just(RawStage::N2),
        Just(RawStage::N3),
        Just(RawStage::N4),
        Just(RawStage::Rem),
    ]
}

proptest! {
    #[test]
    fn filtering_is_linear(
        a in prop::collection::vec(-1e3..1e3f64, 64..256),
        b_seed in -1e3..1e3f64,
        alpha in -10.0..10.0f64,
    ) {
        let cascade = design_butterworth_lowpass(4, 50.0, 200.0).unwrap();
        let b: Vec<f64> = a
            .iter()
            .enumerate()
            .map(|(i, _)| b_seed * ((i as f64 * 0.37).sin() + 0.25))
            .collect();
        let combined: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| alpha * x + y)
            .collect();

        let fa = filter_signal(&cascade, &a).unwrap();
        let fb = filter_signal(&cascade, &b).unwrap();
        let fc = filter_signal(&cascade, &combined).unwrap();
        let scale = fc
            .iter()
            .map(|v| v.abs())
            .fold(1.0, f64::max);
        for ((ya, yb), yc) in fa.iter().zip(&fb).zip(&fc) {
            let expect = alpha * ya + yb;
            prop_assert!(
                (yc - expect).abs() <= 1e-9 * scale,
                "nonlinear response: {yc} vs {expect}"
            );
        }
    }

    #[test]
    fn epoching_partitions_the_prefix(
        x in prop::collection::vec(-100.0..100.0f64, 0..2000),
        n_per in 10usize..200,
    ) {
        let fs = 100.0;
        let epoch_s = n_per as f64 / fs;
        let epochs = epoch_signal(&x, fs, epoch_s, "Cz").unwrap();
        prop_assert_eq!(epochs.len(), x.len() / n_per);
        let mut rebuilt = Vec::new();
        for (k, epoch) in epochs.iter().enumerate() {
            prop_assert_eq!(epoch.samples.len(), n_per);
            prop_assert!((epoch.start_time_s - k as f64 * epoch_s).abs() < 1e-12);
            rebuilt.extend_from_slice(&epoch.samples);
        }
        prop_assert_eq!(&rebuilt[..], &x[..rebuilt.len()]);
    }

    #[test]
    fn staging_is_total_and_monotone_in_the_slope(
        s1 in -10.0..10.0f64,
        s2 in -10.0..10.0f64,
    ) {
        let th = Thresholds::default();
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        let stage_lo = classify_slope(lo, &th).unwrap();
        let stage_hi = classify_slope(hi, &th).unwrap();
        prop_assert!(rank(stage_lo) <= rank(stage_hi));

        // The binary rule is the three-way rule with the sleep stages merged.
        for s in [lo, hi] {
            let binary = classify_binary_arousal(s, &th).unwrap();
            let three = classify_slope(s, &th).unwrap();
            prop_assert_eq!(binary == ArousalState::Wake, three == Stage::Wake);
        }
    }

    #[test]
    fn sparse_truncation_keeps_large_entries_exactly(
        x in prop::collection::vec(-1.0..1.0f64, 1..300),
        log_eps in -12.0..-2.0f64,
    ) {
        let epsilon = 10.0f64.powf(log_eps);
        let sparse = SparseVector::from_dense(&x, epsilon);
        let dense = sparse.to_dense();
        prop_assert_eq!(dense.len(), x.len());
        for (orig, kept) in x.iter().zip(&dense) {
            if *kept == 0.0 {
                prop_assert!(orig.abs() < epsilon, "dropped {orig} at eps {epsilon}");
            } else {
                prop_assert_eq!(orig, kept);
            }
        }
        let probe: Vec<f64> = (0..x.len()).map(|i| (i as f64 * 0.71).cos()).collect();
        let exact: f64 = dense.iter().zip(&probe).map(|(a, b)| a * b).sum();
        let via_sparse = sparse.dot_dense(&probe);
        prop_assert!((exact - via_sparse).abs() <= 1e-12 * exact.abs().max(1.0));
    }

    #[test]
    fn hypnograms_round_trip_through_csv(
        spans in prop::collection::vec((0.25..3600.0f64, stage_strategy()), 1..40),
    ) {
        let mut onset = 0.0;
        let mut entries = Vec::with_capacity(spans.len());
        for (duration_s, stage) in spans {
            entries.push(HypnogramEntry { onset_s: onset, duration_s, stage });
            onset += duration_s;
        }
        let hypnogram = Hypnogram { entries };
        let text = write_hypnogram_csv(&hypnogram).unwrap();
        let back = parse_hypnogram_csv(&text).unwrap();
        prop_assert_eq!(hypnogram, back);
    }
}
