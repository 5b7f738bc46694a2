//! Threshold staging of the spectral slope and scoring against annotations.
//!
//! Two fixed cuts partition the slope axis: above the wake cut is Wake, below
//! the REM cut is REM, and everything between them, boundary values included,
//! is NREM3. A binary variant collapses everything at or below the wake cut
//! into one reduced-arousal class for anesthesia-style monitoring.
//!
//! Scoring takes raw hypnogram labels, merges deep-sleep sub-stages, drops
//! light sleep and unscored spans (tallied, never silent), and accumulates a
//! 3x3 confusion matrix whose merge is associative so chunks can be scored in
//! parallel and combined.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A predicted arousal stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Wake,
    Nrem3,
    Rem,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Wake, Stage::Nrem3, Stage::Rem];

    /// Row/column index in the confusion matrix.
    pub fn index(self) -> usize {
        match self {
            Stage::Wake => 0,
            Stage::Nrem3 => 1,
            Stage::Rem => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Wake => "Wake",
            Stage::Nrem3 => "NREM3",
            Stage::Rem => "REM",
        }
    }
}

/// Binary arousal decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArousalState {
    Wake,
    ReducedArousal,
}

impl ArousalState {
    pub fn name(self) -> &'static str {
        match self {
            ArousalState::Wake => "Wake",
            ArousalState::ReducedArousal => "ReducedArousal",
        }
    }
}

/// A raw annotation label as scored by a specialist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RawStage {
    Wake,
    N1,
    N2,
    N3,
    N4,
    Rem,
    /// No annotation covered the epoch.
    Unknown,
}

impl RawStage {
    /// Maps to the three evaluated stages. Deep-sleep sub-stages merge into
    /// NREM3; light sleep and unscored spans have no counterpart and return
    /// `None`.
    pub fn merged(self) -> Option<Stage> {
        match self {
            RawStage::Wake => Some(Stage::Wake),
            RawStage::N3 | RawStage::N4 => Some(Stage::Nrem3),
            RawStage::Rem => Some(Stage::Rem),
            RawStage::N1 | RawStage::N2 | RawStage::Unknown => None,
        }
    }
}

/// Slope cut points. Defaults are the published operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Slopes above this are Wake.
    pub wake_cut: f64,
    /// Slopes below this are REM.
    pub rem_cut: f64,
}

impl Default for Thresholds {
    fn default() -> Thresholds {
        Thresholds {
            wake_cut: -2.45,
            rem_cut: -3.2,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.wake_cut.is_finite() && self.rem_cut.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "thresholds must be finite, got wake {} / rem {}",
                self.wake_cut, self.rem_cut
            )));
        }
        if self.rem_cut >= self.wake_cut {
            return Err(Error::InvalidSpec(format!(
                "the REM cut ({}) must lie below the wake cut ({})",
                self.rem_cut, self.wake_cut
            )));
        }
        Ok(())
    }
}

/// Three-way staging. Boundary values go to NREM3, so the partition of the
/// slope axis is exhaustive and overlap-free.
pub fn classify_slope(slope: f64, th: &Thresholds) -> Result<Stage> {
    th.validate()?;
    if !slope.is_finite() {
        return Err(Error::NonFinite(format!("slope is {slope}")));
    }
    Ok(if slope > th.wake_cut {
        Stage::Wake
    } else if slope < th.rem_cut {
        Stage::Rem
    } else {
        Stage::Nrem3
    })
}

/// Binary staging: Wake above the wake cut, everything else reduced arousal.
pub fn classify_binary_arousal(slope: f64, th: &Thresholds) -> Result<ArousalState> {
    th.validate()?;
    if !slope.is_finite() {
        return Err(Error::NonFinite(format!("slope is {slope}")));
    }
    Ok(if slope > th.wake_cut {
        ArousalState::Wake
    } else {
        ArousalState::ReducedArousal
    })
}

/// Counts of (annotated, predicted) stage pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[t][p]`: epochs annotated as stage index `t`, predicted `p`.
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn record(&mut self, annotated: Stage, predicted: Stage) {
        self.counts[annotated.index()][predicted.index()] += 1;
    }

    /// Associative combination for chunked scoring.
    pub fn merge(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        let mut out = *self;
        for t in 0..3 {
            for p in 0..3 {
                out.counts[t][p] += other.counts[t][p];
            }
        }
        out
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Fraction of epochs on the diagonal. Zero total gives 0.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let trace: u64 = (0..3).map(|i| self.counts[i][i]).sum();
        trace as f64 / total as f64
    }

    /// Rows scaled to sum to 1, with a flag per row that had no epochs (those
    /// rows come back all-zero rather than NaN).
    pub fn normalized(&self) -> ([[f64; 3]; 3], [bool; 3]) {
        let mut rows = [[0.0; 3]; 3];
        let mut empty = [false; 3];
        for t in 0..3 {
            let row_total: u64 = self.counts[t].iter().sum();
            if row_total == 0 {
                empty[t] = true;
                continue;
            }
            for p in 0..3 {
                rows[t][p] = self.counts[t][p] as f64 / row_total as f64;
            }
        }
        (rows, empty)
    }
}

/// Epochs removed from scoring, by reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExclusionTally {
    /// N1/N2 annotations: the three-way task has no bin for light sleep.
    pub light_sleep: u64,
    /// Epochs no annotation covered.
    pub unknown: u64,
}

impl ExclusionTally {
    pub fn total(&self) -> u64 {
        self.light_sleep + self.unknown
    }
}

/// The outcome of scoring predictions against annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub matrix: ConfusionMatrix,
    pub accuracy: f64,
    pub excluded: ExclusionTally,
    /// Epochs that entered the matrix.
    pub n_scored: u64,
}

/// Scores predictions against raw annotations, pair by pair.
///
/// The sequences must align one-to-one before filtering; light-sleep and
/// unknown annotations are then dropped and tallied. Erroring on an empty
/// retained set beats returning a 0/0 accuracy.
pub fn evaluate(predictions: &[Stage], annotations: &[RawStage]) -> Result<Evaluation> {
    if predictions.len() != annotations.len() {
        return Err(Error::Alignment(format!(
            "{} predictions but {} annotations",
            predictions.len(),
            annotations.len()
        )));
    }
    let mut matrix = ConfusionMatrix::default();
    let mut excluded = ExclusionTally::default();
    for (&pred, &raw) in predictions.iter().zip(annotations) {
        match raw.merged() {
            Some(annotated) => matrix.record(annotated, pred),
            None => match raw {
                RawStage::Unknown => excluded.unknown += 1,
                _ => excluded.light_sleep += 1,
            },
        }
    }
    let n_scored = matrix.total();
    if n_scored == 0 {
        return Err(Error::NoData(format!(
            "no scoreable epochs: {} light-sleep and {} unknown annotations were excluded",
            excluded.light_sleep, excluded.unknown
        )));
    }
    Ok(Evaluation {
        accuracy: matrix.accuracy(),
        matrix,
        excluded,
        n_scored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn representative_slopes_classify_as_documented() {
        let th = Thresholds::default();
        assert_eq!(classify_slope(-2.0, &th).unwrap(), Stage::Wake);
        assert_eq!(classify_slope(-3.45, &th).unwrap(), Stage::Rem);
        assert_eq!(classify_slope(-2.45, &th).unwrap(), Stage::Nrem3);
        assert_eq!(classify_slope(-3.2, &th).unwrap(), Stage::Nrem3);
        assert_eq!(classify_slope(-2.8, &th).unwrap(), Stage::Nrem3);
    }

    #[test]
    fn binary_examples_classify_as_documented() {
        let th = Thresholds::default();
        assert_eq!(
            classify_binary_arousal(-1.9, &th).unwrap(),
            ArousalState::Wake
        );
        assert_eq!(
            classify_binary_arousal(-2.77, &th).unwrap(),
            ArousalState::ReducedArousal
        );
        assert_eq!(
            classify_binary_arousal(-2.45, &th).unwrap(),
            ArousalState::ReducedArousal
        );
    }

    #[test]
    fn nan_slope_is_an_error_in_both_tasks() {
        let th = Thresholds::default();
        assert!(matches!(
            classify_slope(f64::NAN, &th),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            classify_binary_arousal(f64::NAN, &th),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn inverted_thresholds_are_rejected() {
        let th = Thresholds {
            wake_cut: -3.2,
            rem_cut: -2.45,
        };
        assert!(classify_slope(-2.8, &th).is_err());
    }

    #[test]
    fn deep_sleep_merges_and_light_sleep_drops() {
        assert_eq!(RawStage::N3.merged(), Some(Stage::Nrem3));
        assert_eq!(RawStage::N4.merged(), Some(Stage::Nrem3));
        assert_eq!(RawStage::Wake.merged(), Some(Stage::Wake));
        assert_eq!(RawStage::Rem.merged(), Some(Stage::Rem));
        assert_eq!(RawStage::N1.merged(), None);
        assert_eq!(RawStage::N2.merged(), None);
        assert_eq!(RawStage::Unknown.merged(), None);
    }

    #[test]
    fn perfect_predictions_give_the_identity_matrix() {
        let annotations = [
            RawStage::Wake,
            RawStage::N3,
            RawStage::N4,
            RawStage::Rem,
            RawStage::Wake,
        ];
        let predictions: Vec<Stage> = annotations.iter().map(|r| r.merged().unwrap()).collect();
        let ev = evaluate(&predictions, &annotations).unwrap();
        assert_eq!(ev.accuracy, 1.0);
        assert_eq!(ev.n_scored, 5);
        let (rows, empty) = ev.matrix.normalized();
        for t in 0..3 {
            assert!(!empty[t]);
            for p in 0..3 {
                let want = if t == p { 1.0 } else { 0.0 };
                assert!((rows[t][p] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn all_wake_predictions_on_a_half_wake_set_score_one_half() {
        let annotations = [RawStage::Wake, RawStage::Wake, RawStage::N3, RawStage::Rem];
        let predictions = vec![Stage::Wake; 4];
        let ev = evaluate(&predictions, &annotations).unwrap();
        assert_eq!(ev.accuracy, 0.5);
        let (rows, _) = ev.matrix.normalized();
        assert_eq!(rows[0], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn exclusions_are_tallied_not_dropped_silently() {
        let annotations = [
            RawStage::N1,
            RawStage::N2,
            RawStage::Unknown,
            RawStage::Wake,
        ];
        let predictions = vec![Stage::Wake; 4];
        let ev = evaluate(&predictions, &annotations).unwrap();
        assert_eq!(ev.excluded.light_sleep, 2);
        assert_eq!(ev.excluded.unknown, 1);
        assert_eq!(ev.n_scored, 1);
    }

    #[test]
    fn length_mismatch_and_empty_retention_are_errors() {
        assert!(matches!(
            evaluate(&[Stage::Wake], &[]),
            Err(Error::Alignment(_))
        ));
        assert!(matches!(
            evaluate(&[Stage::Wake], &[RawStage::N1]),
            Err(Error::NoData(_))
        ));
    }

    #[test]
    fn merge_is_associative_and_conserves_counts() {
        let mut a = ConfusionMatrix::default();
        a.record(Stage::Wake, Stage::Wake);
        a.record(Stage::Rem, Stage::Nrem3);
        let mut b = ConfusionMatrix::default();
        b.record(Stage::Nrem3, Stage::Nrem3);
        let mut c = ConfusionMatrix::default();
        c.record(Stage::Wake, Stage::Rem);
        c.record(Stage::Rem, Stage::Rem);

        let left = a.merge(&b).merge(&c);
        let right = a.merge(&b.merge(&c));
        assert_eq!(left, right);
        assert_eq!(left.total(), 5);
    }

    #[test]
    fn row_normalization_flags_empty_rows() {
        let mut m = ConfusionMatrix::default();
        m.record(Stage::Wake, Stage::Wake);
        m.record(Stage::Wake, Stage::Rem);
        let (rows, empty) = m.normalized();
        assert_eq!(empty, [false, true, true]);
        assert!((rows[0].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(rows[1], [0.0; 3]);
    }

    #[test]
    fn every_finite_slope_gets_exactly_one_stage() {
        let th = Thresholds::default();
        for i in -6000..=0 {
            let slope = i as f64 / 1000.0;
            let stage = classify_slope(slope, &th).unwrap();
            let by_hand = if slope > -2.45 {
                Stage::Wake
            } else if slope < -3.2 {
                Stage::Rem
            } else {
                Stage::Nrem3
            };
            assert_eq!(stage, by_hand, "slope {slope}");
        }
    }
}
