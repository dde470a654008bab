//! Occurrence scoring: frame-tolerance matching, precision/recall/F1,
//! timing MAE, and report emission.
//!
//! A prediction is a true positive when it crossed the threshold and lies
//! within `delta` frames of the ground truth; a crossed prediction outside
//! the tolerance counts as both a false positive and a missed ground truth;
//! an uncrossed prediction is a plain miss. MAE is computed over every clip
//! using the argmax fallback estimate, so it stays defined at zero coverage;
//! `coverage` reports how often the threshold was crossed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::ClipAnnotation;
use crate::model::{forecast_occurrence, GiftModel, OccurrencePrediction, DEFAULT_THRESHOLD};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("clip sets differ: {0}")]
    KeyMismatch(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("prediction failed for {clip_id}: {detail}")]
    Prediction { clip_id: String, detail: String },
}

/// Matching tolerance in frames; 0 demands the exact frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub delta: u32,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { delta: 0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

/// Score aligned prediction/ground-truth pairs under the tolerance rule.
pub fn match_occurrences(
    pairs: &[(OccurrencePrediction, u32)],
    cfg: &MatchConfig,
) -> MatchCounts {
    let mut counts = MatchCounts::default();
    for (pred, gt) in pairs {
        if pred.crossed_threshold {
            let err = (pred.point_estimate as i64 - *gt as i64).unsigned_abs();
            if err <= cfg.delta as u64 {
                counts.tp += 1;
            } else {
                counts.fp += 1;
                counts.fn_ += 1;
            }
        } else {
            counts.fn_ += 1;
        }
    }
    counts
}

/// Precision, recall, and F1 with zero-denominator guards.
pub fn prf1(counts: &MatchCounts) -> (f64, f64, f64) {
    let precision = if counts.tp + counts.fp > 0 {
        counts.tp as f64 / (counts.tp + counts.fp) as f64
    } else {
        0.0
    };
    let recall = if counts.tp + counts.fn_ > 0 {
        counts.tp as f64 / (counts.tp + counts.fn_) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f1)
}

/// Mean absolute frame deviation over all pairs, using the fallback point
/// estimates of uncrossed predictions.
pub fn mae(pairs: &[(OccurrencePrediction, u32)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let total: f64 = pairs
        .iter()
        .map(|(p, gt)| (p.point_estimate as f64 - *gt as f64).abs())
        .sum();
    total / pairs.len() as f64
}

/// Full metric report over one prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub mae: f64,
    pub coverage: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub n_clips: u64,
    pub delta: u32,
}

impl EvalReport {
    pub fn from_pairs(pairs: &[(OccurrencePrediction, u32)], cfg: &MatchConfig) -> EvalReport {
        let counts = match_occurrences(pairs, cfg);
        let (precision, recall, f1) = prf1(&counts);
        let crossed = pairs.iter().filter(|(p, _)| p.crossed_threshold).count();
        EvalReport {
            recall,
            precision,
            f1,
            mae: mae(pairs),
            coverage: if pairs.is_empty() {
                0.0
            } else {
                crossed as f64 / pairs.len() as f64
            },
            tp: counts.tp,
            fp: counts.fp,
            fn_: counts.fn_,
            n_clips: pairs.len() as u64,
            delta: cfg.delta,
        }
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut bytes = serde_json::to_vec_pretty(&value).expect("report serializes");
        bytes.push(b'\n');
        bytes
    }

    /// Header plus one data line; metric columns first, in the order
    /// recall, precision, f1, mae.
    pub fn to_csv(&self) -> String {
        format!(
            "recall,precision,f1,mae,coverage,n_clips,delta\n{},{},{},{},{},{},{}\n",
            self.recall, self.precision, self.f1, self.mae, self.coverage, self.n_clips, self.delta
        )
    }
}

/// Anything that can map a clip to an occurrence prediction.
pub trait OccurrencePredictor: Sync {
    fn forecast_clip(&self, clip: &ClipAnnotation) -> Result<OccurrencePrediction, String>;
}

/// The trained forecaster as a predictor.
pub struct ModelPredictor<'a> {
    pub model: &'a GiftModel,
    pub tau: usize,
    pub threshold: f64,
}

impl<'a> ModelPredictor<'a> {
    pub fn new(model: &'a GiftModel, tau: usize) -> Self {
        ModelPredictor {
            model,
            tau,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl OccurrencePredictor for ModelPredictor<'_> {
    fn forecast_clip(&self, clip: &ClipAnnotation) -> Result<OccurrencePrediction, String> {
        forecast_occurrence(self.model, clip, self.tau, self.threshold).map_err(|e| e.to_string())
    }
}

/// Constant predictor emitting the rounded mean training occurrence frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeanFramePredictor {
    pub frame: u32,
}

impl OccurrencePredictor for MeanFramePredictor {
    fn forecast_clip(&self, _clip: &ClipAnnotation) -> Result<OccurrencePrediction, String> {
        Ok(OccurrencePrediction {
            point_estimate: self.frame,
            crossed_threshold: true,
            peak_score: 1.0,
        })
    }
}

/// Yardstick baseline fitted on a training split.
pub fn baseline_mean_predictor(train: &[ClipAnnotation]) -> Result<MeanFramePredictor, EvalError> {
    if train.is_empty() {
        return Err(EvalError::EmptyInput("train"));
    }
    let mean = train
        .iter()
        .map(|c| c.occurrence_frame as f64)
        .sum::<f64>()
        / train.len() as f64;
    Ok(MeanFramePredictor {
        frame: mean.round() as u32,
    })
}

fn gift_threads() -> usize {
    std::env::var("GIFT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Run a predictor over a clip set and score against each clip's stored
/// occurrence frame. Deterministic; per-clip inference fans out over
/// GIFT_THREADS threads when that is set above 1.
pub fn evaluate(
    predictor: &dyn OccurrencePredictor,
    clips: &[ClipAnnotation],
    cfg: &MatchConfig,
) -> Result<EvalReport, EvalError> {
    if clips.is_empty() {
        return Err(EvalError::EmptyInput("evaluation set"));
    }
    let threads = gift_threads();
    let predictions: Vec<Result<OccurrencePrediction, String>> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(|| {
            use rayon::prelude::*;
            clips
                .par_iter()
                .map(|c| predictor.forecast_clip(c))
                .collect()
        })
    } else {
        clips.iter().map(|c| predictor.forecast_clip(c)).collect()
    };
    let mut pairs = Vec::with_capacity(clips.len());
    for (clip, pred) in clips.iter().zip(predictions) {
        let pred = pred.map_err(|detail| EvalError::Prediction {
            clip_id: clip.clip_id.clone(),
            detail,
        })?;
        pairs.push((pred, clip.occurrence_frame));
    }
    Ok(EvalReport::from_pairs(&pairs, cfg))
}

/// Convenience wrapper scoring a trained model.
pub fn evaluate_model(
    model: &GiftModel,
    clips: &[ClipAnnotation],
    tau: usize,
    threshold: f64,
    cfg: &MatchConfig,
) -> Result<EvalReport, EvalError> {
    let predictor = ModelPredictor {
        model,
        tau,
        threshold,
    };
    evaluate(&predictor, clips, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(frame: u32, crossed: bool) -> OccurrencePrediction {
        OccurrencePrediction {
            point_estimate: frame,
            crossed_threshold: crossed,
            peak_score: if crossed { 0.9 } else { 0.2 },
        }
    }

    #[test]
    fn matching_rules() {
        let cfg = MatchConfig { delta: 0 };
        let counts = match_occurrences(&[(pred(30, true), 30)], &cfg);
        assert_eq!(counts, MatchCounts { tp: 1, fp: 0, fn_: 0 });

        let counts = match_occurrences(&[(pred(33, true), 30)], &cfg);
        assert_eq!(counts, MatchCounts { tp: 0, fp: 1, fn_: 1 });

        let counts = match_occurrences(&[(pred(33, true), 30)], &MatchConfig { delta: 5 });
        assert_eq!(counts, MatchCounts { tp: 1, fp: 0, fn_: 0 });

        let counts = match_occurrences(&[(pred(30, false), 30)], &cfg);
        assert_eq!(counts, MatchCounts { tp: 0, fp: 0, fn_: 1 });
    }

    #[test]
    fn published_operating_point_recombines() {
        // tp 3 / fp 14 / fn 372 reproduces P 0.1765, R 0.0080.
        let counts = MatchCounts {
            tp: 3,
            fp: 14,
            fn_: 372,
        };
        let (p, r, f1) = prf1(&counts);
        assert!((p - 0.1765).abs() < 5e-5);
        assert!((r - 0.0080).abs() < 5e-5);
        assert!((f1 - 0.0153).abs() < 5e-4, "f1 {f1}");
    }

    #[test]
    fn prf1_guards() {
        let zero = MatchCounts::default();
        assert_eq!(prf1(&zero), (0.0, 0.0, 0.0));
        let perfect = MatchCounts { tp: 5, fp: 0, fn_: 0 };
        assert_eq!(prf1(&perfect), (1.0, 1.0, 1.0));
        let no_tp = MatchCounts { tp: 0, fp: 3, fn_: 7 };
        assert_eq!(prf1(&no_tp), (0.0, 0.0, 0.0));
    }

    #[test]
    fn mae_arithmetic() {
        let pairs = vec![(pred(12, true), 10), (pred(20, false), 25)];
        assert!((mae(&pairs) - 3.5).abs() < 1e-12);
        let mut rev = pairs.clone();
        rev.reverse();
        assert_eq!(mae(&pairs), mae(&rev));
        assert_eq!(mae(&[(pred(7, true), 7)]), 0.0);
    }

    #[test]
    fn report_from_pairs() {
        let pairs = vec![
            (pred(30, true), 30),
            (pred(35, true), 30),
            (pred(40, false), 40),
        ];
        let report = EvalReport::from_pairs(&pairs, &MatchConfig::default());
        assert_eq!(report.tp, 1);
        assert_eq!(report.fp, 1);
        assert_eq!(report.fn_, 2);
        assert_eq!(report.n_clips, 3);
        assert!((report.coverage - 2.0 / 3.0).abs() < 1e-12);
        let csv = report.to_csv();
        assert!(csv.starts_with("recall,precision,f1,mae,coverage,n_clips,delta\n"));
        assert_eq!(csv.lines().count(), 2);
    }

    proptest! {
        #[test]
        fn f1_bounds_and_symmetry(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50) {
            let (p, r, f1) = prf1(&MatchCounts { tp, fp, fn_ });
            prop_assert!((0.0..=1.0).contains(&f1));
            prop_assert!(f1 <= 2.0 * p.min(r) + 1e-12);
            // Swapping fp and fn swaps precision and recall but keeps F1.
            let (p2, r2, f1_swapped) = prf1(&MatchCounts { tp, fp: fn_, fn_: fp });
            prop_assert!((p - r2).abs() < 1e-12 && (r - p2).abs() < 1e-12);
            prop_assert!((f1 - f1_swapped).abs() < 1e-12);
        }

        #[test]
        fn delta_monotonicity(
            frames in prop::collection::vec((11u32..60, 11u32..60, any::<bool>()), 1..40),
            d1 in 0u32..10,
            d2 in 0u32..10,
        ) {
            let (lo, hi) = (d1.min(d2), d1.max(d2));
            let pairs: Vec<(OccurrencePrediction, u32)> = frames
                .iter()
                .map(|(p, gt, crossed)| (pred(*p, *crossed), *gt))
                .collect();
            let a = match_occurrences(&pairs, &MatchConfig { delta: lo });
            let b = match_occurrences(&pairs, &MatchConfig { delta: hi });
            prop_assert!(b.tp >= a.tp);
            let (pa, ra, _) = prf1(&a);
            let (pb, rb, _) = prf1(&b);
            prop_assert!(rb >= ra - 1e-12);
            prop_assert!(pb >= pa - 1e-12);
        }
    }

    #[test]
    fn oracle_predictor_scores_perfectly() {
        use crate::synth::{generate_clip, SynthConfig};
        struct Oracle;
        impl OccurrencePredictor for Oracle {
            fn forecast_clip(&self, clip: &ClipAnnotation) -> Result<OccurrencePrediction, String> {
                Ok(OccurrencePrediction {
                    point_estimate: clip.occurrence_frame,
                    crossed_threshold: true,
                    peak_score: 1.0,
                })
            }
        }
        let cfg = SynthConfig {
            n_clips: 5,
            ..SynthConfig::default()
        };
        let clips: Vec<ClipAnnotation> =
            (0..5).map(|i| generate_clip(&cfg, i).unwrap()).collect();
        for delta in [0, 3] {
            let report = evaluate(&Oracle, &clips, &MatchConfig { delta }).unwrap();
            assert_eq!(
                (report.recall, report.precision, report.f1, report.mae),
                (1.0, 1.0, 1.0, 0.0)
            );
        }
    }

    #[test]
    fn never_crossing_predictor() {
        use crate::synth::{generate_clip, SynthConfig};
        struct Never;
        impl OccurrencePredictor for Never {
            fn forecast_clip(&self, _clip: &ClipAnnotation) -> Result<OccurrencePrediction, String> {
                Ok(OccurrencePrediction {
                    point_estimate: 20,
                    crossed_threshold: false,
                    peak_score: 0.1,
                })
            }
        }
        let cfg = SynthConfig {
            n_clips: 4,
            ..SynthConfig::default()
        };
        let clips: Vec<ClipAnnotation> =
            (0..4).map(|i| generate_clip(&cfg, i).unwrap()).collect();
        let report = evaluate(&Never, &clips, &MatchConfig::default()).unwrap();
        assert_eq!(report.recall, 0.0);
        assert_eq!(report.precision, 0.0);
        assert_eq!(report.coverage, 0.0);
        assert!(report.mae.is_finite() && report.mae > 0.0);
    }

    #[test]
    fn baseline_mean_predictor_rounds() {
        use crate::synth::{generate_clip, SynthConfig};
        let cfg = SynthConfig {
            n_clips: 2,
            ..SynthConfig::default()
        };
        let mut clips: Vec<ClipAnnotation> =
            (0..2).map(|i| generate_clip(&cfg, i).unwrap()).collect();
        clips[0].occurrence_frame = 20;
        clips[1].occurrence_frame = 30;
        let p = baseline_mean_predictor(&clips).unwrap();
        assert_eq!(p.frame, 25);
        assert_eq!(
            baseline_mean_predictor(&clips).unwrap().frame,
            p.frame
        );
        assert!(baseline_mean_predictor(&[]).is_err());
    }
}
