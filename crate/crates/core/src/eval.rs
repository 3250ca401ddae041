//! Known-class-ratio splits, (K+1)-way inference and macro-F1/accuracy
//! metrics over the confusion matrix with the open class indexed last.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::ellipsoid::{contains, BoundarySet};
use crate::error::{Error, Result};
use crate::feature_space::{shuffle, LabeledDataset, LabeledSample};
use crate::rng::substream;

/// Outcome of (K+1)-way inference for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Known(usize),
    Open,
}

impl Prediction {
    /// Open maps to `-1`, known classes to their id.
    pub fn to_label(self) -> i32 {
        match self {
            Self::Known(k) => k as i32,
            Self::Open => -1,
        }
    }
}

/// Assigns `z` to the nearest centroid's class if that single ellipsoid
/// contains it, otherwise rejects it as open. Only the nearest boundary is
/// consulted, even if some other ellipsoid contains `z`.
pub fn predict(bs: &BoundarySet, z: &[f64]) -> Result<Prediction> {
    let j = bs.nearest_class(z)?;
    if contains(&bs.ellipsoids[j], z)? {
        Ok(Prediction::Known(j))
    } else {
        Ok(Prediction::Open)
    }
}

/// Confusion matrix and derived metrics over K known classes plus open.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `confusion[true][predicted]`, open indexed last.
    pub confusion: Vec<Vec<u64>>,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    /// Overall accuracy: trace over total.
    pub accuracy: f64,
    /// Unweighted mean of per-class recall, the other reading of
    /// "average accuracy over all classes".
    pub mean_class_recall: f64,
    /// Classes with zero support and zero predictions; their F1 is
    /// defined as zero.
    pub absent_classes: Vec<usize>,
}

/// Derives every metric from a (K+1)x(K+1) confusion matrix.
pub fn report_from_confusion(confusion: Vec<Vec<u64>>) -> EvalReport {
    let classes = confusion.len();
    let mut per_class_f1 = Vec::with_capacity(classes);
    let mut recalls = Vec::with_capacity(classes);
    let mut absent = Vec::new();
    let mut trace = 0u64;
    let mut total = 0u64;
    for c in 0..classes {
        let tp = confusion[c][c];
        let support: u64 = confusion[c].iter().sum();
        let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
        trace += tp;
        total += support;
        let precision = if predicted > 0 {
            tp as f64 / predicted as f64
        } else {
            0.0
        };
        let recall = if support > 0 {
            tp as f64 / support as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        if support == 0 && predicted == 0 {
            absent.push(c);
        }
        per_class_f1.push(f1);
        recalls.push(recall);
    }
    let macro_f1 = per_class_f1.iter().sum::<f64>() / classes.max(1) as f64;
    let accuracy = if total > 0 {
        trace as f64 / total as f64
    } else {
        0.0
    };
    let mean_class_recall = recalls.iter().sum::<f64>() / classes.max(1) as f64;
    EvalReport {
        confusion,
        per_class_f1,
        macro_f1,
        accuracy,
        mean_class_recall,
        absent_classes: absent,
    }
}

/// Runs inference over the test set and scores it. Test labels must be in
/// `[0, K)` for known samples or `-1` for open ones.
pub fn evaluate(bs: &BoundarySet, test: &LabeledDataset) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let k = bs.class_count();
    let mut confusion = vec![vec![0u64; k + 1]; k + 1];
    for s in &test.samples {
        if s.label >= k as i32 {
            return Err(Error::LabelOutOfRange {
                label: s.label,
                classes: k,
            });
        }
        let true_idx = if s.label < 0 { k } else { s.label as usize };
        let pred_idx = match predict(bs, &s.embedding)? {
            Prediction::Known(j) => j,
            Prediction::Open => k,
        };
        confusion[true_idx][pred_idx] += 1;
    }
    Ok(report_from_confusion(confusion))
}

impl EvalReport {
    /// JSON document with run metadata attached.
    pub fn to_json(&self, kcr: f64, seed: u64) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "{{\"macro_f1\":{},\"accuracy\":{},\"per_class_f1\":[",
            self.macro_f1, self.accuracy
        );
        for (i, f) in self.per_class_f1.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{f}");
        }
        out.push_str("],\"confusion\":[");
        for (i, row) in self.confusion.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push('[');
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push(']');
        }
        let _ = write!(
            out,
            "],\"kcr\":{kcr},\"seed\":{seed},\"mean_class_recall\":{},\"absent_classes\":[",
            self.mean_class_recall
        );
        for (i, c) in self.absent_classes.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{c}");
        }
        out.push_str("]}");
        out
    }
}

/// Train/validation/test partitions of one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

/// A known-class-ratio experiment: the chosen known classes relabeled to
/// `[0, K)`, with every other class dropped from train/val and marked open
/// in test.
#[derive(Debug, Clone)]
pub struct KcrSplit {
    /// Original ids of the classes kept as known.
    pub known_classes: Vec<i32>,
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
    /// Original id to internal id.
    pub mapping: BTreeMap<i32, i32>,
}

/// Selects `round(kcr * C)` known classes by a seeded shuffle of class ids.
/// Internal ids follow ascending original id.
pub fn kcr_split(splits: &DatasetSplits, kcr: f64, seed: u64) -> Result<KcrSplit> {
    let total_classes = splits
        .train
        .class_count
        .max(splits.val.class_count)
        .max(splits.test.class_count);
    if total_classes == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(kcr > 0.0 && kcr <= 1.0) {
        return Err(Error::NoKnownClasses(kcr));
    }
    let keep = (kcr * total_classes as f64).round() as usize;
    if keep == 0 {
        return Err(Error::NoKnownClasses(kcr));
    }

    let mut class_order: Vec<usize> = (0..total_classes).collect();
    let mut rng = substream(seed, "split");
    shuffle(&mut class_order, &mut rng);
    let mut known: Vec<i32> = class_order[..keep.min(total_classes)]
        .iter()
        .map(|c| *c as i32)
        .collect();
    known.sort_unstable();

    let mapping: BTreeMap<i32, i32> = known
        .iter()
        .enumerate()
        .map(|(internal, original)| (*original, internal as i32))
        .collect();

    let relabel_closed = |data: &LabeledDataset| -> Result<LabeledDataset> {
        let samples: Vec<LabeledSample> = data
            .samples
            .iter()
            .filter_map(|s| {
                mapping.get(&s.label).map(|internal| LabeledSample {
                    embedding: s.embedding.clone(),
                    label: *internal,
                })
            })
            .collect();
        LabeledDataset::new(samples, data.final_form)
    };
    let relabel_open = |data: &LabeledDataset| -> Result<LabeledDataset> {
        let samples: Vec<LabeledSample> = data
            .samples
            .iter()
            .map(|s| LabeledSample {
                embedding: s.embedding.clone(),
                label: mapping.get(&s.label).copied().unwrap_or(-1),
            })
            .collect();
        LabeledDataset::new(samples, data.final_form)
    };

    Ok(KcrSplit {
        known_classes: known,
        train: relabel_closed(&splits.train)?,
        val: relabel_closed(&splits.val)?,
        test: relabel_open(&splits.test)?,
        mapping,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ellipsoid::Ellipsoid;
    use crate::feature_space::EmbeddingVector;
    use crate::rng::substream;
    use rand::Rng;

    fn two_ball_set() -> BoundarySet {
        BoundarySet::new(vec![
            Ellipsoid::ball(vec![0.0, 0.0], 1.0).unwrap(),
            Ellipsoid::ball(vec![10.0, 0.0], 1.0).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn predict_centroid_hits_its_class() {
        let bs = two_ball_set();
        assert_eq!(predict(&bs, &[0.0, 0.0]).unwrap(), Prediction::Known(0));
        assert_eq!(predict(&bs, &[10.0, 0.0]).unwrap(), Prediction::Known(1));
    }

    #[test]
    fn predict_rejects_outside_nearest() {
        let bs = two_ball_set();
        // nearest centroid is class 1, but the point is outside its ball
        assert_eq!(predict(&bs, &[5.1, 3.0]).unwrap(), Prediction::Open);
    }

    #[test]
    fn predict_tie_breaks_to_smallest_class() {
        let bs = BoundarySet::new(vec![
            Ellipsoid::ball(vec![0.0, 0.0], 0.1).unwrap(),
            Ellipsoid::ball(vec![2.0, 0.0], 5.0).unwrap(),
        ])
        .unwrap();
        // equidistant from both centroids; class 0 wins the tie and its
        // tiny ball rejects, even though class 1 would contain the point
        assert_eq!(predict(&bs, &[1.0, 0.0]).unwrap(), Prediction::Open);
    }

    #[test]
    fn predict_dimension_mismatch() {
        let bs = two_ball_set();
        assert!(matches!(
            predict(&bs, &[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn report_hand_case() {
        // K = 1 plus open: [[5,5],[0,10]]
        let report = report_from_confusion(vec![vec![5, 5], vec![0, 10]]);
        assert!((report.per_class_f1[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.per_class_f1[1] - 0.8).abs() < 1e-12);
        assert!((report.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        assert!((report.macro_f1 - 0.7333).abs() < 1e-4);
        assert!((report.accuracy - 0.75).abs() < 1e-12);
    }

    #[test]
    fn report_perfect_predictions() {
        let report = report_from_confusion(vec![
            vec![7, 0, 0],
            vec![0, 9, 0],
            vec![0, 0, 4],
        ]);
        assert_eq!(report.macro_f1, 1.0);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.mean_class_recall, 1.0);
        assert!(report.absent_classes.is_empty());
    }

    #[test]
    fn evaluate_degenerate_all_open_predictor() {
        // Boundaries so tight everything is rejected; test has no open
        // samples: accuracy 0, known-class F1s 0.
        let bs = BoundarySet::new(vec![
            Ellipsoid::ball(vec![0.0, 0.0], 1e-6).unwrap(),
            Ellipsoid::ball(vec![10.0, 0.0], 1e-6).unwrap(),
        ])
        .unwrap();
        let test = LabeledDataset::new(
            vec![
                LabeledSample::new(vec![0.5, 0.0], 0),
                LabeledSample::new(vec![9.5, 0.0], 1),
            ],
            true,
        )
        .unwrap();
        let report = evaluate(&bs, &test).unwrap();
        assert_eq!(report.accuracy, 0.0);
        assert_eq!(report.per_class_f1[0], 0.0);
        assert_eq!(report.per_class_f1[1], 0.0);
    }

    #[test]
    fn evaluate_empty_test_set() {
        let bs = two_ball_set();
        let test = LabeledDataset::new(vec![], true).unwrap();
        assert!(matches!(evaluate(&bs, &test), Err(Error::EmptyTestSet)));
    }

    #[test]
    fn evaluate_row_sums_match_support() {
        let mut rng = substream(30, "test");
        let bs = two_ball_set();
        let mut samples = Vec::new();
        let mut counts = [0u64; 3];
        for _ in 0..200 {
            let label = match rng.random_range(0..3) {
                0 => 0,
                1 => 1,
                _ => -1,
            };
            let v: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * 12.0 - 1.0).collect();
            counts[if label < 0 { 2 } else { label as usize }] += 1;
            samples.push(LabeledSample::new(v, label));
        }
        let test = LabeledDataset::new(samples, true).unwrap();
        let report = evaluate(&bs, &test).unwrap();
        for (c, row) in report.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<u64>(), counts[c]);
        }
    }

    #[test]
    fn evaluate_matches_ball_rule_with_identity_matrices() {
        let mut rng = substream(31, "test");
        let bs = two_ball_set();
        for _ in 0..500 {
            let z: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * 14.0 - 2.0).collect();
            // independent nearest-centroid-plus-radius rule
            let d0 = crate::linalg::distance(&z, &bs.ellipsoids[0].centroid);
            let d1 = crate::linalg::distance(&z, &bs.ellipsoids[1].centroid);
            let (j, dj) = if d1 < d0 { (1, d1) } else { (0, d0) };
            let expected = if dj <= bs.ellipsoids[j].scale {
                Prediction::Known(j)
            } else {
                Prediction::Open
            };
            assert_eq!(predict(&bs, &z).unwrap(), expected);
        }
    }

    fn synthetic_corpus(classes: usize, per_class: usize) -> DatasetSplits {
        let make = |count: usize, offset: f64| {
            let samples: Vec<LabeledSample> = (0..classes)
                .flat_map(|k| {
                    (0..count).map(move |i| {
                        LabeledSample::new(
                            vec![k as f64 * 3.0 + offset, i as f64 * 0.01],
                            k as i32,
                        )
                    })
                })
                .collect();
            LabeledDataset::new(samples, true).unwrap()
        };
        DatasetSplits {
            train: make(per_class, 0.0),
            val: make(per_class / 2, 0.1),
            test: make(per_class, 0.2),
        }
    }

    #[test]
    fn kcr_quarter_of_twenty_keeps_five() {
        let splits = synthetic_corpus(20, 4);
        let split = kcr_split(&splits, 0.25, 0).unwrap();
        assert_eq!(split.known_classes.len(), 5);
        assert_eq!(split.train.class_count, 5);
        for s in &split.train.samples {
            assert!((0..5).contains(&s.label));
        }
        // open samples only in test
        assert!(split.train.samples.iter().all(|s| s.label >= 0));
        assert!(split.val.samples.iter().all(|s| s.label >= 0));
        assert!(split.test.samples.iter().any(|s| s.label == -1));
    }

    #[test]
    fn kcr_full_ratio_is_closed_set() {
        let splits = synthetic_corpus(6, 4);
        let split = kcr_split(&splits, 1.0, 3).unwrap();
        assert_eq!(split.known_classes.len(), 6);
        assert!(split.test.samples.iter().all(|s| s.label >= 0));
    }

    #[test]
    fn kcr_same_seed_same_selection() {
        let splits = synthetic_corpus(12, 3);
        let a = kcr_split(&splits, 0.5, 7).unwrap();
        let b = kcr_split(&splits, 0.5, 7).unwrap();
        assert_eq!(a.known_classes, b.known_classes);
        let c = kcr_split(&splits, 0.5, 8).unwrap();
        assert!(a.known_classes != c.known_classes || a.mapping == c.mapping);
    }

    #[test]
    fn kcr_never_leaks_unknown_samples() {
        let splits = synthetic_corpus(10, 6);
        for seed in 0..5 {
            let split = kcr_split(&splits, 0.3, seed).unwrap();
            let known: Vec<i32> = split.known_classes.clone();
            // reconstruct original labels present in train/val: all known
            for data in [&split.train, &split.val] {
                for s in &data.samples {
                    assert!(s.label >= 0 && (s.label as usize) < known.len());
                }
            }
        }
    }

    #[test]
    fn metrics_permutation_invariant_under_relabeling() {
        // permuting class identities consistently permutes per-class F1 but
        // leaves macro-F1 and accuracy unchanged
        let confusion = vec![vec![8, 2, 1], vec![1, 6, 0], vec![2, 1, 9]];
        let base = report_from_confusion(confusion.clone());
        // swap classes 0 and 1 in both axes
        let swapped = vec![
            vec![confusion[1][1], confusion[1][0], confusion[1][2]],
            vec![confusion[0][1], confusion[0][0], confusion[0][2]],
            vec![confusion[2][1], confusion[2][0], confusion[2][2]],
        ];
        let perm = report_from_confusion(swapped);
        assert!((base.macro_f1 - perm.macro_f1).abs() < 1e-15);
        assert!((base.accuracy - perm.accuracy).abs() < 1e-15);
        assert!((base.per_class_f1[0] - perm.per_class_f1[1]).abs() < 1e-15);
    }

    #[test]
    fn report_json_shape() {
        let report = report_from_confusion(vec![vec![1, 0], vec![0, 1]]);
        let json = report.to_json(0.25, 4);
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["macro_f1"], 1.0);
        assert_eq!(parsed["kcr"], 0.25);
        assert_eq!(parsed["seed"], 4);
        assert_eq!(parsed["confusion"][0][0], 1);
    }

    #[test]
    fn embedding_vector_deref_in_predict() {
        let bs = two_ball_set();
        let z = EmbeddingVector::new(vec![0.1, 0.0]);
        assert_eq!(predict(&bs, &z).unwrap(), Prediction::Known(0));
    }
}
