//! Scoring, confusion analysis, tau search, SNR sweeps and modality-gap analysis.

mod gap;
mod sweep;
mod tau;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::CsvTable;

pub use gap::{
    modality_gap_stats, prototype_distance_analysis, GapConfig, GapReport, PrototypeDistanceReport, SubsampleInfo,
};
pub use sweep::{snr_sweep, SweepCase, SweepMode, SweepRow, SweepTable};
pub use tau::{grid_search_tau, grid_search_tau_per_sample, parse_grid, TauGrid, TauSearchResult};

pub const TRUTH_SCHEMA_VERSION: u32 = 1;

/// Ground truth for one sample, one JSON object per line in truth manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleTruth {
    pub schema_version: u32,
    pub id: String,
    pub labels: Vec<String>,
    #[serde(default)]
    pub background: Option<String>,
}

impl SampleTruth {
    pub fn new(id: impl Into<String>, labels: Vec<String>, background: Option<String>) -> Self {
        Self {
            schema_version: TRUTH_SCHEMA_VERSION,
            id: id.into(),
            labels,
            background,
        }
    }

    /// The single label of a single-label sample.
    pub fn single_label(&self) -> Result<&str> {
        match self.labels.as_slice() {
            [one] => Ok(one),
            _ => Err(Error::InvalidArgument(format!(
                "sample `{}` has {} labels, expected exactly one",
                self.id,
                self.labels.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiLabelMetric {
    /// A sample is correct iff the predicted set equals the truth set.
    #[default]
    ExactMatch,
    /// Mean intersection-over-union of predicted and truth sets (two empty sets score 1).
    Jaccard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub vocabulary: Vec<String>,
    /// Per true class; `None` when the class has no samples.
    pub per_class_accuracy: BTreeMap<String, Option<f64>>,
    /// Rows are true classes, columns predicted classes, in vocabulary order.
    pub confusion: Vec<Vec<u64>>,
    pub mean_pred_classes_per_audio: f64,
    pub n_samples: usize,
    pub metric: String,
    pub threshold: Option<f64>,
    #[serde(default)]
    pub fingerprint: BTreeMap<String, serde_json::Value>,
}

fn class_index(vocabulary: &[String]) -> BTreeMap<&str, usize> {
    vocabulary.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect()
}

fn lookup(index: &BTreeMap<&str, usize>, class: &str) -> Result<usize> {
    index.get(class).copied().ok_or_else(|| Error::UnknownClass(class.to_string()))
}

fn check_ids<A, B>(a: &BTreeMap<String, A>, b: &BTreeMap<String, B>) -> Result<()> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(Error::IdMismatch);
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Single-label accuracy and confusion matrix.
pub fn evaluate(
    predictions: &BTreeMap<String, String>,
    truths: &BTreeMap<String, String>,
    vocabulary: &[String],
) -> Result<EvaluationReport> {
    check_ids(predictions, truths)?;
    let index = class_index(vocabulary);
    let k = vocabulary.len();
    let mut confusion = vec![vec![0u64; k]; k];
    for (id, truth) in truths {
        let t = lookup(&index, truth)?;
        let p = lookup(&index, &predictions[id])?;
        confusion[t][p] += 1;
    }
    let n = truths.len();
    let trace: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let per_class_accuracy = vocabulary
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let row: u64 = confusion[i].iter().sum();
            (c.clone(), (row > 0).then(|| confusion[i][i] as f64 / row as f64))
        })
        .collect();
    Ok(EvaluationReport {
        accuracy: trace as f64 / n as f64,
        vocabulary: vocabulary.to_vec(),
        per_class_accuracy,
        confusion,
        mean_pred_classes_per_audio: 1.0,
        n_samples: n,
        metric: "single_label".into(),
        threshold: None,
        fingerprint: BTreeMap::new(),
    })
}

/// Multi-label scoring. The confusion matrix counts, for each sample, every
/// (true class, predicted class) pair from its two sets; per-class accuracy is
/// the fraction of samples containing the class whose prediction also does.
pub fn evaluate_multilabel(
    pred_sets: &BTreeMap<String, BTreeSet<String>>,
    truth_sets: &BTreeMap<String, BTreeSet<String>>,
    vocabulary: &[String],
    threshold: Option<f64>,
    metric: MultiLabelMetric,
) -> Result<EvaluationReport> {
    check_ids(pred_sets, truth_sets)?;
    let index = class_index(vocabulary);
    let k = vocabulary.len();
    let mut confusion = vec![vec![0u64; k]; k];
    let mut hits = vec![0u64; k];
    let mut support = vec![0u64; k];
    let mut score = 0.0f64;
    let mut pred_total = 0usize;
    for (id, truth) in truth_sets {
        let pred = &pred_sets[id];
        let t_idx = truth.iter().map(|c| lookup(&index, c)).collect::<Result<Vec<_>>>()?;
        let p_idx = pred.iter().map(|c| lookup(&index, c)).collect::<Result<Vec<_>>>()?;
        for &t in &t_idx {
            support[t] += 1;
            if p_idx.contains(&t) {
                hits[t] += 1;
            }
            for &p in &p_idx {
                confusion[t][p] += 1;
            }
        }
        pred_total += pred.len();
        score += match metric {
            MultiLabelMetric::ExactMatch => f64::from(u8::from(pred == truth)),
            MultiLabelMetric::Jaccard => {
                let union = pred.union(truth).count();
                if union == 0 {
                    1.0
                } else {
                    pred.intersection(truth).count() as f64 / union as f64
                }
            }
        };
    }
    let n = truth_sets.len();
    let per_class_accuracy = vocabulary
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), (support[i] > 0).then(|| hits[i] as f64 / support[i] as f64)))
        .collect();
    Ok(EvaluationReport {
        accuracy: score / n as f64,
        vocabulary: vocabulary.to_vec(),
        per_class_accuracy,
        confusion,
        mean_pred_classes_per_audio: pred_total as f64 / n as f64,
        n_samples: n,
        metric: match metric {
            MultiLabelMetric::ExactMatch => "multilabel_exact_match".into(),
            MultiLabelMetric::Jaccard => "multilabel_jaccard".into(),
        },
        threshold,
        fingerprint: BTreeMap::new(),
    })
}

/// Off-diagonal, non-zero entries of the class's confusion row, highest count
/// first; equal counts keep vocabulary order.
pub fn top_confusions(report: &EvaluationReport, true_class: &str, k: usize) -> Result<Vec<(String, u64)>> {
    let row = report
        .vocabulary
        .iter()
        .position(|c| c == true_class)
        .ok_or_else(|| Error::UnknownClass(true_class.to_string()))?;
    let mut out: Vec<(usize, u64)> = report.confusion[row]
        .iter()
        .enumerate()
        .filter(|&(j, &n)| j != row && n > 0)
        .map(|(j, &n)| (j, n))
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(out
        .into_iter()
        .take(k)
        .map(|(j, n)| (report.vocabulary[j].clone(), n))
        .collect())
}

impl EvaluationReport {
    /// Confusion matrix with a header row of predicted classes.
    pub fn confusion_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(std::iter::once("true\\predicted".to_string()).chain(self.vocabulary.iter().cloned()));
        for (c, row) in self.vocabulary.iter().zip(&self.confusion) {
            t.push(std::iter::once(c.clone()).chain(row.iter().map(u64::to_string)));
        }
        t
    }

    /// Per-class accuracy as plot data (class on the x axis).
    pub fn per_class_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["class", "accuracy", "n_samples"]);
        for (c, row) in self.vocabulary.iter().zip(&self.confusion) {
            let n: u64 = row.iter().sum();
            t.push([c.clone(), crate::report::fmt_opt(self.per_class_accuracy[c]), n.to_string()]);
        }
        t
    }

    pub fn write_plot_data(&self, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        let a = dir.join("confusion.csv");
        let b = dir.join("per_class_accuracy.csv");
        self.confusion_csv().write(&a)?;
        self.per_class_csv().write(&b)?;
        Ok(vec![a, b])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn vocab(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_and_all_wrong() {
        let v = vocab(&["a", "b"]);
        let t = map(&[("1", "a"), ("2", "b"), ("3", "a")]);
        let r = evaluate(&t, &t, &v).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.confusion, vec![vec![2, 0], vec![0, 1]]);
        let wrong = map(&[("1", "b"), ("2", "a"), ("3", "b")]);
        assert_eq!(evaluate(&wrong, &t, &v).unwrap().accuracy, 0.0);
    }

    #[test]
    fn three_of_four() {
        // enumerated by hand: s1 a->a, s2 a->b, s3 b->b, s4 c->c
        let v = vocab(&["a", "b", "c"]);
        let t = map(&[("s1", "a"), ("s2", "a"), ("s3", "b"), ("s4", "c")]);
        let p = map(&[("s1", "a"), ("s2", "b"), ("s3", "b"), ("s4", "c")]);
        let r = evaluate(&p, &t, &v).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.confusion, vec![vec![1, 1, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert_eq!(r.per_class_accuracy["a"], Some(0.5));
        assert_eq!(r.n_samples, 4);
        for (i, row) in r.confusion.iter().enumerate() {
            let n = t.values().filter(|c| **c == v[i]).count() as u64;
            assert_eq!(row.iter().sum::<u64>(), n);
        }
    }

    #[test]
    fn evaluation_errors() {
        let v = vocab(&["a"]);
        let t = map(&[("1", "a")]);
        assert!(matches!(evaluate(&map(&[("2", "a")]), &t, &v), Err(Error::IdMismatch)));
        assert!(matches!(evaluate(&map(&[("1", "z")]), &t, &v), Err(Error::UnknownClass(_))));
    }

    fn sets(pairs: &[(&str, &[&str])]) -> BTreeMap<String, BTreeSet<String>> {
        pairs
            .iter()
            .map(|(id, s)| (id.to_string(), s.iter().map(|c| c.to_string()).collect()))
            .collect()
    }

    #[test]
    fn multilabel_examples() {
        let v = vocab(&["a", "b", "c"]);
        let truth = sets(&[("1", &["a", "b"]), ("2", &["c"])]);
        let empty = sets(&[("1", &[]), ("2", &[])]);
        let r = evaluate_multilabel(&empty, &truth, &v, Some(0.5), MultiLabelMetric::ExactMatch).unwrap();
        assert_eq!(r.mean_pred_classes_per_audio, 0.0);
        assert_eq!(r.accuracy, 0.0);
        let r = evaluate_multilabel(&truth, &truth, &v, Some(0.5), MultiLabelMetric::ExactMatch).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.mean_pred_classes_per_audio, 1.5);
        let partial = sets(&[("1", &["a"]), ("2", &["c"])]);
        let r = evaluate_multilabel(&partial, &truth, &v, None, MultiLabelMetric::ExactMatch).unwrap();
        assert_eq!(r.accuracy, 0.5);
        let r = evaluate_multilabel(&partial, &truth, &v, None, MultiLabelMetric::Jaccard).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.per_class_accuracy["b"], Some(0.0));
        assert!(matches!(
            evaluate_multilabel(&sets(&[("9", &[])]), &truth, &v, None, MultiLabelMetric::ExactMatch),
            Err(Error::IdMismatch)
        ));
    }

    #[test]
    fn top_confusions_examples() {
        let v = vocab(&["a", "b", "c"]);
        let diag = evaluate(&map(&[("1", "a")]), &map(&[("1", "a")]), &v).unwrap();
        assert!(top_confusions(&diag, "a", 3).unwrap().is_empty());
        let single = evaluate(&map(&[("1", "c")]), &map(&[("1", "a")]), &v).unwrap();
        assert_eq!(top_confusions(&single, "a", 3).unwrap(), vec![("c".to_string(), 1)]);
        // hand-built 3x3: row a = [5, 2, 2] -> b and c tie, vocabulary order wins
        let mut r = diag.clone();
        r.confusion = vec![vec![5, 2, 2], vec![1, 4, 3], vec![0, 0, 9]];
        assert_eq!(top_confusions(&r, "a", 5).unwrap(), vec![("b".into(), 2), ("c".into(), 2)]);
        assert_eq!(top_confusions(&r, "b", 1).unwrap(), vec![("c".into(), 3)]);
        assert!(top_confusions(&r, "c", 2).unwrap().is_empty());
        assert!(matches!(top_confusions(&r, "zz", 1), Err(Error::UnknownClass(_))));
    }

    #[test]
    fn csv_plot_data() {
        let v = vocab(&["a", "b"]);
        let r = evaluate(&map(&[("1", "a"), ("2", "a")]), &map(&[("1", "a"), ("2", "b")]), &v).unwrap();
        assert_eq!(r.confusion_csv().render(), "true\\predicted,a,b\na,1,0\nb,1,0\n");
        assert_eq!(r.per_class_csv().render(), "class,accuracy,n_samples\na,1.000000,1\nb,0.000000,1\n");
    }
}
