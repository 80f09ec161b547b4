use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::embedding::{unit_cosine, Embedding, EmbeddingSet, Modality};
use crate::error::{Error, Result};
use crate::oracle::rng_for;
use crate::prototypes::{PrototypeSet, Provenance};
use crate::report::{fmt_opt, CsvTable};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapConfig {
    /// Sets larger than this are subsampled (seeded) before pairing.
    pub max_per_set: usize,
    pub probe_epochs: usize,
    pub seed: u64,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            max_per_set: 2000,
            probe_epochs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleInfo {
    pub audio_used: usize,
    pub text_used: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GapReport {
    /// Mean cosine distance over distinct audio pairs; absent with fewer than two.
    pub mean_intra_audio: Option<f64>,
    pub mean_intra_text: Option<f64>,
    /// Mean cosine distance over audio-text pairs (pairs of one record with itself excluded).
    pub mean_inter: Option<f64>,
    pub linearly_separable: Option<bool>,
    pub probe_epochs: Option<usize>,
    pub subsample: Option<SubsampleInfo>,
    /// class -> provenance -> mean distance to that class's audio samples.
    pub per_class_prototype_distance: BTreeMap<String, BTreeMap<Provenance, Option<f64>>>,
}

#[inline]
fn distance<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    (1.0 - unit_cosine(a, b)).clamp(0.0, 2.0)
}

fn subsample<T: Scalar>(set: &EmbeddingSet<T>, max: usize, seed: u64, tag: u64) -> Vec<&Embedding<T>> {
    let mut all: Vec<&Embedding<T>> = set.iter().collect();
    if all.len() > max {
        let mut rng = rng_for(seed, &[0x0067_6170, tag]);
        all.shuffle(&mut rng);
        all.truncate(max);
    }
    all
}

fn mean_intra<T: Scalar>(xs: &[&Embedding<T>]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let mut sum = 0.0;
    let mut n = 0u64;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            sum += distance(xs[i].vector(), xs[j].vector());
            n += 1;
        }
    }
    Some(sum / n as f64)
}

fn mean_inter<T: Scalar>(a: &[&Embedding<T>], b: &[&Embedding<T>]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0u64;
    for x in a {
        for y in b {
            if x.id == y.id {
                continue;
            }
            sum += distance(x.vector(), y.vector());
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Perceptron with bias, audio = -1, text = +1. Returns true when an epoch
/// completes without a mistake within the budget.
fn perceptron_separable<T: Scalar>(audio: &[&Embedding<T>], text: &[&Embedding<T>], epochs: usize, seed: u64) -> bool {
    let dim = audio[0].dim();
    let mut samples: Vec<(&[T], f64)> = audio
        .iter()
        .map(|e| (e.vector(), -1.0))
        .chain(text.iter().map(|e| (e.vector(), 1.0)))
        .collect();
    let mut w = vec![0.0f64; dim];
    let mut bias = 0.0f64;
    let mut rng = rng_for(seed, &[0x7072_6f62]);
    for _ in 0..epochs {
        samples.shuffle(&mut rng);
        let mut mistakes = 0usize;
        for (x, y) in &samples {
            let act: f64 = w.iter().zip(x.iter()).map(|(w, x)| w * x.as_f64()).sum::<f64>() + bias;
            if y * act <= 0.0 {
                mistakes += 1;
                for (wi, xi) in w.iter_mut().zip(x.iter()) {
                    *wi += y * xi.as_f64();
                }
                bias += y;
            }
        }
        if mistakes == 0 {
            return true;
        }
    }
    false
}

/// Intra- and inter-modality cosine distances plus a linear separability probe.
///
/// Inputs are not required to carry their nominal modality, so the
/// statistic can be computed for any two sets.
pub fn modality_gap_stats<T: Scalar>(
    audio: &EmbeddingSet<T>,
    text: &EmbeddingSet<T>,
    cfg: &GapConfig,
) -> Result<GapReport> {
    audio.require_non_empty()?;
    text.require_non_empty()?;
    if audio.dim() != text.dim() {
        return Err(Error::DimMismatch {
            expected: audio.dim(),
            actual: text.dim(),
        });
    }
    let a = subsample(audio, cfg.max_per_set, cfg.seed, 0);
    let t = subsample(text, cfg.max_per_set, cfg.seed, 1);
    let subsampled = a.len() < audio.len() || t.len() < text.len();
    Ok(GapReport {
        mean_intra_audio: mean_intra(&a),
        mean_intra_text: mean_intra(&t),
        mean_inter: mean_inter(&a, &t),
        linearly_separable: Some(perceptron_separable(&a, &t, cfg.probe_epochs, cfg.seed)),
        probe_epochs: Some(cfg.probe_epochs),
        subsample: subsampled.then_some(SubsampleInfo {
            audio_used: a.len(),
            text_used: t.len(),
            seed: cfg.seed,
        }),
        per_class_prototype_distance: BTreeMap::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeDistanceReport {
    pub per_class_prototype_distance: BTreeMap<String, BTreeMap<Provenance, Option<f64>>>,
}

impl PrototypeDistanceReport {
    /// Grouped-bar plot data: one row per class, one column per provenance.
    pub fn plot_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(
            std::iter::once("class".to_string()).chain(Provenance::ALL.iter().map(|p| p.as_str().to_string())),
        );
        for (class, row) in &self.per_class_prototype_distance {
            t.push(std::iter::once(class.clone()).chain(Provenance::ALL.iter().map(|p| fmt_opt(row[p]))));
        }
        t
    }
}

/// Mean cosine distance from each prototype to the audio samples of its class,
/// for all three prototype kinds. Classes without samples are reported absent.
pub fn prototype_distance_analysis<T: Scalar>(
    protos: &BTreeMap<Provenance, PrototypeSet<T>>,
    labeled: &EmbeddingSet<T>,
) -> Result<PrototypeDistanceReport> {
    for p in Provenance::ALL {
        if !protos.contains_key(&p) {
            return Err(Error::MissingProvenance(p.as_str()));
        }
    }
    let vocab = protos[&Provenance::TextAnchor].class_ids();
    if protos.values().any(|s| s.class_ids() != vocab) {
        return Err(Error::VocabularyMismatch);
    }
    let mut out = BTreeMap::new();
    for class in &vocab {
        let samples: Vec<&Embedding<T>> = labeled
            .with_label(class)
            .filter(|e| e.modality == Modality::Audio)
            .collect();
        let mut row = BTreeMap::new();
        for (prov, set) in protos {
            let proto = set.get(class).expect("vocabularies checked equal");
            if proto.dim() != labeled.dim() {
                return Err(Error::DimMismatch {
                    expected: labeled.dim(),
                    actual: proto.dim(),
                });
            }
            let mean = (!samples.is_empty()).then(|| {
                samples.iter().map(|s| distance(proto.vector(), s.vector())).sum::<f64>() / samples.len() as f64
            });
            row.insert(*prov, mean);
        }
        out.insert(class.clone(), row);
    }
    Ok(PrototypeDistanceReport {
        per_class_prototype_distance: out,
    })
}
