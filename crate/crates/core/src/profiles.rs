//! Similarity profiles, background profiles and background-profile adaptation.
//!
//! A profile holds one cosine similarity per class prototype, in vocabulary
//! order. Adaptation subtracts a scaled background profile from the test
//! profile: `final = test - tau * background`. Adapted scores are never
//! clamped; decisions read the raw values.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::embedding::{unit_cosine, Embedding, Modality};
use crate::error::{Error, Result};
use crate::prototypes::PrototypeSet;
use crate::scalar::Scalar;

pub const DEFAULT_TEXT_TAU: f64 = 0.2;
pub const DEFAULT_AUDIO_TAU: f64 = 0.7;
pub const DEFAULT_MULTILABEL_THRESHOLD: f64 = 0.5;

/// Background prompt templates; `{BG}` is replaced by the background type.
pub const BACKGROUND_PROMPT_TEMPLATES: [&str; 3] = [
    "This is a sound of {BG}",
    "{BG} sounds in the background",
    "This is a sound of {BG} in the background",
];

pub fn render_background_prompts(background: &str) -> Vec<String> {
    BACKGROUND_PROMPT_TEMPLATES
        .iter()
        .map(|t| t.replace("{BG}", background))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundSource {
    Text,
    Audio,
}

impl BackgroundSource {
    pub fn default_tau(self) -> f64 {
        match self {
            BackgroundSource::Text => DEFAULT_TEXT_TAU,
            BackgroundSource::Audio => DEFAULT_AUDIO_TAU,
        }
    }

    pub fn modality(self) -> Modality {
        match self {
            BackgroundSource::Text => Modality::Text,
            BackgroundSource::Audio => Modality::Audio,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BackgroundSource::Text => "text",
            BackgroundSource::Audio => "audio",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileMeta {
    pub source_id: Option<String>,
    pub tau: Option<f64>,
    pub background_source: Option<BackgroundSource>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile<T: Scalar = f64> {
    pub class_ids: Vec<String>,
    pub scores: Vec<T>,
    pub meta: ProfileMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileRepr {
    class_ids: Vec<String>,
    scores: Vec<f64>,
    #[serde(default)]
    meta: ProfileMeta,
}

impl<T: Scalar> Serialize for Profile<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProfileRepr {
            class_ids: self.class_ids.clone(),
            scores: self.scores.iter().map(|x| x.as_f64()).collect(),
            meta: self.meta.clone(),
        }
        .serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Profile<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ProfileRepr::deserialize(d)?;
        if r.class_ids.len() != r.scores.len() {
            return Err(serde::de::Error::custom("class_ids and scores differ in length"));
        }
        Ok(Profile {
            class_ids: r.class_ids,
            scores: r.scores.into_iter().map(T::from_f64_lossy).collect(),
            meta: r.meta,
        })
    }
}

impl<T: Scalar> Profile<T> {
    pub fn new(class_ids: Vec<String>, scores: Vec<T>) -> Result<Self> {
        if class_ids.len() != scores.len() {
            return Err(Error::VocabularyMismatch);
        }
        Ok(Self {
            class_ids,
            scores,
            meta: ProfileMeta::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn score(&self, class_id: &str) -> Option<T> {
        self.class_ids.iter().position(|c| c == class_id).map(|i| self.scores[i])
    }

    fn check_same_vocabulary(&self, other: &Self) -> Result<()> {
        if self.class_ids != other.class_ids {
            Err(Error::VocabularyMismatch)
        } else {
            Ok(())
        }
    }
}

/// Cosine similarity of `e` against every prototype, in vocabulary order.
pub fn compute_profile<T: Scalar>(e: &Embedding<T>, protos: &PrototypeSet<T>) -> Result<Profile<T>> {
    if e.dim() != protos.dim() {
        return Err(Error::DimMismatch {
            expected: protos.dim(),
            actual: e.dim(),
        });
    }
    let scores = protos
        .iter()
        .map(|p| T::from_f64_lossy(unit_cosine(e.vector(), p.vector())))
        .collect();
    Ok(Profile {
        class_ids: protos.class_ids(),
        scores,
        meta: ProfileMeta {
            source_id: Some(e.id.clone()),
            ..ProfileMeta::default()
        },
    })
}

/// Profiles for a batch of embeddings; output order follows input order.
pub fn compute_profiles<T: Scalar>(embeddings: &[Embedding<T>], protos: &PrototypeSet<T>) -> Result<Vec<Profile<T>>> {
    embeddings.par_iter().map(|e| compute_profile(e, protos)).collect()
}

/// Elementwise arithmetic mean.
pub fn average_profiles<T: Scalar>(ps: &[Profile<T>]) -> Result<Profile<T>> {
    let first = ps.first().ok_or(Error::EmptyInput)?;
    let mut acc = vec![0.0f64; first.len()];
    for p in ps {
        first.check_same_vocabulary(p)?;
        for (a, s) in acc.iter_mut().zip(&p.scores) {
            *a += s.as_f64();
        }
    }
    let n = ps.len() as f64;
    Ok(Profile {
        class_ids: first.class_ids.clone(),
        scores: acc.into_iter().map(|a| T::from_f64_lossy(a / n)).collect(),
        meta: ProfileMeta::default(),
    })
}

fn background_profile<'a, T: Scalar>(
    embeddings: impl IntoIterator<Item = &'a Embedding<T>>,
    protos: &PrototypeSet<T>,
    source: BackgroundSource,
) -> Result<Profile<T>> {
    let profiles = embeddings
        .into_iter()
        .map(|e| {
            if e.modality != source.modality() {
                return Err(Error::Modality {
                    id: e.id.clone(),
                    expected: source.modality().as_str(),
                });
            }
            compute_profile(e, protos)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut avg = average_profiles(&profiles)?;
    avg.meta.background_source = Some(source);
    Ok(avg)
}

/// Background profile from text prompts describing the background.
pub fn background_profile_from_text<'a, T: Scalar>(
    prompt_embeddings: impl IntoIterator<Item = &'a Embedding<T>>,
    protos: &PrototypeSet<T>,
) -> Result<Profile<T>> {
    background_profile(prompt_embeddings, protos, BackgroundSource::Text)
}

/// Background profile from embeddings of background-only recordings.
pub fn background_profile_from_audio<'a, T: Scalar>(
    bg_embeddings: impl IntoIterator<Item = &'a Embedding<T>>,
    protos: &PrototypeSet<T>,
) -> Result<Profile<T>> {
    background_profile(bg_embeddings, protos, BackgroundSource::Audio)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptationConfig {
    pub tau: f64,
    pub background_source: BackgroundSource,
}

impl AdaptationConfig {
    pub fn new(tau: f64, background_source: BackgroundSource) -> Result<Self> {
        check_tau(tau)?;
        Ok(Self {
            tau,
            background_source,
        })
    }

    /// Uses the default tau for the source (0.2 text, 0.7 audio).
    pub fn with_default_tau(background_source: BackgroundSource) -> Self {
        Self {
            tau: background_source.default_tau(),
            background_source,
        }
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::TauOutOfRange(tau))
    }
}

/// `final[k] = test[k] - tau * background[k]`.
pub fn adapt<T: Scalar>(p_s: &Profile<T>, p_b: &Profile<T>, cfg: &AdaptationConfig) -> Result<Profile<T>> {
    check_tau(cfg.tau)?;
    p_s.check_same_vocabulary(p_b)?;
    let tau = T::from_f64_lossy(cfg.tau);
    let scores = p_s.scores.iter().zip(&p_b.scores).map(|(&s, &b)| s - tau * b).collect();
    Ok(Profile {
        class_ids: p_s.class_ids.clone(),
        scores,
        meta: ProfileMeta {
            source_id: p_s.meta.source_id.clone(),
            tau: Some(cfg.tau),
            background_source: Some(cfg.background_source),
        },
    })
}

/// Index of the highest score; the lowest index wins ties.
pub fn argmax<T: Scalar>(p: &Profile<T>) -> Result<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &s) in p.scores.iter().enumerate() {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i).ok_or(Error::EmptyProfile)
}

pub fn classify<T: Scalar>(p: &Profile<T>) -> Result<&str> {
    argmax(p).map(|i| p.class_ids[i].as_str())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiLabelConfig {
    pub threshold: f64,
}

impl Default for MultiLabelConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_MULTILABEL_THRESHOLD,
        }
    }
}

impl MultiLabelConfig {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidArgument(format!("threshold {threshold} outside [-1, 1]")));
        }
        Ok(Self { threshold })
    }
}

/// Every class scoring at or above the threshold, in vocabulary order. May be empty.
pub fn classify_multilabel<T: Scalar>(p: &Profile<T>, cfg: &MultiLabelConfig) -> Result<Vec<String>> {
    if p.is_empty() {
        return Err(Error::EmptyProfile);
    }
    Ok(p.class_ids
        .iter()
        .zip(&p.scores)
        .filter(|(_, s)| s.as_f64() >= cfg.threshold)
        .map(|(c, _)| c.clone())
        .collect())
}
