//! Oracle benchmarks: background contamination, polyphony and SNR sweeps.
//!
//! Datasets are generated from an [`Oracle`] and scored through the same
//! steps the command-line pipeline takes, including rounding every stored
//! vector to `f32`, so results from both routes agree exactly.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{Embedding, EmbeddingSet};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_multilabel, grid_search_tau_per_sample, snr_sweep, MultiLabelMetric, SampleTruth, SweepCase, SweepMode,
    SweepTable, TauGrid, TauSearchResult,
};
use crate::oracle::{rng_for, Oracle, OracleConfig, Scene, CLEAN_DRAW_BASE};
use crate::profiles::{
    background_profile_from_audio, background_profile_from_text, classify_multilabel, compute_profiles,
    BackgroundSource, MultiLabelConfig, Profile,
};
use crate::prototypes::{build_prototypes, PrototypeMode, PrototypeSet, TgapConfig};
use crate::scalar::Scalar;

const STREAM_SAMPLES: u64 = 0x5341_4d50;
const STREAM_POLY: u64 = 0x504f_4c59;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationConfig {
    pub oracle: OracleConfig,
    pub n_samples: usize,
    /// Foreground weight; the scene gets `1 - fg_weight`.
    pub fg_weight: f64,
    pub n_scenes: usize,
    pub sources_per_scene: usize,
    pub bg_recordings: usize,
    pub bg_prompts: usize,
    pub prompt_fidelity: f64,
    pub prompt_jitter: f64,
    /// Clean samples per class in the TGAP pool / supervised store.
    pub clean_per_class: usize,
    pub tgap_neighbors: usize,
}

impl ContaminationConfig {
    /// The reference benchmark: K=10, 2000 mixtures at fg 0.7 / bg 0.3.
    pub fn reference() -> Self {
        Self {
            oracle: OracleConfig {
                n_classes: 10,
                dim: 64,
                noise_sigma: 0.3,
                gap_magnitude: 0.5,
                seed: 2024,
            },
            n_samples: 2000,
            fg_weight: 0.7,
            n_scenes: 6,
            sources_per_scene: 1,
            bg_recordings: 10,
            bg_prompts: 3,
            prompt_fidelity: 0.5,
            prompt_jitter: 0.05,
            clean_per_class: 100,
            tgap_neighbors: 32,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.fg_weight > 0.0 && self.fg_weight < 1.0) {
            return Err(Error::InvalidArgument(format!("fg_weight {} outside (0, 1)", self.fg_weight)));
        }
        if self.n_samples == 0 || self.n_scenes == 0 || self.bg_recordings == 0 || self.bg_prompts == 0 {
            return Err(Error::InvalidArgument("counts must be positive".into()));
        }
        if self.clean_per_class == 0 {
            return Err(Error::InvalidArgument("clean_per_class must be positive".into()));
        }
        Ok(())
    }
}

/// Generated stores and truth for one contamination benchmark.
#[derive(Debug, Clone)]
pub struct ContaminationDataset<T: Scalar = f64> {
    pub scenes: Vec<Scene>,
    /// One class text anchor per class.
    pub class_prompts: EmbeddingSet<T>,
    /// Unlabeled test mixtures.
    pub test: EmbeddingSet<T>,
    pub truths: Vec<SampleTruth>,
    pub background_audio: EmbeddingSet<T>,
    pub background_text: EmbeddingSet<T>,
    /// Labeled isolated samples (supervised centroids).
    pub labeled: EmbeddingSet<T>,
    /// The same isolated samples without labels (TGAP pool).
    pub pool: EmbeddingSet<T>,
}

impl<T: Scalar> ContaminationDataset<T> {
    pub fn generate(cfg: &ContaminationConfig) -> Result<Self> {
        cfg.validate()?;
        let oracle = Oracle::new(cfg.oracle.clone())?;
        let k = cfg.oracle.n_classes;
        let scenes = oracle.scenes(cfg.n_scenes, cfg.sources_per_scene)?;
        let class_prompts =
            EmbeddingSet::from_records((0..k).map(|c| oracle.text_embedding(c)).collect::<Result<Vec<_>>>()?)?;

        let mut rng = rng_for(cfg.oracle.seed, &[STREAM_SAMPLES]);
        let bg_weight = 1.0 - cfg.fg_weight;
        let mut test = Vec::with_capacity(cfg.n_samples);
        let mut truths = Vec::with_capacity(cfg.n_samples);
        for i in 0..cfg.n_samples {
            let scene = &scenes[rng.gen_range(0..scenes.len())];
            let candidates: Vec<usize> = (0..k).filter(|&c| !scene.contains(c)).collect();
            let fg = candidates[rng.gen_range(0..candidates.len())];
            let mut components = vec![(fg, cfg.fg_weight)];
            components.extend(scene.components.iter().map(|&(c, w)| (c, bg_weight * w)));
            let id = format!("mix_{i:06}");
            test.push(oracle.mixture_embedding(id.clone(), &components, i as u64)?);
            truths.push(SampleTruth::new(id, vec![oracle.class_name(fg)], Some(scene.name.clone())));
        }

        let mut bg_audio = Vec::new();
        let mut bg_text = Vec::new();
        for scene in &scenes {
            for r in 0..cfg.bg_recordings {
                bg_audio.push(oracle.scene_recording(scene, r as u64)?);
            }
            for p in 0..cfg.bg_prompts {
                bg_text.push(oracle.scene_prompt(scene, p as u64, cfg.prompt_fidelity, cfg.prompt_jitter)?);
            }
        }

        let mut labeled = Vec::with_capacity(k * cfg.clean_per_class);
        for c in 0..k {
            for j in 0..cfg.clean_per_class {
                let draw = CLEAN_DRAW_BASE + j as u64;
                let e: Embedding<T> = oracle.audio_embedding(c, draw)?;
                labeled.push(e);
            }
        }
        let pool = labeled
            .iter()
            .enumerate()
            .map(|(i, e)| Embedding::audio(format!("pool_{i:06}"), None, e.vector().to_vec()))
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            scenes,
            class_prompts,
            test: EmbeddingSet::from_records(test)?,
            truths,
            background_audio: EmbeddingSet::from_records(bg_audio)?,
            background_text: EmbeddingSet::from_records(bg_text)?,
            labeled: EmbeddingSet::from_records(labeled)?,
            pool: EmbeddingSet::from_records(pool)?,
        })
    }

    /// Every store rounded to `f32`, as if written and read back.
    pub fn to_storage_precision(&self) -> Self {
        Self {
            scenes: self.scenes.clone(),
            class_prompts: self.class_prompts.to_storage_precision(),
            test: self.test.to_storage_precision(),
            truths: self.truths.clone(),
            background_audio: self.background_audio.to_storage_precision(),
            background_text: self.background_text.to_storage_precision(),
            labeled: self.labeled.to_storage_precision(),
            pool: self.pool.to_storage_precision(),
        }
    }
}

/// Background profile per background name, from the records labeled with that name.
pub fn background_profiles<T: Scalar>(
    store: &EmbeddingSet<T>,
    protos: &PrototypeSet<T>,
    source: BackgroundSource,
) -> Result<BTreeMap<String, Profile<T>>> {
    store
        .vocabulary()
        .iter()
        .map(|name| {
            let members = store.with_label(name);
            let p = match source {
                BackgroundSource::Text => background_profile_from_text(members, protos)?,
                BackgroundSource::Audio => background_profile_from_audio(members, protos)?,
            };
            Ok((name.clone(), p))
        })
        .collect()
}

/// Background profile for each sample, looked up by the sample's background name.
pub fn assign_backgrounds<'a, T: Scalar>(
    truths: &[SampleTruth],
    profiles: &'a BTreeMap<String, Profile<T>>,
) -> Result<Vec<&'a Profile<T>>> {
    truths
        .iter()
        .map(|t| {
            let name = t
                .background
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument(format!("sample `{}` has no background", t.id)))?;
            profiles
                .get(name)
                .ok_or_else(|| Error::InvalidArgument(format!("no background profile for `{name}`")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationResult {
    pub prototype_mode: PrototypeMode,
    pub baseline_accuracy: f64,
    pub text: TauSearchResult,
    pub audio: TauSearchResult,
}

/// Build prototypes at store precision, as the CLI's `prototypes build` would.
pub fn prototypes_for<T: Scalar>(
    data: &ContaminationDataset<T>,
    mode: PrototypeMode,
    tgap: &TgapConfig,
) -> Result<PrototypeSet<T>> {
    Ok(build_prototypes(mode, &data.class_prompts, Some(&data.pool), Some(&data.labeled), tgap)?.to_storage_precision())
}

/// Baseline, text-adapted and audio-adapted accuracy with grid-searched tau.
pub fn run_contamination<T: Scalar>(
    data: &ContaminationDataset<T>,
    mode: PrototypeMode,
    tgap: &TgapConfig,
    grid: &TauGrid,
) -> Result<ContaminationResult> {
    let data = data.to_storage_precision();
    let protos = prototypes_for(&data, mode, tgap)?;
    let profiles = compute_profiles(data.test.records(), &protos)?;
    let truths: Vec<String> = data
        .truths
        .iter()
        .map(|t| t.single_label().map(str::to_string))
        .collect::<Result<_>>()?;
    let text_bg = background_profiles(&data.background_text, &protos, BackgroundSource::Text)?;
    let audio_bg = background_profiles(&data.background_audio, &protos, BackgroundSource::Audio)?;
    let text_refs = assign_backgrounds(&data.truths, &text_bg)?;
    let audio_refs = assign_backgrounds(&data.truths, &audio_bg)?;
    let text = grid_search_tau_per_sample(&profiles, &text_refs, &truths, grid, BackgroundSource::Text)?;
    let audio = grid_search_tau_per_sample(&profiles, &audio_refs, &truths, grid, BackgroundSource::Audio)?;
    let baseline = grid_search_tau_per_sample(&profiles, &audio_refs, &truths, &TauGrid(vec![0.0]), BackgroundSource::Audio)?;
    Ok(ContaminationResult {
        prototype_mode: mode,
        baseline_accuracy: baseline.best_accuracy,
        text,
        audio,
    })
}

/// Accuracy on the isolated foregrounds of the benchmark's test samples
/// (same draws, no scene), the reference the contaminated accuracy drops from.
pub fn clean_accuracy<T: Scalar>(cfg: &ContaminationConfig, mode: PrototypeMode) -> Result<f64> {
    let data = ContaminationDataset::<T>::generate(cfg)?.to_storage_precision();
    let protos = prototypes_for(&data, mode, &TgapConfig { n_neighbors: cfg.tgap_neighbors })?;
    let oracle = Oracle::new(cfg.oracle.clone())?;
    let names = oracle.class_names();
    let mut correct = 0usize;
    for (i, t) in data.truths.iter().enumerate() {
        let fg = names.iter().position(|n| n == t.single_label().unwrap()).unwrap();
        let e: Embedding<T> = oracle.audio_embedding::<T>(fg, i as u64)?.to_storage_precision();
        let p = crate::profiles::compute_profile(&e, &protos)?;
        correct += usize::from(crate::profiles::classify(&p)? == t.single_label()?);
    }
    Ok(correct as f64 / data.truths.len() as f64)
}

/// SNR to foreground weight under the oracle's linear mixture model:
/// amplitude ratio `r = 10^(snr/20)`, weight `r / (1 + r)`.
pub fn snr_to_fg_weight(snr_db: f64) -> f64 {
    let r = 10f64.powf(snr_db / 20.0);
    r / (1.0 + r)
}

/// Baseline / text / audio accuracy per SNR on oracle data.
pub fn oracle_snr_sweep<T: Scalar>(
    base: &ContaminationConfig,
    snrs: &[f64],
    mode: PrototypeMode,
    grid: &TauGrid,
) -> Result<SweepTable> {
    let cases = snrs
        .iter()
        .map(|&snr| {
            let cfg = ContaminationConfig {
                fg_weight: snr_to_fg_weight(snr),
                ..base.clone()
            };
            let data = ContaminationDataset::<T>::generate(&cfg)?.to_storage_precision();
            let protos = prototypes_for(&data, mode, &TgapConfig { n_neighbors: cfg.tgap_neighbors })?;
            let profiles = compute_profiles(data.test.records(), &protos)?;
            let text_bg = background_profiles(&data.background_text, &protos, BackgroundSource::Text)?;
            let audio_bg = background_profiles(&data.background_audio, &protos, BackgroundSource::Audio)?;
            Ok(SweepCase {
                snr_db: snr,
                text_backgrounds: assign_backgrounds(&data.truths, &text_bg)?.into_iter().cloned().collect(),
                audio_backgrounds: assign_backgrounds(&data.truths, &audio_bg)?.into_iter().cloned().collect(),
                truths: data
                    .truths
                    .iter()
                    .map(|t| t.single_label().map(str::to_string))
                    .collect::<Result<_>>()?,
                profiles,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    snr_sweep(&cases, &SweepMode::ALL, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyphonyConfig {
    pub oracle: OracleConfig,
    pub samples_per_level: usize,
    pub max_classes_per_audio: usize,
    pub threshold: f64,
    pub clean_per_class: usize,
}

impl PolyphonyConfig {
    pub fn reference() -> Self {
        Self {
            oracle: OracleConfig {
                n_classes: 10,
                dim: 64,
                noise_sigma: 0.1,
                gap_magnitude: 0.5,
                seed: 2024,
            },
            samples_per_level: 1000,
            max_classes_per_audio: 3,
            threshold: 0.6,
            clean_per_class: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyphonyRow {
    pub classes_per_audio: usize,
    pub prototype_mode: PrototypeMode,
    pub accuracy: f64,
    pub pred_classes_per_audio: f64,
}

/// Equal-weight mixtures of `c` distinct classes, for one C/A level.
pub fn polyphonic_set<T: Scalar>(
    oracle: &Oracle,
    classes_per_audio: usize,
    count: usize,
) -> Result<(EmbeddingSet<T>, Vec<SampleTruth>)> {
    let k = oracle.config().n_classes;
    if classes_per_audio == 0 || classes_per_audio > k {
        return Err(Error::InsufficientClasses {
            needed: classes_per_audio,
            available: k,
        });
    }
    let mut rng = rng_for(oracle.config().seed, &[STREAM_POLY, classes_per_audio as u64]);
    let w = 1.0 / classes_per_audio as f64;
    let mut records = Vec::with_capacity(count);
    let mut truths = Vec::with_capacity(count);
    for i in 0..count {
        let mut classes = rand::seq::index::sample(&mut rng, k, classes_per_audio).into_vec();
        classes.sort_unstable();
        let comps: Vec<(usize, f64)> = classes.iter().map(|&c| (c, w)).collect();
        let id = format!("poly{classes_per_audio}_{i:06}");
        let draw = ((classes_per_audio as u64) << 32) + i as u64;
        records.push(oracle.mixture_embedding(id.clone(), &comps, draw)?);
        truths.push(SampleTruth::new(id, classes.iter().map(|&c| oracle.class_name(c)).collect(), None));
    }
    Ok((EmbeddingSet::from_records(records)?, truths))
}

/// Multi-label accuracy and mean predicted set size per C/A level.
pub fn run_polyphony<T: Scalar>(cfg: &PolyphonyConfig, modes: &[PrototypeMode]) -> Result<Vec<PolyphonyRow>> {
    let oracle = Oracle::new(cfg.oracle.clone())?;
    let k = cfg.oracle.n_classes;
    let prompts = EmbeddingSet::from_records((0..k).map(|c| oracle.text_embedding::<T>(c)).collect::<Result<Vec<_>>>()?)?;
    let labeled = EmbeddingSet::from_records(
        (0..k)
            .flat_map(|c| (0..cfg.clean_per_class).map(move |j| (c, j)))
            .map(|(c, j)| oracle.audio_embedding::<T>(c, CLEAN_DRAW_BASE + j as u64))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let ml = MultiLabelConfig::new(cfg.threshold)?;
    let mut rows = Vec::new();
    for &mode in modes {
        let protos = build_prototypes(mode, &prompts, Some(&labeled), Some(&labeled), &TgapConfig::default())?;
        for c in 1..=cfg.max_classes_per_audio {
            let (set, truths) = polyphonic_set::<T>(&oracle, c, cfg.samples_per_level)?;
            let profiles = compute_profiles(set.records(), &protos)?;
            let mut preds = BTreeMap::new();
            let mut truth_sets = BTreeMap::new();
            for (p, t) in profiles.iter().zip(&truths) {
                preds.insert(t.id.clone(), classify_multilabel(p, &ml)?.into_iter().collect::<BTreeSet<_>>());
                truth_sets.insert(t.id.clone(), t.labels.iter().cloned().collect::<BTreeSet<_>>());
            }
            let report =
                evaluate_multilabel(&preds, &truth_sets, &protos.class_ids(), Some(cfg.threshold), MultiLabelMetric::ExactMatch)?;
            rows.push(PolyphonyRow {
                classes_per_audio: c,
                prototype_mode: mode,
                accuracy: report.accuracy,
                pred_classes_per_audio: report.mean_pred_classes_per_audio,
            });
        }
    }
    Ok(rows)
}
