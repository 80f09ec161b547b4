//! Embedding-side commands: oracle data, prototypes, profiles, adaptation,
//! tau search, evaluation and gap analysis.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use bgprofile::benchmark::{background_profiles, ContaminationDataset};
use bgprofile::config::{BackgroundMode, ExperimentConfig};
use bgprofile::embedding::{EmbeddingSet, Modality};
use bgprofile::eval::{
    evaluate, evaluate_multilabel, grid_search_tau_per_sample, modality_gap_stats, parse_grid,
    prototype_distance_analysis, GapConfig, SampleTruth, TauGrid,
};
use bgprofile::profiles::{
    adapt, background_profile_from_audio, background_profile_from_text, classify,
    classify_multilabel, compute_profiles, AdaptationConfig, BackgroundSource, MultiLabelConfig, Profile,
};
use bgprofile::prototypes::{
    build_prototypes, build_supervised_set, build_text_anchor_set, build_tgap_set, load_prototypes, save_prototypes,
    PrototypeMode, PrototypeSet, Provenance, TgapConfig, DEFAULT_TGAP_NEIGHBORS,
};
use bgprofile::report::read_json_lines;
use bgprofile::store::{load_store, save_store};
use serde::{Deserialize, Serialize};

use crate::jobs::{check_version, EvalJob, GapJob, OracleGenJob, PrototypeJob};
use crate::output::Outputs;

pub const PREDICTION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub schema_version: u32,
    pub id: String,
    pub prediction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_labels: Option<Vec<String>>,
}

#[derive(Debug, Serialize)]
struct StoreSummary {
    dim: usize,
    count: usize,
    modalities: BTreeMap<&'static str, usize>,
    labels: BTreeMap<String, usize>,
    unlabeled: usize,
}

pub fn store_inspect(path: &Path) -> Result<String> {
    let set: EmbeddingSet<f64> = load_store(path)?;
    let mut labels = BTreeMap::new();
    let mut unlabeled = 0;
    for e in set.iter() {
        match &e.label {
            Some(l) => *labels.entry(l.clone()).or_insert(0) += 1,
            None => unlabeled += 1,
        }
    }
    let summary = StoreSummary {
        dim: set.dim(),
        count: set.len(),
        modalities: [Modality::Audio, Modality::Text]
            .into_iter()
            .map(|m| (m.as_str(), set.count_modality(m)))
            .collect(),
        labels,
        unlabeled,
    };
    Ok(bgprofile::report::to_canonical_json(&summary)?)
}

pub fn oracle_gen(job: &OracleGenJob, out: &mut Outputs) -> Result<()> {
    check_version(job.schema_version)?;
    let data = ContaminationDataset::<f64>::generate(&job.benchmark)?;
    for (name, set) in [
        ("class_prompts.atpe", &data.class_prompts),
        ("test.atpe", &data.test),
        ("background_audio.atpe", &data.background_audio),
        ("background_text.atpe", &data.background_text),
        ("labeled.atpe", &data.labeled),
        ("pool.atpe", &data.pool),
    ] {
        let p = out.path(name)?;
        save_store(set, &p)?;
    }
    out.json_lines("truth.jsonl", &data.truths)?;
    out.json("scenes.json", &data.scenes)?;
    Ok(())
}

fn load_set(path: &Path) -> Result<EmbeddingSet<f64>> {
    load_store(path).with_context(|| format!("loading {}", path.display()))
}

fn build(
    mode: PrototypeMode,
    prompts: &Path,
    pool: Option<&Path>,
    labeled: Option<&Path>,
    tgap_n: Option<usize>,
) -> Result<PrototypeSet<f64>> {
    let prompts = load_set(prompts)?;
    let pool = pool.map(load_set).transpose()?;
    let labeled = labeled.map(load_set).transpose()?;
    let tgap = TgapConfig {
        n_neighbors: tgap_n.unwrap_or(DEFAULT_TGAP_NEIGHBORS),
    };
    let set = build_prototypes(mode, &prompts, pool.as_ref(), labeled.as_ref(), &tgap)?;
    // Profiles are computed against the prototypes exactly as stored.
    Ok(set.to_storage_precision())
}

pub fn prototypes_build(job: &PrototypeJob, out: &mut Outputs) -> Result<()> {
    check_version(job.schema_version)?;
    let mut missing = Vec::new();
    match job.prototype_mode {
        PrototypeMode::Tgap if job.unlabeled_pool_path.is_none() => missing.push("unlabeled_pool_path"),
        PrototypeMode::Supervised if job.labeled_store_path.is_none() => missing.push("labeled_store_path"),
        _ => {}
    }
    if !missing.is_empty() {
        bail!(bgprofile::Error::Config(
            missing
                .iter()
                .map(|m| format!("{m} is required for {} prototypes", job.prototype_mode.as_str()))
                .collect()
        ));
    }
    let set = build(
        job.prototype_mode,
        &job.text_store_path,
        job.unlabeled_pool_path.as_deref(),
        job.labeled_store_path.as_deref(),
        job.tgap_n,
    )?;
    let p = out.path("prototypes.atpe")?;
    out.register(save_prototypes(&set, &p)?);
    Ok(())
}

fn prediction(p: &Profile<f64>, ml: Option<&MultiLabelConfig>) -> Result<PredictionRecord> {
    Ok(PredictionRecord {
        schema_version: PREDICTION_SCHEMA_VERSION,
        id: p.meta.source_id.clone().unwrap_or_default(),
        prediction: classify(p)?.to_string(),
        predicted_labels: ml.map(|m| classify_multilabel(p, m)).transpose()?,
    })
}

fn predictions(profiles: &[Profile<f64>], threshold: Option<f64>) -> Result<Vec<PredictionRecord>> {
    let ml = threshold.map(MultiLabelConfig::new).transpose()?;
    profiles.iter().map(|p| prediction(p, ml.as_ref())).collect()
}

pub fn classify_cmd(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let protos = build(
        cfg.prototype_mode,
        &cfg.text_store_path,
        cfg.unlabeled_pool_path.as_deref(),
        cfg.labeled_store_path.as_deref(),
        cfg.tgap_n,
    )?;
    let p = out.path("prototypes.atpe")?;
    out.register(save_prototypes(&protos, &p)?);
    let audio = load_set(&cfg.audio_store_path)?;
    let profiles = compute_profiles(audio.records(), &protos)?;
    out.json_lines("profiles.jsonl", &profiles)?;
    out.json_lines("predictions.jsonl", &predictions(&profiles, cfg.multilabel_threshold)?)?;
    Ok(())
}

/// Inputs shared by `adapt` and `tau-search`.
pub struct AdaptInputs {
    pub profiles: Vec<Profile<f64>>,
    pub source: BackgroundSource,
    pub per_sample: Vec<Profile<f64>>,
    pub by_name: BTreeMap<String, Profile<f64>>,
    pub truths: Option<BTreeMap<String, SampleTruth>>,
}

fn read_truths(path: &Path) -> Result<BTreeMap<String, SampleTruth>> {
    let rows: Vec<SampleTruth> = read_json_lines(path)?;
    let mut map = BTreeMap::new();
    for t in rows {
        if t.schema_version != bgprofile::eval::TRUTH_SCHEMA_VERSION {
            bail!("truth schema_version {} unsupported", t.schema_version);
        }
        let id = t.id.clone();
        if map.insert(id.clone(), t).is_some() {
            bail!("duplicate truth id `{id}`");
        }
    }
    Ok(map)
}

/// Load profiles, prototypes and background store, and pick each sample's
/// background profile: its named background from the truth manifest when
/// listed, otherwise the average over the whole background store.
pub fn adapt_inputs(cfg: &ExperimentConfig, profiles_path: &Path, prototypes_path: &Path) -> Result<AdaptInputs> {
    let source = cfg
        .background_mode
        .source()
        .ok_or_else(|| anyhow!(bgprofile::Error::Config(vec!["background_mode must be text or audio".into()])))?;
    let store_path = match cfg.background_mode {
        BackgroundMode::Text => cfg.background_prompts.as_ref(),
        _ => cfg.background_store_path.as_ref(),
    }
    .expect("validated config carries the background store");
    let protos: PrototypeSet<f64> = load_prototypes(prototypes_path)?;
    let profiles: Vec<Profile<f64>> = read_json_lines(profiles_path)?;
    if profiles.is_empty() {
        bail!(bgprofile::Error::EmptyInput);
    }
    let store = load_set(store_path)?;
    let by_name = background_profiles(&store, &protos, source)?;
    let global = match source {
        BackgroundSource::Text => background_profile_from_text(store.iter(), &protos)?,
        BackgroundSource::Audio => background_profile_from_audio(store.iter(), &protos)?,
    };
    let truths = cfg.truth_path.as_deref().map(read_truths).transpose()?;
    let per_sample = profiles
        .iter()
        .map(|p| {
            let id = p.meta.source_id.as_deref().unwrap_or_default();
            let name = truths.as_ref().and_then(|t| t.get(id)).and_then(|t| t.background.as_deref());
            match name {
                Some(n) => by_name
                    .get(n)
                    .cloned()
                    .ok_or_else(|| anyhow!("background `{n}` of sample `{id}` is not in {}", store_path.display())),
                None => Ok(global.clone()),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AdaptInputs {
        profiles,
        source,
        per_sample,
        by_name,
        truths,
    })
}

pub fn adapt_cmd(cfg: &ExperimentConfig, profiles: &Path, prototypes: &Path, out: &mut Outputs) -> Result<()> {
    let inputs = adapt_inputs(cfg, profiles, prototypes)?;
    let acfg = AdaptationConfig::new(cfg.tau.expect("validated config has tau"), inputs.source)?;
    let adapted = inputs
        .profiles
        .iter()
        .zip(&inputs.per_sample)
        .map(|(p, b)| adapt(p, b, &acfg))
        .collect::<bgprofile::Result<Vec<_>>>()?;
    out.json("background_profiles.json", &inputs.by_name)?;
    out.json_lines("adapted_profiles.jsonl", &adapted)?;
    out.json_lines("adapted_predictions.jsonl", &predictions(&adapted, cfg.multilabel_threshold)?)?;
    Ok(())
}

pub fn tau_search_cmd(cfg: &ExperimentConfig, profiles: &Path, prototypes: &Path, out: &mut Outputs) -> Result<()> {
    let inputs = adapt_inputs(cfg, profiles, prototypes)?;
    let truths = inputs
        .truths
        .as_ref()
        .ok_or_else(|| anyhow!(bgprofile::Error::Config(vec!["tau-search needs truth_path".into()])))?;
    let labels = inputs
        .profiles
        .iter()
        .map(|p| {
            let id = p.meta.source_id.as_deref().unwrap_or_default();
            let t = truths.get(id).ok_or(bgprofile::Error::IdMismatch)?;
            Ok(t.single_label()?.to_string())
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = match &cfg.tau_grid {
        Some(g) => parse_grid(g)?,
        None => TauGrid::default(),
    };
    let refs: Vec<&Profile<f64>> = inputs.per_sample.iter().collect();
    let mut result = grid_search_tau_per_sample(&inputs.profiles, &refs, &labels, &grid, inputs.source)?;
    result.fingerprint.insert("prototype_mode".into(), prototype_mode_of(prototypes)?.into());
    result.fingerprint.insert("n_samples".into(), inputs.profiles.len().into());
    out.json("tau_search.json", &result)?;
    Ok(())
}

fn prototype_mode_of(path: &Path) -> Result<String> {
    let set: PrototypeSet<f64> = load_prototypes(path)?;
    let kinds: BTreeSet<&str> = set.iter().map(|p| p.provenance.as_str()).collect();
    Ok(kinds.into_iter().collect::<Vec<_>>().join(","))
}

pub fn eval_cmd(job: &EvalJob, out: &mut Outputs) -> Result<()> {
    check_version(job.schema_version)?;
    let truths = read_truths(&job.truth_path)?;
    let preds: Vec<PredictionRecord> = read_json_lines(&job.predictions_path)?;
    let mut pred_map = BTreeMap::new();
    for p in preds {
        let id = p.id.clone();
        if pred_map.insert(id.clone(), p).is_some() {
            bail!("duplicate prediction id `{id}`");
        }
    }
    let vocabulary: Vec<String> = match &job.prototypes_path {
        Some(p) => load_prototypes::<f64>(p)?.class_ids(),
        None => truths
            .values()
            .flat_map(|t| t.labels.iter().cloned())
            .chain(pred_map.values().flat_map(|p| {
                std::iter::once(p.prediction.clone()).chain(p.predicted_labels.iter().flatten().cloned())
            }))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let report = if job.multilabel {
        let pred_sets = pred_map
            .iter()
            .map(|(id, p)| {
                let labels = p
                    .predicted_labels
                    .as_ref()
                    .ok_or_else(|| anyhow!("prediction `{id}` has no predicted_labels; classify with a multilabel_threshold"))?;
                Ok((id.clone(), labels.iter().cloned().collect::<BTreeSet<_>>()))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        let truth_sets = truths
            .iter()
            .map(|(id, t)| (id.clone(), t.labels.iter().cloned().collect::<BTreeSet<_>>()))
            .collect();
        evaluate_multilabel(&pred_sets, &truth_sets, &vocabulary, None, job.metric)?
    } else {
        let p = pred_map.iter().map(|(id, p)| (id.clone(), p.prediction.clone())).collect();
        let t = truths
            .iter()
            .map(|(id, t)| Ok((id.clone(), t.single_label()?.to_string())))
            .collect::<Result<BTreeMap<_, _>>>()?;
        evaluate(&p, &t, &vocabulary)?
    };
    out.json("report.json", &report)?;
    let csv = [out.path("confusion.csv")?, out.path("per_class_accuracy.csv")?];
    report.confusion_csv().write(&csv[0])?;
    report.per_class_csv().write(&csv[1])?;
    Ok(())
}

pub fn gap_report_cmd(job: &GapJob, out: &mut Outputs) -> Result<()> {
    check_version(job.schema_version)?;
    let audio = load_set(&job.audio_store_path)?;
    let text = load_set(&job.text_store_path)?;
    let cfg = GapConfig {
        max_per_set: job.max_per_set,
        probe_epochs: job.probe_epochs,
        seed: job.seed,
    };
    let mut report = modality_gap_stats(&audio, &text, &cfg)?;
    if let Some(labeled_path) = &job.labeled_store_path {
        let labeled = load_set(labeled_path)?;
        let pool = match &job.unlabeled_pool_path {
            Some(p) => load_set(p)?,
            None => labeled.clone(),
        };
        let anchors = build_text_anchor_set(&text)?;
        let tgap = build_tgap_set(&anchors, &pool, &TgapConfig { n_neighbors: job.tgap_n })?;
        let supervised = build_supervised_set(&labeled)?;
        let sets: BTreeMap<Provenance, PrototypeSet<f64>> = [
            (Provenance::TextAnchor, anchors),
            (Provenance::Tgap, tgap),
            (Provenance::SupervisedCentroid, supervised),
        ]
        .into_iter()
        .collect();
        let distances = prototype_distance_analysis(&sets, &labeled)?;
        let csv = out.path("prototype_distance.csv")?;
        distances.plot_csv().write(&csv)?;
        report.per_class_prototype_distance = distances.per_class_prototype_distance;
    }
    out.json("gap_report.json", &report)?;
    Ok(())
}

pub fn default_in(dir: &Path, explicit: Option<PathBuf>, name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| dir.join(name))
}
