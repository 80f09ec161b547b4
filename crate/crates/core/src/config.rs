//! Declarative experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::parse_grid;
use crate::profiles::{BackgroundSource, DEFAULT_AUDIO_TAU, DEFAULT_TEXT_TAU};
use crate::prototypes::PrototypeMode;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    #[default]
    None,
    Text,
    Audio,
}

impl BackgroundMode {
    pub fn source(self) -> Option<BackgroundSource> {
        match self {
            BackgroundMode::None => None,
            BackgroundMode::Text => Some(BackgroundSource::Text),
            BackgroundMode::Audio => Some(BackgroundSource::Audio),
        }
    }
}

/// One run of the classification pipeline.
///
/// Text backgrounds are read from `background_prompts`, an ATPE store of
/// embedded prompts; audio backgrounds from `background_store_path`. In both
/// stores a record's label names the environment it describes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub audio_store_path: PathBuf,
    pub text_store_path: PathBuf,
    #[serde(default)]
    pub unlabeled_pool_path: Option<PathBuf>,
    #[serde(default)]
    pub labeled_store_path: Option<PathBuf>,
    pub prototype_mode: PrototypeMode,
    #[serde(default)]
    pub tgap_n: Option<usize>,
    #[serde(default)]
    pub background_mode: BackgroundMode,
    #[serde(default)]
    pub background_prompts: Option<PathBuf>,
    #[serde(default)]
    pub background_store_path: Option<PathBuf>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub tau_grid: Option<String>,
    #[serde(default)]
    pub multilabel_threshold: Option<f64>,
    #[serde(default)]
    pub truth_path: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(
        audio_store_path: impl Into<PathBuf>,
        text_store_path: impl Into<PathBuf>,
        prototype_mode: PrototypeMode,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            audio_store_path: audio_store_path.into(),
            text_store_path: text_store_path.into(),
            unlabeled_pool_path: None,
            labeled_store_path: None,
            prototype_mode,
            tgap_n: None,
            background_mode: BackgroundMode::None,
            background_prompts: None,
            background_store_path: None,
            tau: None,
            tau_grid: None,
            multilabel_threshold: None,
            truth_path: None,
            seed: 0,
            output_dir: output_dir.into(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::report::read_json(path)
    }

    /// Check every cross-field rule, reporting all violations together, and
    /// fill the default tau for the background mode.
    pub fn validate(&self) -> Result<Self> {
        let mut errors = Vec::new();
        let mut out = self.clone();

        if self.schema_version != CONFIG_SCHEMA_VERSION {
            errors.push(format!(
                "schema_version {} unsupported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }

        match (self.prototype_mode, self.tgap_n) {
            (PrototypeMode::Tgap, None) => errors.push("tgap_n is required when prototype_mode is tgap".into()),
            (PrototypeMode::Tgap, Some(0)) => errors.push("tgap_n must be at least 1".into()),
            (PrototypeMode::Tgap, Some(_)) | (_, None) => {}
            (mode, Some(_)) => errors.push(format!("tgap_n given but prototype_mode is {}", mode.as_str())),
        }
        match (self.prototype_mode, &self.unlabeled_pool_path) {
            (PrototypeMode::Tgap, None) => errors.push("unlabeled_pool_path is required when prototype_mode is tgap".into()),
            (PrototypeMode::Tgap, Some(_)) | (_, None) => {}
            (mode, Some(_)) => errors.push(format!("unlabeled_pool_path given but prototype_mode is {}", mode.as_str())),
        }
        match (self.prototype_mode, &self.labeled_store_path) {
            (PrototypeMode::Supervised, None) => {
                errors.push("labeled_store_path is required when prototype_mode is supervised".into())
            }
            (PrototypeMode::Supervised, Some(_)) | (_, None) => {}
            (mode, Some(_)) => errors.push(format!("labeled_store_path given but prototype_mode is {}", mode.as_str())),
        }

        let prompts = self.background_prompts.is_some();
        let store = self.background_store_path.is_some();
        match self.background_mode {
            BackgroundMode::None => {
                if prompts {
                    errors.push("background_prompts given but background_mode is none".into());
                }
                if store {
                    errors.push("background_store_path given but background_mode is none".into());
                }
                match self.tau {
                    Some(t) if t != 0.0 => errors.push(format!("tau {t} given but background_mode is none")),
                    _ => out.tau = Some(0.0),
                }
            }
            BackgroundMode::Text => {
                if !prompts {
                    errors.push("background_prompts is required when background_mode is text".into());
                }
                if store {
                    errors.push("background_store_path given but background_mode is text".into());
                }
                out.tau = Some(self.tau.unwrap_or(DEFAULT_TEXT_TAU));
            }
            BackgroundMode::Audio => {
                if !store {
                    errors.push("background_store_path is required when background_mode is audio".into());
                }
                if prompts {
                    errors.push("background_prompts given but background_mode is audio".into());
                }
                out.tau = Some(self.tau.unwrap_or(DEFAULT_AUDIO_TAU));
            }
        }
        if let Some(t) = self.tau {
            if !(0.0..=1.0).contains(&t) {
                errors.push(format!("tau {t} outside [0, 1]"));
            }
        }
        if let Some(g) = &self.tau_grid {
            if let Err(e) = parse_grid(g) {
                errors.push(e.to_string());
            }
        }
        if let Some(th) = self.multilabel_threshold {
            if !(-1.0..=1.0).contains(&th) {
                errors.push(format!("multilabel_threshold {th} outside [-1, 1]"));
            }
        }

        let paths = [
            ("audio_store_path", Some(&self.audio_store_path)),
            ("text_store_path", Some(&self.text_store_path)),
            ("unlabeled_pool_path", self.unlabeled_pool_path.as_ref()),
            ("labeled_store_path", self.labeled_store_path.as_ref()),
            ("background_prompts", self.background_prompts.as_ref()),
            ("background_store_path", self.background_store_path.as_ref()),
            ("truth_path", self.truth_path.as_ref()),
        ];
        for (name, p) in paths {
            if let Some(p) = p {
                if !p.exists() {
                    errors.push(format!("{name} {} does not exist", p.display()));
                }
            }
        }

        if errors.is_empty() {
            Ok(out)
        } else {
            Err(Error::Config(errors))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn files() -> (tempfile::TempDir, ExperimentConfig) {
        let dir = tempfile::tempdir().unwrap();
        for f in ["audio.atpe", "text.atpe", "pool.atpe", "bg.atpe", "prompts.atpe"] {
            std::fs::write(dir.path().join(f), b"").unwrap();
        }
        let cfg = ExperimentConfig::new(
            dir.path().join("audio.atpe"),
            dir.path().join("text.atpe"),
            PrototypeMode::TextAnchor,
            dir.path().join("out"),
        );
        (dir, cfg)
    }

    fn messages(r: Result<ExperimentConfig>) -> Vec<String> {
        match r {
            Err(Error::Config(m)) => m,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn stray_prompts_rejected() {
        let (dir, mut cfg) = files();
        cfg.background_prompts = Some(dir.path().join("prompts.atpe"));
        let m = messages(cfg.validate());
        assert!(m.iter().any(|e| e.contains("background_prompts")));
    }

    #[test]
    fn complete_config_unchanged() {
        let (dir, mut cfg) = files();
        cfg.background_mode = BackgroundMode::Audio;
        cfg.background_store_path = Some(dir.path().join("bg.atpe"));
        cfg.tau = Some(0.5);
        assert_eq!(cfg.validate().unwrap(), cfg);
    }

    #[test]
    fn tgap_without_n() {
        let (dir, mut cfg) = files();
        cfg.prototype_mode = PrototypeMode::Tgap;
        cfg.unlabeled_pool_path = Some(dir.path().join("pool.atpe"));
        let m = messages(cfg.validate());
        assert_eq!(m.len(), 1);
        assert!(m[0].contains("tgap_n"));
    }

    #[test]
    fn defaults_filled() {
        let (dir, mut cfg) = files();
        cfg.background_mode = BackgroundMode::Text;
        cfg.background_prompts = Some(dir.path().join("prompts.atpe"));
        assert_eq!(cfg.validate().unwrap().tau, Some(DEFAULT_TEXT_TAU));
        cfg.background_mode = BackgroundMode::Audio;
        cfg.background_prompts = None;
        cfg.background_store_path = Some(dir.path().join("bg.atpe"));
        assert_eq!(cfg.validate().unwrap().tau, Some(DEFAULT_AUDIO_TAU));
    }

    #[test]
    fn all_errors_reported() {
        let (dir, mut cfg) = files();
        cfg.prototype_mode = PrototypeMode::Tgap;
        cfg.background_mode = BackgroundMode::Audio;
        cfg.tau = Some(3.0);
        cfg.multilabel_threshold = Some(2.0);
        cfg.truth_path = Some(dir.path().join("missing.jsonl"));
        let m = messages(cfg.validate());
        assert_eq!(m.len(), 6, "{m:?}");
    }

    #[test]
    fn idempotent() {
        let (dir, mut cfg) = files();
        for mode in [BackgroundMode::None, BackgroundMode::Text, BackgroundMode::Audio] {
            cfg.background_mode = mode;
            cfg.background_prompts = (mode == BackgroundMode::Text).then(|| dir.path().join("prompts.atpe"));
            cfg.background_store_path = (mode == BackgroundMode::Audio).then(|| dir.path().join("bg.atpe"));
            cfg.tau = None;
            let once = cfg.validate().unwrap();
            assert_eq!(once.validate().unwrap(), once);
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let json = r#"{"schema_version":1,"audio_store_path":"a","text_store_path":"t",
            "prototype_mode":"text_anchor","output_dir":"o","colour":"blue"}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(json).is_err());
    }
}
