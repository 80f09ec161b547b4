//! Per-command job configurations and `--config` + flag override resolution.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bgprofile::benchmark::ContaminationConfig;
use bgprofile::eval::MultiLabelMetric;
use bgprofile::prototypes::{PrototypeMode, DEFAULT_TGAP_NEIGHBORS};
use bgprofile::soundscape::{WavFormat, DEFAULT_CHUNK_SECONDS, DEFAULT_SNRS_DB};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const JOB_SCHEMA_VERSION: u32 = 1;

/// Flag overrides as (JSON pointer, value) pairs, applied over the config file.
pub type Overrides = Vec<(&'static str, Value)>;

/// Load `config` (or start from `defaults`), apply overrides and deserialize.
/// Unknown keys are rejected by the target type.
pub fn resolve<C: Serialize + DeserializeOwned>(
    config: Option<&Path>,
    defaults: Option<C>,
    overrides: Overrides,
) -> Result<C> {
    let mut doc = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<Value>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => match defaults {
            Some(d) => serde_json::to_value(d)?,
            None => {
                let mut m = Map::new();
                m.insert("schema_version".into(), Value::from(JOB_SCHEMA_VERSION));
                Value::Object(m)
            }
        },
    };
    for (pointer, value) in overrides {
        set_pointer(&mut doc, pointer, value)?;
    }
    Ok(serde_json::from_value(doc)?)
}

fn set_pointer(doc: &mut Value, pointer: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let keys: Vec<&str> = pointer.trim_start_matches('/').split('/').collect();
    for (i, key) in keys.iter().enumerate() {
        let Value::Object(map) = cur else {
            bail!("cannot override `{pointer}`: `{key}` is not inside an object");
        };
        if i + 1 == keys.len() {
            if value.is_null() {
                map.remove(*key);
            } else {
                map.insert(key.to_string(), value);
            }
            return Ok(());
        }
        cur = map.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

pub fn opt<T: Serialize>(pointer: &'static str, v: Option<T>, out: &mut Overrides) {
    if let Some(v) = v {
        out.push((pointer, serde_json::to_value(v).expect("flag values serialize")));
    }
}

pub fn check_version(found: u32) -> Result<()> {
    if found != JOB_SCHEMA_VERSION {
        bail!("job schema_version {found} unsupported (expected {JOB_SCHEMA_VERSION})");
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleGenJob {
    pub schema_version: u32,
    pub benchmark: ContaminationConfig,
    pub output_dir: PathBuf,
}

impl Default for OracleGenJob {
    fn default() -> Self {
        Self {
            schema_version: JOB_SCHEMA_VERSION,
            benchmark: ContaminationConfig::reference(),
            output_dir: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrototypeJob {
    pub schema_version: u32,
    pub prototype_mode: PrototypeMode,
    pub text_store_path: PathBuf,
    #[serde(default)]
    pub unlabeled_pool_path: Option<PathBuf>,
    #[serde(default)]
    pub labeled_store_path: Option<PathBuf>,
    #[serde(default)]
    pub tgap_n: Option<usize>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalJob {
    pub schema_version: u32,
    pub truth_path: PathBuf,
    pub predictions_path: PathBuf,
    /// Vocabulary source; defaults to the union of labels seen.
    #[serde(default)]
    pub prototypes_path: Option<PathBuf>,
    #[serde(default)]
    pub multilabel: bool,
    #[serde(default)]
    pub metric: MultiLabelMetric,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapJob {
    pub schema_version: u32,
    pub audio_store_path: PathBuf,
    pub text_store_path: PathBuf,
    /// Enables the per-class prototype distance analysis.
    #[serde(default)]
    pub labeled_store_path: Option<PathBuf>,
    /// TGAP pool for the distance analysis; defaults to the labeled store.
    #[serde(default)]
    pub unlabeled_pool_path: Option<PathBuf>,
    #[serde(default = "default_tgap_n")]
    pub tgap_n: usize,
    #[serde(default = "default_max_per_set")]
    pub max_per_set: usize,
    #[serde(default = "default_probe_epochs")]
    pub probe_epochs: usize,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

fn default_tgap_n() -> usize {
    DEFAULT_TGAP_NEIGHBORS
}

fn default_max_per_set() -> usize {
    2000
}

fn default_probe_epochs() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixJob {
    pub schema_version: u32,
    pub manifest_path: PathBuf,
    /// Clip `<class>/<name>` lives at `<foreground_dir>/<class>/<name>.wav`.
    pub foreground_dir: PathBuf,
    pub background_dir: PathBuf,
    #[serde(default)]
    pub format: WavFormat,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairJob {
    pub schema_version: u32,
    /// One subdirectory per foreground class.
    pub foreground_dir: PathBuf,
    /// One subdirectory per background environment.
    pub background_dir: PathBuf,
    #[serde(default = "default_snrs")]
    pub snrs_db: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

fn default_snrs() -> Vec<f64> {
    DEFAULT_SNRS_DB.to_vec()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyphonicJob {
    pub schema_version: u32,
    pub foreground_dir: PathBuf,
    pub classes_per_audio: usize,
    #[serde(default = "default_poly_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub render: bool,
    #[serde(default)]
    pub format: WavFormat,
    pub output_dir: PathBuf,
}

fn default_poly_count() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkJob {
    pub schema_version: u32,
    /// Recording id = file stem of each `.wav` directly inside this directory.
    pub recordings_dir: PathBuf,
    /// JSON lines of `{recording, class, start_s, end_s}`.
    #[serde(default)]
    pub annotations_path: Option<PathBuf>,
    #[serde(default = "default_chunk_s")]
    pub chunk_s: f64,
    #[serde(default)]
    pub min_overlap_s: f64,
    #[serde(default)]
    pub write_audio: bool,
    #[serde(default)]
    pub format: WavFormat,
    pub output_dir: PathBuf,
}

fn default_chunk_s() -> f64 {
    DEFAULT_CHUNK_SECONDS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRow {
    pub recording: String,
    pub class: String,
    pub start_s: f64,
    pub end_s: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_win_and_create_nested_keys() {
        let job: OracleGenJob = resolve(
            None,
            Some(OracleGenJob::default()),
            vec![("/benchmark/oracle/seed", Value::from(9)), ("/output_dir", Value::from("x"))],
        )
        .unwrap();
        assert_eq!(job.benchmark.oracle.seed, 9);
        assert_eq!(job.output_dir, PathBuf::from("x"));
    }

    #[test]
    fn null_override_removes_key() {
        let mut v = serde_json::json!({"a": {"b": 1, "c": 2}});
        set_pointer(&mut v, "/a/b", Value::Null).unwrap();
        assert_eq!(v, serde_json::json!({"a": {"c": 2}}));
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"schema_version":1,"truth_path":"t","predictions_path":"p","output_dir":"o","extra":1}"#)
            .unwrap();
        assert!(resolve::<EvalJob>(Some(&p), None, vec![]).is_err());
    }
}
