mod audio;
mod jobs;
mod output;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use bgprofile::config::{BackgroundMode, ExperimentConfig};
use bgprofile::eval::MultiLabelMetric;
use bgprofile::prototypes::PrototypeMode;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::jobs::{opt, resolve, Overrides};
use crate::output::{log_run, Outputs};

#[derive(Parser)]
#[command(name = "bgprofile", version, about = "Background-aware zero-shot audio classification.")]
struct Cli {
    /// JSON config for the subcommand; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embedding store utilities.
    Store {
        #[command(subcommand)]
        cmd: StoreCmd,
    },
    /// Render a pairing manifest to WAV with an achieved-SNR report.
    Mix {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        format: Option<FormatArg>,
    },
    /// Build soundscape manifests.
    Dataset {
        #[command(subcommand)]
        cmd: DatasetCmd,
    },
    Prototypes {
        #[command(subcommand)]
        cmd: PrototypesCmd,
    },
    /// Per-sample profiles and baseline predictions.
    Classify {
        #[arg(long)]
        audio: Option<PathBuf>,
        #[arg(long)]
        prompts: Option<PathBuf>,
        #[arg(long)]
        mode: Option<ModeArg>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Subtract a weighted background profile and re-predict.
    Adapt {
        #[arg(long)]
        tau: Option<f64>,
        #[command(flatten)]
        bg: BackgroundArgs,
    },
    /// Grid search of tau against the truth manifest.
    TauSearch {
        /// start:stop:step
        #[arg(long)]
        grid: Option<String>,
        #[command(flatten)]
        bg: BackgroundArgs,
    },
    /// Score predictions against a truth manifest.
    Eval {
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        prototypes: Option<PathBuf>,
        #[arg(long)]
        multilabel: bool,
        #[arg(long)]
        metric: Option<MetricArg>,
    },
    /// Modality gap statistics.
    Gap {
        #[command(subcommand)]
        cmd: GapCmd,
    },
    /// Synthetic embedding data.
    Oracle {
        #[command(subcommand)]
        cmd: OracleCmd,
    },
}

#[derive(Subcommand)]
enum StoreCmd {
    /// Print dimension and counts per modality and label.
    Inspect { path: PathBuf },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Foreground x environment x SNR pairing manifest.
    Pair,
    /// Mixtures of several foreground classes.
    Polyphonic {
        #[arg(long)]
        classes_per_audio: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        render: bool,
    },
    /// Fixed-length labeled chunks of annotated recordings.
    Chunk {
        #[arg(long)]
        chunk_s: Option<f64>,
        #[arg(long)]
        write_audio: bool,
    },
}

#[derive(Subcommand)]
enum PrototypesCmd {
    Build {
        #[arg(long)]
        mode: Option<ModeArg>,
        #[arg(long)]
        prompts: Option<PathBuf>,
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        labeled: Option<PathBuf>,
        #[arg(long)]
        tgap_n: Option<usize>,
    },
}

#[derive(Subcommand)]
enum GapCmd {
    Report {
        #[arg(long)]
        audio: Option<PathBuf>,
        #[arg(long)]
        text: Option<PathBuf>,
        #[arg(long)]
        labeled: Option<PathBuf>,
        #[arg(long)]
        pool: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Contamination benchmark stores and truth manifest.
    Gen,
}

#[derive(clap::Args)]
struct BackgroundArgs {
    #[arg(long)]
    background: Option<BackgroundArg>,
    /// Background store: embedded prompts for text, recordings for audio.
    #[arg(long, requires = "background")]
    background_store: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Defaults to `<output-dir>/profiles.jsonl`.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Defaults to `<output-dir>/prototypes.atpe`.
    #[arg(long)]
    prototypes: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModeArg {
    #[value(alias = "text-anchor")]
    Text,
    Tgap,
    Supervised,
}

impl From<ModeArg> for PrototypeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Text => PrototypeMode::TextAnchor,
            ModeArg::Tgap => PrototypeMode::Tgap,
            ModeArg::Supervised => PrototypeMode::Supervised,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum BackgroundArg {
    Text,
    Audio,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum FormatArg {
    Pcm16,
    Float32,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum MetricArg {
    ExactMatch,
    Jaccard,
}

impl From<MetricArg> for MultiLabelMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::ExactMatch => MultiLabelMetric::ExactMatch,
            MetricArg::Jaccard => MultiLabelMetric::Jaccard,
        }
    }
}

fn common(cli: &Cli, seed_pointer: Option<&'static str>) -> Overrides {
    let mut o = Overrides::new();
    opt("/output_dir", cli.output_dir.as_ref(), &mut o);
    if let Some(p) = seed_pointer {
        opt(p, cli.seed, &mut o);
    }
    o
}

/// Run `f` against a fresh output registry; on failure every file it wrote is removed.
fn with_outputs<C: Serialize>(
    command: &str,
    dir: &Path,
    resolved: &C,
    f: impl FnOnce(&mut Outputs) -> Result<()>,
) -> Result<()> {
    let started = Instant::now();
    let mut out = Outputs::new(dir)?;
    let result = out
        .json(&format!("resolved_{}.json", command.replace(' ', "_")), resolved)
        .and_then(|_| f(&mut out));
    match result {
        Ok(()) => {
            log_run(dir, &format!("{command} ok {:.3}s", started.elapsed().as_secs_f64()));
            Ok(())
        }
        Err(e) => {
            out.discard();
            if dir.exists() {
                log_run(dir, &format!("{command} failed: {e:#}"));
            }
            Err(e)
        }
    }
}

fn experiment(cli: &Cli, mut o: Overrides) -> Result<ExperimentConfig> {
    o.extend(common(cli, Some("/seed")));
    let cfg: ExperimentConfig = resolve(cli.config.as_deref(), None, o)?;
    Ok(cfg.validate()?)
}

fn background_overrides(bg: &BackgroundArgs, o: &mut Overrides) {
    if let Some(mode) = bg.background {
        let (mode, key, other) = match mode {
            BackgroundArg::Text => (BackgroundMode::Text, "/background_prompts", "/background_store_path"),
            BackgroundArg::Audio => (BackgroundMode::Audio, "/background_store_path", "/background_prompts"),
        };
        opt("/background_mode", Some(mode), o);
        if let Some(p) = &bg.background_store {
            o.push((other, Value::Null));
            opt(key, Some(p), o);
        }
    }
    opt("/truth_path", bg.truth.as_ref(), o);
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Store {
            cmd: StoreCmd::Inspect { path },
        } => {
            print!("{}", pipeline::store_inspect(path)?);
            Ok(())
        }
        Command::Oracle { cmd: OracleCmd::Gen } => {
            let job: jobs::OracleGenJob = resolve(
                cli.config.as_deref(),
                Some(jobs::OracleGenJob::default()),
                common(&cli, Some("/benchmark/oracle/seed")),
            )?;
            with_outputs("oracle gen", &job.output_dir, &job, |out| pipeline::oracle_gen(&job, out))
        }
        Command::Prototypes {
            cmd: PrototypesCmd::Build {
                mode,
                prompts,
                pool,
                labeled,
                tgap_n,
            },
        } => {
            let mut o = common(&cli, None);
            opt("/prototype_mode", mode.map(PrototypeMode::from), &mut o);
            opt("/text_store_path", prompts.as_ref(), &mut o);
            opt("/unlabeled_pool_path", pool.as_ref(), &mut o);
            opt("/labeled_store_path", labeled.as_ref(), &mut o);
            opt("/tgap_n", *tgap_n, &mut o);
            let job: jobs::PrototypeJob = resolve(cli.config.as_deref(), None, o)?;
            with_outputs("prototypes build", &job.output_dir, &job, |out| pipeline::prototypes_build(&job, out))
        }
        Command::Classify {
            audio,
            prompts,
            mode,
            threshold,
        } => {
            let mut o = Overrides::new();
            opt("/audio_store_path", audio.as_ref(), &mut o);
            opt("/text_store_path", prompts.as_ref(), &mut o);
            opt("/prototype_mode", mode.map(PrototypeMode::from), &mut o);
            opt("/multilabel_threshold", *threshold, &mut o);
            let cfg = experiment(&cli, o)?;
            with_outputs("classify", &cfg.output_dir, &cfg, |out| pipeline::classify_cmd(&cfg, out))
        }
        Command::Adapt { tau, bg } => {
            let mut o = Overrides::new();
            background_overrides(bg, &mut o);
            opt("/tau", *tau, &mut o);
            let cfg = experiment(&cli, o)?;
            let profiles = pipeline::default_in(&cfg.output_dir, bg.profiles.clone(), "profiles.jsonl");
            let prototypes = pipeline::default_in(&cfg.output_dir, bg.prototypes.clone(), "prototypes.atpe");
            with_outputs("adapt", &cfg.output_dir, &cfg, |out| {
                pipeline::adapt_cmd(&cfg, &profiles, &prototypes, out)
            })
        }
        Command::TauSearch { grid, bg } => {
            let mut o = Overrides::new();
            background_overrides(bg, &mut o);
            opt("/tau_grid", grid.as_ref(), &mut o);
            let cfg = experiment(&cli, o)?;
            let profiles = pipeline::default_in(&cfg.output_dir, bg.profiles.clone(), "profiles.jsonl");
            let prototypes = pipeline::default_in(&cfg.output_dir, bg.prototypes.clone(), "prototypes.atpe");
            with_outputs("tau-search", &cfg.output_dir, &cfg, |out| {
                pipeline::tau_search_cmd(&cfg, &profiles, &prototypes, out)
            })
        }
        Command::Eval {
            truth,
            predictions,
            prototypes,
            multilabel,
            metric,
        } => {
            let mut o = common(&cli, None);
            opt("/truth_path", truth.as_ref(), &mut o);
            opt("/predictions_path", predictions.as_ref(), &mut o);
            opt("/prototypes_path", prototypes.as_ref(), &mut o);
            if *multilabel {
                o.push(("/multilabel", Value::Bool(true)));
            }
            opt("/metric", metric.map(MultiLabelMetric::from), &mut o);
            let job: jobs::EvalJob = resolve(cli.config.as_deref(), None, o)?;
            with_outputs("eval", &job.output_dir, &job, |out| pipeline::eval_cmd(&job, out))
        }
        Command::Gap {
            cmd: GapCmd::Report {
                audio,
                text,
                labeled,
                pool,
            },
        } => {
            let mut o = common(&cli, Some("/seed"));
            opt("/audio_store_path", audio.as_ref(), &mut o);
            opt("/text_store_path", text.as_ref(), &mut o);
            opt("/labeled_store_path", labeled.as_ref(), &mut o);
            opt("/unlabeled_pool_path", pool.as_ref(), &mut o);
            let job: jobs::GapJob = resolve(cli.config.as_deref(), None, o)?;
            with_outputs("gap report", &job.output_dir, &job, |out| pipeline::gap_report_cmd(&job, out))
        }
        Command::Mix { manifest, format } => {
            let mut o = common(&cli, None);
            opt("/manifest_path", manifest.as_ref(), &mut o);
            opt("/format", *format, &mut o);
            let job: jobs::MixJob = resolve(cli.config.as_deref(), None, o)?;
            with_outputs("mix", &job.output_dir, &job, |out| audio::mix(&job, out))
        }
        Command::Dataset { cmd } => match cmd {
            DatasetCmd::Pair => {
                let job: jobs::PairJob = resolve(cli.config.as_deref(), None, common(&cli, Some("/seed")))?;
                with_outputs("dataset pair", &job.output_dir, &job, |out| audio::dataset_pair(&job, out))
            }
            DatasetCmd::Polyphonic {
                classes_per_audio,
                count,
                render,
            } => {
                let mut o = common(&cli, Some("/seed"));
                opt("/classes_per_audio", *classes_per_audio, &mut o);
                opt("/count", *count, &mut o);
                if *render {
                    o.push(("/render", Value::Bool(true)));
                }
                let job: jobs::PolyphonicJob = resolve(cli.config.as_deref(), None, o)?;
                with_outputs("dataset polyphonic", &job.output_dir, &job, |out| {
                    audio::dataset_polyphonic(&job, out)
                })
            }
            DatasetCmd::Chunk { chunk_s, write_audio } => {
                let mut o = common(&cli, None);
                opt("/chunk_s", *chunk_s, &mut o);
                if *write_audio {
                    o.push(("/write_audio", Value::Bool(true)));
                }
                let job: jobs::ChunkJob = resolve(cli.config.as_deref(), None, o)?;
                with_outputs("dataset chunk", &job.output_dir, &job, |out| audio::dataset_chunk(&job, out))
            }
        },
    }
}

fn error_json(e: &anyhow::Error) -> Value {
    let lib = e.chain().find_map(|c| c.downcast_ref::<bgprofile::Error>());
    let kind = match lib {
        Some(l) => l.kind(),
        None if e.chain().any(|c| c.is::<serde_json::Error>()) => "ConfigError",
        None => "Error",
    };
    let mut parts: Vec<String> = Vec::new();
    for c in e.chain() {
        let m = c.to_string();
        if !parts.last().is_some_and(|p| p.ends_with(&m)) {
            parts.push(m);
        }
    }
    let mut err = json!({ "kind": kind, "message": parts.join(": ") });
    match lib {
        Some(bgprofile::Error::Format { offset, .. }) => {
            err["offset"] = json!(offset);
        }
        Some(bgprofile::Error::Config(errors)) => {
            err["errors"] = json!(errors);
        }
        _ => {}
    }
    json!({ "error": err })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let text = to_canonical_json_line(&error_json(&e));
            eprint!("{text}");
            ExitCode::FAILURE
        }
    }
}

fn to_canonical_json_line(v: &Value) -> String {
    bgprofile::report::to_canonical_json_line(v).unwrap_or_else(|_| format!("{v}\n"))
}

