//! Audio-side commands: soundscape mixing and dataset manifests.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bgprofile::report::{read_json_lines, CsvTable};
use bgprofile::soundscape::{
    check_schema_version, generate_pairing_manifest, generate_polyphonic, mix_at_snr, read_wav, render_polyphonic,
    segment_into_chunks, wav_duration_s, write_wav, Annotation, AudioClip, ChunkConfig, ClipInfo, MixReportRow,
    PolyphonicSpec, SoundscapeSpec,
};
use rayon::prelude::*;

use crate::jobs::{check_version, AnnotationRow, ChunkJob, MixJob, PairJob, PolyphonicJob};
use crate::output::Outputs;

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

fn subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut dirs: Vec<(String, PathBuf)> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_dir())
        .map(|p| (p.file_name().unwrap_or_default().to_string_lossy().into_owned(), p))
        .collect();
    dirs.sort();
    Ok(dirs)
}

fn stem(p: &Path) -> String {
    p.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

/// Clips grouped by subdirectory, with ids `<group>/<stem>`.
fn grouped_clips(dir: &Path) -> Result<BTreeMap<String, Vec<ClipInfo>>> {
    let mut out = BTreeMap::new();
    for (group, path) in subdirs(dir)? {
        let clips = wav_files(&path)?
            .iter()
            .map(|f| Ok(ClipInfo::new(format!("{group}/{}", stem(f)), wav_duration_s(f)?, Some(group.clone()))))
            .collect::<Result<Vec<_>>>()?;
        out.insert(group, clips);
    }
    Ok(out)
}

fn clip_path(root: &Path, id: &str) -> PathBuf {
    root.join(format!("{id}.wav"))
}

/// File name for an output clip; path separators in ids become `__`.
fn file_name(id: &str) -> String {
    format!("{}.wav", id.replace(['/', '\\'], "__"))
}

fn load_clips(refs: impl IntoIterator<Item = (String, PathBuf)>) -> Result<HashMap<String, AudioClip>> {
    let unique: BTreeMap<String, PathBuf> = refs.into_iter().collect();
    unique
        .into_par_iter()
        .map(|(id, p)| Ok((id, read_wav(&p)?)))
        .collect()
}

pub fn dataset_pair(job: &PairJob, out: &mut Outputs) -> Result<()> {
    check_version(job.schema_version)?;
    let foregrounds: Vec<ClipInfo> = grouped_clips(&job.foreground_dir)?.into_values().flatten().collect();
    let backgrounds = grouped_clips(&job.background_dir)?;
    let specs = generate_pairing_manifest(&foregrounds, &backgrounds, &job.snrs_db, job.seed)?;
    out.json_lines("pairing_manifest.jsonl", &specs)?;
    Ok(())
}

pub fn mix(job: &MixJob, out: &mut Outputs) -> Result<()> {
    check_version(job.schema_version)?;
    let specs: Vec<SoundscapeSpec> = read_json_lines(&job.manifest_path)?;
    let mut seen = HashSet::new();
    for s in &specs {
        check_schema_version(s.schema_version)?;
        if !seen.insert(&s.id) {
            bail!("duplicate spec id `{}`", s.id);
        }
    }
    let fg = load_clips(specs.iter().map(|s| (s.foreground_ref.clone(), clip_path(&job.foreground_dir, &s.foreground_ref))))?;
    let bg = load_clips(specs.iter().map(|s| (s.background_ref.clone(), clip_path(&job.background_dir, &s.background_ref))))?;
    let paths = specs
        .iter()
        .map(|s| out.path(&format!("wav/{}", file_name(&s.id))))
        .collect::<Result<Vec<_>>>()?;
    let rows = specs
        .par_iter()
        .zip(&paths)
        .map(|(s, path)| {
            let m = mix_at_snr(&fg[&s.foreground_ref], &bg[&s.background_ref], s)
                .with_context(|| format!("mixing `{}`", s.id))?;
            write_wav(&m.clip, path, job.format)?;
            Ok(MixReportRow {
                id: s.id.clone(),
                requested_snr_db: s.snr_db,
                achieved_snr_db: m.achieved_snr_db,
                fg_gain: m.fg_gain,
                safety_gain: m.safety_gain,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.json_lines("mix_report.jsonl", &rows)?;
    let mut t = CsvTable::new(["id", "requested_snr_db", "achieved_snr_db", "fg_gain", "safety_gain"]);
    for r in &rows {
        t.push([
            r.id.clone(),
            r.requested_snr_db.to_string(),
            format!("{:.6}", r.achieved_snr_db),
            format!("{:.6}", r.fg_gain),
            format!("{:.6}", r.safety_gain),
        ]);
    }
    let p = out.path("mix_report.csv")?;
    t.write(&p)?;
    Ok(())
}

pub fn dataset_polyphonic(job: &PolyphonicJob, out: &mut Outputs) -> Result<()> {
    check_version(job.schema_version)?;
    let by_class = grouped_clips(&job.foreground_dir)?;
    let specs: Vec<PolyphonicSpec> = generate_polyphonic(&by_class, job.classes_per_audio, job.count, job.seed)?;
    out.json_lines("polyphonic_manifest.jsonl", &specs)?;
    if job.render {
        let clips = load_clips(
            specs
                .iter()
                .flat_map(|s| s.sources.iter())
                .map(|src| (src.clip_ref.clone(), clip_path(&job.foreground_dir, &src.clip_ref))),
        )?;
        let paths = specs
            .iter()
            .map(|s| out.path(&format!("wav/{}", file_name(&s.id))))
            .collect::<Result<Vec<_>>>()?;
        specs.par_iter().zip(&paths).try_for_each(|(s, p)| -> Result<()> {
            let m = render_polyphonic(s, &clips)?;
            write_wav(&m.clip, p, job.format)?;
            Ok(())
        })?;
    }
    Ok(())
}

pub fn dataset_chunk(job: &ChunkJob, out: &mut Outputs) -> Result<()> {
    check_version(job.schema_version)?;
    let cfg = ChunkConfig {
        chunk_s: job.chunk_s,
        min_overlap_s: job.min_overlap_s,
    };
    let rows: Vec<AnnotationRow> = match &job.annotations_path {
        Some(p) => read_json_lines(p)?,
        None => Vec::new(),
    };
    let mut by_recording: BTreeMap<String, Vec<Annotation>> = BTreeMap::new();
    for r in rows {
        by_recording
            .entry(r.recording)
            .or_default()
            .push(Annotation::new(r.class, r.start_s, r.end_s));
    }
    let files = wav_files(&job.recordings_dir)?;
    let known: HashSet<String> = files.iter().map(|f| stem(f)).collect();
    if let Some(unknown) = by_recording.keys().find(|k| !known.contains(*k)) {
        bail!("annotations reference unknown recording `{unknown}`");
    }
    let mut chunks = Vec::new();
    for f in &files {
        let id = stem(f);
        let clip: AudioClip = read_wav(f)?;
        let ann = by_recording.get(&id).map(Vec::as_slice).unwrap_or_default();
        let cs = segment_into_chunks(&id, &clip, ann, &cfg)?;
        if job.write_audio {
            for c in &cs {
                let p = out.path(&format!("wav/{}", file_name(&c.id)))?;
                write_wav(&bgprofile::soundscape::chunk_clip(&clip, c)?, &p, job.format)?;
            }
        }
        chunks.extend(cs);
    }
    out.json_lines("chunks.jsonl", &chunks)?;
    Ok(())
}
