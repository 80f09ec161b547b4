//! Foreground/background mixing at a target SNR, polyphonic mixtures and
//! fixed-length chunk segmentation.
//!
//! SNR is measured with RMS over the foreground's active window. The
//! background is the reference level and is never rescaled on its own.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{derive_seed, rng_for};
use crate::scalar::Scalar;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_CHUNK_SECONDS: f64 = 10.0;
pub const DEFAULT_SNRS_DB: [f64; 3] = [6.0, 8.0, 10.0];
pub const DEFAULT_SOURCE_RMS: f64 = 0.1;
pub const SNR_WINDOW: &str = "foreground_active";

const SILENCE_RMS: f64 = 1e-9;
const STREAM_PAIRING: u64 = 0x7061_6972;
const STREAM_POLYPHONIC: u64 = 0x706f_6c79;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip<T: Scalar = f64> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Scalar> AudioClip<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidClip("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidClip("no samples".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite() || s.abs() > T::one()) {
            return Err(Error::InvalidClip(format!(
                "sample {i} = {} is not finite or outside [-1, 1]",
                samples[i]
            )));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().map(|s| s.as_f64().abs()).fold(0.0, f64::max)
    }

    /// Samples `[start, end)` as a new clip.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.samples.len() {
            return Err(Error::EmptySegment {
                start_s: start as f64 / self.sample_rate as f64,
                end_s: end as f64 / self.sample_rate as f64,
            });
        }
        Ok(Self {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        })
    }

    fn seconds_to_index(&self, t: f64) -> usize {
        (t * self.sample_rate as f64).round().max(0.0) as usize
    }
}

fn rms_of<T: Scalar>(samples: &[T]) -> f64 {
    let sum: f64 = samples.iter().map(|s| {
        let v = s.as_f64();
        v * v
    }).sum();
    (sum / samples.len() as f64).sqrt()
}

/// Root-mean-square of `[start_s, end_s)`, accumulated in f64.
pub fn rms<T: Scalar>(clip: &AudioClip<T>, start_s: f64, end_s: f64) -> Result<f64> {
    let empty = Error::EmptySegment { start_s, end_s };
    if !(start_s.is_finite() && end_s.is_finite()) || start_s < 0.0 || start_s >= end_s {
        return Err(empty);
    }
    let start = clip.seconds_to_index(start_s);
    let end = clip.seconds_to_index(end_s);
    if start >= end || end > clip.len() {
        return Err(empty);
    }
    Ok(rms_of(&clip.samples[start..end]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoundscapeSpec {
    pub schema_version: u32,
    pub id: String,
    pub foreground_ref: String,
    pub background_ref: String,
    #[serde(default)]
    pub environment: Option<String>,
    #[serde(default)]
    pub label: Option<String>,
    pub snr_db: f64,
    pub onset_s: f64,
    pub seed: u64,
    pub snr_window: String,
}

impl SoundscapeSpec {
    pub fn new(
        id: impl Into<String>,
        foreground_ref: impl Into<String>,
        background_ref: impl Into<String>,
        snr_db: f64,
        onset_s: f64,
        seed: u64,
    ) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            id: id.into(),
            foreground_ref: foreground_ref.into(),
            background_ref: background_ref.into(),
            environment: None,
            label: None,
            snr_db,
            onset_s,
            seed,
            snr_window: SNR_WINDOW.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixResult<T: Scalar = f64> {
    pub clip: AudioClip<T>,
    pub fg_gain: f64,
    pub safety_gain: f64,
    pub achieved_snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixReportRow {
    pub id: String,
    pub requested_snr_db: f64,
    pub achieved_snr_db: f64,
    pub fg_gain: f64,
    pub safety_gain: f64,
}

/// Scale `fg` against the unscaled `bg` so the mixture hits `spec.snr_db`,
/// attenuating the whole mixture if it would clip.
pub fn mix_at_snr<T: Scalar>(fg: &AudioClip<T>, bg: &AudioClip<T>, spec: &SoundscapeSpec) -> Result<MixResult<T>> {
    if fg.sample_rate != bg.sample_rate {
        return Err(Error::SampleRateMismatch {
            fg: fg.sample_rate,
            bg: bg.sample_rate,
        });
    }
    if !spec.snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!("snr_db {} is not finite", spec.snr_db)));
    }
    if !(spec.onset_s.is_finite() && spec.onset_s >= 0.0) {
        return Err(Error::InvalidArgument(format!("onset_s {} must be finite and >= 0", spec.onset_s)));
    }
    let onset = bg.seconds_to_index(spec.onset_s);
    let end = onset + fg.len();
    if end > bg.len() {
        return Err(Error::ForegroundTooLong);
    }
    let fg_rms = rms_of(&fg.samples);
    if fg_rms < SILENCE_RMS {
        return Err(Error::SilentForeground);
    }
    let bg_rms = rms_of(&bg.samples[onset..end]);
    if bg_rms < SILENCE_RMS {
        return Err(Error::SilentBackground);
    }
    let fg_gain = bg_rms * 10f64.powf(spec.snr_db / 20.0) / fg_rms;

    let mut mixed: Vec<f64> = bg.samples.iter().map(|s| s.as_f64()).collect();
    for (m, f) in mixed[onset..end].iter_mut().zip(&fg.samples) {
        *m += fg_gain * f.as_f64();
    }
    let safety_gain = safety_gain_for(&mixed);
    let samples: Vec<T> = mixed.iter().map(|&m| T::from_f64_lossy(safety_gain * m)).collect();
    let clip = AudioClip::new(samples, bg.sample_rate)?;

    let achieved_snr_db = measure_snr_db(&clip, bg, onset, end, safety_gain)?;
    Ok(MixResult {
        clip,
        fg_gain,
        safety_gain,
        achieved_snr_db,
    })
}

/// Largest gain <= 1 that keeps every scaled sample inside [-1, 1].
fn safety_gain_for(mixed: &[f64]) -> f64 {
    let peak = mixed.iter().map(|m| m.abs()).fold(0.0, f64::max);
    if peak <= 1.0 {
        return 1.0;
    }
    let mut gain = 1.0 / peak;
    while mixed.iter().any(|m| (gain * m).abs() > 1.0) {
        gain = f64::from_bits(gain.to_bits() - 1);
    }
    gain
}

/// SNR of a rendered mixture, recovering the foreground as mix minus the
/// scaled background over the foreground window.
fn measure_snr_db<T: Scalar>(mix: &AudioClip<T>, bg: &AudioClip<T>, start: usize, end: usize, safety_gain: f64) -> Result<f64> {
    let mut signal = 0.0;
    let mut noise = 0.0;
    for i in start..end {
        let b = safety_gain * bg.samples[i].as_f64();
        let f = mix.samples[i].as_f64() - b;
        signal += f * f;
        noise += b * b;
    }
    if noise <= 0.0 {
        return Err(Error::SilentBackground);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Minimal description of a clip used for manifest generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipInfo {
    pub id: String,
    pub duration_s: f64,
    #[serde(default)]
    pub label: Option<String>,
}

impl ClipInfo {
    pub fn new(id: impl Into<String>, duration_s: f64, label: Option<String>) -> Self {
        Self {
            id: id.into(),
            duration_s,
            label,
        }
    }

    pub fn of<T: Scalar>(id: impl Into<String>, clip: &AudioClip<T>, label: Option<String>) -> Self {
        Self::new(id, clip.duration_s(), label)
    }
}

/// One spec per (foreground, environment, SNR). The background clip and onset
/// are drawn once per (foreground, environment) so the SNR levels share them.
pub fn generate_pairing_manifest(
    foregrounds: &[ClipInfo],
    backgrounds: &BTreeMap<String, Vec<ClipInfo>>,
    snrs_db: &[f64],
    seed: u64,
) -> Result<Vec<SoundscapeSpec>> {
    if foregrounds.is_empty() {
        return Err(Error::EmptySet("foreground set".into()));
    }
    if backgrounds.is_empty() {
        return Err(Error::EmptySet("background environments".into()));
    }
    if snrs_db.is_empty() {
        return Err(Error::EmptySet("SNR levels".into()));
    }
    if let Some(s) = snrs_db.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("snr {s} is not finite")));
    }
    let mut specs = Vec::with_capacity(foregrounds.len() * backgrounds.len() * snrs_db.len());
    for (fi, fg) in foregrounds.iter().enumerate() {
        for (ei, (env, bgs)) in backgrounds.iter().enumerate() {
            if bgs.is_empty() {
                return Err(Error::EmptySet(format!("background environment `{env}`")));
            }
            let fits: Vec<&ClipInfo> = bgs.iter().filter(|b| b.duration_s >= fg.duration_s).collect();
            if fits.is_empty() {
                return Err(Error::ForegroundTooLong);
            }
            let parts = [STREAM_PAIRING, fi as u64, ei as u64];
            let mut rng = rng_for(seed, &parts);
            let bg = fits[rng.gen_range(0..fits.len())];
            let slack = bg.duration_s - fg.duration_s;
            let onset_s = if slack > 0.0 { rng.gen_range(0.0..slack) } else { 0.0 };
            for &snr in snrs_db {
                let mut spec = SoundscapeSpec::new(
                    format!("{}__{}__snr{}", fg.id, env, snr),
                    fg.id.clone(),
                    bg.id.clone(),
                    snr,
                    onset_s,
                    derive_seed(seed, &parts),
                );
                spec.environment = Some(env.clone());
                spec.label = fg.label.clone();
                specs.push(spec);
            }
        }
    }
    Ok(specs)
}

/// Render every spec in parallel. Output order follows `specs`.
pub fn render_manifest<T: Scalar>(
    specs: &[SoundscapeSpec],
    clips: &HashMap<String, AudioClip<T>>,
) -> Result<Vec<MixResult<T>>> {
    specs
        .par_iter()
        .map(|spec| {
            let fg = lookup(clips, &spec.foreground_ref)?;
            let bg = lookup(clips, &spec.background_ref)?;
            mix_at_snr(fg, bg, spec)
        })
        .collect()
}

fn lookup<'a, T: Scalar>(clips: &'a HashMap<String, AudioClip<T>>, id: &str) -> Result<&'a AudioClip<T>> {
    clips
        .get(id)
        .ok_or_else(|| Error::InvalidArgument(format!("no clip `{id}`")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyphonicSource {
    pub class: String,
    pub clip_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyphonicSpec {
    pub schema_version: u32,
    pub id: String,
    pub sources: Vec<PolyphonicSource>,
    pub labels: Vec<String>,
    pub source_rms: f64,
    pub seed: u64,
}

/// `count` mixtures of clips from exactly `classes_per_audio` distinct classes.
pub fn generate_polyphonic(
    by_class: &BTreeMap<String, Vec<ClipInfo>>,
    classes_per_audio: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<PolyphonicSpec>> {
    let classes: Vec<&String> = by_class.iter().filter(|(_, v)| !v.is_empty()).map(|(k, _)| k).collect();
    if classes_per_audio == 0 {
        return Err(Error::InvalidArgument("classes_per_audio must be at least 1".into()));
    }
    if classes.len() < classes_per_audio {
        return Err(Error::InsufficientClasses {
            needed: classes_per_audio,
            available: classes.len(),
        });
    }
    (0..count)
        .map(|i| {
            let parts = [STREAM_POLYPHONIC, classes_per_audio as u64, i as u64];
            let mut rng = rng_for(seed, &parts);
            let mut picked = sample(&mut rng, classes.len(), classes_per_audio).into_vec();
            picked.sort_unstable();
            let sources: Vec<PolyphonicSource> = picked
                .iter()
                .map(|&c| {
                    let clips = &by_class[classes[c]];
                    PolyphonicSource {
                        class: classes[c].clone(),
                        clip_ref: clips[rng.gen_range(0..clips.len())].id.clone(),
                    }
                })
                .collect();
            Ok(PolyphonicSpec {
                schema_version: MANIFEST_SCHEMA_VERSION,
                id: format!("poly{classes_per_audio}_{i:06}"),
                labels: sources.iter().map(|s| s.class.clone()).collect(),
                sources,
                source_rms: DEFAULT_SOURCE_RMS,
                seed: derive_seed(seed, &parts),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyphonicMix<T: Scalar = f64> {
    pub clip: AudioClip<T>,
    pub source_gains: Vec<f64>,
    pub safety_gain: f64,
}

/// Sum the sources from time zero, each scaled to `spec.source_rms`.
pub fn render_polyphonic<T: Scalar>(spec: &PolyphonicSpec, clips: &HashMap<String, AudioClip<T>>) -> Result<PolyphonicMix<T>> {
    let sources = spec
        .sources
        .iter()
        .map(|s| lookup(clips, &s.clip_ref))
        .collect::<Result<Vec<_>>>()?;
    let first = sources.first().ok_or_else(|| Error::EmptySet(format!("sources of `{}`", spec.id)))?;
    let rate = first.sample_rate;
    if let Some(other) = sources.iter().find(|c| c.sample_rate != rate) {
        return Err(Error::SampleRateMismatch {
            fg: rate,
            bg: other.sample_rate,
        });
    }
    let len = sources.iter().map(|c| c.len()).max().unwrap_or(0);
    let mut mixed = vec![0.0f64; len];
    let mut source_gains = Vec::with_capacity(sources.len());
    for clip in &sources {
        let r = rms_of(&clip.samples);
        if r < SILENCE_RMS {
            return Err(Error::SilentForeground);
        }
        let g = spec.source_rms / r;
        for (m, s) in mixed.iter_mut().zip(&clip.samples) {
            *m += g * s.as_f64();
        }
        source_gains.push(g);
    }
    let safety_gain = safety_gain_for(&mixed);
    let samples = mixed.iter().map(|&m| T::from_f64_lossy(safety_gain * m)).collect();
    Ok(PolyphonicMix {
        clip: AudioClip::new(samples, rate)?,
        source_gains,
        safety_gain,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub class: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl Annotation {
    pub fn new(class: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        Self {
            class: class.into(),
            start_s,
            end_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkConfig {
    pub chunk_s: f64,
    /// An annotation labels a chunk when it overlaps it by strictly more than this.
    pub min_overlap_s: f64,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            chunk_s: DEFAULT_CHUNK_SECONDS,
            min_overlap_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Chunk {
    pub schema_version: u32,
    pub id: String,
    pub recording_ref: String,
    pub index: usize,
    pub start_sample: usize,
    pub end_sample: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub labels: Vec<String>,
    pub background: bool,
}

/// Consecutive non-overlapping chunks; the trailing partial chunk is dropped.
pub fn segment_into_chunks<T: Scalar>(
    recording_ref: &str,
    recording: &AudioClip<T>,
    annotations: &[Annotation],
    cfg: &ChunkConfig,
) -> Result<Vec<Chunk>> {
    if !(cfg.chunk_s.is_finite() && cfg.chunk_s > 0.0) {
        return Err(Error::InvalidArgument(format!("chunk length {} must be positive", cfg.chunk_s)));
    }
    if !(cfg.min_overlap_s.is_finite() && cfg.min_overlap_s >= 0.0) {
        return Err(Error::InvalidArgument(format!("min overlap {} must be >= 0", cfg.min_overlap_s)));
    }
    let duration_s = recording.duration_s();
    for a in annotations {
        if !(a.start_s.is_finite() && a.end_s.is_finite()) || a.start_s < 0.0 || a.end_s < a.start_s || a.end_s > duration_s + 1e-9 {
            return Err(Error::AnnotationOutOfBounds {
                class: a.class.clone(),
                start_s: a.start_s,
                end_s: a.end_s,
                duration_s,
            });
        }
    }
    let rate = recording.sample_rate as f64;
    let chunk_len = (cfg.chunk_s * rate).round() as usize;
    if chunk_len == 0 {
        return Err(Error::InvalidArgument("chunk shorter than one sample".into()));
    }
    Ok((0..recording.len() / chunk_len)
        .map(|i| {
            let start_sample = i * chunk_len;
            let end_sample = start_sample + chunk_len;
            let start_s = start_sample as f64 / rate;
            let end_s = end_sample as f64 / rate;
            let labels: BTreeSet<String> = annotations
                .iter()
                .filter(|a| a.end_s.min(end_s) - a.start_s.max(start_s) > cfg.min_overlap_s)
                .map(|a| a.class.clone())
                .collect();
            Chunk {
                schema_version: MANIFEST_SCHEMA_VERSION,
                id: format!("{recording_ref}__chunk{i:03}"),
                recording_ref: recording_ref.to_string(),
                index: i,
                start_sample,
                end_sample,
                start_s,
                end_s,
                background: labels.is_empty(),
                labels: labels.into_iter().collect(),
            }
        })
        .collect())
}

pub fn chunk_clip<T: Scalar>(recording: &AudioClip<T>, chunk: &Chunk) -> Result<AudioClip<T>> {
    recording.slice(chunk.start_sample, chunk.end_sample)
}

pub fn check_schema_version(found: u32) -> Result<()> {
    if found != MANIFEST_SCHEMA_VERSION {
        return Err(Error::InvalidArgument(format!(
            "manifest schema version {found}, expected {MANIFEST_SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WavFormat {
    #[default]
    Pcm16,
    Float32,
}

pub fn read_wav<T: Scalar>(path: impl AsRef<Path>) -> Result<AudioClip<T>> {
    let path = path.as_ref();
    let wav = |e| Error::Wav {
        path: path.to_path_buf(),
        source: e,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::InvalidClip(format!("{}: {} channels, expected mono", path.display(), spec.channels)));
    }
    let samples: Vec<T> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(|v| T::from_f64_lossy(v as f64)))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav)?,
        hound::SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| T::from_f64_lossy(v as f64 / scale)))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav)?
        }
    };
    AudioClip::new(samples, spec.sample_rate)
}

/// Duration from the WAV header, without decoding samples.
pub fn wav_duration_s(path: impl AsRef<Path>) -> Result<f64> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| Error::Wav {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(reader.duration() as f64 / reader.spec().sample_rate as f64)
}

pub fn write_wav<T: Scalar>(clip: &AudioClip<T>, path: impl AsRef<Path>, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    let wav = |e| Error::Wav {
        path: path.to_path_buf(),
        source: e,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => hound::SampleFormat::Int,
            WavFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav)?;
    for s in &clip.samples {
        let v = s.as_f64();
        match format {
            WavFormat::Pcm16 => writer
                .write_sample((v * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
                .map_err(wav)?,
            WavFormat::Float32 => writer.write_sample(v as f32).map_err(wav)?,
        }
    }
    writer.finalize().map_err(wav)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sine(freq: f64, amp: f64, seconds: f64, rate: u32) -> AudioClip {
        let n = (seconds * rate as f64) as usize;
        let s = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        AudioClip::new(s, rate).unwrap()
    }

    fn independent_snr(mix: &AudioClip, bg: &AudioClip, onset: usize, len: usize, safety: f64) -> f64 {
        let b: Vec<f64> = bg.samples()[onset..onset + len].iter().map(|v| safety * v).collect();
        let f: Vec<f64> = mix.samples()[onset..onset + len].iter().zip(&b).map(|(m, b)| m - b).collect();
        let p = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        10.0 * (p(&f) / p(&b)).log10()
    }

    #[test]
    fn clip_rejects_out_of_range() {
        assert!(AudioClip::new(vec![0.5, 1.5], 8000).is_err());
        assert!(AudioClip::new(vec![f64::NAN], 8000).is_err());
        assert!(AudioClip::<f64>::new(vec![], 8000).is_err());
        assert!(AudioClip::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn rms_examples() {
        let c = AudioClip::new(vec![0.5; 1000], 1000).unwrap();
        assert_abs_diff_eq!(rms(&c, 0.0, 1.0).unwrap(), 0.5, epsilon = 1e-12);
        let z = AudioClip::new(vec![0.0; 1000], 1000).unwrap();
        assert_eq!(rms(&z, 0.0, 1.0).unwrap(), 0.0);
        let s = sine(100.0, 1.0, 1.0, 16000);
        assert_abs_diff_eq!(rms(&s, 0.0, 1.0).unwrap(), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-3);
        assert!(matches!(rms(&c, 0.5, 0.5), Err(Error::EmptySegment { .. })));
        assert!(matches!(rms(&c, 0.0, 2.0), Err(Error::EmptySegment { .. })));
    }

    #[test]
    fn identical_clips_at_zero_db() {
        let c = sine(220.0, 0.3, 1.0, 8000);
        let m = mix_at_snr(&c, &c, &SoundscapeSpec::new("a", "c", "c", 0.0, 0.0, 0)).unwrap();
        assert_abs_diff_eq!(m.fg_gain, 1.0, epsilon = 1e-12);
        assert_eq!(m.safety_gain, 1.0);
    }

    #[test]
    fn six_db_doubles_gain() {
        let amp = 0.1 * std::f64::consts::SQRT_2;
        let fg = sine(440.0, amp, 1.0, 16000);
        let bg = sine(300.0, amp, 2.0, 16000);
        let snr = 20.0 * 2f64.log10();
        let m = mix_at_snr(&fg, &bg, &SoundscapeSpec::new("a", "f", "b", snr, 0.5, 0)).unwrap();
        assert_abs_diff_eq!(m.fg_gain, 2.0, epsilon = 1e-3);
        assert_abs_diff_eq!(independent_snr(&m.clip, &bg, 8000, 16000, m.safety_gain), snr, epsilon = 0.01);
    }

    #[test]
    fn mix_errors() {
        let fg = sine(440.0, 0.1, 1.0, 8000);
        let bg = sine(300.0, 0.1, 2.0, 8000);
        let silent = AudioClip::new(vec![0.0; 8000], 8000).unwrap();
        let spec = SoundscapeSpec::new("a", "f", "b", 6.0, 0.0, 0);
        assert!(matches!(mix_at_snr(&silent, &bg, &spec), Err(Error::SilentForeground)));
        assert!(matches!(mix_at_snr(&fg, &silent, &spec), Err(Error::SilentBackground)));
        let short = sine(300.0, 0.1, 0.5, 8000);
        assert!(matches!(mix_at_snr(&fg, &short, &spec), Err(Error::ForegroundTooLong)));
        let long_silent = AudioClip::new(vec![0.0; 16000], 8000).unwrap();
        assert!(matches!(mix_at_snr(&fg, &long_silent, &spec), Err(Error::SilentBackground)));
        let other_rate = sine(300.0, 0.1, 2.0, 16000);
        assert!(matches!(mix_at_snr(&fg, &other_rate, &spec), Err(Error::SampleRateMismatch { .. })));
        let late = SoundscapeSpec::new("a", "f", "b", 6.0, 1.5, 0);
        assert!(matches!(mix_at_snr(&fg, &bg, &late), Err(Error::ForegroundTooLong)));
    }

    #[test]
    fn loud_mix_is_attenuated_not_clipped() {
        let fg = sine(440.0, 0.9, 1.0, 8000);
        let bg = sine(300.0, 0.9, 1.0, 8000);
        let m = mix_at_snr(&fg, &bg, &SoundscapeSpec::new("a", "f", "b", 10.0, 0.0, 0)).unwrap();
        assert!(m.safety_gain < 1.0);
        assert!(m.clip.peak() <= 1.0);
        assert_abs_diff_eq!(m.achieved_snr_db, 10.0, epsilon = 0.01);
    }

    fn infos(prefix: &str, n: usize, dur: f64) -> Vec<ClipInfo> {
        (0..n).map(|i| ClipInfo::new(format!("{prefix}{i}"), dur, Some(prefix.to_string()))).collect()
    }

    #[test]
    fn pairing_cardinality_and_determinism() {
        let fg = infos("dog", 2, 4.0);
        let mut bg = BTreeMap::new();
        bg.insert("park".to_string(), infos("park", 5, 10.0));
        let a = generate_pairing_manifest(&fg, &bg, &DEFAULT_SNRS_DB, 7).unwrap();
        assert_eq!(a.len(), 6);
        let b = generate_pairing_manifest(&fg, &bg, &DEFAULT_SNRS_DB, 7).unwrap();
        assert_eq!(
            crate::report::to_canonical_json(&a).unwrap(),
            crate::report::to_canonical_json(&b).unwrap()
        );
        for s in &a {
            assert!(s.onset_s >= 0.0 && s.onset_s + 4.0 <= 10.0);
        }
        assert!(matches!(generate_pairing_manifest(&[], &bg, &DEFAULT_SNRS_DB, 7), Err(Error::EmptySet(_))));
    }

    #[test]
    fn pairing_seed_changes_draws() {
        let fg = infos("fg", 34, 2.0);
        let mut bg = BTreeMap::new();
        bg.insert("street".to_string(), infos("street", 20, 10.0));
        let a = generate_pairing_manifest(&fg, &bg, &DEFAULT_SNRS_DB, 1).unwrap();
        let b = generate_pairing_manifest(&fg, &bg, &DEFAULT_SNRS_DB, 2).unwrap();
        assert!(a.len() >= 100);
        assert!(a.iter().zip(&b).any(|(x, y)| x.background_ref != y.background_ref || x.onset_s != y.onset_s));
    }

    fn by_class(n: usize) -> BTreeMap<String, Vec<ClipInfo>> {
        (0..n).map(|c| (format!("c{c}"), infos(&format!("c{c}_"), 3, 1.0))).collect()
    }

    #[test]
    fn polyphonic_manifests() {
        let one = generate_polyphonic(&by_class(5), 1, 20, 3).unwrap();
        assert!(one.iter().all(|s| s.labels.len() == 1 && s.sources.len() == 1));
        let two = generate_polyphonic(&by_class(5), 2, 200, 3).unwrap();
        for s in &two {
            let distinct: BTreeSet<_> = s.sources.iter().map(|x| &x.class).collect();
            assert_eq!(distinct.len(), 2);
        }
        assert!(matches!(
            generate_polyphonic(&by_class(2), 3, 10, 3),
            Err(Error::InsufficientClasses { needed: 3, available: 2 })
        ));
    }

    #[test]
    fn polyphonic_render_equal_rms() {
        let mut clips = HashMap::new();
        clips.insert("a".to_string(), sine(200.0, 0.5, 1.0, 8000));
        clips.insert("b".to_string(), sine(310.0, 0.05, 0.5, 8000));
        let spec = PolyphonicSpec {
            schema_version: MANIFEST_SCHEMA_VERSION,
            id: "p".into(),
            sources: vec![
                PolyphonicSource { class: "x".into(), clip_ref: "a".into() },
                PolyphonicSource { class: "y".into(), clip_ref: "b".into() },
            ],
            labels: vec!["x".into(), "y".into()],
            source_rms: 0.1,
            seed: 0,
        };
        let m = render_polyphonic(&spec, &clips).unwrap();
        assert_eq!(m.clip.len(), 8000);
        for (g, id) in m.source_gains.iter().zip(["a", "b"]) {
            let c = &clips[id];
            assert_abs_diff_eq!(g * rms(c, 0.0, c.duration_s()).unwrap(), 0.1, epsilon = 1e-9);
        }
    }

    #[test]
    fn chunk_examples() {
        let rec = AudioClip::new(vec![0.0; 25 * 100], 100).unwrap();
        let none = segment_into_chunks("r", &rec, &[], &ChunkConfig::default()).unwrap();
        assert_eq!(none.len(), 2);
        assert!(none.iter().all(|c| c.background && c.labels.is_empty()));

        let ann = [Annotation::new("siren", 9.5, 10.5), Annotation::new("dog", 0.0, 10.0)];
        let c = segment_into_chunks("r", &rec, &ann, &ChunkConfig::default()).unwrap();
        assert_eq!(c[0].labels, vec!["dog", "siren"]);
        assert_eq!(c[1].labels, vec!["siren"]);
        assert!(!c[1].background);

        let strict = ChunkConfig { chunk_s: 10.0, min_overlap_s: 0.5 };
        let c = segment_into_chunks("r", &rec, &ann, &strict).unwrap();
        assert_eq!(c[0].labels, vec!["dog"]);

        let bad = [Annotation::new("x", 20.0, 26.0)];
        assert!(matches!(
            segment_into_chunks("r", &rec, &bad, &ChunkConfig::default()),
            Err(Error::AnnotationOutOfBounds { .. })
        ));
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let clip = sine(440.0, 0.5, 0.1, 8000);
        let p = dir.path().join("f.wav");
        write_wav(&clip, &p, WavFormat::Float32).unwrap();
        let back: AudioClip = read_wav(&p).unwrap();
        assert_eq!(back.sample_rate(), 8000);
        for (a, b) in clip.samples().iter().zip(back.samples()) {
            assert_eq!(*a as f32, *b as f32);
        }
        let p16 = dir.path().join("i.wav");
        write_wav(&clip, &p16, WavFormat::Pcm16).unwrap();
        let back16: AudioClip = read_wav(&p16).unwrap();
        assert_abs_diff_eq!(wav_duration_s(&p16).unwrap(), 0.1, epsilon = 1e-9);
        for (a, b) in clip.samples().iter().zip(back16.samples()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn mix_invariants(
            snr in 0.0f64..20.0,
            fg_amp in 0.01f64..1.0,
            bg_amp in 0.01f64..1.0,
            f1 in 50.0f64..2000.0,
            f2 in 50.0f64..2000.0,
            onset in 0.0f64..0.5,
        ) {
            let fg = sine(f1, fg_amp, 0.5, 8000);
            let bg = sine(f2, bg_amp, 1.0, 8000);
            let m = mix_at_snr(&fg, &bg, &SoundscapeSpec::new("p", "f", "b", snr, onset, 0)).unwrap();
            prop_assert!(m.clip.peak() <= 1.0);
            prop_assert!(m.safety_gain <= 1.0);
            prop_assert!((m.achieved_snr_db - snr).abs() <= 0.01);
            let start = (onset * 8000.0).round() as usize;
            prop_assert!((independent_snr(&m.clip, &bg, start, fg.len(), m.safety_gain) - snr).abs() <= 0.01);
            for i in 0..bg.len() {
                let f = if i >= start && i < start + fg.len() { fg.samples()[i - start] } else { 0.0 };
                prop_assert_eq!(m.clip.samples()[i], m.safety_gain * (m.fg_gain * f + bg.samples()[i]));
            }
        }
    }
}
