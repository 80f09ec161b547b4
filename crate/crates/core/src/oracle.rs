//! Synthetic embedding generator used as a desk-scale stand-in for a real
//! audio-text model.
//!
//! Classes are orthonormal directions. Audio samples are Gaussian
//! perturbations of a class direction projected back onto the sphere. Text
//! embeddings are the class direction plus one shared offset vector (the
//! planted modality gap). Mixtures are the normalized weighted sum of their
//! components' audio embeddings; this is a modelling assumption about
//! embedding behavior, not a property of any real model.
//!
//! Every draw is a pure function of `(config, stream, indices)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::{normalize_f64, Embedding};
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub n_classes: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    pub gap_magnitude: f64,
    pub seed: u64,
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(Error::InvalidArgument("n_classes must be positive".into()));
        }
        if self.dim < self.n_classes {
            return Err(Error::DimTooSmall {
                dim: self.dim,
                classes: self.n_classes,
            });
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument("noise_sigma must be finite and >= 0".into()));
        }
        if !(self.gap_magnitude >= 0.0 && self.gap_magnitude.is_finite()) {
            return Err(Error::InvalidArgument("gap_magnitude must be finite and >= 0".into()));
        }
        Ok(())
    }
}

// Stream tags keep independent draws from sharing RNG state.
const STREAM_DIRECTIONS: u64 = 1;
const STREAM_GAP: u64 = 2;
const STREAM_AUDIO: u64 = 3;
const STREAM_SCENE_LAYOUT: u64 = 4;
const STREAM_SCENE_CONCEPT: u64 = 5;
const STREAM_PROMPT_JITTER: u64 = 6;

/// Draw-index offset for background recordings, disjoint from test draws.
pub const BACKGROUND_DRAW_BASE: u64 = 1 << 40;
/// Draw-index offset for the clean (isolated) audio pools.
pub const CLEAN_DRAW_BASE: u64 = 1 << 41;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub(crate) fn rng_for(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// `K` orthonormal directions in `D` dimensions (Gram-Schmidt, two passes).
pub fn gen_class_directions(cfg: &OracleConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, &[STREAM_DIRECTIONS]);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_classes);
    while basis.len() < cfg.n_classes {
        let mut v = gaussian_vec(&mut rng, cfg.dim);
        for _ in 0..2 {
            for b in &basis {
                let p = dot(&v, b);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= p * y;
                }
            }
        }
        // a near-degenerate draw is simply redrawn
        if let Ok(u) = normalize_f64::<f64>(&v) {
            if dot(&v, &v).sqrt() > 1e-6 {
                basis.push(u);
            }
        }
    }
    Ok(basis)
}

/// Zero-padded class name; lexicographic order equals index order.
pub fn class_name(k: usize, n_classes: usize) -> String {
    let width = n_classes.saturating_sub(1).to_string().len().max(2);
    format!("class_{k:0width$}")
}

/// A background environment: a fixed weighted set of class sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub index: usize,
    pub name: String,
    pub components: Vec<(usize, f64)>,
}

impl Scene {
    pub fn contains(&self, class: usize) -> bool {
        self.components.iter().any(|&(c, _)| c == class)
    }
}

/// Precomputed generator state for one [`OracleConfig`].
#[derive(Debug, Clone)]
pub struct Oracle {
    cfg: OracleConfig,
    directions: Vec<Vec<f64>>,
    gap: Vec<f64>,
}

impl Oracle {
    pub fn new(cfg: OracleConfig) -> Result<Self> {
        let directions = gen_class_directions(&cfg)?;
        let mut rng = rng_for(cfg.seed, &[STREAM_GAP]);
        let g = gaussian_vec(&mut rng, cfg.dim);
        let gap = normalize_f64::<f64>(&g)?
            .into_iter()
            .map(|x| x * cfg.gap_magnitude)
            .collect();
        Ok(Self { cfg, directions, gap })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn gap_vector(&self) -> &[f64] {
        &self.gap
    }

    pub fn class_name(&self, k: usize) -> String {
        class_name(k, self.cfg.n_classes)
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.cfg.n_classes).map(|k| self.class_name(k)).collect()
    }

    fn check_class(&self, k: usize) -> Result<()> {
        if k < self.cfg.n_classes {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("class {k} >= n_classes {}", self.cfg.n_classes)))
        }
    }

    fn audio_raw(&self, k: usize, draw: u64) -> Vec<f64> {
        let mut rng = rng_for(self.cfg.seed, &[STREAM_AUDIO, k as u64, draw]);
        let sigma = self.cfg.noise_sigma;
        let v: Vec<f64> = self.directions[k]
            .iter()
            .map(|&d| {
                let n: f64 = StandardNormal.sample(&mut rng);
                d + sigma * n
            })
            .collect();
        normalize_f64::<f64>(&v).expect("perturbed direction is almost surely non-zero")
    }

    /// Noisy audio sample of class `k`, labeled with the class name.
    pub fn audio_embedding<T: Scalar>(&self, k: usize, draw: u64) -> Result<Embedding<T>> {
        self.check_class(k)?;
        let v = self.audio_raw(k, draw);
        Embedding::audio(
            format!("audio/{}/{draw}", self.class_name(k)),
            Some(self.class_name(k)),
            cast(&v),
        )
    }

    /// Class text anchor: `normalize(d_k + g)` with the shared gap vector `g`.
    pub fn text_embedding<T: Scalar>(&self, k: usize) -> Result<Embedding<T>> {
        self.check_class(k)?;
        let v: Vec<f64> = self.directions[k].iter().zip(&self.gap).map(|(d, g)| d + g).collect();
        Embedding::text(format!("text/{}", self.class_name(k)), Some(self.class_name(k)), normalize_f64(&v)?)
    }

    fn mixture_raw(&self, components: &[(usize, f64)], draw: u64) -> Result<Vec<f64>> {
        if components.is_empty() {
            return Err(Error::EmptyComponents);
        }
        let mut acc = vec![0.0f64; self.cfg.dim];
        for &(k, w) in components {
            self.check_class(k)?;
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!("component weight {w} must be > 0")));
            }
            for (a, x) in acc.iter_mut().zip(self.audio_raw(k, draw)) {
                *a += w * x;
            }
        }
        normalize_f64(&acc)
    }

    /// Unlabeled audio embedding of a weighted mixture of classes.
    /// Each component uses the audio draw `(class, draw)`.
    pub fn mixture_embedding<T: Scalar>(
        &self,
        id: impl Into<String>,
        components: &[(usize, f64)],
        draw: u64,
    ) -> Result<Embedding<T>> {
        let v = self.mixture_raw(components, draw)?;
        Embedding::audio(id, None, cast(&v))
    }

    /// Deterministic scene layouts: each scene draws `sources` distinct
    /// classes with weights proportional to `sources, sources-1, ..., 1`
    /// (2/3 and 1/3 for two sources).
    pub fn scenes(&self, n_scenes: usize, sources: usize) -> Result<Vec<Scene>> {
        if sources == 0 || sources >= self.cfg.n_classes {
            return Err(Error::InsufficientClasses {
                needed: sources + 1,
                available: self.cfg.n_classes,
            });
        }
        let total: f64 = (1..=sources).map(|r| r as f64).sum();
        (0..n_scenes)
            .map(|s| {
                let mut rng = rng_for(self.cfg.seed, &[STREAM_SCENE_LAYOUT, s as u64]);
                let picked = rand::seq::index::sample(&mut rng, self.cfg.n_classes, sources).into_vec();
                let components = picked
                    .into_iter()
                    .enumerate()
                    .map(|(r, k)| (k, (sources - r) as f64 / total))
                    .collect();
                Ok(Scene {
                    index: s,
                    name: format!("scene_{s:02}"),
                    components,
                })
            })
            .collect()
    }

    /// Audio recording of a scene alone, labeled with the scene name.
    pub fn scene_recording<T: Scalar>(&self, scene: &Scene, recording: u64) -> Result<Embedding<T>> {
        let draw = BACKGROUND_DRAW_BASE + ((scene.index as u64) << 20) + recording;
        let v = self.mixture_raw(&scene.components, draw)?;
        Embedding::audio(format!("bg_audio/{}/{recording}", scene.name), Some(scene.name.clone()), cast(&v))
    }

    /// Text prompt describing a scene. The prompt sees the scene only partly:
    /// `fidelity` of it points at the true sources, the rest at a scene-level
    /// concept direction unrelated to the classes. Each prompt adds its own
    /// jitter of per-coordinate scale `jitter`. The shared gap vector applies.
    pub fn scene_prompt<T: Scalar>(&self, scene: &Scene, prompt: u64, fidelity: f64, jitter: f64) -> Result<Embedding<T>> {
        let mut rng = rng_for(self.cfg.seed, &[STREAM_SCENE_CONCEPT, scene.index as u64]);
        let concept = normalize_f64::<f64>(&gaussian_vec(&mut rng, self.cfg.dim))?;
        let mut sources = vec![0.0f64; self.cfg.dim];
        for &(k, w) in &scene.components {
            for (a, d) in sources.iter_mut().zip(&self.directions[k]) {
                *a += w * d;
            }
        }
        let sources = normalize_f64::<f64>(&sources)?;
        let mut rng = rng_for(self.cfg.seed, &[STREAM_PROMPT_JITTER, scene.index as u64, prompt]);
        let v: Vec<f64> = (0..self.cfg.dim)
            .map(|i| {
                let n: f64 = StandardNormal.sample(&mut rng);
                fidelity * sources[i] + (1.0 - fidelity) * concept[i] + self.gap[i] + jitter * n
            })
            .collect();
        Embedding::text(format!("bg_text/{}/{prompt}", scene.name), Some(scene.name.clone()), normalize_f64(&v)?)
    }
}

fn cast<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::from_f64_lossy(x)).collect()
}

/// Free-function form of [`Oracle::audio_embedding`].
pub fn gen_audio_embedding<T: Scalar>(k: usize, cfg: &OracleConfig, draw: u64) -> Result<Embedding<T>> {
    Oracle::new(cfg.clone())?.audio_embedding(k, draw)
}

/// Free-function form of [`Oracle::text_embedding`].
pub fn gen_text_embedding<T: Scalar>(k: usize, cfg: &OracleConfig) -> Result<Embedding<T>> {
    Oracle::new(cfg.clone())?.text_embedding(k)
}

/// Free-function form of [`Oracle::mixture_embedding`].
pub fn gen_mixture_embedding<T: Scalar>(components: &[(usize, f64)], cfg: &OracleConfig, draw: u64) -> Result<Embedding<T>> {
    Oracle::new(cfg.clone())?.mixture_embedding(format!("mix/{draw}"), components, draw)
}
