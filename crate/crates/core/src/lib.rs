//! Background-aware zero-shot audio classification via similarity profiles.
//!
//! Audio and text embeddings are compared against class prototypes to form
//! profiles of cosine similarities; the profile of the acoustic background is
//! subtracted with a weight `tau` before taking the argmax.
//!
//! Numeric types are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod benchmark;
pub mod config;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod oracle;
pub mod profiles;
pub mod prototypes;
pub mod report;
pub mod scalar;
pub mod soundscape;
pub mod store;

pub use config::{BackgroundMode, ExperimentConfig};
pub use embedding::{cosine_similarity, normalize, Embedding, EmbeddingSet, Modality};
pub use error::{Error, Result};
pub use eval::{evaluate, evaluate_multilabel, grid_search_tau, EvaluationReport, SampleTruth, TauGrid, TauSearchResult};
pub use oracle::{Oracle, OracleConfig};
pub use profiles::{adapt, classify, classify_multilabel, compute_profile, AdaptationConfig, BackgroundSource, Profile};
pub use prototypes::{build_prototypes, Prototype, PrototypeMode, PrototypeSet, Provenance, TgapConfig};
pub use scalar::Scalar;
pub use soundscape::{mix_at_snr, AudioClip, MixResult, SoundscapeSpec};
pub use store::{load_store, save_store};

pub type Embedding32 = Embedding<f32>;
pub type Embedding64 = Embedding<f64>;
pub type EmbeddingSet32 = EmbeddingSet<f32>;
pub type EmbeddingSet64 = EmbeddingSet<f64>;
pub type Prototype32 = Prototype<f32>;
pub type Prototype64 = Prototype<f64>;
pub type PrototypeSet32 = PrototypeSet<f32>;
pub type PrototypeSet64 = PrototypeSet<f64>;
pub type Profile32 = Profile<f32>;
pub type Profile64 = Profile<f64>;
pub type AudioClip32 = AudioClip<f32>;
pub type AudioClip64 = AudioClip<f64>;
