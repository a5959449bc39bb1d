//! Order-perturbation toolkit: controlled word-order noising of text, structure
//! metrics that quantify how much order was destroyed, and correlation analysis
//! between those metrics and downstream task scores.
//!
//! The pipeline is built around three ideas:
//!
//! * **Perturbation operators** ([`perturb`]) permute a token sequence at either
//!   character or subword granularity: full shuffle, neighbor flip (local drift
//!   controlled by a release probability ρ), and phrase shuffle (contiguous
//!   phrases formed with boundary probability ρ, then shuffled).
//! * **Structure metrics** ([`metrics`]) score a perturbed text against its
//!   original: chrF (character n-gram F-score), IDC (index displacement),
//!   DND (non-consecutive adjacent pairs), and the tokenizer compression rate.
//! * **Correlation analysis** ([`analysis`]) joins sweep measurements with an
//!   external score table and reports rank correlations per model, task,
//!   script, or language family.
//!
//! Everything is deterministic given a global seed: per-record, per-setting
//! stream seeds are derived with a documented splitmix64 chain (see [`rng`]).

pub mod analysis;
pub mod cli;
mod error;
pub mod metrics;
pub mod perturb;
pub mod rng;
pub mod text;
pub mod tokenize;

pub use error::{Error, Result};
pub use metrics::{chrf, compression_rate, dnd, idc, measure, ChrfConfig, MetricReport};
pub use perturb::{
    full_shuffle, neighbor_flip, neighbor_flip_strict, phrase_shuffle, PerturbKind,
    PerturbationResult, PerturbationSpec,
};
pub use rng::SeedPolicy;
pub use text::{
    segment_graphemes, CharIndexTrace, CharUnit, Granularity, Token, TokenSequence,
};
pub use tokenize::{Tokenizer, Vocabulary};
