//! Few-shot inductive link prediction on knowledge graphs.
//!
//! An unseen entity arrives with a handful of support triples. Its
//! embedding is aggregated from those triples, the support set is encoded
//! into a Gaussian over a latent `z`, and a decoder scores candidate
//! answers for queries `(u, r, ?)` conditioned on a draw of `z` and on
//! relational motifs extracted by anonymous random walks around each
//! candidate.

pub mod config;
pub mod error;
pub mod kg;
pub mod model;
pub mod pretrain;
pub mod train;
pub mod rng;
pub mod synth;
pub mod walk;

pub use error::{Error, Result};
