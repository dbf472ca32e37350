//! Adversarial context-aware node embeddings for textual networks.
//!
//! A structure-embedding generator is trained by policy gradients against a
//! discriminator that scores node pairs with attention-pooled text
//! embeddings. The crate covers ingestion ([`corpus`]), dense kernels
//! ([`numerics`]), pairwise text attention ([`attention`]), the adversarial
//! losses ([`adversarial`]), training ([`trainer`]), unseen-node learning
//! ([`inductive`]) and evaluation ([`eval`]).

pub mod adversarial;
pub mod attention;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod inductive;
pub mod io;
pub mod numerics;
pub mod pipeline;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
