//! Dictionary construction for named entity recognition from unlabeled text
//! and a handful of seed examples.
//!
//! The pipeline harvests high-recall candidate phrases with lexical patterns
//! ([`extract`]), pairs every candidate occurrence's spelling with its
//! surrounding context ([`views`]), learns two-view CCA projections of those
//! views ([`cca`]), and filters the candidates with a linear SVM trained on
//! the seed phrases' embeddings ([`classifier`]). A DL-CoTrain baseline
//! ([`cotrain`]), an exact-match dictionary tagger with span-level scoring
//! ([`tagger`]) and a linear-chain CRF that consumes dictionary and
//! embedding features ([`crf`]) complete the toolkit. [`pipeline`] wires the
//! stages together behind one config file with memoized, hashed runs.

pub mod cca;
pub mod classifier;
pub mod corpus;
pub mod cotrain;
pub mod crf;
pub mod dictionary;
pub mod error;
pub mod extract;
pub mod linalg;
pub mod matcher;
pub mod pipeline;
pub mod sparse;
pub mod synth;
pub mod tagger;
pub mod views;

pub use error::{Error, Result};
