//! Moral-direction probing of sentence embeddings.
//!
//! A one-dimensional "moral direction" is induced by PCA over embeddings of
//! templated prompts built from positive and negative action verbs. Arbitrary
//! statements are then scored along that axis, which supports three analyses:
//! correlating verb scores across models and with human ratings, finding
//! parallel sentence pairs whose scores diverge between languages, and scoring
//! the Moral Foundations Questionnaire per aspect.
//!
//! Embeddings are computed elsewhere and loaded through [`store`].

pub mod analysis;
pub mod cli;
pub mod direction;
pub mod divergence;
pub mod error;
pub mod pca;
pub mod questionnaire;
pub mod report;
pub mod stats;
pub mod store;
pub mod synthetic;

pub use direction::{
    InductionVerb, MoralDirectionModel, Polarity, PromptTemplateSet, ScoredStatement,
};
pub use error::{Error, Result};
pub use store::{EmbeddingManifest, EmbeddingRecord, EmbeddingSet, Pooling};
