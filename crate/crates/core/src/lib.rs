//! Memory network for simple question answering over a triple knowledge
//! base.
//!
//! The memory is a [`GroupedFactStore`] of `(subject, relationship) ->
//! objects` facts. Questions are linked to candidate facts through an alias
//! index, and an [`EmbeddingModel`] scores each candidate by the cosine of
//! the question and fact embeddings. The core is generic over the scalar
//! type; [`Model`] is the usual 32-bit instantiation and [`Model64`] the
//! 64-bit one used for gradient checks.

pub mod bundle;
pub mod candidate_gen;
pub mod datasets;
pub mod encoder;
pub mod error;
pub mod eval_answer;
pub mod kb_store;
pub mod memory_extend;
pub mod model;
pub mod scalar;
pub mod supervision;
pub mod text;
pub mod toy;
pub mod trainer;

pub use bundle::{KnowledgeBase, PrepReport};
pub use candidate_gen::{CandidateGenerator, CandidateSet, NgramMatch, WordLists};
pub use encoder::{FactCache, FactEncoding, SparseVector, SymbolTable, VocabTable};
pub use error::{Error, Result};
pub use eval_answer::{Answerer, EvalReport, Prediction, Scorer};
pub use kb_store::{AliasIndex, AtomicFact, EntityId, GroupedFact, GroupedFactStore, RelationId};
pub use memory_extend::{ExternalFact, ExternalStore, RawFact};
pub use model::{EmbeddingModel, Hyperparams, Side};
pub use scalar::Scalar;
pub use supervision::{QAExample, Source};
pub use trainer::{NegativePolicy, TrainConfig, TrainOutcome};

pub type Model = EmbeddingModel<f32>;
pub type Model64 = EmbeddingModel<f64>;
pub type Vector = SparseVector<f32>;
pub type Vector64 = SparseVector<f64>;
pub type Facts = FactCache<f32>;
pub type ExternalMemory = ExternalStore<f32>;
