//! Neural autoregressive topic models.
//!
//! The crate implements the DocNADE family: forward-only DocNADE, bidirectional
//! iDocNADE, variants with a fixed word-embedding prior mixed into the hidden
//! pre-activations, and deep variants with extra hidden layers. Output
//! conditionals use either a full softmax or a binary word tree. Training uses
//! exact analytic gradients and per-document SGD; evaluation covers held-out
//! perplexity, document retrieval, NPMI topic coherence, nearest-neighbor word
//! inspection and logistic-regression text categorization.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod math;
pub mod model;
pub mod training;
pub mod tree;

pub use corpus::{
    build_vocabulary, decode_document, encode_document, load_corpus, load_embedding_prior,
    Corpus, Document, EmbeddingPrior, IngestSummary, VocabSource, Vocabulary,
};
pub use error::{Error, Result};
pub use math::Activation;
pub use model::{
    ActivationSweep, DeepLayer, DeepParameters, Direction, LikelihoodReport, Model,
    ModelParameters, OutputLayer, SoftmaxMode,
};
pub use training::{
    compute_gradients, grid_search_lambda, initialize_parameters, sgd_epoch, train, train_from,
    Architecture, GradientSet, TrainConfig, TrainOutcome,
};
pub use tree::BinaryWordTree;
