//! Structure-aware hypergraph transformer for next-visit diagnosis
//! prediction.
//!
//! Patients' coded visits become hyperedges over medical-code nodes. Code
//! and visit embeddings are enriched with incidence projections, mixed by a
//! stack of global self-attention layers, and trained on a multilabel
//! next-visit objective regularized by negative-sampled reconstruction of
//! the incidence matrix. Every gradient is derived by hand and checked
//! against central finite differences.

pub mod checkpoint;
pub mod ehr;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod hypergraph;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod optim;
pub mod train;
pub mod transformer;

pub use ehr::{
    generate_synthetic, load_corpus, make_examples, parse_corpus, split_patients, write_corpus,
    DatasetSplit, EhrDataset, GeneratorConfig, SplitPart, SupervisedExample,
};
pub use error::{Result, ShgtError};
pub use hypergraph::{build_hypergraph, Hypergraph};
pub use metrics::{EvalOptions, EvalReport, RecallDenominator};
pub use model::{GradientSet, ModelConfig, ParameterSet, Variant};
pub use objectives::{LossBreakdown, SamplePairs};
pub use train::{train, Preset, TrainConfig, TrainLog, TrainOutcome};
