//! Multimodal path retrieval for explainable recommendation.
//!
//! The crate covers the retrieval stage end to end: ingesting item embeddings,
//! profiles and interactions ([`datastore`]); residual quantization into
//! semantic ids ([`rq`]); sequence-encoder user representations ([`userrep`]);
//! the interaction graph with anchored k-core pruning ([`graph`]); weighted
//! top-k path search and prompt rendering ([`retrieval`]); and the graph
//! encoder plus mixture-of-experts soft prompt ([`encoder`]).

pub mod datastore;
pub mod encoder;
pub mod graph;
pub mod linalg;
pub mod retrieval;
pub mod rq;
pub mod seed;
pub mod synth;
pub mod userrep;
pub mod weights;

pub use datastore::{Dataset, EmbeddingTable, InteractionLog, Modality, ProfileStore, UserSequence};
pub use encoder::{EncoderParams, SoftPromptBundle};
pub use graph::{BipartiteGraph, NodeId, NodeKind, Subgraph};
pub use retrieval::{ArcRule, Representations, RetrievalConfig, RetrievalPath, WeightedDigraph};
pub use rq::{CodebookStack, ProjectionParams, SemanticId};
pub use userrep::SeqEncoderParams;
