//! Signal-to-noise aware review sentiment pipeline.

pub mod characterize;
pub mod context;
pub mod corpus;
pub mod evaluation;
pub mod hierarchy;
pub mod inference;
pub mod pipeline;
pub mod scalar;
pub mod scoring;

pub use scalar::{round_half_up, Quantity, Real};

pub use characterize::{EntityActivity, Scenario, ScenarioFilter};
pub use context::{ContextSummary, NodeKey, SummarySet};
pub use corpus::{Corpus, Review, Schema};
pub use evaluation::{ConsistencyLabel, StageCounts};
pub use hierarchy::{FeatureVector, Hierarchy, HierarchyAssignment, HierarchyConfig};
pub use inference::{Method, RunMatrix, SentimentLabel};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineError};
pub use scoring::{ClusterGateStats, RefinementStage, SnrScore};

pub type EntityActivity64 = EntityActivity<f64>;
pub type FeatureVector64 = FeatureVector<f64>;
pub type FeatureVector32 = FeatureVector<f32>;
pub type Hierarchy64 = Hierarchy<f64>;
pub type Hierarchy32 = Hierarchy<f32>;
pub type SnrScore64 = SnrScore<f64>;
pub type GateStats64 = ClusterGateStats<f64>;
