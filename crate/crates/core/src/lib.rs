//! Functional scene graphs with dual factor-graph inference.
//!
//! Candidate functional relations (a knob turns on a burner, a switch
//! toggles a light) are instantiated as binary variables, coupled by
//! proximity priors and soft one-to-one cardinality factors, and resolved
//! into calibrated per-edge confidences by marginal inference.
//!
//! The crate also ships the pieces needed to measure that: a procedural
//! benchmark generator with rule-based ground truth, multi-view instance
//! fusion, and the node/triplet/calibration evaluation protocol.

pub mod error;
pub mod eval;
pub mod factorgraph;
pub mod fusion;
pub mod inference;
pub mod pipeline;
pub mod proposals;
pub mod scene;
pub mod synth;

pub use error::{Error, Result};
pub use eval::{
    ambiguous_subset_ece, baseline_confidence_fill, ece, evaluate, match_nodes, triplet_eval,
    CalibrationReport, EvalConfig, EvalReport, LabelSimilarity, MatchMode, PredictedGraph,
    ScanMode, TokenSimilarity, TripletReport,
};
pub use factorgraph::{build_graph, cardinality_value, proximity_prior, FactorComponent, VarId};
pub use fusion::{associate, merge_stream, AssociationParams, Detection, Instance};
pub use inference::{
    brute_force_marginals, infer, infer_all, threshold_graph, update_confidences, Evidence,
    InferenceConfig, InferenceResult, Method, Observation, PosteriorEdge,
};
pub use pipeline::Pipeline;
pub use proposals::{
    build_all_groups, instantiate_edges, CandidateEdge, EdgeGroup, EdgeId, FactorPlan,
    FunctionalProposal, ProposalFile,
};
pub use scene::{iou3, load_scene, Box2, Box3, NodeId, NodeKind, SceneGraph, SceneNode};
pub use synth::{
    annotate, generate_scene, visibility_filter, GenConfig, GeneratedScene, GroundTruthGraph,
    RoomType,
};
