//! Model-agnostic explanations for graph classifiers.
//!
//! A black-box model is queried on many randomly perturbed copies of a
//! target graph (or graph series). Each unit (node, edge, or node at a time
//! step) gets a centered, normalized Gram matrix of how it was perturbed; the
//! model output gets one too. A non-negative HSIC lasso then regresses the
//! output Gram matrix on the unit Gram matrices, with an L1, latent group, or
//! generalized fused penalty. Units with large coefficients explain the
//! prediction.
//!
//! ```
//! use hsic_explain::{explain, rank_units, ExplainRequest, ExplainSettings, GroupSource, HubOracle, KernelConfig,
//!     Method, PerturbationKind, PerturbationScheme, SolverConfig, Target, UnitId, UnitKindName};
//! use hsic_explain::benchmarks::generators::wheel;
//!
//! let g = wheel(10);
//! let settings = ExplainSettings {
//!     unit_kind: UnitKindName::Node,
//!     scheme: PerturbationScheme::new(PerturbationKind::RemoveNodes { k: 2 }, 201, 7),
//!     kernels: KernelConfig::default(),
//!     method: Method::L1,
//!     groups: GroupSource::default(),
//!     solver: SolverConfig::with_lambda(1e-6),
//! };
//! let model = HubOracle::default();
//! let e = explain(&ExplainRequest { target: Target::Graph(&g), model: &model, settings }).unwrap();
//! assert_eq!(rank_units(&e, 1), vec![UnitId::Node(9)]);
//! ```

pub mod benchmarks;
pub mod error;
pub mod explainer;
pub mod graph;
pub mod kernel;
pub mod model;
pub mod perturbation;
pub mod solvers;

pub use error::{Error, ModelError, Result};
pub use explainer::{
    explain, prepare, random_explanation, rank_units, select_from_prepared, select_lambda, unit_adjacency,
    ExplainRequest, ExplainSettings, GroupSource, Prepared, Selection, UnitKindName,
};
pub use graph::{Graph, GraphSeries, OwnedTarget, Target, UnitId, UnitKind};
pub use kernel::{center_normalize, gram, median_heuristic, output_gram, unit_gram, Bandwidth, GramMatrix, InputKernel, Kernel, KernelConfig};
pub use model::{
    predict, BlackBoxModel, BridgeOracle, BridgeRule, Endpoint, ExternalModel, HubOracle, HubRule, InputKind, PatternOracle,
    PredictionVector, SeriesChunkOracle,
};
pub use perturbation::{
    generate, walk_groups, AuxiliaryDataset, FeatureKind, FeatureMode, PerturbationKind, PerturbationScheme,
    UnitFeatures,
};
pub use solvers::{solve_fused, solve_group, solve_l1, Explanation, GroupStructure, Method, SolverConfig, SolverProblem};
