//! Analysis of discrete fast-slow maps `z ↦ z + N(z) f(z) + ε G(z, ε)`.
//!
//! The crate is organised bottom-up:
//!
//! - [`jet`]: truncated multivariate power series and their algebra.
//! - [`fastslow`]: the map model, multipliers, classification, reduced map.
//! - [`takens`]: time-1 maps of nilpotent fields and formal embeddings.
//! - [`singularity`]: planar fold/transcritical/pitchfork points and
//!   center-manifold reduction at contact points.
//! - [`dynamics`]: orbits, numerical flows and the scaling experiments.
//! - [`mapspec`]: the plain-text map-spec file format.

pub mod dynamics;
pub mod error;
pub mod fastslow;
pub mod jet;
pub mod linalg;
pub mod mapspec;
pub mod singularity;
pub mod takens;
pub mod tolerance;

pub use dynamics::{
    branch_selection_experiment, fold_exit_experiment, integrate_time1, integrate_time1_jet, iterate_map_orbit,
    logspace, track_slow_manifold, BoxRegion, BranchLabel, BranchOptions, BranchOutcome, ExitFace,
    FoldExitOptions, FoldExitReport, FoldExitRow, Orbit, ScalingFit, SeedOutcome, SlowCurve, TrackOptions,
};
pub use error::{Error, Result};
pub use fastslow::{
    classify_point, critical_manifold_solve, nilpotency_index, nontrivial_multipliers, reduced_data,
    reduced_map_step, FastSlowMapSpec, MultiplierSet, ReducedData, SingularityClass, SingularityTag,
};
pub use jet::{jet_compose, jet_mul, jet_partial, Jet, JetMatrix, JetVector, MultiIndex};
pub use takens::{
    flow_time1_jet, jordan_chevalley_split, takens_embed_unipotent, unipotent_log, verify_reduced_embedding,
    EmbeddingResult, LinearPartDecomposition, ReducedEmbeddingReport,
};
pub use mapspec::{emit_mapspec, euler_spec, parse_mapspec, MapSpecFile};
pub use singularity::{
    center_manifold_restricted_map, check_regular_contact, classify_planar_singularity,
    cm_normal_form_transform, embed_2d, embed_on_center_manifold, lambda_critical, threshold_lambda,
    CenterEmbedding, CenterManifoldData, ContactFrame, ContactNormalForm, ContactReport,
    NormalFormCoefficients, PlanarCase, PlanarClassification, PlanarEmbedding, PlanarPartials,
};
pub use tolerance::Tolerances;
