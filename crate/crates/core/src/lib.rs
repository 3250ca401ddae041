//! Learnable ellipsoid decision boundaries for open-world classification.
//!
//! The pipeline has two stages. Representation: embedding vectors are
//! ingested (or synthesized), optionally projected through a linear head
//! refined with supervised contrastive learning, and L2-normalized.
//! Boundaries: each known class gets an ellipsoid `{z : |A(z - c)| <= d}`
//! whose matrix is trained by a dual objective, an expansion hinge over
//! exterior in-class samples plus a contraction penalty against
//! Dirichlet-mixed pseudo-open samples. Inference assigns a sample to its
//! nearest centroid's class if that ellipsoid contains it and rejects it
//! as open otherwise.
//!
//! Ball baselines via coverage fractions, alternative negative losses, a
//! known-class-ratio evaluation harness and an anisotropic synthetic
//! benchmark ship alongside.

pub mod baselines;
pub mod ellipsoid;
pub mod error;
pub mod eval;
pub mod feature_space;
pub mod linalg;
pub mod pseudo_open;
pub mod rng;
pub mod synth;
pub mod training;

pub use baselines::{
    adb_negative_loss, adbgen_negative_loss, ball_from_cf, balls_to_boundary_set,
    clab_negative_loss, BallBoundary, ClabParams,
};
pub use ellipsoid::{
    affine_map, axis_decomposition, boundaries_from_json, boundaries_to_json, contains,
    gram, load_boundaries, radius, save_boundaries, AxisDecomposition, BoundarySet,
    Ellipsoid, GramMatrix,
};
pub use error::{Error, Result};
pub use eval::{
    evaluate, kcr_split, predict, report_from_confusion, DatasetSplits, EvalReport,
    KcrSplit, Prediction,
};
pub use feature_space::{
    augment, load_dataset, normalize_project, project_dataset, save_dataset, scl_loss,
    train_projection_head, EmbeddingVector, LabeledDataset, LabeledSample,
    ProjectionHead, SclConfig, SclOutcome,
};
pub use linalg::Matrix;
pub use pseudo_open::{sample_dirichlet, synthesize_batch, MixConfig};
pub use rng::substream;
pub use synth::{aniso_k4, generate, ClusterSpec, ScenarioSidecar};
pub use training::{
    compute_centroid, compute_delta, contraction_loss, expansion_loss, loss_gradient,
    total_loss, train_boundaries, EpochRecord, GradientDiagnostics, GradientKind,
    LossBreakdown, NegativeStrategy, TrainConfig, TrainOutcome,
};
