//! Plaintext valuation machinery: models with per-example gradients, the
//! exact influence oracle, K-FAC projections and preconditioning, baseline
//! scores and additive group values.

mod hessian;
pub mod io;
mod kfac;
mod model;
mod scores;
mod train;

use thiserror::Error;

pub use hessian::{damped_solve, exact_influence, exact_influence_with, risk_hessian, MAX_DENSE_PARAMS};
pub use kfac::{
    build_projection, estimate_kfac, project_gradient, sorted_eigen, Eigen, KfacLayer, KfacState, LayerProjection,
    Preconditioner, ProjectionOperator, DEFAULT_DAMPING,
};
pub use model::{sigmoid, Activation, Dense, Example, GradientFactors, Head, Model};
pub use scores::{
    cosine_score, exact_eval_vector, greedy_top_k, group_value, influence_score, mean_projected_gradient,
    preconditioned_eval_vector, projected_gradient, random_score, raw_eval_vector, utility_score, EvalVector,
    Provenance,
};
pub use train::{adam, refit_head, train, ModelSpec, TrainConfig};

#[derive(Debug, Error, PartialEq)]
pub enum InfluenceError {
    #[error("training stopped with gradient norm {grad_norm:e}")]
    DidNotConverge { grad_norm: f64 },
    #[error("damped Hessian is not positive definite")]
    SingularHessian,
    #[error("symmetric eigensolver did not converge")]
    EigSolverFailure,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("projection does not match the model")]
    ProjectionMismatch,
    #[error("rank {requested:?} exceeds factor sizes {available:?}")]
    RankTooLarge {
        requested: (usize, usize),
        available: (usize, usize),
    },
    #[error("zero vector")]
    ZeroVector,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("model has {0} parameters, too many for a dense Hessian")]
    ModelTooLarge(usize),
    #[error("index {0} out of range")]
    InvalidIndex(usize),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<csv::Error> for InfluenceError {
    fn from(e: csv::Error) -> Self {
        InfluenceError::Io(e.to_string())
    }
}

impl From<std::io::Error> for InfluenceError {
    fn from(e: std::io::Error) -> Self {
        InfluenceError::Io(e.to_string())
    }
}
