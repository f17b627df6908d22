use nalgebra::{DMatrix, DVector};

use super::model::{Example, Model};
use super::InfluenceError;

/// Largest parameter count for which the dense d×d Hessian is materialized.
pub const MAX_DENSE_PARAMS: usize = 2000;

/// Hessian of the regularized empirical risk, as the Gauss-Newton matrix
/// mean JᵀΛJ + l2·I. For a single-layer model with a convex head this is the
/// exact Hessian; with hidden layers it drops the indefinite residual term.
pub fn risk_hessian(model: &Model, data: &[Example]) -> Result<DMatrix<f64>, InfluenceError> {
    let d = model.param_count();
    if d > MAX_DENSE_PARAMS {
        return Err(InfluenceError::ModelTooLarge(d));
    }
    if data.is_empty() {
        return Err(InfluenceError::EmptyDataset);
    }
    let mut h = DMatrix::zeros(d, d);
    for z in data {
        model.check_example(z)?;
        let jac = model.output_jacobian(&z.features);
        let lambda = model.head_hessian(&model.logits(&z.features));
        let lj = &lambda * &jac;
        h.gemm_tr(1.0, &jac, &lj, 1.0);
    }
    h /= data.len() as f64;
    for i in 0..d {
        h[(i, i)] += model.l2;
    }
    Ok(h)
}

/// Solves (H + λI)x = b by Cholesky.
pub fn damped_solve(h: &DMatrix<f64>, damping: f64, b: &[f64]) -> Result<Vec<f64>, InfluenceError> {
    let mut m = h.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += damping;
    }
    let chol = m.cholesky().ok_or(InfluenceError::SingularHessian)?;
    Ok(chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec())
}

/// Influence of upweighting `z_s` on the loss at `z_eval`:
/// −∇ℓ(z_eval)ᵀ (H + λI)⁻¹ ∇ℓ(z_s). Negative means z_s helps.
pub fn exact_influence(
    model: &Model,
    train: &[Example],
    z_s: &Example,
    z_eval: &Example,
    damping: f64,
) -> Result<f64, InfluenceError> {
    let h = risk_hessian(model, train)?;
    exact_influence_with(model, &h, z_s, z_eval, damping)
}

/// As [`exact_influence`] with a precomputed risk Hessian.
pub fn exact_influence_with(
    model: &Model,
    hessian: &DMatrix<f64>,
    z_s: &Example,
    z_eval: &Example,
    damping: f64,
) -> Result<f64, InfluenceError> {
    let g_s = model.per_example_gradient(z_s)?.flat();
    let g_e = model.per_example_gradient(z_eval)?.flat();
    let x = damped_solve(hessian, damping, &g_s)?;
    Ok(-g_e.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>())
}
