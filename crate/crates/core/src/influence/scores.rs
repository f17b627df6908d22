use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use super::hessian::{damped_solve, risk_hessian};
use super::kfac::{project_gradient, KfacState, Preconditioner, ProjectionOperator};
use super::model::{Example, Model};
use super::InfluenceError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    /// Mean projected evaluation gradient, no curvature.
    RawGradientSum,
    KfacPreconditioned,
    /// (P H Pᵀ + λI)⁻¹ with the dense risk Hessian; small models only.
    ExactHessian,
}

/// The buyer's query vector ṽ_eval.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalVector {
    pub values: Vec<f64>,
    pub provenance: Provenance,
    pub eval_set_size: usize,
}

impl EvalVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }
}

/// Projected per-example gradient g̃(z).
pub fn projected_gradient(model: &Model, proj: &ProjectionOperator, z: &Example) -> Result<Vec<f64>, InfluenceError> {
    project_gradient(&model.per_example_gradient(z)?, proj)
}

/// Mean projected gradient over `eval_set`.
pub fn mean_projected_gradient(
    model: &Model,
    proj: &ProjectionOperator,
    eval_set: &[Example],
) -> Result<Vec<f64>, InfluenceError> {
    if eval_set.is_empty() {
        return Err(InfluenceError::EmptyDataset);
    }
    proj.check_model(model)?;
    let mut acc = vec![0.0; proj.dim()];
    for z in eval_set {
        for (a, v) in acc.iter_mut().zip(projected_gradient(model, proj, z)?) {
            *a += v;
        }
    }
    let m = eval_set.len() as f64;
    acc.iter_mut().for_each(|a| *a /= m);
    Ok(acc)
}

pub fn raw_eval_vector(
    model: &Model,
    eval_set: &[Example],
    proj: &ProjectionOperator,
) -> Result<EvalVector, InfluenceError> {
    Ok(EvalVector {
        values: mean_projected_gradient(model, proj, eval_set)?,
        provenance: Provenance::RawGradientSum,
        eval_set_size: eval_set.len(),
    })
}

/// ṽ_eval = H̃⁻¹ g̃_eval with the K-FAC curvature of the training set.
pub fn preconditioned_eval_vector(
    model: &Model,
    eval_set: &[Example],
    proj: &ProjectionOperator,
    kfac: &KfacState,
    damping: f64,
) -> Result<EvalVector, InfluenceError> {
    let g = mean_projected_gradient(model, proj, eval_set)?;
    let pre = Preconditioner::new(kfac, proj, model.l2, damping)?;
    Ok(EvalVector {
        values: pre.apply(&g)?,
        provenance: Provenance::KfacPreconditioned,
        eval_set_size: eval_set.len(),
    })
}

/// ṽ_eval = (P H Pᵀ + λI)⁻¹ g̃_eval with the dense risk Hessian.
pub fn exact_eval_vector(
    model: &Model,
    train: &[Example],
    eval_set: &[Example],
    proj: &ProjectionOperator,
    damping: f64,
) -> Result<EvalVector, InfluenceError> {
    let g = mean_projected_gradient(model, proj, eval_set)?;
    let h = risk_hessian(model, train)?;
    let p = proj.dense_matrix(model);
    let ph = &p * h * p.transpose();
    Ok(EvalVector {
        values: damped_solve(&ph, damping, &g)?,
        provenance: Provenance::ExactHessian,
        eval_set_size: eval_set.len(),
    })
}

fn dot(a: &[f64], b: &[f64]) -> Result<f64, InfluenceError> {
    if a.len() != b.len() {
        return Err(InfluenceError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// s(z) = −ṽ_evalᵀ g̃(z): the mean influence of z over the evaluation set.
/// Negative means acquiring z is predicted to lower the evaluation loss.
pub fn influence_score(v: &EvalVector, g: &[f64]) -> Result<f64, InfluenceError> {
    Ok(-dot(&v.values, g)?)
}

/// u(z) = ṽ_evalᵀ g̃(z) = −s(z): predicted reduction of the evaluation loss
/// per unit of upweighting. Larger is better.
pub fn utility_score(v: &EvalVector, g: &[f64]) -> Result<f64, InfluenceError> {
    dot(&v.values, g)
}

pub fn cosine_score(g_seller: &[f64], g_eval: &[f64]) -> Result<f64, InfluenceError> {
    let d = dot(g_seller, g_eval)?;
    let na = dot(g_seller, g_seller)?.sqrt();
    let nb = dot(g_eval, g_eval)?.sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(InfluenceError::ZeroVector);
    }
    Ok((d / (na * nb)).clamp(-1.0, 1.0))
}

/// Standard normal deviate for item `i` of a replicate seeded by `seed`.
pub fn random_score(seed: u64, i: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(i);
    StandardNormal.sample(&mut rng)
}

/// First-order group utility: the sum of member utilities.
pub fn group_value(scores: &[f64], subset: &[usize]) -> Result<f64, InfluenceError> {
    subset
        .iter()
        .map(|&i| scores.get(i).copied().ok_or(InfluenceError::InvalidIndex(i)))
        .sum()
}

/// Indices of the k highest utilities, ties to the lower index.
pub fn greedy_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}
