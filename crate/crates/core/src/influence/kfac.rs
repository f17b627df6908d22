//! K-FAC curvature factors, spectral projections and the Kronecker-eigenbasis
//! preconditioner.
//!
//! Each dense layer's input is augmented with a constant 1 so that the bias
//! is the last input column: the layer gradient is δ·x̃ᵀ with x̃ = [x; 1].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use sha2::{Digest, Sha256};

use super::model::{GradientFactors, Model};
use super::{Example, InfluenceError};

pub const DEFAULT_DAMPING: f64 = 1e-3;

/// Eigenpairs sorted by descending eigenvalue; `vectors` holds one
/// eigenvector per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Symmetric eigendecomposition with a deterministic ordering and sign:
/// descending eigenvalues, and in each eigenvector the entry of largest
/// magnitude is positive (ties go to the lowest index).
pub fn sorted_eigen(m: &DMatrix<f64>) -> Result<Eigen, InfluenceError> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Eigen {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::try_new(m.clone(), 1e-15, 10_000).ok_or(InfluenceError::EigSolverFailure)?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(InfluenceError::EigSolverFailure);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (row, &k) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(k);
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(row, i)] = sign * col[i];
        }
        values.push(eig.eigenvalues[k]);
    }
    Ok(Eigen { values, vectors })
}

fn augment(x: &DVector<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(x.len() + 1);
    v.rows_mut(0, x.len()).copy_from(x);
    v[x.len()] = 1.0;
    v
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KfacLayer {
    /// E[x̃x̃ᵀ] over the augmented layer input, (d_in+1)².
    pub c_in: DMatrix<f64>,
    /// E[δδᵀ] with the label drawn from the model's predictive distribution,
    /// d_out². This equals the Jacobian-propagated output-loss Hessian.
    pub c_out: DMatrix<f64>,
    pub eig_in: Eigen,
    pub eig_out: Eigen,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KfacState {
    pub layers: Vec<KfacLayer>,
    pub damping: f64,
}

pub fn estimate_kfac(model: &Model, train: &[Example]) -> Result<KfacState, InfluenceError> {
    if train.is_empty() {
        return Err(InfluenceError::EmptyDataset);
    }
    let mut acc: Vec<(DMatrix<f64>, DMatrix<f64>)> = model
        .layers
        .iter()
        .map(|l| {
            (
                DMatrix::zeros(l.d_in() + 1, l.d_in() + 1),
                DMatrix::zeros(l.d_out(), l.d_out()),
            )
        })
        .collect();
    for z in train {
        model.check_example(z)?;
        for ((c_in, c_out), (x, curv)) in acc.iter_mut().zip(model.layer_curvature(&z.features)) {
            let xa = augment(&x);
            c_in.ger(1.0, &xa, &xa, 1.0);
            *c_out += curv;
        }
    }
    let n = train.len() as f64;
    let layers = acc
        .into_iter()
        .map(|(mut c_in, mut c_out)| {
            c_in /= n;
            c_out /= n;
            symmetrize(&mut c_in);
            symmetrize(&mut c_out);
            Ok(KfacLayer {
                eig_in: sorted_eigen(&c_in)?,
                eig_out: sorted_eigen(&c_out)?,
                c_in,
                c_out,
            })
        })
        .collect::<Result<Vec<_>, InfluenceError>>()?;
    Ok(KfacState {
        layers,
        damping: DEFAULT_DAMPING,
    })
}

impl KfacState {
    pub fn with_damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerProjection {
    /// k_in × (d_in + 1).
    pub p_in: DMatrix<f64>,
    /// k_out × d_out.
    pub p_out: DMatrix<f64>,
}

impl LayerProjection {
    pub fn k(&self) -> usize {
        self.p_in.nrows() * self.p_out.nrows()
    }
}

/// Block-diagonal projection, one Kronecker block P_out ⊗ P_in per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionOperator {
    pub layers: Vec<LayerProjection>,
}

/// Rows are the leading eigenvectors of the K-FAC factors. `ranks[l]` is
/// (k_in, k_out) for layer l; a zero rank drops the layer.
pub fn build_projection(kfac: &KfacState, ranks: &[(usize, usize)]) -> Result<ProjectionOperator, InfluenceError> {
    if ranks.len() != kfac.layers.len() {
        return Err(InfluenceError::DimensionMismatch {
            expected: kfac.layers.len(),
            found: ranks.len(),
        });
    }
    let layers = kfac
        .layers
        .iter()
        .zip(ranks)
        .map(|(layer, &(k_in, k_out))| {
            let d_in = layer.c_in.nrows();
            let d_out = layer.c_out.nrows();
            if k_in > d_in || k_out > d_out {
                return Err(InfluenceError::RankTooLarge {
                    requested: (k_in, k_out),
                    available: (d_in, d_out),
                });
            }
            let (k_in, k_out) = if k_in == 0 || k_out == 0 { (0, 0) } else { (k_in, k_out) };
            Ok(LayerProjection {
                p_in: layer.eig_in.vectors.rows(0, k_in).into_owned(),
                p_out: layer.eig_out.vectors.rows(0, k_out).into_owned(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ProjectionOperator { layers })
}

impl ProjectionOperator {
    /// Full-rank identity blocks for every layer.
    pub fn identity(model: &Model) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerProjection {
                    p_in: DMatrix::identity(l.d_in() + 1, l.d_in() + 1),
                    p_out: DMatrix::identity(l.d_out(), l.d_out()),
                })
                .collect(),
        }
    }

    /// Total projected dimension Σ k_in·k_out.
    pub fn dim(&self) -> usize {
        self.layers.iter().map(LayerProjection::k).sum()
    }

    pub fn check_model(&self, model: &Model) -> Result<(), InfluenceError> {
        let ok = self.layers.len() == model.layers.len()
            && self
                .layers
                .iter()
                .zip(&model.layers)
                .all(|(p, l)| p.k() == 0 || (p.p_in.ncols() == l.d_in() + 1 && p.p_out.ncols() == l.d_out()));
        if ok {
            Ok(())
        } else {
            Err(InfluenceError::ProjectionMismatch)
        }
    }

    /// SHA-256 over the dimensions and little-endian entries.
    pub fn checksum(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            for m in [&l.p_in, &l.p_out] {
                h.update((m.nrows() as u32).to_le_bytes());
                h.update((m.ncols() as u32).to_le_bytes());
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        h.update(m[(i, j)].to_le_bytes());
                    }
                }
            }
        }
        h.finalize().into()
    }

    /// The explicit k × d matrix in canonical parameter order. Only for small
    /// models and exact-Hessian comparisons.
    pub fn dense_matrix(&self, model: &Model) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.dim(), model.param_count());
        let offsets = model.layer_offsets();
        let mut row = 0;
        for ((proj, layer), &base) in self.layers.iter().zip(&model.layers).zip(&offsets) {
            let (d_in, d_out) = (layer.d_in(), layer.d_out());
            for a in 0..proj.p_out.nrows() {
                for b in 0..proj.p_in.nrows() {
                    for i in 0..d_out {
                        for j in 0..=d_in {
                            let col = if j < d_in {
                                base + i * d_in + j
                            } else {
                                base + d_out * d_in + i
                            };
                            p[(row, col)] = proj.p_out[(a, i)] * proj.p_in[(b, j)];
                        }
                    }
                    row += 1;
                }
            }
        }
        p
    }
}

/// g̃ = concat over layers of P_out·δ·(P_in·x̃)ᵀ, row-major.
pub fn project_gradient(gf: &GradientFactors, proj: &ProjectionOperator) -> Result<Vec<f64>, InfluenceError> {
    if gf.layers.len() != proj.layers.len() {
        return Err(InfluenceError::ProjectionMismatch);
    }
    let mut out = Vec::with_capacity(proj.dim());
    for ((x, delta), p) in gf.layers.iter().zip(&proj.layers) {
        if p.k() == 0 {
            continue;
        }
        if p.p_in.ncols() != x.len() + 1 || p.p_out.ncols() != delta.len() {
            return Err(InfluenceError::ProjectionMismatch);
        }
        let a = &p.p_out * delta;
        let b = &p.p_in * augment(x);
        for ai in a.iter() {
            out.extend(b.iter().map(|bj| ai * bj));
        }
    }
    Ok(out)
}

/// Inverse of the damped Kronecker curvature restricted to the projected
/// subspace, applied in the eigenbasis of the projected factors: entry (a, b)
/// is divided by ν_a·μ_b + l2 + λ.
#[derive(Clone, Debug, PartialEq)]
pub struct Preconditioner {
    layers: Vec<PreconditionerLayer>,
}

#[derive(Clone, Debug, PartialEq)]
struct PreconditionerLayer {
    out: Eigen,
    inp: Eigen,
    shift: f64,
}

impl Preconditioner {
    pub fn new(kfac: &KfacState, proj: &ProjectionOperator, l2: f64, damping: f64) -> Result<Self, InfluenceError> {
        if damping <= 0.0 {
            return Err(InfluenceError::SingularHessian);
        }
        if kfac.layers.len() != proj.layers.len() {
            return Err(InfluenceError::ProjectionMismatch);
        }
        let layers = kfac
            .layers
            .iter()
            .zip(&proj.layers)
            .filter(|(_, p)| p.k() > 0)
            .map(|(f, p)| {
                let a = &p.p_in * &f.c_in * p.p_in.transpose();
                let g = &p.p_out * &f.c_out * p.p_out.transpose();
                Ok(PreconditionerLayer {
                    out: sorted_eigen(&sym(g))?,
                    inp: sorted_eigen(&sym(a))?,
                    shift: l2 + damping,
                })
            })
            .collect::<Result<Vec<_>, InfluenceError>>()?;
        Ok(Self { layers })
    }

    pub fn apply(&self, g: &[f64]) -> Result<Vec<f64>, InfluenceError> {
        let total: usize = self
            .layers
            .iter()
            .map(|l| l.out.values.len() * l.inp.values.len())
            .sum();
        if g.len() != total {
            return Err(InfluenceError::DimensionMismatch {
                expected: total,
                found: g.len(),
            });
        }
        let mut out = Vec::with_capacity(total);
        let mut offset = 0;
        for l in &self.layers {
            let (ko, ki) = (l.out.values.len(), l.inp.values.len());
            let block = DMatrix::from_row_slice(ko, ki, &g[offset..offset + ko * ki]);
            // Rotate into the eigenbasis, scale, rotate back.
            let mut rot = &l.out.vectors * block * l.inp.vectors.transpose();
            for a in 0..ko {
                for b in 0..ki {
                    let denom = l.out.values[a].max(0.0) * l.inp.values[b].max(0.0) + l.shift;
                    rot[(a, b)] /= denom;
                }
            }
            let back = l.out.vectors.transpose() * rot * &l.inp.vectors;
            for a in 0..ko {
                for b in 0..ki {
                    out.push(back[(a, b)]);
                }
            }
            offset += ko * ki;
        }
        Ok(out)
    }
}

fn sym(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}
