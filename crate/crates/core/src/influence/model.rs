use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use super::InfluenceError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    ReLU,
    Identity,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// One output logit, label in {0, 1}.
    BinaryLogistic,
    /// One logit per class, label is the class index.
    Softmax,
    /// Real targets, loss ½‖z − y‖².
    SquaredError,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    /// Class index (as a float) or regression target.
    pub label: f64,
}

impl Example {
    pub fn new(features: Vec<f64>, label: f64) -> Self {
        Self { features, label }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// d_out × d_in.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weights: DMatrix::zeros(d_out, d_in),
            bias: DVector::zeros(d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.d_out() * (self.d_in() + 1)
    }
}

/// Feed-forward network. `activation` applies after every layer except the
/// last, whose output feeds the loss head directly.
///
/// The regularized empirical risk is R(θ) = mean ℓ(z; θ) + (l2/2)‖θ‖², with
/// the penalty on every parameter including biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub layers: Vec<Dense>,
    pub activation: Activation,
    pub head: Head,
    pub l2: f64,
    pub theta_hat: bool,
}

/// Inputs and backpropagated errors of every layer for one example. The
/// gradient of layer l is δ_l·x_lᵀ for the weights and δ_l for the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientFactors {
    pub layers: Vec<(DVector<f64>, DVector<f64>)>,
}

impl GradientFactors {
    /// Flat gradient in canonical order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (x, delta) in &self.layers {
            for i in 0..delta.len() {
                for j in 0..x.len() {
                    out.push(delta[i] * x[j]);
                }
            }
            out.extend(delta.iter());
        }
        out
    }
}

fn activate(a: Activation, z: f64) -> f64 {
    match a {
        Activation::ReLU => z.max(0.0),
        Activation::Identity => z,
        Activation::Sigmoid => sigmoid(z),
    }
}

fn activate_grad(a: Activation, z: f64) -> f64 {
    match a {
        Activation::ReLU => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Identity => 1.0,
        Activation::Sigmoid => {
            let s = sigmoid(z);
            s * (1.0 - s)
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn softmax(z: &DVector<f64>) -> DVector<f64> {
    let m = z.max();
    let e = z.map(|v| (v - m).exp());
    let s = e.sum();
    e / s
}

impl Model {
    /// Layer widths [d_in, h_1, ..., d_out], weights drawn N(0, 1/fan_in) from
    /// `seed`, biases zero.
    pub fn new(widths: &[usize], activation: Activation, head: Head, l2: f64, seed: u64) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, (1.0 / w[0] as f64).sqrt()).expect("finite std");
                Dense {
                    weights: DMatrix::from_fn(w[1], w[0], |_, _| normal.sample(&mut rng)),
                    bias: DVector::zeros(w[1]),
                }
            })
            .collect();
        Self {
            layers,
            activation,
            head,
            l2,
            theta_hat: false,
        }
    }

    /// Logistic regression: a single dense layer with one output.
    pub fn logistic(d_in: usize, l2: f64) -> Self {
        Self {
            layers: vec![Dense::zeros(d_in, 1)],
            activation: Activation::Identity,
            head: Head::BinaryLogistic,
            l2,
            theta_hat: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").d_out()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// No hidden layers and a convex loss head.
    pub fn is_convex(&self) -> bool {
        self.layers.len() == 1
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            for i in 0..layer.d_out() {
                for j in 0..layer.d_in() {
                    out.push(layer.weights[(i, j)]);
                }
            }
            out.extend(layer.bias.iter());
        }
        out
    }

    pub fn set_flat(&mut self, theta: &[f64]) {
        assert_eq!(theta.len(), self.param_count());
        let mut k = 0;
        for layer in &mut self.layers {
            for i in 0..layer.d_out() {
                for j in 0..layer.d_in() {
                    layer.weights[(i, j)] = theta[k];
                    k += 1;
                }
            }
            for i in 0..layer.d_out() {
                layer.bias[i] = theta[k];
                k += 1;
            }
        }
    }

    pub fn with_flat(&self, theta: &[f64]) -> Self {
        let mut m = self.clone();
        m.set_flat(theta);
        m
    }

    /// Offset of each layer's block in the canonical flattening.
    pub fn layer_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.layers
            .iter()
            .map(|l| {
                let o = acc;
                acc += l.param_count();
                o
            })
            .collect()
    }

    pub fn check_example(&self, z: &Example) -> Result<(), InfluenceError> {
        if z.features.len() != self.input_dim() {
            return Err(InfluenceError::DimensionMismatch {
                expected: self.input_dim(),
                found: z.features.len(),
            });
        }
        Ok(())
    }

    /// Layer inputs and pre-activations for one input.
    fn forward_trace(&self, x: &[f64]) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = DVector::from_column_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let z = &layer.weights * &a + &layer.bias;
            inputs.push(a);
            a = if l + 1 < self.layers.len() {
                z.map(|v| activate(self.activation, v))
            } else {
                z.clone()
            };
            pre.push(z);
        }
        (inputs, pre)
    }

    /// Input of the last layer: the penultimate activations, or `x` itself
    /// for a single-layer model.
    pub fn head_inputs(&self, x: &[f64]) -> DVector<f64> {
        self.forward_trace(x).0.pop().expect("nonempty")
    }

    /// Output-layer pre-activation (logits).
    pub fn logits(&self, x: &[f64]) -> DVector<f64> {
        self.forward_trace(x).1.pop().expect("nonempty")
    }

    /// Predicted probability of class 1 (logistic), class probabilities
    /// (softmax) or the regression output.
    pub fn predict(&self, x: &[f64]) -> DVector<f64> {
        let z = self.logits(x);
        match self.head {
            Head::BinaryLogistic => z.map(sigmoid),
            Head::Softmax => softmax(&z),
            Head::SquaredError => z,
        }
    }

    fn head_loss(&self, z: &DVector<f64>, label: f64) -> f64 {
        match self.head {
            Head::BinaryLogistic => softplus(z[0]) - label * z[0],
            Head::Softmax => {
                let m = z.max();
                let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                lse - z[label as usize]
            }
            Head::SquaredError => 0.5 * z.iter().map(|v| (v - label).powi(2)).sum::<f64>(),
        }
    }

    /// ∂ℓ/∂z at the output logits.
    fn head_grad(&self, z: &DVector<f64>, label: f64) -> DVector<f64> {
        match self.head {
            Head::BinaryLogistic => DVector::from_element(1, sigmoid(z[0]) - label),
            Head::Softmax => {
                let mut p = softmax(z);
                p[label as usize] -= 1.0;
                p
            }
            Head::SquaredError => z.map(|v| v - label),
        }
    }

    /// ∂²ℓ/∂z² at the output logits; it does not depend on the label.
    pub(crate) fn head_hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        match self.head {
            Head::BinaryLogistic => {
                let p = sigmoid(z[0]);
                DMatrix::from_element(1, 1, p * (1.0 - p))
            }
            Head::Softmax => {
                let p = softmax(z);
                DMatrix::from_diagonal(&p) - &p * p.transpose()
            }
            Head::SquaredError => DMatrix::identity(z.len(), z.len()),
        }
    }

    /// Per-example loss ℓ(z; θ), without the regularizer.
    pub fn loss(&self, z: &Example) -> f64 {
        self.head_loss(&self.logits(&z.features), z.label)
    }

    pub fn mean_loss(&self, data: &[Example]) -> f64 {
        data.iter().map(|z| self.loss(z)).sum::<f64>() / data.len() as f64
    }

    /// Regularized empirical risk.
    pub fn risk(&self, data: &[Example]) -> f64 {
        let theta = self.flatten();
        self.mean_loss(data) + 0.5 * self.l2 * theta.iter().map(|t| t * t).sum::<f64>()
    }

    pub fn per_example_gradient(&self, z: &Example) -> Result<GradientFactors, InfluenceError> {
        self.check_example(z)?;
        let (inputs, pre) = self.forward_trace(&z.features);
        let last = self.layers.len() - 1;
        let mut delta = self.head_grad(&pre[last], z.label);
        let mut out = vec![(DVector::zeros(0), DVector::zeros(0)); self.layers.len()];
        for l in (0..=last).rev() {
            if l < last {
                let back = self.layers[l + 1].weights.transpose() * &delta;
                delta = back.zip_map(&pre[l], |d, p| d * activate_grad(self.activation, p));
            }
            out[l] = (inputs[l].clone(), delta.clone());
        }
        Ok(GradientFactors { layers: out })
    }

    /// Gradient of the regularized empirical risk, canonical order.
    pub fn risk_gradient(&self, data: &[Example]) -> Result<Vec<f64>, InfluenceError> {
        let mut g = vec![0.0; self.param_count()];
        for z in data {
            for (acc, v) in g.iter_mut().zip(self.per_example_gradient(z)?.flat()) {
                *acc += v;
            }
        }
        let n = data.len() as f64;
        for (acc, t) in g.iter_mut().zip(self.flatten()) {
            *acc = *acc / n + self.l2 * t;
        }
        Ok(g)
    }

    /// Jacobian of the output logits with respect to θ (d_out × d).
    pub(crate) fn output_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let (inputs, pre) = self.forward_trace(x);
        let last = self.layers.len() - 1;
        let k = self.output_dim();
        let offsets = self.layer_offsets();
        let mut jac = DMatrix::zeros(k, self.param_count());
        for o in 0..k {
            let mut delta = DVector::zeros(k);
            delta[o] = 1.0;
            for l in (0..=last).rev() {
                if l < last {
                    let back = self.layers[l + 1].weights.transpose() * &delta;
                    delta = back.zip_map(&pre[l], |d, p| d * activate_grad(self.activation, p));
                }
                let x_l = &inputs[l];
                let base = offsets[l];
                let d_in = x_l.len();
                for i in 0..delta.len() {
                    for j in 0..d_in {
                        jac[(o, base + i * d_in + j)] = delta[i] * x_l[j];
                    }
                    jac[(o, base + delta.len() * d_in + i)] = delta[i];
                }
            }
        }
        jac
    }

    /// Inputs to every layer and the Jacobian-propagated output curvature
    /// E_y[δδᵀ] at each layer, for the K-FAC factors.
    pub(crate) fn layer_curvature(&self, x: &[f64]) -> Vec<(DVector<f64>, DMatrix<f64>)> {
        let (inputs, pre) = self.forward_trace(x);
        let last = self.layers.len() - 1;
        let mut curv = self.head_hessian(&pre[last]);
        let mut out = vec![(DVector::zeros(0), DMatrix::zeros(0, 0)); self.layers.len()];
        for l in (0..=last).rev() {
            if l < last {
                // δ_l = D_l W_{l+1}ᵀ δ_{l+1}
                let w = &self.layers[l + 1].weights;
                let d = pre[l].map(|p| activate_grad(self.activation, p));
                let back = w.transpose() * &curv * w;
                curv = DMatrix::from_fn(back.nrows(), back.ncols(), |i, j| back[(i, j)] * d[i] * d[j]);
            }
            out[l] = (inputs[l].clone(), curv.clone());
        }
        out
    }
}
