use super::hessian::{damped_solve, risk_hessian, MAX_DENSE_PARAMS};
use super::model::{Activation, Example, Head, Model};
use super::InfluenceError;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    /// [d_in, hidden..., d_out].
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Adam step size.
    pub lr: f64,
    /// Full-batch Adam iterations.
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    /// Required ‖∇R(θ̂)‖ for convex models, reached by Newton polishing.
    pub grad_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            epochs: 500,
            l2: 0.01,
            seed: 0,
            grad_tol: 1e-8,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Full-batch Adam from a seeded initialization. Convex models are then
/// polished with damped Newton steps until the risk gradient is below
/// `grad_tol`, which is what the first-order influence analysis assumes.
pub fn train(spec: &ModelSpec, data: &[Example], cfg: &TrainConfig) -> Result<Model, InfluenceError> {
    if data.is_empty() {
        return Err(InfluenceError::EmptyDataset);
    }
    let mut model = Model::new(&spec.widths, spec.activation, spec.head, cfg.l2, cfg.seed);
    adam(&mut model, data, cfg.lr, cfg.epochs)?;
    if model.is_convex() {
        newton_polish(&mut model, data, cfg.grad_tol)?;
    }
    model.theta_hat = true;
    Ok(model)
}

/// Re-optimizes the last layer with earlier layers frozen. On fixed
/// features the last layer is convex, so Newton's method reaches a true
/// stationary point in the head parameters.
pub fn refit_head(model: &mut Model, data: &[Example], grad_tol: f64) -> Result<(), InfluenceError> {
    if data.is_empty() {
        return Err(InfluenceError::EmptyDataset);
    }
    let features: Vec<Example> = data
        .iter()
        .map(|z| Example::new(model.head_inputs(&z.features).as_slice().to_vec(), z.label))
        .collect();
    let last = model.layers.len() - 1;
    let mut head = Model {
        layers: vec![model.layers[last].clone()],
        activation: model.activation,
        head: model.head,
        l2: model.l2,
        theta_hat: false,
    };
    newton_polish(&mut head, &features, grad_tol)?;
    model.layers[last] = head.layers.pop().expect("one layer");
    Ok(())
}

pub fn adam(model: &mut Model, data: &[Example], lr: f64, steps: usize) -> Result<(), InfluenceError> {
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut theta = model.flatten();
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    for t in 1..=steps {
        let g = model.risk_gradient(data)?;
        let c1 = 1.0 - beta1.powi(t as i32);
        let c2 = 1.0 - beta2.powi(t as i32);
        for i in 0..theta.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            theta[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        }
        model.set_flat(&theta);
    }
    Ok(())
}

fn newton_polish(model: &mut Model, data: &[Example], tol: f64) -> Result<(), InfluenceError> {
    if model.param_count() > MAX_DENSE_PARAMS {
        let g = norm(&model.risk_gradient(data)?);
        return if g <= tol {
            Ok(())
        } else {
            Err(InfluenceError::DidNotConverge { grad_norm: g })
        };
    }
    for _ in 0..100 {
        let g = model.risk_gradient(data)?;
        let gn = norm(&g);
        if gn <= tol {
            return Ok(());
        }
        let h = risk_hessian(model, data)?;
        let step = damped_solve(&h, 0.0, &g)?;
        let theta = model.flatten();
        let r0 = model.risk(data);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t - alpha * s).collect();
            let candidate = model.with_flat(&trial);
            let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
            if candidate.risk(data) <= r0 - 1e-4 * alpha * slope || alpha < 1e-10 {
                *model = candidate;
                break;
            }
            alpha *= 0.5;
        }
    }
    let g = norm(&model.risk_gradient(data)?);
    if g <= tol {
        Ok(())
    } else {
        Err(InfluenceError::DidNotConverge { grad_norm: g })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn blobs(n: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let y = (i % 2) as f64;
                let c = if y == 1.0 { 2.0 } else { -2.0 };
                Example::new(
                    vec![c + rng.random_range(-0.5..0.5), c + rng.random_range(-0.5..0.5)],
                    y,
                )
            })
            .collect()
    }

    fn logistic_spec(d: usize) -> ModelSpec {
        ModelSpec {
            widths: vec![d, 1],
            activation: Activation::Identity,
            head: Head::BinaryLogistic,
        }
    }

    #[test]
    fn separable_logistic_converges() {
        let data = blobs(60, 1);
        let cfg = TrainConfig {
            grad_tol: 1e-6,
            ..TrainConfig::default()
        };
        let m = train(&logistic_spec(2), &data, &cfg).unwrap();
        assert!(m.theta_hat);
        assert!(norm(&m.risk_gradient(&data).unwrap()) <= 1e-6);
    }

    #[test]
    fn training_is_deterministic() {
        let data = blobs(40, 2);
        let spec = ModelSpec {
            widths: vec![2, 4, 1],
            activation: Activation::ReLU,
            head: Head::BinaryLogistic,
        };
        let cfg = TrainConfig {
            epochs: 50,
            seed: 7,
            ..TrainConfig::default()
        };
        assert_eq!(train(&spec, &data, &cfg).unwrap(), train(&spec, &data, &cfg).unwrap());
    }

    #[test]
    fn xor_is_learned_with_one_hidden_layer() {
        let data: Vec<Example> = [(0.0, 0.0, 0.0), (0.0, 1.0, 1.0), (1.0, 0.0, 1.0), (1.0, 1.0, 0.0)]
            .iter()
            .map(|&(a, b, y)| Example::new(vec![a, b], y))
            .collect();
        let spec = ModelSpec {
            widths: vec![2, 8, 1],
            activation: Activation::ReLU,
            head: Head::BinaryLogistic,
        };
        let cfg = TrainConfig {
            lr: 0.05,
            epochs: 2000,
            l2: 1e-4,
            seed: 3,
            grad_tol: 1e-6,
        };
        let m = train(&spec, &data, &cfg).unwrap();
        assert!(m.mean_loss(&data) < 0.1, "loss {}", m.mean_loss(&data));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert_eq!(
            train(&logistic_spec(2), &[], &TrainConfig::default()),
            Err(InfluenceError::EmptyDataset)
        );
    }

    #[test]
    fn refit_head_zeroes_the_head_gradient() {
        let data = blobs(60, 9);
        let spec = ModelSpec {
            widths: vec![2, 5, 1],
            activation: Activation::ReLU,
            head: Head::BinaryLogistic,
        };
        let cfg = TrainConfig {
            epochs: 50,
            ..TrainConfig::default()
        };
        let mut model = train(&spec, &data, &cfg).unwrap();
        refit_head(&mut model, &data, 1e-9).unwrap();
        let g = model.risk_gradient(&data).unwrap();
        let head = model.layer_offsets()[1];
        assert!(norm(&g[head..]) <= 1e-9);
    }
}
