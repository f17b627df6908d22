#![allow(dead_code)]

//! Independent closed-form logistic-regression machinery used to check the
//! library: its own gradient, Hessian and Newton solver on θ = [w; b].

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tip::influence::Example;

pub fn sig(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn aug(x: &[f64]) -> DVector<f64> {
    let mut v = DVector::zeros(x.len() + 1);
    for (i, &xi) in x.iter().enumerate() {
        v[i] = xi;
    }
    v[x.len()] = 1.0;
    v
}

pub fn point_loss(theta: &DVector<f64>, z: &Example) -> f64 {
    let s = theta.dot(&aug(&z.features));
    // log(1 + e^s) − y s
    let sp = if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    };
    sp - z.label * s
}

pub fn point_grad(theta: &DVector<f64>, z: &Example) -> DVector<f64> {
    let x = aug(&z.features);
    x * (sig(theta.dot(&aug(&z.features))) - z.label)
}

/// Minimizes mean_train ℓ + (l2/2)‖θ‖² + Σ_extra w·ℓ by Newton's method.
pub fn fit(train: &[Example], l2: f64, extra: &[(f64, &Example)], start: &DVector<f64>) -> DVector<f64> {
    let d = start.len();
    let n = train.len() as f64;
    let mut theta = start.clone();
    for _ in 0..100 {
        let mut g = &theta * l2;
        let mut h = DMatrix::<f64>::identity(d, d) * l2;
        let mut add = |w: f64, z: &Example| {
            let x = aug(&z.features);
            let p = sig(theta.dot(&x));
            g += &x * (w * (p - z.label));
            h += &x * x.transpose() * (w * p * (1.0 - p));
        };
        for z in train {
            add(1.0 / n, z);
        }
        for &(w, z) in extra {
            add(w, z);
        }
        if g.norm() < 1e-14 {
            break;
        }
        let step = h.cholesky().expect("positive definite").solve(&g);
        theta -= step;
    }
    theta
}

/// Logistic data: anisotropic Gaussian features, labels from a noisy
/// linear rule.
pub fn logistic_data(n: usize, d: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|i| if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..d)
                .map(|i| {
                    let u: f64 = rng.random_range(-1.0..1.0) + rng.random_range(-1.0..1.0);
                    u * (1.0 + i as f64 * 0.5)
                })
                .collect();
            let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.3;
            let y = if rng.random::<f64>() < sig(s) { 1.0 } else { 0.0 };
            Example::new(x, y)
        })
        .collect()
}

/// dℓ(z_eval; θ_ε)/dε at 0 by central differences of re-optimized models.
pub fn reoptimized_derivative(
    train: &[Example],
    l2: f64,
    theta_hat: &DVector<f64>,
    z_s: &Example,
    z_eval: &Example,
    eps: f64,
) -> f64 {
    let plus = fit(train, l2, &[(eps, z_s)], theta_hat);
    let minus = fit(train, l2, &[(-eps, z_s)], theta_hat);
    (point_loss(&plus, z_eval) - point_loss(&minus, z_eval)) / (2.0 * eps)
}
