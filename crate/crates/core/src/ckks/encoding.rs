//! Canonical embedding between real slot vectors and ring polynomials.
//!
//! Slot `j` is the evaluation at ζ^(5^j mod 2N), ζ = exp(iπ/N), so the
//! Galois automorphism X ↦ X^(5^r) rotates slots left by `r`. Evaluation at
//! all odd powers of ζ is a length-N DFT of the coefficients twisted by ζ^t.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Encoder {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// ζ^t for t < N.
    twist: Vec<Complex64>,
    /// DFT bin holding slot j, and the bin holding its conjugate.
    slot_bin: Vec<usize>,
    conj_bin: Vec<usize>,
}

impl std::fmt::Debug for Encoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Encoder").field("n", &self.n).finish()
    }
}

impl Encoder {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let m = 2 * n;
        let twist = (0..n)
            .map(|t| Complex64::from_polar(1.0, PI * t as f64 / n as f64))
            .collect();
        let mut slot_bin = Vec::with_capacity(n / 2);
        let mut conj_bin = Vec::with_capacity(n / 2);
        let mut e = 1usize;
        for _ in 0..n / 2 {
            slot_bin.push((e - 1) / 2);
            conj_bin.push((m - e - 1) / 2);
            e = e * 5 % m;
        }
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            twist,
            slot_bin,
            conj_bin,
        }
    }

    pub fn slot_count(&self) -> usize {
        self.n / 2
    }

    /// Real coefficients (before scaling and rounding) whose embedding is
    /// `values` zero-padded to N/2 slots.
    pub fn embed_inverse(&self, values: &[f64]) -> Vec<f64> {
        assert!(values.len() <= self.n / 2);
        let mut y = vec![Complex64::new(0.0, 0.0); self.n];
        for (j, &v) in values.iter().enumerate() {
            y[self.slot_bin[j]] = Complex64::new(v, 0.0);
            y[self.conj_bin[j]] = Complex64::new(v, 0.0);
        }
        self.forward.process(&mut y);
        let inv_n = 1.0 / self.n as f64;
        y.iter()
            .zip(&self.twist)
            .map(|(x, w)| (x * w.conj()).re * inv_n)
            .collect()
    }

    /// Slot values (real parts) of a polynomial with real coefficients.
    pub fn embed(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.n);
        let mut x: Vec<Complex64> = coeffs.iter().zip(&self.twist).map(|(&c, w)| w * c).collect();
        self.inverse.process(&mut x);
        self.slot_bin.iter().map(|&b| x[b].re).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation m(ζ^(5^j)) as an oracle for the FFT route.
    fn naive_embed(coeffs: &[f64]) -> Vec<f64> {
        let n = coeffs.len();
        let m = 2 * n;
        let mut e = 1usize;
        let mut out = Vec::new();
        for _ in 0..n / 2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, &c) in coeffs.iter().enumerate() {
                let angle = PI * ((e * t) % m) as f64 / n as f64;
                acc += Complex64::from_polar(c, angle);
            }
            out.push(acc.re);
            e = e * 5 % m;
        }
        out
    }

    #[test]
    fn fft_embedding_matches_direct_evaluation() {
        let enc = Encoder::new(64);
        let coeffs: Vec<f64> = (0..64).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let fast = enc.embed(&coeffs);
        let slow = naive_embed(&coeffs);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn inverse_then_forward_is_identity() {
        let enc = Encoder::new(128);
        let v: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let back = enc.embed(&enc.embed_inverse(&v));
        for (i, x) in back.iter().enumerate() {
            let want = v.get(i).copied().unwrap_or(0.0);
            assert!((x - want).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_vector_is_constant_polynomial() {
        let enc = Encoder::new(64);
        let coeffs = enc.embed_inverse(&[2.5; 32]);
        assert!((coeffs[0] - 2.5).abs() < 1e-12);
        assert!(coeffs[1..].iter().all(|c| c.abs() < 1e-12));
    }
}
