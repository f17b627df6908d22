//! The homomorphic operations used by the inner-product circuit.

use rand::Rng;

use super::ciphertext::{Ciphertext, NoiseEstimate, Plaintext};
use super::context::{CkksContext, RnsPoly};
use super::keys::{EvalKeys, KeySwitchKey, PublicKey, SecretKey};
use super::sampling::{centered_binomial, ternary_zo};
use super::CkksError;

/// Multiplier turning a standard deviation into a high-probability bound.
const TAIL: f64 = 6.0;

/// Relative tolerance when comparing two scales for equality.
const SCALE_TOLERANCE: f64 = 1e-9;

impl CkksContext {
    // ----- noise heuristics, in scaled (integer) units -----

    /// Real-part std of the canonical embedding of a polynomial whose
    /// coefficients are independent with the given variance.
    fn slot_std(&self, coeff_variance: f64) -> f64 {
        (self.n() as f64 * coeff_variance / 2.0).sqrt()
    }

    /// Fresh encryption e_pk·u + e0 + e1·s plus encoding rounding, using
    /// the canonical-embedding heuristic 8√2·σN + 6σ√N + 16σ√(hN). Slots of
    /// e·u are products of two near-Gaussian values, so their tails are
    /// heavier than a plain k-sigma rule allows.
    pub fn fresh_noise_bound(&self) -> f64 {
        let n = self.n() as f64;
        let h = n / 2.0;
        let sigma = self.params().noise_stddev;
        8.0 * std::f64::consts::SQRT_2 * sigma * n
            + 6.0 * sigma * n.sqrt()
            + 16.0 * sigma * (h * n).sqrt()
            + TAIL * self.slot_std(1.0 / 12.0)
    }

    /// Rounding r0 + r1·s left by a division (rescale or mod-down):
    /// √(N/3)·(3 + 8√h).
    fn rounding_noise_bound(&self) -> f64 {
        let n = self.n() as f64;
        let h = n / 2.0;
        (n / 3.0).sqrt() * (3.0 + 8.0 * h.sqrt())
    }

    /// Key switching: Σ d·e / P plus mod-down rounding.
    fn key_switch_noise_bound(&self) -> f64 {
        let n = self.n() as f64;
        let w = self.params().decomposition_log_base as f64;
        let digits = self.total_digits() as f64;
        let var = self.params().noise_stddev.powi(2);
        let p = self.params().special_modulus as f64;
        let digit_sq = (2f64).powf(2.0 * w) / 3.0;
        TAIL * self.slot_std(digits * n * digit_sq * var) / p + self.rounding_noise_bound()
    }

    // ----- encoding -----

    /// Encodes `values` (zero-padded to N/2 slots) at the default scale.
    pub fn encode(&self, values: &[f64], level: usize) -> Result<Plaintext, CkksError> {
        self.encode_at_scale(values, level, self.params().scale_log2)
    }

    pub fn encode_at_scale(&self, values: &[f64], level: usize, log_scale: f64) -> Result<Plaintext, CkksError> {
        if values.len() > self.slot_count() {
            return Err(CkksError::TooManySlots {
                given: values.len(),
                capacity: self.slot_count(),
            });
        }
        if level > self.max_level() {
            return Err(CkksError::LevelMismatch {
                expected: self.max_level(),
                found: level,
            });
        }
        let scale = log_scale.exp2();
        let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !max_abs.is_finite() || max_abs * scale >= self.decodable_bound(level) {
            return Err(CkksError::Overflow {
                max_abs,
                scale_log2: log_scale,
            });
        }
        let coeffs: Vec<i128> = self
            .encoder
            .embed_inverse(values)
            .iter()
            .map(|c| (c * scale).round() as i128)
            .collect();
        let poly = RnsPoly {
            rows: (0..=level)
                .map(|i| {
                    let m = self.modulus(i);
                    coeffs.iter().map(|&c| m.reduce_i128(c)).collect()
                })
                .collect(),
        };
        Ok(Plaintext {
            poly,
            log_scale,
            level,
            slots: values.len(),
        })
    }

    /// Decodes the first `slot_count_used` slots.
    pub fn decode(&self, pt: &Plaintext) -> Vec<f64> {
        let mut all = self.decode_all(pt);
        all.truncate(pt.slots);
        all
    }

    /// Decodes all N/2 slots.
    pub fn decode_all(&self, pt: &Plaintext) -> Vec<f64> {
        let scale = pt.scale();
        let coeffs: Vec<f64> = self.centered_coeffs(&pt.poly).into_iter().map(|c| c / scale).collect();
        self.encoder.embed(&coeffs)
    }

    /// Divides a plaintext by its top prime, as a ciphertext rescale would.
    pub fn rescale_plaintext(&self, pt: &Plaintext) -> Result<Plaintext, CkksError> {
        if pt.level == 0 {
            return Err(CkksError::DepthExhausted);
        }
        let dropped = self.modulus(pt.level).value() as f64;
        Ok(Plaintext {
            poly: self.rescale_poly(&pt.poly),
            log_scale: pt.log_scale - dropped.log2(),
            level: pt.level - 1,
            slots: pt.slots,
        })
    }

    // ----- encryption -----

    pub fn encrypt<R: Rng + ?Sized>(&self, pk: &PublicKey, pt: &Plaintext, rng: &mut R) -> Ciphertext {
        let n = self.n();
        let rows = pt.level + 1;
        let sigma = self.params().noise_stddev;
        let u = ternary_zo(rng, n);
        let e0 = centered_binomial(rng, n, sigma);
        let e1 = centered_binomial(rng, n, sigma);

        let mut u_ntt = self.lift_signed(&u, rows);
        self.to_ntt(&mut u_ntt);
        let restrict = |p: &RnsPoly| RnsPoly {
            rows: p.rows[..rows].to_vec(),
        };
        let mut c0 = self.mul_ntt(&u_ntt, &restrict(&pk.b));
        let mut c1 = self.mul_ntt(&u_ntt, &restrict(&pk.a));
        self.from_ntt(&mut c0);
        self.from_ntt(&mut c1);
        self.add_assign(&mut c0, &self.lift_signed(&e0, rows));
        self.add_assign(&mut c0, &pt.poly);
        self.add_assign(&mut c1, &self.lift_signed(&e1, rows));

        let magnitude = self.decode(pt).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ciphertext {
            parts: vec![c0, c1],
            log_scale: pt.log_scale,
            level: pt.level,
            slots: pt.slots,
            noise: Some(NoiseEstimate {
                error: self.fresh_noise_bound() / pt.scale(),
                magnitude,
            }),
        }
    }

    pub fn decrypt(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<Plaintext, CkksError> {
        if ct.level > self.max_level() || ct.parts.iter().any(|p| p.row_count() != ct.level + 1) {
            return Err(CkksError::LevelMismatch {
                expected: self.max_level(),
                found: ct.level,
            });
        }
        let rows = ct.level + 1;
        let mut s = self.lift_signed(&sk.coeffs, rows);
        self.to_ntt(&mut s);
        let mut s_pow = s.clone();
        let mut acc = RnsPoly::zero(rows, self.n());
        for part in &ct.parts[1..] {
            let mut c = part.clone();
            self.to_ntt(&mut c);
            self.mul_acc_ntt(&mut acc, &c, &s_pow);
            s_pow = self.mul_ntt(&s_pow, &s);
        }
        self.from_ntt(&mut acc);
        self.add_assign(&mut acc, &ct.parts[0]);
        Ok(Plaintext {
            poly: acc,
            log_scale: ct.log_scale,
            level: ct.level,
            slots: ct.slots,
        })
    }

    // ----- arithmetic -----

    fn check_compatible(&self, a: &Ciphertext, b: &Ciphertext) -> Result<(), CkksError> {
        if a.level != b.level {
            return Err(CkksError::LevelMismatch {
                expected: a.level,
                found: b.level,
            });
        }
        let (sa, sb) = (a.scale(), b.scale());
        if ((sa - sb) / sa).abs() > SCALE_TOLERANCE {
            return Err(CkksError::ScaleMismatch {
                left_log2: a.log_scale,
                right_log2: b.log_scale,
            });
        }
        Ok(())
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, CkksError> {
        self.check_compatible(a, b)?;
        let parts = a.parts.len().max(b.parts.len());
        let mut out = Vec::with_capacity(parts);
        for i in 0..parts {
            match (a.parts.get(i), b.parts.get(i)) {
                (Some(x), Some(y)) => {
                    let mut z = x.clone();
                    self.add_assign(&mut z, y);
                    out.push(z);
                }
                (Some(x), None) | (None, Some(x)) => out.push(x.clone()),
                (None, None) => unreachable!(),
            }
        }
        let noise = match (a.noise, b.noise) {
            (Some(x), Some(y)) => Some(NoiseEstimate {
                error: x.error + y.error,
                magnitude: x.magnitude + y.magnitude,
            }),
            _ => None,
        };
        Ok(Ciphertext {
            parts: out,
            log_scale: a.log_scale,
            level: a.level,
            slots: a.slots.max(b.slots),
            noise,
        })
    }

    /// Tensor product without relinearization or rescale (three parts).
    pub fn multiply_no_relin(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, CkksError> {
        self.check_compatible(a, b)?;
        if a.parts.len() != 2 || b.parts.len() != 2 {
            return Err(CkksError::NotLinear);
        }
        let to_ntt = |p: &RnsPoly| {
            let mut q = p.clone();
            self.to_ntt(&mut q);
            q
        };
        let (a0, a1) = (to_ntt(&a.parts[0]), to_ntt(&a.parts[1]));
        let (b0, b1) = (to_ntt(&b.parts[0]), to_ntt(&b.parts[1]));
        let mut d0 = self.mul_ntt(&a0, &b0);
        let mut d1 = self.mul_ntt(&a0, &b1);
        self.mul_acc_ntt(&mut d1, &a1, &b0);
        let mut d2 = self.mul_ntt(&a1, &b1);
        self.from_ntt(&mut d0);
        self.from_ntt(&mut d1);
        self.from_ntt(&mut d2);
        let noise = match (a.noise, b.noise) {
            (Some(x), Some(y)) => Some(NoiseEstimate {
                error: x.magnitude * y.error + y.magnitude * x.error + x.error * y.error,
                magnitude: x.magnitude * y.magnitude,
            }),
            _ => None,
        };
        Ok(Ciphertext {
            parts: vec![d0, d1, d2],
            log_scale: a.log_scale + b.log_scale,
            level: a.level,
            slots: a.slots.max(b.slots),
            noise,
        })
    }

    pub fn relinearize(&self, ct: &Ciphertext, keys: &EvalKeys) -> Result<Ciphertext, CkksError> {
        if ct.parts.len() != 3 {
            return Err(CkksError::NotLinear);
        }
        let (mut c0, mut c1) = self.apply_key_switch(&ct.parts[2], &keys.relin);
        self.add_assign(&mut c0, &ct.parts[0]);
        self.add_assign(&mut c1, &ct.parts[1]);
        let extra = self.key_switch_noise_bound() / ct.scale();
        Ok(Ciphertext {
            parts: vec![c0, c1],
            log_scale: ct.log_scale,
            level: ct.level,
            slots: ct.slots,
            noise: ct.noise.map(|n| NoiseEstimate {
                error: n.error + extra,
                ..n
            }),
        })
    }

    pub fn rescale(&self, ct: &Ciphertext) -> Result<Ciphertext, CkksError> {
        if ct.level == 0 {
            return Err(CkksError::DepthExhausted);
        }
        let dropped = self.modulus(ct.level).value() as f64;
        let log_scale = ct.log_scale - dropped.log2();
        let extra = self.rounding_noise_bound() / log_scale.exp2();
        Ok(Ciphertext {
            parts: ct.parts.iter().map(|p| self.rescale_poly(p)).collect(),
            log_scale,
            level: ct.level - 1,
            slots: ct.slots,
            noise: ct.noise.map(|n| NoiseEstimate {
                error: n.error + extra,
                ..n
            }),
        })
    }

    /// Multiply, relinearize, then rescale once.
    pub fn mul(&self, a: &Ciphertext, b: &Ciphertext, keys: &EvalKeys) -> Result<Ciphertext, CkksError> {
        if a.level == 0 || b.level == 0 {
            return Err(CkksError::DepthExhausted);
        }
        let tensor = self.multiply_no_relin(a, b)?;
        let relin = self.relinearize(&tensor, keys)?;
        self.rescale(&relin)
    }

    /// Slot-wise product with a plaintext at the same level; scales add.
    pub fn mul_plain(&self, ct: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext, CkksError> {
        if ct.level != pt.level {
            return Err(CkksError::LevelMismatch {
                expected: ct.level,
                found: pt.level,
            });
        }
        let mut p = pt.poly.clone();
        self.to_ntt(&mut p);
        let parts = ct
            .parts
            .iter()
            .map(|c| {
                let mut c = c.clone();
                self.to_ntt(&mut c);
                let mut d = self.mul_ntt(&c, &p);
                self.from_ntt(&mut d);
                d
            })
            .collect();
        let pt_error = TAIL * self.slot_std(1.0 / 12.0) / pt.scale();
        let pt_magnitude = self.decode_all(pt).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Ciphertext {
            parts,
            log_scale: ct.log_scale + pt.log_scale,
            level: ct.level,
            slots: ct.slots,
            noise: ct.noise.map(|n| NoiseEstimate {
                error: n.error * pt_magnitude + n.magnitude * pt_error + n.error * pt_error,
                magnitude: n.magnitude * pt_magnitude,
            }),
        })
    }

    /// Multiplies slot-wise by `mask` and rescales, consuming one level.
    /// The mask is encoded at the scale of the prime being dropped, so the
    /// ciphertext scale is unchanged.
    pub fn mask(&self, ct: &Ciphertext, mask: &[f64]) -> Result<Ciphertext, CkksError> {
        if ct.level == 0 {
            return Err(CkksError::DepthExhausted);
        }
        let prime = self.modulus(ct.level).value() as f64;
        let pt = self.encode_at_scale(mask, ct.level, prime.log2())?;
        self.rescale(&self.mul_plain(ct, &pt)?)
    }

    fn apply_key_switch(&self, c: &RnsPoly, key: &KeySwitchKey) -> (RnsPoly, RnsPoly) {
        self.key_switch(c, &key.digits)
    }

    /// One rotation by a step that has its own key.
    fn rotate_single(&self, ct: &Ciphertext, step: usize, keys: &EvalKeys) -> Result<Ciphertext, CkksError> {
        let key = keys.galois.get(&step).ok_or(CkksError::MissingGaloisKey(step))?;
        let g = self.galois_element(step);
        let mut c0 = self.automorphism(&ct.parts[0], g);
        let c1 = self.automorphism(&ct.parts[1], g);
        let (u0, u1) = self.apply_key_switch(&c1, key);
        self.add_assign(&mut c0, &u0);
        let extra = self.key_switch_noise_bound() / ct.scale();
        Ok(Ciphertext {
            parts: vec![c0, u1],
            log_scale: ct.log_scale,
            level: ct.level,
            slots: ct.slots,
            noise: ct.noise.map(|n| NoiseEstimate {
                error: n.error + extra,
                ..n
            }),
        })
    }

    /// Cyclic left rotation of all N/2 slots by `steps`, composed from the
    /// power-of-two keys.
    pub fn rotate(&self, ct: &Ciphertext, steps: usize, keys: &EvalKeys) -> Result<Ciphertext, CkksError> {
        if ct.parts.len() != 2 {
            return Err(CkksError::NotLinear);
        }
        let steps = steps % self.slot_count();
        let mut out = ct.clone();
        let mut bit = 1;
        while bit <= steps {
            if steps & bit != 0 {
                out = self.rotate_single(&out, bit, keys)?;
            }
            bit <<= 1;
        }
        Ok(out)
    }

    /// Slot 0 of the result holds the sum of the first `k` slots (k is
    /// rounded up to a power of two; the extra slots must be zero).
    pub fn rotate_and_sum(&self, ct: &Ciphertext, k: usize, keys: &EvalKeys) -> Result<Ciphertext, CkksError> {
        if k > self.slot_count() {
            return Err(CkksError::TooManySlots {
                given: k,
                capacity: self.slot_count(),
            });
        }
        let width = k.max(1).next_power_of_two();
        let mut acc = ct.clone();
        let mut step = 1;
        while step < width {
            let rotated = self.rotate_single(&acc, step, keys)?;
            acc = self.add(&acc, &rotated)?;
            step <<= 1;
        }
        Ok(acc)
    }

    /// Encrypted inner product ⟨a, b⟩ in slot 0: multiply then rotate-and-sum.
    pub fn inner_product(
        &self,
        a: &Ciphertext,
        b: &Ciphertext,
        k: usize,
        keys: &EvalKeys,
    ) -> Result<Ciphertext, CkksError> {
        let prod = self.mul(a, b, keys)?;
        self.rotate_and_sum(&prod, k, keys)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::OnceLock;

    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::ckks::{CkksParams, KeySet};

    fn fixture() -> &'static (CkksContext, KeySet) {
        static CELL: OnceLock<(CkksContext, KeySet)> = OnceLock::new();
        CELL.get_or_init(|| {
            let ctx = CkksContext::new(CkksParams::desk_scale_with_degree(1024)).unwrap();
            let keys = ctx.keygen(3);
            (ctx, keys)
        })
    }

    fn encrypt(values: &[f64], seed: u64) -> Ciphertext {
        let (ctx, keys) = fixture();
        let pt = ctx.encode(values, ctx.max_level()).unwrap();
        ctx.encrypt(&keys.public_key, &pt, &mut ChaCha20Rng::seed_from_u64(seed))
    }

    fn decrypt_all(ct: &Ciphertext) -> Vec<f64> {
        let (ctx, keys) = fixture();
        ctx.decode_all(&ctx.decrypt(&keys.secret_key, ct).unwrap())
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn padded(values: &[f64]) -> Vec<f64> {
        let mut v = values.to_vec();
        v.resize(fixture().0.slot_count(), 0.0);
        v
    }

    #[test]
    fn encode_decode_roundtrip() {
        let (ctx, _) = fixture();
        let pt = ctx.encode(&[1.0, -1.0], 2).unwrap();
        let back = ctx.decode_all(&pt);
        assert!(max_diff(&back, &padded(&[1.0, -1.0])) < 1e-6);
        assert_eq!(ctx.decode(&pt).len(), 2);
    }

    #[test]
    fn zero_vector_encodes_exactly() {
        let (ctx, _) = fixture();
        let pt = ctx.encode(&[0.0; 16], 2).unwrap();
        assert!(ctx.decode_all(&pt).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn overflow_is_rejected_at_single_prime() {
        let (ctx, _) = fixture();
        // Level 0 holds only the 60-bit prime: 10^6 · 2^40 > 2^59.
        let err = ctx.encode(&[1e6], 0).unwrap_err();
        assert!(matches!(err, CkksError::Overflow { .. }));
        assert!(ctx.encode(&[1e6], 2).is_ok());
    }

    #[test]
    fn too_many_values_rejected() {
        let (ctx, _) = fixture();
        let v = vec![0.0; ctx.slot_count() + 1];
        assert!(matches!(ctx.encode(&v, 2), Err(CkksError::TooManySlots { .. })));
    }

    #[test]
    fn plaintext_rescale_divides_scale() {
        let (ctx, _) = fixture();
        let v = [0.5, -0.25, 3.0];
        let log_scale = ctx.params().scale_log2 + (ctx.modulus(2).value() as f64).log2();
        let pt = ctx.encode_at_scale(&v, 2, log_scale).unwrap();
        let r = ctx.rescale_plaintext(&pt).unwrap();
        assert_eq!(r.level(), 1);
        assert!((r.scale_log2() - ctx.params().scale_log2).abs() < 1e-9);
        assert!(max_diff(&ctx.decode(&r), &v) < 1e-9);
    }

    #[test]
    fn encryptions_are_randomized() {
        let (ctx, _) = fixture();
        let a = encrypt(&[1.0, 2.0], 1);
        let b = encrypt(&[1.0, 2.0], 2);
        assert_ne!(ctx.serialize_ciphertext(&a), ctx.serialize_ciphertext(&b));
        assert!(max_diff(&decrypt_all(&a), &decrypt_all(&b)) < 2.0 * a.noise().unwrap().error);
    }

    #[test]
    fn add_inverse_and_identity() {
        let (ctx, _) = fixture();
        let v = [1.5, -2.0, 0.25];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let sum = ctx.add(&encrypt(&v, 1), &encrypt(&neg, 2)).unwrap();
        assert!(decrypt_all(&sum).iter().all(|x| x.abs() < sum.noise().unwrap().error));
        let ident = ctx.add(&encrypt(&v, 3), &encrypt(&[], 4)).unwrap();
        assert!(max_diff(&decrypt_all(&ident), &padded(&v)) < 1e-6);
    }

    #[test]
    fn add_rejects_mismatched_levels() {
        let (ctx, keys) = fixture();
        let a = encrypt(&[1.0], 1);
        let b = ctx.mul(&a, &a, &keys.eval_keys).unwrap();
        assert!(matches!(ctx.add(&a, &b), Err(CkksError::LevelMismatch { .. })));
    }

    #[test]
    fn mul_identity_and_annihilator() {
        let (ctx, keys) = fixture();
        let v: Vec<f64> = (0..20).map(|i| i as f64 * 0.3 - 3.0).collect();
        let ones = vec![1.0; ctx.slot_count()];
        let prod = ctx.mul(&encrypt(&v, 1), &encrypt(&ones, 2), &keys.eval_keys).unwrap();
        assert_eq!(prod.part_count(), 2);
        assert_eq!(prod.level(), 1);
        assert!((prod.scale_log2() - 40.0).abs() < 0.01);
        assert!(max_diff(&decrypt_all(&prod), &padded(&v)) < prod.noise().unwrap().error);
        let zero = ctx.mul(&encrypt(&v, 3), &encrypt(&[], 4), &keys.eval_keys).unwrap();
        assert!(decrypt_all(&zero).iter().all(|x| x.abs() < zero.noise().unwrap().error));
    }

    #[test]
    fn second_multiply_exhausts_depth() {
        let (ctx, keys) = fixture();
        let a = encrypt(&[1.0], 1);
        let b = ctx.mul(&a, &a, &keys.eval_keys).unwrap();
        let c = ctx.mul(&b, &b, &keys.eval_keys).unwrap();
        assert_eq!(c.level(), 0);
        assert_eq!(ctx.mul(&c, &c, &keys.eval_keys), Err(CkksError::DepthExhausted));
    }

    #[test]
    fn rotation_is_cyclic_left_shift() {
        let (ctx, keys) = fixture();
        let ct = encrypt(&[1.0, 2.0, 3.0, 4.0], 5);
        let rot = ctx.rotate(&ct, 1, &keys.eval_keys).unwrap();
        let mut expected = padded(&[1.0, 2.0, 3.0, 4.0]);
        expected.rotate_left(1);
        assert!(max_diff(&decrypt_all(&rot), &expected) < 1e-5);

        let mut expected = padded(&[1.0, 2.0, 3.0, 4.0]);
        expected.rotate_left(ctx.slot_count() - 1);
        let back = ctx.rotate(&ct, ctx.slot_count() - 1, &keys.eval_keys).unwrap();
        assert!(max_diff(&decrypt_all(&back), &expected) < 1e-5);
    }

    #[test]
    fn rotation_by_zero_and_full_cycle() {
        let (ctx, keys) = fixture();
        let ct = encrypt(&[1.0, 2.0, 3.0], 6);
        assert_eq!(ctx.rotate(&ct, 0, &keys.eval_keys).unwrap(), ct);
        assert_eq!(ctx.rotate(&ct, ctx.slot_count(), &keys.eval_keys).unwrap(), ct);
    }

    #[test]
    fn missing_galois_key_is_reported() {
        let (ctx, keys) = fixture();
        let partial = keys.eval_keys.clone().without_rotation(4);
        let ct = encrypt(&[1.0], 7);
        assert_eq!(ctx.rotate(&ct, 4, &partial), Err(CkksError::MissingGaloisKey(4)));
        assert_eq!(
            ctx.rotate_and_sum(&ct, 16, &partial),
            Err(CkksError::MissingGaloisKey(4))
        );
        assert!(ctx.rotate(&ct, 3, &partial).is_ok());
    }

    #[test]
    fn rotate_and_sum_counts() {
        let (ctx, keys) = fixture();
        let ct = encrypt(&[1.0; 4], 8);
        let s = ctx.rotate_and_sum(&ct, 4, &keys.eval_keys).unwrap();
        assert!((decrypt_all(&s)[0] - 4.0).abs() < 1e-5);
        let z = ctx.rotate_and_sum(&encrypt(&[], 9), 4, &keys.eval_keys).unwrap();
        assert!(decrypt_all(&z)[0].abs() < 1e-5);
    }

    #[test]
    fn noise_budget_never_shrinks() {
        let (ctx, keys) = fixture();
        let a = encrypt(&[1.0, 2.0], 10);
        let b = encrypt(&[3.0, -1.0], 11);
        let ea = a.noise().unwrap().error;
        let sum = ctx.add(&a, &b).unwrap();
        assert!(sum.noise().unwrap().error >= ea);
        let rot = ctx.rotate(&a, 1, &keys.eval_keys).unwrap();
        assert!(rot.noise().unwrap().error >= ea);
        let prod = ctx.mul(&a, &b, &keys.eval_keys).unwrap();
        assert!(prod.noise().unwrap().error >= ea);
    }

    #[test]
    fn mask_keeps_selected_slots_and_scale() {
        let (ctx, keys) = fixture();
        let a = encrypt(&[1.5, -2.0, 3.0, 0.25], 12);
        let prod = ctx.mul(&a, &a, &keys.eval_keys).unwrap();
        let masked = ctx.mask(&prod, &[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(masked.level(), prod.level() - 1);
        assert!((masked.scale_log2() - prod.scale_log2()).abs() < 1e-12);
        let out = decrypt_all(&masked);
        let want = [2.25, 0.0, 9.0, 0.0];
        for (o, w) in out.iter().zip(want) {
            assert!((o - w).abs() < 1e-4, "{o} vs {w}");
        }
        assert!(out[4..].iter().all(|v| v.abs() < 1e-4));
        assert!(out
            .iter()
            .zip(want.iter().chain(std::iter::repeat(&0.0)))
            .all(|(o, w)| (o - w).abs() <= masked.noise().unwrap().error));
        assert_eq!(ctx.mask(&masked, &[1.0]), Err(CkksError::DepthExhausted));
    }
}
