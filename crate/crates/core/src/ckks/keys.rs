use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::context::{CkksContext, RnsPoly};
use super::sampling::{centered_binomial, ternary_fixed_weight};
use super::CkksError;

/// Ternary secret s with coefficients in {-1, 0, 1}.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey {
    pub(crate) coeffs: Vec<i64>,
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

impl SecretKey {
    pub fn hamming_weight(&self) -> usize {
        self.coeffs.iter().filter(|&&c| c != 0).count()
    }
}

/// RLWE public key (b, a) with b = -a·s + e, NTT form over the full chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    pub(crate) b: RnsPoly,
    pub(crate) a: RnsPoly,
}

/// Key-switching key: one (b, a) pair per gadget digit, NTT form over the
/// key basis (chain primes then the special prime).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeySwitchKey {
    pub(crate) digits: Vec<(RnsPoly, RnsPoly)>,
}

/// Everything the broker needs to evaluate the inner-product circuit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalKeys {
    pub(crate) relin: KeySwitchKey,
    /// Left-rotation step → key.
    pub(crate) galois: BTreeMap<usize, KeySwitchKey>,
}

impl EvalKeys {
    pub fn rotation_steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.galois.keys().copied()
    }

    pub fn has_rotation(&self, step: usize) -> bool {
        self.galois.contains_key(&step)
    }

    /// Drops the key for one rotation step; used to exercise missing-key paths.
    pub fn without_rotation(mut self, step: usize) -> Self {
        self.galois.remove(&step);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeySet {
    pub public_key: PublicKey,
    pub secret_key: SecretKey,
    pub eval_keys: EvalKeys,
}

impl CkksContext {
    /// Deterministic key generation. Galois keys cover every power-of-two
    /// step 1, 2, ..., N/4.
    pub fn keygen(&self, seed: u64) -> KeySet {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n = self.n();
        let s = ternary_fixed_weight(&mut rng, n, n / 2);
        let secret_key = SecretKey { coeffs: s };

        let s_key = self.ntt_key_basis(&secret_key.coeffs);
        let public_key = self.public_key_from(&mut rng, &s_key);

        // s² in the key basis.
        let s_sq = RnsPoly {
            rows: s_key
                .rows
                .iter()
                .enumerate()
                .map(|(r, row)| {
                    let m = self.key_modulus(r);
                    row.iter().map(|&x| m.mul(x, x)).collect()
                })
                .collect(),
        };
        let relin = self.key_switch_key(&mut rng, &s_key, &s_sq);

        let mut galois = BTreeMap::new();
        let mut step = 1;
        while step <= n / 4 {
            let g = self.galois_element(step);
            let rotated = self.automorphism_signed(&secret_key.coeffs, g);
            let target = self.ntt_key_basis(&rotated);
            galois.insert(step, self.key_switch_key(&mut rng, &s_key, &target));
            step *= 2;
        }

        KeySet {
            public_key,
            secret_key,
            eval_keys: EvalKeys { relin, galois },
        }
    }

    fn ntt_key_basis(&self, coeffs: &[i64]) -> RnsPoly {
        let mut p = self.lift_signed_key_basis(coeffs);
        for (r, row) in p.rows.iter_mut().enumerate() {
            self.key_ntt(r).forward(row);
        }
        p
    }

    fn uniform_key_basis<R: Rng>(&self, rng: &mut R, rows: usize) -> RnsPoly {
        let n = self.n();
        RnsPoly {
            rows: (0..rows)
                .map(|r| {
                    let q = self.key_modulus(r).value();
                    (0..n).map(|_| rng.random_range(0..q)).collect()
                })
                .collect(),
        }
    }

    fn error_key_basis<R: Rng>(&self, rng: &mut R) -> RnsPoly {
        let e = centered_binomial(rng, self.n(), self.params().noise_stddev);
        self.ntt_key_basis(&e)
    }

    fn public_key_from<R: Rng>(&self, rng: &mut R, s_key: &RnsPoly) -> PublicKey {
        let chain = self.key_rows() - 1;
        let a = self.uniform_key_basis(rng, chain);
        let e = self.error_key_basis(rng);
        let b = RnsPoly {
            rows: (0..chain)
                .map(|r| {
                    let m = self.key_modulus(r);
                    a.rows[r]
                        .iter()
                        .zip(&s_key.rows[r])
                        .zip(&e.rows[r])
                        .map(|((&a, &s), &e)| m.sub(e, m.mul(a, s)))
                        .collect()
                })
                .collect(),
        };
        PublicKey { b, a }
    }

    /// Encrypts `target` (NTT form, key basis) under `s_key` for every gadget
    /// digit: b_(j,t) = -a·s + e + P·2^(w·t)·target in chain row j.
    fn key_switch_key<R: Rng>(&self, rng: &mut R, s_key: &RnsPoly, target: &RnsPoly) -> KeySwitchKey {
        let rows = self.key_rows();
        let w = self.params().decomposition_log_base;
        let mut digits = Vec::with_capacity(self.total_digits());
        for (j, &count) in self.digits().iter().enumerate() {
            for t in 0..count {
                let a = self.uniform_key_basis(rng, rows);
                let e = self.error_key_basis(rng);
                let mut b = RnsPoly {
                    rows: (0..rows)
                        .map(|r| {
                            let m = self.key_modulus(r);
                            a.rows[r]
                                .iter()
                                .zip(&s_key.rows[r])
                                .zip(&e.rows[r])
                                .map(|((&a, &s), &e)| m.sub(e, m.mul(a, s)))
                                .collect()
                        })
                        .collect(),
                };
                let m = self.key_modulus(j);
                let gadget = m.mul(self.p_mod_q(j), m.pow(2, (w as u64) * t as u64));
                for (x, &y) in b.rows[j].iter_mut().zip(&target.rows[j]) {
                    *x = m.add(*x, m.mul(gadget, y));
                }
                digits.push((b, a));
            }
        }
        KeySwitchKey { digits }
    }
}

/// Builds a context for `params` and generates keys from `seed`.
pub fn keygen(params: &super::CkksParams, seed: u64) -> Result<KeySet, CkksError> {
    let ctx = CkksContext::new(params.clone())?;
    Ok(ctx.keygen(seed))
}
