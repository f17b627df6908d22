use super::encoding::Encoder;
use super::modulus::Modulus;
use super::ntt::NttTable;
use super::params::CkksParams;
use super::CkksError;

/// One polynomial in RNS form: `rows[i]` holds the coefficients (or NTT
/// evaluations) modulo the i-th modulus of whatever basis the owner uses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RnsPoly {
    pub rows: Vec<Vec<u64>>,
}

impl RnsPoly {
    pub fn zero(rows: usize, n: usize) -> Self {
        Self {
            rows: vec![vec![0u64; n]; rows],
        }
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }
}

/// Precomputed tables for one parameter set. Immutable and `Sync`; share it
/// behind an `Arc` across threads.
///
/// Basis convention for key material: rows `0..=L` are the modulus chain and
/// row `L + 1` is the special key-switching prime.
#[derive(Debug)]
pub struct CkksContext {
    params: CkksParams,
    hash: [u8; 32],
    moduli: Vec<Modulus>,
    special: Modulus,
    ntt: Vec<NttTable>,
    special_ntt: NttTable,
    pub(crate) encoder: Encoder,
    /// `rescale_inv[l][i]` = q_l^{-1} mod q_i for i < l.
    rescale_inv: Vec<Vec<u64>>,
    p_mod_q: Vec<u64>,
    p_inv_mod_q: Vec<u64>,
    /// Base-2^w digits per chain prime.
    digits: Vec<usize>,
    /// Number of leading chain primes whose product fits comfortably in i128.
    crt_len: usize,
}

impl CkksContext {
    pub fn new(params: CkksParams) -> Result<Self, CkksError> {
        params.validate()?;
        let n = params.ring_degree;
        let moduli: Vec<Modulus> = params.modulus_chain.iter().map(|&q| Modulus::new(q)).collect();
        let special = Modulus::new(params.special_modulus);
        let ntt = moduli
            .iter()
            .map(|&m| {
                NttTable::new(m, n)
                    .ok_or_else(|| CkksError::InvalidParams(format!("no 2N-th root of unity mod {}", m.value())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let special_ntt = NttTable::new(special, n)
            .ok_or_else(|| CkksError::InvalidParams("special modulus is not NTT-friendly".into()))?;

        let rescale_inv = (0..moduli.len())
            .map(|l| (0..l).map(|i| moduli[i].inv(moduli[l].value())).collect())
            .collect();
        let p = params.special_modulus;
        let p_mod_q = moduli.iter().map(|m| m.reduce(p)).collect();
        let p_inv_mod_q = moduli.iter().map(|m| m.inv(p)).collect();
        let w = params.decomposition_log_base;
        let digits = moduli.iter().map(|m| m.bits().div_ceil(w) as usize).collect();

        let mut crt_len = 0;
        let mut bits = 0;
        for m in &moduli {
            if bits + m.bits() > 125 {
                break;
            }
            bits += m.bits();
            crt_len += 1;
        }

        Ok(Self {
            hash: params.hash(),
            encoder: Encoder::new(n),
            params,
            moduli,
            special,
            ntt,
            special_ntt,
            rescale_inv,
            p_mod_q,
            p_inv_mod_q,
            digits,
            crt_len,
        })
    }

    pub fn params(&self) -> &CkksParams {
        &self.params
    }

    pub fn params_hash(&self) -> &[u8; 32] {
        &self.hash
    }

    pub fn n(&self) -> usize {
        self.params.ring_degree
    }

    pub fn slot_count(&self) -> usize {
        self.params.ring_degree / 2
    }

    pub fn max_level(&self) -> usize {
        self.moduli.len() - 1
    }

    pub(crate) fn modulus(&self, i: usize) -> &Modulus {
        &self.moduli[i]
    }

    /// Modulus of key-basis row `row` (chain, then special).
    pub(crate) fn key_modulus(&self, row: usize) -> &Modulus {
        if row < self.moduli.len() {
            &self.moduli[row]
        } else {
            &self.special
        }
    }

    pub(crate) fn key_ntt(&self, row: usize) -> &NttTable {
        if row < self.ntt.len() {
            &self.ntt[row]
        } else {
            &self.special_ntt
        }
    }

    pub(crate) fn key_rows(&self) -> usize {
        self.moduli.len() + 1
    }

    pub(crate) fn digits(&self) -> &[usize] {
        &self.digits
    }

    pub(crate) fn total_digits(&self) -> usize {
        self.digits.iter().sum()
    }

    /// Largest |coefficient| that decoding can recover at `level`.
    pub(crate) fn decodable_bound(&self, level: usize) -> f64 {
        let rows = (level + 1).min(self.crt_len.max(1));
        let product: f64 = self.moduli[..rows].iter().map(|m| m.value() as f64).product();
        product / 2.0
    }

    // ----- polynomial helpers (rows map to chain primes 0..rows) -----

    pub(crate) fn lift_signed(&self, coeffs: &[i64], rows: usize) -> RnsPoly {
        RnsPoly {
            rows: (0..rows)
                .map(|i| {
                    let m = &self.moduli[i];
                    coeffs.iter().map(|&c| m.reduce_i64(c)).collect()
                })
                .collect(),
        }
    }

    /// Lifts signed coefficients into the full key basis (chain + special).
    pub(crate) fn lift_signed_key_basis(&self, coeffs: &[i64]) -> RnsPoly {
        RnsPoly {
            rows: (0..self.key_rows())
                .map(|r| {
                    let m = self.key_modulus(r);
                    coeffs.iter().map(|&c| m.reduce_i64(c)).collect()
                })
                .collect(),
        }
    }

    pub(crate) fn to_ntt(&self, p: &mut RnsPoly) {
        for (i, row) in p.rows.iter_mut().enumerate() {
            self.ntt[i].forward(row);
        }
    }

    #[allow(clippy::wrong_self_convention)]
    pub(crate) fn from_ntt(&self, p: &mut RnsPoly) {
        for (i, row) in p.rows.iter_mut().enumerate() {
            self.ntt[i].inverse(row);
        }
    }

    pub(crate) fn add_assign(&self, a: &mut RnsPoly, b: &RnsPoly) {
        for (i, (ra, rb)) in a.rows.iter_mut().zip(&b.rows).enumerate() {
            let m = &self.moduli[i];
            for (x, &y) in ra.iter_mut().zip(rb) {
                *x = m.add(*x, y);
            }
        }
    }

    /// Pointwise product of two NTT-domain polynomials over their common rows.
    pub(crate) fn mul_ntt(&self, a: &RnsPoly, b: &RnsPoly) -> RnsPoly {
        RnsPoly {
            rows: a
                .rows
                .iter()
                .zip(&b.rows)
                .enumerate()
                .map(|(i, (ra, rb))| {
                    let m = &self.moduli[i];
                    ra.iter().zip(rb).map(|(&x, &y)| m.mul(x, y)).collect()
                })
                .collect(),
        }
    }

    /// Pointwise `acc += a * b` over the first `acc.rows.len()` rows.
    pub(crate) fn mul_acc_ntt(&self, acc: &mut RnsPoly, a: &RnsPoly, b: &RnsPoly) {
        for (i, ((racc, ra), rb)) in acc.rows.iter_mut().zip(&a.rows).zip(&b.rows).enumerate() {
            let m = &self.moduli[i];
            for ((z, &x), &y) in racc.iter_mut().zip(ra).zip(rb) {
                *z = m.add(*z, m.mul(x, y));
            }
        }
    }

    /// Divides by the top prime of the level and rounds (CKKS rescale).
    /// Input rows `0..=level` in coefficient form.
    pub(crate) fn rescale_poly(&self, p: &RnsPoly) -> RnsPoly {
        let level = p.rows.len() - 1;
        let top = &self.moduli[level];
        let last = &p.rows[level];
        RnsPoly {
            rows: (0..level)
                .map(|i| {
                    let m = &self.moduli[i];
                    let inv = self.rescale_inv[level][i];
                    let inv_s = m.shoup(inv);
                    p.rows[i]
                        .iter()
                        .zip(last)
                        .map(|(&x, &r)| {
                            let r = m.reduce_i64(top.center(r));
                            m.mul_shoup(m.sub(x, r), inv, inv_s)
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// Galois automorphism X ↦ X^g on coefficient-form rows.
    pub(crate) fn automorphism(&self, p: &RnsPoly, galois: usize) -> RnsPoly {
        let n = self.n();
        let two_n = 2 * n;
        let mut out = RnsPoly::zero(p.rows.len(), n);
        for (i, (src, dst)) in p.rows.iter().zip(out.rows.iter_mut()).enumerate() {
            let m = &self.moduli[i];
            for (t, &c) in src.iter().enumerate() {
                let k = t * galois % two_n;
                if k < n {
                    dst[k] = c;
                } else {
                    dst[k - n] = m.neg(c);
                }
            }
        }
        out
    }

    /// Automorphism on plain signed coefficients.
    pub(crate) fn automorphism_signed(&self, coeffs: &[i64], galois: usize) -> Vec<i64> {
        let n = self.n();
        let mut out = vec![0i64; n];
        for (t, &c) in coeffs.iter().enumerate() {
            let k = t * galois % (2 * n);
            if k < n {
                out[k] = c;
            } else {
                out[k - n] = -c;
            }
        }
        out
    }

    /// Galois element for a left rotation by `steps` slots.
    pub fn galois_element(&self, steps: usize) -> usize {
        let two_n = 2 * self.n() as u64;
        let mut g = 1u64;
        let mut base = 5u64;
        let mut e = steps as u64;
        while e > 0 {
            if e & 1 == 1 {
                g = g * base % two_n;
            }
            base = base * base % two_n;
            e >>= 1;
        }
        g as usize
    }

    /// Key switching with the special prime as auxiliary modulus.
    ///
    /// `c` is a coefficient-form polynomial at `level` (rows 0..=level);
    /// `key_b`/`key_a` are the per-digit NTT-form key rows in the key basis.
    /// Returns `(u0, u1)` at `level` in coefficient form with
    /// `u0 + u1·s ≈ c·s'`.
    pub(crate) fn key_switch(&self, c: &RnsPoly, key: &[(RnsPoly, RnsPoly)]) -> (RnsPoly, RnsPoly) {
        let n = self.n();
        let level = c.rows.len() - 1;
        let special_row = self.key_rows() - 1;
        // Target rows in the key basis: chain 0..=level, then special.
        let targets: Vec<usize> = (0..=level).chain(std::iter::once(special_row)).collect();
        let mut acc0 = vec![vec![0u64; n]; targets.len()];
        let mut acc1 = vec![vec![0u64; n]; targets.len()];
        let w = self.params.decomposition_log_base;
        let mask = if w >= 64 { u64::MAX } else { (1u64 << w) - 1 };

        let mut digit_index = 0;
        let mut scratch = vec![0u64; n];
        for j in 0..self.moduli.len() {
            let count = self.digits[j];
            if j > level {
                digit_index += count;
                continue;
            }
            for t in 0..count {
                let shift = w * t as u32;
                let (kb, ka) = &key[digit_index];
                digit_index += 1;
                for (slot, &row) in targets.iter().enumerate() {
                    let m = self.key_modulus(row);
                    for (d, &x) in scratch.iter_mut().zip(&c.rows[j]) {
                        *d = m.reduce((x >> shift) & mask);
                    }
                    self.key_ntt(row).forward(&mut scratch);
                    let (a0, a1) = (&mut acc0[slot], &mut acc1[slot]);
                    for i in 0..n {
                        let d = scratch[i];
                        a0[i] = m.add(a0[i], m.mul(d, kb.rows[row][i]));
                        a1[i] = m.add(a1[i], m.mul(d, ka.rows[row][i]));
                    }
                }
            }
        }

        for (slot, &row) in targets.iter().enumerate() {
            self.key_ntt(row).inverse(&mut acc0[slot]);
            self.key_ntt(row).inverse(&mut acc1[slot]);
        }
        let mod_down = |acc: &mut Vec<Vec<u64>>| -> RnsPoly {
            let tail = acc.pop().expect("special row");
            RnsPoly {
                rows: acc
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        let m = &self.moduli[i];
                        let inv = self.p_inv_mod_q[i];
                        let inv_s = m.shoup(inv);
                        row.iter()
                            .zip(&tail)
                            .map(|(&x, &r)| {
                                let r = m.reduce_i64(self.special.center(r));
                                m.mul_shoup(m.sub(x, r), inv, inv_s)
                            })
                            .collect()
                    })
                    .collect(),
            }
        };
        let u0 = mod_down(&mut acc0);
        let u1 = mod_down(&mut acc1);
        (u0, u1)
    }

    pub(crate) fn p_mod_q(&self, i: usize) -> u64 {
        self.p_mod_q[i]
    }

    /// Centered integer value of every coefficient, reconstructed by CRT over
    /// the leading primes that fit in i128, as f64.
    pub(crate) fn centered_coeffs(&self, p: &RnsPoly) -> Vec<f64> {
        let rows = p.rows.len().min(self.crt_len.max(1));
        let n = self.n();
        if rows == 1 {
            let m = &self.moduli[0];
            return p.rows[0].iter().map(|&x| m.center(x) as f64).collect();
        }
        // Garner: x = x0 + q0·t1 + q0q1·t2 + ...
        let mut prefix: Vec<u128> = Vec::with_capacity(rows);
        let mut inv_prefix: Vec<u64> = Vec::with_capacity(rows);
        let mut acc: u128 = 1;
        for i in 0..rows {
            prefix.push(acc);
            let m = &self.moduli[i];
            let pm = (acc % m.value() as u128) as u64;
            inv_prefix.push(if i == 0 { 1 } else { m.inv(pm) });
            acc *= self.moduli[i].value() as u128;
        }
        let total = acc;
        let half = total / 2;
        (0..n)
            .map(|k| {
                let mut x: u128 = p.rows[0][k] as u128;
                for i in 1..rows {
                    let m = &self.moduli[i];
                    let xm = (x % m.value() as u128) as u64;
                    let t = m.mul(m.sub(p.rows[i][k], xm), inv_prefix[i]);
                    x += t as u128 * prefix[i];
                }
                if x > half {
                    -((total - x) as f64)
                } else {
                    x as f64
                }
            })
            .collect()
    }
}
