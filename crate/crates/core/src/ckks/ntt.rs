//! Negacyclic number-theoretic transform over `Z_q[X]/(X^N + 1)`.
//!
//! Forward transform is Cooley-Tukey with bit-reversed powers of a primitive
//! 2N-th root ψ; the inverse is Gentleman-Sande. The evaluation order of the
//! forward output is bit-reversed, which is fine because the only consumer is
//! pointwise multiplication.

use super::modulus::Modulus;

#[derive(Clone, Debug)]
pub struct NttTable {
    modulus: Modulus,
    n: usize,
    psi_rev: Vec<u64>,
    psi_rev_shoup: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    psi_inv_rev_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

fn bit_reverse(mut x: usize, bits: u32) -> usize {
    let mut r = 0;
    for _ in 0..bits {
        r = (r << 1) | (x & 1);
        x >>= 1;
    }
    r
}

/// Smallest primitive 2n-th root of unity found by scanning generators from 2.
pub fn primitive_root_2n(modulus: &Modulus, n: usize) -> Option<u64> {
    let q = modulus.value();
    let order = 2 * n as u64;
    if !(q - 1).is_multiple_of(order) {
        return None;
    }
    let cofactor = (q - 1) / order;
    (2..q.min(1 << 20))
        .map(|g| modulus.pow(g, cofactor))
        .find(|&psi| modulus.pow(psi, n as u64) == q - 1)
}

impl NttTable {
    /// Returns `None` when q is not ≡ 1 (mod 2n).
    pub fn new(modulus: Modulus, n: usize) -> Option<Self> {
        assert!(n.is_power_of_two());
        let psi = primitive_root_2n(&modulus, n)?;
        let psi_inv = modulus.inv(psi);
        let log_n = n.trailing_zeros();

        let mut psi_rev = vec![0u64; n];
        let mut psi_inv_rev = vec![0u64; n];
        let mut pw = 1u64;
        let mut pw_inv = 1u64;
        for i in 0..n {
            let r = bit_reverse(i, log_n);
            psi_rev[r] = pw;
            psi_inv_rev[r] = pw_inv;
            pw = modulus.mul(pw, psi);
            pw_inv = modulus.mul(pw_inv, psi_inv);
        }
        let psi_rev_shoup = psi_rev.iter().map(|&w| modulus.shoup(w)).collect();
        let psi_inv_rev_shoup = psi_inv_rev.iter().map(|&w| modulus.shoup(w)).collect();
        let n_inv = modulus.inv(n as u64);
        Some(Self {
            modulus,
            n,
            psi_rev,
            psi_rev_shoup,
            psi_inv_rev,
            psi_inv_rev_shoup,
            n_inv,
            n_inv_shoup: modulus.shoup(n_inv),
        })
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let m = self.modulus;
        let q = m.value();
        let mut t = self.n;
        let mut groups = 1;
        while groups < self.n {
            t >>= 1;
            let tw = &self.psi_rev[groups..2 * groups];
            let tws = &self.psi_rev_shoup[groups..2 * groups];
            for ((block, &w), &ws) in a.chunks_exact_mut(2 * t).zip(tw).zip(tws) {
                let (lo, hi) = block.split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = m.mul_shoup(*y, w, ws);
                    let s = u + v;
                    *x = s.min(s.wrapping_sub(q));
                    let d = u.wrapping_sub(v);
                    *y = d.min(d.wrapping_add(q));
                }
            }
            groups <<= 1;
        }
    }

    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let m = self.modulus;
        let q = m.value();
        let mut t = 1;
        let mut groups = self.n >> 1;
        while groups >= 1 {
            let tw = &self.psi_inv_rev[groups..2 * groups];
            let tws = &self.psi_inv_rev_shoup[groups..2 * groups];
            for ((block, &w), &ws) in a.chunks_exact_mut(2 * t).zip(tw).zip(tws) {
                let (lo, hi) = block.split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = *y;
                    let s = u + v;
                    *x = s.min(s.wrapping_sub(q));
                    let d = u.wrapping_sub(v);
                    let d = d.min(d.wrapping_add(q));
                    *y = m.mul_shoup(d, w, ws);
                }
            }
            t <<= 1;
            groups >>= 1;
        }
        for x in a.iter_mut() {
            *x = m.mul_shoup(*x, self.n_inv, self.n_inv_shoup);
        }
    }

    /// Negacyclic product through the transform.
    pub fn multiply(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        let mut fa = a.to_vec();
        let mut fb = b.to_vec();
        self.forward(&mut fa);
        self.forward(&mut fb);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x = self.modulus.mul(*x, *y);
        }
        self.inverse(&mut fa);
        fa
    }
}

/// Schoolbook negacyclic multiplication, O(N²). Kept as an independent oracle
/// for the transform path.
pub fn schoolbook_negacyclic(a: &[u64], b: &[u64], modulus: &Modulus) -> Vec<u64> {
    let n = a.len();
    let mut out = vec![0u64; n];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            let p = modulus.mul(ai, bj);
            let k = i + j;
            if k < n {
                out[k] = modulus.add(out[k], p);
            } else {
                out[k - n] = modulus.sub(out[k - n], p);
            }
        }
    }
    out
}
