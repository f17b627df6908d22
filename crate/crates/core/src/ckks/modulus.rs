//! Word-sized prime moduli with Barrett and Shoup reduction.

/// A prime modulus `q < 2^61` with precomputed Barrett constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    /// floor(2^128 / q), low and high words.
    ratio: (u64, u64),
}

impl Modulus {
    pub fn new(value: u64) -> Self {
        assert!(value > 1 && value < (1 << 61), "modulus out of range");
        let ratio = u128::MAX / value as u128;
        // u128::MAX / q == floor(2^128 / q) unless q divides 2^128, impossible for odd q > 1.
        Self {
            value,
            ratio: (ratio as u64, (ratio >> 64) as u64),
        }
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn bits(&self) -> u32 {
        64 - self.value.leading_zeros()
    }

    /// Reduces a 128-bit value modulo q.
    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let x0 = x as u64;
        let x1 = (x >> 64) as u64;
        let (r0, r1) = self.ratio;

        let carry = ((x0 as u128 * r0 as u128) >> 64) as u64;
        let t = x0 as u128 * r1 as u128;
        let (t_lo, c1) = (t as u64).overflowing_add(carry);
        let t_hi = ((t >> 64) as u64).wrapping_add(c1 as u64);

        let u = x1 as u128 * r0 as u128;
        let (_, c2) = t_lo.overflowing_add(u as u64);
        let carry2 = ((u >> 64) as u64).wrapping_add(c2 as u64);

        let quot = x1.wrapping_mul(r1).wrapping_add(t_hi).wrapping_add(carry2);
        let r = x0.wrapping_sub(quot.wrapping_mul(self.value));
        r.min(r.wrapping_sub(self.value))
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        if x >= self.value {
            x % self.value
        } else {
            x
        }
    }

    /// Reduces a signed value into `[0, q)`.
    #[inline]
    pub fn reduce_i64(&self, x: i64) -> u64 {
        let r = x.rem_euclid(self.value as i64);
        r as u64
    }

    #[inline]
    pub fn reduce_i128(&self, x: i128) -> u64 {
        x.rem_euclid(self.value as i128) as u64
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        s.min(s.wrapping_sub(self.value))
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        let d = a.wrapping_sub(b);
        d.min(d.wrapping_add(self.value))
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    /// Shoup companion of a constant `w < q`: floor(w * 2^64 / q).
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    /// `a * w mod q` given the Shoup companion of `w`.
    #[inline]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(self.value));
        r.min(r.wrapping_sub(self.value))
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        base = self.reduce(base);
        let mut acc = 1u64;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; `a` must be nonzero mod a prime q.
    pub fn inv(&self, a: u64) -> u64 {
        let a = self.reduce(a);
        assert!(a != 0, "zero has no inverse");
        self.pow(a, self.value - 2)
    }

    /// Maps a residue to its centered representative in `(-q/2, q/2]`.
    #[inline]
    pub fn center(&self, a: u64) -> i64 {
        if a > self.value / 2 {
            a as i64 - self.value as i64
        } else {
            a as i64
        }
    }
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in SMALL {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        b %= n;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        acc
    };
    'witness: for a in SMALL {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Finds `count` distinct primes `q ≡ 1 (mod 2n)` with exactly `bits` bits,
/// scanning upward from `2^(bits-1)`, skipping anything in `exclude`.
pub fn ntt_primes(bits: u32, count: usize, ring_degree: usize, exclude: &[u64]) -> Vec<u64> {
    let step = 2 * ring_degree as u64;
    let lo = 1u64 << (bits - 1);
    let hi = if bits == 64 { u64::MAX } else { 1u64 << bits };
    let mut out = Vec::with_capacity(count);
    let mut candidate = (lo / step + 1) * step + 1;
    while out.len() < count && candidate < hi {
        if is_prime(candidate) && !exclude.contains(&candidate) {
            out.push(candidate);
        }
        candidate += step;
    }
    assert_eq!(out.len(), count, "not enough NTT-friendly primes");
    out
}
