//! Secret, ephemeral and error distributions. All samplers draw from a
//! caller-supplied RNG so that seeded runs are reproducible.

use rand::Rng;

/// Ternary polynomial with exactly `weight` nonzero coefficients.
pub fn ternary_fixed_weight<R: Rng + ?Sized>(rng: &mut R, n: usize, weight: usize) -> Vec<i64> {
    assert!(weight <= n);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut out = vec![0i64; n];
    for i in 0..weight {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
        out[idx[i]] = if rng.random::<bool>() { 1 } else { -1 };
    }
    out
}

/// Ternary polynomial with P(±1) = 1/4 each, P(0) = 1/2.
pub fn ternary_zo<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<i64> {
    (0..n)
        .map(|_| match rng.random_range(0..4u8) {
            0 => -1,
            1 => 1,
            _ => 0,
        })
        .collect()
}

/// Centered binomial sample with parameter η = round(2σ²), variance η/2.
pub fn centered_binomial<R: Rng + ?Sized>(rng: &mut R, n: usize, sigma: f64) -> Vec<i64> {
    let eta = (2.0 * sigma * sigma).round().max(1.0) as u32;
    assert!(eta <= 64);
    let mask = if eta == 64 { u64::MAX } else { (1u64 << eta) - 1 };
    (0..n)
        .map(|_| {
            let a = (rng.random::<u64>() & mask).count_ones() as i64;
            let b = (rng.random::<u64>() & mask).count_ones() as i64;
            a - b
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn fixed_weight_has_exact_weight() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let s = ternary_fixed_weight(&mut rng, 1024, 512);
        assert_eq!(s.iter().filter(|&&c| c != 0).count(), 512);
        assert!(s.iter().all(|c| (-1..=1).contains(c)));
    }

    #[test]
    fn binomial_variance_tracks_sigma() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let e = centered_binomial(&mut rng, 200_000, 3.2);
        let mean = e.iter().sum::<i64>() as f64 / e.len() as f64;
        let var = e.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / e.len() as f64;
        assert!(mean.abs() < 0.05);
        // η = 20 gives variance 10 ≈ 3.2².
        assert!((var - 10.0).abs() < 0.2, "variance {var}");
    }
}
