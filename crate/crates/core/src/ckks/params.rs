use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::modulus::{is_prime, ntt_primes};
use super::CkksError;

/// Whether a parameter set has had any security analysis at all.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SecurityLabel {
    /// Sized for desk experiments. Not a production security level.
    DeskScale,
    Calibrated,
}

/// Ring, modulus chain and noise parameters.
///
/// `modulus_chain[0]` is the base prime that survives every rescale; the
/// last entry is dropped first. `special_modulus` is used only inside key
/// switching and never carries a message.
#[derive(Clone, Debug, PartialEq)]
pub struct CkksParams {
    pub ring_degree: usize,
    pub modulus_chain: Vec<u64>,
    pub special_modulus: u64,
    pub scale_log2: f64,
    pub noise_stddev: f64,
    pub decomposition_log_base: u32,
    pub security_label: SecurityLabel,
}

/// On-disk JSON shape. Moduli are decimal strings so that 60-bit values
/// survive JavaScript-style number handling.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    ring_degree: usize,
    moduli: Vec<String>,
    special_modulus: String,
    scale_log2: f64,
    sigma: f64,
    decomp_log_base: u32,
    security_label: SecurityLabel,
}

impl CkksParams {
    /// N = 8192, a 60-bit base prime, two 41-bit rescale primes just above
    /// 2^40, a 60-bit key-switching prime, Δ = 2^40, σ = 3.2, w = 16.
    pub fn desk_scale() -> Self {
        Self::desk_scale_with_degree(8192)
    }

    /// Same layout as [`CkksParams::desk_scale`] at a different ring degree.
    pub fn desk_scale_with_degree(ring_degree: usize) -> Self {
        let big = ntt_primes(60, 2, ring_degree, &[]);
        let small = ntt_primes(41, 2, ring_degree, &[]);
        Self {
            ring_degree,
            modulus_chain: vec![big[0], small[0], small[1]],
            special_modulus: big[1],
            scale_log2: 40.0,
            noise_stddev: 3.2,
            decomposition_log_base: 16,
            security_label: SecurityLabel::DeskScale,
        }
    }

    pub fn slot_count(&self) -> usize {
        self.ring_degree / 2
    }

    pub fn max_level(&self) -> usize {
        self.modulus_chain.len() - 1
    }

    pub fn scale(&self) -> f64 {
        self.scale_log2.exp2()
    }

    pub fn validate(&self) -> Result<(), CkksError> {
        let invalid = |msg: String| Err(CkksError::InvalidParams(msg));
        let n = self.ring_degree;
        if !n.is_power_of_two() || n < 1024 {
            return invalid(format!("ring degree {n} must be a power of two >= 1024"));
        }
        if self.modulus_chain.len() < 2 {
            return invalid("modulus chain needs at least two primes".into());
        }
        let two_n = 2 * n as u64;
        let mut seen = Vec::new();
        for &q in self.modulus_chain.iter().chain(std::iter::once(&self.special_modulus)) {
            if q >= 1 << 61 {
                return invalid(format!("modulus {q} exceeds 61 bits"));
            }
            if !is_prime(q) {
                return invalid(format!("modulus {q} is not prime"));
            }
            if q % two_n != 1 {
                return invalid(format!("modulus {q} is not 1 mod 2N = {two_n}"));
            }
            if seen.contains(&q) {
                return invalid(format!("modulus {q} repeated"));
            }
            seen.push(q);
        }
        if self.scale_log2.is_nan() || self.scale_log2 <= 0.0 {
            return invalid("scale must be positive".into());
        }
        for &q in &self.modulus_chain {
            if self.scale() > q as f64 {
                return invalid(format!("scale 2^{} exceeds modulus {q}", self.scale_log2));
            }
        }
        if self.noise_stddev.is_nan() || self.noise_stddev <= 0.0 {
            return invalid("noise standard deviation must be positive".into());
        }
        if self.decomposition_log_base == 0 || self.decomposition_log_base > 61 {
            return invalid("decomposition log base must be in 1..=61".into());
        }
        Ok(())
    }

    /// SHA-256 over a canonical little-endian encoding.
    pub fn hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"tip-ckks-params/1");
        h.update((self.ring_degree as u64).to_le_bytes());
        h.update((self.modulus_chain.len() as u32).to_le_bytes());
        for q in &self.modulus_chain {
            h.update(q.to_le_bytes());
        }
        h.update(self.special_modulus.to_le_bytes());
        h.update(self.scale_log2.to_bits().to_le_bytes());
        h.update(self.noise_stddev.to_bits().to_le_bytes());
        h.update(self.decomposition_log_base.to_le_bytes());
        h.update([match self.security_label {
            SecurityLabel::DeskScale => 0u8,
            SecurityLabel::Calibrated => 1,
        }]);
        h.finalize().into()
    }

    pub fn from_json(text: &str) -> Result<Self, CkksError> {
        let file: ParamsFile = serde_json::from_str(text).map_err(|e| CkksError::InvalidParams(e.to_string()))?;
        let parse = |s: &String| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| CkksError::InvalidParams(format!("modulus {s:?}: {e}")))
        };
        let params = Self {
            ring_degree: file.ring_degree,
            modulus_chain: file.moduli.iter().map(parse).collect::<Result<_, _>>()?,
            special_modulus: parse(&file.special_modulus)?,
            scale_log2: file.scale_log2,
            noise_stddev: file.sigma,
            decomposition_log_base: file.decomp_log_base,
            security_label: file.security_label,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        let file = ParamsFile {
            ring_degree: self.ring_degree,
            moduli: self.modulus_chain.iter().map(u64::to_string).collect(),
            special_modulus: self.special_modulus.to_string(),
            scale_log2: self.scale_log2,
            sigma: self.noise_stddev,
            decomp_log_base: self.decomposition_log_base,
            security_label: self.security_label,
        };
        serde_json::to_string_pretty(&file).expect("params serialize")
    }
}
