use super::context::RnsPoly;

/// Encoded message: coefficient-form residues over chain primes `0..=level`.
#[derive(Clone, Debug, PartialEq)]
pub struct Plaintext {
    pub(crate) poly: RnsPoly,
    pub(crate) log_scale: f64,
    pub(crate) level: usize,
    pub(crate) slots: usize,
}

impl Plaintext {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp2()
    }

    pub fn scale_log2(&self) -> f64 {
        self.log_scale
    }

    /// Number of meaningful leading slots.
    pub fn slot_count_used(&self) -> usize {
        self.slots
    }
}

/// Heuristic bounds carried alongside a ciphertext, in message units.
///
/// `error` bounds ‖decoded − message‖∞ over all slots; `magnitude` bounds
/// ‖message‖∞. Both are local bookkeeping and are not part of the wire
/// format, so a deserialized ciphertext has no estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseEstimate {
    pub error: f64,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ciphertext {
    pub(crate) parts: Vec<RnsPoly>,
    pub(crate) log_scale: f64,
    pub(crate) level: usize,
    pub(crate) slots: usize,
    pub(crate) noise: Option<NoiseEstimate>,
}

impl Ciphertext {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp2()
    }

    pub fn scale_log2(&self) -> f64 {
        self.log_scale
    }

    pub fn slot_count_used(&self) -> usize {
        self.slots
    }

    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    pub fn noise(&self) -> Option<NoiseEstimate> {
        self.noise
    }

    /// Residues of part `part` modulo chain prime `prime`.
    pub fn residues(&self, part: usize, prime: usize) -> &[u64] {
        &self.parts[part].rows[prime]
    }
}
