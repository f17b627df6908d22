//! A small RNS-CKKS engine covering exactly the circuit the protocol needs:
//! encode, encrypt, add, one multiply with relinearization and rescale, and
//! power-of-two Galois rotations for rotate-and-sum.

mod ciphertext;
mod context;
mod encoding;
mod evaluator;
mod keys;
pub mod modulus;
pub mod ntt;
mod params;
pub mod sampling;
mod wire;

use thiserror::Error;

pub use ciphertext::{Ciphertext, NoiseEstimate, Plaintext};
pub use context::{CkksContext, RnsPoly};
pub use encoding::Encoder;
pub use keys::{keygen, EvalKeys, KeySet, KeySwitchKey, PublicKey, SecretKey};
pub use params::{CkksParams, SecurityLabel};
pub use wire::{KeyKind, CIPHERTEXT_MAGIC, FORMAT_VERSION, KEY_MAGIC};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CkksError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("value {max_abs} at scale 2^{scale_log2} exceeds the modulus headroom")]
    Overflow { max_abs: f64, scale_log2: f64 },
    #[error("{given} values do not fit in {capacity} slots")]
    TooManySlots { given: usize, capacity: usize },
    #[error("level mismatch: expected {expected}, found {found}")]
    LevelMismatch { expected: usize, found: usize },
    #[error("scale mismatch: 2^{left_log2} vs 2^{right_log2}")]
    ScaleMismatch { left_log2: f64, right_log2: f64 },
    #[error("no rescale level left")]
    DepthExhausted,
    #[error("no Galois key for rotation step {0}")]
    MissingGaloisKey(usize),
    #[error("operation needs a two-part ciphertext")]
    NotLinear,
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("format version {found}, expected {expected}")]
    VersionMismatch { expected: u16, found: u16 },
    #[error("serialized under different parameters")]
    ParamsMismatch,
}
