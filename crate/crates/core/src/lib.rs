pub mod ckks;
pub mod codec;
pub mod influence;
pub mod market;
pub mod protocol;
