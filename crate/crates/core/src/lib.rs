pub mod apg;
pub mod bits;
pub mod ecc;
pub mod enrollment;
pub mod error;
pub mod eval;
pub mod fuzzy;
pub mod ingest;
pub mod protocol;
pub mod rng;
pub mod sram;

pub use bits::{fractional_error, hamming_distance, xor, BitVector, TernaryVector, Trit};
pub use error::{PufError, Result};
