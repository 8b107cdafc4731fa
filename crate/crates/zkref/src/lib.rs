//! Reference zero-knowledge backend for quantized feed-forward inference.
//!
//! Models are compiled into arithmetic circuits over the Mersenne-61 field
//! and proved with a three-party MPC-in-the-head protocol made
//! non-interactive by Fiat–Shamir. Setup is transparent: keys depend only on
//! the network shape, public parameters and an optional MiMC commitment to
//! the weights. Proofs grow linearly with circuit size; this backend is not
//! succinct.

pub mod circuit;
pub mod codec;
pub mod commit;
pub mod error;
pub mod field;
pub mod fnn;
pub mod hash;
pub mod keys;
pub mod lookup;
pub mod mimc;
pub mod mpc;
pub mod proof;
pub mod transcript;

pub use circuit::{Circuit, CircuitBuilder, Gate};
pub use error::{Result, ZkError};
pub use field::Fp;
pub use fnn::QuantizedFnn;
pub use keys::{setup, ProvingKey, SetupParams, VerificationKey};
pub use mpc::{prove, verify, Verdict};
pub use proof::{Proof, Statement};
