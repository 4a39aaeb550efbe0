//! Lower bounds on the tensor rank of small matrix multiplication tensors
//! over GF(2), with checkable certificates.

pub mod certificate;
pub mod engine;
pub mod error;
pub mod gf2;
pub mod oracle;
pub mod orbits;
pub mod sharded;
pub mod tensor;
pub mod verifier;
mod wire;

pub use certificate::{Certificate, FormatError, Technique};
pub use error::{Error, Result};
pub use gf2::{BitMatrix, BitVector};
pub use orbits::{enumerate_orbits, OrbitCatalog, RestrictionSet, SymmetryWitness};
pub use tensor::{build_restricted_tensor, Bipartition, Tensor3};
