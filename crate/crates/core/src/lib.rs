//! Exact counting for Boolean-domain #CSP and Holant problems.

pub mod scalar;

pub use scalar::{Gauss, Scalar, ScalarError};
pub mod signature;

pub use signature::{Parity, Signature, SignatureError, SymmetricSignature};
pub mod holo;
pub mod apexdp;
pub mod classify;
pub mod instance;
pub mod pathgadget;
pub mod planar;
pub mod random;
pub mod reductions;
pub mod scg;
pub mod treewidth;
