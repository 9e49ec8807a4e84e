//! Folding maps between equivariant operator algebras of finite Galois graph
//! covers, with functional calculus and index-type invariants.

pub mod cover;
pub mod error;
pub mod group;
pub mod operators;
pub mod spectral;
pub mod folding;
pub mod invariants;

pub use error::{Error, Result};
