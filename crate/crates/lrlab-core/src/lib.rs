//! Finite-volume lattice fermions: CAR algebra on Fock space, interactions,
//! Heisenberg dynamics, tree combinatorics and certified propagation bounds.

pub mod bounds;
pub mod dynamics;
pub mod fock;
pub mod interactions;
pub mod lattice;
pub mod linalg;
pub mod response;
pub mod trees;

mod error;

pub use error::{Error, Result};
pub use faer::c64;
