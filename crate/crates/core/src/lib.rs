//! Symmetric Dirichlet and resistance forms on finite networks.
//!
//! A form is a dense symmetric matrix `A` with `E(f, g) = fᵀ A g`; Markov
//! forms have nonpositive off-diagonals and nonnegative row sums. On top of
//! that representation the crate provides
//!
//! - traces onto vertex subsets (Schur complements) and effective resistance,
//! - the jump/killing decomposition of a Markov form,
//! - compatible sequences of traces (dyadic interval, Sierpinski gasket),
//! - quotients by a generating function algebra with measure pushforward,
//! - pointwise energy measures, and
//! - simulation of the associated reversible continuous-time chain.

pub mod beurling_deny;
pub mod energy;
pub mod error;
pub mod fmt;
pub mod form;
pub mod gelfand;
pub mod linalg;
pub mod network;
pub mod sequence;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
pub use form::{assemble, energy as form_energy, evaluate, AtomicMeasure, FormMatrix, FunctionOnV};
pub use network::{Edge, Network};
