//! Tightness of semidefinite relaxations for homogeneous quadratically constrained
//! quadratic programs with three real or four complex constraints.
//!
//! The crate solves the relaxation with a dense interior-point method, decides whether
//! the relaxation can be tight through a rank and sign test on a purified optimal pair,
//! and when it can, recovers a rank-one optimizer by explicit matrix rank-one
//! decomposition. It also provides S-lemma style certificates for three real or four
//! complex quadratic forms and a randomized experiment driver.

// Negated float comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decomposition;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod sdp;
pub mod slemma;
pub mod tightness;

pub use error::{Error, Result};
pub use linalg::{CVector, Field, HermitianMatrix, C64};
pub use sdp::{Constraint, QcqpInstance, SdpPair, Sense};
