//! Patchy solver for the center-manifold form of the regulator equations with
//! a two-dimensional neutrally stable exosystem.
//!
//! The pipeline is: parse the system ([`expr`], [`systems`]), compute an
//! inner-disk Taylor seed ([`seed`]), extend it annulus by annulus along
//! exosystem orbits ([`patchy`]) using periodic boundary-value solves
//! ([`odebvp`]), and assemble a tracking controller ([`regulator`]).

pub mod error;
pub mod expr;
pub mod jets;
pub mod linalg;
pub mod odebvp;
pub mod patchy;
pub mod regulator;
pub mod seed;
pub mod spline;
pub mod systems;

pub use error::{Error, Result};
pub use jets::{Jet, JetOp};
