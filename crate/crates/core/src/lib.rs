//! Heteroclinic, homoclinic and definitively periodic solutions of the
//! Minkowski-curvature equation `δ(φ(v'))' + q(t) f(v) = 0` with
//! `φ(ξ) = ξ/√(1−ξ²)`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod autonomous;
pub mod cli;
pub mod connections;
pub mod dynamics;
pub mod error;
pub mod nonlinearity;
pub mod numerics;
pub mod ode;
pub mod shooting;
pub mod weight;

pub use error::{Error, Result};
pub use nonlinearity::{Balance, Nonlinearity, NonlinearityKind};
pub use weight::{Payload, Piece, Side, WeightProfile, WeightSpec};
