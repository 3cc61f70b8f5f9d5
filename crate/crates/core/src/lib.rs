//! C1-conforming virtual elements (lowest order, `k = 2`) on polygonal
//! meshes for the damped plate equation with the nonlocal stretching term
//! `[P - S * int (D_x u)^2] D_xx u`.

pub mod assembly;
pub mod dynamics;
pub mod element;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod mesh;
pub mod polybasis;
pub mod quadrature;
pub mod sparse;

pub use error::{Error, Result};
