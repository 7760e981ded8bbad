//! Virtual element solver for nonlinear stress-assisted diffusion on
//! polyhedral meshes.

pub mod assembly;
pub mod coupling;
pub mod error;
pub mod harness;
pub mod linsolve;
pub mod mesh;
pub mod poly;
pub mod quadrature;
pub mod solver;
pub mod space_elasticity;
pub mod space_hdiv;

pub use error::{Error, Result};
