//! Discrete geodesic calculus on shape spaces given by a deformation energy.

pub mod curvature;
pub mod energy;
pub mod geodesic;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod shells;
pub mod solver;
pub mod transport;

pub use error::{Error, Result};
