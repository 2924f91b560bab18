//! Stochastic Galerkin and sampling solvers for incompressible channel flow
//! with an uncertain, spatially varying viscosity.

pub mod boundary;
pub mod config;
pub mod driver;
pub mod error;
pub mod export;
pub mod fem;
pub mod field;
pub mod gpc;
pub mod krylov;
pub mod mesh;
pub mod pcd;
pub mod post;
pub mod sampling;
pub mod sg;
pub mod sparse;
pub mod stepper;

pub use error::{Error, Result};
