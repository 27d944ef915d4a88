pub mod basis;
pub mod cases;
pub mod error;
pub mod integrator;
pub mod limiters;
pub mod mesh;
pub mod operators;
pub mod output;
pub mod physics;
pub mod quadrature;
pub mod space;
pub mod study;
pub mod verify;

pub use error::{Error, Result};
